#![allow(dead_code)]

use std::path::PathBuf;

use hinf_detect::config::{parse_scenario, parse_scenario_str, ScenarioConfig};
use hinf_detect::linalg::Vector;
use hinf_detect::model::{validate_scenario, ValidatedScenario};
use hinf_detect::runtime::{simulate, SimOptions, SimResult};
use hinf_detect::signals::SignalSpec;
use hinf_detect::synthesis::{design, Design, GainSchedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

pub fn ring3() -> ScenarioConfig {
    parse_scenario(&scenario_path("ring3.json")).expect("ring3.json parses")
}

pub fn validated(cfg: &ScenarioConfig) -> ValidatedScenario {
    validate_scenario(cfg).expect("scenario validates")
}

/// Remove every disturbance, noise and attack.
pub fn quiet(cfg: &mut ScenarioConfig) {
    cfg.plant.disturbance = SignalSpec::Zero;
    for n in &mut cfg.nodes {
        n.noise = SignalSpec::Zero;
        n.attack = None;
    }
    for e in &mut cfg.edges {
        e.noise = SignalSpec::Zero;
    }
}

/// Scale `x0`, every `xi`, disturbance, noise and attack by `k`.
pub fn scaled(cfg: &ScenarioConfig, k: f64) -> ScenarioConfig {
    let mut c = cfg.clone();
    c.plant.x0.iter_mut().for_each(|v| *v *= k);
    c.plant.disturbance = c.plant.disturbance.scaled(k);
    for n in &mut c.nodes {
        n.xi.iter_mut().for_each(|v| *v *= k);
        n.noise = n.noise.scaled(k);
        n.attack = n.attack.as_ref().map(|a| a.scaled(k));
    }
    for e in &mut c.edges {
        e.noise = e.noise.scaled(k);
    }
    c
}

pub fn schedules(d: &Design) -> (Vec<GainSchedule>, Vec<GainSchedule>) {
    (
        d.nodes.iter().map(|n| n.baseline.clone()).collect(),
        d.nodes.iter().map(|n| n.detector.clone()).collect(),
    )
}

pub fn run_with(s: &ValidatedScenario, d: &Design) -> SimResult {
    let (b, det) = schedules(d);
    simulate(s, &b, &det, SimOptions::from_scenario(s)).expect("simulation runs")
}

pub fn design_and_simulate(s: &ValidatedScenario) -> (Design, SimResult) {
    let d = design(s).expect("design succeeds");
    let r = run_with(s, &d);
    (d, r)
}

/// Largest `|a - b|` over two series, relative to the largest `|b|`.
pub fn rel_diff(a: &[Vector], b: &[Vector]) -> f64 {
    let scale = b.iter().map(|v| v.amax()).fold(0.0, f64::max).max(1e-300);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max)
        / scale
}

fn mat(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..r)
        .map(|_| (0..c).map(|_| rng.random_range(lo..hi)).collect())
        .collect()
}

fn diag(vals: &[f64]) -> Vec<Vec<f64>> {
    (0..vals.len())
        .map(|i| {
            (0..vals.len())
                .map(|j| if i == j { vals[i] } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Random symmetric positive definite `M M' + floor I`.
pub fn spd(rng: &mut ChaCha8Rng, k: usize, floor: f64) -> Vec<Vec<f64>> {
    let m = mat(rng, k, k, -1.0, 1.0);
    (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    (0..k).map(|l| m[i][l] * m[j][l]).sum::<f64>()
                        + if i == j { floor } else { 0.0 }
                })
                .collect()
        })
        .collect()
}

fn sinusoid(rng: &mut ChaCha8Rng, amp: f64) -> Value {
    json!({
        "kind": "decaying_sinusoid",
        "amplitude": amp,
        "frequency": rng.random_range(0.5..4.0),
        "decay": rng.random_range(0.1..1.0),
    })
}

/// A small random network scenario that the design can handle: 2-4 nodes,
/// state dimension 1-3, time-varying `A`, random directed links and a
/// biasing attack on node 0. With `deterministic` every noise channel is a
/// sinusoid, so the realization does not depend on the channel's index.
pub fn random_config(seed: u64, deterministic: bool) -> ScenarioConfig {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=3usize);
    let nodes_n = rng.random_range(2..=4usize);

    let mut a: Vec<Vec<Value>> = mat(rng, n, n, -1.0, 1.0)
        .into_iter()
        .map(|row| row.into_iter().map(Value::from).collect())
        .collect();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = Value::from(row[i].as_f64().unwrap() - 0.5);
    }
    a[0][0] = json!({"sin": {"c0": a[0][0], "terms": [{"a": 0.3, "w": 1.1, "phi": 0.2}]}});

    let noise = |rng: &mut ChaCha8Rng, k: u64| {
        if deterministic {
            sinusoid(rng, 0.05)
        } else {
            json!({"kind": "windowed_noise", "amplitude": 0.05, "window": 1.5, "seed": k})
        }
    };

    let nodes: Vec<Value> = (0..nodes_n)
        .map(|i| {
            let p = rng.random_range(1..=2usize);
            let n_f = rng.random_range(1..=n.min(2));
            let d: Vec<f64> = (0..p).map(|_| rng.random_range(0.5..1.5)).collect();
            let mut node = json!({
                "C": mat(rng, p, n, -1.0, 1.0),
                "D": diag(&d),
                "xi": (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>(),
                "tracker": {
                    "beta": rng.random_range(0.5..2.0),
                    "g": rng.random_range(1.0..4.0),
                    "n_f": n_f,
                    "F": mat(rng, n, n_f, -1.0, 1.0),
                },
                "noise": noise(rng, 10 + i as u64),
            });
            if i == 0 {
                node["attack"] =
                    json!({"kind": "bias_step", "amplitude": 1.0, "onset": 0.5, "decay": 3.0});
            }
            node
        })
        .collect();

    let mut edges = Vec::new();
    for to in 0..nodes_n {
        for from in 0..nodes_n {
            if from == to || !rng.random_bool(0.5) {
                continue;
            }
            let p = rng.random_range(1..=n);
            edges.push(json!({
                "from": from,
                "to": to,
                "W": mat(rng, p, n, -1.0, 1.0),
                "H": diag(&(0..p).map(|_| rng.random_range(0.05..0.3)).collect::<Vec<f64>>()),
                "Z": spd(rng, p, 0.5),
                "noise": noise(rng, 100 + edges.len() as u64),
            }));
        }
    }

    let doc = json!({
        "plant": {
            "A": a,
            "B": mat(rng, n, 1, -1.0, 1.0),
            "x0": (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>(),
            "disturbance": sinusoid(rng, 0.3),
        },
        "nodes": nodes,
        "edges": edges,
        "design": {"gamma": 20.0},
        "sim": {"horizon": 2.0, "step": 0.001, "seed": seed},
    });
    parse_scenario_str(&doc.to_string()).expect("random scenario parses")
}

/// Relabel nodes: old node `i` becomes node `perm[i]`.
pub fn permuted(cfg: &ScenarioConfig, perm: &[usize]) -> ScenarioConfig {
    let mut c = cfg.clone();
    for (i, node) in cfg.nodes.iter().enumerate() {
        c.nodes[perm[i]] = node.clone();
    }
    for e in &mut c.edges {
        e.from = perm[e.from];
        e.to = perm[e.to];
    }
    c
}

/// Random network for the coupling condition only: up to 6 nodes, state
/// dimension up to 4, random SPD `R_i` and `Z_ij`.
pub fn random_network(seed: u64) -> ScenarioConfig {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=4usize);
    let nodes_n = rng.random_range(1..=6usize);
    let eye: Vec<f64> = vec![1.0; n];
    let nodes: Vec<Value> = (0..nodes_n)
        .map(|_| {
            let floor = rng.random_range(0.5..3.0);
            json!({
                "C": diag(&eye), "D": diag(&eye), "xi": vec![0.0; n],
                "tracker": {"beta": 1, "g": 1, "n_f": 1, "F": mat(rng, n, 1, -1.0, 1.0)},
                "weights": {"R": spd(rng, n, floor)},
            })
        })
        .collect();
    let mut edges = Vec::new();
    for to in 0..nodes_n {
        for from in 0..nodes_n {
            if from != to && rng.random_bool(0.4) {
                let p = rng.random_range(1..=n);
                edges.push(json!({
                    "from": from, "to": to,
                    "W": mat(rng, p, n, -1.0, 1.0),
                    "H": mat(rng, p, p, -0.5, 0.5),
                    "Z": spd(rng, p, 0.2),
                }));
            }
        }
    }
    let doc = json!({
        "plant": {"A": diag(&vec![-1.0; n]), "B": mat(rng, n, 1, -1.0, 1.0), "x0": vec![0.0; n]},
        "nodes": nodes,
        "edges": edges,
        "design": {"gamma": rng.random_range(0.2..2.5)},
        "sim": {"horizon": 1.0},
    });
    parse_scenario_str(&doc.to_string()).expect("random network parses")
}

/// Minimum eigenvalue of `R + gamma^2 (Phi + Phi' - Delta) - I`, assembled
/// edge by edge straight from the configuration.
pub fn brute_force_lmi(cfg: &ScenarioConfig, gamma: f64) -> f64 {
    use nalgebra::DMatrix;
    let n = cfg.plant.x0.len();
    let size = n * cfg.nodes.len();
    let mut m = DMatrix::<f64>::zeros(size, size);
    for (i, node) in cfg.nodes.iter().enumerate() {
        let r = &node.weights.r.as_ref().unwrap().0;
        for a in 0..n {
            for b in 0..n {
                m[(i * n + a, i * n + b)] = r[(a, b)] - if a == b { 1.0 } else { 0.0 };
            }
        }
    }
    let g2 = gamma * gamma;
    for e in &cfg.edges {
        let (w, h, z) = (&e.w.0, &e.h.0, &e.z.as_ref().unwrap().0);
        let u_inv = (h * h.transpose() + z).try_inverse().expect("U invertible");
        let delta = w.transpose() * &u_inv * z * &u_inv * w;
        let phi = -(w.transpose() * &u_inv * w);
        for a in 0..n {
            for b in 0..n {
                // diagonal block of Phi + Phi' - Delta is Delta_i
                m[(e.to * n + a, e.to * n + b)] += g2 * delta[(a, b)];
                m[(e.to * n + a, e.from * n + b)] += g2 * phi[(a, b)];
                m[(e.from * n + a, e.to * n + b)] += g2 * phi[(b, a)];
            }
        }
    }
    m.symmetric_eigenvalues().min()
}

/// Two scalar nodes linked both ways with `W = H = Z = 1` and `R = r`.
pub fn two_node_unit_link(r: f64, gamma: f64) -> ScenarioConfig {
    let node = format!(
        r#"{{"C": [[1]], "D": [[1]], "xi": [0],
            "tracker": {{"beta": 1, "g": 1, "n_f": 1, "F": [[1]]}},
            "weights": {{"R": [[{r}]]}}}}"#
    );
    let text = format!(
        r#"{{"plant": {{"A": [[-1]], "B": [[1]], "x0": [0]}},
            "nodes": [{node}, {node}],
            "edges": [{{"from": 0, "to": 1, "W": [[1]], "H": [[1]], "Z": [[1]]}},
                      {{"from": 1, "to": 0, "W": [[1]], "H": [[1]], "Z": [[1]]}}],
            "design": {{"gamma": {gamma}}}, "sim": {{"horizon": 1}}}}"#
    );
    parse_scenario_str(&text).expect("two-node scenario parses")
}

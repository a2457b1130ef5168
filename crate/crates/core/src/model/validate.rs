use std::ops::Deref;

use crate::config::{MatrixLiteral, ScenarioConfig};
use crate::error::{Error, Result, Violation};
use crate::linalg::{is_spd, min_eig, Mat, Vector};
use crate::signals::SignalSpec;

use super::{
    build_tracker, ConstantGains, DesignSettings, DesignWeights, DetectionSettings, LinkModel,
    NodeModel, PlantModel, Scenario, SensorModel, SimSettings, Topology,
};

/// A scenario that passed every check in [`validate_scenario`]. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedScenario(Scenario);

impl Deref for ValidatedScenario {
    type Target = Scenario;

    fn deref(&self) -> &Scenario {
        &self.0
    }
}

impl ValidatedScenario {
    pub fn into_inner(self) -> Scenario {
        self.0
    }

    /// Re-validate after editing a copy of the underlying scenario.
    pub fn modified(&self, edit: impl FnOnce(&mut Scenario)) -> Result<ValidatedScenario> {
        let mut s = self.0.clone();
        edit(&mut s);
        let mut v = Vec::new();
        check_resolved(&s, &mut v);
        if v.is_empty() {
            Ok(ValidatedScenario(s))
        } else {
            Err(Error::Validation(v))
        }
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn push(&mut self, location: impl Into<String>, check: impl Into<String>) {
        self.0.push(Violation {
            location: location.into(),
            check: check.into(),
        });
    }
}

fn literal(m: &Option<MatrixLiteral>) -> Mat {
    m.as_ref()
        .map(|m| m.0.clone())
        .unwrap_or_else(|| Mat::zeros(0, 0))
}

fn check_shape(
    c: &mut Collector,
    loc: &str,
    name: &str,
    m: &Mat,
    rows: usize,
    cols: usize,
) -> bool {
    if m.shape() != (rows, cols) {
        c.push(
            loc,
            format!(
                "{name} is {}x{}, expected {rows}x{cols}",
                m.nrows(),
                m.ncols()
            ),
        );
        false
    } else {
        true
    }
}

fn check_spd(c: &mut Collector, loc: &str, name: &str, m: &Mat) {
    if !is_spd(m, 0.0) {
        let detail = if m.is_square() && m.nrows() > 0 {
            format!("min eigenvalue {:e}", min_eig(m))
        } else {
            "empty or non-square".into()
        };
        c.push(
            loc,
            format!("{name} must be symmetric positive definite ({detail})"),
        );
    }
}

fn check_disturbance(c: &mut Collector, loc: &str, name: &str, s: &SignalSpec, dim: usize) {
    if let Err(e) = s.check(dim) {
        c.push(loc, format!("{name}: {e}"));
    }
    if !s.is_square_integrable() {
        c.push(
            loc,
            format!("{name} must be square integrable (bias_step is attack-only)"),
        );
    }
}

/// Check a parsed scenario and resolve it into domain types. Every violation
/// found is reported, each naming the node or edge concerned.
pub fn validate_scenario(cfg: &ScenarioConfig) -> Result<ValidatedScenario> {
    let mut c = Collector(Vec::new());
    let n = cfg.plant.a.nrows();

    if cfg.plant.a.ncols() != n || n == 0 {
        c.push(
            "plant",
            format!(
                "A must be square and nonempty, got {:?}",
                cfg.plant.a.shape()
            ),
        );
    }
    if cfg.plant.b.nrows() != n {
        c.push(
            "plant",
            format!("B has {} rows, expected {n}", cfg.plant.b.nrows()),
        );
    }
    if cfg.plant.x0.len() != n {
        c.push(
            "plant",
            format!("x0 has length {}, expected {n}", cfg.plant.x0.len()),
        );
    }
    check_disturbance(
        &mut c,
        "plant",
        "disturbance",
        &cfg.plant.disturbance,
        cfg.plant.b.ncols(),
    );

    let sim = &cfg.sim;
    if !(sim.horizon > 0.0 && sim.horizon.is_finite()) {
        c.push("sim", "horizon must be > 0");
    }
    if !(sim.step > 0.0 && sim.step <= sim.horizon) {
        c.push("sim", "step must be in (0, horizon]");
    }
    let d = &cfg.design;
    if !(d.gamma > 0.0 && d.gamma.is_finite()) {
        c.push("design", "gamma must be > 0");
    }
    if !(d.grid_dt > 0.0 && d.grid_dt <= sim.horizon) {
        c.push("design", "grid_dt must be in (0, horizon]");
    }
    let riccati_step = d.riccati_step.unwrap_or((d.grid_dt / 10.0).min(1e-3));
    if !(riccati_step > 0.0 && riccati_step <= d.grid_dt) {
        c.push("design", "riccati_step must be in (0, grid_dt]");
    }
    if !(d.alpha_min > 0.0 && d.alpha_min < d.alpha_max) {
        c.push("design", "need 0 < alpha_min < alpha_max");
    }
    if !(cfg.detection.dwell > 0.0) {
        c.push("detection", "dwell must be > 0");
    }
    if matches!(cfg.detection.threshold, Some(t) if !(t > 0.0)) {
        c.push("detection", "threshold must be > 0");
    }
    if matches!(cfg.detection.burn_in, Some(b) if !(b >= 0.0)) {
        c.push("detection", "burn_in must be >= 0");
    }
    if cfg.nodes.is_empty() {
        c.push("nodes", "at least one node is required");
    }

    let n_nodes = cfg.nodes.len();
    let mut links = Vec::new();
    for e in &cfg.edges {
        let loc = format!("edge {}->{}", e.from, e.to);
        if e.from >= n_nodes || e.to >= n_nodes {
            c.push(&loc, format!("endpoint outside 0..{n_nodes}"));
            continue;
        }
        if e.from == e.to {
            c.push(&loc, "self-loops are not allowed");
            continue;
        }
        let (w, h, z) = (&e.w.0, &e.h.0, literal(&e.z));
        let p = w.nrows();
        if p == 0 {
            c.push(&loc, "W must have at least one row");
        }
        check_shape(&mut c, &loc, "W", w, p, n);
        if w.iter().all(|&x| x == 0.0) {
            c.push(&loc, "W must be nonzero");
        }
        if h.nrows() != p {
            c.push(&loc, format!("H has {} rows but W has {p}", h.nrows()));
        }
        if check_shape(&mut c, &loc, "Z", &z, p, p) {
            check_spd(&mut c, &loc, "Z", &z);
        }
        check_disturbance(&mut c, &loc, "noise", &e.noise, h.ncols());
        links.push(LinkModel {
            from: e.from,
            to: e.to,
            w: w.clone(),
            h: h.clone(),
            z,
            noise: e.noise.clone(),
        });
    }
    let topology = match Topology::new(n_nodes, links) {
        Ok(t) => Some(t),
        Err(e) => {
            if !c.0.iter().any(|v| v.location.starts_with("edge")) {
                c.push("edges", e.to_string());
            }
            None
        }
    };

    let mut nodes = Vec::with_capacity(n_nodes);
    for (i, node) in cfg.nodes.iter().enumerate() {
        let loc = format!("node {i}");
        let (cm, dm) = (&node.c, &node.d);
        let p = cm.nrows();
        if p == 0 {
            c.push(&loc, "C must have at least one row");
        }
        if cm.ncols() != n {
            c.push(&loc, format!("C has {} columns, expected {n}", cm.ncols()));
        }
        if dm.nrows() != p {
            c.push(&loc, format!("D has {} rows but C has {p}", dm.nrows()));
        }
        if node.xi.len() != n {
            c.push(
                &loc,
                format!("xi has length {}, expected {n}", node.xi.len()),
            );
        }
        check_disturbance(&mut c, &loc, "noise", &node.noise, dm.ncols());

        let tr = &node.tracker;
        let tracker = match build_tracker(tr.beta, tr.g, tr.n_f) {
            Ok(t) => Some(t),
            Err(e) => {
                c.push(&loc, e.to_string());
                None
            }
        };
        let nf = tr.n_f;
        check_shape(&mut c, &loc, "F", &tr.f.0, n, nf);
        if let Some(a) = &node.attack {
            if let Err(e) = a.check(nf) {
                c.push(&loc, format!("attack: {e}"));
            }
        }

        let w = &node.weights;
        let (r, r_check, x, x_check) = (
            literal(&w.r),
            literal(&w.r_check),
            literal(&w.x),
            literal(&w.x_check),
        );
        for (name, m, dim) in [
            ("R", &r, n),
            ("R_check", &r_check, 2 * nf),
            ("X", &x, n),
            ("X_check", &x_check, 2 * nf),
        ] {
            if check_shape(&mut c, &loc, name, m, dim, dim) {
                check_spd(&mut c, &loc, name, m);
            }
        }

        let baseline_gains = node.gains.as_ref().and_then(|g| {
            let topo = topology.as_ref()?;
            check_shape(&mut c, &loc, "L", &g.l.0, n, p);
            let mut ks = Vec::new();
            for &k in topo.in_links(i) {
                let link = topo.link(k);
                match g.k.iter().find(|kg| kg.from == link.from) {
                    Some(kg) => {
                        check_shape(
                            &mut c,
                            &loc,
                            &format!("K from {}", link.from),
                            &kg.k.0,
                            n,
                            link.p(),
                        );
                        ks.push(kg.k.0.clone());
                    }
                    None => c.push(
                        &loc,
                        format!("missing coupling gain K from node {}", link.from),
                    ),
                }
            }
            for kg in &g.k {
                if !topo.neighbors(i).contains(&kg.from) {
                    c.push(
                        &loc,
                        format!("coupling gain K from {} but no such in-edge", kg.from),
                    );
                }
            }
            Some(ConstantGains {
                l: g.l.0.clone(),
                k: ks,
            })
        });

        if let Some(tracker) = tracker {
            nodes.push(NodeModel {
                sensor: SensorModel {
                    c: cm.clone(),
                    d: dm.clone(),
                },
                tracker,
                injection: tr.f.0.clone(),
                weights: DesignWeights {
                    r,
                    r_check,
                    x,
                    x_check,
                },
                xi: Vector::from_vec(node.xi.clone()),
                attack: node.attack.clone(),
                noise: node.noise.clone(),
                baseline_gains,
            });
        }
    }

    if !c.0.is_empty() {
        return Err(Error::Validation(c.0));
    }
    let scenario = Scenario {
        plant: PlantModel {
            a: cfg.plant.a.clone(),
            b: cfg.plant.b.clone(),
            horizon: sim.horizon,
        },
        x0: Vector::from_vec(cfg.plant.x0.clone()),
        disturbance: cfg.plant.disturbance.clone(),
        nodes,
        topology: topology.ok_or_else(|| Error::Internal("topology missing".into()))?,
        design: DesignSettings {
            gamma: d.gamma,
            grid_dt: d.grid_dt,
            riccati_step,
            alpha_min: d.alpha_min,
            alpha_max: d.alpha_max,
            gain_mode: d.gain_mode,
        },
        sim: SimSettings {
            horizon: sim.horizon,
            step: sim.step,
            seed: sim.seed,
        },
        detection: DetectionSettings {
            threshold: cfg.detection.threshold,
            dwell: cfg.detection.dwell,
            burn_in: cfg.detection.burn_in,
        },
    };
    check_resolved(&scenario, &mut c.0);
    if c.0.is_empty() {
        Ok(ValidatedScenario(scenario))
    } else {
        Err(Error::Validation(c.0))
    }
}

/// Time-dependent checks: `E_i(t) = diag(D_i D_i', U_ij...)` positive
/// definite on the synthesis grid.
fn check_resolved(s: &Scenario, out: &mut Vec<Violation>) {
    let grid = Scenario::intervals(s.sim.horizon, s.design.grid_dt);
    for (i, node) in s.nodes.iter().enumerate() {
        let constant = node.sensor.d.is_constant();
        for k in 0..=grid {
            let t = (k as f64 * s.design.grid_dt).min(s.sim.horizon);
            let d = node.sensor.d.eval(t);
            let e = &d * d.transpose();
            if !is_spd(&e, 0.0) {
                out.push(Violation {
                    location: format!("node {i}"),
                    check: format!("D D' is not positive definite at t = {t}"),
                });
                break;
            }
            if constant {
                break;
            }
        }
        for &k in s.topology.in_links(i) {
            let l = s.topology.link(k);
            if !is_spd(&l.u(), 0.0) {
                out.push(Violation {
                    location: format!("edge {}->{}", l.from, l.to),
                    check: "U = H H' + Z is not positive definite".into(),
                });
            }
        }
    }
}

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{Scenario, Topology};
use crate::synthesis::{GainBlocks, GainSchedule};

use super::{detector_rhs, innovations, observer_rhs, DetectorInputs, NeighborEstimate};

const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub horizon: f64,
    pub step: f64,
    pub seed: u64,
}

impl SimOptions {
    pub fn from_scenario(s: &Scenario) -> Self {
        SimOptions {
            horizon: s.sim.horizon,
            step: s.sim.step,
            seed: s.sim.seed,
        }
    }
}

/// Recorded signals of one in-link of a node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkTrace {
    pub from: usize,
    /// `zeta_ij`
    pub zeta: Vec<Vector>,
    /// `v_ij`
    pub v: Vec<Vector>,
}

/// Recorded signals of one node, one entry per grid time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeTrace {
    pub x_hat: Vec<Vector>,
    /// `e_i = x - x_hat_i`
    pub e: Vec<Vector>,
    pub e_hat: Vec<Vector>,
    pub eps_hat: Vec<Vector>,
    /// Detector output `phi_i = Upsilon_i eps_hat_i`.
    pub phi: Vec<Vector>,
    /// Injected attack, zero on honest nodes.
    pub f: Vec<Vector>,
    /// `zeta_i`
    pub zeta: Vec<Vector>,
    /// `v_i`
    pub v: Vec<Vector>,
    pub links: Vec<LinkTrace>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimResult {
    /// Seed the exogenous signals were drawn with.
    pub seed: u64,
    pub times: Vec<f64>,
    pub x: Vec<Vector>,
    pub w: Vec<Vector>,
    pub nodes: Vec<NodeTrace>,
}

impl SimResult {
    pub fn step(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// `z_i = e_i - e_hat_i` at grid index `k`.
    pub fn z(&self, i: usize, k: usize) -> Vector {
        &self.nodes[i].e[k] - &self.nodes[i].e_hat[k]
    }
}

/// Offsets of each block in the stacked state `(x, x_hat_i.., e_hat_i.., eps_hat_i..)`.
struct Layout {
    n: usize,
    x_hat: Vec<usize>,
    e_hat: Vec<usize>,
    eps_hat: Vec<(usize, usize)>,
    len: usize,
}

impl Layout {
    fn new(s: &Scenario) -> Self {
        let n = s.n();
        let nn = s.n_nodes();
        let x_hat: Vec<usize> = (0..nn).map(|i| n + i * n).collect();
        let e_hat: Vec<usize> = (0..nn).map(|i| n + nn * n + i * n).collect();
        let mut off = n + 2 * nn * n;
        let mut eps_hat = Vec::with_capacity(nn);
        for node in &s.nodes {
            eps_hat.push((off, node.tracker.dim()));
            off += node.tracker.dim();
        }
        Layout {
            n,
            x_hat,
            e_hat,
            eps_hat,
            len: off,
        }
    }

    fn get(&self, s: &Vector, off: usize, len: usize) -> Vector {
        s.rows(off, len).clone_owned()
    }
}

/// Noise stream identifiers: plant, then sensors, then links, then attacks.
fn stream_plant() -> u64 {
    0
}
fn stream_sensor(i: usize) -> u64 {
    1 + i as u64
}
fn stream_link(topo: &Topology, k: usize) -> u64 {
    1 + topo.n_nodes() as u64 + k as u64
}
pub(crate) fn stream_attack(topo: &Topology, i: usize) -> u64 {
    1 + (topo.n_nodes() + topo.links().len() + i) as u64
}

/// Exogenous inputs at one instant.
struct Inputs {
    w: Vector,
    v: Vec<Vector>,
    v_link: Vec<Vector>,
    f: Vec<Vector>,
}

fn sample_inputs(s: &Scenario, t: f64, seed: u64) -> Result<Inputs> {
    let topo = &s.topology;
    let w = s.disturbance.sample(s.plant.m(), t, seed, stream_plant())?;
    let mut v = Vec::with_capacity(s.n_nodes());
    let mut f = Vec::with_capacity(s.n_nodes());
    for (i, node) in s.nodes.iter().enumerate() {
        v.push(
            node.noise
                .sample(node.sensor.noise_dim(), t, seed, stream_sensor(i))?,
        );
        f.push(match &node.attack {
            Some(a) => a.sample(node.tracker.n_f, t, seed, stream_attack(topo, i))?,
            None => Vector::zeros(node.tracker.n_f),
        });
    }
    let v_link = topo
        .links()
        .iter()
        .enumerate()
        .map(|(k, l)| l.noise.sample(l.noise_dim(), t, seed, stream_link(topo, k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Inputs { w, v, v_link, f })
}

/// Everything derived from the state at one instant; shared by the ODE
/// right-hand side and the recorder.
struct Evaluation {
    deriv: Vector,
    inputs: Inputs,
    zeta: Vec<Vector>,
    zeta_link: Vec<Vec<Vector>>,
}

struct Closed<'a> {
    s: &'a Scenario,
    layout: Layout,
    baseline: &'a [GainSchedule],
    detector: &'a [GainSchedule],
    seed: u64,
}

impl Closed<'_> {
    fn evaluate(&self, t: f64, state: &Vector) -> Result<Evaluation> {
        let s = self.s;
        let lay = &self.layout;
        let topo = &s.topology;
        let inputs = sample_inputs(s, t, self.seed)?;
        let (a, b) = s.plant.eval(t)?;
        let x = lay.get(state, 0, lay.n);
        let x_hat: Vec<Vector> = lay
            .x_hat
            .iter()
            .map(|&o| lay.get(state, o, lay.n))
            .collect();
        let e_hat: Vec<Vector> = lay
            .e_hat
            .iter()
            .map(|&o| lay.get(state, o, lay.n))
            .collect();
        let eps_hat: Vec<Vector> = lay
            .eps_hat
            .iter()
            .map(|&(o, d)| lay.get(state, o, d))
            .collect();

        let mut deriv = Vector::zeros(lay.len);
        deriv
            .rows_mut(0, lay.n)
            .copy_from(&(&a * &x + &b * &inputs.w));

        let mut zeta = Vec::with_capacity(s.n_nodes());
        let mut zeta_link = Vec::with_capacity(s.n_nodes());
        for (i, node) in s.nodes.iter().enumerate() {
            let c = node.sensor.c.eval(t);
            let d = node.sensor.d.eval(t);
            let y = &c * &x + &d * &inputs.v[i];
            let messages: Vec<(&Mat, Vector)> = topo
                .in_links(i)
                .iter()
                .map(|&k| {
                    let l = topo.link(k);
                    (&l.w, &l.w * &x_hat[l.from] + &l.h * &inputs.v_link[k])
                })
                .collect();
            let innov = innovations(&c, &y, &messages, &x_hat[i]);

            let base = self.baseline[i].blocks_at(t);
            let full = self.detector[i].blocks_at(t);
            let bar = GainBlocks {
                l_hat: &full.l_hat - &base.l_hat,
                k_hat: full
                    .k_hat
                    .iter()
                    .zip(&base.k_hat)
                    .map(|(p, q)| p - q)
                    .collect(),
                l_check: full.l_check,
                k_check: full.k_check,
            };

            let injection = node
                .attack
                .as_ref()
                .map(|_| (&node.injection, &inputs.f[i]));
            let dx_hat = observer_rhs(&a, &x_hat[i], &innov, &base, injection);
            deriv.rows_mut(lay.x_hat[i], lay.n).copy_from(&dx_hat);

            let neighbors: Vec<NeighborEstimate<'_>> = topo
                .in_links(i)
                .iter()
                .map(|&k| {
                    let l = topo.link(k);
                    NeighborEstimate {
                        w: &l.w,
                        e_hat: &e_hat[l.from],
                    }
                })
                .collect();
            let inp = DetectorInputs {
                a: &a,
                c: &c,
                injection: &node.injection,
                omega: &node.tracker.omega,
                upsilon: &node.tracker.upsilon,
                baseline: &base,
                detector: &bar,
            };
            let (de, deps) = detector_rhs(&inp, &e_hat[i], &eps_hat[i], &innov, &neighbors);
            deriv.rows_mut(lay.e_hat[i], lay.n).copy_from(&de);
            let (o, dim) = lay.eps_hat[i];
            deriv.rows_mut(o, dim).copy_from(&deps);

            zeta.push(innov.local);
            zeta_link.push(innov.links);
        }
        Ok(Evaluation {
            deriv,
            inputs,
            zeta,
            zeta_link,
        })
    }

    fn record(&self, out: &mut SimResult, t: f64, state: &Vector, ev: Evaluation) {
        let lay = &self.layout;
        let x = lay.get(state, 0, lay.n);
        out.times.push(t);
        let Evaluation {
            inputs,
            zeta,
            zeta_link,
            ..
        } = ev;
        for (i, node) in self.s.nodes.iter().enumerate() {
            let tr = &mut out.nodes[i];
            let x_hat = lay.get(state, lay.x_hat[i], lay.n);
            let (o, d) = lay.eps_hat[i];
            let eps_hat = lay.get(state, o, d);
            tr.e.push(&x - &x_hat);
            tr.x_hat.push(x_hat);
            tr.e_hat.push(lay.get(state, lay.e_hat[i], lay.n));
            tr.phi.push(&node.tracker.upsilon * &eps_hat);
            tr.eps_hat.push(eps_hat);
            tr.f.push(inputs.f[i].clone());
            tr.v.push(inputs.v[i].clone());
            for (lt, (&k, z)) in tr
                .links
                .iter_mut()
                .zip(self.s.topology.in_links(i).iter().zip(&zeta_link[i]))
            {
                lt.zeta.push(z.clone());
                lt.v.push(inputs.v_link[k].clone());
            }
        }
        for (tr, z) in out.nodes.iter_mut().zip(zeta) {
            tr.zeta.push(z);
        }
        out.x.push(x);
        out.w.push(inputs.w);
    }
}

/// Fixed-step RK4 simulation of the stacked closed loop, recording every
/// signal at every step. Deterministic in `(scenario, gains, options)`.
pub fn simulate(
    s: &Scenario,
    baseline: &[GainSchedule],
    detector: &[GainSchedule],
    opts: SimOptions,
) -> Result<SimResult> {
    if !(opts.step > 0.0) || !(opts.horizon > 0.0) {
        return Err(Error::Parameter(
            "simulation needs step > 0 and horizon > 0".into(),
        ));
    }
    if baseline.len() != s.n_nodes() || detector.len() != s.n_nodes() {
        return Err(Error::Dimension(format!(
            "{} nodes but {} baseline / {} detector schedules",
            s.n_nodes(),
            baseline.len(),
            detector.len()
        )));
    }
    if opts.horizon > s.plant.horizon * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "simulation horizon {} exceeds the scenario horizon {}",
            opts.horizon, s.plant.horizon
        )));
    }
    for (i, (b, d)) in baseline.iter().zip(detector).enumerate() {
        if b.horizon() < opts.horizon * (1.0 - 1e-9) || d.horizon() < opts.horizon * (1.0 - 1e-9) {
            return Err(Error::Domain(format!(
                "gain schedule of node {i} ends before the simulation horizon {}",
                opts.horizon
            )));
        }
        if d.layout.n_tracker != s.nodes[i].tracker.dim() || b.layout.rows() != s.n() {
            return Err(Error::Dimension(format!(
                "gain schedule of node {i} has the wrong shape"
            )));
        }
    }

    let layout = Layout::new(s);
    let mut state = Vector::zeros(layout.len);
    state.rows_mut(0, layout.n).copy_from(&s.x0);
    for (i, node) in s.nodes.iter().enumerate() {
        state
            .rows_mut(layout.x_hat[i], layout.n)
            .copy_from(&node.xi);
    }

    let sys = Closed {
        s,
        layout,
        baseline,
        detector,
        seed: opts.seed,
    };
    let steps = (opts.horizon / opts.step).round().max(1.0) as usize;
    let h = opts.horizon / steps as f64;

    let mut out = SimResult {
        seed: opts.seed,
        nodes: (0..s.n_nodes())
            .map(|i| NodeTrace {
                links: s
                    .topology
                    .in_links(i)
                    .iter()
                    .map(|&k| LinkTrace {
                        from: s.topology.link(k).from,
                        ..Default::default()
                    })
                    .collect(),
                ..Default::default()
            })
            .collect(),
        ..Default::default()
    };

    let mut ev = sys.evaluate(0.0, &state)?;
    for k in 0..steps {
        let t = k as f64 * h;
        let t_next = (k + 1) as f64 * h;
        let k1 = ev.deriv.clone();
        sys.record(&mut out, t, &state, ev);
        let k2 = sys
            .evaluate(t + 0.5 * h, &(&state + &k1 * (0.5 * h)))?
            .deriv;
        let k3 = sys
            .evaluate(t + 0.5 * h, &(&state + &k2 * (0.5 * h)))?
            .deriv;
        let k4 = sys.evaluate(t_next, &(&state + &k3 * h))?.deriv;
        state += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let norm = state.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Divergence { t: t_next, norm });
        }
        ev = sys.evaluate(t_next, &state)?;
    }
    sys.record(&mut out, steps as f64 * h, &state, ev);
    Ok(out)
}

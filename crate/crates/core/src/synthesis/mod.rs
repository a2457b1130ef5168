//! Two-step detector design.
//!
//! The centralized step only involves the communication network: it builds
//! the coupling matrix and checks the network LMI. Afterwards every node
//! integrates its own Riccati equation and computes its gains without
//! interacting with the other nodes.

mod augmented;
mod coupling;
mod gains;
mod riccati;

pub use augmented::{assemble_augmented, assemble_baseline, AugmentedNode, GainLayout};
pub use coupling::{
    build_coupling, check_lmi_global, check_lmi_local, lmi_matrix, CouplingData, FeasibilityReport,
    LMI_TOL,
};
pub use gains::{gain_at, gains_from_solution, GainBlocks, GainSchedule};
pub use riccati::{
    integrate_riccati, riccati_rhs, Bounds, ConstantSystem, RiccatiSolution, RiccatiSystem,
    RiccatiTerms, RiccatiWeights, UniformGrid,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{block_diag, Mat};
use crate::model::{Scenario, ValidatedScenario};

/// Which per-node system a Riccati integration runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeSystemKind {
    /// Estimation error stacked with the tracker error.
    Augmented,
    /// Estimation error only (baseline observer design).
    Baseline,
}

/// Riccati coefficients of node `i` read from a scenario.
pub struct NodeSystem<'a> {
    pub scenario: &'a Scenario,
    pub node: usize,
    pub kind: NodeSystemKind,
}

impl NodeSystem<'_> {
    pub fn assemble(&self, t: f64) -> Result<AugmentedNode> {
        match self.kind {
            NodeSystemKind::Augmented => assemble_augmented(self.scenario, self.node, t),
            NodeSystemKind::Baseline => assemble_baseline(self.scenario, self.node, t),
        }
    }
}

impl RiccatiSystem for NodeSystem<'_> {
    fn dim(&self) -> usize {
        let n = self.scenario.n();
        match self.kind {
            NodeSystemKind::Augmented => n + self.scenario.nodes[self.node].tracker.dim(),
            NodeSystemKind::Baseline => n,
        }
    }

    fn terms(&self, t: f64) -> Result<RiccatiTerms> {
        let aug = self.assemble(t)?;
        riccati::terms_from(aug.a, &aug.b, &aug.c, &aug.e)
    }
}

fn with_node(e: Error, node: usize) -> Error {
    match e {
        Error::Unbounded {
            t,
            min_eig,
            max_eig,
            ..
        } => Error::Unbounded {
            node: Some(node),
            t,
            min_eig,
            max_eig,
        },
        other => other,
    }
}

fn design_grid(s: &Scenario) -> UniformGrid {
    UniformGrid::covering(s.sim.horizon, s.design.grid_dt)
}

fn bounds(s: &Scenario) -> Bounds {
    Bounds {
        alpha_min: s.design.alpha_min,
        alpha_max: s.design.alpha_max,
    }
}

/// Integrate node `i`'s Riccati equation at attenuation level `gamma`.
pub fn solve_node_riccati(
    s: &Scenario,
    i: usize,
    kind: NodeSystemKind,
    gamma: f64,
) -> Result<RiccatiSolution> {
    let w = &s.nodes[i].weights;
    let (r, x) = match kind {
        NodeSystemKind::Augmented => (w.bold_r(), w.bold_x()),
        NodeSystemKind::Baseline => (w.r.clone(), w.x.clone()),
    };
    let sys = NodeSystem {
        scenario: s,
        node: i,
        kind,
    };
    integrate_riccati(
        &sys,
        &RiccatiWeights {
            r: &r,
            gamma,
            x: &x,
        },
        design_grid(s),
        s.design.riccati_step,
        bounds(s),
    )
    .map_err(|e| with_node(e, i))
}

/// Gain schedule of node `i` from its Riccati solution.
pub fn node_gains(
    s: &Scenario,
    i: usize,
    kind: NodeSystemKind,
    gamma: f64,
) -> Result<(GainSchedule, RiccatiSolution)> {
    let sol = solve_node_riccati(s, i, kind, gamma)?;
    let sys = NodeSystem {
        scenario: s,
        node: i,
        kind,
    };
    let sched = gains_from_solution(&sol, |t| sys.assemble(t))?.with_mode(s.design.gain_mode);
    Ok((sched, sol))
}

/// Baseline observer gains `[L_i K_ij ...]` for every node: passed through
/// when given in the scenario, otherwise designed with the same Riccati
/// machinery on the system without the tracker block.
pub fn design_baseline_observer(s: &ValidatedScenario) -> Result<Vec<GainSchedule>> {
    (0..s.n_nodes())
        .into_par_iter()
        .map(|i| baseline_for(s, i))
        .collect()
}

fn baseline_for(s: &Scenario, i: usize) -> Result<GainSchedule> {
    match &s.nodes[i].baseline_gains {
        Some(g) => {
            let layout = assemble_baseline(s, i, 0.0)?.layout;
            let mut stacked = Mat::zeros(layout.rows(), layout.cols());
            stacked.view_mut((0, 0), g.l.shape()).copy_from(&g.l);
            for (k, kg) in g.k.iter().enumerate() {
                stacked
                    .view_mut((0, layout.col_offset(k + 1)), kg.shape())
                    .copy_from(kg);
            }
            GainSchedule::constant(layout, stacked, s.sim.horizon)
        }
        None => Ok(node_gains(s, i, NodeSystemKind::Baseline, s.design.gamma)?.0),
    }
}

/// Empirical bounds of a node's Riccati solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiccatiBounds {
    pub alpha1: f64,
    pub alpha2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeDesign {
    /// Baseline observer gains; rows `n`.
    pub baseline: GainSchedule,
    /// Stacked detector gain `L_i(t)`; rows `n + 2 n_f`.
    pub detector: GainSchedule,
    pub riccati: RiccatiBounds,
    /// `R_check_i > I`.
    pub local_lmi: bool,
}

impl NodeDesign {
    /// Detector-only gains at `t`: `L_bar = L_hat - L`, `K_bar = K_hat - K`,
    /// together with the tracker-block gains.
    pub fn detector_blocks(&self, t: f64) -> (GainBlocks, GainBlocks) {
        let full = self.detector.blocks_at(t);
        let base = self.baseline.blocks_at(t);
        let bar = GainBlocks {
            l_hat: &full.l_hat - &base.l_hat,
            k_hat: full
                .k_hat
                .iter()
                .zip(&base.k_hat)
                .map(|(a, b)| a - b)
                .collect(),
            l_check: full.l_check.clone(),
            k_check: full.k_check.clone(),
        };
        (bar, base)
    }
}

/// Outcome of the full two-step design.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub lmi: FeasibilityReport,
    pub nodes: Vec<NodeDesign>,
}

impl Design {
    /// Network and all local conditions hold.
    pub fn feasible(&self) -> bool {
        self.lmi.feasible && self.nodes.iter().all(|n| n.local_lmi)
    }
}

/// `diag(R_1, ..., R_N)`
pub fn stacked_r(s: &Scenario) -> Mat {
    let rs: Vec<&Mat> = s.nodes.iter().map(|n| &n.weights.r).collect();
    block_diag(&rs)
}

/// Centralized step: network LMI at the scenario's `gamma`.
pub fn global_feasibility(s: &Scenario, gamma: f64) -> Result<FeasibilityReport> {
    let coupling = build_coupling(&s.topology, s.n())?;
    check_lmi_global(&stacked_r(s), gamma, &coupling)
}

/// Run both design steps. LMI infeasibility is reported, not raised; an
/// unbounded Riccati solution is an error.
pub fn design(s: &ValidatedScenario) -> Result<Design> {
    let lmi = global_feasibility(s, s.design.gamma)?;
    let nodes = (0..s.n_nodes())
        .into_par_iter()
        .map(|i| {
            let baseline = baseline_for(s, i)?;
            let (detector, sol) = node_gains(s, i, NodeSystemKind::Augmented, s.design.gamma)?;
            Ok(NodeDesign {
                baseline: baseline.with_mode(s.design.gain_mode),
                detector,
                riccati: RiccatiBounds {
                    alpha1: sol.alpha1,
                    alpha2: sol.alpha2,
                },
                local_lmi: check_lmi_local(&s.nodes[i].weights.r_check)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Design { lmi, nodes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub lmi_min_eig: f64,
    pub lmi_feasible: bool,
    /// Per node: detector Riccati solution stayed bounded and positive definite.
    pub riccati_bounded: Vec<bool>,
}

impl SweepRow {
    pub fn feasible(&self) -> bool {
        self.lmi_feasible && self.riccati_bounded.iter().all(|&b| b)
    }
}

/// Tabulate feasibility over a list of attenuation levels.
pub fn sweep_gamma(s: &ValidatedScenario, gammas: &[f64]) -> Result<Vec<SweepRow>> {
    let coupling = build_coupling(&s.topology, s.n())?;
    let r = stacked_r(s);
    gammas
        .iter()
        .map(|&g| {
            let rep = check_lmi_global(&r, g, &coupling)?;
            let riccati_bounded = (0..s.n_nodes())
                .into_par_iter()
                .map(|i| solve_node_riccati(s, i, NodeSystemKind::Augmented, g))
                .map(|res| match res {
                    Ok(_) => Ok(true),
                    Err(Error::Unbounded { .. }) => Ok(false),
                    Err(e) => Err(e),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepRow {
                gamma: g,
                lmi_min_eig: rep.min_eig,
                lmi_feasible: rep.feasible,
                riccati_bounded,
            })
        })
        .collect()
}

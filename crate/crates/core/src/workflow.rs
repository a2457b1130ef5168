//! The design, simulate, verify and sweep steps operating on one run
//! directory:
//!
//! ```text
//! <out>/scenario.json      effective scenario (overrides applied)
//! <out>/feasibility.json   LMI and Riccati outcome
//! <out>/gains/node_<i>.csv detector and baseline gain schedules
//! <out>/trajectories.csv   simulated signals
//! <out>/metrics.json       per-node reports
//! <out>/sweep.csv          gamma feasibility table
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{parse_scenario, Overrides, ScenarioConfig};
use crate::error::{Error, Result};
use crate::io::{
    read_gains, read_json, read_trajectories, write_gains, write_json, write_trajectories,
    TraceShape,
};
use crate::linalg::{block_diag, Mat};
use crate::metrics::{
    calibrate_alarm, error_dynamics_residual, evaluate, hinf_ratio, phi_norms, Alarm, MetricsReport,
};
use crate::model::{validate_scenario, Scenario, ValidatedScenario};
use crate::runtime::{simulate, SimOptions, SimResult};
use crate::synthesis::{
    assemble_augmented, assemble_baseline, check_lmi_local, design, global_feasibility,
    sweep_gamma, GainBlocks, GainLayout, GainSchedule, SweepRow,
};

/// Tolerance on the attenuation ratio allowing for finite-horizon truncation.
pub const HINF_SLACK: f64 = 0.05;
/// Tolerance on the error-dynamics residual.
pub const RESIDUAL_TOL: f64 = 1e-3;

pub const LMI_CONDITION: &str = "R + gamma^2 (Phi + Phi' - Delta) > I";

#[derive(Debug, Clone)]
pub struct RunDir(PathBuf);

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir(root.into())
    }

    pub fn root(&self) -> &Path {
        &self.0
    }

    pub fn scenario(&self) -> PathBuf {
        self.0.join("scenario.json")
    }

    pub fn feasibility(&self) -> PathBuf {
        self.0.join("feasibility.json")
    }

    pub fn gains_dir(&self) -> PathBuf {
        self.0.join("gains")
    }

    pub fn gains(&self, i: usize) -> PathBuf {
        self.gains_dir().join(format!("node_{i}.csv"))
    }

    pub fn trajectories(&self) -> PathBuf {
        self.0.join("trajectories.csv")
    }

    pub fn metrics(&self) -> PathBuf {
        self.0.join("metrics.json")
    }

    pub fn sweep(&self) -> PathBuf {
        self.0.join("sweep.csv")
    }

    fn ensure(&self) -> Result<()> {
        std::fs::create_dir_all(&self.0)
            .map_err(|e| Error::io(format!("cannot create {}", self.0.display()), e))
    }
}

/// Parse, apply overrides and validate.
pub fn load_scenario(
    path: &Path,
    overrides: &Overrides,
) -> Result<(ScenarioConfig, ValidatedScenario)> {
    let mut cfg = parse_scenario(path)?;
    cfg.apply_overrides(overrides);
    let vs = validate_scenario(&cfg)?;
    Ok((cfg, vs))
}

fn write_scenario_copy(dir: &RunDir, cfg: &ScenarioConfig) -> Result<()> {
    let path = dir.scenario();
    std::fs::write(&path, cfg.to_json())
        .map_err(|e| Error::io(format!("cannot write {}", path.display()), e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiSummary {
    pub condition: String,
    pub min_eig: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFeasibility {
    pub node: usize,
    /// `R_check > I`
    pub local_lmi: bool,
    pub riccati_bounded: bool,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
}

/// Contents of `feasibility.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityFile {
    pub gamma: f64,
    pub lmi: LmiSummary,
    pub nodes: Vec<NodeFeasibility>,
    pub feasible: bool,
    /// Why the design failed, if it did.
    pub failure: Option<String>,
}

/// Success, or a well-defined negative outcome (exit status 1).
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Ok,
    Failed(String),
}

/// Run both design steps and write the scenario copy, `feasibility.json` and,
/// when every Riccati solution stayed bounded, the gain schedules.
pub fn design_run(cfg: &ScenarioConfig, s: &ValidatedScenario, dir: &RunDir) -> Result<Outcome> {
    dir.ensure()?;
    write_scenario_copy(dir, cfg)?;
    let lmi = global_feasibility(s, s.design.gamma)?;
    let summary = LmiSummary {
        condition: LMI_CONDITION.into(),
        min_eig: lmi.min_eig,
        feasible: lmi.feasible,
    };
    let lmi_message = || {
        format!(
            "global coupling LMI {LMI_CONDITION} infeasible at gamma = {}: minimum eigenvalue {:e}",
            lmi.gamma, lmi.min_eig
        )
    };
    match design(s) {
        Ok(d) => {
            let nodes = d
                .nodes
                .iter()
                .enumerate()
                .map(|(i, n)| NodeFeasibility {
                    node: i,
                    local_lmi: n.local_lmi,
                    riccati_bounded: true,
                    alpha1: Some(n.riccati.alpha1),
                    alpha2: Some(n.riccati.alpha2),
                })
                .collect::<Vec<_>>();
            let failure = if !d.lmi.feasible {
                Some(lmi_message())
            } else {
                nodes
                    .iter()
                    .find(|n| !n.local_lmi)
                    .map(|n| format!("local condition R_check > I fails at node {}", n.node))
            };
            let gains_dir = dir.gains_dir();
            std::fs::create_dir_all(&gains_dir)
                .map_err(|e| Error::io(format!("cannot create {}", gains_dir.display()), e))?;
            for (i, n) in d.nodes.iter().enumerate() {
                write_gains(&dir.gains(i), i, &n.detector, &n.baseline)?;
            }
            write_json(
                &dir.feasibility(),
                &FeasibilityFile {
                    gamma: s.design.gamma,
                    lmi: summary,
                    nodes,
                    feasible: failure.is_none(),
                    failure: failure.clone(),
                },
            )?;
            Ok(failure.map_or(Outcome::Ok, Outcome::Failed))
        }
        Err(e @ Error::Unbounded { .. }) => {
            let failed = match &e {
                Error::Unbounded { node, .. } => *node,
                _ => None,
            };
            let msg = if lmi.feasible {
                e.to_string()
            } else {
                format!("{}; {e}", lmi_message())
            };
            let nodes = (0..s.n_nodes())
                .map(|i| NodeFeasibility {
                    node: i,
                    local_lmi: check_lmi_local(&s.nodes[i].weights.r_check).unwrap_or(false),
                    riccati_bounded: failed != Some(i),
                    alpha1: None,
                    alpha2: None,
                })
                .collect();
            write_json(
                &dir.feasibility(),
                &FeasibilityFile {
                    gamma: s.design.gamma,
                    lmi: summary,
                    nodes,
                    feasible: false,
                    failure: Some(msg.clone()),
                },
            )?;
            Ok(Outcome::Failed(msg))
        }
        Err(e) => Err(e),
    }
}

/// Gain layouts of node `i`: `(detector, baseline)`.
fn layouts(s: &Scenario, i: usize) -> Result<(GainLayout, GainLayout)> {
    Ok((
        assemble_augmented(s, i, 0.0)?.layout,
        assemble_baseline(s, i, 0.0)?.layout,
    ))
}

/// Load the gain schedules written by [`design_run`]:
/// `(baseline, detector)` per node.
pub fn load_gains(s: &Scenario, dir: &RunDir) -> Result<(Vec<GainSchedule>, Vec<GainSchedule>)> {
    if !dir.gains_dir().is_dir() {
        return Err(Error::io(
            format!(
                "no gain schedules in {}; run `design` first",
                dir.gains_dir().display()
            ),
            std::io::Error::from(std::io::ErrorKind::NotFound),
        ));
    }
    let mut baseline = Vec::with_capacity(s.n_nodes());
    let mut detector = Vec::with_capacity(s.n_nodes());
    for i in 0..s.n_nodes() {
        let (dl, bl) = layouts(s, i)?;
        let (d, b) = read_gains(&dir.gains(i), i, &dl, &bl, s.design.gain_mode)?;
        baseline.push(b);
        detector.push(d);
    }
    Ok((baseline, detector))
}

/// Per-node alarms: the configured threshold and burn-in, or a calibration
/// from a run with every attack removed.
pub fn detection_alarms(
    s: &ValidatedScenario,
    baseline: &[GainSchedule],
    detector: &[GainSchedule],
) -> Result<Vec<Alarm>> {
    if let Some(threshold) = s.detection.threshold {
        let burn_in = s.detection.burn_in.unwrap_or(0.0);
        return Ok(vec![Alarm { threshold, burn_in }; s.n_nodes()]);
    }
    let honest = s.modified(|sc| sc.nodes.iter_mut().for_each(|n| n.attack = None))?;
    let exact = honest.modified(|sc| {
        let x0 = sc.x0.clone();
        sc.nodes.iter_mut().for_each(|n| n.xi = x0.clone());
    })?;
    let opts = SimOptions::from_scenario(s);
    let (noise, transient) = rayon::join(
        || simulate(&exact, baseline, detector, opts),
        || simulate(&honest, baseline, detector, opts),
    );
    let (noise, transient) = (noise?, transient?);
    (0..s.n_nodes())
        .map(|i| {
            let mut a = calibrate_alarm(
                &noise.times,
                &phi_norms(&noise, i),
                &phi_norms(&transient, i),
            )?;
            if let Some(b) = s.detection.burn_in {
                a.burn_in = b;
            }
            Ok(a)
        })
        .collect()
}

/// Simulate with the gains stored in `dir`; writes the scenario copy,
/// `trajectories.csv` and `metrics.json`.
pub fn simulate_run(
    cfg: &ScenarioConfig,
    s: &ValidatedScenario,
    dir: &RunDir,
) -> Result<(SimResult, MetricsReport)> {
    let (baseline, detector) = load_gains(s, dir)?;
    let res = simulate(s, &baseline, &detector, SimOptions::from_scenario(s))?;
    let alarms = detection_alarms(s, &baseline, &detector)?;
    let report = evaluate(s, &res, &alarms)?;
    write_scenario_copy(dir, cfg)?;
    write_trajectories(&dir.trajectories(), &TraceShape::of(s), &res)?;
    write_json(&dir.metrics(), &report)?;
    Ok((res, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

/// Re-check an existing run directory against its own scenario copy.
pub fn verify_run(dir: &RunDir) -> Result<Vec<Check>> {
    let (_, s) = load_scenario(&dir.scenario(), &Overrides::default())?;
    let mut checks = Vec::new();

    let lmi = global_feasibility(&s, s.design.gamma)?;
    let stored: FeasibilityFile = read_json(&dir.feasibility())?;
    checks.push(check(
        "global LMI",
        lmi.feasible && stored.lmi.min_eig.to_bits() == lmi.min_eig.to_bits(),
        format!(
            "minimum eigenvalue {:e} (stored {:e})",
            lmi.min_eig, stored.lmi.min_eig
        ),
    ));

    for i in 0..s.n_nodes() {
        let aug = assemble_augmented(&s, i, 0.0)?;
        let topo = &s.topology;
        let d = s.nodes[i].sensor.d.eval(0.0);
        let mut blocks = vec![&d * d.transpose()];
        blocks.extend(topo.in_links(i).iter().map(|&k| topo.link(k).u()));
        let refs: Vec<&Mat> = blocks.iter().collect();
        let want = block_diag(&refs);
        let err = (&aug.e - &want).amax();
        checks.push(check(
            format!("node {i} E block structure"),
            err <= 1e-12,
            format!("max deviation {err:e}"),
        ));
    }

    let (baseline, detector) = load_gains(&s, dir)?;
    for (i, sched) in detector.iter().enumerate() {
        let exact = sched.gains.iter().all(|g| {
            let back = GainBlocks::partition(g, &sched.layout).map(|b| b.reassemble(&sched.layout));
            back.is_ok_and(|b| {
                b.iter()
                    .zip(g.iter())
                    .all(|(x, y)| x.to_bits() == y.to_bits())
            })
        });
        checks.push(check(
            format!("node {i} gain partition"),
            exact,
            "partition then reassemble is bit-exact",
        ));
    }

    let shape = TraceShape::of(&s);
    let recorded = read_trajectories(&dir.trajectories(), &shape, s.sim.seed)?;
    let fresh = simulate(&s, &baseline, &detector, SimOptions::from_scenario(&s))?;
    let tmp = dir.root().join(".verify-trajectories.csv");
    write_trajectories(&tmp, &shape, &fresh)?;
    let same = std::fs::read(&tmp).ok() == std::fs::read(dir.trajectories()).ok();
    let _ = std::fs::remove_file(&tmp);
    checks.push(check(
        "determinism",
        same,
        "re-simulation reproduces trajectories.csv byte for byte",
    ));

    for i in 0..s.n_nodes() {
        let r = error_dynamics_residual(&recorded, &s, &detector[i], i, 1e-6)?;
        checks.push(check(
            format!("node {i} error dynamics"),
            r.checked > 0 && r.max_relative < RESIDUAL_TOL,
            format!(
                "max relative residual {:.3e} over {} points ({} skipped at input jumps)",
                r.max_relative, r.checked, r.skipped
            ),
        ));
        let h = hinf_ratio(&recorded, &s, i)?;
        checks.push(check(
            format!("node {i} attenuation"),
            h.ratio <= 1.0 + HINF_SLACK,
            format!(
                "ratio {:.4} (lhs {:.4e}, rhs {:.4e})",
                h.ratio, h.lhs, h.rhs
            ),
        ));
    }
    Ok(checks)
}

/// Tabulate feasibility over `gammas` and write `sweep.csv`.
pub fn sweep_run(s: &ValidatedScenario, gammas: &[f64], dir: &RunDir) -> Result<Vec<SweepRow>> {
    if gammas.is_empty() || gammas.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::Parameter(
            "sweep needs a nonempty list of positive gammas".into(),
        ));
    }
    dir.ensure()?;
    let rows = sweep_gamma(s, gammas)?;
    let mut w = csv::Writer::from_path(dir.sweep()).map_err(|e| Error::Internal(e.to_string()))?;
    let mut header = vec![
        "gamma".to_string(),
        "lmi_min_eig".into(),
        "lmi_feasible".into(),
    ];
    header.extend((0..s.n_nodes()).map(|i| format!("node{i}.riccati_bounded")));
    header.push("feasible".into());
    let io_err = |e: csv::Error| Error::Internal(format!("writing sweep.csv: {e}"));
    w.write_record(&header).map_err(io_err)?;
    for r in &rows {
        let mut rec = vec![
            format!("{:?}", r.gamma),
            format!("{:?}", r.lmi_min_eig),
            r.lmi_feasible.to_string(),
        ];
        rec.extend(r.riccati_bounded.iter().map(|b| b.to_string()));
        rec.push(r.feasible().to_string());
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io("writing sweep.csv", e))?;
    Ok(rows)
}

//! Scenario file format.
//!
//! Scenarios are JSON documents. Matrices are row-major lists of rows;
//! entries of time-varying matrices (`A`, `B`, `C`, `D`) may also be tagged
//! objects `{"const": v}`, `{"sin": {"c0", "terms": [{"a", "w", "phi"}]}}`
//! or `{"pwc": {"breaks", "values"}}`. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::TvMatrix;
use crate::signals::SignalSpec;

/// Constant matrix literal, `[[row], [row], ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct MatrixLiteral(pub Mat);

impl TryFrom<Vec<Vec<f64>>> for MatrixLiteral {
    type Error = String;

    fn try_from(rows: Vec<Vec<f64>>) -> std::result::Result<Self, String> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some((k, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
            return Err(format!(
                "matrix row {k} has {} entries, expected {cols}",
                r.len()
            ));
        }
        Ok(MatrixLiteral(Mat::from_fn(rows.len(), cols, |r, c| {
            rows[r][c]
        })))
    }
}

impl From<MatrixLiteral> for Vec<Vec<f64>> {
    fn from(m: MatrixLiteral) -> Self {
        m.0.row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

impl From<Mat> for MatrixLiteral {
    fn from(m: Mat) -> Self {
        MatrixLiteral(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    #[serde(rename = "A")]
    pub a: TvMatrix,
    #[serde(rename = "B")]
    pub b: TvMatrix,
    pub x0: Vec<f64>,
    #[serde(default = "SignalSpec::zero")]
    pub disturbance: SignalSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerSection {
    pub beta: f64,
    pub g: f64,
    pub n_f: usize,
    /// Attack injection matrix, `n x n_f`.
    #[serde(rename = "F")]
    pub f: MatrixLiteral,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    #[serde(rename = "R", default)]
    pub r: Option<MatrixLiteral>,
    #[serde(rename = "R_check", default)]
    pub r_check: Option<MatrixLiteral>,
    #[serde(rename = "X", default)]
    pub x: Option<MatrixLiteral>,
    #[serde(rename = "X_check", default)]
    pub x_check: Option<MatrixLiteral>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingGain {
    pub from: usize,
    #[serde(rename = "K")]
    pub k: MatrixLiteral,
}

/// User-supplied constant baseline observer gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    #[serde(rename = "L")]
    pub l: MatrixLiteral,
    #[serde(rename = "K", default)]
    pub k: Vec<CouplingGain>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSection {
    #[serde(rename = "C")]
    pub c: TvMatrix,
    #[serde(rename = "D")]
    pub d: TvMatrix,
    /// Initial observer estimate.
    pub xi: Vec<f64>,
    pub tracker: TrackerSection,
    #[serde(default)]
    pub weights: WeightsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<GainsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<SignalSpec>,
    #[serde(default = "SignalSpec::zero")]
    pub noise: SignalSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSection {
    pub from: usize,
    pub to: usize,
    #[serde(rename = "W")]
    pub w: MatrixLiteral,
    #[serde(rename = "H")]
    pub h: MatrixLiteral,
    #[serde(rename = "Z", default)]
    pub z: Option<MatrixLiteral>,
    #[serde(default = "SignalSpec::zero")]
    pub noise: SignalSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMode {
    /// Interpolate the gain schedule at every integration stage.
    #[default]
    Scheduled,
    /// Hold every gain at its value at the end of the design horizon.
    Frozen,
}

fn default_grid_dt() -> f64 {
    0.01
}
fn default_alpha_min() -> f64 {
    1e-8
}
fn default_alpha_max() -> f64 {
    1e8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub gamma: f64,
    #[serde(default = "default_grid_dt")]
    pub grid_dt: f64,
    /// Riccati integration step; defaults to `min(1e-3, grid_dt / 10)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub riccati_step: Option<f64>,
    #[serde(default = "default_alpha_min")]
    pub alpha_min: f64,
    #[serde(default = "default_alpha_max")]
    pub alpha_max: f64,
    #[serde(default)]
    pub gain_mode: GainMode,
}

fn default_step() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub horizon: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_dwell() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSection {
    /// Fixed alarm threshold on `|phi_i|`; calibrated from a
    /// disturbance-only run when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default = "default_dwell")]
    pub dwell: f64,
    /// Alarms before this time are ignored. Calibrated together with the
    /// threshold when absent, zero with a fixed threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
}

impl Default for DetectionSection {
    fn default() -> Self {
        DetectionSection {
            threshold: None,
            dwell: default_dwell(),
            burn_in: None,
        }
    }
}

/// The complete, declarative description of a design and simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub plant: PlantSection,
    pub nodes: Vec<NodeSection>,
    #[serde(default)]
    pub edges: Vec<EdgeSection>,
    pub design: DesignSection,
    pub sim: SimSection,
    #[serde(default)]
    pub detection: DetectionSection,
}

/// Command-line overrides applied on top of a parsed scenario.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub gamma: Option<f64>,
    pub horizon: Option<f64>,
    pub step: Option<f64>,
    pub seed: Option<u64>,
}

impl ScenarioConfig {
    /// Fill omitted weights: `R = I`, `R_check = 2I`, `X = X_check = I`,
    /// `Z = I`.
    pub fn apply_defaults(&mut self) {
        let n = self.plant.a.nrows();
        for node in &mut self.nodes {
            let nf2 = 2 * node.tracker.n_f;
            let w = &mut node.weights;
            w.r.get_or_insert_with(|| Mat::identity(n, n).into());
            w.r_check
                .get_or_insert_with(|| (Mat::identity(nf2, nf2) * 2.0).into());
            w.x.get_or_insert_with(|| Mat::identity(n, n).into());
            w.x_check
                .get_or_insert_with(|| Mat::identity(nf2, nf2).into());
        }
        for e in &mut self.edges {
            let p = e.w.0.nrows();
            e.z.get_or_insert_with(|| Mat::identity(p, p).into());
        }
    }

    pub fn apply_overrides(&mut self, o: &Overrides) {
        if let Some(g) = o.gamma {
            self.design.gamma = g;
        }
        if let Some(h) = o.horizon {
            self.sim.horizon = h;
        }
        if let Some(s) = o.step {
            self.sim.step = s;
        }
        if let Some(s) = o.seed {
            self.sim.seed = s;
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }
}

/// Parse scenario text; defaults are applied.
pub fn parse_scenario_str(text: &str) -> Result<ScenarioConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: ScenarioConfig = match serde_path_to_error::deserialize(de) {
        Ok(c) => c,
        Err(e) => {
            let path = e.path().to_string();
            let inner = e.into_inner();
            return Err(match inner.classify() {
                serde_json::error::Category::Syntax | serde_json::error::Category::Eof => {
                    Error::Syntax {
                        line: inner.line(),
                        column: inner.column(),
                        msg: inner.to_string(),
                    }
                }
                _ => Error::Schema {
                    path,
                    msg: inner.to_string(),
                },
            });
        }
    };
    cfg.apply_defaults();
    Ok(cfg)
}

pub fn parse_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading scenario {}", path.display()), e))?;
    parse_scenario_str(&text)
}

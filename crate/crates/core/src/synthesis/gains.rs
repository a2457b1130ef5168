//! Gain schedules `L_i(t) = Y_i(t) C_i(t)' E_i(t)^-1` and their partition
//! into measurement and per-link blocks.

use crate::config::GainMode;
use crate::error::{Error, Result};
use crate::linalg::Mat;

use super::augmented::{AugmentedNode, GainLayout};
use super::riccati::RiccatiSolution;

/// A stacked gain split by rows into the estimation-error block (`hat`) and
/// the tracker block (`check`), and by columns into the local measurement
/// block and one block per in-link.
#[derive(Debug, Clone, PartialEq)]
pub struct GainBlocks {
    /// `L_hat_i`, `n x p_i`
    pub l_hat: Mat,
    /// `K_hat_ij`, `n x p_ij` per in-link
    pub k_hat: Vec<Mat>,
    /// `L_check_i`, `2 n_f x p_i`
    pub l_check: Mat,
    /// `K_check_ij`, `2 n_f x p_ij` per in-link
    pub k_check: Vec<Mat>,
}

impl GainBlocks {
    pub fn partition(stacked: &Mat, layout: &GainLayout) -> Result<GainBlocks> {
        if stacked.shape() != (layout.rows(), layout.cols()) {
            return Err(Error::Dimension(format!(
                "gain is {:?}, layout expects {}x{}",
                stacked.shape(),
                layout.rows(),
                layout.cols()
            )));
        }
        let (n, nt) = (layout.n_state, layout.n_tracker);
        let block = |row0: usize, rows: usize, k: usize| {
            stacked
                .view((row0, layout.col_offset(k)), (rows, layout.outputs[k]))
                .clone_owned()
        };
        let links = 1..layout.outputs.len();
        Ok(GainBlocks {
            l_hat: block(0, n, 0),
            k_hat: links.clone().map(|k| block(0, n, k)).collect(),
            l_check: block(n, nt, 0),
            k_check: links.map(|k| block(n, nt, k)).collect(),
        })
    }

    pub fn reassemble(&self, layout: &GainLayout) -> Mat {
        let mut out = Mat::zeros(layout.rows(), layout.cols());
        let n = layout.n_state;
        let mut put = |row0: usize, k: usize, m: &Mat| {
            out.view_mut((row0, layout.col_offset(k)), m.shape())
                .copy_from(m);
        };
        put(0, 0, &self.l_hat);
        put(n, 0, &self.l_check);
        for (k, (kh, kc)) in self.k_hat.iter().zip(&self.k_check).enumerate() {
            put(0, k + 1, kh);
            put(n, k + 1, kc);
        }
        out
    }
}

/// Stacked gain sampled on a time grid and linearly interpolated between
/// samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    pub layout: GainLayout,
    pub times: Vec<f64>,
    pub gains: Vec<Mat>,
    pub mode: GainMode,
}

impl GainSchedule {
    pub fn new(layout: GainLayout, times: Vec<f64>, gains: Vec<Mat>) -> Result<Self> {
        if times.is_empty() || times.len() != gains.len() {
            return Err(Error::Dimension(
                "gain schedule needs one gain per time".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("gain schedule times must increase".into()));
        }
        if let Some(g) = gains
            .iter()
            .find(|g| g.shape() != (layout.rows(), layout.cols()))
        {
            return Err(Error::Dimension(format!(
                "gain is {:?}, layout expects {}x{}",
                g.shape(),
                layout.rows(),
                layout.cols()
            )));
        }
        Ok(GainSchedule {
            layout,
            times,
            gains,
            mode: GainMode::Scheduled,
        })
    }

    /// Constant gain over `[0, horizon]`.
    pub fn constant(layout: GainLayout, gain: Mat, horizon: f64) -> Result<Self> {
        GainSchedule::new(layout, vec![0.0, horizon], vec![gain.clone(), gain])
    }

    pub fn with_mode(mut self, mode: GainMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("nonempty schedule")
    }

    /// Gain at `t`, clamped to the schedule's time range.
    pub fn at(&self, t: f64) -> Mat {
        let last = self.gains.len() - 1;
        if self.mode == GainMode::Frozen || t >= self.times[last] {
            return self.gains[last].clone();
        }
        if t <= self.times[0] {
            return self.gains[0].clone();
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let w = (t - t0) / (t1 - t0);
        &self.gains[k] * (1.0 - w) + &self.gains[k + 1] * w
    }

    pub fn blocks_at(&self, t: f64) -> GainBlocks {
        GainBlocks::partition(&self.at(t), &self.layout).expect("schedule gains match layout")
    }
}

/// `L = Y C' E^-1` at one instant.
pub fn gain_at(y: &Mat, aug: &AugmentedNode) -> Result<Mat> {
    let chol = aug
        .e
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Parameter("E is singular; gain undefined".into()))?;
    // L' = E^-1 C Y
    let lt = chol.solve(&(&aug.c * y));
    Ok(lt.transpose())
}

/// Evaluate the gain formula on every grid point of a Riccati solution.
pub fn gains_from_solution(
    sol: &RiccatiSolution,
    aug_at: impl Fn(f64) -> Result<AugmentedNode>,
) -> Result<GainSchedule> {
    let mut gains = Vec::with_capacity(sol.times.len());
    let mut layout = None;
    for (t, y) in sol.times.iter().zip(&sol.y) {
        let aug = aug_at(*t)?;
        gains.push(gain_at(y, &aug)?);
        layout.get_or_insert(aug.layout);
    }
    let layout = layout.ok_or_else(|| Error::Internal("empty Riccati solution".into()))?;
    GainSchedule::new(layout, sol.times.clone(), gains)
}

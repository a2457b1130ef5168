//! Plant, sensors, communication topology and attack trackers.

mod timevarying;
mod validate;

pub use timevarying::{Entry, Schedule, SinSum, SinTerm, TvMatrix};
pub use validate::{validate_scenario, ValidatedScenario};

use crate::config::GainMode;
use crate::error::{Error, Result};
use crate::linalg::{block_diag, Mat, Vector};
use crate::signals::SignalSpec;

/// `x' = A(t) x + B(t) w` on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a: TvMatrix,
    pub b: TvMatrix,
    pub horizon: f64,
}

impl PlantModel {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// `(A(t), B(t))`; fails outside `[0, horizon]`.
    pub fn eval(&self, t: f64) -> Result<(Mat, Mat)> {
        check_time(t, self.horizon)?;
        Ok((self.a.eval(t), self.b.eval(t)))
    }
}

pub fn eval_plant(model: &PlantModel, t: f64) -> Result<(Mat, Mat)> {
    model.eval(t)
}

/// Admit a few ulps of slack at the end of the horizon for stage times
/// accumulated as `k * h`.
pub(crate) fn check_time(t: f64, horizon: f64) -> Result<()> {
    if t >= 0.0 && t <= horizon * (1.0 + 1e-12) + 1e-12 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "t = {t} outside the configured horizon [0, {horizon}]"
        )))
    }
}

/// `y_i = C_i(t) x + D_i(t) v_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    pub c: TvMatrix,
    pub d: TvMatrix,
}

impl SensorModel {
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn noise_dim(&self) -> usize {
        self.d.ncols()
    }
}

/// Directed link `from -> to` carrying `c_ij = W_ij x_j + H_ij v_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkModel {
    pub from: usize,
    pub to: usize,
    pub w: Mat,
    pub h: Mat,
    /// Interconnection weight, symmetric positive definite.
    pub z: Mat,
    pub noise: SignalSpec,
}

impl LinkModel {
    pub fn p(&self) -> usize {
        self.w.nrows()
    }

    pub fn noise_dim(&self) -> usize {
        self.h.ncols()
    }

    /// `U_ij = H_ij H_ij' + Z_ij`.
    pub fn u(&self) -> Mat {
        &self.h * self.h.transpose() + &self.z
    }
}

/// Directed communication graph. Node `i` hears from its in-neighbours;
/// `in_links(i)` lists those links in a fixed order used for every stacked
/// quantity (outputs, gains, noises).
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    n_nodes: usize,
    links: Vec<LinkModel>,
    in_links: Vec<Vec<usize>>,
}

impl Topology {
    /// Links are ordered per target by source index.
    pub fn new(n_nodes: usize, links: Vec<LinkModel>) -> Result<Self> {
        let mut in_links = vec![Vec::new(); n_nodes];
        for (k, l) in links.iter().enumerate() {
            if l.from >= n_nodes || l.to >= n_nodes {
                return Err(Error::Parameter(format!(
                    "edge {}->{} references a node outside 0..{n_nodes}",
                    l.from, l.to
                )));
            }
            if l.from == l.to {
                return Err(Error::Parameter(format!("self-loop at node {}", l.from)));
            }
            in_links[l.to].push(k);
        }
        for list in &mut in_links {
            list.sort_by_key(|&k| links[k].from);
            if list
                .windows(2)
                .any(|w| links[w[0]].from == links[w[1]].from)
            {
                let l = &links[list[0]];
                return Err(Error::Parameter(format!(
                    "duplicate edge into node {}",
                    l.to
                )));
            }
        }
        Ok(Topology {
            n_nodes,
            links,
            in_links,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn links(&self) -> &[LinkModel] {
        &self.links
    }

    pub fn link(&self, k: usize) -> &LinkModel {
        &self.links[k]
    }

    /// Indices into [`Topology::links`] of the links entering node `i`.
    pub fn in_links(&self, i: usize) -> &[usize] {
        &self.in_links[i]
    }

    /// The neighbourhood of node `i`: nodes that send to `i`.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        self.in_links[i]
            .iter()
            .map(|&k| self.links[k].from)
            .collect()
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.in_links[i].len()
    }
}

/// Realization `(Omega, Gamma, Upsilon)` of the first-order low-pass attack
/// tracker `G(s) = g / (s + 2 beta) I`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerSpec {
    pub n_f: usize,
    pub beta: f64,
    pub g: f64,
    /// `[[0, I], [0, -2 beta I]]`
    pub omega: Mat,
    /// `[0; -g I]`
    pub gamma: Mat,
    /// `[I 0]`
    pub upsilon: Mat,
}

impl TrackerSpec {
    /// Dimension of the tracker state.
    pub fn dim(&self) -> usize {
        2 * self.n_f
    }

    /// Tracker driven by the attack itself: with `nu = Upsilon eps - f`,
    /// `eps' = (Omega + Gamma Upsilon) eps - Gamma f`.
    pub fn closed_loop(&self) -> Mat {
        &self.omega + &self.gamma * &self.upsilon
    }
}

pub fn build_tracker(beta: f64, g: f64, n_f: usize) -> Result<TrackerSpec> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Parameter(format!(
            "tracker beta must be > 0, got {beta}"
        )));
    }
    if !(g > 0.0) || !g.is_finite() {
        return Err(Error::Parameter(format!("tracker g must be > 0, got {g}")));
    }
    if n_f == 0 {
        return Err(Error::Parameter("tracker n_f must be >= 1".into()));
    }
    let eye = Mat::identity(n_f, n_f);
    let mut omega = Mat::zeros(2 * n_f, 2 * n_f);
    omega.view_mut((0, n_f), (n_f, n_f)).copy_from(&eye);
    omega
        .view_mut((n_f, n_f), (n_f, n_f))
        .copy_from(&(&eye * (-2.0 * beta)));
    let mut gamma = Mat::zeros(2 * n_f, n_f);
    gamma.view_mut((n_f, 0), (n_f, n_f)).copy_from(&(&eye * -g));
    let mut upsilon = Mat::zeros(n_f, 2 * n_f);
    upsilon.view_mut((0, 0), (n_f, n_f)).copy_from(&eye);
    Ok(TrackerSpec {
        n_f,
        beta,
        g,
        omega,
        gamma,
        upsilon,
    })
}

/// Design weights of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignWeights {
    pub r: Mat,
    pub r_check: Mat,
    pub x: Mat,
    pub x_check: Mat,
}

impl DesignWeights {
    /// `diag(R_i, R_check_i)`
    pub fn bold_r(&self) -> Mat {
        block_diag(&[&self.r, &self.r_check])
    }

    /// `diag(X_i, X_check_i)`
    pub fn bold_x(&self) -> Mat {
        block_diag(&[&self.x, &self.x_check])
    }
}

/// Constant baseline observer gains given in the scenario; `k` follows the
/// node's in-link order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantGains {
    pub l: Mat,
    pub k: Vec<Mat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeModel {
    pub sensor: SensorModel,
    pub tracker: TrackerSpec,
    /// Attack injection matrix `F_i`, `n x n_f`.
    pub injection: Mat,
    pub weights: DesignWeights,
    pub xi: Vector,
    /// Present iff the node is misappropriated.
    pub attack: Option<SignalSpec>,
    pub noise: SignalSpec,
    pub baseline_gains: Option<ConstantGains>,
}

impl NodeModel {
    pub fn is_hijacked(&self) -> bool {
        self.attack.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSettings {
    pub gamma: f64,
    pub grid_dt: f64,
    pub riccati_step: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub gain_mode: GainMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub horizon: f64,
    pub step: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSettings {
    pub threshold: Option<f64>,
    pub dwell: f64,
    pub burn_in: Option<f64>,
}

/// A fully resolved scenario. Obtain a checked one through
/// [`validate_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub plant: PlantModel,
    pub x0: Vector,
    pub disturbance: SignalSpec,
    pub nodes: Vec<NodeModel>,
    pub topology: Topology,
    pub design: DesignSettings,
    pub sim: SimSettings,
    pub detection: DetectionSettings,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.plant.n()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Number of uniform grid intervals covering the horizon with spacing `dt`.
    pub fn intervals(horizon: f64, dt: f64) -> usize {
        (horizon / dt).round().max(1.0) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracker_half_beta() {
        let t = build_tracker(0.5, 1.0, 1).unwrap();
        assert_eq!(t.omega, Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -1.0]));
        assert_eq!(t.gamma, Mat::from_row_slice(2, 1, &[0.0, -1.0]));
        assert_eq!(t.upsilon, Mat::from_row_slice(1, 2, &[1.0, 0.0]));
    }

    #[test]
    fn tracker_unit_beta_gain_two() {
        let t = build_tracker(1.0, 2.0, 1).unwrap();
        assert_eq!(t.omega, Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -2.0]));
        assert_eq!(t.gamma, Mat::from_row_slice(2, 1, &[0.0, -2.0]));
    }

    #[test]
    fn tracker_two_channels() {
        let t = build_tracker(1.0, 1.0, 2).unwrap();
        assert_eq!(t.omega.shape(), (4, 4));
        assert_eq!(
            t.omega.view((2, 2), (2, 2)).clone_owned(),
            Mat::identity(2, 2) * -2.0
        );
        assert_eq!(
            t.omega.view((0, 2), (2, 2)).clone_owned(),
            Mat::identity(2, 2)
        );
        assert_eq!(t.upsilon.shape(), (2, 4));
        assert_eq!(t.gamma.shape(), (4, 2));
    }

    #[test]
    fn tracker_rejects_bad_parameters() {
        assert!(build_tracker(0.0, 1.0, 1).is_err());
        assert!(build_tracker(1.0, -1.0, 1).is_err());
        assert!(build_tracker(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn tracker_eigenvalues() {
        for (beta, nf) in [(0.3, 1), (1.7, 2), (4.0, 3)] {
            let t = build_tracker(beta, 1.0, nf).unwrap();
            // Omega is upper block-triangular: eigenvalues are its diagonal.
            let mut diag: Vec<f64> = t.omega.diagonal().iter().copied().collect();
            diag.sort_by(f64::total_cmp);
            let mut want = vec![-2.0 * beta; nf];
            want.extend(vec![0.0; nf]);
            for (a, b) in diag.iter().zip(&want) {
                assert!((a - b).abs() < 1e-10);
            }
            // closed-loop tracker is Hurwitz
            let cl = t.closed_loop();
            let eigs = cl.complex_eigenvalues();
            assert!(eigs.iter().all(|l| l.re < 0.0));
        }
    }

    fn plant_with(entries: Vec<Entry>) -> PlantModel {
        PlantModel {
            a: TvMatrix::from_entries(1, 1, entries).unwrap(),
            b: TvMatrix::constant(&Mat::identity(1, 1)),
            horizon: 10.0,
        }
    }

    #[test]
    fn eval_plant_constant_sin_and_schedule() {
        let a0 = Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let p = PlantModel {
            a: TvMatrix::constant(&a0),
            b: TvMatrix::constant(&Mat::zeros(2, 1)),
            horizon: 10.0,
        };
        assert_eq!(eval_plant(&p, 0.0).unwrap().0, a0);
        assert_eq!(eval_plant(&p, 7.3).unwrap().0, a0);

        let p = plant_with(vec![Entry::Sin(SinSum {
            c0: 0.0,
            terms: vec![SinTerm {
                a: 1.0,
                w: 1.0,
                phi: 0.0,
            }],
        })]);
        let a = eval_plant(&p, std::f64::consts::FRAC_PI_2).unwrap().0;
        assert!((a[(0, 0)] - 1.0).abs() < 1e-15);

        let p = plant_with(vec![Entry::Pwc(Schedule {
            breaks: vec![1.0],
            values: vec![-1.0, 2.0],
        })]);
        assert_eq!(eval_plant(&p, 0.5).unwrap().0[(0, 0)], -1.0);
        assert_eq!(eval_plant(&p, 1.5).unwrap().0[(0, 0)], 2.0);
    }

    #[test]
    fn eval_plant_outside_horizon() {
        let p = plant_with(vec![Entry::Const(1.0)]);
        assert!(matches!(eval_plant(&p, 10.5), Err(Error::Domain(_))));
        assert!(matches!(eval_plant(&p, -0.1), Err(Error::Domain(_))));
        assert!(eval_plant(&p, 10.0).is_ok());
    }

    #[test]
    fn eval_plant_is_pure() {
        let p = plant_with(vec![Entry::Sin(SinSum {
            c0: 0.3,
            terms: vec![SinTerm {
                a: 0.7,
                w: 2.1,
                phi: 0.4,
            }],
        })]);
        for t in [0.0, 0.123, 9.99] {
            let (a1, b1) = eval_plant(&p, t).unwrap();
            let (a2, b2) = eval_plant(&p, t).unwrap();
            assert_eq!(a1[(0, 0)].to_bits(), a2[(0, 0)].to_bits());
            assert_eq!(b1, b2);
        }
    }

    #[test]
    fn topology_neighbourhoods() {
        let link = |from, to| LinkModel {
            from,
            to,
            w: Mat::identity(1, 1),
            h: Mat::identity(1, 1),
            z: Mat::identity(1, 1),
            noise: SignalSpec::zero(),
        };
        let t = Topology::new(3, vec![link(2, 0), link(1, 0), link(0, 1)]).unwrap();
        assert_eq!(t.neighbors(0), vec![1, 2]);
        assert_eq!(t.in_degree(0), 2);
        assert_eq!(t.neighbors(2), Vec::<usize>::new());
        assert!(Topology::new(2, vec![link(1, 1)]).is_err());
        assert!(Topology::new(2, vec![link(0, 1), link(0, 1)]).is_err());
        assert!(Topology::new(2, vec![link(0, 5)]).is_err());
    }
}

//! Fixed-step RK4 integration of the filtering Riccati equation
//!
//! ```text
//! Y' = A Y + Y A' - Y (C' E^-1 C - R / gamma^2) Y + B B',   Y(0) = X^-1
//! ```
//!
//! with symmetrization after every step and numerical monitoring of
//! `alpha_1 I < Y < alpha_2 I`.

use crate::error::{Error, Result};
use nalgebra::SymmetricEigen;

use crate::linalg::{spd_inverse, sym_eig_range, symmetrized, Mat};

/// Substeps within which a predicted finite escape is reported rather than
/// stepped into; fixed-step RK4 lags a blow-up by about a step.
const ESCAPE_STEPS: f64 = 2.0;

/// Coefficients of the Riccati right-hand side at one instant.
#[derive(Debug, Clone)]
pub struct RiccatiTerms {
    pub a: Mat,
    /// `B B'`
    pub bbt: Mat,
    /// `C' E^-1 C`
    pub cec: Mat,
}

/// A time-varying source of Riccati coefficients.
pub trait RiccatiSystem {
    fn dim(&self) -> usize;
    fn terms(&self, t: f64) -> Result<RiccatiTerms>;
}

/// Time-invariant coefficients.
#[derive(Debug, Clone)]
pub struct ConstantSystem(pub RiccatiTerms);

impl ConstantSystem {
    pub fn new(a: Mat, b: Mat, c: Mat, e: Mat) -> Result<Self> {
        Ok(ConstantSystem(terms_from(a, &b, &c, &e)?))
    }
}

impl RiccatiSystem for ConstantSystem {
    fn dim(&self) -> usize {
        self.0.a.nrows()
    }

    fn terms(&self, _t: f64) -> Result<RiccatiTerms> {
        Ok(self.0.clone())
    }
}

pub(crate) fn terms_from(a: Mat, b: &Mat, c: &Mat, e: &Mat) -> Result<RiccatiTerms> {
    let e_inv =
        spd_inverse(e).ok_or_else(|| Error::Parameter("E must be positive definite".into()))?;
    Ok(RiccatiTerms {
        a,
        bbt: b * b.transpose(),
        cec: c.transpose() * e_inv * c,
    })
}

/// Uniform grid `t_k = k * dt`, `k = 0..=intervals`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub dt: f64,
    pub intervals: usize,
}

impl UniformGrid {
    /// Spacing close to `dt` that divides `horizon` exactly.
    pub fn covering(horizon: f64, dt: f64) -> Self {
        let intervals = (horizon / dt).round().max(1.0) as usize;
        UniformGrid {
            dt: horizon / intervals as f64,
            intervals,
        }
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.intervals).map(|k| self.time(k)).collect()
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.intervals)
    }
}

/// Numerical surrogate for boundedness of the solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub alpha_min: f64,
    pub alpha_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            alpha_min: 1e-8,
            alpha_max: 1e8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub times: Vec<f64>,
    pub y: Vec<Mat>,
    /// Smallest eigenvalue of `Y` seen on the grid.
    pub alpha1: f64,
    /// Largest eigenvalue of `Y` seen on the grid.
    pub alpha2: f64,
}

/// Weighting of the Riccati quadratic term.
#[derive(Debug, Clone)]
pub struct RiccatiWeights<'a> {
    pub r: &'a Mat,
    pub gamma: f64,
    /// Initial-condition weight; `Y(0) = X^-1`.
    pub x: &'a Mat,
}

/// Escape time of `y' = rho y^2` from the top eigenvalue of `Y`, where `rho`
/// is the quadratic coefficient `R/gamma^2 - C'E^-1 C` along its eigenvector.
/// `None` when the quadratic term cannot blow the solution up within `horizon`.
fn escape_within(y: &Mat, quad: &Mat, hi: f64, horizon: f64) -> Option<f64> {
    if quad.norm() * hi * horizon < 1.0 {
        return None;
    }
    let eig = SymmetricEigen::new(symmetrized(y));
    let top = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(top);
    let rho = (v.transpose() * quad * v)[(0, 0)];
    let t_escape = 1.0 / (rho * eig.eigenvalues[top]);
    (rho > 0.0 && t_escape <= horizon).then_some(t_escape)
}

fn rhs(terms: &RiccatiTerms, r_scaled: &Mat, y: &Mat) -> Mat {
    let ay = &terms.a * y;
    let s = &terms.cec - r_scaled;
    &ay + ay.transpose() - y * s * y + &terms.bbt
}

/// Right-hand side of the Riccati equation, exposed for residual checks.
pub fn riccati_rhs(terms: &RiccatiTerms, r: &Mat, gamma: f64, y: &Mat) -> Mat {
    rhs(terms, &(r / (gamma * gamma)), y)
}

/// Integrate from `Y(0) = X^-1` across `grid` with RK4 substeps of at most
/// `h`, recording `Y` at every grid point.
pub fn integrate_riccati(
    sys: &impl RiccatiSystem,
    weights: &RiccatiWeights<'_>,
    grid: UniformGrid,
    h: f64,
    bounds: Bounds,
) -> Result<RiccatiSolution> {
    let dim = sys.dim();
    if !(h > 0.0) {
        return Err(Error::Parameter("Riccati step must be > 0".into()));
    }
    if !(weights.gamma > 0.0) {
        return Err(Error::Parameter("gamma must be > 0".into()));
    }
    if weights.r.shape() != (dim, dim) || weights.x.shape() != (dim, dim) {
        return Err(Error::Dimension(format!(
            "Riccati weights must be {dim}x{dim}"
        )));
    }
    let mut y = spd_inverse(weights.x)
        .ok_or_else(|| Error::Parameter("X must be positive definite".into()))?;
    let r_scaled = weights.r / (weights.gamma * weights.gamma);
    let substeps = (grid.dt / h).ceil().max(1.0) as usize;
    let hs = grid.dt / substeps as f64;

    let check = |y: &Mat, t: f64| -> Result<(f64, f64)> {
        let finite = y.iter().all(|v| v.is_finite());
        let (lo, hi) = if finite {
            sym_eig_range(y)
        } else {
            (f64::NAN, f64::INFINITY)
        };
        if !finite || !(lo > bounds.alpha_min) || !(hi < bounds.alpha_max) {
            return Err(Error::Unbounded {
                node: None,
                t,
                min_eig: lo,
                max_eig: hi,
            });
        }
        Ok((lo, hi))
    };

    let (mut alpha1, mut alpha2) = check(&y, 0.0)?;
    let mut times = Vec::with_capacity(grid.intervals + 1);
    let mut ys = Vec::with_capacity(grid.intervals + 1);
    times.push(0.0);
    ys.push(y.clone());

    for k in 0..grid.intervals {
        let t0 = grid.time(k);
        for s in 0..substeps {
            let t = t0 + s as f64 * hs;
            let t_mid = t + 0.5 * hs;
            let t_end = if s + 1 == substeps {
                grid.time(k + 1)
            } else {
                t + hs
            };
            let c0 = sys.terms(t)?;
            let c_mid = sys.terms(t_mid)?;
            let c1 = sys.terms(t_end)?;
            let k1 = rhs(&c0, &r_scaled, &y);
            let k2 = rhs(&c_mid, &r_scaled, &(&y + &k1 * (0.5 * hs)));
            let k3 = rhs(&c_mid, &r_scaled, &(&y + &k2 * (0.5 * hs)));
            let k4 = rhs(&c1, &r_scaled, &(&y + &k3 * hs));
            let next = &y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (hs / 6.0);
            // report the last time at which the solution was still admissible
            let (lo, hi) = check(&next, t)?;
            if escape_within(&next, &(&r_scaled - &c1.cec), hi, ESCAPE_STEPS * hs).is_some() {
                return Err(Error::Unbounded {
                    node: None,
                    t: t_end,
                    min_eig: lo,
                    max_eig: hi,
                });
            }
            y = symmetrized(&next);
        }
        let (lo, hi) = check(&y, grid.time(k + 1))?;
        alpha1 = alpha1.min(lo);
        alpha2 = alpha2.max(hi);
        times.push(grid.time(k + 1));
        ys.push(y.clone());
    }
    Ok(RiccatiSolution {
        times,
        y: ys,
        alpha1,
        alpha2,
    })
}

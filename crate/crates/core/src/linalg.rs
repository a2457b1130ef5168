//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Extreme eigenvalues `(min, max)` of the symmetric part of `m`.
pub fn sym_eig_range(m: &Mat) -> (f64, f64) {
    if m.nrows() == 0 {
        return (f64::INFINITY, f64::NEG_INFINITY);
    }
    let s = symmetrized(m);
    let eig = SymmetricEigen::new(s).eigenvalues;
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

pub fn min_eig(m: &Mat) -> f64 {
    sym_eig_range(m).0
}

pub fn symmetrized(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Largest absolute asymmetry `max |m_ij - m_ji|`.
pub fn asymmetry(m: &Mat) -> f64 {
    (m - m.transpose()).amax()
}

/// Symmetric and strictly positive definite (eigenvalue floor `tol`).
pub fn is_spd(m: &Mat, tol: f64) -> bool {
    m.is_square()
        && m.iter().all(|x| x.is_finite())
        && asymmetry(m) <= 1e-10 * (1.0 + m.amax())
        && min_eig(m) > tol
}

/// Symmetric PSD square root via eigendecomposition.
pub fn sqrt_psd(m: &Mat) -> Result<Mat> {
    if !m.is_square() {
        return Err(Error::Dimension(
            "square root of a non-square matrix".into(),
        ));
    }
    let eig = SymmetricEigen::new(symmetrized(m));
    if eig
        .eigenvalues
        .iter()
        .any(|&l| l < -1e-12 * (1.0 + m.amax()))
    {
        return Err(Error::Parameter(
            "square root of an indefinite matrix".into(),
        ));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * Mat::from_diagonal(&roots) * v.transpose())
}

/// Inverse of an SPD matrix via Cholesky.
pub fn spd_inverse(m: &Mat) -> Option<Mat> {
    if m.nrows() == 0 {
        return Some(Mat::zeros(0, 0));
    }
    m.clone().cholesky().map(|c| c.inverse())
}

pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Stack matrices with equal column count on top of each other.
pub fn vstack(blocks: &[&Mat], cols: usize) -> Mat {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        debug_assert_eq!(b.ncols(), cols);
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Relative Frobenius distance `|a - b| / max(|b|, floor)`.
pub fn rel_frobenius(a: &Mat, b: &Mat, floor: f64) -> f64 {
    (a - b).norm() / b.norm().max(floor)
}

/// Squared weighted norm `v' W v`.
pub fn weighted_sq(v: &Vector, w: &Mat) -> f64 {
    (v.transpose() * w * v)[(0, 0)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sqrt_of_diagonal() {
        let m = Mat::from_diagonal(&Vector::from_vec(vec![4.0, 9.0]));
        let r = sqrt_psd(&m).unwrap();
        assert_relative_eq!(r[(0, 0)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(r[(1, 1)], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = sqrt_psd(&m).unwrap();
        assert_relative_eq!(&r * &r, m, epsilon = 1e-12);
    }

    #[test]
    fn spd_checks() {
        assert!(is_spd(&Mat::identity(3, 3), 0.0));
        assert!(!is_spd(&Mat::zeros(2, 2), 0.0));
        assert!(!is_spd(
            &Mat::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]),
            0.0
        ));
    }

    #[test]
    fn block_diag_layout() {
        let a = Mat::from_element(1, 2, 1.0);
        let b = Mat::from_element(2, 1, 2.0);
        let d = block_diag(&[&a, &b]);
        assert_eq!(d.shape(), (3, 3));
        assert_eq!(d[(0, 1)], 1.0);
        assert_eq!(d[(2, 2)], 2.0);
        assert_eq!(d[(0, 2)], 0.0);
    }
}

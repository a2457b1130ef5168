//! Centralized setup: interconnection coupling and the network-level LMI.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{block_diag, min_eig, spd_inverse, Mat};
use crate::model::Topology;

/// Strict-inequality margin on minimum eigenvalues.
pub const LMI_TOL: f64 = 1e-9;

/// `U_ij`, `Delta_i` and the block matrix `Phi` of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingData {
    /// State dimension `n` of each block.
    pub n: usize,
    /// `U_ij = H_ij H_ij' + Z_ij`, indexed like [`Topology::links`].
    pub u: Vec<Mat>,
    /// `Delta_i = sum_j W_ij' U_ij^-1 Z_ij U_ij^-1 W_ij`.
    pub delta: Vec<Mat>,
    /// `Phi_ii = Delta_i`, `Phi_ij = -W_ij' U_ij^-1 W_ij` for `j` in `N_i`.
    pub phi: Mat,
}

impl CouplingData {
    pub fn n_nodes(&self) -> usize {
        self.delta.len()
    }

    /// `diag(Delta_1, ..., Delta_N)`
    pub fn delta_stacked(&self) -> Mat {
        let refs: Vec<&Mat> = self.delta.iter().collect();
        block_diag(&refs)
    }

    pub fn phi_block(&self, i: usize, j: usize) -> Mat {
        self.phi
            .view((i * self.n, j * self.n), (self.n, self.n))
            .clone_owned()
    }
}

/// Assemble the coupling data. The `Z_ij` weights are taken from the links.
pub fn build_coupling(topology: &Topology, n: usize) -> Result<CouplingData> {
    let n_nodes = topology.n_nodes();
    let mut u = Vec::with_capacity(topology.links().len());
    let mut u_inv = Vec::with_capacity(topology.links().len());
    for l in topology.links() {
        if l.w.ncols() != n {
            return Err(Error::Dimension(format!(
                "W on edge {}->{} has {} columns, expected {n}",
                l.from,
                l.to,
                l.w.ncols()
            )));
        }
        let ul = l.u();
        let inv = spd_inverse(&ul).ok_or_else(|| {
            Error::Internal(format!("U on edge {}->{} is singular", l.from, l.to))
        })?;
        u.push(ul);
        u_inv.push(inv);
    }

    let mut delta = vec![Mat::zeros(n, n); n_nodes];
    let mut phi = Mat::zeros(n_nodes * n, n_nodes * n);
    for (k, l) in topology.links().iter().enumerate() {
        let (i, j) = (l.to, l.from);
        let wu = l.w.transpose() * &u_inv[k];
        delta[i] += &wu * &l.z * &u_inv[k] * &l.w;
        let off = -(&wu * &l.w);
        phi.view_mut((i * n, j * n), (n, n)).copy_from(&off);
    }
    for (i, d) in delta.iter().enumerate() {
        phi.view_mut((i * n, i * n), (n, n)).copy_from(d);
    }
    Ok(CouplingData { n, u, delta, phi })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub gamma: f64,
    /// Minimum eigenvalue of `R + gamma^2 (Phi + Phi' - Delta) - I`.
    pub min_eig: f64,
    pub feasible: bool,
}

/// `M = R + gamma^2 (Phi + Phi' - Delta) - I`.
pub fn lmi_matrix(r: &Mat, gamma: f64, coupling: &CouplingData) -> Result<Mat> {
    if r.shape() != coupling.phi.shape() {
        return Err(Error::Dimension(format!(
            "stacked R is {:?}, Phi is {:?}",
            r.shape(),
            coupling.phi.shape()
        )));
    }
    let phi = &coupling.phi;
    let sym = phi + phi.transpose() - coupling.delta_stacked();
    Ok(r + sym * (gamma * gamma) - Mat::identity(r.nrows(), r.ncols()))
}

/// Network-level condition `R + gamma^2 (Phi + Phi' - Delta) > I`.
pub fn check_lmi_global(r: &Mat, gamma: f64, coupling: &CouplingData) -> Result<FeasibilityReport> {
    let m = lmi_matrix(r, gamma, coupling)?;
    let min = min_eig(&m);
    Ok(FeasibilityReport {
        gamma,
        min_eig: min,
        feasible: min > LMI_TOL,
    })
}

/// Local condition `R_check_i > I`.
pub fn check_lmi_local(r_check: &Mat) -> Result<bool> {
    if !r_check.is_square() {
        return Err(Error::Parameter("R_check must be square".into()));
    }
    if crate::linalg::asymmetry(r_check) > 1e-12 * (1.0 + r_check.amax()) {
        return Err(Error::Parameter("R_check must be symmetric".into()));
    }
    let n = r_check.nrows();
    Ok(min_eig(&(r_check - Mat::identity(n, n))) > LMI_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinkModel;
    use crate::signals::SignalSpec;
    use approx::assert_relative_eq;

    fn scalar_link(from: usize, to: usize, h: f64, z: f64) -> LinkModel {
        LinkModel {
            from,
            to,
            w: Mat::from_element(1, 1, 1.0),
            h: Mat::from_element(1, 1, h),
            z: Mat::from_element(1, 1, z),
            noise: SignalSpec::zero(),
        }
    }

    fn pair(h: f64) -> CouplingData {
        let t = Topology::new(
            2,
            vec![scalar_link(0, 1, h, 1.0), scalar_link(1, 0, h, 1.0)],
        )
        .unwrap();
        build_coupling(&t, 1).unwrap()
    }

    /// Entry-by-entry evaluation of the block formulas for scalar links.
    fn oracle_phi(n_nodes: usize, edges: &[(usize, usize, f64, f64, f64)]) -> Vec<Vec<f64>> {
        let mut phi = vec![vec![0.0; n_nodes]; n_nodes];
        for &(from, to, w, h, z) in edges {
            let u = h * h + z;
            phi[to][to] += w * z * w / (u * u);
            phi[to][from] = -w * w / u;
        }
        phi
    }

    #[test]
    fn no_edges_gives_zero_phi() {
        let t = Topology::new(1, vec![]).unwrap();
        let c = build_coupling(&t, 3).unwrap();
        assert_eq!(c.phi, Mat::zeros(3, 3));
        assert_eq!(c.delta[0], Mat::zeros(3, 3));
    }

    #[test]
    fn two_nodes_unit_noise() {
        let c = pair(1.0);
        assert_relative_eq!(c.u[0][(0, 0)], 2.0);
        assert_relative_eq!(c.delta[0][(0, 0)], 0.25);
        let want = Mat::from_row_slice(2, 2, &[0.25, -0.5, -0.5, 0.25]);
        assert_relative_eq!(c.phi, want, epsilon = 1e-15);
        let o = oracle_phi(2, &[(0, 1, 1.0, 1.0, 1.0), (1, 0, 1.0, 1.0, 1.0)]);
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(c.phi[(i, j)], o[i][j], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn two_nodes_noise_free_links() {
        let c = pair(0.0);
        assert_relative_eq!(c.u[0][(0, 0)], 1.0);
        assert_relative_eq!(c.delta[1][(0, 0)], 1.0);
        assert_relative_eq!(c.phi[(0, 1)], -1.0);
        assert_relative_eq!(c.phi[(1, 0)], -1.0);
    }

    #[test]
    fn lmi_without_edges() {
        let c = build_coupling(&Topology::new(2, vec![]).unwrap(), 2).unwrap();
        let r = Mat::identity(4, 4) * 2.0;
        for g in [0.1, 1.0, 10.0] {
            let rep = check_lmi_global(&r, g, &c).unwrap();
            assert_relative_eq!(rep.min_eig, 1.0, epsilon = 1e-12);
            assert!(rep.feasible);
        }
        let rep = check_lmi_global(&Mat::identity(4, 4), 1.0, &c).unwrap();
        assert!(rep.min_eig.abs() < 1e-12);
        assert!(!rep.feasible);
    }

    #[test]
    fn lmi_two_node_boundary() {
        // Phi + Phi' - Delta = [[1/4, -1], [-1, 1/4]], eigenvalues 5/4 and -3/4.
        let c = pair(1.0);
        for (r, g) in [(2.0, 1.0), (2.0, 1.2), (3.0, 1.5), (1.5, 0.5)] {
            let rep = check_lmi_global(&(Mat::identity(2, 2) * r), g, &c).unwrap();
            assert_relative_eq!(rep.min_eig, r - 1.0 - 0.75 * g * g, epsilon = 1e-12);
            assert_eq!(rep.feasible, r - 0.75 * g * g > 1.0 + LMI_TOL);
        }
    }

    #[test]
    fn lmi_dimension_mismatch() {
        let c = pair(1.0);
        assert!(matches!(
            check_lmi_global(&Mat::identity(3, 3), 1.0, &c),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn local_lmi() {
        assert!(check_lmi_local(&(Mat::identity(2, 2) * 2.0)).unwrap());
        assert!(!check_lmi_local(&Mat::identity(2, 2)).unwrap());
        assert!(
            !check_lmi_local(&Mat::from_diagonal(&crate::linalg::Vector::from_vec(vec![
                3.0, 0.5
            ])))
            .unwrap()
        );
        assert!(check_lmi_local(&Mat::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0])).is_err());
    }
}

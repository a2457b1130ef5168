//! Closed-loop dynamics of plant, observer network and detector network.
//!
//! The network is simulated as one stacked ODE. Message passing is modelled
//! by direct reads: node `i` sees `W_ij x_hat_j` (plus link noise) from the
//! observers and `W_ij e_hat_j` from the detectors of its in-neighbours.
//!
//! The detector at node `i` has state `mu_i = (e_hat_i, eps_hat_i)` and
//! output `phi_i = [0 Upsilon_i] mu_i`.

mod simulate;

pub(crate) use simulate::stream_attack;
pub use simulate::{simulate, LinkTrace, NodeTrace, SimOptions, SimResult};

use crate::linalg::{Mat, Vector};
use crate::synthesis::GainBlocks;

/// Measurement and link innovations of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Innovations {
    /// `zeta_i = y_i - C_i x_hat_i`
    pub local: Vector,
    /// `zeta_ij = c_ij - W_ij x_hat_i`, in in-link order.
    pub links: Vec<Vector>,
}

/// `zeta_i = y_i - C_i x_hat_i`, `zeta_ij = c_ij - W_ij x_hat_i`.
pub fn innovations(
    c: &Mat,
    y: &Vector,
    messages: &[(&Mat, Vector)],
    x_hat: &Vector,
) -> Innovations {
    Innovations {
        local: y - c * x_hat,
        links: messages.iter().map(|(w, c_ij)| c_ij - *w * x_hat).collect(),
    }
}

/// Baseline gains of one node in block form (`l_hat`/`k_hat` hold `L_i`,
/// `K_ij`; the tracker blocks are empty).
pub type ObserverGains = GainBlocks;

/// `x_hat_i' = A x_hat_i + L_i zeta_i + sum_j K_ij zeta_ij + F_i f_i`; the
/// injection term is present only on a misappropriated node.
pub fn observer_rhs(
    a: &Mat,
    x_hat: &Vector,
    innov: &Innovations,
    gains: &ObserverGains,
    injection: Option<(&Mat, &Vector)>,
) -> Vector {
    let mut dx = a * x_hat + &gains.l_hat * &innov.local;
    for (k, z) in gains.k_hat.iter().zip(&innov.links) {
        dx += k * z;
    }
    if let Some((f_mat, f)) = injection {
        dx += f_mat * f;
    }
    dx
}

/// What detector `i` needs from in-neighbour `j`: the link map and the
/// neighbour's detector estimate `e_hat_j`.
pub struct NeighborEstimate<'a> {
    pub w: &'a Mat,
    pub e_hat: &'a Vector,
}

/// Fixed data of one detector evaluation.
pub struct DetectorInputs<'a> {
    pub a: &'a Mat,
    pub c: &'a Mat,
    /// `F_i`
    pub injection: &'a Mat,
    pub omega: &'a Mat,
    pub upsilon: &'a Mat,
    /// Baseline `L_i`, `K_ij`.
    pub baseline: &'a GainBlocks,
    /// Detector gains: `l_hat`/`k_hat` hold `L_bar_i`/`K_bar_ij`,
    /// `l_check`/`k_check` hold the tracker gains.
    pub detector: &'a GainBlocks,
}

/// Detector derivatives `(e_hat_i', eps_hat_i')`:
///
/// ```text
/// e_hat' = (A - L C - sum K W) e_hat + sum K W e_hat_j - F Upsilon eps_hat
///          + L_bar (zeta - C e_hat) + sum K_bar (zeta_ij - W (e_hat - e_hat_j))
/// eps_hat' = Omega eps_hat + L_check (zeta - C e_hat)
///          + sum K_check (zeta_ij - W (e_hat - e_hat_j))
/// ```
pub fn detector_rhs(
    inp: &DetectorInputs<'_>,
    e_hat: &Vector,
    eps_hat: &Vector,
    innov: &Innovations,
    neighbors: &[NeighborEstimate<'_>],
) -> (Vector, Vector) {
    let r_local = &innov.local - inp.c * e_hat;
    let mut de = inp.a * e_hat
        - &inp.baseline.l_hat * (inp.c * e_hat)
        - inp.injection * (inp.upsilon * eps_hat)
        + &inp.detector.l_hat * &r_local;
    let mut deps = inp.omega * eps_hat + &inp.detector.l_check * &r_local;
    for (k, nb) in neighbors.iter().enumerate() {
        let w_diff = nb.w * (nb.e_hat - e_hat);
        // -K W e_hat + K W e_hat_j
        de += &inp.baseline.k_hat[k] * &w_diff;
        let r_link = &innov.links[k] + &w_diff;
        de += &inp.detector.k_hat[k] * &r_link;
        deps += &inp.detector.k_check[k] * &r_link;
    }
    (de, deps)
}

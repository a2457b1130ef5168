//! Per-node augmented error system: estimation error `z_i` stacked with the
//! tracker error `delta_i`, driven by `[w; nu_i]` and by the normalized
//! measurement, link and interconnection noises.

use crate::error::{Error, Result};
use crate::linalg::{block_diag, sqrt_psd, vstack, Mat};
use crate::model::Scenario;

/// Row/column bookkeeping for a node's stacked gain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GainLayout {
    /// Rows of the estimation-error block (`n`).
    pub n_state: usize,
    /// Rows of the tracker block (`2 n_f`, zero for the baseline observer).
    pub n_tracker: usize,
    /// Column widths: `p_i` then `p_ij` for each in-link in order.
    pub outputs: Vec<usize>,
}

impl GainLayout {
    pub fn rows(&self) -> usize {
        self.n_state + self.n_tracker
    }

    pub fn cols(&self) -> usize {
        self.outputs.iter().sum()
    }

    /// Column offset of output block `k` (0 = local measurement).
    pub fn col_offset(&self, k: usize) -> usize {
        self.outputs[..k].iter().sum()
    }
}

/// `(A_i, B_i, C_i, D_i, E_i)` of one node at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedNode {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    /// `D_i D_i'`
    pub e: Mat,
    pub layout: GainLayout,
}

/// Column stack of the local sensor and each in-link message map; the
/// part of the output matrix acting on the estimation error.
fn output_rows(s: &Scenario, i: usize, t: f64) -> (Mat, Vec<usize>) {
    let n = s.n();
    let c_i = s.nodes[i].sensor.c.eval(t);
    let mut widths = vec![c_i.nrows()];
    let mut rows: Vec<Mat> = vec![c_i];
    for &k in s.topology.in_links(i) {
        let w = &s.topology.link(k).w;
        widths.push(w.nrows());
        rows.push(w.clone());
    }
    let refs: Vec<&Mat> = rows.iter().collect();
    (vstack(&refs, n), widths)
}

/// `D_i`: `D_i(t)` for the sensor row block; for link row block `k`, `H_ijk`
/// in the link-noise columns and `Z_ijk^{1/2}` in the interconnection columns.
fn noise_map(s: &Scenario, i: usize, t: f64) -> Result<Mat> {
    let d_i = s.nodes[i].sensor.d.eval(t);
    let links: Vec<_> = s
        .topology
        .in_links(i)
        .iter()
        .map(|&k| s.topology.link(k))
        .collect();
    let h_blocks: Vec<&Mat> = links.iter().map(|l| &l.h).collect();
    let roots = links
        .iter()
        .map(|l| sqrt_psd(&l.z))
        .collect::<Result<Vec<_>>>()?;
    let root_refs: Vec<&Mat> = roots.iter().collect();
    let h = block_diag(&h_blocks);
    let zr = block_diag(&root_refs);
    let rows = d_i.nrows() + h.nrows();
    let cols = d_i.ncols() + h.ncols() + zr.ncols();
    let mut d = Mat::zeros(rows, cols);
    d.view_mut((0, 0), d_i.shape()).copy_from(&d_i);
    d.view_mut((d_i.nrows(), d_i.ncols()), h.shape())
        .copy_from(&h);
    d.view_mut((d_i.nrows(), d_i.ncols() + h.ncols()), zr.shape())
        .copy_from(&zr);
    Ok(d)
}

fn check_e(e: &Mat, i: usize, t: f64) -> Result<()> {
    if e.clone().cholesky().is_none() {
        return Err(Error::Assumption {
            node: i,
            t,
            reason: "E_i = D_i D_i' is not positive definite".into(),
        });
    }
    Ok(())
}

/// Augmented system of node `i` at time `t`.
pub fn assemble_augmented(s: &Scenario, i: usize, t: f64) -> Result<AugmentedNode> {
    let node = &s.nodes[i];
    let n = s.n();
    let nt = node.tracker.dim();
    let (a, b) = s.plant.eval(t)?;
    let m = b.ncols();
    let nf = node.tracker.n_f;
    let f = &node.injection;

    let mut big_a = Mat::zeros(n + nt, n + nt);
    big_a.view_mut((0, 0), (n, n)).copy_from(&a);
    big_a
        .view_mut((0, n), (n, nt))
        .copy_from(&-(f * &node.tracker.upsilon));
    big_a
        .view_mut((n, n), (nt, nt))
        .copy_from(&node.tracker.omega);

    let mut big_b = Mat::zeros(n + nt, m + nf);
    big_b.view_mut((0, 0), (n, m)).copy_from(&b);
    big_b.view_mut((0, m), (n, nf)).copy_from(f);
    big_b
        .view_mut((n, m), (nt, nf))
        .copy_from(&node.tracker.gamma);

    let (rows, widths) = output_rows(s, i, t);
    let mut big_c = Mat::zeros(rows.nrows(), n + nt);
    big_c.view_mut((0, 0), rows.shape()).copy_from(&rows);

    let d = noise_map(s, i, t)?;
    let e = &d * d.transpose();
    check_e(&e, i, t)?;
    Ok(AugmentedNode {
        a: big_a,
        b: big_b,
        c: big_c,
        d,
        e,
        layout: GainLayout {
            n_state: n,
            n_tracker: nt,
            outputs: widths,
        },
    })
}

/// The same node without the tracker block, used for the baseline observer.
pub fn assemble_baseline(s: &Scenario, i: usize, t: f64) -> Result<AugmentedNode> {
    let (a, b) = s.plant.eval(t)?;
    let (c, widths) = output_rows(s, i, t);
    let d = noise_map(s, i, t)?;
    let e = &d * d.transpose();
    check_e(&e, i, t)?;
    Ok(AugmentedNode {
        a,
        b,
        c,
        d,
        e,
        layout: GainLayout {
            n_state: s.n(),
            n_tracker: 0,
            outputs: widths,
        },
    })
}

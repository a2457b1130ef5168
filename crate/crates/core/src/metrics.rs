//! Post-processing of simulated trajectories: attack tracking, local
//! H-infinity attenuation, exponential decay and threshold detection.
//!
//! All integrals are finite-horizon trapezoidal sums on the simulation grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, weighted_sq, Mat, Vector};
use crate::model::Scenario;
use crate::runtime::{stream_attack, SimResult};
use crate::signals::trapezoid;
use crate::synthesis::GainSchedule;

const MIN_STEPS: usize = 20;
/// Share of the horizon over which the tail fraction is measured.
const TAIL_WINDOW: f64 = 0.10;
/// Share of the horizon averaged for the settled value.
const SETTLE_WINDOW: f64 = 0.05;
const TAIL_LIMIT: f64 = 0.01;
const DECAY_FLOOR: f64 = 1e-300;
const THRESHOLD_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    /// `int_0^T |phi - f|^2 dt`
    pub integral: f64,
    /// Share of the integral accumulated over the last 10% of the horizon.
    pub tail_fraction: f64,
    /// Mean of `phi` over the last 5% of the horizon.
    pub settled: Vec<f64>,
    pub settled_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HinfReport {
    /// `int (z'Rz + delta' R_check delta) dt`
    pub lhs: f64,
    /// `gamma^2 (|lambda_0|_X^2 + int |d|^2 dt)`
    pub rhs: f64,
    /// Initial-condition part of `rhs / gamma^2`.
    pub initial: f64,
    /// Disturbance-energy part of `rhs / gamma^2`.
    pub energy: f64,
    pub ratio: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub c: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// First crossing of the threshold that was then held for the dwell time.
    pub onset: f64,
    /// Time the dwell requirement was met.
    pub confirmed: f64,
    /// Time the output fell back below the threshold, if it did.
    pub end: Option<f64>,
}

/// Per-node entry of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub node: usize,
    pub tracking: TrackingReport,
    pub hinf: HinfReport,
    pub decay: DecayFit,
    pub detections: Vec<Detection>,
}

fn grid_step(times: &[f64]) -> Result<f64> {
    if times.len() < MIN_STEPS + 1 {
        return Err(Error::InsufficientData(format!(
            "{} samples, need at least {}",
            times.len(),
            MIN_STEPS + 1
        )));
    }
    Ok((times[times.len() - 1] - times[0]) / (times.len() - 1) as f64)
}

/// First index of the trailing window covering `share` of the horizon.
fn window_start(times: &[f64], share: f64) -> usize {
    let t_end = times[times.len() - 1];
    let cut = t_end - share * (t_end - times[0]);
    times
        .partition_point(|&t| t < cut - 1e-9 * t_end.abs().max(1.0))
        .min(times.len() - 2)
}

/// Running trapezoidal integral of `|phi - f|^2`, same length as the input.
pub fn running_tracking_integral(phi: &[Vector], f: &[Vector], h: f64) -> Vec<f64> {
    let sq: Vec<f64> = phi
        .iter()
        .zip(f)
        .map(|(p, q)| (p - q).norm_squared())
        .collect();
    let mut out = Vec::with_capacity(sq.len());
    let mut acc = 0.0;
    for k in 0..sq.len() {
        if k > 0 {
            acc += 0.5 * h * (sq[k - 1] + sq[k]);
        }
        out.push(acc);
    }
    out
}

pub fn tracking_from_series(times: &[f64], phi: &[Vector], f: &[Vector]) -> Result<TrackingReport> {
    let h = grid_step(times)?;
    if phi.len() != times.len() || f.len() != times.len() {
        return Err(Error::Dimension(
            "series and time grid differ in length".into(),
        ));
    }
    let running = running_tracking_integral(phi, f, h);
    let integral = *running.last().unwrap();
    let tail_start = window_start(times, TAIL_WINDOW);
    let tail = integral - running[tail_start];
    let tail_fraction = if integral > 0.0 { tail / integral } else { 0.0 };

    let settle_start = window_start(times, SETTLE_WINDOW);
    let window = &phi[settle_start..];
    let mut mean = Vector::zeros(phi[0].len());
    for p in window {
        mean += p;
    }
    mean /= window.len() as f64;

    Ok(TrackingReport {
        integral,
        tail_fraction,
        settled_norm: mean.norm(),
        settled: mean.iter().copied().collect(),
        converged: tail_fraction < TAIL_LIMIT,
    })
}

pub fn tracking_error(res: &SimResult, i: usize) -> Result<TrackingReport> {
    let node = node_trace(res, i)?;
    tracking_from_series(&res.times, &node.phi, &node.f)
}

fn node_trace(res: &SimResult, i: usize) -> Result<&crate::runtime::NodeTrace> {
    res.nodes
        .get(i)
        .ok_or_else(|| Error::Parameter(format!("no node {i} in result")))
}

/// Tracker state `eps_i` of the attack model `eps' = (Omega + Gamma Upsilon) eps - Gamma f`,
/// `eps(0) = 0`, integrated offline on the simulation grid. The attack is
/// resampled at RK4 stage times exactly as the simulator does.
pub fn reconstruct_tracker(res: &SimResult, s: &Scenario, i: usize) -> Result<Vec<Vector>> {
    let node = &s.nodes[i];
    let dim = node.tracker.dim();
    let Some(attack) = &node.attack else {
        return Ok(vec![Vector::zeros(dim); res.times.len()]);
    };
    let closed = node.tracker.closed_loop();
    let g = &node.tracker.gamma;
    let stream = stream_attack(&s.topology, i);
    let f_at = |t: f64| attack.sample(node.tracker.n_f, t, res.seed, stream);
    let rhs = |eps: &Vector, f: &Vector| &closed * eps - g * f;

    let mut eps = Vector::zeros(dim);
    let mut out = Vec::with_capacity(res.times.len());
    out.push(eps.clone());
    for w in res.times.windows(2) {
        let (t, h) = (w[0], w[1] - w[0]);
        let f_mid = f_at(t + 0.5 * h)?;
        let k1 = rhs(&eps, &f_at(t)?);
        let k2 = rhs(&(&eps + &k1 * (0.5 * h)), &f_mid);
        let k3 = rhs(&(&eps + &k2 * (0.5 * h)), &f_mid);
        let k4 = rhs(&(&eps + &k3 * h), &f_at(w[1])?);
        eps += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        out.push(eps.clone());
    }
    Ok(out)
}

/// `delta_i = eps_i - eps_hat_i` and `nu_i = Upsilon eps_i - f_i` on the grid.
fn tracker_errors(res: &SimResult, s: &Scenario, i: usize) -> Result<(Vec<Vector>, Vec<Vector>)> {
    let eps = reconstruct_tracker(res, s, i)?;
    let node = &res.nodes[i];
    let ups = &s.nodes[i].tracker.upsilon;
    let delta = eps
        .iter()
        .zip(&node.eps_hat)
        .map(|(e, eh)| e - eh)
        .collect();
    let nu = eps.iter().zip(&node.f).map(|(e, f)| ups * e - f).collect();
    Ok((delta, nu))
}

/// Local attenuation check
///
/// ```text
/// int z'Rz + delta' R_check delta <= gamma^2 (|z0|_X^2 + |delta0|_Xc^2
///     + int |w|^2 + |nu|^2 + |v_i|^2 + sum_j |v_ij|^2 + |W_ij z_j|^2_{Z_ij^-1})
/// ```
pub fn hinf_ratio(res: &SimResult, s: &Scenario, i: usize) -> Result<HinfReport> {
    node_trace(res, i)?;
    let h = grid_step(&res.times)?;
    let gamma = s.design.gamma;
    let node = &s.nodes[i];
    let trace = &res.nodes[i];
    let (delta, nu) = tracker_errors(res, s, i)?;
    let topo = &s.topology;
    let z_inv: Vec<Mat> = topo
        .in_links(i)
        .iter()
        .map(|&k| {
            spd_inverse(&topo.link(k).z)
                .ok_or_else(|| Error::Parameter(format!("Z of link {k} is not positive definite")))
        })
        .collect::<Result<_>>()?;

    let steps = res.times.len();
    let mut lhs = Vec::with_capacity(steps);
    let mut energy = Vec::with_capacity(steps);
    for k in 0..steps {
        let z = res.z(i, k);
        lhs.push(weighted_sq(&z, &node.weights.r) + weighted_sq(&delta[k], &node.weights.r_check));
        let mut d = res.w[k].norm_squared() + nu[k].norm_squared() + trace.v[k].norm_squared();
        for ((lt, &link), zi) in trace.links.iter().zip(topo.in_links(i)).zip(&z_inv) {
            let wz = &topo.link(link).w * res.z(lt.from, k);
            d += lt.v[k].norm_squared() + weighted_sq(&wz, zi);
        }
        energy.push(d);
    }
    let lhs = trapezoid(&lhs, h);
    let energy = trapezoid(&energy, h);
    let initial =
        weighted_sq(&res.z(i, 0), &node.weights.x) + weighted_sq(&delta[0], &node.weights.x_check);
    let rhs = gamma * gamma * (initial + energy);
    let ratio = if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(HinfReport {
        lhs,
        rhs,
        initial,
        energy,
        ratio,
        satisfied: ratio <= 1.0,
    })
}

/// Least-squares fit of `log |lambda(t)| = log c - rate t` over the second
/// half of the series. A series that reaches exactly zero is fitted on the
/// prefix before the first zero.
pub fn decay_fit(series: &[f64], times: &[f64]) -> Result<DecayFit> {
    if series.len() != times.len() {
        return Err(Error::Dimension(
            "series and time grid differ in length".into(),
        ));
    }
    let end = series
        .iter()
        .position(|&v| v == 0.0)
        .unwrap_or(series.len());
    if end < 2 {
        return Err(Error::InsufficientData(
            "decay fit needs two nonzero samples".into(),
        ));
    }
    let start = end / 2;
    let (ts, ys) = (&times[start..end], &series[start..end]);
    let logs: Vec<f64> = ys.iter().map(|v| v.abs().max(DECAY_FLOOR).ln()).collect();
    let n = ts.len() as f64;
    let t_mean = ts.iter().sum::<f64>() / n;
    let l_mean = logs.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (t, l) in ts.iter().zip(&logs) {
        sxy += (t - t_mean) * (l - l_mean);
        sxx += (t - t_mean) * (t - t_mean);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Ok(DecayFit {
        c: (l_mean - slope * t_mean).exp(),
        rate: -slope,
    })
}

/// `|(z_i, delta_i)|` on the grid.
pub fn node_error_norms(res: &SimResult, s: &Scenario, i: usize) -> Result<Vec<f64>> {
    let (delta, _) = tracker_errors(res, s, i)?;
    Ok((0..res.times.len())
        .map(|k| (res.z(i, k).norm_squared() + delta[k].norm_squared()).sqrt())
        .collect())
}

/// `|(z, delta)|` stacked over all nodes.
pub fn network_error_norms(res: &SimResult, s: &Scenario) -> Result<Vec<f64>> {
    let mut sq = vec![0.0; res.times.len()];
    for i in 0..s.n_nodes() {
        for (acc, v) in sq.iter_mut().zip(node_error_norms(res, s, i)?) {
            *acc += v * v;
        }
    }
    Ok(sq.into_iter().map(f64::sqrt).collect())
}

/// Events where `|phi|` stays above `threshold` for at least `dwell` seconds.
pub fn detect(times: &[f64], norms: &[f64], threshold: f64, dwell: f64) -> Result<Vec<Detection>> {
    if !(threshold > 0.0) || !(dwell > 0.0) {
        return Err(Error::Parameter(
            "detection needs threshold > 0 and dwell > 0".into(),
        ));
    }
    if times.len() != norms.len() {
        return Err(Error::Dimension(
            "series and time grid differ in length".into(),
        ));
    }
    let mut events = Vec::new();
    let mut above_since: Option<f64> = None;
    let mut open: Option<Detection> = None;
    for (&t, &v) in times.iter().zip(norms) {
        if v > threshold {
            let since = *above_since.get_or_insert(t);
            if open.is_none() && t - since >= dwell - 1e-12 {
                open = Some(Detection {
                    onset: since,
                    confirmed: t,
                    end: None,
                });
            }
        } else {
            above_since = None;
            if let Some(mut ev) = open.take() {
                ev.end = Some(t);
                events.push(ev);
            }
        }
    }
    events.extend(open);
    Ok(events)
}

/// `max(3 * p95(|phi|), floor)` from a disturbance-only run.
pub fn calibrate_threshold(norms: &[f64]) -> Result<f64> {
    if norms.is_empty() {
        return Err(Error::InsufficientData(
            "threshold calibration on an empty series".into(),
        ));
    }
    let mut sorted = norms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = 0.95 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let p95 = sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64);
    Ok((3.0 * p95).max(THRESHOLD_FLOOR))
}

/// Alarm settings of one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alarm {
    pub threshold: f64,
    /// Events are only searched for from this time on.
    pub burn_in: f64,
}

/// Alarm settings from two attack-free runs. `noise` comes from a run started
/// with exact estimates, so only the disturbances drive it, and sets the
/// threshold. `transient` comes from the actual initial estimates; the
/// burn-in ends after its last excursion above the threshold.
pub fn calibrate_alarm(times: &[f64], noise: &[f64], transient: &[f64]) -> Result<Alarm> {
    if times.len() != noise.len() || times.len() != transient.len() {
        return Err(Error::Dimension(
            "series and time grid differ in length".into(),
        ));
    }
    let threshold = calibrate_threshold(noise)?;
    let burn_in = transient
        .iter()
        .rposition(|&v| v > threshold)
        .map_or(0.0, |k| times[(k + 1).min(times.len() - 1)]);
    Ok(Alarm { threshold, burn_in })
}

/// [`detect`] restricted to `t >= alarm.burn_in`.
pub fn detect_after(
    times: &[f64],
    norms: &[f64],
    alarm: Alarm,
    dwell: f64,
) -> Result<Vec<Detection>> {
    if times.len() != norms.len() {
        return Err(Error::Dimension(
            "series and time grid differ in length".into(),
        ));
    }
    let k = times.partition_point(|&t| t < alarm.burn_in);
    detect(&times[k..], &norms[k..], alarm.threshold, dwell)
}

pub fn phi_norms(res: &SimResult, i: usize) -> Vec<f64> {
    res.nodes[i].phi.iter().map(|p| p.norm()).collect()
}

/// Outcome of comparing the simulated `z_i` against its error dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub max_relative: f64,
    /// Grid time of the largest mismatch.
    pub worst_time: f64,
    pub checked: usize,
    /// Points skipped because an exogenous input jumps there.
    pub skipped: usize,
}

/// True when the three samples around `k` look like a smooth signal rather
/// than a jump or kink.
fn smooth_at(series: &[Vector], k: usize) -> bool {
    let back = (&series[k] - &series[k - 1]).norm();
    let fwd = (&series[k + 1] - &series[k]).norm();
    (fwd - back).abs() <= 0.1 * back.max(fwd)
        || (&series[k + 1] - &series[k] * 2.0 + &series[k - 1]).norm()
            <= 1e-12 * series[k].norm().max(1.0)
}

/// Compare, at interior grid points, the fourth-order centred difference of
/// `z_i` with
///
/// ```text
/// z' = (A - L_hat C - sum K_hat W) z_i + sum K_hat W z_j - F Upsilon delta
///      + B w - L_hat D v_i - sum K_hat H v_ij + F nu
/// ```
///
/// evaluated from the recorded signals. Errors are relative to
/// `max(|z'|, rel_floor * max_t |z'|)`. Points next to a discontinuity of
/// `w`, `v_i`, `v_ij` or `f_i` are skipped since the difference quotient is
/// meaningless there.
pub fn error_dynamics_residual(
    res: &SimResult,
    s: &Scenario,
    detector: &GainSchedule,
    i: usize,
    rel_floor: f64,
) -> Result<ResidualReport> {
    let h = grid_step(&res.times)?;
    let (delta, nu) = tracker_errors(res, s, i)?;
    let node = &s.nodes[i];
    let topo = &s.topology;
    let trace = &res.nodes[i];
    let mut pairs = Vec::with_capacity(res.times.len());
    let mut skipped = 0;
    for k in 2..res.times.len() - 2 {
        let smooth = (k - 1..=k + 1).all(|m| {
            smooth_at(&res.w, m)
                && smooth_at(&trace.v, m)
                && smooth_at(&trace.f, m)
                && trace.links.iter().all(|lt| smooth_at(&lt.v, m))
        });
        if !smooth {
            skipped += 1;
            continue;
        }
        let t = res.times[k];
        let (a, b) = s.plant.eval(t)?;
        let c = node.sensor.c.eval(t);
        let d = node.sensor.d.eval(t);
        let g = detector.blocks_at(t);
        let z = res.z(i, k);
        let mut rhs = &a * &z
            - &g.l_hat * (&c * &z + &d * &trace.v[k])
            - &node.injection * (&node.tracker.upsilon * &delta[k])
            + &b * &res.w[k]
            + &node.injection * &nu[k];
        for ((kh, lt), &link) in g.k_hat.iter().zip(&trace.links).zip(topo.in_links(i)) {
            let l = topo.link(link);
            rhs -= kh * (&l.w * (&z - res.z(lt.from, k)) + &l.h * &lt.v[k]);
        }
        let fd = (res.z(i, k - 2) - res.z(i, k - 1) * 8.0 + res.z(i, k + 1) * 8.0
            - res.z(i, k + 2))
            / (12.0 * h);
        pairs.push((t, fd, rhs));
    }
    let scale = pairs.iter().map(|(_, _, r)| r.norm()).fold(0.0, f64::max);
    let floor = (rel_floor * scale).max(f64::MIN_POSITIVE);
    let (worst_time, max_relative) = pairs
        .iter()
        .map(|(t, fd, r)| (*t, (fd - r).norm() / r.norm().max(floor)))
        .fold((0.0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    Ok(ResidualReport {
        max_relative,
        worst_time,
        checked: pairs.len(),
        skipped,
    })
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub gamma: f64,
    pub seed: u64,
    /// Detection threshold and burn-in used per node.
    pub alarms: Vec<Alarm>,
    /// Decay of `|(z, delta)|` stacked over the network.
    pub network_decay: DecayFit,
    pub nodes: Vec<NodeMetrics>,
}

/// All per-node reports for one simulation.
pub fn evaluate(s: &Scenario, res: &SimResult, alarms: &[Alarm]) -> Result<MetricsReport> {
    if alarms.len() != s.n_nodes() {
        return Err(Error::Dimension(
            "one detection threshold per node required".into(),
        ));
    }
    let nodes = (0..s.n_nodes())
        .map(|i| {
            Ok(NodeMetrics {
                node: i,
                tracking: tracking_error(res, i)?,
                hinf: hinf_ratio(res, s, i)?,
                decay: decay_fit(&node_error_norms(res, s, i)?, &res.times)?,
                detections: detect_after(
                    &res.times,
                    &phi_norms(res, i),
                    alarms[i],
                    s.detection.dwell,
                )?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport {
        gamma: s.design.gamma,
        seed: res.seed,
        alarms: alarms.to_vec(),
        network_decay: decay_fit(&network_error_norms(res, s)?, &res.times)?,
        nodes,
    })
}

//! Deterministic, seedable disturbance and attack generators.
//!
//! Disturbance kinds are square integrable by construction (finite window or
//! exponential envelope). `bias_step` is a constant plus an exponentially
//! decaying transient, the canonical biasing attack.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Scalar amplitude broadcast to every component, or one value per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Amplitude {
    Scalar(f64),
    PerComponent(Vec<f64>),
}

impl Default for Amplitude {
    fn default() -> Self {
        Amplitude::Scalar(1.0)
    }
}

impl Amplitude {
    fn component(&self, k: usize) -> f64 {
        match self {
            Amplitude::Scalar(a) => *a,
            Amplitude::PerComponent(v) => v.get(k).copied().unwrap_or(0.0),
        }
    }

    fn scaled(&self, s: f64) -> Amplitude {
        match self {
            Amplitude::Scalar(a) => Amplitude::Scalar(a * s),
            Amplitude::PerComponent(v) => {
                Amplitude::PerComponent(v.iter().map(|a| a * s).collect())
            }
        }
    }
}

fn default_bucket() -> f64 {
    0.01
}

/// A signal generator; pure in `(spec, global seed, stream, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    Zero,
    /// `a e^{-decay (t - onset)} sin(frequency (t - onset))` for `t >= onset`.
    DecayingSinusoid {
        #[serde(default)]
        amplitude: Amplitude,
        frequency: f64,
        decay: f64,
        #[serde(default)]
        onset: f64,
    },
    /// Piecewise-constant uniform noise in `[-a, a]`, frozen per bucket,
    /// active on `[onset, onset + window)` and optionally decaying.
    WindowedNoise {
        #[serde(default)]
        amplitude: Amplitude,
        #[serde(default)]
        onset: f64,
        #[serde(default)]
        window: Option<f64>,
        #[serde(default)]
        decay: f64,
        #[serde(default = "default_bucket")]
        bucket: f64,
        #[serde(default)]
        seed: u64,
    },
    /// `a (1 - e^{-decay (t - onset)})` for `t >= onset`; a pure step when
    /// `decay` is absent.
    BiasStep {
        #[serde(default)]
        amplitude: Amplitude,
        onset: f64,
        #[serde(default)]
        decay: Option<f64>,
    },
    /// `a` on `[onset, onset + window)`.
    Pulse {
        #[serde(default)]
        amplitude: Amplitude,
        onset: f64,
        window: f64,
    },
}

impl SignalSpec {
    pub fn zero() -> Self {
        SignalSpec::Zero
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, SignalSpec::Zero)
    }

    /// Parameter sanity, independent of the channel the signal feeds.
    pub fn check(&self, dim: usize) -> Result<()> {
        let amp_ok = |a: &Amplitude| match a {
            Amplitude::Scalar(v) => v.is_finite(),
            Amplitude::PerComponent(v) => v.len() == dim && v.iter().all(|x| x.is_finite()),
        };
        let bad = |m: &str| Err(Error::Parameter(m.to_string()));
        match self {
            SignalSpec::Zero => Ok(()),
            SignalSpec::DecayingSinusoid {
                amplitude,
                decay,
                onset,
                ..
            } => {
                if !amp_ok(amplitude) {
                    return bad("amplitude length must match the channel dimension");
                }
                if *decay <= 0.0 {
                    return bad("decaying_sinusoid needs decay > 0");
                }
                if *onset < 0.0 {
                    return bad("onset must be >= 0");
                }
                Ok(())
            }
            SignalSpec::WindowedNoise {
                amplitude,
                onset,
                window,
                decay,
                bucket,
                ..
            } => {
                if !amp_ok(amplitude) {
                    return bad("amplitude length must match the channel dimension");
                }
                if *bucket <= 0.0 {
                    return bad("windowed_noise bucket must be > 0");
                }
                if *onset < 0.0 || *decay < 0.0 {
                    return bad("onset and decay must be >= 0");
                }
                match window {
                    Some(w) if *w <= 0.0 => bad("window must be > 0"),
                    None if *decay == 0.0 => {
                        bad("windowed_noise needs a finite window or decay > 0")
                    }
                    _ => Ok(()),
                }
            }
            SignalSpec::BiasStep {
                amplitude,
                onset,
                decay,
            } => {
                if !amp_ok(amplitude) {
                    return bad("amplitude length must match the channel dimension");
                }
                if *onset < 0.0 {
                    return bad("onset must be >= 0");
                }
                if matches!(decay, Some(d) if *d <= 0.0) {
                    return bad("bias_step decay must be > 0");
                }
                Ok(())
            }
            SignalSpec::Pulse {
                amplitude,
                onset,
                window,
            } => {
                if !amp_ok(amplitude) {
                    return bad("amplitude length must match the channel dimension");
                }
                if *onset < 0.0 || *window <= 0.0 {
                    return bad("pulse needs onset >= 0 and window > 0");
                }
                Ok(())
            }
        }
    }

    /// Whether the signal is square integrable on `[0, inf)`.
    pub fn is_square_integrable(&self) -> bool {
        !matches!(self, SignalSpec::BiasStep { .. })
    }

    /// The same signal with every amplitude multiplied by `s`.
    pub fn scaled(&self, s: f64) -> SignalSpec {
        match self {
            SignalSpec::Zero => SignalSpec::Zero,
            SignalSpec::DecayingSinusoid {
                amplitude,
                frequency,
                decay,
                onset,
            } => SignalSpec::DecayingSinusoid {
                amplitude: amplitude.scaled(s),
                frequency: *frequency,
                decay: *decay,
                onset: *onset,
            },
            SignalSpec::WindowedNoise {
                amplitude,
                onset,
                window,
                decay,
                bucket,
                seed,
            } => SignalSpec::WindowedNoise {
                amplitude: amplitude.scaled(s),
                onset: *onset,
                window: *window,
                decay: *decay,
                bucket: *bucket,
                seed: *seed,
            },
            SignalSpec::BiasStep {
                amplitude,
                onset,
                decay,
            } => SignalSpec::BiasStep {
                amplitude: amplitude.scaled(s),
                onset: *onset,
                decay: *decay,
            },
            SignalSpec::Pulse {
                amplitude,
                onset,
                window,
            } => SignalSpec::Pulse {
                amplitude: amplitude.scaled(s),
                onset: *onset,
                window: *window,
            },
        }
    }

    /// Value of the signal at `t` on a channel of dimension `dim`.
    ///
    /// `stream` identifies the channel so that independent channels sharing
    /// a global seed draw independent noise.
    pub fn sample(&self, dim: usize, t: f64, global_seed: u64, stream: u64) -> Result<Vector> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("signal sampled at t = {t}")));
        }
        let mut out = Vector::zeros(dim);
        match self {
            SignalSpec::Zero => {}
            SignalSpec::DecayingSinusoid {
                amplitude,
                frequency,
                decay,
                onset,
            } => {
                if t >= *onset {
                    let s = t - onset;
                    let v = (-decay * s).exp() * (frequency * s).sin();
                    for k in 0..dim {
                        out[k] = amplitude.component(k) * v;
                    }
                }
            }
            SignalSpec::WindowedNoise {
                amplitude,
                onset,
                window,
                decay,
                bucket,
                seed,
            } => {
                let active = t >= *onset && window.is_none_or(|w| t < onset + w);
                if active {
                    let s = t - onset;
                    let envelope = (-decay * s).exp();
                    let idx = (s / bucket).floor() as u64;
                    let mut rng = ChaCha8Rng::seed_from_u64(global_seed ^ seed.rotate_left(32));
                    rng.set_stream(stream);
                    for k in 0..dim {
                        // two 32-bit words per f64 draw
                        rng.set_word_pos(2 * (idx as u128 * dim as u128 + k as u128));
                        let u: f64 = rng.random_range(-1.0..1.0);
                        out[k] = amplitude.component(k) * envelope * u;
                    }
                }
            }
            SignalSpec::BiasStep {
                amplitude,
                onset,
                decay,
            } => {
                if t >= *onset {
                    let shape = match decay {
                        Some(d) => 1.0 - (-d * (t - onset)).exp(),
                        None => 1.0,
                    };
                    for k in 0..dim {
                        out[k] = amplitude.component(k) * shape;
                    }
                }
            }
            SignalSpec::Pulse {
                amplitude,
                onset,
                window,
            } => {
                if t >= *onset && t < onset + window {
                    for k in 0..dim {
                        out[k] = amplitude.component(k);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Trapezoidal approximation of `(int_0^T |z|^2 dt)^{1/2}` for samples on a
/// uniform grid with spacing `h`.
pub fn l2_norm_truncated(samples: &[Vector], h: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Domain("L2 norm of an empty series".into()));
    }
    let sq: Vec<f64> = samples.iter().map(|z| z.norm_squared()).collect();
    Ok(trapezoid(&sq, h).sqrt())
}

/// Trapezoidal integral of uniformly spaced scalar samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1])),
    }
}

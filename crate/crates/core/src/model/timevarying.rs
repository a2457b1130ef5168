//! Declarative time-varying matrices.
//!
//! Every entry is a constant, a finite sum of sinusoids
//! `c0 + sum_k a_k sin(w_k t + phi_k)`, or a piecewise-constant schedule
//! over a breakpoint grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinTerm {
    pub a: f64,
    pub w: f64,
    #[serde(default)]
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinSum {
    #[serde(default)]
    pub c0: f64,
    #[serde(default)]
    pub terms: Vec<SinTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    /// Ascending switching times.
    pub breaks: Vec<f64>,
    /// `breaks.len() + 1` values; `values[k]` holds on `[breaks[k-1], breaks[k])`.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum TaggedEntry {
    Const(f64),
    Sin(SinSum),
    Pwc(Schedule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum RawEntry {
    Number(f64),
    Tagged(TaggedEntry),
}

/// One scalar entry of a time-varying matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEntry", into = "RawEntry")]
pub enum Entry {
    Const(f64),
    Sin(SinSum),
    Pwc(Schedule),
}

impl TryFrom<RawEntry> for Entry {
    type Error = String;

    fn try_from(raw: RawEntry) -> std::result::Result<Self, String> {
        let e = match raw {
            RawEntry::Number(v) | RawEntry::Tagged(TaggedEntry::Const(v)) => Entry::Const(v),
            RawEntry::Tagged(TaggedEntry::Sin(s)) => Entry::Sin(s),
            RawEntry::Tagged(TaggedEntry::Pwc(p)) => {
                if p.values.len() != p.breaks.len() + 1 {
                    return Err(format!(
                        "pwc schedule needs {} values for {} breaks, got {}",
                        p.breaks.len() + 1,
                        p.breaks.len(),
                        p.values.len()
                    ));
                }
                if p.breaks.windows(2).any(|w| w[1] <= w[0]) {
                    return Err("pwc breaks must be strictly ascending".into());
                }
                Entry::Pwc(p)
            }
        };
        Ok(e)
    }
}

impl From<Entry> for RawEntry {
    fn from(e: Entry) -> Self {
        match e {
            Entry::Const(v) => RawEntry::Number(v),
            Entry::Sin(s) => RawEntry::Tagged(TaggedEntry::Sin(s)),
            Entry::Pwc(p) => RawEntry::Tagged(TaggedEntry::Pwc(p)),
        }
    }
}

impl Entry {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Entry::Const(v) => *v,
            Entry::Sin(s) => {
                s.c0 + s
                    .terms
                    .iter()
                    .map(|k| k.a * (k.w * t + k.phi).sin())
                    .sum::<f64>()
            }
            Entry::Pwc(p) => {
                let idx = p.breaks.partition_point(|&b| b <= t);
                p.values[idx]
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Entry::Const(_) => true,
            Entry::Sin(s) => s.terms.iter().all(|k| k.a == 0.0),
            Entry::Pwc(p) => p.values.windows(2).all(|w| w[0] == w[1]),
        }
    }
}

/// Row-major matrix of [`Entry`] values with fixed dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<Entry>>", into = "Vec<Vec<Entry>>")]
pub struct TvMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Entry>,
}

impl TryFrom<Vec<Vec<Entry>>> for TvMatrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<Entry>>) -> std::result::Result<Self, String> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some((k, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
            return Err(format!(
                "matrix row {k} has {} entries, expected {cols}",
                r.len()
            ));
        }
        Ok(TvMatrix {
            rows: rows.len(),
            cols,
            entries: rows.into_iter().flatten().collect(),
        })
    }
}

impl From<TvMatrix> for Vec<Vec<Entry>> {
    fn from(m: TvMatrix) -> Self {
        if m.cols == 0 {
            return vec![Vec::new(); m.rows];
        }
        m.entries.chunks(m.cols).map(<[Entry]>::to_vec).collect()
    }
}

impl TvMatrix {
    pub fn constant(m: &Mat) -> Self {
        let mut entries = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                entries.push(Entry::Const(m[(r, c)]));
            }
        }
        TvMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            entries,
        }
    }

    pub fn from_entries(rows: usize, cols: usize, entries: Vec<Entry>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Ok(TvMatrix {
            rows,
            cols,
            entries,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn is_constant(&self) -> bool {
        self.entries.iter().all(Entry::is_constant)
    }

    pub fn eval(&self, t: f64) -> Mat {
        Mat::from_fn(self.rows, self.cols, |r, c| {
            self.entries[r * self.cols + c].eval(t)
        })
    }
}

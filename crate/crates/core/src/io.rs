//! Run artefacts: gain schedules and trajectories as CSV, reports as JSON.
//!
//! Floats are written in their shortest round-trip form, so reading a file
//! back reproduces the written values bit for bit. Column headers depend only
//! on the scenario's node and link structure.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::GainMode;
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::Scenario;
use crate::runtime::{LinkTrace, NodeTrace, SimResult};
use crate::synthesis::{GainLayout, GainSchedule};

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path.display().to_string(), source),
        other => Error::Schema {
            path: path.display().to_string(),
            msg: format!("{other:?}"),
        },
    }
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path)
        .map_err(|e| Error::io(format!("cannot create {}", path.display()), e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let f =
        File::open(path).map_err(|e| Error::io(format!("cannot open {}", path.display()), e))?;
    Ok(csv::Reader::from_reader(f))
}

fn check_header(path: &Path, rdr: &mut csv::Reader<File>, want: &[String]) -> Result<()> {
    let got = rdr.headers().map_err(|e| csv_err(path, e))?;
    if got.len() != want.len() || got.iter().zip(want).any(|(a, b)| a != b) {
        let first_bad = got
            .iter()
            .zip(want)
            .position(|(a, b)| a != b)
            .unwrap_or(got.len().min(want.len()));
        return Err(Error::Schema {
            path: path.display().to_string(),
            msg: format!(
                "header does not match the scenario ({} columns, expected {}; first difference at column {first_bad})",
                got.len(),
                want.len()
            ),
        });
    }
    Ok(())
}

fn read_rows(path: &Path, rdr: &mut csv::Reader<File>, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != width {
            return Err(Error::Schema {
                path: format!("{}:{}", path.display(), line + 2),
                msg: format!("{} fields, expected {width}", rec.len()),
            });
        }
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Schema {
                    path: format!("{}:{}", path.display(), line + 2),
                    msg: format!("not a number: {f:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    let mut buf = Vec::with_capacity(header.len());
    for row in rows {
        buf.clear();
        buf.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&buf).map_err(|e| csv_err(path, e))?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("cannot write {}", path.display()), e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(format!("cannot write {}", path.display()), e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("cannot read {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

// ---- gain schedules ----

fn matrix_columns(out: &mut Vec<String>, prefix: &str, rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            out.push(format!("{prefix}[{r}][{c}]"));
        }
    }
}

/// `t`, then the stacked detector gain `node{i}.L[r][c]`, then the baseline
/// observer gain `node{i}.L0[r][c]`, both row-major.
pub fn gains_header(i: usize, detector: &GainLayout, baseline: &GainLayout) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    matrix_columns(
        &mut h,
        &format!("node{i}.L"),
        detector.rows(),
        detector.cols(),
    );
    matrix_columns(
        &mut h,
        &format!("node{i}.L0"),
        baseline.rows(),
        baseline.cols(),
    );
    h
}

fn push_row_major(row: &mut Vec<f64>, m: &Mat) {
    for r in 0..m.nrows() {
        row.extend(m.row(r).iter());
    }
}

/// One row per detector grid time; the baseline is evaluated on that grid.
pub fn write_gains(
    path: &Path,
    i: usize,
    detector: &GainSchedule,
    baseline: &GainSchedule,
) -> Result<()> {
    let header = gains_header(i, &detector.layout, &baseline.layout);
    let rows = detector.times.iter().zip(&detector.gains).map(|(&t, g)| {
        let mut row = Vec::with_capacity(header.len());
        row.push(t);
        push_row_major(&mut row, g);
        push_row_major(&mut row, &baseline.at(t));
        row
    });
    write_rows(path, &header, rows)
}

/// Read back `(detector, baseline)` schedules for the given layouts.
pub fn read_gains(
    path: &Path,
    i: usize,
    detector: &GainLayout,
    baseline: &GainLayout,
    mode: GainMode,
) -> Result<(GainSchedule, GainSchedule)> {
    let header = gains_header(i, detector, baseline);
    let mut rdr = open(path)?;
    check_header(path, &mut rdr, &header)?;
    let rows = read_rows(path, &mut rdr, header.len())?;
    let (dr, dc) = (detector.rows(), detector.cols());
    let (br, bc) = (baseline.rows(), baseline.cols());
    let mut times = Vec::with_capacity(rows.len());
    let mut det = Vec::with_capacity(rows.len());
    let mut base = Vec::with_capacity(rows.len());
    for row in rows {
        times.push(row[0]);
        det.push(Mat::from_row_slice(dr, dc, &row[1..1 + dr * dc]));
        base.push(Mat::from_row_slice(br, bc, &row[1 + dr * dc..]));
    }
    let schema = |e: Error| Error::Schema {
        path: path.display().to_string(),
        msg: e.to_string(),
    };
    Ok((
        GainSchedule::new(detector.clone(), times.clone(), det)
            .map_err(schema)?
            .with_mode(mode),
        GainSchedule::new(baseline.clone(), times, base)
            .map_err(schema)?
            .with_mode(mode),
    ))
}

// ---- trajectories ----

#[derive(Debug, Clone, PartialEq, Eq)]
struct LinkShape {
    from: usize,
    p: usize,
    noise: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct NodeShape {
    n_tracker: usize,
    n_f: usize,
    p: usize,
    noise: usize,
    links: Vec<LinkShape>,
}

/// Dimensions of every recorded signal, fixed by the scenario structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceShape {
    n: usize,
    m: usize,
    nodes: Vec<NodeShape>,
}

impl TraceShape {
    pub fn of(s: &Scenario) -> Self {
        let topo = &s.topology;
        TraceShape {
            n: s.n(),
            m: s.plant.m(),
            nodes: s
                .nodes
                .iter()
                .enumerate()
                .map(|(i, node)| NodeShape {
                    n_tracker: node.tracker.dim(),
                    n_f: node.tracker.n_f,
                    p: node.sensor.p(),
                    noise: node.sensor.noise_dim(),
                    links: topo
                        .in_links(i)
                        .iter()
                        .map(|&k| {
                            let l = topo.link(k);
                            LinkShape {
                                from: l.from,
                                p: l.p(),
                                noise: l.noise_dim(),
                            }
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Signal names and widths in column order.
    fn blocks(&self) -> Vec<(String, usize)> {
        let n = self.n;
        let mut b = vec![("plant.x".to_string(), n), ("plant.w".to_string(), self.m)];
        for (i, node) in self.nodes.iter().enumerate() {
            for (name, dim) in [
                ("x_hat", n),
                ("e", n),
                ("e_hat", n),
                ("eps_hat", node.n_tracker),
                ("phi", node.n_f),
                ("f", node.n_f),
                ("zeta", node.p),
                ("v", node.noise),
            ] {
                b.push((format!("node{i}.{name}"), dim));
            }
            for l in &node.links {
                b.push((format!("node{i}.zeta_from{}", l.from), l.p));
                b.push((format!("node{i}.v_from{}", l.from), l.noise));
            }
        }
        b
    }

    pub fn headers(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for (name, dim) in self.blocks() {
            h.extend((0..dim).map(|k| format!("{name}[{k}]")));
        }
        h
    }
}

fn node_signals(tr: &NodeTrace) -> [&Vec<Vector>; 8] {
    [
        &tr.x_hat,
        &tr.e,
        &tr.e_hat,
        &tr.eps_hat,
        &tr.phi,
        &tr.f,
        &tr.zeta,
        &tr.v,
    ]
}

fn node_signals_mut(tr: &mut NodeTrace) -> [&mut Vec<Vector>; 8] {
    [
        &mut tr.x_hat,
        &mut tr.e,
        &mut tr.e_hat,
        &mut tr.eps_hat,
        &mut tr.phi,
        &mut tr.f,
        &mut tr.zeta,
        &mut tr.v,
    ]
}

/// One row per grid time, columns as in [`TraceShape::headers`].
pub fn write_trajectories(path: &Path, shape: &TraceShape, res: &SimResult) -> Result<()> {
    let header = shape.headers();
    let rows = (0..res.times.len()).map(|k| {
        let mut row = Vec::with_capacity(header.len());
        row.push(res.times[k]);
        row.extend(res.x[k].iter());
        row.extend(res.w[k].iter());
        for tr in &res.nodes {
            for sig in node_signals(tr) {
                row.extend(sig[k].iter());
            }
            for lt in &tr.links {
                row.extend(lt.zeta[k].iter());
                row.extend(lt.v[k].iter());
            }
        }
        row
    });
    write_rows(path, &header, rows)
}

pub fn read_trajectories(path: &Path, shape: &TraceShape, seed: u64) -> Result<SimResult> {
    let header = shape.headers();
    let mut rdr = open(path)?;
    check_header(path, &mut rdr, &header)?;
    let rows = read_rows(path, &mut rdr, header.len())?;

    let mut res = SimResult {
        seed,
        nodes: shape
            .nodes
            .iter()
            .map(|ns| NodeTrace {
                links: ns
                    .links
                    .iter()
                    .map(|l| LinkTrace {
                        from: l.from,
                        ..Default::default()
                    })
                    .collect(),
                ..Default::default()
            })
            .collect(),
        ..Default::default()
    };
    for row in rows {
        let mut cur = 1;
        let mut take = |dim: usize| {
            let v = Vector::from_row_slice(&row[cur..cur + dim]);
            cur += dim;
            v
        };
        res.times.push(row[0]);
        res.x.push(take(shape.n));
        res.w.push(take(shape.m));
        for (tr, ns) in res.nodes.iter_mut().zip(&shape.nodes) {
            let dims = [
                shape.n,
                shape.n,
                shape.n,
                ns.n_tracker,
                ns.n_f,
                ns.n_f,
                ns.p,
                ns.noise,
            ];
            for (sig, dim) in node_signals_mut(tr).into_iter().zip(dims) {
                sig.push(take(dim));
            }
            for (lt, ls) in tr.links.iter_mut().zip(&ns.links) {
                lt.zeta.push(take(ls.p));
                lt.v.push(take(ls.noise));
            }
        }
    }
    Ok(res)
}

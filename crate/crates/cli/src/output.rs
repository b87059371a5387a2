//! Trajectory CSV files and JSON writing.
//!
//! Numbers are printed in the shortest decimal form that parses back to the
//! same `f64` (at most 17 significant digits), so files round-trip exactly.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;
use sgflow::TrajectoryF64;

use crate::error::{CliError, Result};

/// Shortest round-trip representation; exponent form outside `[1e−5, 1e16)`.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn parse_num(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

/// Row status column: the terminal status on the last row, `running` before.
pub const RUNNING: &str = "running";

pub fn csv_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("x_{i}")));
    h.extend(["f", "speed", "max_g", "norm_h", "status"].map(String::from));
    h
}

pub fn write_trajectory<W: Write>(traj: &TrajectoryF64, out: W) -> std::io::Result<()> {
    let n = traj.states.first().map_or(0, |x| x.len());
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(csv_header(n))?;
    for i in 0..traj.len() {
        let mut row = vec![fmt_num(traj.times[i])];
        row.extend(traj.states[i].iter().map(|v| fmt_num(*v)));
        row.extend([traj.f[i], traj.speed[i], traj.max_g[i], traj.norm_h[i]].map(fmt_num));
        row.push(if i + 1 == traj.len() { traj.status.as_str().to_string() } else { RUNNING.to_string() });
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn save_trajectory(traj: &TrajectoryF64, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_trajectory(traj, std::io::BufWriter::new(file)).map_err(|e| CliError::io(path, e))
}

/// Parsed trajectory CSV.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryTable {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub f: Vec<f64>,
    pub speed: Vec<f64>,
    pub max_g: Vec<f64>,
    pub norm_h: Vec<f64>,
    pub status: Vec<String>,
}

pub fn read_trajectory<R: Read>(input: R) -> std::result::Result<TrajectoryTable, String> {
    let mut r = csv::ReaderBuilder::new().from_reader(input);
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    let cols = header.len();
    if cols < 6 || &header[0] != "t" || &header[cols - 1] != "status" {
        return Err("not a trajectory file".into());
    }
    let n = cols - 6;
    let mut t = TrajectoryTable::default();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let num = |j: usize| parse_num(&rec[j]).ok_or_else(|| format!("row {}: bad number '{}'", line + 1, &rec[j]));
        t.times.push(num(0)?);
        t.states.push(DVector::from_iterator(n, (1..=n).map(|j| num(j).unwrap_or(f64::NAN))));
        if t.states.last().is_some_and(|x| x.iter().any(|v| v.is_nan())) {
            return Err(format!("row {}: bad state", line + 1));
        }
        t.f.push(num(n + 1)?);
        t.speed.push(num(n + 2)?);
        t.max_g.push(num(n + 3)?);
        t.norm_h.push(num(n + 4)?);
        t.status.push(rec[n + 5].to_string());
    }
    Ok(t)
}

pub fn load_trajectory(path: &Path) -> Result<TrajectoryTable> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_trajectory(file).map_err(|e| CliError::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
}

pub fn to_json<S: Serialize>(value: &S) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn write_json<S: Serialize>(value: &S, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(value)).map_err(|e| CliError::io(path, e))
}

/// Writes to `path`, or to stdout when `path` is `None`.
pub fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

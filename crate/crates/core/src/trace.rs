//! Trace files: one CSV row per round and JSON checkpoints with full states.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::barycenter::BarycenterTelemetry;
use crate::consensus::{ConsensusState, MetricsRecord};
use crate::error::{Error, Result};
use crate::measures::Measure;

/// Reals are written with 17 significant digits, which round-trips `f64`.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn csv_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("v2_{i}")));
    h.extend(["v2_max", "diameter", "max_jensen_residual"].map(String::from));
    h
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub v2: Vec<f64>,
    pub v2_max: f64,
    pub diameter: f64,
    pub max_jensen_residual: f64,
}

impl From<&MetricsRecord> for TraceRow {
    fn from(m: &MetricsRecord) -> Self {
        Self {
            t: m.t,
            v2: m.v2.clone(),
            v2_max: m.v2_max,
            diameter: m.diameter,
            max_jensen_residual: m.max_jensen_residual(),
        }
    }
}

pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
    n: usize,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W, n: usize) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(csv_header(n))?;
        Ok(Self { inner, n })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        self.write_row(&TraceRow::from(record))
    }

    pub fn write_row(&mut self, row: &TraceRow) -> Result<()> {
        if row.v2.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: row.v2.len(),
            });
        }
        let mut fields = vec![row.t.to_string()];
        fields.extend(row.v2.iter().map(|&v| format_real(v)));
        fields.extend([row.v2_max, row.diameter, row.max_jensen_residual].map(format_real));
        self.inner.write_record(fields)?;
        // Flushed per row so a crashed run still leaves a readable prefix.
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

/// Parses a trace CSV, checking the header against the column count.
pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    if header.len() < 6 {
        return Err(Error::Parameter(format!("{}: trace header is too short", path.display())));
    }
    let n = header.len() - 4;
    if header != csv_header(n) {
        return Err(Error::Parameter(format!(
            "{}: unexpected trace header `{}`",
            path.display(),
            header.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Parameter(format!("{}: row {}: bad {what}", path.display(), line + 1));
        let t = rec[0].parse::<usize>().map_err(|_| bad("round index"))?;
        let mut vals = Vec::with_capacity(n + 3);
        for k in 1..rec.len() {
            vals.push(rec[k].parse::<f64>().map_err(|_| bad(&header[k]))?);
        }
        if vals.len() != n + 3 {
            return Err(bad("column count"));
        }
        rows.push(TraceRow {
            t,
            v2: vals[..n].to_vec(),
            v2_max: vals[n],
            diameter: vals[n + 1],
            max_jensen_residual: vals[n + 2],
        });
    }
    Ok(rows)
}

/// Full state and metrics at one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: usize,
    pub agents: Vec<Measure>,
    pub v2: Vec<f64>,
    pub v2_max: f64,
    pub diameter: f64,
    pub w2_pairwise: Vec<Vec<f64>>,
    pub jensen_residuals: Vec<f64>,
    pub telemetry: BarycenterTelemetry,
}

impl Checkpoint {
    pub fn new(state: &ConsensusState, record: &MetricsRecord) -> Self {
        let w = &record.w2_pairwise;
        Self {
            t: state.t,
            agents: state.agents.clone(),
            v2: record.v2.clone(),
            v2_max: record.v2_max,
            diameter: record.diameter,
            w2_pairwise: (0..w.nrows()).map(|i| w.row(i).iter().copied().collect()).collect(),
            jensen_residuals: record.jensen_residuals.clone(),
            telemetry: record.telemetry,
        }
    }

    pub fn state(&self) -> ConsensusState {
        ConsensusState {
            t: self.t,
            agents: self.agents.clone(),
        }
    }
}

pub fn checkpoint_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("checkpoint_{t:06}.json"))
}

pub fn write_checkpoint(dir: &Path, state: &ConsensusState, record: &MetricsRecord) -> Result<PathBuf> {
    let path = checkpoint_path(dir, state.t);
    let text = serde_json::to_string_pretty(&Checkpoint::new(state, record))?;
    fs::write(&path, text + "\n")?;
    Ok(path)
}

/// Every `checkpoint_*.json` in `dir`, sorted by round.
pub fn read_checkpoints(dir: &Path) -> Result<Vec<Checkpoint>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let is_checkpoint = path
            .file_name()
            .and_then(|f| f.to_str())
            .is_some_and(|f| f.starts_with("checkpoint_") && f.ends_with(".json"));
        if is_checkpoint {
            let cp: Checkpoint = serde_json::from_str(&fs::read_to_string(&path)?)?;
            out.push(cp);
        }
    }
    out.sort_by_key(|c| c.t);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::{metrics, ConsensusState};
    use crate::measures::{DiscreteMeasure, GaussianMeasure};
    use crate::transport::SolverConfig;
    use nalgebra::{DMatrix, DVector};

    fn state() -> ConsensusState {
        let a = GaussianMeasure::new(DVector::from_vec(vec![0.1, 1.0 / 3.0]), DMatrix::identity(2, 2) * 0.7).unwrap();
        let b = GaussianMeasure::new(DVector::from_vec(vec![-2.0, 0.5]), DMatrix::identity(2, 2)).unwrap();
        ConsensusState::new(vec![a.into(), b.into()]).unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = state();
        let rec = metrics(&s, &SolverConfig::default(), vec![0.0, -1e-17], Default::default()).unwrap();
        let mut w = TraceWriter::new(Vec::new(), 2).unwrap();
        w.write(&rec).unwrap();
        let bytes = w.into_inner().unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("t,v2_1,v2_2,v2_max,diameter,max_jensen_residual\n0,"));
        let row = text.lines().nth(1).unwrap();
        assert!(row.split(',').skip(1).all(|f| f.contains('e')));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        fs::write(&path, &text).unwrap();
        let rows = read_trace(&path).unwrap();
        assert_eq!(rows, vec![TraceRow::from(&rec)]);
    }

    #[test]
    fn header_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        fs::write(&path, "t,a,b,c,d,e\n").unwrap();
        assert!(read_trace(&path).is_err());
    }

    #[test]
    fn checkpoints_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = state();
        let rec = metrics(&s, &SolverConfig::default(), vec![0.0; 2], Default::default()).unwrap();
        write_checkpoint(dir.path(), &s, &rec).unwrap();
        s.t = 12;
        s.agents[0] = DiscreteMeasure::dirac(&[0.0, 0.0]).unwrap().into();
        s.agents[1] = DiscreteMeasure::dirac(&[1.0, 0.25]).unwrap().into();
        let rec2 = metrics(&s, &SolverConfig::default(), vec![0.0; 2], Default::default()).unwrap();
        write_checkpoint(dir.path(), &s, &rec2).unwrap();
        fs::write(dir.path().join("other.json"), "{}").unwrap();

        let cps = read_checkpoints(dir.path()).unwrap();
        assert_eq!(cps.len(), 2);
        assert_eq!(cps[0].t, 0);
        assert_eq!(cps[1].state(), s);
        assert_eq!(cps[1].diameter, rec2.diameter);
    }
}

//! Per-iteration rows, run summaries and their CSV/JSON encodings.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

pub const CSV_HEADER: &str = "iter,loss,grad_norm,min_eig,elapsed_ms";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
    /// Empty for Euclidean problems.
    pub min_eig: Option<f64>,
    /// Empty unless timing was requested, so default output is reproducible.
    pub elapsed_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Invariant {
    pub name: String,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary<C> {
    pub config: C,
    pub iterations: usize,
    pub final_loss: Option<f64>,
    pub metrics: BTreeMap<String, f64>,
    pub invariants: Vec<Invariant>,
    /// Set when the run stopped early, e.g. on a non-finite loss.
    pub error: Option<String>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord<C> {
    pub rows: Vec<Row>,
    pub summary: Summary<C>,
}

impl<C> RunRecord<C> {
    pub fn passed(&self) -> bool {
        self.summary.passed
    }
}

pub(crate) struct Recorder {
    rows: Vec<Row>,
    metrics: BTreeMap<String, f64>,
    invariants: Vec<Invariant>,
    start: Option<std::time::Instant>,
}

impl Recorder {
    pub(crate) fn new(timing: bool) -> Self {
        Recorder { rows: Vec::new(), metrics: BTreeMap::new(), invariants: Vec::new(), start: timing.then(std::time::Instant::now) }
    }

    pub(crate) fn row(&mut self, iter: usize, loss: f64, grad_norm: f64, min_eig: Option<f64>) {
        let elapsed_ms = self.start.map(|s| s.elapsed().as_secs_f64() * 1e3);
        self.rows.push(Row { iter, loss, grad_norm, min_eig, elapsed_ms });
    }

    pub(crate) fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    pub(crate) fn invariant(&mut self, name: &str, passed: bool) {
        self.invariants.push(Invariant { name: name.into(), passed });
    }

    pub(crate) fn finish<C>(mut self, config: C, error: Option<String>) -> RunRecord<C> {
        let finite = self
            .rows
            .iter()
            .all(|r| r.loss.is_finite() && r.grad_norm.is_finite() && r.min_eig.is_none_or(f64::is_finite));
        self.invariants.insert(0, Invariant { name: "finite".into(), passed: finite });
        let passed = error.is_none() && self.invariants.iter().all(|i| i.passed);
        let summary = Summary {
            config,
            iterations: self.rows.last().map_or(0, |r| r.iter),
            final_loss: self.rows.last().map(|r| r.loss),
            metrics: self.metrics,
            invariants: self.invariants,
            error,
            passed,
        };
        RunRecord { rows: self.rows, summary }
    }
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[Row]) -> anyhow::Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf)?)
}

/// Writes `<out>` as CSV and the summary next to it with a `.json` extension,
/// unless an explicit summary path is given.
pub fn write_outputs<C: Serialize>(record: &RunRecord<C>, out: &Path, summary: Option<&Path>) -> anyhow::Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_csv(&record.rows, std::fs::File::create(out)?)?;
    let json_path = summary.map(Path::to_path_buf).unwrap_or_else(|| out.with_extension("json"));
    std::fs::write(json_path, serde_json::to_string_pretty(&record.summary)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_fixed_header_and_empty_optionals() {
        let rows = vec![
            Row { iter: 0, loss: 1.5, grad_norm: 2.0, min_eig: None, elapsed_ms: None },
            Row { iter: 1, loss: 0.25, grad_norm: 0.5, min_eig: Some(0.125), elapsed_ms: None },
        ];
        let s = csv_string(&rows).unwrap();
        assert_eq!(s, "iter,loss,grad_norm,min_eig,elapsed_ms\n0,1.5,2.0,,\n1,0.25,0.5,0.125,\n");
    }

    #[test]
    fn non_finite_rows_fail_the_summary() {
        let mut r = Recorder::new(false);
        r.row(0, f64::NAN, 1.0, None);
        let rec = r.finish((), None);
        assert!(!rec.passed());
        assert_eq!(rec.summary.invariants[0].name, "finite");
    }
}

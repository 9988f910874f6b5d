//! Auxiliary × target transfer matrix: one meta-training run per auxiliary
//! language, each cell the zero-shot change on a target over the baseline.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metatrain::Mode;

use super::config::ExperimentConfig;
use super::run::{self, Prepared, RunResults};

pub const MATRIX_CSV: &str = "matrix.csv";
pub const MATRIX_JSON: &str = "matrix.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsMatrix {
    pub metric: String,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    /// `cells[r][c]`; `None` where the auxiliary language is the target.
    pub cells: Vec<Vec<Option<f64>>>,
    /// Baseline metric per target.
    pub baseline: BTreeMap<String, f64>,
    /// Zero-shot metric per auxiliary row and target.
    pub runs: BTreeMap<String, BTreeMap<String, f64>>,
}

impl ResultsMatrix {
    /// Builds cells as `run − baseline` from per-row results.
    pub fn from_runs(metric: &str, aux: &[String], targets: &[String], results: &[RunResults]) -> Result<Self> {
        let lookup = |r: &RunResults, t: &str, base: bool| -> Result<f64> {
            let map = if base { &r.baseline_zero_shot } else { &r.zero_shot };
            map.get(t).map(|m| m.primary()).ok_or_else(|| Error::InvalidInput(format!("no results for `{t}`")))
        };
        let first = results.first().ok_or_else(|| Error::InvalidInput("sweep produced no runs".into()))?;
        let baseline: BTreeMap<String, f64> =
            targets.iter().map(|t| Ok((t.clone(), lookup(first, t, true)?))).collect::<Result<_>>()?;
        let mut runs = BTreeMap::new();
        let mut cells = Vec::new();
        for (a, r) in aux.iter().zip(results) {
            let mut row = Vec::new();
            let mut metrics = BTreeMap::new();
            for t in targets {
                let v = lookup(r, t, false)?;
                metrics.insert(t.clone(), v);
                row.push(if a == t { None } else { Some(v - baseline[t]) });
            }
            runs.insert(a.clone(), metrics);
            cells.push(row);
        }
        Ok(ResultsMatrix { metric: metric.into(), rows: aux.to_vec(), cols: targets.to_vec(), cells, baseline, runs })
    }

    /// Mean of the applicable cells in each row.
    pub fn row_means(&self) -> Vec<Option<f64>> {
        self.cells
            .iter()
            .map(|row| {
                let vals: Vec<f64> = row.iter().flatten().copied().collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("aux");
        for c in &self.cols {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (r, row) in self.rows.iter().zip(&self.cells) {
            out.push_str(r);
            for cell in row {
                match cell {
                    Some(v) => write!(out, ",{v}").expect("string write"),
                    None => out.push_str(",n/a"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// One meta-training run per auxiliary language, sharing data, finetuning
/// and baseline. Each run writes under `out/<aux>` when `out` is given.
pub fn sweep_matrix(
    config: &ExperimentConfig,
    aux: &[String],
    targets: &[String],
    out: Option<&Path>,
) -> Result<ResultsMatrix> {
    if aux.is_empty() || targets.is_empty() {
        return Err(Error::config("sweep", "need at least one auxiliary and one target language"));
    }
    let mut base = config.clone();
    base.family.targets = targets.to_vec();
    base.train.mode = Mode::XlaMaml;
    let prepared: Prepared = run::prepare(&base)?;
    let mut results = Vec::with_capacity(aux.len());
    for a in aux {
        let mut cfg = base.clone();
        cfg.name = format!("{}-{a}", config.name);
        cfg.train.sampler.query_pool = vec![a.clone()];
        cfg.validate()?;
        let dir = out.map(|o| o.join(a));
        log::info!("sweep: auxiliary language {a}");
        results.push(run::run_prepared(&cfg, &prepared, dir.as_deref())?.1);
    }
    let metric = results.first().map_or("accuracy".to_string(), |r| r.metric.clone());
    let matrix = ResultsMatrix::from_runs(&metric, aux, targets, &results)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join(MATRIX_CSV);
        fs::write(&csv, matrix.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let json = dir.join(MATRIX_JSON);
        fs::write(&json, serde_json::to_string_pretty(&matrix)?).map_err(|e| Error::io(&json, e))?;
    }
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metatrain::LanguageMetrics;

    fn acc(v: f64) -> LanguageMetrics {
        LanguageMetrics { n: 10, accuracy: Some(v), em: None, f1: None }
    }

    fn result(zero: &[(&str, f64)], base: &[(&str, f64)]) -> RunResults {
        RunResults {
            name: "x".into(),
            mode: Mode::XlaMaml,
            seed: 0,
            metric: "accuracy".into(),
            iterations: 1,
            targets: vec![],
            zero_shot: zero.iter().map(|(k, v)| (k.to_string(), acc(*v))).collect(),
            baseline_zero_shot: base.iter().map(|(k, v)| (k.to_string(), acc(*v))).collect(),
            few_shot: None,
            target_mean: 0.0,
            baseline_target_mean: 0.0,
        }
    }

    #[test]
    fn diagonal_is_not_applicable() {
        let base = [("hi", 0.5), ("de", 0.25)];
        let runs = [result(&[("hi", 0.75), ("de", 0.5)], &base), result(&[("hi", 0.5), ("de", 0.5)], &base)];
        let aux = vec!["hi".to_string(), "de".to_string()];
        let m = ResultsMatrix::from_runs("accuracy", &aux, &aux, &runs).unwrap();
        assert_eq!(m.cells, vec![vec![None, Some(0.25)], vec![Some(0.0), None]]);
        assert_eq!(m.to_csv(), "aux,hi,de\nhi,n/a,0.25\nde,0,n/a\n");
        assert_eq!(m.row_means(), vec![Some(0.25), Some(0.0)]);
    }
}

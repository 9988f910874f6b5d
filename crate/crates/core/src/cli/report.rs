//! Human-readable summaries of run and sweep directories. Read-only.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::run::{RunResults, CONFIG_ECHO, METRICS, RESULTS};
use super::sweep::{ResultsMatrix, MATRIX_JSON};

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub language: String,
    pub baseline: f64,
    pub run: f64,
    pub few_shot: Option<f64>,
}

impl ReportRow {
    pub fn delta(&self) -> f64 {
        self.run - self.baseline
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub text: String,
}

fn read(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|e| Error::io(path, e))
}

/// The results object on the last line of `metrics.jsonl`.
pub fn final_results(metrics_jsonl: &str) -> Result<RunResults> {
    let last = metrics_jsonl
        .lines()
        .rev()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| Error::InvalidInput("metrics.jsonl is empty".into()))?;
    let value: serde_json::Value = serde_json::from_str(last)?;
    let fin =
        value.get("final").ok_or_else(|| Error::InvalidInput("metrics.jsonl has no final results line".into()))?;
    Ok(serde_json::from_value(fin.clone())?)
}

/// Summarises a run directory (or a sweep directory holding `matrix.json`).
pub fn report(dir: &Path) -> Result<Report> {
    if dir.join(MATRIX_JSON).is_file() {
        return report_matrix(dir);
    }
    let expected = [CONFIG_ECHO, METRICS, RESULTS];
    let missing: Vec<&str> = expected.iter().copied().filter(|f| !dir.join(f).is_file()).collect();
    if !missing.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} is not a run directory: missing {} (expected {}, or {} for a sweep)",
            dir.display(),
            missing.join(", "),
            expected.join(", "),
            MATRIX_JSON
        )));
    }
    let echo = read(dir, CONFIG_ECHO)?;
    let results = final_results(&read(dir, METRICS)?)?;
    let mut rows = Vec::new();
    for (lang, m) in &results.zero_shot {
        let base = results
            .baseline_zero_shot
            .get(lang)
            .ok_or_else(|| Error::InvalidInput(format!("no baseline for `{lang}`")))?;
        rows.push(ReportRow {
            language: lang.clone(),
            baseline: base.primary(),
            run: m.primary(),
            few_shot: results.few_shot.as_ref().and_then(|f| f.get(lang)).map(|m| m.primary()),
        });
    }

    let mut text = String::new();
    writeln!(
        text,
        "run: {}  mode: {}  seed: {}  meta iterations: {}",
        results.name, results.mode, results.seed, results.iterations
    )
    .expect("string write");
    for line in echo.lines().filter(|l| {
        l.starts_with("alpha") || l.starts_with("beta") || l.starts_with("strategy") || l.starts_with("parallel")
    }) {
        writeln!(text, "  {line}").expect("string write");
    }
    writeln!(text).expect("string write");
    let few = results.few_shot.is_some();
    write!(text, "{:<10} {:>10} {:>10} {:>10}", "language", "baseline", results.mode, "delta").expect("string write");
    if few {
        write!(text, " {:>10}", "few-shot").expect("string write");
    }
    writeln!(text, "   ({})", results.metric).expect("string write");
    for r in &rows {
        let tag = if results.targets.contains(&r.language) { " *" } else { "" };
        write!(
            text,
            "{:<10} {:>10.4} {:>10.4} {:>+10.4}",
            format!("{}{tag}", r.language),
            r.baseline,
            r.run,
            r.delta()
        )
        .expect("string write");
        if let Some(f) = r.few_shot {
            write!(text, " {f:>10.4}").expect("string write");
        }
        writeln!(text).expect("string write");
    }
    writeln!(
        text,
        "{:<10} {:>10.4} {:>10.4} {:>+10.4}",
        "targets",
        results.baseline_target_mean,
        results.target_mean,
        results.target_mean - results.baseline_target_mean
    )
    .expect("string write");
    writeln!(text, "(* target language)").expect("string write");
    Ok(Report { rows, text })
}

fn report_matrix(dir: &Path) -> Result<Report> {
    let m: ResultsMatrix = serde_json::from_str(&read(dir, MATRIX_JSON)?)?;
    let mut text = format!("{} change over baseline (rows: auxiliary, columns: target)\n\n", m.metric);
    write!(text, "{:<8}", "aux").expect("string write");
    for c in &m.cols {
        write!(text, " {c:>8}").expect("string write");
    }
    writeln!(text, " {:>8}", "mean").expect("string write");
    let mut rows = Vec::new();
    for ((r, cells), mean) in m.rows.iter().zip(&m.cells).zip(m.row_means()) {
        write!(text, "{r:<8}").expect("string write");
        for (c, cell) in m.cols.iter().zip(cells) {
            match cell {
                Some(v) => write!(text, " {v:>+8.4}").expect("string write"),
                None => write!(text, " {:>8}", "n/a").expect("string write"),
            }
            if let Some(v) = m.runs.get(r).and_then(|row| row.get(c)) {
                rows.push(ReportRow {
                    language: format!("{r}->{c}"),
                    baseline: m.baseline[c],
                    run: *v,
                    few_shot: None,
                });
            }
        }
        match mean {
            Some(v) => writeln!(text, " {v:>+8.4}").expect("string write"),
            None => writeln!(text, " {:>8}", "n/a").expect("string write"),
        }
    }
    Ok(Report { rows, text })
}

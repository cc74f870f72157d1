//! Result tables (CSV) and summary documents (JSON).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::al::RunRecord;
use super::correlation::CorrelationResult;
use crate::error::{Error, Result};

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_al_csv<W: Write>(w: W, record: &RunRecord) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let timing = record.rows.iter().any(|r| r.wall_seconds.is_some());
    let mut header: Vec<String> = ["repetition", "criterion", "step", "mmd", "gamma_hat_mean", "correct_proportion"]
        .map(String::from)
        .to_vec();
    header.extend((0..record.n_targets).map(|t| format!("gamma_hat_t{t}")));
    header.extend((0..record.n_targets).map(|t| format!("correct_t{t}")));
    if timing {
        header.push("wall_seconds".into());
    }
    out.write_record(&header).map_err(csv_err)?;
    for r in &record.rows {
        let mut rec = vec![
            r.repetition.to_string(),
            r.criterion.to_string(),
            r.step.to_string(),
            opt(r.mmd),
            r.mean_gamma_hat().to_string(),
            r.correct_proportion().to_string(),
        ];
        rec.extend(r.gamma_hat.iter().map(f64::to_string));
        rec.extend(r.correct.iter().map(|c| u8::from(*c).to_string()));
        if timing {
            rec.push(opt(r.wall_seconds));
        }
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_correlation_csv<W: Write>(w: W, result: &CorrelationResult) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["repetition", "n_train", "model", "propensity", "mmd", "gamma_hat", "gamma_observed"])
        .map_err(csv_err)?;
    for r in &result.rows {
        out.write_record([
            r.repetition.to_string(),
            r.n_train.to_string(),
            r.model.to_string(),
            r.propensity.to_string(),
            r.mmd.to_string(),
            r.gamma_hat.to_string(),
            r.gamma_observed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Write `al_results.csv` and `al_summary.json`; returns their paths.
pub fn write_al_outputs(dir: &Path, record: &RunRecord) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let table = dir.join("al_results.csv");
    write_al_csv(BufWriter::new(File::create(&table)?), record)?;
    let summary = dir.join("al_summary.json");
    write_json(
        &summary,
        &serde_json::json!({
            "kind": record.kind,
            "repetitions": record.repetitions,
            "n_queries": record.n_queries,
            "criteria": record.criteria,
            "n_targets": record.n_targets,
            "excluded": record.excluded,
            "steps": record.summary,
        }),
    )?;
    Ok(vec![table, summary])
}

/// Write `correlation.csv` and `correlation_summary.json`.
pub fn write_correlation_outputs(dir: &Path, result: &CorrelationResult) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let table = dir.join("correlation.csv");
    write_correlation_csv(BufWriter::new(File::create(&table)?), result)?;
    let summary = dir.join("correlation_summary.json");
    write_json(
        &summary,
        &serde_json::json!({
            "correlations": result.correlations,
            "excluded": result.excluded,
            "n_rows": result.rows.len(),
        }),
    )?;
    Ok(vec![table, summary])
}

use std::path::{Path, PathBuf};

use super::ExperimentResult;
use crate::error::{Error, Result};

/// Pretty JSON report; identical results give identical bytes.
pub fn write_report(result: &ExperimentResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(result).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ExperimentResult> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// `<report>.timings.json` next to the report.
pub fn timings_path(report: &Path) -> PathBuf {
    let mut s = report.as_os_str().to_owned();
    s.push(".timings.json");
    PathBuf::from(s)
}

pub fn write_timings(result: &ExperimentResult, report: impl AsRef<Path>) -> Result<PathBuf> {
    let path = timings_path(report.as_ref());
    let text = serde_json::to_string_pretty(&result.timings).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// One CSV row per fold.
pub fn write_fold_csv(result: &ExperimentResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let channels: Vec<String> = result.config.channels.iter().map(|c| c.short_name().to_string()).collect();
    let mut text = String::from(
        "dataset,channels,p,seed,fold,train_graphs,test_graphs,test_accuracy,epochs,learning_rate,validation_accuracy",
    );
    for c in &channels {
        text.push_str(&format!(",{c}_relative_frobenius,{c}_max_abs"));
    }
    text.push('\n');
    for f in &result.folds {
        let val = f
            .grid
            .iter()
            .find(|g| g.epochs == f.chosen.epochs && g.learning_rate == f.chosen.learning_rate)
            .and_then(|g| g.validation_accuracy)
            .map_or(String::new(), |v| v.to_string());
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            result.config.dataset,
            channels.join("+"),
            result.config.p,
            result.config.seed,
            f.fold,
            f.train_graphs,
            f.test_graphs,
            f.test_accuracy,
            f.chosen.epochs,
            f.chosen.learning_rate,
            val
        ));
        for a in &f.approximation {
            text.push_str(&format!(",{},{}", a.relative_frobenius, a.max_abs));
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `"<dataset> <channels>: 97.30 ± 1.42 (10 folds)"`, accuracies in percent.
pub fn summary_line(result: &ExperimentResult) -> String {
    let channels: Vec<String> = result.config.channels.iter().map(|c| c.to_string()).collect();
    format!(
        "{} {}: {:.2} ± {:.2} ({} folds)",
        result.config.dataset,
        channels.join("+"),
        100.0 * result.mean,
        100.0 * result.std,
        result.fold_accuracies.len()
    )
}

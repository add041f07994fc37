//! Run-directory plumbing: timestamped directories, the resolved-config
//! echo, and report serialization.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use bocf_core::evaluate::{ErrorReport, EvaluationOutcome};

use crate::CliError;

/// Creates `run-YYYYmmdd-HHMMSS-<sub>` under `base`, suffixing `-2`, `-3`,
/// ... when runs collide within one second.
pub fn create_run_dir(base: &Path, sub: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(base)?;
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let name = format!("run-{}-{}", stamp, sub);
    let mut candidate = base.join(&name);
    let mut attempt = 1usize;
    loop {
        match fs::create_dir(&candidate) {
            Ok(()) => return Ok(candidate),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                attempt += 1;
                candidate = base.join(format!("{}-{}", name, attempt));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

/// Writes the resolved configuration as pretty JSON.
pub fn write_config(dir: &Path, resolved: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(resolved)?;
    text.push('\n');
    fs::write(dir.join("config.json"), text)?;
    Ok(())
}

/// Writes `report.json` with the same numbers the stdout report shows.
pub fn write_report(dir: &Path, report: &ErrorReport) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(&report.to_json())?;
    text.push('\n');
    fs::write(dir.join("report.json"), text)?;
    Ok(())
}

/// Writes one `path,error_deg` row per evaluated image.
pub fn write_errors_csv(path: &Path, outcome: &EvaluationOutcome) -> Result<(), CliError> {
    let mut text = String::from("path,error_deg\n");
    for (image, error) in &outcome.per_image {
        text.push_str(&format!("{},{}\n", image.display(), error));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Writes per-epoch mean training errors as `loss.csv`.
pub fn write_loss_csv(dir: &Path, history: &[f64]) -> Result<(), CliError> {
    let mut text = String::from("epoch,mean_rae_deg\n");
    for (epoch, loss) in history.iter().enumerate() {
        text.push_str(&format!("{},{}\n", epoch, loss));
    }
    fs::write(dir.join("loss.csv"), text)?;
    Ok(())
}

/// Fails the command when any image could not be evaluated, naming each.
pub fn reject_failures(outcome: &EvaluationOutcome) -> Result<(), CliError> {
    if outcome.failures.is_empty() {
        return Ok(());
    }
    let mut lines: Vec<String> = outcome
        .failures
        .iter()
        .map(|f| format!("{}: {}", f.path.display(), f.message))
        .collect();
    lines.insert(0, format!("{} image(s) failed", outcome.failures.len()));
    Err(CliError::usage(lines.join("\n  ")))
}

//! `bocf crossval`: k-fold cross-validation with per-fold and pooled reports.

use serde_json::json;

use bocf_core::imageio::DatasetManifest;
use bocf_core::train::crossvalidate;

use crate::config::{pick, RunConfig};
use crate::output::{create_run_dir, write_config};
use crate::{CliError, CrossvalArgs};

pub fn run(args: &CrossvalArgs) -> Result<(), CliError> {
    let file = RunConfig::load(&args.common.config)?;
    let mut resolved =
        super::resolve_training(&args.common, &args.manifest, &args.model, &args.optim)?;
    let folds = pick(&args.folds, &file.folds, 3);
    resolved.echo["folds"] = folds.into();

    let manifest = DatasetManifest::load(&resolved.manifest_path)?;
    let run_dir = create_run_dir(&resolved.out_dir, "crossval")?;
    write_config(&run_dir, &resolved.echo)?;

    let report = crossvalidate(
        &manifest,
        folds,
        &resolved.model_cfg,
        &resolved.tcfg,
        &resolved.acfg,
        |fold, epoch, loss| {
            eprintln!(
                "fold {}  epoch {:5}  mean angular error {:9.4} deg",
                fold, epoch, loss
            );
        },
    )?;

    let fold_reports: Vec<serde_json::Value> =
        report.fold_reports.iter().map(|r| r.to_json()).collect();
    let mut text = serde_json::to_string_pretty(&json!({
        "folds": fold_reports,
        "pooled": report.pooled.to_json(),
    }))?;
    text.push('\n');
    std::fs::write(run_dir.join("report.json"), text)?;

    for (fold, fold_report) in report.fold_reports.iter().enumerate() {
        println!("fold {}", fold);
        print!("{}", fold_report.to_text());
    }
    println!("pooled");
    print!("{}", report.pooled.to_text());
    eprintln!("{}", run_dir.display());
    Ok(())
}

//! `bocf eval`: score a trained model over a manifest.

use serde_json::json;

use bocf_core::bocf::BocfModel;
use bocf_core::imageio::DatasetManifest;

use crate::config::{default_out_dir, path_json, pick, pick_opt, pick_required, RunConfig};
use crate::output::{reject_failures, write_config, write_errors_csv, write_report};
use crate::{CliError, EvalArgs};

pub fn run(args: &EvalArgs) -> Result<(), CliError> {
    let file = RunConfig::load(&args.common.config)?;
    let manifest_path = pick_required(&args.manifest, &file.manifest, "manifest")?;
    let model_path = pick_required(&args.model, &file.model, "model")?;
    let ccm = pick_opt(&args.ccm, &file.ccm);
    let errors_csv = pick_opt(&args.errors_csv, &file.errors_csv);
    let out_dir = pick(&args.common.out_dir, &file.out_dir, default_out_dir());
    let workers = pick(&args.common.workers, &file.workers, 1);

    let manifest = DatasetManifest::load(&manifest_path)?;
    let model = BocfModel::load(&model_path)?;
    let outcome = super::evaluate_with_ccm(&model, &ccm, &manifest, workers)?;
    reject_failures(&outcome)?;

    std::fs::create_dir_all(&out_dir)?;
    write_config(
        &out_dir,
        &json!({
            "manifest": manifest_path.display().to_string(),
            "model": model_path.display().to_string(),
            "ccm": path_json(&ccm),
            "errors_csv": path_json(&errors_csv),
            "out_dir": out_dir.display().to_string(),
            "workers": workers,
        }),
    )?;
    write_report(&out_dir, &outcome.report)?;
    if let Some(path) = &errors_csv {
        write_errors_csv(path, &outcome)?;
    }
    print!("{}", outcome.report.to_text());
    Ok(())
}

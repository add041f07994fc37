//! `bocf baseline`: score a statistical estimator over a manifest.

use serde_json::json;

use bocf_core::imageio::DatasetManifest;
use bocf_core::statistical::FrameworkParams;

use crate::config::{default_out_dir, path_json, pick, pick_opt, pick_required, RunConfig};
use crate::output::{reject_failures, write_config, write_errors_csv, write_report};
use crate::{BaselineArgs, CliError};

/// Maps a method name (plus `--p`, `--sigma`, `--n` where that method uses
/// them) onto framework parameters.
fn method_params(method: &str, p: f64, sigma: f64, n: u64) -> Result<FrameworkParams, CliError> {
    let order = u8::try_from(n)
        .map_err(|_| CliError::usage(format!("derivative order {} is out of range", n)))?;
    let params = match method {
        "gray-world" => FrameworkParams::new(0, 1.0, 0.0),
        "white-patch" => FrameworkParams::new(0, f64::INFINITY, 0.0),
        "shades-of-gray" => FrameworkParams::new(0, p, 0.0),
        "gray-edge" => FrameworkParams::new(1, p, sigma),
        "general-gray-world" => FrameworkParams::new(0, p, sigma),
        "framework" => FrameworkParams::new(order, p, sigma),
        other => {
            return Err(CliError::usage(format!(
                "unknown method '{}' (expected gray-world, white-patch, shades-of-gray, \
                 gray-edge, general-gray-world, or framework)",
                other
            )))
        }
    };
    Ok(params?)
}

pub fn run(args: &BaselineArgs) -> Result<(), CliError> {
    let file = RunConfig::load(&args.common.config)?;
    let manifest_path = pick_required(&args.manifest, &file.manifest, "manifest")?;
    let method = pick_required(&args.method, &file.method, "method")?;
    let p = pick(&args.p, &file.p, 6.0);
    let sigma = pick(&args.sigma, &file.sigma, 1.0);
    let n = pick(&args.n, &file.n, 1);
    let ccm = pick_opt(&args.ccm, &file.ccm);
    let errors_csv = pick_opt(&args.errors_csv, &file.errors_csv);
    let out_dir = pick(&args.common.out_dir, &file.out_dir, default_out_dir());
    let workers = pick(&args.common.workers, &file.workers, 1);

    let estimator = method_params(&method, p, sigma, n)?;
    let manifest = DatasetManifest::load(&manifest_path)?;
    let outcome = super::evaluate_with_ccm(&estimator, &ccm, &manifest, workers)?;
    reject_failures(&outcome)?;

    std::fs::create_dir_all(&out_dir)?;
    write_config(
        &out_dir,
        &json!({
            "manifest": manifest_path.display().to_string(),
            "method": method,
            "p": p,
            "sigma": sigma,
            "n": n,
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

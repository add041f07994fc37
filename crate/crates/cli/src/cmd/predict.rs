//! `bocf predict`: print one `path r g b` estimate per manifest image.

use bocf_core::bocf::BocfModel;
use bocf_core::evaluate::IlluminantEstimator;
use bocf_core::imageio::{apply_ccm, center_crop_resize, load_ccm, load_image, DatasetManifest};

use crate::config::{pick_opt, pick_required, RunConfig};
use crate::{CliError, PredictArgs};

pub fn run(args: &PredictArgs) -> Result<(), CliError> {
    let file = RunConfig::load(&args.common.config)?;
    let manifest_path = pick_required(&args.manifest, &file.manifest, "manifest")?;
    let model_path = pick_required(&args.model, &file.model, "model")?;
    let ccm = match pick_opt(&args.ccm, &file.ccm) {
        Some(path) => Some(load_ccm(&path)?),
        None => None,
    };

    let manifest = DatasetManifest::load(&manifest_path)?;
    let model = BocfModel::load(&model_path)?;
    for entry in manifest.entries() {
        let mut image = load_image(&entry.path, None)?;
        // Same preprocessing order as evaluation: resize, then CCM.
        if let Some(side) = model.input_size() {
            image = center_crop_resize(&image, side)?;
        }
        if let Some(m) = &ccm {
            image = apply_ccm(&image, m);
        }
        let estimate = model
            .estimate_illuminant(&image)
            .map_err(|e| CliError::usage(format!("{}: {}", entry.path.display(), e.0)))?;
        println!(
            "{} {} {} {}",
            entry.path.display(),
            estimate.r(),
            estimate.g(),
            estimate.b()
        );
    }
    Ok(())
}

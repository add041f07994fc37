//! One module per subcommand, plus the resolution helpers `train` and
//! `crossval` share.

pub mod baseline;
pub mod crossval;
pub mod eval;
pub mod gensynth;
pub mod predict;
pub mod train;

use std::path::PathBuf;

use serde_json::json;

use bocf_core::bocf::{AttentionMode, BocfConfig};
use bocf_core::evaluate::{
    evaluate_manifest, EstimateError, EvaluationOutcome, IlluminantEstimator,
};
use bocf_core::imageio::{
    apply_ccm, load_ccm, AugmentationConfig, DatasetManifest, IlluminantRgb, RgbImage,
};
use bocf_core::train::TrainConfig;

use crate::config::{default_out_dir, pick, pick_required, RunConfig};
use crate::{CliError, CommonArgs, ModelArgs, OptimArgs};

/// Everything a training-style command needs, plus the resolved-config echo.
pub struct ResolvedTraining {
    pub manifest_path: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub model_cfg: BocfConfig,
    pub tcfg: TrainConfig,
    pub acfg: AugmentationConfig,
    pub echo: serde_json::Value,
}

/// Merges flags, config file, and defaults for `train`/`crossval`.
pub fn resolve_training(
    common: &CommonArgs,
    manifest: &Option<PathBuf>,
    margs: &ModelArgs,
    oargs: &OptimArgs,
) -> Result<ResolvedTraining, CliError> {
    let file = RunConfig::load(&common.config)?;
    let manifest_path = pick_required(manifest, &file.manifest, "manifest")?;
    let out_dir = pick(&common.out_dir, &file.out_dir, default_out_dir());
    let seed = pick(&common.seed, &file.seed, 0);
    let workers = pick(&common.workers, &file.workers, 1);

    let base_model = BocfConfig::default();
    let attention_name = pick(&margs.attention, &file.attention, "none".to_string());
    let attention: AttentionMode = attention_name.parse().map_err(CliError::usage)?;
    let model_cfg = BocfConfig {
        conv_layers: pick(&margs.conv_layers, &file.conv_layers, base_model.conv_layers),
        filters: pick(&margs.filters, &file.filters, base_model.filters),
        kernel_size: pick(&margs.kernel_size, &file.kernel_size, base_model.kernel_size),
        codebook_size: pick(&margs.codebook, &file.codebook, base_model.codebook_size),
        hidden_size: pick(&margs.hidden, &file.hidden, base_model.hidden_size),
        attention,
        input_size: pick(&margs.input_size, &file.input_size, base_model.input_size),
    };

    let base_train = TrainConfig::default();
    let tcfg = TrainConfig {
        batch_size: pick(&oargs.batch_size, &file.batch_size, base_train.batch_size),
        learning_rate: pick(
            &oargs.learning_rate,
            &file.learning_rate,
            base_train.learning_rate,
        ),
        epochs: pick(&oargs.epochs, &file.epochs, base_train.epochs),
        beta1: pick(&oargs.beta1, &file.beta1, base_train.beta1),
        beta2: pick(&oargs.beta2, &file.beta2, base_train.beta2),
        epsilon: pick(&oargs.epsilon, &file.epsilon, base_train.epsilon),
        lambda_init: pick(&oargs.lambda_init, &file.lambda_init, base_train.lambda_init),
        seed,
        kmeans_init: pick(&oargs.kmeans_init, &file.kmeans_init, base_train.kmeans_init),
        workers,
    };

    let base_aug = AugmentationConfig::default();
    let acfg = AugmentationConfig {
        crop_size: pick(&oargs.crop_size, &file.crop_size, base_aug.crop_size),
        rotation_deg: pick(&oargs.rotation, &file.rotation, base_aug.rotation_deg),
        rescale: (
            pick(&oargs.rescale_min, &file.rescale_min, base_aug.rescale.0),
            pick(&oargs.rescale_max, &file.rescale_max, base_aug.rescale.1),
        ),
        output_size: model_cfg.input_size,
    };

    let echo = json!({
        "manifest": manifest_path.display().to_string(),
        "out_dir": out_dir.display().to_string(),
        "seed": seed,
        "workers": workers,
        "conv_layers": model_cfg.conv_layers,
        "filters": model_cfg.filters,
        "kernel_size": model_cfg.kernel_size,
        "codebook": model_cfg.codebook_size,
        "hidden": model_cfg.hidden_size,
        "attention": attention.to_string(),
        "input_size": model_cfg.input_size,
        "batch_size": tcfg.batch_size,
        "learning_rate": tcfg.learning_rate,
        "epochs": tcfg.epochs,
        "beta1": tcfg.beta1,
        "beta2": tcfg.beta2,
        "epsilon": tcfg.epsilon,
        "lambda_init": tcfg.lambda_init,
        "kmeans_init": tcfg.kmeans_init,
        "crop_size": acfg.crop_size,
        "rotation": acfg.rotation_deg,
        "rescale_min": acfg.rescale.0,
        "rescale_max": acfg.rescale.1,
    });

    Ok(ResolvedTraining {
        manifest_path,
        out_dir,
        seed,
        model_cfg,
        tcfg,
        acfg,
        echo,
    })
}

/// An estimator that sees every image through a color conversion matrix.
pub struct CcmEstimator<'a> {
    pub inner: &'a dyn IlluminantEstimator,
    pub ccm: [[f64; 3]; 3],
}

impl IlluminantEstimator for CcmEstimator<'_> {
    fn estimate_illuminant(&self, image: &RgbImage) -> Result<IlluminantRgb, EstimateError> {
        self.inner.estimate_illuminant(&apply_ccm(image, &self.ccm))
    }

    fn input_size(&self) -> Option<usize> {
        self.inner.input_size()
    }
}

/// Evaluates over the manifest, optionally through a CCM.
pub fn evaluate_with_ccm(
    estimator: &dyn IlluminantEstimator,
    ccm_path: &Option<PathBuf>,
    manifest: &DatasetManifest,
    workers: usize,
) -> Result<EvaluationOutcome, CliError> {
    let outcome = match ccm_path {
        Some(path) => {
            let ccm = load_ccm(path)?;
            let wrapped = CcmEstimator {
                inner: estimator,
                ccm,
            };
            evaluate_manifest(&wrapped, manifest, workers)?
        }
        None => evaluate_manifest(estimator, manifest, workers)?,
    };
    Ok(outcome)
}

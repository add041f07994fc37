//! Training: Adam over the angular loss with augmentation, k-means codebook
//! initialization, and k-fold cross-validation.
//!
//! Every random choice flows from [`TrainConfig::seed`] through dedicated
//! ChaCha streams (epoch shuffles and per-sample augmentation seeds), so a
//! run is bit-reproducible for any `workers` count: samples are computed in
//! parallel but reduced in a fixed order.

mod kmeans;
mod optimizer;

pub use kmeans::kmeans_init;
pub use optimizer::{adam_step, OptimizerState};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bocf::{BocfConfig, BocfModel, ModelError};
use crate::evaluate::{evaluate_manifest, summarize, ErrorReport, EvalError};
use crate::imageio::{
    augment_with_rng, center_crop_resize, load_image, AugmentationConfig, DatasetManifest,
};
use crate::tensor::Tensor;

/// Images sampled for k-means codebook initialization.
const KMEANS_IMAGE_CAP: usize = 100;
/// Feature vectors k-means clusters at most; larger pools are subsampled.
const KMEANS_POINT_CAP: usize = 50_000;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("manifest has no images")]
    EmptyManifest,
    #[error("failed to process '{path}': {message}")]
    Image { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("could not build worker pool: {0}")]
    WorkerPool(String),
    #[error("loss or gradients became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
}

/// Optimization hyperparameters. Defaults follow the reference schedule:
/// batches of 15, Adam at 3e-4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Initial attention blend weight; ignored by models without attention.
    pub lambda_init: f64,
    pub seed: u64,
    /// Initialize the codebook by k-means over extracted features instead of
    /// keeping the random draw.
    pub kmeans_init: bool,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 15,
            learning_rate: 3e-4,
            epochs: 3000,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lambda_init: 0.5,
            seed: 0,
            kmeans_init: true,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".to_string());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return bad(format!("{} = {} must lie in [0, 1)", name, beta));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon {} must be positive", self.epsilon));
        }
        if !self.lambda_init.is_finite() {
            return bad(format!("lambda_init {} must be finite", self.lambda_init));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".to_string());
        }
        Ok(())
    }
}

/// What a training run leaves behind besides the updated model.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean angular error over each epoch's samples, degrees.
    pub loss_history: Vec<f64>,
}

/// Per-fold reports and the report over all folds' pooled errors.
#[derive(Debug, Clone)]
pub struct CrossvalReport {
    pub fold_reports: Vec<ErrorReport>,
    pub pooled: ErrorReport,
}

/// Trains `model` in place over the manifest's images.
///
/// Images are loaded once up front. When `kmeans_init` is set (and at least
/// one epoch will run), the codebook is re-seeded by k-means over features
/// extracted from up to [`KMEANS_IMAGE_CAP`] images. Each epoch shuffles the
/// samples, augments each with its own seeded rng, and applies one Adam step
/// per batch on the batch-mean gradient. `progress` runs after every epoch
/// with the epoch index, its mean angular error in degrees, and the model.
pub fn train(
    model: &mut BocfModel,
    manifest: &DatasetManifest,
    tcfg: &TrainConfig,
    acfg: &AugmentationConfig,
    mut progress: impl FnMut(usize, f64, &BocfModel),
) -> Result<TrainReport, TrainError> {
    tcfg.validate()?;
    acfg.validate()
        .map_err(|e| TrainError::Config(e.to_string()))?;
    if manifest.is_empty() {
        return Err(TrainError::EmptyManifest);
    }
    let input_size = model.config().input_size;
    if acfg.output_size != input_size {
        return Err(TrainError::Config(format!(
            "augmentation produces {0}x{0} crops but the model expects {1}x{1}",
            acfg.output_size, input_size
        )));
    }

    let mut images = Vec::with_capacity(manifest.len());
    for entry in manifest.entries() {
        let img = load_image(&entry.path, None).map_err(|e| TrainError::Image {
            path: entry.path.display().to_string(),
            message: e.to_string(),
        })?;
        images.push((img, entry.illuminant));
    }

    if model.lambda().is_some() {
        model.set_lambda(tcfg.lambda_init)?;
    }

    if tcfg.kmeans_init && tcfg.epochs > 0 {
        let mut rows = Vec::new();
        for (entry, (img, _)) in manifest
            .entries()
            .iter()
            .zip(&images)
            .take(KMEANS_IMAGE_CAP)
        {
            let prepared =
                center_crop_resize(img, input_size).map_err(|e| TrainError::Image {
                    path: entry.path.display().to_string(),
                    message: e.to_string(),
                })?;
            let (_, mut feats) = model.extract_features(&prepared.to_tensor())?;
            rows.append(&mut feats);
        }
        if rows.len() > KMEANS_POINT_CAP {
            // A stream no epoch uses, so the subsample never aliases the
            // shuffle or augmentation draws.
            let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
            rng.set_stream(u64::MAX);
            let mut keep =
                rand::seq::index::sample(&mut rng, rows.len(), KMEANS_POINT_CAP).into_vec();
            keep.sort_unstable();
            rows = keep
                .into_iter()
                .map(|i| std::mem::take(&mut rows[i]))
                .collect();
        }
        let centers = kmeans_init(&rows, model.config().codebook_size, tcfg.seed)?;
        model.set_codebook_centers(centers)?;
    }

    let mut opt = OptimizerState::new(&model.params());
    let pool = if tcfg.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(tcfg.workers)
                .build()
                .map_err(|e| TrainError::WorkerPool(e.to_string()))?,
        )
    } else {
        None
    };

    let n = images.len();
    let mut loss_history = Vec::with_capacity(tcfg.epochs);
    for epoch in 0..tcfg.epochs {
        // Stream e+1 of the run seed drives epoch e: first the shuffle, then
        // one augmentation seed per sample position.
        let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
        rng.set_stream(epoch as u64 + 1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let plan: Vec<(usize, u64)> = order.into_iter().map(|i| (i, rng.gen())).collect();

        let mut epoch_losses = Vec::with_capacity(n);
        for batch in plan.chunks(tcfg.batch_size) {
            let compute = |&(idx, sample_seed): &(usize, u64)| {
                let (img, truth) = &images[idx];
                let mut arng = ChaCha8Rng::seed_from_u64(sample_seed);
                let (aug, aug_truth) =
                    augment_with_rng(img, truth, acfg, &mut arng).map_err(|e| {
                        TrainError::Image {
                            path: manifest.entries()[idx].path.display().to_string(),
                            message: e.to_string(),
                        }
                    })?;
                let pair = model.loss_and_gradients(&aug.to_tensor(), &aug_truth.normalized())?;
                Ok::<_, TrainError>(pair)
            };
            let results: Vec<Result<(f64, Vec<Tensor>), TrainError>> = match &pool {
                Some(pool) => {
                    use rayon::prelude::*;
                    pool.install(|| batch.par_iter().map(compute).collect())
                }
                None => batch.iter().map(compute).collect(),
            };

            // Sequential reduction in batch order keeps the update identical
            // for any worker count.
            let mut finite = true;
            let mut mean_grads: Option<Vec<Tensor>> = None;
            for result in results {
                let (loss, grads) = result?;
                finite &= loss.is_finite();
                epoch_losses.push(loss.to_degrees());
                match &mut mean_grads {
                    None => mean_grads = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            for (av, gv) in a.data_mut().iter_mut().zip(g.data()) {
                                *av += gv;
                            }
                        }
                    }
                }
            }
            let mut mean_grads = mean_grads.expect("batches are non-empty");
            let scale = 1.0 / batch.len() as f64;
            for g in &mut mean_grads {
                for v in g.data_mut() {
                    *v *= scale;
                }
                finite &= g.data().iter().all(|v| v.is_finite());
            }
            if !finite {
                return Err(TrainError::NonFiniteLoss { epoch });
            }
            adam_step(&mut model.params_mut(), &mean_grads, &mut opt, tcfg)?;
        }

        let mean_loss = epoch_losses.iter().sum::<f64>() / n as f64;
        loss_history.push(mean_loss);
        progress(epoch, mean_loss, model);
    }
    Ok(TrainReport { loss_history })
}

/// K-fold cross-validation: shuffles the manifest once, splits it into
/// `folds` contiguous chunks (the first `n % folds` get one extra image),
/// trains a fresh model per fold on the rest, and evaluates on the held-out
/// chunk. Fold `f` derives its own seed from the run seed, so folds are
/// independent but the whole run is reproducible. `progress` receives
/// `(fold, epoch, mean loss in degrees)`.
pub fn crossvalidate(
    manifest: &DatasetManifest,
    folds: usize,
    model_cfg: &BocfConfig,
    tcfg: &TrainConfig,
    acfg: &AugmentationConfig,
    mut progress: impl FnMut(usize, usize, f64),
) -> Result<CrossvalReport, TrainError> {
    if folds < 2 {
        return Err(TrainError::Config(
            "cross-validation needs at least 2 folds".to_string(),
        ));
    }
    let n = manifest.len();
    if n < folds {
        return Err(TrainError::Config(format!(
            "{} images cannot fill {} folds",
            n, folds
        )));
    }
    tcfg.validate()?;

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    indices.shuffle(&mut rng);

    let base = n / folds;
    let rem = n % folds;
    let mut start = 0;
    let mut fold_reports = Vec::with_capacity(folds);
    let mut pooled_errors = Vec::with_capacity(n);
    for fold in 0..folds {
        let size = base + usize::from(fold < rem);
        let test_idx = &indices[start..start + size];
        let train_idx: Vec<usize> = indices[..start]
            .iter()
            .chain(&indices[start + size..])
            .copied()
            .collect();
        start += size;

        let train_split = manifest.subset(&train_idx);
        let test_split = manifest.subset(test_idx);
        let fold_seed = tcfg
            .seed
            .wrapping_add(1_000_003u64.wrapping_mul(fold as u64 + 1));
        let mut fold_cfg = tcfg.clone();
        fold_cfg.seed = fold_seed;
        let mut model = BocfModel::new(model_cfg.clone(), fold_seed)?;
        train(&mut model, &train_split, &fold_cfg, acfg, |epoch, loss, _| {
            progress(fold, epoch, loss)
        })?;

        let outcome = evaluate_manifest(&model, &test_split, tcfg.workers)?;
        if let Some(failure) = outcome.failures.first() {
            return Err(TrainError::Image {
                path: failure.path.display().to_string(),
                message: failure.message.clone(),
            });
        }
        pooled_errors.extend_from_slice(&outcome.report.errors);
        fold_reports.push(outcome.report);
    }
    let pooled = summarize(&pooled_errors)?;
    Ok(CrossvalReport {
        fold_reports,
        pooled,
    })
}

//! Recovery angular error and the five-statistic report used throughout the
//! color-constancy literature.

use std::path::PathBuf;

use thiserror::Error;

use crate::imageio::{center_crop_resize, load_image, DatasetManifest, IlluminantRgb, RgbImage};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot summarize an empty error list")]
    EmptyErrors,
    #[error("error value {0} is not a finite angle in [0, 180]")]
    InvalidError(f64),
    #[error("zero-length vector has no direction")]
    ZeroVector,
    #[error("no image in the manifest could be evaluated")]
    NoSuccessfulImages,
    #[error("worker count must be >= 1")]
    InvalidWorkers,
    #[error("failed to build worker pool: {0}")]
    WorkerPool(String),
}

/// Failure carrier for [`IlluminantEstimator`] implementations; evaluation
/// collects these per image instead of aborting.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct EstimateError(pub String);

/// Anything that maps an image to an illuminant estimate: statistical
/// methods and trained models alike.
pub trait IlluminantEstimator: Sync {
    fn estimate_illuminant(&self, image: &RgbImage) -> Result<IlluminantRgb, EstimateError>;

    /// Square input size the estimator requires, if any. Evaluation
    /// center-crops and resizes to this before estimating; `None` keeps the
    /// native resolution.
    fn input_size(&self) -> Option<usize> {
        None
    }
}

/// Recovery angular error between two raw RGB vectors, in degrees.
///
/// The angle arccos(a.b / |a||b|) is evaluated as atan2(|a x b|, a.b), which
/// is the same quantity but immune to the acos quantization floor near
/// parallel vectors (acos of a cosine one ulp below 1 is already ~1.2e-6
/// degrees) and can never leave the domain, so no clamping is needed.
pub fn rae_vectors(a: &[f64; 3], b: &[f64; 3]) -> Result<f64, EvalError> {
    if a.iter().all(|v| *v == 0.0) || b.iter().all(|v| *v == 0.0) {
        return Err(EvalError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let sin_scaled = cross.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(sin_scaled.atan2(dot).to_degrees())
}

/// Recovery angular error between ground truth and estimate, in degrees.
/// Symmetric and invariant to positive scaling of either argument.
pub fn rae(gt: &IlluminantRgb, est: &IlluminantRgb) -> f64 {
    rae_vectors(&gt.as_array(), &est.as_array()).expect("illuminant components are positive")
}

/// The five summary statistics over a set of per-image errors, plus the
/// errors themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub best25: f64,
    pub mean: f64,
    pub median: f64,
    pub trimean: f64,
    pub worst25: f64,
    /// Per-image errors in evaluation order, degrees.
    pub errors: Vec<f64>,
}

impl ErrorReport {
    pub fn n(&self) -> usize {
        self.errors.len()
    }

    /// JSON object with the five statistics and the sample count.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "best25": self.best25,
            "mean": self.mean,
            "median": self.median,
            "trimean": self.trimean,
            "worst25": self.worst25,
            "n": self.n(),
        })
    }

    /// Aligned two-column text block, degrees.
    pub fn to_text(&self) -> String {
        format!(
            "{:<8} {:>14}\n{:<8} {:>14.9}\n{:<8} {:>14.9}\n{:<8} {:>14.9}\n{:<8} {:>14.9}\n{:<8} {:>14.9}\n",
            "n",
            self.n(),
            "best25",
            self.best25,
            "mean",
            self.mean,
            "median",
            self.median,
            "trimean",
            self.trimean,
            "worst25",
            self.worst25,
        )
    }
}

/// Quantile by linear interpolation between closest ranks under the
/// convention `h = (n + 1) q` (1-based), clamped to the sample range; this is
/// the convention that makes the quartiles of `[1..7]` come out as 2 and 6.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let h = ((n + 1) as f64 * q).clamp(1.0, n as f64);
    let lo = (h.floor() as usize - 1).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    let frac = h - h.floor();
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Builds the five-statistic report from per-image errors (degrees).
///
/// `best25`/`worst25` are the means of the `ceil(n/4)` smallest/largest
/// errors; the trimean is Tukey's `(Q1 + 2 Q2 + Q3) / 4`.
pub fn summarize(errors: &[f64]) -> Result<ErrorReport, EvalError> {
    if errors.is_empty() {
        return Err(EvalError::EmptyErrors);
    }
    for &e in errors {
        if !e.is_finite() || !(0.0..=180.0).contains(&e) {
            return Err(EvalError::InvalidError(e));
        }
    }
    let mut sorted = errors.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("validated finite"));
    let n = sorted.len();
    let quarter = n.div_ceil(4);
    let best25 = sorted[..quarter].iter().sum::<f64>() / quarter as f64;
    let worst25 = sorted[n - quarter..].iter().sum::<f64>() / quarter as f64;
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    Ok(ErrorReport {
        best25,
        mean,
        median,
        trimean: (q1 + 2.0 * median + q3) / 4.0,
        worst25,
        errors: errors.to_vec(),
    })
}

/// One image that could not be evaluated, with the reason.
#[derive(Debug, Clone)]
pub struct EvalFailure {
    pub path: PathBuf,
    pub message: String,
}

/// Result of evaluating an estimator over a manifest: the report over the
/// successfully processed images, their per-image errors keyed by path, and
/// the failures.
#[derive(Debug, Clone)]
pub struct EvaluationOutcome {
    pub report: ErrorReport,
    pub per_image: Vec<(PathBuf, f64)>,
    pub failures: Vec<EvalFailure>,
}

/// Evaluates an estimator over every manifest entry.
///
/// Images the estimator requires at a fixed size are deterministically
/// center-cropped to the largest square and bilinearly resized first. Decode
/// or estimation failures are collected per path and evaluation continues;
/// the report covers the successful images, in manifest order regardless of
/// `workers`.
pub fn evaluate_manifest(
    estimator: &dyn IlluminantEstimator,
    manifest: &DatasetManifest,
    workers: usize,
) -> Result<EvaluationOutcome, EvalError> {
    if workers == 0 {
        return Err(EvalError::InvalidWorkers);
    }
    let eval_one = |entry: &crate::imageio::ManifestEntry| -> Result<f64, String> {
        let img = load_image(&entry.path, None).map_err(|e| e.to_string())?;
        let img = match estimator.input_size() {
            Some(size) => center_crop_resize(&img, size).map_err(|e| e.to_string())?,
            None => img,
        };
        let est = estimator.estimate_illuminant(&img).map_err(|e| e.to_string())?;
        Ok(rae(&entry.illuminant, &est))
    };
    let results: Vec<Result<f64, String>> = if workers == 1 {
        manifest.entries().iter().map(eval_one).collect()
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| EvalError::WorkerPool(e.to_string()))?;
        pool.install(|| manifest.entries().par_iter().map(eval_one).collect())
    };

    let mut per_image = Vec::new();
    let mut failures = Vec::new();
    for (entry, result) in manifest.entries().iter().zip(results) {
        match result {
            Ok(err) => per_image.push((entry.path.clone(), err)),
            Err(message) => failures.push(EvalFailure {
                path: entry.path.clone(),
                message,
            }),
        }
    }
    if per_image.is_empty() {
        return Err(EvalError::NoSuccessfulImages);
    }
    let errors: Vec<f64> = per_image.iter().map(|(_, e)| *e).collect();
    Ok(EvaluationOutcome {
        report: summarize(&errors)?,
        per_image,
        failures,
    })
}

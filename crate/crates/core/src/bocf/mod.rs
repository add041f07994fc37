//! The BoCF network: convolutional feature extraction, bag-of-features
//! pooling against a learnable RBF codebook, two optional attention variants,
//! and the illumination-estimation head.
//!
//! The pipeline is
//!
//! ```text
//! image [3,S,S]
//!   -> conv(4x4, same) -> relu -> maxpool2   (per configured layer)
//!   -> N = S'xS' feature vectors of dim D
//!   -> [attention variant 1: spatial mask on the feature map]
//!   -> RBF soft assignment + mean pooling -> histogram of K bins
//!   -> [attention variant 2: mask on the histogram]
//!   -> dense(K -> hidden) -> relu -> dense(hidden -> 3) -> softmax
//! ```
//!
//! so the estimate always lands on the chromaticity simplex. All parameters,
//! including the codebook centers, the per-codeword scales, and the attention
//! blend weight, are trained end to end by reverse-mode differentiation.

mod checkpoint;
mod model;

pub use model::{BocfModel, ForwardOutput, Trace};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("input is {got}x{got}, model expects {expected}x{expected}")]
    InputSize { expected: usize, got: usize },
    #[error("operation requires attention mode {expected}, model has {actual}")]
    AttentionMode {
        expected: AttentionMode,
        actual: AttentionMode,
    },
    #[error("model has no attention stage, so no blend weight")]
    NoLambda,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid histogram: {0}")]
    Histogram(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("checkpoint I/O: {0}")]
    CheckpointIo(#[from] std::io::Error),
    #[error("bad checkpoint: {0}")]
    CheckpointFormat(String),
}

/// Which attention stage, if any, the model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    None,
    Variant1,
    Variant2,
}

impl std::fmt::Display for AttentionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AttentionMode::None => "none",
            AttentionMode::Variant1 => "variant1",
            AttentionMode::Variant2 => "variant2",
        })
    }
}

impl std::str::FromStr for AttentionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(AttentionMode::None),
            "variant1" => Ok(AttentionMode::Variant1),
            "variant2" => Ok(AttentionMode::Variant2),
            other => Err(format!(
                "unknown attention mode {:?} (expected none, variant1, or variant2)",
                other
            )),
        }
    }
}

/// Architecture hyperparameters. Defaults follow the reference topology:
/// two layers of thirty 4x4 filters, codebook of 150, hidden size 40,
/// 227x227 inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BocfConfig {
    pub conv_layers: usize,
    pub filters: usize,
    pub kernel_size: usize,
    pub codebook_size: usize,
    pub hidden_size: usize,
    pub attention: AttentionMode,
    pub input_size: usize,
}

impl Default for BocfConfig {
    fn default() -> Self {
        Self {
            conv_layers: 2,
            filters: 30,
            kernel_size: 4,
            codebook_size: 150,
            hidden_size: 40,
            attention: AttentionMode::None,
            input_size: 227,
        }
    }
}

impl BocfConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("conv_layers", self.conv_layers),
            ("filters", self.filters),
            ("kernel_size", self.kernel_size),
            ("codebook_size", self.codebook_size),
            ("hidden_size", self.hidden_size),
            ("input_size", self.input_size),
        ] {
            if v == 0 {
                return Err(ModelError::Config(format!("{} must be >= 1", name)));
            }
        }
        // Each layer halves the map; every pool needs at least 2x2.
        let mut side = self.input_size;
        for layer in 0..self.conv_layers {
            if side < 2 {
                return Err(ModelError::Config(format!(
                    "input {} is too small to pool at layer {}",
                    self.input_size, layer
                )));
            }
            side /= 2;
        }
        Ok(())
    }

    /// Side S' of the feature map after all conv/pool layers.
    pub fn feature_map_side(&self) -> usize {
        let mut side = self.input_size;
        for _ in 0..self.conv_layers {
            side /= 2;
        }
        side
    }

    /// N, the number of pooled feature vectors.
    pub fn feature_count(&self) -> usize {
        let s = self.feature_map_side();
        s * s
    }

    /// D, the dimension of each feature vector (the last layer's channels).
    pub fn feature_dim(&self) -> usize {
        self.filters
    }
}

/// Exact number of scalar parameters a model with this configuration holds.
///
/// Per layer: `filters * in_channels * k^2` weights plus `filters` biases;
/// the codebook holds `K * D` center coordinates and `K` log-scales; the head
/// is `K -> hidden -> 3` dense layers with biases; attention adds its mask
/// layer plus the scalar blend weight.
pub fn parameter_count(config: &BocfConfig) -> usize {
    let k2 = config.kernel_size * config.kernel_size;
    let f = config.filters;
    let kk = config.codebook_size;
    let d = config.feature_dim();
    let n = config.feature_count();
    let hidden = config.hidden_size;

    let mut count = f * 3 * k2 + f; // first conv layer
    count += (config.conv_layers - 1) * (f * f * k2 + f); // remaining layers
    count += kk * d + kk; // codebook centers + log-scales
    count += match config.attention {
        AttentionMode::None => 0,
        AttentionMode::Variant1 => (n * d) * n + n + 1, // dense mask + lambda
        AttentionMode::Variant2 => kk * kk + kk + 1,
    };
    count += kk * hidden + hidden; // head layer 1
    count += hidden * 3 + 3; // head layer 2
    count
}

/// The RBF codebook: K centers of dimension D with positive scales.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centers: Tensor,
    scales: Vec<f64>,
}

impl Codebook {
    /// Builds a codebook from `[K, D]` centers and K positive scales.
    pub fn new(centers: Tensor, scales: Vec<f64>) -> Result<Self, ModelError> {
        let &[k, _d] = centers.shape() else {
            return Err(ModelError::Shape(format!(
                "centers must be [K, D], got {:?}",
                centers.shape()
            )));
        };
        if scales.len() != k {
            return Err(ModelError::Shape(format!(
                "{} scales for {} centers",
                scales.len(),
                k
            )));
        }
        if scales.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(ModelError::Config(
                "codebook scales must be finite and > 0".to_string(),
            ));
        }
        Ok(Self { centers, scales })
    }

    /// Number of codewords K.
    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    /// Feature dimension D.
    pub fn dim(&self) -> usize {
        self.centers.shape()[1]
    }

    /// Centers as a `[K, D]` tensor.
    pub fn centers(&self) -> &Tensor {
        &self.centers
    }

    /// Positive per-codeword scales ρ.
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// RBF soft assignment of one feature vector (Eq. 7): membership k is
    /// `exp(-|x - v_k| / ρ_k)` normalized across codewords, with the plain
    /// Euclidean distance. Components are positive and sum to 1.
    pub fn rbf_quantize(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        if x.len() != self.dim() {
            return Err(ModelError::Shape(format!(
                "feature dim {} does not match codebook dim {}",
                x.len(),
                self.dim()
            )));
        }
        let (hist, _) = crate::tensor::ops::bof_fwd(
            x,
            1,
            self.dim(),
            self.centers.data(),
            self.len(),
            &self.scales,
        );
        Ok(hist)
    }

    /// Mean of the soft assignments of N feature vectors (Eq. 8). Invariant
    /// under any permutation of the features, bitwise: each bin is summed in
    /// ascending value order.
    pub fn bof_pool(&self, features: &[Vec<f64>]) -> Result<Histogram, ModelError> {
        if features.is_empty() {
            return Err(ModelError::Shape(
                "bof_pool needs at least one feature vector".to_string(),
            ));
        }
        let d = self.dim();
        let mut flat = Vec::with_capacity(features.len() * d);
        for (i, f) in features.iter().enumerate() {
            if f.len() != d {
                return Err(ModelError::Shape(format!(
                    "feature {} has dim {}, codebook dim is {}",
                    i,
                    f.len(),
                    d
                )));
            }
            flat.extend_from_slice(f);
        }
        let (bins, _) = crate::tensor::ops::bof_fwd(
            &flat,
            features.len(),
            d,
            self.centers.data(),
            self.len(),
            &self.scales,
        );
        Histogram::new(bins)
    }
}

/// A BoF histogram: K nonnegative bins summing to 1 (within 1e-9).
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    bins: Vec<f64>,
}

impl Histogram {
    pub fn new(bins: Vec<f64>) -> Result<Self, ModelError> {
        if bins.is_empty() {
            return Err(ModelError::Histogram("no bins".to_string()));
        }
        if let Some(b) = bins.iter().find(|b| !b.is_finite() || **b < 0.0) {
            return Err(ModelError::Histogram(format!("bin value {}", b)));
        }
        let sum: f64 = bins.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ModelError::Histogram(format!(
                "bins sum to {}, expected 1 within 1e-9",
                sum
            )));
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

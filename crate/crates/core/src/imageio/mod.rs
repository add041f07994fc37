//! Linear RGB image handling: decoding, encoding, color correction,
//! augmentation, synthetic scene generation, and dataset manifests.
//!
//! Images are [`RgbImage`] buffers of interleaved `f64` RGB samples in linear
//! space, normally in `[0, 1]` after decoding. Ground-truth and estimated
//! illuminants are [`IlluminantRgb`] values with strictly positive
//! components.

mod augment;
mod io;
mod manifest;
mod synth;

pub use augment::{
    augment, augment_with_rng, center_crop_resize, resize_bilinear, rotate_square,
    AugmentationConfig,
};
pub(crate) use augment::reflect;
pub use io::{apply_ccm, load_ccm, load_image, save_image, BitDepth};
pub use manifest::{write_manifest, DatasetManifest, ManifestEntry};
pub use synth::{generate_synthetic_scene, SceneSpec};

use std::path::PathBuf;
use thiserror::Error;

/// Errors from image decoding/encoding, manifests, and related validation.
#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("{path}: unsupported color layout {color}, expected 8- or 16-bit RGB")]
    UnsupportedColor { path: PathBuf, color: String },
    #[error("{path}: unsupported image format (PNG and PNM only)")]
    UnsupportedFormat { path: PathBuf },
    #[error("failed to encode {path}: {message}")]
    Encode { path: PathBuf, message: String },
    #[error("bad color correction matrix {path}: {message}")]
    Ccm { path: PathBuf, message: String },
    #[error("manifest {path}, row {row}: {message}")]
    Manifest {
        path: PathBuf,
        row: usize,
        message: String,
    },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid illuminant: {0}")]
    InvalidIlluminant(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Image stored as interleaved RGB `f64` samples, row-major.
///
/// Pixel values are finite (validated on construction); they are not clamped
/// to `[0, 1]` because augmentation may rescale intensities past 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RgbImage {
    /// Builds an image from interleaved RGB data of length `height*width*3`.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, ImageIoError> {
        if height == 0 || width == 0 {
            return Err(ImageIoError::InvalidImage(format!(
                "zero-sized image {}x{}",
                width, height
            )));
        }
        if data.len() != height * width * 3 {
            return Err(ImageIoError::InvalidImage(format!(
                "data length {} does not match {}x{}x3",
                data.len(),
                height,
                width
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ImageIoError::InvalidImage(format!(
                "non-finite sample at flat index {}",
                i
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn<F>(height: usize, width: usize, mut f: F) -> Result<Self, ImageIoError>
    where
        F: FnMut(usize, usize) -> [f64; 3],
    {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Interleaved RGB samples, row-major.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Repacks the interleaved samples as a planar `[3, height, width]`
    /// tensor, the layout the network consumes.
    pub fn to_tensor(&self) -> crate::tensor::Tensor {
        let n = self.height * self.width;
        let mut data = vec![0.0; 3 * n];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            data[i] = px[0];
            data[n + i] = px[1];
            data[2 * n + i] = px[2];
        }
        crate::tensor::Tensor::from_raw(vec![3, self.height, self.width], data)
    }
}

/// An illuminant as a strictly positive, finite RGB triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IlluminantRgb {
    r: f64,
    g: f64,
    b: f64,
}

impl IlluminantRgb {
    pub fn new(r: f64, g: f64, b: f64) -> Result<Self, ImageIoError> {
        for (name, v) in [("r", r), ("g", g), ("b", b)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(ImageIoError::InvalidIlluminant(format!(
                    "component {} = {} must be finite and > 0",
                    name, v
                )));
            }
        }
        Ok(Self { r, g, b })
    }

    pub fn from_array(a: [f64; 3]) -> Result<Self, ImageIoError> {
        Self::new(a[0], a[1], a[2])
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }

    /// Projection onto the chromaticity simplex (components sum to 1).
    pub fn normalized(&self) -> Self {
        let s = self.r + self.g + self.b;
        Self {
            r: self.r / s,
            g: self.g / s,
            b: self.b / s,
        }
    }

    /// Uniform intensity scaling by a positive factor.
    pub fn scaled(&self, factor: f64) -> Result<Self, ImageIoError> {
        if !factor.is_finite() || factor <= 0.0 {
            return Err(ImageIoError::InvalidIlluminant(format!(
                "scale factor {} must be finite and > 0",
                factor
            )));
        }
        Ok(Self {
            r: self.r * factor,
            g: self.g * factor,
            b: self.b * factor,
        })
    }
}

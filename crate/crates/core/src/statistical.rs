//! The unified statistical illuminant-estimation framework and its named
//! instantiations.
//!
//! One rule covers the whole classical family: the illuminant estimate is the
//! per-channel Minkowski-p mean of the n-th-order derivative magnitude of the
//! Gaussian-smoothed image,
//!
//! ```text
//! e_c ∝ ( (1/N) Σ |∇ⁿ ρ_c,σ|^p )^(1/p)
//! ```
//!
//! returned simplex-normalized. Gray-World is `(n=0, p=1, σ=0)`, White-Patch
//! is `(0, ∞, 0)`, Shades-of-Gray `(0, p, 0)`, Gray-Edge `(1, p, σ)`, and
//! General Gray-World `(0, p, σ)`.
//!
//! Discretization conventions (frozen so results are bit-reproducible):
//! derivatives use Gaussian-derivative filters when `σ > 0` and central
//! differences when `σ = 0`; kernels are truncated at `ceil(3σ)`; borders
//! reflect symmetrically; the second-order magnitude is the Frobenius norm of
//! the Hessian, `sqrt(ρxx² + 2ρxy² + ρyy²)`.

use thiserror::Error;

use crate::evaluate::{EstimateError, IlluminantEstimator};
use crate::imageio::{IlluminantRgb, RgbImage};

/// Ratio of derivative energy to image energy below which an image carries
/// no usable evidence for the configured estimator.
const NO_EVIDENCE_RATIO: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum StatError {
    #[error("invalid framework parameters: {0}")]
    InvalidParams(String),
    #[error("no evidence: derivative energy below 1e-12 of image energy")]
    NoEvidence,
    #[error("degenerate estimate: a channel has no mass")]
    DegenerateEstimate,
}

/// The `(n, p, σ)` triple of the unified framework.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameworkParams {
    n: u8,
    p: f64,
    sigma: f64,
}

impl FrameworkParams {
    /// Validates `n ∈ {0,1,2}`, `p > 0` (or `+∞`), `σ ≥ 0`.
    pub fn new(n: u8, p: f64, sigma: f64) -> Result<Self, StatError> {
        if n > 2 {
            return Err(StatError::InvalidParams(format!(
                "derivative order {} outside {{0, 1, 2}}",
                n
            )));
        }
        if p.is_nan() || p <= 0.0 {
            return Err(StatError::InvalidParams(format!(
                "Minkowski norm {} must be positive or +inf",
                p
            )));
        }
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(StatError::InvalidParams(format!(
                "smoothing scale {} must be finite and >= 0",
                sigma
            )));
        }
        Ok(Self { n, p, sigma })
    }

    /// Derivative order n.
    pub fn derivative_order(&self) -> u8 {
        self.n
    }

    /// Minkowski norm p (`+∞` selects the per-channel maximum).
    pub fn minkowski_p(&self) -> f64 {
        self.p
    }

    /// Gaussian pre-smoothing scale σ in pixels.
    pub fn smoothing_sigma(&self) -> f64 {
        self.sigma
    }
}

/// Estimates the scene illuminant under the framework parameters, returning
/// the simplex-normalized direction.
pub fn estimate_framework(
    image: &RgbImage,
    params: &FrameworkParams,
) -> Result<IlluminantRgb, StatError> {
    let (h, w) = (image.height(), image.width());
    let image_energy: f64 = image.data().iter().map(|v| v * v).sum();
    if image_energy == 0.0 {
        return Err(StatError::NoEvidence);
    }

    let mut components = [0.0; 3];
    let mut derivative_energy = 0.0;
    for (ch, out) in components.iter_mut().enumerate() {
        let plane: Vec<f64> = image.data()[ch..].iter().step_by(3).copied().collect();
        let magnitude = derivative_magnitude(&plane, h, w, params.n, params.sigma);
        derivative_energy += magnitude.iter().map(|v| v * v).sum::<f64>();
        *out = minkowski_mean(&magnitude, params.p);
    }
    if derivative_energy < NO_EVIDENCE_RATIO * image_energy {
        return Err(StatError::NoEvidence);
    }
    if components.iter().any(|c| !c.is_finite() || *c <= 0.0) {
        return Err(StatError::DegenerateEstimate);
    }
    Ok(IlluminantRgb::new(components[0], components[1], components[2])
        .expect("components checked positive and finite")
        .normalized())
}

/// Gray-World: `(n=0, p=1, σ=0)`, the per-channel arithmetic mean.
pub fn gray_world(image: &RgbImage) -> Result<IlluminantRgb, StatError> {
    estimate_framework(image, &FrameworkParams::new(0, 1.0, 0.0).expect("canonical"))
}

/// White-Patch: `(n=0, p=∞, σ=0)`, the per-channel maximum.
pub fn white_patch(image: &RgbImage) -> Result<IlluminantRgb, StatError> {
    estimate_framework(
        image,
        &FrameworkParams::new(0, f64::INFINITY, 0.0).expect("canonical"),
    )
}

/// Shades-of-Gray: `(n=0, p, σ=0)`.
pub fn shades_of_gray(image: &RgbImage, p: f64) -> Result<IlluminantRgb, StatError> {
    estimate_framework(image, &FrameworkParams::new(0, p, 0.0)?)
}

/// Gray-Edge: `(n=1, p, σ)`.
pub fn gray_edge(image: &RgbImage, p: f64, sigma: f64) -> Result<IlluminantRgb, StatError> {
    estimate_framework(image, &FrameworkParams::new(1, p, sigma)?)
}

/// General Gray-World: `(n=0, p, σ)`.
pub fn general_gray_world(
    image: &RgbImage,
    p: f64,
    sigma: f64,
) -> Result<IlluminantRgb, StatError> {
    estimate_framework(image, &FrameworkParams::new(0, p, sigma)?)
}

impl IlluminantEstimator for FrameworkParams {
    fn estimate_illuminant(&self, image: &RgbImage) -> Result<IlluminantRgb, EstimateError> {
        estimate_framework(image, self).map_err(|e| EstimateError(e.to_string()))
    }
    // Statistical estimators run at native resolution: input_size() stays None.
}

// --- derivative fields --------------------------------------------------------

/// Smoothing, first-derivative, and second-derivative kernels for scale
/// `sigma`, as correlation taps over offsets `-r..=r` with `r = ceil(3σ)`.
/// At `σ = 0` these degenerate to the identity and central differences.
fn kernels(sigma: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    if sigma == 0.0 {
        return (vec![1.0], vec![-0.5, 0.0, 0.5], vec![1.0, -2.0, 1.0]);
    }
    let r = (3.0 * sigma).ceil() as isize;
    let s2 = sigma * sigma;
    let mut g: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * s2)).exp()).collect();
    let z: f64 = g.iter().sum();
    for v in g.iter_mut() {
        *v /= z;
    }
    // Correlation taps: a rising ramp must produce a positive response, so
    // the first-derivative tap at offset o is +o/σ² times the smoothing tap.
    let d1: Vec<f64> = (-r..=r)
        .zip(&g)
        .map(|(o, gv)| (o as f64 / s2) * gv)
        .collect();
    let d2: Vec<f64> = (-r..=r)
        .zip(&g)
        .map(|(o, gv)| (((o * o) as f64 - s2) / (s2 * s2)) * gv)
        .collect();
    (g, d1, d2)
}

/// Separable correlation with symmetric reflection at the borders: rows with
/// `kx`, then columns with `ky`.
fn correlate_separable(plane: &[f64], h: usize, w: usize, kx: &[f64], ky: &[f64]) -> Vec<f64> {
    let rx = (kx.len() / 2) as isize;
    let ry = (ky.len() / 2) as isize;
    let mut rows = vec![0.0; h * w];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        let dst = &mut rows[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &k) in kx.iter().enumerate() {
                let xi = crate::imageio::reflect(x as isize + t as isize - rx, w);
                acc += k * src[xi];
            }
            dst[x] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &k) in ky.iter().enumerate() {
                let yi = crate::imageio::reflect(y as isize + t as isize - ry, h);
                acc += k * rows[yi * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Pointwise magnitude of the n-th-order derivative structure of one channel.
fn derivative_magnitude(plane: &[f64], h: usize, w: usize, n: u8, sigma: f64) -> Vec<f64> {
    let (g, d1, d2) = kernels(sigma);
    match n {
        0 => {
            let s = correlate_separable(plane, h, w, &g, &g);
            s.iter().map(|v| v.abs()).collect()
        }
        1 => {
            let dx = correlate_separable(plane, h, w, &d1, &g);
            let dy = correlate_separable(plane, h, w, &g, &d1);
            dx.iter()
                .zip(&dy)
                .map(|(a, b)| (a * a + b * b).sqrt())
                .collect()
        }
        2 => {
            let dxx = correlate_separable(plane, h, w, &d2, &g);
            let dyy = correlate_separable(plane, h, w, &g, &d2);
            let dxy = correlate_separable(plane, h, w, &d1, &d1);
            dxx.iter()
                .zip(dyy.iter().zip(&dxy))
                .map(|(xx, (yy, xy))| (xx * xx + 2.0 * xy * xy + yy * yy).sqrt())
                .collect()
        }
        _ => unreachable!("validated by FrameworkParams::new"),
    }
}

/// Minkowski-p mean of nonnegative magnitudes, factored by the maximum so
/// large `p` stays in range; `p = +∞` is the maximum itself.
fn minkowski_mean(magnitude: &[f64], p: f64) -> f64 {
    let mx = magnitude.iter().cloned().fold(0.0, f64::max);
    if p.is_infinite() || mx == 0.0 {
        return mx;
    }
    let sum: f64 = magnitude.iter().map(|m| (m / mx).powf(p)).sum();
    mx * (sum / magnitude.len() as f64).powf(1.0 / p)
}

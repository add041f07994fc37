//! Synthetic Mondrian-style scenes with known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{IlluminantRgb, ImageIoError, RgbImage};

/// Layout of a synthetic scene: a grid of at least `patches` rectangular
/// patches, each with a reflectance drawn from `palette`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    /// Minimum number of patches; the actual grid is the smallest
    /// near-square grid with at least this many cells.
    pub patches: usize,
    /// Candidate reflectances, each component in `[0, 1]`.
    pub palette: Vec<[f64; 3]>,
    /// When set, one randomly chosen cell is a perfect white reflector,
    /// so the per-channel image maximum equals the illuminant exactly.
    pub white_patch: bool,
    /// Seed for the patch draw.
    pub seed: u64,
}

impl SceneSpec {
    fn validate(&self) -> Result<(), ImageIoError> {
        if self.patches == 0 {
            return Err(ImageIoError::InvalidConfig(
                "scene needs at least one patch".to_string(),
            ));
        }
        if self.palette.is_empty() {
            return Err(ImageIoError::InvalidConfig(
                "palette must not be empty".to_string(),
            ));
        }
        for (i, refl) in self.palette.iter().enumerate() {
            if refl.iter().any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
                return Err(ImageIoError::InvalidConfig(format!(
                    "palette entry {} = {:?} outside [0, 1]",
                    i, refl
                )));
            }
        }
        Ok(())
    }
}

/// Renders a `size x size` scene under the given illuminant.
///
/// Every pixel is exactly `reflectance * illuminant` per channel: no noise,
/// no renormalization. The returned ground truth is the illuminant as passed.
pub fn generate_synthetic_scene(
    spec: &SceneSpec,
    illuminant: &IlluminantRgb,
    size: usize,
) -> Result<(RgbImage, IlluminantRgb), ImageIoError> {
    spec.validate()?;
    if size < 8 {
        return Err(ImageIoError::InvalidConfig(format!(
            "image size {} must be at least 8",
            size
        )));
    }
    let cols = (spec.patches as f64).sqrt().ceil() as usize;
    let rows = spec.patches.div_ceil(cols);
    let cells = rows * cols;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut reflectances: Vec<[f64; 3]> = (0..cells)
        .map(|_| spec.palette[rng.gen_range(0..spec.palette.len())])
        .collect();
    if spec.white_patch {
        let at = rng.gen_range(0..cells);
        reflectances[at] = [1.0, 1.0, 1.0];
    }

    let light = illuminant.as_array();
    let img = RgbImage::from_fn(size, size, |x, y| {
        let cy = (y * rows / size).min(rows - 1);
        let cx = (x * cols / size).min(cols - 1);
        let refl = reflectances[cy * cols + cx];
        [refl[0] * light[0], refl[1] * light[1], refl[2] * light[2]]
    })?;
    Ok((img, *illuminant))
}

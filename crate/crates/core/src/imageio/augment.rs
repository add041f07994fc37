//! Training-time augmentation and deterministic resizing.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{IlluminantRgb, ImageIoError, RgbImage};

/// Parameters for [`augment`]: random square crop, rotation about the crop
/// center, intensity rescale, and a final resize.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationConfig {
    /// Side of the square crop taken from the source image.
    pub crop_size: usize,
    /// Rotation is drawn uniformly from `[-rotation_deg, rotation_deg)`.
    pub rotation_deg: f64,
    /// Intensity factor drawn uniformly from `[rescale.0, rescale.1)`; the
    /// ground-truth illuminant is scaled by the same factor.
    pub rescale: (f64, f64),
    /// Side of the square fed to the network.
    pub output_size: usize,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            crop_size: 512,
            rotation_deg: 30.0,
            rescale: (0.8, 1.2),
            output_size: 227,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<(), ImageIoError> {
        if self.crop_size == 0 || self.output_size == 0 {
            return Err(ImageIoError::InvalidConfig(
                "crop and output sizes must be positive".to_string(),
            ));
        }
        if !self.rotation_deg.is_finite() || self.rotation_deg < 0.0 {
            return Err(ImageIoError::InvalidConfig(format!(
                "rotation range {} must be finite and >= 0",
                self.rotation_deg
            )));
        }
        let (lo, hi) = self.rescale;
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || hi < lo {
            return Err(ImageIoError::InvalidConfig(format!(
                "rescale range [{}, {}] must be positive and ordered",
                lo, hi
            )));
        }
        Ok(())
    }
}

/// Symmetric boundary reflection of an integer tap onto `0..len`.
/// -1 maps to 0, `len` maps to `len - 1`, and so on.
pub(crate) fn reflect(mut i: isize, len: usize) -> usize {
    let n = len as isize;
    debug_assert!(n > 0);
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Bilinear sample of one channel at a fractional position, with symmetric
/// reflection at the borders.
fn bilinear(img: &RgbImage, ch: usize, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (w, h) = (img.width(), img.height());
    let xi0 = reflect(x0 as isize, w);
    let xi1 = reflect(x0 as isize + 1, w);
    let yi0 = reflect(y0 as isize, h);
    let yi1 = reflect(y0 as isize + 1, h);
    let at = |xx: usize, yy: usize| img.data()[(yy * w + xx) * 3 + ch];
    let top = at(xi0, yi0) * (1.0 - fx) + at(xi1, yi0) * fx;
    let bot = at(xi0, yi1) * (1.0 - fx) + at(xi1, yi1) * fx;
    top * (1.0 - fy) + bot * fy
}

fn crop(img: &RgbImage, x0: usize, y0: usize, side: usize) -> RgbImage {
    let mut data = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        let row = ((y0 + y) * img.width() + x0) * 3;
        data.extend_from_slice(&img.data()[row..row + side * 3]);
    }
    RgbImage::new(side, side, data).expect("crop bounds validated by caller")
}

/// Bilinear resize with pixel-center alignment. A same-size resize returns
/// the input unchanged.
pub fn resize_bilinear(img: &RgbImage, out_h: usize, out_w: usize) -> RgbImage {
    if out_h == img.height() && out_w == img.width() {
        return img.clone();
    }
    let sy = img.height() as f64 / out_h as f64;
    let sx = img.width() as f64 / out_w as f64;
    let mut data = Vec::with_capacity(out_h * out_w * 3);
    for y in 0..out_h {
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..out_w {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            for ch in 0..3 {
                data.push(bilinear(img, ch, src_x, src_y));
            }
        }
    }
    RgbImage::new(out_h, out_w, data).expect("resize output is finite")
}

/// Rotates a square patch about its center by `deg` degrees, resampling
/// bilinearly with reflected borders. A zero angle returns the input
/// unchanged.
pub fn rotate_square(img: &RgbImage, deg: f64) -> RgbImage {
    assert_eq!(img.height(), img.width(), "rotation requires a square patch");
    if deg == 0.0 {
        return img.clone();
    }
    let side = img.height();
    let c = (side as f64 - 1.0) / 2.0;
    let (sin, cos) = deg.to_radians().sin_cos();
    let mut data = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        let dy = y as f64 - c;
        for x in 0..side {
            let dx = x as f64 - c;
            // Inverse map: rotate output coordinates by -deg.
            let sx = cos * dx + sin * dy + c;
            let sy = -sin * dx + cos * dy + c;
            for ch in 0..3 {
                data.push(bilinear(img, ch, sx, sy));
            }
        }
    }
    RgbImage::new(side, side, data).expect("rotation output is finite")
}

/// Randomized training view of an image and its ground truth.
///
/// Drawing order is fixed (crop x, crop y, angle, intensity factor) so a
/// given RNG state maps to exactly one view. When the source cannot fit a
/// `crop_size` square, the largest centered square is taken instead and the
/// position draws are skipped. With `rotation_deg = 0`, `rescale = (1, 1)`,
/// and `crop_size = output_size =` source size, the view is bit-identical to
/// the input.
pub fn augment_with_rng(
    img: &RgbImage,
    truth: &IlluminantRgb,
    cfg: &AugmentationConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(RgbImage, IlluminantRgb), ImageIoError> {
    cfg.validate()?;
    let side = cfg.crop_size.min(img.width()).min(img.height());
    let (x0, y0) = if side == cfg.crop_size {
        let x = rng.gen_range(0..=img.width() - side);
        let y = rng.gen_range(0..=img.height() - side);
        (x, y)
    } else {
        ((img.width() - side) / 2, (img.height() - side) / 2)
    };
    let angle = if cfg.rotation_deg > 0.0 {
        rng.gen_range(-cfg.rotation_deg..cfg.rotation_deg)
    } else {
        0.0
    };
    let factor = if cfg.rescale.0 < cfg.rescale.1 {
        rng.gen_range(cfg.rescale.0..cfg.rescale.1)
    } else {
        cfg.rescale.0
    };

    let mut patch = rotate_square(&crop(img, x0, y0, side), angle);
    if factor != 1.0 {
        for v in patch.data.iter_mut() {
            *v *= factor;
        }
    }
    let out = resize_bilinear(&patch, cfg.output_size, cfg.output_size);
    Ok((out, truth.scaled(factor)?))
}

/// [`augment_with_rng`] with a fresh ChaCha8 stream seeded from `seed`.
pub fn augment(
    img: &RgbImage,
    truth: &IlluminantRgb,
    cfg: &AugmentationConfig,
    seed: u64,
) -> Result<(RgbImage, IlluminantRgb), ImageIoError> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    augment_with_rng(img, truth, cfg, &mut rng)
}

/// Deterministic evaluation-time view: largest centered square, resized to
/// `target x target`.
pub fn center_crop_resize(img: &RgbImage, target: usize) -> Result<RgbImage, ImageIoError> {
    if target == 0 {
        return Err(ImageIoError::InvalidConfig(
            "target size must be positive".to_string(),
        ));
    }
    let side = img.width().min(img.height());
    let x0 = (img.width() - side) / 2;
    let y0 = (img.height() - side) / 2;
    Ok(resize_bilinear(&crop(img, x0, y0, side), target, target))
}

//! Decoding, encoding, and color correction.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use super::{ImageIoError, RgbImage};

/// Output sample depth for [`save_image`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    fn max_value(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> ImageIoError {
    ImageIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn decode_err(path: &Path, e: impl std::fmt::Display) -> ImageIoError {
    ImageIoError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Decodes an 8- or 16-bit RGB PNG or PNM file into linear `f64` samples.
///
/// Samples are divided by the container's maximum value (255 or 65535), or
/// by `2^bit_depth_hint - 1` when a hint is given; sensors that store, say,
/// 12-bit data in 16-bit PNGs pass `Some(12)`. Non-RGB color layouts are
/// errors, not silently converted.
pub fn load_image(
    path: impl AsRef<Path>,
    bit_depth_hint: Option<u32>,
) -> Result<RgbImage, ImageIoError> {
    let path = path.as_ref();
    if let Some(bits) = bit_depth_hint {
        if bits == 0 || bits > 16 {
            return Err(ImageIoError::InvalidConfig(format!(
                "bit depth hint {} outside 1..=16",
                bits
            )));
        }
    }
    let format = ImageFormat::from_path(path)
        .map_err(|_| ImageIoError::UnsupportedFormat {
            path: path.to_path_buf(),
        })?;
    let reader = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let img = match format {
        ImageFormat::Png => {
            let dec = image::codecs::png::PngDecoder::new(reader)
                .map_err(|e| decode_err(path, e))?;
            DynamicImage::from_decoder(dec).map_err(|e| decode_err(path, e))?
        }
        // The pnm decoder rescales samples so the declared maxval saturates
        // the 8- or 16-bit container, so the container max is the right
        // divisor here too.
        ImageFormat::Pnm => {
            let dec = image::codecs::pnm::PnmDecoder::new(reader)
                .map_err(|e| decode_err(path, e))?;
            DynamicImage::from_decoder(dec).map_err(|e| decode_err(path, e))?
        }
        _ => {
            return Err(ImageIoError::UnsupportedFormat {
                path: path.to_path_buf(),
            })
        }
    };
    let container_max = match &img {
        DynamicImage::ImageRgb8(_) => 255.0,
        DynamicImage::ImageRgb16(_) => 65535.0,
        other => {
            return Err(ImageIoError::UnsupportedColor {
                path: path.to_path_buf(),
                color: format!("{:?}", other.color()),
            })
        }
    };
    let max = match bit_depth_hint {
        Some(bits) => (1u32 << bits) as f64 - 1.0,
        None => container_max,
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageRgb8(buf) => buf.into_raw().iter().map(|&v| v as f64 / max).collect(),
        DynamicImage::ImageRgb16(buf) => buf.into_raw().iter().map(|&v| v as f64 / max).collect(),
        _ => unreachable!("filtered above"),
    };
    RgbImage::new(h, w, data)
}

/// Encodes an image as PNG or binary PNM, chosen by the file extension, at
/// the requested depth. Samples are quantized as `round(v * max)` and clamped
/// to the representable range, so saving and reloading already-quantized
/// values round-trips exactly.
pub fn save_image(
    path: impl AsRef<Path>,
    img: &RgbImage,
    depth: BitDepth,
) -> Result<(), ImageIoError> {
    let path = path.as_ref();
    let format = ImageFormat::from_path(path)
        .map_err(|_| ImageIoError::UnsupportedFormat {
            path: path.to_path_buf(),
        })?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Pnm) {
        return Err(ImageIoError::UnsupportedFormat {
            path: path.to_path_buf(),
        });
    }
    let max = depth.max_value();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let quant = |v: f64| (v * max).round().clamp(0.0, max);
    let dynimg = match depth {
        BitDepth::Eight => {
            let raw: Vec<u8> = img.data().iter().map(|&v| quant(v) as u8).collect();
            DynamicImage::ImageRgb8(
                image::RgbImage::from_raw(w, h, raw).expect("buffer sized from dimensions"),
            )
        }
        BitDepth::Sixteen => {
            let raw: Vec<u16> = img.data().iter().map(|&v| quant(v) as u16).collect();
            DynamicImage::ImageRgb16(
                image::ImageBuffer::from_raw(w, h, raw).expect("buffer sized from dimensions"),
            )
        }
    };
    dynimg
        .save_with_format(path, format)
        .map_err(|e| ImageIoError::Encode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Loads a 3x3 color correction matrix: nine whitespace-separated decimal
/// values, row-major.
pub fn load_ccm(path: impl AsRef<Path>) -> Result<[[f64; 3]; 3], ImageIoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let ccm_err = |message: String| ImageIoError::Ccm {
        path: path.to_path_buf(),
        message,
    };
    let mut values = [0.0; 9];
    let mut count = 0;
    for tok in text.split_whitespace() {
        if count == 9 {
            return Err(ccm_err("more than nine values".to_string()));
        }
        let v: f64 = tok
            .parse()
            .map_err(|_| ccm_err(format!("cannot parse {:?} as a number", tok)))?;
        if !v.is_finite() {
            return Err(ccm_err(format!("non-finite value {}", v)));
        }
        values[count] = v;
        count += 1;
    }
    if count != 9 {
        return Err(ccm_err(format!("expected nine values, found {}", count)));
    }
    Ok([
        [values[0], values[1], values[2]],
        [values[3], values[4], values[5]],
        [values[6], values[7], values[8]],
    ])
}

/// Applies a 3x3 color correction matrix to every pixel (`out = M * rgb`),
/// clamping negative results to zero.
pub fn apply_ccm(img: &RgbImage, ccm: &[[f64; 3]; 3]) -> RgbImage {
    let mut data = Vec::with_capacity(img.data().len());
    for px in img.data().chunks_exact(3) {
        for row in ccm {
            let v = row[0] * px[0] + row[1] * px[1] + row[2] * px[2];
            data.push(v.max(0.0));
        }
    }
    RgbImage::new(img.height(), img.width(), data).expect("same dimensions, finite values")
}

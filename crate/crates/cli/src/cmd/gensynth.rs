//! `bocf gensynth`: write a synthetic dataset whose ground truth is exact.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use bocf_core::imageio::{
    generate_synthetic_scene, save_image, write_manifest, BitDepth, IlluminantRgb, ManifestEntry,
    SceneSpec,
};

use crate::config::{pick, RunConfig};
use crate::output::write_config;
use crate::{CliError, GensynthArgs};

/// Reflectances the patchwork scenes draw from.
const PALETTE: [[f64; 3]; 8] = [
    [0.90, 0.15, 0.10],
    [0.15, 0.80, 0.20],
    [0.10, 0.25, 0.85],
    [0.85, 0.75, 0.15],
    [0.70, 0.25, 0.70],
    [0.20, 0.70, 0.75],
    [0.60, 0.45, 0.30],
    [0.35, 0.35, 0.35],
];

/// Quantizes each channel to the PNG grid, so the stored ground truth equals
/// the white patch's stored pixel exactly.
fn snap(light: &IlluminantRgb, max_value: f64) -> Result<IlluminantRgb, CliError> {
    let [r, g, b] = light.as_array();
    IlluminantRgb::new(
        (r * max_value).round() / max_value,
        (g * max_value).round() / max_value,
        (b * max_value).round() / max_value,
    )
    .map_err(|e| e.into())
}

pub fn run(args: &GensynthArgs) -> Result<(), CliError> {
    let file = RunConfig::load(&args.common.config)?;
    let count = pick(&args.n, &file.n, 50);
    let size = pick(&args.size, &file.size, 64);
    let patches = pick(&args.patches, &file.patches, 16);
    let white_patch = pick(&args.white_patch, &file.white_patch, true);
    let seed = pick(&args.common.seed, &file.seed, 0);
    let bit_depth_value = pick(&args.bit_depth, &file.bit_depth, 16);
    let out_dir = pick(
        &args.common.out_dir,
        &file.out_dir,
        PathBuf::from("synthetic"),
    );
    let (bit_depth, max_value) = match bit_depth_value {
        8 => (BitDepth::Eight, 255.0),
        16 => (BitDepth::Sixteen, 65535.0),
        other => {
            return Err(CliError::usage(format!(
                "bit depth {} is not supported (use 8 or 16)",
                other
            )))
        }
    };

    std::fs::create_dir_all(&out_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(count as usize);
    for i in 0..count {
        let light = IlluminantRgb::new(
            rng.gen_range(0.1..0.9),
            rng.gen_range(0.1..0.9),
            rng.gen_range(0.1..0.9),
        )?;
        let light = snap(&light, max_value)?;
        let spec = SceneSpec {
            patches,
            palette: PALETTE.to_vec(),
            white_patch,
            seed: rng.gen(),
        };
        let (scene, gt) = generate_synthetic_scene(&spec, &light, size)?;
        let name = format!("scene_{:04}.png", i);
        save_image(&out_dir.join(&name), &scene, bit_depth)?;
        entries.push(ManifestEntry {
            path: name.into(),
            illuminant: gt,
            camera: None,
        });
    }
    write_manifest(&out_dir.join("manifest.csv"), &entries)?;
    write_config(
        &out_dir,
        &json!({
            "out_dir": out_dir.display().to_string(),
            "seed": seed,
            "n": count,
            "size": size,
            "patches": patches,
            "white_patch": white_patch,
            "bit_depth": bit_depth_value,
        }),
    )?;
    println!("{}", out_dir.display());
    Ok(())
}

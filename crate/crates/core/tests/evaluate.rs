//! Recovery angular error, report statistics, and manifest evaluation tests.

use std::fs;

use approx::assert_relative_eq;
use bocf_core::evaluate::{
    evaluate_manifest, rae, rae_vectors, summarize, EstimateError, EvalError,
    IlluminantEstimator,
};
use bocf_core::imageio::{
    center_crop_resize, generate_synthetic_scene, save_image, write_manifest, BitDepth,
    DatasetManifest, IlluminantRgb, ManifestEntry, RgbImage, SceneSpec,
};
use bocf_core::statistical::{estimate_framework, FrameworkParams};
use proptest::prelude::*;
use tempfile::TempDir;

#[test]
fn rae_hand_geometry() {
    assert_eq!(rae_vectors(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 90.0);
    assert_relative_eq!(
        rae_vectors(&[1.0, 0.0, 0.0], &[1.0, 1.0, 0.0]).unwrap(),
        45.0,
        epsilon = 1e-9
    );
    assert_relative_eq!(
        rae_vectors(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(),
        44.415308597192976,
        epsilon = 1e-12
    );
    assert_relative_eq!(
        rae_vectors(&[1.0, 0.0, 0.0], &[-1.0, 0.0, 0.0]).unwrap(),
        180.0,
        epsilon = 1e-9
    );
}

#[test]
fn rae_of_identical_directions_is_exactly_zero() {
    let v = IlluminantRgb::new(0.37, 0.21, 0.42).unwrap();
    assert_eq!(rae(&v, &v), 0.0);
    // Simplex normalization only perturbs the direction at rounding level.
    assert!(rae(&v, &v.normalized()) < 1e-9);
    assert!(rae(&v, &v.scaled(7.3).unwrap()) < 1e-9);
}

#[test]
fn rae_is_symmetric_and_scale_invariant() {
    let a = [0.8, 0.15, 0.05];
    let b = [0.2, 0.3, 0.5];
    let fwd = rae_vectors(&a, &b).unwrap();
    assert_eq!(rae_vectors(&b, &a).unwrap(), fwd);
    // Doubling is exact, so the angle is bit-identical.
    let a2 = [1.6, 0.3, 0.1];
    assert_eq!(rae_vectors(&a2, &b).unwrap(), fwd);
    let a3: [f64; 3] = std::array::from_fn(|i| a[i] * 3.1);
    assert_relative_eq!(rae_vectors(&a3, &b).unwrap(), fwd, epsilon = 1e-12);
}

#[test]
fn rae_rejects_zero_vectors() {
    assert!(matches!(
        rae_vectors(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]),
        Err(EvalError::ZeroVector)
    ));
    assert!(matches!(
        rae_vectors(&[1.0, 1.0, 1.0], &[0.0, 0.0, 0.0]),
        Err(EvalError::ZeroVector)
    ));
}

#[test]
fn summarize_matches_the_frozen_reference() {
    let report = summarize(&[3.0, 1.0, 4.0, 1.5, 9.0, 2.6, 5.3, 0.5]).unwrap();
    assert_relative_eq!(report.mean, 3.3625, epsilon = 1e-12);
    assert_relative_eq!(report.median, 2.8, epsilon = 1e-12);
    assert_relative_eq!(report.trimean, 2.925, epsilon = 1e-12);
    assert_relative_eq!(report.best25, 0.75, epsilon = 1e-12);
    assert_relative_eq!(report.worst25, 7.15, epsilon = 1e-12);
    assert_eq!(report.n(), 8);
    // The raw errors keep their evaluation order.
    assert_eq!(report.errors[0], 3.0);
    assert_eq!(report.errors[4], 9.0);
}

#[test]
fn quartiles_use_the_interpolated_convention() {
    // 1..7: h(q) = 8q lands on integer ranks 2, 4, 6.
    let report = summarize(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]).unwrap();
    assert_eq!(report.median, 4.0);
    assert_eq!(report.trimean, 4.0);
    assert_eq!(report.best25, 1.5);
    assert_eq!(report.worst25, 6.5);

    let single = summarize(&[2.5]).unwrap();
    for v in [
        single.best25,
        single.mean,
        single.median,
        single.trimean,
        single.worst25,
    ] {
        assert_eq!(v, 2.5);
    }
}

#[test]
fn summarize_rejects_invalid_inputs() {
    assert!(matches!(summarize(&[]), Err(EvalError::EmptyErrors)));
    assert!(matches!(
        summarize(&[1.0, f64::NAN]),
        Err(EvalError::InvalidError(_))
    ));
    assert!(matches!(
        summarize(&[-0.1]),
        Err(EvalError::InvalidError(_))
    ));
    assert!(matches!(
        summarize(&[180.5]),
        Err(EvalError::InvalidError(_))
    ));
    assert!(summarize(&[0.0, 180.0]).is_ok());
}

#[test]
fn report_serializes_with_all_statistics() {
    let report = summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    let json = report.to_json();
    for key in ["best25", "mean", "median", "trimean", "worst25", "n"] {
        assert!(json.get(key).is_some(), "missing key {}", key);
    }
    assert_eq!(json["n"], 4);
    assert_eq!(json["mean"], 2.5);
    let text = report.to_text();
    assert!(text.contains("mean"));
    assert!(text.contains("2.500000000"));
    assert!(text.lines().count() >= 6);
}

/// Estimator that ignores the image and answers a fixed illuminant.
struct Fixed(IlluminantRgb);

impl IlluminantEstimator for Fixed {
    fn estimate_illuminant(&self, _image: &RgbImage) -> Result<IlluminantRgb, EstimateError> {
        Ok(self.0)
    }
}

/// Estimator that always fails.
struct Broken;

impl IlluminantEstimator for Broken {
    fn estimate_illuminant(&self, _image: &RgbImage) -> Result<IlluminantRgb, EstimateError> {
        Err(EstimateError("broken estimator".to_string()))
    }
}

/// Gray-World bound to a fixed input size, to exercise the resize path.
struct AtSize(usize);

impl IlluminantEstimator for AtSize {
    fn estimate_illuminant(&self, image: &RgbImage) -> Result<IlluminantRgb, EstimateError> {
        estimate_framework(image, &FrameworkParams::new(0, 1.0, 0.0).unwrap())
            .map_err(|e| EstimateError(e.to_string()))
    }

    fn input_size(&self) -> Option<usize> {
        Some(self.0)
    }
}

/// Writes `n` synthetic scenes into `dir` and returns the loaded manifest.
fn synthetic_dataset(dir: &TempDir, n: usize) -> DatasetManifest {
    let mut entries = Vec::new();
    for i in 0..n {
        let light = IlluminantRgb::new(
            0.3 + 0.02 * i as f64,
            0.35 - 0.01 * i as f64,
            0.2 + 0.03 * i as f64,
        )
        .unwrap();
        let spec = SceneSpec {
            patches: 9,
            palette: vec![[0.8, 0.2, 0.4], [0.3, 0.7, 0.5], [0.6, 0.4, 0.9]],
            white_patch: true,
            seed: i as u64,
        };
        let (img, gt) = generate_synthetic_scene(&spec, &light, 24).unwrap();
        let name = format!("scene{}.png", i);
        save_image(&dir.path().join(&name), &img, BitDepth::Sixteen).unwrap();
        entries.push(ManifestEntry {
            path: name.into(),
            illuminant: gt,
            camera: None,
        });
    }
    let manifest_path = dir.path().join("set.csv");
    write_manifest(&manifest_path, &entries).unwrap();
    DatasetManifest::load(&manifest_path).unwrap()
}

#[test]
fn manifest_evaluation_preserves_order_and_matches_direct_computation() {
    let dir = TempDir::new().unwrap();
    let manifest = synthetic_dataset(&dir, 5);
    let fixed = IlluminantRgb::new(0.4, 0.35, 0.25).unwrap();
    let outcome = evaluate_manifest(&Fixed(fixed), &manifest, 1).unwrap();

    assert_eq!(outcome.per_image.len(), 5);
    assert!(outcome.failures.is_empty());
    for (i, (path, err)) in outcome.per_image.iter().enumerate() {
        assert_eq!(path, &manifest.entries()[i].path);
        // The fixed estimator never looks at the image, so the error is a
        // pure function of the stored ground truth.
        let expected = rae(&manifest.entries()[i].illuminant, &fixed);
        assert_eq!(*err, expected);
    }
    assert_eq!(outcome.report.errors.len(), 5);
    assert_eq!(
        outcome.report.errors,
        outcome.per_image.iter().map(|(_, e)| *e).collect::<Vec<_>>()
    );
}

#[test]
fn worker_count_never_changes_the_result() {
    let dir = TempDir::new().unwrap();
    let manifest = synthetic_dataset(&dir, 6);
    let estimator = FrameworkParams::new(0, 4.0, 0.0).unwrap();
    let one = evaluate_manifest(&estimator, &manifest, 1).unwrap();
    let three = evaluate_manifest(&estimator, &manifest, 3).unwrap();
    assert_eq!(one.report.errors, three.report.errors);
    assert_eq!(one.report.mean, three.report.mean);
    let paths1: Vec<_> = one.per_image.iter().map(|(p, _)| p.clone()).collect();
    let paths3: Vec<_> = three.per_image.iter().map(|(p, _)| p.clone()).collect();
    assert_eq!(paths1, paths3);
}

#[test]
fn failures_are_collected_without_aborting() {
    let dir = TempDir::new().unwrap();
    let manifest = synthetic_dataset(&dir, 3);
    // Append one missing file and one undecodable file.
    let corrupt = dir.path().join("corrupt.png");
    fs::write(&corrupt, b"not a png at all").unwrap();
    let mut entries: Vec<ManifestEntry> = manifest.entries().to_vec();
    entries.push(ManifestEntry {
        path: dir.path().join("missing.png"),
        illuminant: IlluminantRgb::new(1.0, 1.0, 1.0).unwrap(),
        camera: None,
    });
    entries.push(ManifestEntry {
        path: corrupt.clone(),
        illuminant: IlluminantRgb::new(1.0, 1.0, 1.0).unwrap(),
        camera: None,
    });
    let path = dir.path().join("mixed.csv");
    write_manifest(&path, &entries).unwrap();
    let mixed = DatasetManifest::load(&path).unwrap();

    let fixed = Fixed(IlluminantRgb::new(1.0, 1.0, 1.0).unwrap());
    let outcome = evaluate_manifest(&fixed, &mixed, 1).unwrap();
    assert_eq!(outcome.per_image.len(), 3);
    assert_eq!(outcome.failures.len(), 2);
    assert!(outcome.failures[0].path.ends_with("missing.png"));
    assert!(outcome.failures[1].path.ends_with("corrupt.png"));
    assert!(!outcome.failures[0].message.is_empty());
}

#[test]
fn all_failures_is_an_error() {
    let dir = TempDir::new().unwrap();
    let manifest = synthetic_dataset(&dir, 2);
    assert!(matches!(
        evaluate_manifest(&Broken, &manifest, 1),
        Err(EvalError::NoSuccessfulImages)
    ));
    assert!(matches!(
        evaluate_manifest(&Broken, &manifest, 0),
        Err(EvalError::InvalidWorkers)
    ));
}

#[test]
fn fixed_size_estimators_see_the_center_crop() {
    let dir = TempDir::new().unwrap();
    // A non-square image so the crop geometry matters.
    let img = RgbImage::from_fn(12, 20, |x, y| {
        [
            0.1 + 0.04 * x as f64,
            0.9 - 0.05 * y as f64,
            0.2 + 0.02 * ((x + y) % 7) as f64,
        ]
    })
    .unwrap();
    let path = dir.path().join("wide.png");
    save_image(&path, &img, BitDepth::Sixteen).unwrap();
    let gt = IlluminantRgb::new(0.4, 0.4, 0.2).unwrap();
    write_manifest(
        &dir.path().join("one.csv"),
        &[ManifestEntry {
            path: path.clone(),
            illuminant: gt,
            camera: None,
        }],
    )
    .unwrap();
    let manifest = DatasetManifest::load(&dir.path().join("one.csv")).unwrap();

    let outcome = evaluate_manifest(&AtSize(8), &manifest, 1).unwrap();
    // Reproduce by hand: load (quantized), crop, resize, estimate.
    let reloaded = bocf_core::imageio::load_image(&path, None).unwrap();
    let cropped = center_crop_resize(&reloaded, 8).unwrap();
    let expected = estimate_framework(&cropped, &FrameworkParams::new(0, 1.0, 0.0).unwrap())
        .unwrap();
    assert_eq!(outcome.per_image[0].1, rae(&gt, &expected));
}

proptest! {
    #[test]
    fn report_statistics_are_ordered(
        errors in proptest::collection::vec(0.0f64..180.0, 1..50)
    ) {
        let r = summarize(&errors).unwrap();
        let lo = r.best25 - 1e-12;
        let hi = r.worst25 + 1e-12;
        for v in [r.mean, r.median, r.trimean] {
            prop_assert!(lo <= v && v <= hi, "{} outside [{}, {}]", v, r.best25, r.worst25);
        }
        prop_assert!(r.best25 >= 0.0 && r.worst25 <= 180.0);
    }

    #[test]
    fn rae_is_always_a_valid_error(
        a in proptest::array::uniform3(0.01f64..10.0),
        b in proptest::array::uniform3(0.01f64..10.0),
    ) {
        let e = rae_vectors(&a, &b).unwrap();
        prop_assert!((0.0..=180.0).contains(&e));
        // Positive octant vectors can never exceed 90 degrees apart.
        prop_assert!(e <= 90.0 + 1e-9);
    }
}

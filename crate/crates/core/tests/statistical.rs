//! Tests for the unified statistical estimator framework.

use approx::assert_relative_eq;
use bocf_core::evaluate::{rae, IlluminantEstimator};
use bocf_core::imageio::{generate_synthetic_scene, IlluminantRgb, RgbImage, SceneSpec};
use bocf_core::statistical::{
    estimate_framework, general_gray_world, gray_edge, gray_world, shades_of_gray, white_patch,
    FrameworkParams, StatError,
};
use proptest::prelude::*;

/// Fixed 4x4 test image shared with the oracle computations.
const IMG4: [[[f64; 3]; 4]; 4] = [
    [
        [0.10, 0.80, 0.30],
        [0.55, 0.20, 0.90],
        [0.35, 0.65, 0.05],
        [0.70, 0.40, 0.60],
    ],
    [
        [0.25, 0.15, 0.85],
        [0.95, 0.50, 0.10],
        [0.05, 0.75, 0.45],
        [0.60, 0.30, 0.20],
    ],
    [
        [0.45, 0.90, 0.65],
        [0.15, 0.05, 0.75],
        [0.85, 0.35, 0.55],
        [0.40, 0.60, 0.95],
    ],
    [
        [0.75, 0.25, 0.15],
        [0.30, 0.70, 0.40],
        [0.50, 0.10, 0.80],
        [0.20, 0.45, 0.35],
    ],
];

fn img4() -> RgbImage {
    RgbImage::from_fn(4, 4, |x, y| IMG4[y][x]).unwrap()
}

fn assert_estimate(got: IlluminantRgb, expected: [f64; 3]) {
    let g = got.as_array();
    for c in 0..3 {
        assert_relative_eq!(g[c], expected[c], epsilon = 1e-12, max_relative = 1e-12);
    }
}

#[test]
fn frozen_framework_estimates_match_the_oracles() {
    let img = img4();
    assert_estimate(
        gray_edge(&img, 2.0, 0.0).unwrap(),
        [0.3110592522924019, 0.3336064025004733, 0.35533434520712476],
    );
    assert_estimate(
        general_gray_world(&img, 4.0, 1.0).unwrap(),
        [0.32162664472027047, 0.31771046263380576, 0.36066289264592377],
    );
    assert_estimate(
        shades_of_gray(&img, 6.0).unwrap(),
        [0.32939113550133925, 0.3187364179422927, 0.35187244655636796],
    );
    let second_order = FrameworkParams::new(2, 1.0, 0.0).unwrap();
    assert_estimate(
        estimate_framework(&img, &second_order).unwrap(),
        [0.3130294518277739, 0.3257366504136229, 0.36123389775860315],
    );
    assert_estimate(
        gray_edge(&img, 2.0, 1.0).unwrap(),
        [0.3702623093180746, 0.22167858518348865, 0.4080591054984367],
    );
    let smoothed_hessian = FrameworkParams::new(2, 3.0, 1.0).unwrap();
    assert_estimate(
        estimate_framework(&img, &smoothed_hessian).unwrap(),
        [0.3286951241040256, 0.2492511763126893, 0.42205369958328515],
    );
}

#[test]
fn gray_world_is_the_normalized_channel_mean() {
    let img = img4();
    let mut sums = [0.0; 3];
    for px in img.data().chunks_exact(3) {
        for c in 0..3 {
            sums[c] += px[c];
        }
    }
    let total: f64 = sums.iter().sum();
    let est = gray_world(&img).unwrap().as_array();
    for c in 0..3 {
        assert_relative_eq!(est[c], sums[c] / total, epsilon = 1e-14);
    }
}

#[test]
fn white_patch_is_the_normalized_channel_max() {
    let img = img4();
    let mut maxs = [0.0f64; 3];
    for px in img.data().chunks_exact(3) {
        for c in 0..3 {
            maxs[c] = maxs[c].max(px[c]);
        }
    }
    let total: f64 = maxs.iter().sum();
    let est = white_patch(&img).unwrap().as_array();
    for c in 0..3 {
        assert_relative_eq!(est[c], maxs[c] / total, epsilon = 1e-14);
    }
}

#[test]
fn shades_of_gray_at_p1_is_gray_world_bitwise() {
    let img = img4();
    assert_eq!(
        shades_of_gray(&img, 1.0).unwrap().as_array(),
        gray_world(&img).unwrap().as_array()
    );
}

#[test]
fn exact_recovery_on_synthetic_scenes() {
    for seed in 0..20u64 {
        let light = IlluminantRgb::new(
            0.3 + 0.05 * (seed % 5) as f64,
            0.25 + 0.03 * (seed % 7) as f64,
            0.2 + 0.04 * (seed % 3) as f64,
        )
        .unwrap();

        // A perfect white reflector makes white_patch exact.
        let spec = SceneSpec {
            patches: 16,
            palette: vec![[0.3, 0.5, 0.2], [0.7, 0.2, 0.6], [0.4, 0.4, 0.8]],
            white_patch: true,
            seed,
        };
        let (img, gt) = generate_synthetic_scene(&spec, &light, 32).unwrap();
        let err = rae(&gt, &white_patch(&img).unwrap());
        assert!(err <= 1e-6, "white_patch error {} deg on seed {}", err, seed);

        // A single achromatic reflectance makes gray_world exact.
        let uniform = SceneSpec {
            patches: 1,
            palette: vec![[0.5, 0.5, 0.5]],
            white_patch: false,
            seed,
        };
        let (img, gt) = generate_synthetic_scene(&uniform, &light, 16).unwrap();
        let err = rae(&gt, &gray_world(&img).unwrap());
        assert!(err <= 1e-6, "gray_world error {} deg on seed {}", err, seed);
    }
}

#[test]
fn uniform_color_image_recovers_its_own_chromaticity() {
    let img = RgbImage::from_fn(5, 9, |_, _| [0.6, 0.3, 0.1]).unwrap();
    let est = gray_world(&img).unwrap().as_array();
    assert_estimate(IlluminantRgb::from_array(est).unwrap(), [0.6, 0.3, 0.1]);
}

#[test]
fn no_evidence_and_degenerate_paths() {
    // All-black image: zero energy under every instantiation.
    let black = RgbImage::new(3, 3, vec![0.0; 27]).unwrap();
    assert!(matches!(gray_world(&black), Err(StatError::NoEvidence)));

    // Constant image: zero derivative field for n >= 1.
    let flat = RgbImage::from_fn(6, 6, |_, _| [0.4, 0.5, 0.6]).unwrap();
    assert!(matches!(
        gray_edge(&flat, 2.0, 1.0),
        Err(StatError::NoEvidence)
    ));
    assert!(matches!(
        estimate_framework(&flat, &FrameworkParams::new(2, 1.0, 0.0).unwrap()),
        Err(StatError::NoEvidence)
    ));

    // A channel with no mass anywhere cannot produce a valid illuminant.
    let no_red = RgbImage::from_fn(4, 4, |_, _| [0.0, 0.5, 0.25]).unwrap();
    assert!(matches!(
        gray_world(&no_red),
        Err(StatError::DegenerateEstimate)
    ));
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(matches!(
        FrameworkParams::new(3, 1.0, 0.0),
        Err(StatError::InvalidParams(_))
    ));
    assert!(FrameworkParams::new(0, 0.0, 0.0).is_err());
    assert!(FrameworkParams::new(0, -2.0, 0.0).is_err());
    assert!(FrameworkParams::new(0, f64::NAN, 0.0).is_err());
    assert!(FrameworkParams::new(0, 1.0, -1.0).is_err());
    assert!(FrameworkParams::new(0, 1.0, f64::INFINITY).is_err());
    // p = +inf is the white-patch limit and is legal.
    assert!(FrameworkParams::new(0, f64::INFINITY, 0.0).is_ok());
    let p = FrameworkParams::new(1, 2.0, 0.5).unwrap();
    assert_eq!(p.derivative_order(), 1);
    assert_eq!(p.minkowski_p(), 2.0);
    assert_eq!(p.smoothing_sigma(), 0.5);
}

#[test]
fn estimates_are_scale_invariant() {
    let img = img4();
    let params = [
        FrameworkParams::new(0, 1.0, 0.0).unwrap(),
        FrameworkParams::new(0, 6.0, 0.0).unwrap(),
        FrameworkParams::new(1, 2.0, 1.0).unwrap(),
        FrameworkParams::new(2, 3.0, 1.0).unwrap(),
        FrameworkParams::new(0, f64::INFINITY, 0.0).unwrap(),
    ];
    // Doubling is exact in floating point, so the normalized estimate is
    // bit-identical; an arbitrary factor stays within rounding noise.
    let doubled =
        RgbImage::new(4, 4, img.data().iter().map(|v| v * 2.0).collect()).unwrap();
    let scaled =
        RgbImage::new(4, 4, img.data().iter().map(|v| v * 3.7).collect()).unwrap();
    for p in &params {
        let base = estimate_framework(&img, p).unwrap().as_array();
        assert_eq!(estimate_framework(&doubled, p).unwrap().as_array(), base);
        let s = estimate_framework(&scaled, p).unwrap().as_array();
        for c in 0..3 {
            assert_relative_eq!(s[c], base[c], epsilon = 1e-12);
        }
    }
}

#[test]
fn estimates_are_channel_equivariant() {
    let img = img4();
    let swapped = RgbImage::from_fn(4, 4, |x, y| {
        let [r, g, b] = IMG4[y][x];
        [b, g, r]
    })
    .unwrap();
    for p in [
        FrameworkParams::new(0, 4.0, 0.0).unwrap(),
        FrameworkParams::new(1, 2.0, 1.0).unwrap(),
    ] {
        let base = estimate_framework(&img, &p).unwrap().as_array();
        let perm = estimate_framework(&swapped, &p).unwrap().as_array();
        assert_eq!(perm, [base[2], base[1], base[0]]);
    }
}

#[test]
fn minkowski_norm_approaches_white_patch_as_p_grows() {
    let img = img4();
    let wp = white_patch(&img).unwrap();
    let mut last = f64::INFINITY;
    for p in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0] {
        let err = rae(&wp, &shades_of_gray(&img, p).unwrap());
        assert!(
            err <= last + 1e-6,
            "distance to the max estimate grew at p = {}: {} > {}",
            p,
            err,
            last
        );
        last = err;
    }

    // At p = 64 the limit is numerically reached on random scenes.
    for seed in 0..20u64 {
        let spec = SceneSpec {
            patches: 25,
            palette: vec![
                [0.8, 0.3, 0.2],
                [0.2, 0.7, 0.4],
                [0.3, 0.3, 0.9],
                [0.6, 0.6, 0.1],
            ],
            white_patch: true,
            seed,
        };
        let light = IlluminantRgb::new(0.45, 0.33, 0.22).unwrap();
        let (scene, _) = generate_synthetic_scene(&spec, &light, 40).unwrap();
        let gap = rae(
            &white_patch(&scene).unwrap(),
            &shades_of_gray(&scene, 64.0).unwrap(),
        );
        assert!(gap <= 0.5, "p=64 gap {} deg on seed {}", gap, seed);
    }
}

#[test]
fn framework_params_implement_the_estimator_trait() {
    let img = img4();
    let p = FrameworkParams::new(1, 2.0, 0.0).unwrap();
    let via_trait = p.estimate_illuminant(&img).unwrap();
    let direct = estimate_framework(&img, &p).unwrap();
    assert_eq!(via_trait.as_array(), direct.as_array());
    assert_eq!(p.input_size(), None);

    // Error text crosses the trait boundary.
    let flat = RgbImage::from_fn(4, 4, |_, _| [0.5, 0.5, 0.5]).unwrap();
    let err = FrameworkParams::new(1, 2.0, 0.0)
        .unwrap()
        .estimate_illuminant(&flat)
        .unwrap_err();
    assert!(err.0.contains("no evidence"));
}

proptest! {
    #[test]
    fn estimates_live_on_the_simplex(
        seed in 0u64..500,
        n in 0u8..3,
        p_idx in 0usize..4,
        sigma_idx in 0usize..2,
    ) {
        let p = [1.0, 2.0, 5.0, f64::INFINITY][p_idx];
        let sigma = [0.0, 1.0][sigma_idx];
        let spec = SceneSpec {
            patches: 9,
            palette: vec![[0.9, 0.4, 0.1], [0.2, 0.8, 0.5], [0.5, 0.2, 0.7]],
            white_patch: false,
            seed,
        };
        let light = IlluminantRgb::new(0.5, 0.35, 0.15).unwrap();
        let (img, _) = generate_synthetic_scene(&spec, &light, 16).unwrap();
        let params = FrameworkParams::new(n, p, sigma).unwrap();
        match estimate_framework(&img, &params) {
            Ok(est) => {
                let a = est.as_array();
                prop_assert!(a.iter().all(|v| *v > 0.0 && v.is_finite()));
                prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
            // A patch draw can tile the scene with one reflectance, which
            // leaves no derivative evidence; that is a legal outcome.
            Err(StatError::NoEvidence) => {}
            Err(other) => return Err(TestCaseError::fail(format!("{}", other))),
        }
    }
}

//! Property tests for the cross-module invariants.

use proptest::prelude::*;

use supercam_core::image::{IntensityImage, LabelMap};
use supercam_core::metrics::{
    boundary_precision_recall_with_radius, miou_error, under_segmentation_error, Bitmap,
    GroundTruth,
};
use supercam_core::sensor::{
    self, detection_probability, recover_single, ExposureScale, SensorConfig,
};
use supercam_core::supercam::{self, BlurKernel};

fn label_map_strategy(max_side: u32, max_labels: u32) -> impl Strategy<Value = LabelMap> {
    (1..=max_side, 1..=max_side, 1..=max_labels).prop_flat_map(|(w, h, k)| {
        proptest::collection::vec(0..k, (w * h) as usize)
            .prop_map(move |labels| LabelMap::from_labels(w, h, labels).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn voronoi_fill_matches_brute_force(
        (w, h) in (1u32..=32, 1u32..=32),
        raw_seeds in proptest::collection::vec((0u32..32, 0u32..32), 1..=64),
    ) {
        let seeds: Vec<(u32, u32)> =
            raw_seeds.iter().map(|&(x, y)| (x % w, y % h)).collect();
        let labels = supercam::voronoi_labels(&seeds, w, h).unwrap();
        for y in 0..h {
            for x in 0..w {
                let mut best = (u64::MAX, u32::MAX);
                for (id, &(sx, sy)) in seeds.iter().enumerate() {
                    let dx = sx.abs_diff(x) as u64;
                    let dy = sy.abs_diff(y) as u64;
                    let d = dx * dx + dy * dy;
                    if (d, id as u32) < best {
                        best = (d, id as u32);
                    }
                }
                prop_assert_eq!(labels.get(x, y), best.1);
            }
        }
    }

    #[test]
    fn blur_has_unit_dc_gain(
        (w, h) in (2u32..=24, 2u32..=24),
        (rx, ry) in (0u32..=4, 0u32..=4),
        value in 0.0f64..10.0,
    ) {
        let kernel = BlurKernel::from_radii(rx, ry);
        prop_assert!((kernel.taps_x().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!((kernel.taps_y().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let img = IntensityImage::constant(w, h, 1, value).unwrap();
        let blurred = supercam::gaussian_blur(&img, &kernel);
        for &v in blurred.data() {
            prop_assert!((v - value).abs() < 1e-9);
        }
    }

    #[test]
    fn recovery_round_trips_through_the_detection_probability(
        frames in 1u32..=512,
        c in 1e-3f64..10.0,
        s_frac in 0.0f64..1.0,
    ) {
        let config = SensorConfig {
            frames_per_exposure: frames,
            mean_photons_per_pixel: 0.5f64.min(frames as f64 / 2.0),
            ..Default::default()
        };
        let s = ((s_frac * frames as f64) as u32).min(frames - 1);
        let est = recover_single(s, frames, ExposureScale(c), &config);
        if est > 0.0 {
            let back = detection_probability(est, ExposureScale(c), &config);
            prop_assert!((back - s as f64 / frames as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn ue_is_relabel_invariant_and_nonnegative(
        s in label_map_strategy(10, 5),
        g_labels in proptest::collection::vec(0u32..4, 100),
        perm_seed in 0u64..1000,
    ) {
        let (w, h) = (s.width(), s.height());
        let g_map = LabelMap::from_labels(
            w, h,
            g_labels.iter().take((w * h) as usize).cloned().collect(),
        ).unwrap();
        let base = under_segmentation_error(&s, &GroundTruth::from_labels(g_map.clone())).unwrap();
        prop_assert!(base >= 0.0);

        // permute prediction ids with a seed-derived permutation
        let k = s.segment_count() as usize;
        let mut perm: Vec<u32> = (0..k as u32).collect();
        let mut rng = supercam_core::rng::SplitMix64::new(perm_seed);
        for i in (1..k).rev() {
            perm.swap(i, rng.below(i as u64 + 1) as usize);
        }
        let s2 = LabelMap::from_labels(
            w, h,
            s.labels().iter().map(|&l| perm[l as usize]).collect(),
        ).unwrap();
        let permuted = under_segmentation_error(&s2, &GroundTruth::from_labels(g_map)).unwrap();
        prop_assert_eq!(base, permuted);
    }

    #[test]
    fn miou_error_stays_in_unit_interval(
        s in label_map_strategy(10, 6),
        g in label_map_strategy(10, 6),
    ) {
        if s.width() == g.width() && s.height() == g.height() {
            let e = miou_error(&s, &GroundTruth::from_labels(g)).unwrap();
            prop_assert!((0.0..=1.0).contains(&e));
        }
    }

    #[test]
    fn true_positives_grow_with_the_radius(
        pred_bits in proptest::collection::vec(any::<bool>(), 64),
        gt_bits in proptest::collection::vec(any::<bool>(), 64),
    ) {
        let pred = Bitmap { width: 8, height: 8, data: pred_bits };
        let gt = Bitmap { width: 8, height: 8, data: gt_bits };
        let mut prev = 0;
        for r in 0..4 {
            let s = boundary_precision_recall_with_radius(&pred, &gt, r).unwrap();
            prop_assert!((0.0..=1.0).contains(&s.precision));
            prop_assert!((0.0..=1.0).contains(&s.recall));
            prop_assert!(s.true_positives >= prev);
            prev = s.true_positives;
        }
    }

    #[test]
    fn sampling_is_schedule_independent(
        seed in any::<u64>(),
        (w, h) in (1u32..=16, 1u32..=16),
        frames in 1u32..=32,
    ) {
        let img = IntensityImage::from_fn(w, h, 1, |x, y, _| {
            0.05 + ((x * 31 + y * 17) % 11) as f64 / 12.0
        }).unwrap();
        let config = SensorConfig {
            frames_per_exposure: frames,
            mean_photons_per_pixel: (frames as f64 / 4.0).min(2.0).max(0.1),
            ..Default::default()
        };
        let scale = sensor::compute_exposure_scale(&img, &config).unwrap();
        let par = sensor::sample_photon_cube(&img, 0, scale, &config, seed).unwrap();
        let seq = sensor::sample_photon_cube_seq(&img, 0, scale, &config, seed).unwrap();
        prop_assert_eq!(par, seq);
    }
}

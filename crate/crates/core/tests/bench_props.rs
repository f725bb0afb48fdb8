use contour_pose::assets::primitives::lbracket;
use contour_pose::bench::{
    add_error, perturb_pose, rotation_translation_errors, sample_gt_pose, trial_seed, vss_score,
    Mode,
};
use contour_pose::raster::Grid;
use contour_pose::{CameraIntrinsics, Pose, UnitQuaternion, Vec3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pose() -> impl Strategy<Value = Pose> {
    (
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
        (-0.2..0.2f64, -0.2..0.2f64, 0.4..1.2f64),
    )
        .prop_filter("non-degenerate", |((w, x, y, z), _)| {
            w * w + x * x + y * y + z * z > 1e-3
        })
        .prop_map(|((w, x, y, z), (tx, ty, tz))| {
            Pose::new(
                UnitQuaternion::normalize([w, x, y, z]).unwrap(),
                Vec3::new(tx, ty, tz),
            )
        })
}

proptest! {
    #[test]
    fn perturbation_has_the_requested_size(gt in pose(), angle in 0.0..90.0f64, frac in 0.0..1.0f64, seed: u64) {
        let p = perturb_pose(&gt, angle, frac, 0.2, seed);
        let e = rotation_translation_errors(&gt, &p);
        prop_assert!((e.rotation_deg - angle).abs() < 1e-6);
        prop_assert!((e.translation_m - 0.2 * frac).abs() < 1e-12);
        prop_assert_eq!(p, perturb_pose(&gt, angle, frac, 0.2, seed));
    }

    #[test]
    fn add_is_a_symmetric_mean_distance(a in pose(), b in pose()) {
        let mesh = lbracket(1.0).unwrap();
        let ab = add_error(&mesh, &a, &b);
        prop_assert!((ab - add_error(&mesh, &b, &a)).abs() < 1e-12);
        prop_assert_eq!(add_error(&mesh, &a, &a), 0.0);
        // Pure translation moves every vertex by the same vector.
        let shifted = Pose::new(a.rotation, a.translation + Vec3::new(0.01, -0.02, 0.0));
        prop_assert!((add_error(&mesh, &a, &shifted) - 0.05f64.sqrt() / 10.0).abs() < 1e-12);
    }

    #[test]
    fn vss_is_a_symmetric_ratio(bits_a in prop::collection::vec(any::<bool>(), 48), bits_b in prop::collection::vec(any::<bool>(), 48)) {
        let a = Grid::from_vec(8, 6, (0, 0), bits_a.clone()).unwrap();
        let b = Grid::from_vec(8, 6, (0, 0), bits_b.clone()).unwrap();
        let s = vss_score(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, vss_score(&b, &a).unwrap());
        prop_assert_eq!(vss_score(&a, &a).unwrap(), 1.0);
        let inter = bits_a.iter().zip(&bits_b).filter(|(x, y)| **x && **y).count();
        let union = bits_a.iter().zip(&bits_b).filter(|(x, y)| **x || **y).count();
        if union > 0 {
            prop_assert_eq!(s, inter as f64 / union as f64);
        }
    }

    #[test]
    fn sampled_poses_keep_the_window_in_frame(seed: u64, window in 50u32..400) {
        let k = CameraIntrinsics::vga();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = sample_gt_pose(&mut rng, &k, 0.5, window);
        prop_assert!((0.5..=1.0).contains(&p.translation.z));
        let (u, v) = k.project(p.translation).unwrap();
        let half = window as f64 / 2.0;
        prop_assert!(u >= half - 1e-6 && u <= k.width as f64 - 1.0 - half + 1e-6);
        prop_assert!(v >= half - 1e-6 && v <= k.height as f64 - 1.0 - half + 1e-6);
        // The object's +z axis never points away from the camera.
        prop_assert!(p.rotation.rotate(Vec3::new(0.0, 0.0, 1.0)).z <= 1e-9);
    }

    #[test]
    fn trial_seeds_are_position_dependent(base: u64, li in 0usize..20, t in 0usize..100) {
        let s = trial_seed(base, Mode::Rot, li, t);
        prop_assert_eq!(s, trial_seed(base, Mode::Rot, li, t));
        prop_assert_ne!(s, trial_seed(base, Mode::Trans, li, t));
        prop_assert_ne!(s, trial_seed(base, Mode::Rot, li, t + 1));
        prop_assert_ne!(s, trial_seed(base, Mode::Rot, li + 1, t));
    }
}

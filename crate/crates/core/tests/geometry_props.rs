use contour_pose::geometry::mesh_diameter;
use contour_pose::{CameraIntrinsics, Pose, TriangleMesh, UnitQuaternion, Vec3};
use nalgebra as na;
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = Vec3> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn quat() -> impl Strategy<Value = UnitQuaternion> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-degenerate", |(w, x, y, z)| {
            w * w + x * x + y * y + z * z > 1e-3
        })
        .prop_map(|(w, x, y, z)| UnitQuaternion::normalize([w, x, y, z]).unwrap())
}

fn pose() -> impl Strategy<Value = Pose> {
    (quat(), vec3()).prop_map(|(q, t)| Pose::new(q, t))
}

fn oracle(q: &UnitQuaternion) -> na::UnitQuaternion<f64> {
    let [w, x, y, z] = q.to_array();
    na::UnitQuaternion::from_quaternion(na::Quaternion::new(w, x, y, z))
}

fn na_vec(v: Vec3) -> na::Vector3<f64> {
    na::Vector3::new(v.x, v.y, v.z)
}

fn close(a: Vec3, b: na::Vector3<f64>, tol: f64) -> bool {
    (a.x - b.x).abs() < tol && (a.y - b.y).abs() < tol && (a.z - b.z).abs() < tol
}

proptest! {
    #[test]
    fn rotation_matches_matrix_oracle(q in quat(), v in vec3()) {
        let out = q.rotate(v);
        let m = oracle(&q).to_rotation_matrix();
        prop_assert!(close(out, m * na_vec(v), 1e-9));
        prop_assert!((out.norm() - v.norm()).abs() < 1e-9);
        let ours = q.to_matrix();
        for r in 0..3 {
            for c in 0..3 {
                prop_assert!((ours[r][c] - m[(r, c)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn compose_matches_oracle_product(a in quat(), b in quat(), v in vec3()) {
        let ab = a.compose(&b);
        prop_assert!(close(ab.rotate(v), oracle(&a) * oracle(&b) * na_vec(v), 1e-9));
        prop_assert!(ab.w() >= 0.0);
        prop_assert!(a.compose(&a.conjugate()).angle() < 1e-7);
    }

    #[test]
    fn angle_between_matches_oracle(a in quat(), b in quat()) {
        let ours = a.angle_between(&b);
        let theirs = oracle(&a).angle_to(&oracle(&b));
        prop_assert!((ours - theirs).abs() < 1e-6, "{} vs {}", ours, theirs);
        prop_assert!((ours - b.angle_between(&a)).abs() < 1e-12);
        let [w, x, y, z] = b.to_array();
        let flipped = UnitQuaternion::normalize([-w, -x, -y, -z]).unwrap();
        prop_assert!(a.angle_between(&flipped) - ours < 1e-12);
    }

    #[test]
    fn normalize_gives_canonical_unit(w in -3.0..3.0f64, x in -3.0..3.0f64, y in -3.0..3.0f64, z in -3.0..3.0f64) {
        prop_assume!(w * w + x * x + y * y + z * z > 1e-6);
        let q = UnitQuaternion::normalize([w, x, y, z]).unwrap();
        let n: f64 = q.to_array().iter().map(|c| c * c).sum();
        prop_assert!((n - 1.0).abs() < 1e-12);
        prop_assert!(q.w() >= 0.0);
    }

    #[test]
    fn apply_update_is_left_rotation_plus_translation(p in pose(), u in pose(), x in vec3()) {
        let out = p.apply_update(&u).transform_point(x);
        let expected = oracle(&u.rotation) * (oracle(&p.rotation) * na_vec(x)) + na_vec(p.translation + u.translation);
        prop_assert!(close(out, expected, 1e-9));
    }

    #[test]
    fn update_inverting_a_perturbation_recovers_the_pose(gt in pose(), dq in quat(), dt in vec3()) {
        let perturbed = gt.apply_update(&Pose::new(dq, dt));
        let back = perturbed.apply_update(&Pose::new(dq.conjugate(), dt * -1.0));
        prop_assert!(back.rotation.angle_between(&gt.rotation) < 1e-7);
        prop_assert!((back.translation - gt.translation).norm() < 1e-9);
    }

    #[test]
    fn backprojection_inverts_projection(u in 0.0..640.0f64, v in 0.0..480.0f64, d in 0.1..5.0f64) {
        let k = CameraIntrinsics::new(572.4, 573.6, 325.3, 242.0, 640, 480).unwrap();
        let p = k.backproject(u, v, d).unwrap();
        prop_assert!((p.z - d).abs() < 1e-12);
        let (pu, pv) = k.project(p).unwrap();
        prop_assert!((pu - u).abs() < 1e-6 && (pv - v).abs() < 1e-6);
    }

    #[test]
    fn diameter_is_brute_force_maximum(points in prop::collection::vec(vec3(), 3..50), q in quat()) {
        let n = points.len() as u32;
        let mesh = TriangleMesh::new(points.clone(), vec![[0, 1, 2], [0, 2, n - 1]]).unwrap();
        let mut brute: f64 = 0.0;
        for a in &points {
            for b in &points {
                brute = brute.max(((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt());
            }
        }
        let d = mesh_diameter(&mesh).unwrap();
        prop_assert!((d - brute).abs() < 1e-12);
        let rotated = mesh.transformed(|v| q.rotate(v));
        prop_assert!((mesh_diameter(&rotated).unwrap() - d).abs() < 1e-9);
    }
}

#[test]
fn pinhole_reference_values() {
    let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
    assert_eq!(k.project(Vec3::new(0.0, 0.0, 0.5)).unwrap(), (320.0, 240.0));
    let (u, v) = k.project(Vec3::new(0.1, 0.0, 0.5)).unwrap();
    assert!((u - 420.0).abs() < 1e-12 && v == 240.0);
    let p = k.backproject(420.0, 240.0, 0.5).unwrap();
    assert!((p - Vec3::new(0.1, 0.0, 0.5)).norm() < 1e-12);
    assert!(k.project(Vec3::new(0.0, 0.0, -1.0)).is_err());
}

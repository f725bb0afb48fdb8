//! Contour alignment energies and their analytic gradients.
//!
//! The visual loss transforms camera-space contour points of one view with a
//! rigid update `(q, t)`, projects them, and sums the distance-field values
//! found there:
//!
//! ```text
//! L(q, t, D, V) = Σ_{v ∈ V} D[π(q v q⁻¹ + t)]
//! ```
//!
//! The bidirectional loss adds the same energy evaluated the other way round,
//! with scene points on the hypothesis field under `(q⁻¹, -t)`.
//!
//! Gradients are taken with respect to the raw (unnormalized) quaternion and
//! the translation, 7 components in total: `[w, x, y, z, tx, ty, tz]`. The
//! quaternion part is the gradient of the loss composed with normalization,
//! so it is tangent to the unit sphere at the current rotation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, UnitQuaternion, Vec3};
use crate::raster::{ContourPointSet, DistanceField};

/// Default weight between rotation and translation in [`regression_loss`].
pub const DEFAULT_GAMMA: f64 = 1.0;

/// Rigid update `(q_Δ, t_Δ)` acting on camera-space points. The raw 4-vector
/// is kept so gradients can be taken through normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateParams {
    raw: [f64; 4],
    rotation: UnitQuaternion,
    translation: Vec3,
}

impl UpdateParams {
    pub const IDENTITY: UpdateParams = UpdateParams {
        raw: [1.0, 0.0, 0.0, 0.0],
        rotation: UnitQuaternion::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: UnitQuaternion, translation: Vec3) -> Self {
        Self {
            raw: rotation.to_array(),
            rotation,
            translation,
        }
    }

    /// Update from an arbitrary nonzero 4-vector.
    pub fn from_raw(raw: [f64; 4], translation: Vec3) -> Result<Self> {
        Ok(Self {
            raw,
            rotation: UnitQuaternion::normalize(raw)?,
            translation,
        })
    }

    pub fn raw(&self) -> [f64; 4] {
        self.raw
    }

    pub fn rotation(&self) -> UnitQuaternion {
        self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    pub fn as_pose(&self) -> Pose {
        Pose::new(self.rotation, self.translation)
    }

    /// `raw / |raw|` without sign canonicalization; derivatives are taken here.
    fn unit_raw(&self) -> ([f64; 4], f64) {
        let n = self.raw.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
            return (self.raw, 1.0);
        }
        (self.raw.map(|c| c / n), n)
    }
}

impl From<Pose> for UpdateParams {
    fn from(p: Pose) -> Self {
        Self::new(p.rotation, p.translation)
    }
}

/// Loss value, 7-component gradient and per-point residuals (pixels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossEval {
    pub value: f64,
    pub gradient: [f64; 7],
    pub residuals: Vec<f64>,
}

impl LossEval {
    /// Mean residual per contour point.
    pub fn mean(&self) -> f64 {
        if self.residuals.is_empty() {
            0.0
        } else {
            self.value / self.residuals.len() as f64
        }
    }

    fn accumulate(&mut self, other: LossEval) {
        self.value += other.value;
        for (g, o) in self.gradient.iter_mut().zip(other.gradient) {
            *g += o;
        }
        self.residuals.extend(other.residuals);
    }
}

/// How the second term of [`bidirectional_loss_with`] maps scene points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReverseTerm {
    /// `v ↦ q⁻¹ v q − t`: conjugate rotation and negated translation.
    #[default]
    Conjugate,
    /// `v ↦ q⁻¹ (v − t) q`: the exact inverse of the forward transform.
    ExactInverse,
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Reverse(ReverseTerm),
}

/// Jacobian of `q v q⁻¹` with respect to `(w, x, y, z)` at a unit `q`,
/// as three rows of four.
fn rotate_jacobian(q: [f64; 4], v: Vec3) -> [[f64; 4]; 3] {
    let w = q[0];
    let u = Vec3::new(q[1], q[2], q[3]);
    let uv = u.cross(v);
    let dw = uv * 2.0;
    let mut cols = [dw, Vec3::ZERO, Vec3::ZERO, Vec3::ZERO];
    let axes = [
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
    ];
    for (k, e) in axes.into_iter().enumerate() {
        let ev = e.cross(v);
        cols[k + 1] = ev * (2.0 * w) + (e.cross(uv) + u.cross(ev)) * 2.0;
    }
    [cols.map(|c| c.x), cols.map(|c| c.y), cols.map(|c| c.z)]
}

fn rotate_raw(q: [f64; 4], v: Vec3) -> Vec3 {
    let u = Vec3::new(q[1], q[2], q[3]);
    let uv = u.cross(v);
    v + uv * (2.0 * q[0]) + u.cross(uv) * 2.0
}

fn directional_term(
    update: &UpdateParams,
    field: &DistanceField,
    points: &ContourPointSet,
    k: &CameraIntrinsics,
    direction: Direction,
    mut rows: Option<&mut Vec<[f64; 7]>>,
) -> Result<LossEval> {
    if points.is_empty() {
        return Err(Error::EmptyContour);
    }
    let (qf, norm) = update.unit_raw();
    let t = update.translation;
    let conj = [qf[0], -qf[1], -qf[2], -qf[3]];

    let mut value = 0.0;
    let mut gq = [0.0; 4];
    let mut gt = Vec3::ZERO;
    let mut residuals = Vec::with_capacity(points.len());

    for (i, &v) in points.points.iter().enumerate() {
        // p = map(v), with dp/dq (3×4, w.r.t. the unit quaternion) and the
        // translation Jacobian applied later.
        let (p, jq) = match direction {
            Direction::Forward => (rotate_raw(qf, v) + t, rotate_jacobian(qf, v)),
            Direction::Reverse(ReverseTerm::Conjugate) => (
                rotate_raw(conj, v) - t,
                conj_jacobian(rotate_jacobian(conj, v)),
            ),
            Direction::Reverse(ReverseTerm::ExactInverse) => {
                let s = v - t;
                (rotate_raw(conj, s), conj_jacobian(rotate_jacobian(conj, s)))
            }
        };
        if !(p.z > 0.0) {
            return Err(Error::BehindCamera {
                index: Some(i),
                z: p.z,
            });
        }
        let inv_z = 1.0 / p.z;
        let u = k.fx * p.x * inv_z + k.cx;
        let w = k.fy * p.y * inv_z + k.cy;
        let s = field.sample(u, w);
        value += s.value;
        residuals.push(s.value);

        // dr/dp = ∇D · J_π
        let (gu, gv) = s.grad;
        let dp = Vec3::new(
            gu * k.fx * inv_z,
            gv * k.fy * inv_z,
            -(gu * k.fx * p.x + gv * k.fy * p.y) * inv_z * inv_z,
        );
        let gq_i: [f64; 4] =
            std::array::from_fn(|c| dp.x * jq[0][c] + dp.y * jq[1][c] + dp.z * jq[2][c]);
        let gt_i = match direction {
            Direction::Forward => dp,
            Direction::Reverse(ReverseTerm::Conjugate) => -dp,
            // dp/dt = -R(q⁻¹), so the contribution is -R(q⁻¹)ᵀ dp = -R(q) dp.
            Direction::Reverse(ReverseTerm::ExactInverse) => -rotate_raw(qf, dp),
        };
        for c in 0..4 {
            gq[c] += gq_i[c];
        }
        gt += gt_i;
        if let Some(rows) = rows.as_deref_mut() {
            rows.push(project_gradient(gq_i, gt_i, qf, norm));
        }
    }

    Ok(LossEval {
        value,
        gradient: project_gradient(gq, gt, qf, norm),
        residuals,
    })
}

/// Chains a unit-quaternion gradient through `q = raw / |raw|`, i.e. applies
/// `(I - q qᵀ) / |raw|`, and appends the translation part.
fn project_gradient(gq: [f64; 4], gt: Vec3, qf: [f64; 4], norm: f64) -> [f64; 7] {
    let dot: f64 = (0..4).map(|c| gq[c] * qf[c]).sum();
    let mut gradient = [0.0; 7];
    for c in 0..4 {
        gradient[c] = (gq[c] - dot * qf[c]) / norm;
    }
    gradient[4] = gt.x;
    gradient[5] = gt.y;
    gradient[6] = gt.z;
    gradient
}

/// Chain rule through conjugation: flips the sign of the vector columns.
fn conj_jacobian(j: [[f64; 4]; 3]) -> [[f64; 4]; 3] {
    j.map(|row| [row[0], -row[1], -row[2], -row[3]])
}

/// Sum of `field` values at the projections of `points` moved by `update`.
pub fn visual_loss(
    update: &UpdateParams,
    field: &DistanceField,
    points: &ContourPointSet,
    k: &CameraIntrinsics,
) -> Result<LossEval> {
    directional_term(update, field, points, k, Direction::Forward, None)
}

/// Forward term on the scene field plus the reverse term on the hypothesis
/// field, with the reverse term using the conjugate rotation and negated
/// translation.
pub fn bidirectional_loss(
    update: &UpdateParams,
    field_scene: &DistanceField,
    points_hyp: &ContourPointSet,
    field_hyp: &DistanceField,
    points_scene: &ContourPointSet,
    k: &CameraIntrinsics,
) -> Result<LossEval> {
    bidirectional_loss_with(
        update,
        field_scene,
        points_hyp,
        field_hyp,
        points_scene,
        k,
        ReverseTerm::Conjugate,
    )
}

pub fn bidirectional_loss_with(
    update: &UpdateParams,
    field_scene: &DistanceField,
    points_hyp: &ContourPointSet,
    field_hyp: &DistanceField,
    points_scene: &ContourPointSet,
    k: &CameraIntrinsics,
    reverse: ReverseTerm,
) -> Result<LossEval> {
    let mut total = directional_term(update, field_scene, points_hyp, k, Direction::Forward, None)?;
    total.accumulate(directional_term(
        update,
        field_hyp,
        points_scene,
        k,
        Direction::Reverse(reverse),
        None,
    )?);
    Ok(total)
}

/// A loss evaluation together with the gradient of every single residual,
/// laid out like [`LossEval::gradient`] and ordered like
/// [`LossEval::residuals`].
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub eval: LossEval,
    pub rows: Vec<[f64; 7]>,
}

/// [`visual_loss`] with per-residual gradients.
pub fn visual_linearization(
    update: &UpdateParams,
    field: &DistanceField,
    points: &ContourPointSet,
    k: &CameraIntrinsics,
) -> Result<Linearization> {
    let mut rows = Vec::with_capacity(points.len());
    let eval = directional_term(
        update,
        field,
        points,
        k,
        Direction::Forward,
        Some(&mut rows),
    )?;
    Ok(Linearization { eval, rows })
}

/// [`bidirectional_loss_with`] with per-residual gradients.
pub fn bidirectional_linearization(
    update: &UpdateParams,
    field_scene: &DistanceField,
    points_hyp: &ContourPointSet,
    field_hyp: &DistanceField,
    points_scene: &ContourPointSet,
    k: &CameraIntrinsics,
    reverse: ReverseTerm,
) -> Result<Linearization> {
    let mut rows = Vec::with_capacity(points_hyp.len() + points_scene.len());
    let mut eval = directional_term(
        update,
        field_scene,
        points_hyp,
        k,
        Direction::Forward,
        Some(&mut rows),
    )?;
    eval.accumulate(directional_term(
        update,
        field_hyp,
        points_scene,
        k,
        Direction::Reverse(reverse),
        Some(&mut rows),
    )?);
    Ok(Linearization { eval, rows })
}

/// Direct pose regression energy `‖q* − q/‖q‖‖ + γ‖t* − t‖` and its gradient
/// with respect to the raw quaternion and translation.
pub fn regression_loss(
    update: &UpdateParams,
    target_q: &UnitQuaternion,
    target_t: Vec3,
    gamma: f64,
) -> Result<(f64, [f64; 7])> {
    if !(gamma > 0.0) {
        return Err(Error::invalid("gamma must be positive"));
    }
    let (qf, norm) = update.unit_raw();
    let tq = target_q.to_array();
    let dq: [f64; 4] = std::array::from_fn(|c| qf[c] - tq[c]);
    let rot = dq.iter().map(|c| c * c).sum::<f64>().sqrt();
    let dt = update.translation - target_t;
    let trans = dt.norm();

    let mut gradient = [0.0; 7];
    if rot > 0.0 {
        let g: [f64; 4] = dq.map(|c| c / rot);
        let dot: f64 = (0..4).map(|c| g[c] * qf[c]).sum();
        for c in 0..4 {
            gradient[c] = (g[c] - dot * qf[c]) / norm;
        }
    }
    if trans > 0.0 {
        let g = dt * (gamma / trans);
        gradient[4] = g.x;
        gradient[5] = g.y;
        gradient[6] = g.z;
    }
    Ok((rot + gamma * trans, gradient))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::distance_transform;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 16.0, 16.0, 32, 32).unwrap()
    }

    /// Square contour of side 10 px centered in a 32×32 image at depth 1.
    fn square_scene() -> (DistanceField, ContourPointSet) {
        let mut px = Vec::new();
        for i in 11..=21 {
            px.extend([(i, 11), (i, 21), (11, i), (21, i)]);
        }
        px.sort_by_key(|p| (p.1, p.0));
        px.dedup();
        let field = distance_transform(&px, 32, 32).unwrap();
        let cam = k();
        let points = px
            .iter()
            .map(|p| cam.backproject(p.0 as f64, p.1 as f64, 1.0).unwrap())
            .collect();
        (
            field,
            ContourPointSet {
                points,
                pixels: px,
                source_pose: None,
            },
        )
    }

    #[test]
    fn identity_on_own_contour_is_zero() {
        let (field, points) = square_scene();
        let e = visual_loss(&UpdateParams::IDENTITY, &field, &points, &k()).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.residuals.len(), points.len());
        let b = bidirectional_loss(
            &UpdateParams::IDENTITY,
            &field,
            &points,
            &field,
            &points,
            &k(),
        )
        .unwrap();
        assert_eq!(b.value, 0.0);
        assert_eq!(b.residuals.len(), 2 * points.len());
    }

    #[test]
    fn translation_shift_costs_pixels() {
        let (field, points) = square_scene();
        // 0.02 m at depth 1 with f = 100 is 2 px.
        let up = UpdateParams::new(UnitQuaternion::IDENTITY, Vec3::new(0.02, 0.0, 0.0));
        let e = visual_loss(&up, &field, &points, &k()).unwrap();
        assert!((e.value - e.residuals.iter().sum::<f64>()).abs() < 1e-9);
        assert!(e.mean() > 0.0 && e.mean() <= 2.0 + 1e-9);
        assert!(e.gradient[4] > 0.0);
    }

    #[test]
    fn linearization_rows_add_up_to_the_gradient() {
        let (field, points) = square_scene();
        let q = UnitQuaternion::from_axis_angle(Vec3::new(0.3, -0.2, 1.0), 0.05).unwrap();
        let up = UpdateParams::new(q, Vec3::new(0.013, -0.007, 0.02));
        for reverse in [ReverseTerm::Conjugate, ReverseTerm::ExactInverse] {
            let lin =
                bidirectional_linearization(&up, &field, &points, &field, &points, &k(), reverse)
                    .unwrap();
            let plain =
                bidirectional_loss_with(&up, &field, &points, &field, &points, &k(), reverse)
                    .unwrap();
            assert_eq!(lin.eval, plain);
            assert_eq!(lin.rows.len(), lin.eval.residuals.len());
            for c in 0..7 {
                let sum: f64 = lin.rows.iter().map(|r| r[c]).sum();
                assert!(
                    (sum - plain.gradient[c]).abs() < 1e-9,
                    "{c}: {sum} vs {}",
                    plain.gradient[c]
                );
            }
        }
        let lin = visual_linearization(&up, &field, &points, &k()).unwrap();
        assert_eq!(lin.eval, visual_loss(&up, &field, &points, &k()).unwrap());
    }

    #[test]
    fn behind_camera_names_the_point() {
        let (field, points) = square_scene();
        let up = UpdateParams::new(UnitQuaternion::IDENTITY, Vec3::new(0.0, 0.0, -2.0));
        match visual_loss(&up, &field, &points, &k()) {
            Err(Error::BehindCamera { index: Some(0), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn regression_loss_cases() {
        let q = UnitQuaternion::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), 0.3).unwrap();
        let t = Vec3::new(0.1, 0.0, 0.2);
        let exact = UpdateParams::new(q, t);
        assert_eq!(regression_loss(&exact, &q, t, 1.0).unwrap().0, 0.0);

        let off = UpdateParams::new(q, t + Vec3::new(0.1, 0.0, 0.0));
        let (v1, _) = regression_loss(&off, &q, t, 1.0).unwrap();
        assert!((v1 - 0.1).abs() < 1e-15);
        let (v2, _) = regression_loss(&off, &q, t, 2.0).unwrap();
        assert!((v2 - 0.2).abs() < 1e-15);
        assert!(regression_loss(&off, &q, t, 0.0).is_err());
        assert!(UpdateParams::from_raw([0.0; 4], t).is_err());
    }

    #[test]
    fn regression_gradient_matches_differences() {
        let q = UnitQuaternion::from_axis_angle(Vec3::new(0.2, 1.0, -0.4), 0.5).unwrap();
        let target_t = Vec3::new(0.05, -0.02, 0.1);
        let up = UpdateParams::from_raw([0.9, 0.1, -0.3, 0.2], Vec3::new(0.0, 0.01, 0.0)).unwrap();
        let (_, g) = regression_loss(&up, &q, target_t, 1.5).unwrap();
        let h = 1e-7;
        for c in 0..7 {
            let shifted = |s: f64| {
                let mut raw = up.raw();
                let mut t = up.translation().to_array();
                if c < 4 {
                    raw[c] += s;
                } else {
                    t[c - 4] += s;
                }
                let u = UpdateParams::from_raw(raw, t.into()).unwrap();
                regression_loss(&u, &q, target_t, 1.5).unwrap().0
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            assert!((fd - g[c]).abs() < 1e-6, "component {c}: {fd} vs {}", g[c]);
        }
    }
}

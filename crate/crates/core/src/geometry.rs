//! Rigid-body math: vectors, unit quaternions, poses, the pinhole camera and
//! triangle meshes.
//!
//! Quaternions follow the Hamilton convention with components ordered
//! `(w, x, y, z)`. Every [`UnitQuaternion`] is stored in canonical form with
//! `w >= 0`, so `q` and `-q` compare equal after construction.
//!
//! Pixel coordinates put the center of pixel `(i, j)` at `(u, v) = (i, j)`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Unit quaternion in canonical `w >= 0` form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes a raw `(w, x, y, z)` 4-vector.
    pub fn normalize(raw: [f64; 4]) -> Result<Self> {
        let n = raw.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::invalid(
                "cannot normalize a zero or non-finite quaternion",
            ));
        }
        Ok(Self::canonical(
            raw[0] / n,
            raw[1] / n,
            raw[2] / n,
            raw[3] / n,
        ))
    }

    /// Rotation by `angle` radians about `axis` (right-hand rule).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Result<Self> {
        let axis = axis
            .normalized()
            .ok_or_else(|| Error::invalid("rotation axis must be nonzero"))?;
        let (s, c) = (0.5 * angle).sin_cos();
        Ok(Self::canonical(c, axis.x * s, axis.y * s, axis.z * s))
    }

    /// Rotation vector (axis scaled by angle). A zero vector gives the identity.
    pub fn from_rotation_vector(omega: Vec3) -> Self {
        let angle = omega.norm();
        if angle < 1e-300 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let axis = omega * (1.0 / angle);
        Self::canonical(c, axis.x * s, axis.y * s, axis.z * s)
    }

    /// Shortest-arc rotation taking direction `from` onto direction `to`.
    pub fn rotation_between(from: Vec3, to: Vec3) -> Result<Self> {
        let a = from
            .normalized()
            .ok_or_else(|| Error::invalid("zero direction"))?;
        let b = to
            .normalized()
            .ok_or_else(|| Error::invalid("zero direction"))?;
        let d = a.dot(b);
        if d < -1.0 + 1e-12 {
            // Antiparallel: any perpendicular axis works.
            let helper = if a.x.abs() < 0.9 {
                Vec3::new(1.0, 0.0, 0.0)
            } else {
                Vec3::new(0.0, 1.0, 0.0)
            };
            return Self::from_axis_angle(a.cross(helper), std::f64::consts::PI);
        }
        let c = a.cross(b);
        Self::normalize([1.0 + d, c.x, c.y, c.z])
    }

    fn canonical(w: f64, x: f64, y: f64, z: f64) -> Self {
        let flip = w < 0.0
            || (w == 0.0
                && [x, y, z]
                    .into_iter()
                    .find(|c| *c != 0.0)
                    .is_some_and(|c| c < 0.0));
        if flip {
            Self {
                w: -w,
                x: -x,
                y: -y,
                z: -z,
            }
        } else {
            Self { w, x, y, z }
        }
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn conjugate(&self) -> Self {
        Self::canonical(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self * other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &UnitQuaternion) -> Self {
        let [a, b] = [self.to_array(), other.to_array()];
        let raw = hamilton(a, b);
        // Renormalize to stop drift over long composition chains.
        Self::normalize(raw).unwrap_or(Self::IDENTITY)
    }

    /// `q v q⁻¹` for a unit quaternion.
    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let u = self.vector();
        let uv = u.cross(v);
        v + uv * (2.0 * self.w) + u.cross(uv) * 2.0
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        2.0 * self.vector().norm().atan2(self.w.abs())
    }

    /// Angle of the relative rotation `a · b⁻¹`, in `[0, π]`.
    pub fn angle_between(&self, other: &UnitQuaternion) -> f64 {
        self.compose(&other.conjugate()).angle()
    }

    /// Row-major 3×3 rotation matrix.
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl TryFrom<[f64; 4]> for UnitQuaternion {
    type Error = Error;
    fn try_from(raw: [f64; 4]) -> Result<Self> {
        Self::normalize(raw)
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> Self {
        q.to_array()
    }
}

/// Hamilton product of raw `(w, x, y, z)` 4-vectors.
pub(crate) fn hamilton(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// Rigid transform from the object frame into camera space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: UnitQuaternion,
    pub translation: Vec3,
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        rotation: UnitQuaternion::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: UnitQuaternion, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(UnitQuaternion::IDENTITY, translation)
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    /// Applies a correction `(R_Δ, t_Δ)`: `R' = R_Δ · R`, `t' = t + t_Δ`.
    ///
    /// Rotation is left-multiplied and translation is added; the update does
    /// not rotate the current translation.
    pub fn apply_update(&self, update: &Pose) -> Pose {
        Pose {
            rotation: update.rotation.compose(&self.rotation),
            translation: self.translation + update.translation,
        }
    }
}

/// Zero-skew, distortion-free pinhole camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// 640×480 VGA camera with the focal length of a typical RGB-D sensor.
    pub fn vga() -> Self {
        Self {
            fx: 572.4,
            fy: 573.6,
            cx: 325.3,
            cy: 242.0,
            width: 640,
            height: 480,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::invalid("principal point must be finite"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image size must be at least 1×1"));
        }
        Ok(())
    }

    pub fn project(&self, p: Vec3) -> Result<(f64, f64)> {
        if !(p.z > 0.0) {
            return Err(Error::BehindCamera {
                index: None,
                z: p.z,
            });
        }
        Ok((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Result<Vec3> {
        if !(depth > 0.0) || !depth.is_finite() {
            return Err(Error::invalid(format!(
                "depth must be positive, got {depth}"
            )));
        }
        Ok(Vec3::new(
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        ))
    }
}

/// Indexed triangle mesh in the object frame (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::invalid("mesh needs at least one triangle"));
        }
        if let Some(v) = vertices.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite vertex {v:?}")));
        }
        let n = vertices.len();
        if let Some(t) = triangles
            .iter()
            .find(|t| t.iter().any(|&i| i as usize >= n))
        {
            return Err(Error::invalid(format!(
                "triangle {t:?} references a vertex out of range ({n} vertices)"
            )));
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    /// Maximum pairwise vertex distance, by brute force.
    pub fn diameter(&self) -> Result<f64> {
        mesh_diameter(self)
    }

    /// Largest vertex distance from the object-frame origin.
    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn transformed(&self, f: impl Fn(Vec3) -> Vec3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }
}

pub fn mesh_diameter(mesh: &TriangleMesh) -> Result<f64> {
    let v = mesh.vertices();
    if v.len() < 2 {
        return Err(Error::invalid("diameter needs at least two vertices"));
    }
    let mut best = 0.0f64;
    for (i, a) in v.iter().enumerate() {
        for b in &v[i + 1..] {
            best = best.max((*a - *b).norm_squared());
        }
    }
    Ok(best.sqrt())
}

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, TriangleMesh, Vec3};

use super::{DepthMap, Grid, BACKGROUND_DEPTH};

/// Minimum camera-space depth a vertex may have. There is no near-plane
/// clipping, so anything closer is rejected.
pub const NEAR_PLANE: f64 = 1e-4;

/// Z-buffer render of `mesh` under `pose`. Pixels are point-sampled at their
/// centers with the top-left fill rule.
pub fn render_depth(mesh: &TriangleMesh, pose: &Pose, k: &CameraIntrinsics) -> Result<DepthMap> {
    let mut depth = Grid::new(k.width, k.height, BACKGROUND_DEPTH);
    let mut screen = Vec::with_capacity(mesh.vertices().len());
    for (i, &v) in mesh.vertices().iter().enumerate() {
        let p = pose.transform_point(v);
        if !(p.z > NEAR_PLANE) {
            return Err(Error::DegenerateGeometry(format!(
                "vertex {i} at depth {} is behind the near plane",
                p.z
            )));
        }
        let (u, v) = k.project(p)?;
        screen.push(Vec3::new(u, v, p.z));
    }
    for tri in mesh.triangles() {
        let [a, b, c] = tri.map(|i| screen[i as usize]);
        rasterize_triangle([a, b, c], k.width, k.height, |x, y, z| {
            let cell = &mut depth.data[y as usize * k.width as usize + x as usize];
            if z < *cell {
                *cell = z;
            }
        });
    }
    Ok(depth)
}

/// Keeps `target` pixels that are strictly closer than `occluder`; everything
/// else becomes background.
pub fn composite_visible(target: &DepthMap, occluder: &DepthMap) -> Result<DepthMap> {
    if target.width() != occluder.width()
        || target.height() != occluder.height()
        || target.origin() != occluder.origin()
    {
        return Err(Error::invalid("depth maps must share the same raster"));
    }
    let data = target
        .data()
        .iter()
        .zip(occluder.data())
        .map(|(&t, &o)| if t < o { t } else { BACKGROUND_DEPTH })
        .collect();
    Ok(Grid::from_vec(target.width(), target.height(), target.origin(), data).expect("same size"))
}

/// Edge function evaluated with a canonical endpoint order so that an edge
/// shared by two triangles yields exactly opposite values in both.
#[inline]
fn edge(a: Vec3, b: Vec3, px: f64, py: f64) -> f64 {
    let swapped = (b.x, b.y) < (a.x, a.y);
    let (p, q) = if swapped { (b, a) } else { (a, b) };
    let e = (q.x - p.x) * (py - p.y) - (q.y - p.y) * (px - p.x);
    if swapped {
        -e
    } else {
        e
    }
}

/// Top or left edge for a triangle wound with positive `edge` area
/// (clockwise on screen with y pointing down).
#[inline]
fn is_top_left(a: Vec3, b: Vec3) -> bool {
    let dy = b.y - a.y;
    let dx = b.x - a.x;
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

/// Rasterizes one screen-space triangle given as `(u, v, camera depth)` and
/// calls `emit(x, y, depth)` for every covered pixel center. Depth is
/// interpolated perspective-correctly (linear in `1/z`).
pub fn rasterize_triangle(
    tri: [Vec3; 3],
    width: u32,
    height: u32,
    mut emit: impl FnMut(u32, u32, f64),
) {
    let [a, mut b, mut c] = tri;
    let area = edge(a, b, c.x, c.y);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    if area < 0.0 {
        std::mem::swap(&mut b, &mut c);
    }

    let min_x = a.x.min(b.x).min(c.x).ceil().max(0.0);
    let max_x = a.x.max(b.x).max(c.x).floor().min(width as f64 - 1.0);
    let min_y = a.y.min(b.y).min(c.y).ceil().max(0.0);
    let max_y = a.y.max(b.y).max(c.y).floor().min(height as f64 - 1.0);
    if min_x > max_x || min_y > max_y {
        return;
    }

    let edges = [(b, c), (c, a), (a, b)];
    let top_left = edges.map(|(p, q)| is_top_left(p, q));
    let inv_z = [1.0 / a.z, 1.0 / b.z, 1.0 / c.z];

    for y in min_y as u32..=max_y as u32 {
        let py = y as f64;
        for x in min_x as u32..=max_x as u32 {
            let px = x as f64;
            let mut w = [0.0; 3];
            let mut inside = true;
            for (k, (p, q)) in edges.iter().enumerate() {
                let e = edge(*p, *q, px, py);
                if e < 0.0 || (e == 0.0 && !top_left[k]) {
                    inside = false;
                    break;
                }
                w[k] = e;
            }
            if !inside {
                continue;
            }
            let sum = w[0] + w[1] + w[2];
            let recip = (w[0] * inv_z[0] + w[1] * inv_z[1] + w[2] * inv_z[2]) / sum;
            emit(x, y, 1.0 / recip);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::UnitQuaternion;

    fn k(width: u32, height: u32) -> CameraIntrinsics {
        CameraIntrinsics::new(
            100.0,
            100.0,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
        )
        .unwrap()
    }

    /// Camera-space triangle mesh placed with the identity pose.
    fn mesh(tris: &[[Vec3; 3]]) -> TriangleMesh {
        let vertices = tris.iter().flatten().copied().collect();
        let triangles = (0..tris.len() as u32)
            .map(|i| [3 * i, 3 * i + 1, 3 * i + 2])
            .collect();
        TriangleMesh::new(vertices, triangles).unwrap()
    }

    #[test]
    fn constant_depth_triangle_covers_image() {
        let big = [
            Vec3::new(-10.0, -10.0, 1.0),
            Vec3::new(30.0, -10.0, 1.0),
            Vec3::new(-10.0, 30.0, 1.0),
        ];
        let depth = render_depth(&mesh(&[big]), &Pose::IDENTITY, &k(16, 12)).unwrap();
        assert!(depth.data().iter().all(|&d| d == 1.0));
    }

    #[test]
    fn nearer_triangle_wins() {
        let far = [
            Vec3::new(-10.0, -10.0, 1.0),
            Vec3::new(30.0, -10.0, 1.0),
            Vec3::new(-10.0, 30.0, 1.0),
        ];
        let near = [
            Vec3::new(-0.02, -0.02, 0.5),
            Vec3::new(0.02, -0.02, 0.5),
            Vec3::new(-0.02, 0.02, 0.5),
        ];
        let depth = render_depth(&mesh(&[near, far]), &Pose::IDENTITY, &k(16, 12)).unwrap();
        assert_eq!(depth.get(6, 5), 0.5);
        assert_eq!(depth.get(0, 0), 1.0);
        let depth2 = render_depth(&mesh(&[far, near]), &Pose::IDENTITY, &k(16, 12)).unwrap();
        assert_eq!(depth, depth2);
    }

    #[test]
    fn shared_edges_are_covered_once() {
        // A quad split along a diagonal with non-integer corners, plus a fan
        // of triangles around an interior vertex.
        let corners = [(1.3, 1.7), (13.2, 2.1), (12.6, 10.9), (0.4, 9.5)];
        let center = (6.5, 6.0);
        let mut tris = Vec::new();
        for i in 0..4 {
            let (p, q) = (corners[i], corners[(i + 1) % 4]);
            tris.push([
                Vec3::new(center.0, center.1, 1.0),
                Vec3::new(p.0, p.1, 1.0),
                Vec3::new(q.0, q.1, 1.0),
            ]);
        }
        // Pixel-aligned diagonal edge: many centers land exactly on it.
        tris.push([
            Vec3::new(2.0, 12.0, 1.0),
            Vec3::new(10.0, 12.0, 1.0),
            Vec3::new(10.0, 20.0, 1.0),
        ]);
        tris.push([
            Vec3::new(2.0, 12.0, 1.0),
            Vec3::new(10.0, 20.0, 1.0),
            Vec3::new(2.0, 20.0, 1.0),
        ]);

        let mut count = vec![0u32; 16 * 24];
        for t in &tris {
            rasterize_triangle(*t, 16, 24, |x, y, _| count[(y * 16 + x) as usize] += 1);
        }
        assert!(count.iter().all(|&c| c <= 1), "a pixel was covered twice");
        // Interior of the aligned square [2,10)×[12,20) is fully covered once.
        for y in 12..20 {
            for x in 2..10 {
                assert_eq!(count[(y * 16 + x) as usize], 1, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn perspective_correct_depth_on_slanted_plane() {
        // Plane z = 1 + 0.5 x seen through the camera; interpolated depth
        // must match ray/plane intersection at every covered pixel.
        let cam = k(64, 64);
        let tri = [
            Vec3::new(-0.2, -0.2, 0.9),
            Vec3::new(0.2, -0.2, 1.1),
            Vec3::new(-0.2, 0.25, 0.9),
        ];
        let depth = render_depth(&mesh(&[tri]), &Pose::IDENTITY, &cam).unwrap();
        let mut checked = 0;
        for y in 0..64 {
            for x in 0..64 {
                let d = depth.get(x, y);
                if d.is_finite() {
                    let rx = (x as f64 - cam.cx) / cam.fx;
                    let z = 1.0 / (1.0 - 0.5 * rx);
                    assert!((d - z).abs() < 1e-12, "({x},{y}) {d} vs {z}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn behind_near_plane_is_rejected() {
        let tri = [
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 1.0),
        ];
        assert!(matches!(
            render_depth(&mesh(&[tri]), &Pose::IDENTITY, &k(8, 8)),
            Err(Error::DegenerateGeometry(_))
        ));
        let ok = mesh(&[[
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.1, 0.0, 1.0),
            Vec3::new(0.0, 0.1, 1.0),
        ]]);
        let flipped = Pose::new(
            UnitQuaternion::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), std::f64::consts::PI)
                .unwrap(),
            Vec3::ZERO,
        );
        assert!(render_depth(&ok, &flipped, &k(8, 8)).is_err());
    }

    #[test]
    fn composite_keeps_only_unoccluded_target() {
        let mut target = Grid::new(3, 1, BACKGROUND_DEPTH);
        let mut occ = Grid::new(3, 1, BACKGROUND_DEPTH);
        target.set(0, 0, 1.0);
        target.set(1, 0, 1.0);
        occ.set(1, 0, 0.5);
        occ.set(2, 0, 0.5);
        let vis = composite_visible(&target, &occ).unwrap();
        assert_eq!(vis.data(), &[1.0, BACKGROUND_DEPTH, BACKGROUND_DEPTH]);
    }
}

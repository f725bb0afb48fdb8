use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, TriangleMesh, UnitQuaternion, Vec3};

use super::{extract_silhouette, render_depth, Grid, Pixel, Sentinel, SilhouetteMask};

/// Padding added on top of the largest silhouette extent.
pub const DEFAULT_WINDOW_PADDING: f64 = 0.2;

/// Inclusive pixel bounds in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub min: Pixel,
    pub max: Pixel,
}

impl BoundingBox {
    pub fn width(&self) -> i64 {
        self.max.0 - self.min.0 + 1
    }

    pub fn height(&self) -> i64 {
        self.max.1 - self.min.1 + 1
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.min.0 + self.max.0) as f64,
            0.5 * (self.min.1 + self.max.1) as f64,
        )
    }
}

pub fn mask_bounding_box(mask: &SilhouetteMask) -> Option<BoundingBox> {
    let mut bb: Option<BoundingBox> = None;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                let p = mask.to_image(x, y);
                bb = Some(match bb {
                    None => BoundingBox { min: p, max: p },
                    Some(b) => BoundingBox {
                        min: (b.min.0.min(p.0), b.min.1.min(p.1)),
                        max: (b.max.0.max(p.0), b.max.1.max(p.1)),
                    },
                });
            }
        }
    }
    bb
}

/// Deterministic set of object orientations viewing the object from
/// directions spread over the sphere (Fibonacci lattice) with golden-ratio
/// in-plane angles.
pub fn view_rotations(n_views: usize) -> Vec<UnitQuaternion> {
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    let toward_camera = Vec3::new(0.0, 0.0, -1.0);
    (0..n_views)
        .map(|i| {
            let zc = 1.0 - (2.0 * i as f64 + 1.0) / n_views as f64;
            let r = (1.0 - zc * zc).max(0.0).sqrt();
            let phi = std::f64::consts::TAU * (i as f64 / golden).fract();
            let dir = Vec3::new(r * phi.cos(), r * phi.sin(), zc);
            let view = UnitQuaternion::rotation_between(dir, toward_camera)
                .expect("lattice directions are unit length");
            let roll = std::f64::consts::TAU * ((i as f64 + 0.5) * (golden - 1.0)).fract();
            UnitQuaternion::from_axis_angle(toward_camera, roll)
                .expect("nonzero axis")
                .compose(&view)
        })
        .collect()
}

/// Side length (pixels) of the square crop window used for every view of
/// `mesh`: the largest silhouette bounding-box side over `n_views` renders at
/// distance `min_distance`, grown by `padding_fraction` and rounded up.
pub fn compute_window_size(
    mesh: &TriangleMesh,
    k: &CameraIntrinsics,
    min_distance: f64,
    n_views: usize,
    padding_fraction: f64,
) -> Result<u32> {
    if n_views == 0 {
        return Err(Error::invalid("need at least one view"));
    }
    if !(padding_fraction >= 0.0) {
        return Err(Error::invalid("padding must be non-negative"));
    }
    if !(min_distance > mesh.bounding_radius()) {
        return Err(Error::invalid(format!(
            "minimum distance {min_distance} must exceed the mesh radius {}",
            mesh.bounding_radius()
        )));
    }
    let mut extent = 0i64;
    for (i, rot) in view_rotations(n_views).into_iter().enumerate() {
        let pose = Pose::new(rot, Vec3::new(0.0, 0.0, min_distance));
        let mask = extract_silhouette(&render_depth(mesh, &pose, k)?);
        let bb = mask_bounding_box(&mask).ok_or(Error::DegenerateView(i))?;
        extent = extent.max(bb.width()).max(bb.height());
    }
    Ok((extent as f64 * (1.0 + padding_fraction) - 1e-9)
        .ceil()
        .max(1.0) as u32)
}

/// Cuts a `window × window` patch centered on `center` (image coordinates).
/// Cells that fall outside `src` take the background sentinel. The patch
/// origin records where it sits in the image.
pub fn crop_patch<T: Sentinel>(src: &Grid<T>, center: (f64, f64), window: u32) -> Grid<T> {
    let window = window.max(1);
    let half = (window as f64 - 1.0) / 2.0;
    let origin = (
        (center.0 - half).round() as i64,
        (center.1 - half).round() as i64,
    );
    let mut out = Grid::with_origin(window, window, origin, T::sentinel());
    for y in 0..window {
        for x in 0..window {
            if let Some(v) = src.get_image(out.to_image(x, y)) {
                out.set(x, y, v);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::BACKGROUND_DEPTH;

    #[test]
    fn crop_inside_copies_subrectangle() {
        let mut g = Grid::new(10, 8, 0.0);
        for y in 0..8 {
            for x in 0..10 {
                g.set(x, y, (10 * y + x) as f64);
            }
        }
        let p = crop_patch(&g, (5.0, 4.0), 3);
        assert_eq!(p.origin(), (4, 3));
        assert_eq!(p.get(0, 0), 34.0);
        assert_eq!(p.get(2, 2), 56.0);
        for y in 0..3 {
            for x in 0..3 {
                let img = p.to_image(x, y);
                assert_eq!(p.to_local(img), Some((x, y)));
                assert_eq!(g.get_image(img), Some(p.get(x, y)));
            }
        }
    }

    #[test]
    fn crop_at_corner_fills_sentinel() {
        let g = Grid::new(6, 6, 1.0);
        let p = crop_patch(&g, (0.0, 0.0), 4);
        // Window 4 centered on 0 spans -2..=1 (rounded from -1.5).
        assert_eq!(p.origin(), (-2, -2));
        let filled = p.data().iter().filter(|v| **v == BACKGROUND_DEPTH).count();
        assert_eq!(filled, 16 - 4);
        let m = crop_patch(&Grid::new(6, 6, true), (0.0, 0.0), 4);
        assert_eq!(m.area(), 4);
    }

    #[test]
    fn bounding_box_of_mask() {
        let mut m = Grid::with_origin(5, 5, (100, 200), false);
        assert!(mask_bounding_box(&m).is_none());
        m.set(1, 2, true);
        m.set(3, 4, true);
        let bb = mask_bounding_box(&m).unwrap();
        assert_eq!(bb.min, (101, 202));
        assert_eq!(bb.max, (103, 204));
        assert_eq!((bb.width(), bb.height()), (3, 3));
        assert_eq!(bb.center(), (102.0, 203.0));
    }

    #[test]
    fn view_rotations_are_deterministic_and_spread() {
        let a = view_rotations(32);
        assert_eq!(a, view_rotations(32));
        let mean_dir = a
            .iter()
            .map(|q| q.conjugate().rotate(Vec3::new(0.0, 0.0, -1.0)))
            .fold(Vec3::ZERO, |s, d| s + d)
            * (1.0 / 32.0);
        assert!(mean_dir.norm() < 0.05);
    }
}

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, Vec3};

use super::{is_foreground_depth, DepthMap, Pixel, SilhouetteMask};

/// Number of 3D contour points sampled per view.
pub const DEFAULT_CONTOUR_SAMPLES: usize = 100;

pub fn extract_silhouette(depth: &DepthMap) -> SilhouetteMask {
    depth.map(is_foreground_depth)
}

/// Inner-boundary pixels of a mask: foreground pixels with at least one
/// background 4-neighbour. Foreground on the grid border always counts.
/// Returned in row-major order, in image coordinates.
pub fn extract_contour_pixels(mask: &SilhouetteMask) -> Vec<Pixel> {
    let (w, h) = (mask.width(), mask.height());
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let border = x == 0 || y == 0 || x + 1 == w || y + 1 == h;
            if border
                || !mask.get(x - 1, y)
                || !mask.get(x + 1, y)
                || !mask.get(x, y - 1)
                || !mask.get(x, y + 1)
            {
                out.push(mask.to_image(x, y));
            }
        }
    }
    out
}

/// Sparse camera-space points on an object's occluding contour.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourPointSet {
    pub points: Vec<Vec3>,
    /// Contour pixel each point was back-projected from.
    pub pixels: Vec<Pixel>,
    pub source_pose: Option<Pose>,
}

impl ContourPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn with_source_pose(mut self, pose: Pose) -> Self {
        self.source_pose = Some(pose);
        self
    }
}

/// Picks `n` contour pixels by uniform stride over the row-major contour list
/// and lifts them to 3D with the rendered depth.
pub fn sample_contour_points_3d(
    depth: &DepthMap,
    k: &CameraIntrinsics,
    n: usize,
) -> Result<ContourPointSet> {
    let contour = extract_contour_pixels(&extract_silhouette(depth));
    sample_from_contour(depth, &contour, k, n)
}

pub(crate) fn sample_from_contour(
    depth: &DepthMap,
    contour: &[Pixel],
    k: &CameraIntrinsics,
    n: usize,
) -> Result<ContourPointSet> {
    if contour.is_empty() {
        return Err(Error::EmptyContour);
    }
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let m = contour.len();
    let take = n.min(m);
    let mut points = Vec::with_capacity(take);
    let mut pixels = Vec::with_capacity(take);
    for i in 0..take {
        let p = contour[i * m / take];
        let d = depth
            .get_image(p)
            .filter(|d| is_foreground_depth(*d))
            .ok_or_else(|| Error::invalid(format!("contour pixel {p:?} has no depth")))?;
        points.push(k.backproject(p.0 as f64, p.1 as f64, d)?);
        pixels.push(p);
    }
    Ok(ContourPointSet {
        points,
        pixels,
        source_pose: None,
    })
}

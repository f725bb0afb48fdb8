//! Software rendering of silhouettes and the image-space machinery built on
//! top of it: contours, distance fields, crop windows and debug dumps.

mod contour;
mod distance;
pub mod pgm;
mod render;
mod window;

pub(crate) use contour::sample_from_contour;
pub use contour::{
    extract_contour_pixels, extract_silhouette, sample_contour_points_3d, ContourPointSet,
    DEFAULT_CONTOUR_SAMPLES,
};
pub use distance::{
    distance_transform, distance_transform_in, sample_distance, DistanceField, DistanceSample,
};
pub use render::{composite_visible, rasterize_triangle, render_depth, NEAR_PLANE};
pub use window::{
    compute_window_size, crop_patch, mask_bounding_box, view_rotations, BoundingBox,
    DEFAULT_WINDOW_PADDING,
};

/// Integer pixel in image coordinates `(column, row)`.
pub type Pixel = (i64, i64);

/// Value written into cells that hold nothing.
pub trait Sentinel: Copy {
    fn sentinel() -> Self;
}

impl Sentinel for f64 {
    fn sentinel() -> Self {
        f64::INFINITY
    }
}

impl Sentinel for bool {
    fn sentinel() -> Self {
        false
    }
}

/// Row-major raster placed at `origin` in image coordinates. Crops keep the
/// offset so a local cell `(x, y)` is image pixel `(origin.0 + x, origin.1 + y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: u32,
    height: u32,
    origin: Pixel,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn new(width: u32, height: u32, fill: T) -> Self {
        Self::with_origin(width, height, (0, 0), fill)
    }

    pub fn with_origin(width: u32, height: u32, origin: Pixel, fill: T) -> Self {
        Self {
            width,
            height,
            origin,
            data: vec![fill; width as usize * height as usize],
        }
    }

    pub fn from_vec(width: u32, height: u32, origin: Pixel, data: Vec<T>) -> Option<Self> {
        (data.len() == width as usize * height as usize).then_some(Self {
            width,
            height,
            origin,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn origin(&self) -> Pixel {
        self.origin
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> T {
        self.data[self.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: T) {
        let i = self.index(x, y);
        self.data[i] = value;
    }

    /// Local cell for an image pixel, if it lies inside the grid.
    pub fn to_local(&self, p: Pixel) -> Option<(u32, u32)> {
        let x = p.0 - self.origin.0;
        let y = p.1 - self.origin.1;
        (x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64)
            .then_some((x as u32, y as u32))
    }

    pub fn to_image(&self, x: u32, y: u32) -> Pixel {
        (self.origin.0 + x as i64, self.origin.1 + y as i64)
    }

    pub fn get_image(&self, p: Pixel) -> Option<T> {
        self.to_local(p).map(|(x, y)| self.get(x, y))
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            origin: self.origin,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Per-pixel camera depth (meters); background holds `f64::INFINITY`.
pub type DepthMap = Grid<f64>;

/// Foreground flags; `true` marks object pixels.
pub type SilhouetteMask = Grid<bool>;

/// Background depth value.
pub const BACKGROUND_DEPTH: f64 = f64::INFINITY;

pub fn is_foreground_depth(d: f64) -> bool {
    d.is_finite()
}

impl SilhouetteMask {
    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

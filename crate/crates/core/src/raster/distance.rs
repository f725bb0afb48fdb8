//! Exact Euclidean distance transform (separable lower-envelope method) and
//! bilinear sampling with analytic gradients.

use crate::error::{Error, Result};

use super::{Grid, Pixel};

/// Squared distances beyond any reachable grid distance.
const FAR: f64 = 1e20;

/// Per-pixel Euclidean distance (pixels) to the nearest contour pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    grid: Grid<f64>,
}

/// Field value and its derivative with respect to `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceSample {
    pub value: f64,
    pub grad: (f64, f64),
}

impl DistanceField {
    pub fn grid(&self) -> &Grid<f64> {
        &self.grid
    }

    pub fn width(&self) -> u32 {
        self.grid.width()
    }

    pub fn height(&self) -> u32 {
        self.grid.height()
    }

    pub fn origin(&self) -> Pixel {
        self.grid.origin()
    }

    /// Stored value at an image pixel, if inside the field.
    pub fn at(&self, p: Pixel) -> Option<f64> {
        self.grid.get_image(p)
    }

    pub fn sample(&self, u: f64, v: f64) -> DistanceSample {
        sample_distance(self, u, v)
    }
}

/// Distance transform over a `width × height` grid at the image origin.
pub fn distance_transform(contour: &[Pixel], width: u32, height: u32) -> Result<DistanceField> {
    distance_transform_in(contour, width, height, (0, 0))
}

/// Distance transform over a grid placed at `origin` in image coordinates.
/// Contour pixels outside the grid are ignored.
pub fn distance_transform_in(
    contour: &[Pixel],
    width: u32,
    height: u32,
    origin: Pixel,
) -> Result<DistanceField> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("distance field needs a non-empty grid"));
    }
    let mut sq = Grid::with_origin(width, height, origin, FAR);
    let mut any = false;
    for &p in contour {
        if let Some((x, y)) = sq.to_local(p) {
            sq.set(x, y, 0.0);
            any = true;
        }
    }
    if !any {
        return Err(Error::EmptyContour);
    }

    let (w, h) = (width as usize, height as usize);
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut env = Envelope::with_capacity(n);

    for x in 0..w {
        for (y, fy) in f[..h].iter_mut().enumerate() {
            *fy = sq.data[y * w + x];
        }
        env.transform(&f[..h], &mut d[..h]);
        for (y, dy) in d[..h].iter().enumerate() {
            sq.data[y * w + x] = *dy;
        }
    }
    for y in 0..h {
        let row = &mut sq.data[y * w..(y + 1) * w];
        f[..w].copy_from_slice(row);
        env.transform(&f[..w], &mut d[..w]);
        row.copy_from_slice(&d[..w]);
    }
    for v in &mut sq.data {
        *v = v.sqrt();
    }
    Ok(DistanceField { grid: sq })
}

/// Lower envelope of parabolas `f(q) + (p - q)²`.
struct Envelope {
    vertices: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self {
            vertices: vec![0; n],
            bounds: vec![0.0; n + 1],
        }
    }

    fn transform(&mut self, f: &[f64], out: &mut [f64]) {
        let n = f.len();
        let v = &mut self.vertices;
        let z = &mut self.bounds;
        // Only finite sites enter the envelope; z[0] = -inf keeps k >= 0.
        let mut k: Option<usize> = None;
        for q in 0..n {
            if f[q] >= FAR {
                continue;
            }
            let Some(mut top) = k else {
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                k = Some(0);
                continue;
            };
            let s = loop {
                let p = v[top];
                let s =
                    ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
                if s <= z[top] {
                    top -= 1;
                } else {
                    break s;
                }
            };
            top += 1;
            v[top] = q;
            z[top] = s;
            z[top + 1] = f64::INFINITY;
            k = Some(top);
        }
        if k.is_none() {
            out.fill(FAR);
            return;
        }
        let mut k = 0;
        for (q, o) in out.iter_mut().enumerate() {
            while z[k + 1] < q as f64 {
                k += 1;
            }
            let p = v[k];
            let dq = q as f64 - p as f64;
            *o = dq * dq + f[p];
        }
    }
}

fn bilinear(field: &Grid<f64>, u: f64, v: f64) -> (f64, f64, f64) {
    let (w, h) = (field.width(), field.height());
    let (i0, fx) = cell(u, w);
    let (j0, fy) = cell(v, h);
    let i1 = (i0 + 1).min(w - 1);
    let j1 = (j0 + 1).min(h - 1);
    let a = field.get(i0, j0);
    let b = field.get(i1, j0);
    let c = field.get(i0, j1);
    let d = field.get(i1, j1);
    let value =
        (1.0 - fx) * (1.0 - fy) * a + fx * (1.0 - fy) * b + (1.0 - fx) * fy * c + fx * fy * d;
    let du = if i1 == i0 {
        0.0
    } else {
        (1.0 - fy) * (b - a) + fy * (d - c)
    };
    let dv = if j1 == j0 {
        0.0
    } else {
        (1.0 - fx) * (c - a) + fx * (d - b)
    };
    (value, du, dv)
}

/// Cell index and fractional offset along one axis for a coordinate already
/// clamped to `[0, n - 1]`.
fn cell(t: f64, n: u32) -> (u32, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let i = (t.floor() as i64).clamp(0, n as i64 - 2) as u32;
    (i, t - i as f64)
}

/// Bilinear lookup at real image coordinates `(u, v)`.
///
/// Outside the grid the value grows with slope 1 in the distance to the grid
/// rectangle, on top of the bilinear value at the closest boundary point, and
/// the gradient gains the matching outward component.
pub fn sample_distance(field: &DistanceField, u: f64, v: f64) -> DistanceSample {
    let g = &field.grid;
    let lu = u - g.origin().0 as f64;
    let lv = v - g.origin().1 as f64;
    let max_u = (g.width() - 1) as f64;
    let max_v = (g.height() - 1) as f64;
    let cu = lu.clamp(0.0, max_u);
    let cv = lv.clamp(0.0, max_v);
    let (value, du, dv) = bilinear(g, cu, cv);
    let (ou, ov) = (lu - cu, lv - cv);
    if ou == 0.0 && ov == 0.0 {
        return DistanceSample {
            value,
            grad: (du, dv),
        };
    }
    let out = (ou * ou + ov * ov).sqrt();
    let du = if ou == 0.0 { du } else { 0.0 } + ou / out;
    let dv = if ov == 0.0 { dv } else { 0.0 } + ov / out;
    DistanceSample {
        value: value + out,
        grad: (du, dv),
    }
}

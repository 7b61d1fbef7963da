//! Polygon-to-square cropping, tablet grid binning and normal-map averaging.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::raster::ImageF32;

/// Side length of every prepared crop.
pub const CROP_SIZE: usize = 224;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Axis-aligned square in pixel coordinates. `x0`/`y0` may be negative or the
/// square may extend past the image; clamping happens at crop time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SquareBox {
    pub x0: i64,
    pub y0: i64,
    pub side: i64,
}

impl SquareBox {
    pub fn corners(&self) -> [Point; 4] {
        let (x0, y0) = (self.x0 as f64, self.y0 as f64);
        let (x1, y1) = (x0 + self.side as f64, y0 + self.side as f64);
        [
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ]
    }
}

/// Integer extreme-point rectangle of a polygon: `(x_min, y_min, x_max, y_max)`
/// with minima floored and maxima ceiled.
pub fn extreme_rect(polygon: &[Point]) -> Result<(i64, i64, i64, i64), GeometryError> {
    if polygon.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let fold = |f: fn(&Point) -> f64| {
        polygon
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (xl, xh) = fold(|p| p.x);
    let (yl, yh) = fold(|p| p.y);
    Ok((xl.floor() as i64, yl.floor() as i64, xh.ceil() as i64, yh.ceil() as i64))
}

/// Squares the polygon's extreme-point rectangle by extending its shorter sides
/// symmetrically; odd padding puts the extra pixel after the rectangle.
pub fn squarify(polygon: &[Point]) -> Result<SquareBox, GeometryError> {
    if polygon.len() < 3 {
        return Err(GeometryError::TooFewVertices(polygon.len()));
    }
    let (x_min, y_min, x_max, y_max) = extreme_rect(polygon)?;
    let (w, h) = (x_max - x_min, y_max - y_min);
    if w == 0 && h == 0 {
        return Err(GeometryError::ZeroExtent);
    }
    let side = w.max(h);
    let (x0, y0) = if w < h {
        (x_min - (side - w) / 2, y_min)
    } else {
        (x_min, y_min - (side - h) / 2)
    };
    Ok(SquareBox { x0, y0, side })
}

/// Cuts `square` out of `image` (zeros where it overhangs the image) and
/// resizes it bilinearly to `CROP_SIZE`×`CROP_SIZE`. Values are in `[0, 1]`.
pub fn extract_crop(image: &RgbImage, square: &SquareBox) -> Result<ImageF32, GeometryError> {
    let region = cut_square(image, square)?;
    Ok(region.resize_bilinear(CROP_SIZE, CROP_SIZE))
}

/// The zero-padded square region before resizing.
pub fn cut_square(image: &RgbImage, square: &SquareBox) -> Result<ImageF32, GeometryError> {
    let (w, h) = (image.width() as i64, image.height() as i64);
    let s = square.side;
    if s <= 0 || square.x0 >= w || square.y0 >= h || square.x0 + s <= 0 || square.y0 + s <= 0 {
        return Err(GeometryError::OutsideImage {
            width: image.width(),
            height: image.height(),
        });
    }
    let side = s as usize;
    let mut out = ImageF32::zeros(side, side);
    let plane = side * side;
    let x_from = square.x0.max(0);
    let x_to = (square.x0 + s).min(w);
    let y_from = square.y0.max(0);
    let y_to = (square.y0 + s).min(h);
    let raw = image.as_raw();
    for y in y_from..y_to {
        let oy = (y - square.y0) as usize;
        for x in x_from..x_to {
            let ox = (x - square.x0) as usize;
            let src = ((y * w + x) * 3) as usize;
            let dst = oy * side + ox;
            out.data[dst] = raw[src] as f32 / 255.0;
            out.data[plane + dst] = raw[src + 1] as f32 / 255.0;
            out.data[2 * plane + dst] = raw[src + 2] as f32 / 255.0;
        }
    }
    Ok(out)
}

/// Arithmetic mean of the polygon vertices.
pub fn centroid(polygon: &[Point]) -> Point {
    let n = polygon.len().max(1) as f64;
    let (sx, sy) = polygon.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Point::new(sx / n, sy / n)
}

/// Vertex centroid scaled into the unit square of the surface.
pub fn normalized_centroid(polygon: &[Point], width: u32, height: u32) -> (f64, f64) {
    let c = centroid(polygon);
    (
        (c.x / width as f64).clamp(0.0, 1.0),
        (c.y / height as f64).clamp(0.0, 1.0),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Grid {
    #[serde(rename = "3x3")]
    Three,
    #[serde(rename = "5x5")]
    Five,
}

impl Grid {
    pub fn size(self) -> usize {
        match self {
            Grid::Three => 3,
            Grid::Five => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridCell {
    pub grid: Grid,
    pub row: usize,
    pub col: usize,
}

/// Half-open cells with the last row/column closed, so `1.0` lands in the last cell.
pub fn grid_cell(u: f64, v: f64, grid: Grid) -> Result<GridCell, GeometryError> {
    if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
        return Err(GeometryError::CentroidOutOfRange { u, v });
    }
    let k = grid.size();
    let bin = |t: f64| ((t * k as f64).floor() as usize).min(k - 1);
    Ok(GridCell {
        grid,
        row: bin(v),
        col: bin(u),
    })
}

/// Unit surface normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageNormal {
    pub nx: f64,
    pub ny: f64,
    pub nz: f64,
}

impl AverageNormal {
    pub fn from_sum(sum: [f64; 3]) -> Result<Self, GeometryError> {
        let len = (sum[0] * sum[0] + sum[1] * sum[1] + sum[2] * sum[2]).sqrt();
        if !(len > 1e-12) {
            return Err(GeometryError::ZeroNormal);
        }
        Ok(Self {
            nx: sum[0] / len,
            ny: sum[1] / len,
            nz: sum[2] / len,
        })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.nx, self.ny, self.nz]
    }
}

/// Normal-map channel value to a component in `[-1, 1]`.
#[inline]
pub fn decode_normal(c: u8) -> f64 {
    2.0 * c as f64 / 255.0 - 1.0
}

#[inline]
pub fn encode_normal(v: f64) -> u8 {
    ((v + 1.0) * 255.0 / 2.0).round().clamp(0.0, 255.0) as u8
}

/// Region over which normals are averaged. Pixels count when their center lies inside.
#[derive(Debug, Clone, Copy)]
pub enum NormalRegion<'a> {
    Polygon(&'a [Point]),
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl NormalRegion<'_> {
    fn bounds(&self) -> (f64, f64, f64, f64) {
        match *self {
            NormalRegion::Polygon(poly) => {
                let (xl, yl, xh, yh) = poly.iter().fold(
                    (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
                    |(a, b, c, d), p| (a.min(p.x), b.min(p.y), c.max(p.x), d.max(p.y)),
                );
                (xl, yl, xh, yh)
            }
            NormalRegion::Rect { x0, y0, x1, y1 } => (x0, y0, x1, y1),
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            NormalRegion::Polygon(poly) => point_in_polygon(poly, x, y),
            NormalRegion::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
        }
    }
}

/// Even-odd ray casting.
pub fn point_in_polygon(poly: &[Point], x: f64, y: f64) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Decodes every pixel of `region` (x in red, y in green, z in blue), averages
/// and renormalizes.
pub fn average_normal(
    normal_map: &RgbImage,
    region: NormalRegion<'_>,
) -> Result<AverageNormal, GeometryError> {
    let (xl, yl, xh, yh) = region.bounds();
    if !(xl.is_finite() && yl.is_finite() && xh.is_finite() && yh.is_finite()) {
        return Err(GeometryError::EmptyRegion);
    }
    let (w, h) = (normal_map.width() as i64, normal_map.height() as i64);
    let x_from = (xl.floor() as i64).max(0);
    let x_to = (xh.ceil() as i64).min(w);
    let y_from = (yl.floor() as i64).max(0);
    let y_to = (yh.ceil() as i64).min(h);
    let mut sum = [0.0f64; 3];
    let mut count = 0usize;
    for y in y_from..y_to {
        for x in x_from..x_to {
            if region.contains(x as f64 + 0.5, y as f64 + 0.5) {
                let px = normal_map.get_pixel(x as u32, y as u32).0;
                for c in 0..3 {
                    sum[c] += decode_normal(px[c]);
                }
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(GeometryError::EmptyRegion);
    }
    AverageNormal::from_sum(sum)
}

//! Planar float images and the resampling primitives shared by cropping and
//! augmentation.

use image::RgbImage;

/// Three-channel planar (CHW) float image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF32 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl ImageF32 {
    pub const CHANNELS: usize = 3;

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; Self::CHANNELS * width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: [f32; 3]) -> Self {
        let mut img = Self::zeros(width, height);
        let plane = width * height;
        for (c, v) in value.iter().enumerate() {
            img.data[c * plane..(c + 1) * plane].fill(*v);
        }
        img
    }

    /// Converts 8-bit RGB to `[0, 1]`.
    pub fn from_rgb8(img: &RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut out = Self::zeros(w, h);
        let plane = w * h;
        for (i, px) in img.pixels().enumerate() {
            for c in 0..3 {
                out.data[c * plane + i] = px.0[c] as f32 / 255.0;
            }
        }
        out
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let plane = self.width * self.height;
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let i = y as usize * self.width + x as usize;
            let mut px = [0u8; 3];
            for (c, p) in px.iter_mut().enumerate() {
                *p = (self.data[c * plane + i].clamp(0.0, 1.0) * 255.0).round() as u8;
            }
            image::Rgb(px)
        })
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at integer
    /// positions). Taps outside the image contribute zero.
    #[inline]
    pub fn sample_zero(&self, c: usize, x: f64, y: f64) -> f32 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = (x - x0) as f32;
        let fy = (y - y0) as f32;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let tap = |xi: i64, yi: i64| -> f32 {
            if xi < 0 || yi < 0 || xi >= self.width as i64 || yi >= self.height as i64 {
                0.0
            } else {
                self.get(c, xi as usize, yi as usize)
            }
        };
        let top = tap(x0, y0) * (1.0 - fx) + tap(x0 + 1, y0) * fx;
        let bottom = tap(x0, y0 + 1) * (1.0 - fx) + tap(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Bilinear resize with half-pixel centers and edge clamping. Resizing to
    /// the same size returns an identical image.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> ImageF32 {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let taps = |dst: usize, scale: f64, len: usize| -> (usize, usize, f32) {
            let src = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(len - 1);
            let i1 = (i0 + 1).min(len - 1);
            (i0, i1, (src - i0 as f64) as f32)
        };
        let xt: Vec<_> = (0..width).map(|x| taps(x, sx, self.width)).collect();
        let yt: Vec<_> = (0..height).map(|y| taps(y, sy, self.height)).collect();
        let mut out = ImageF32::zeros(width, height);
        for c in 0..Self::CHANNELS {
            let src = self.plane(c);
            let dst = &mut out.data[c * width * height..(c + 1) * width * height];
            for (y, &(y0, y1, fy)) in yt.iter().enumerate() {
                let r0 = &src[y0 * self.width..(y0 + 1) * self.width];
                let r1 = &src[y1 * self.width..(y1 + 1) * self.width];
                for (x, &(x0, x1, fx)) in xt.iter().enumerate() {
                    let top = r0[x0] * (1.0 - fx) + r0[x1] * fx;
                    let bottom = r1[x0] * (1.0 - fx) + r1[x1] * fx;
                    dst[y * width + x] = top * (1.0 - fy) + bottom * fy;
                }
            }
        }
        out
    }

    /// Resamples through an output-to-source coordinate map with zero fill.
    pub fn warp<F>(&self, map: F) -> ImageF32
    where
        F: Fn(f64, f64) -> (f64, f64),
    {
        let mut out = ImageF32::zeros(self.width, self.height);
        let plane = self.width * self.height;
        for y in 0..self.height {
            for x in 0..self.width {
                let (sx, sy) = map(x as f64, y as f64);
                for c in 0..Self::CHANNELS {
                    out.data[c * plane + y * self.width + x] = self.sample_zero(c, sx, sy);
                }
            }
        }
        out
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn max_abs_diff(&self, other: &ImageF32) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resize_to_same_size_is_identity() {
        let mut img = ImageF32::zeros(7, 5);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i % 13) as f32 / 13.0;
        }
        assert_eq!(img.resize_bilinear(7, 5), img);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let img = ImageF32::filled(40, 30, [0.25, 0.5, 0.75]);
        let out = img.resize_bilinear(224, 224);
        for c in 0..3 {
            for &v in out.plane(c) {
                assert!((v - [0.25, 0.5, 0.75][c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sample_zero_outside_is_zero() {
        let img = ImageF32::filled(4, 4, [1.0, 1.0, 1.0]);
        assert_eq!(img.sample_zero(0, -2.0, 1.0), 0.0);
        assert_eq!(img.sample_zero(0, 1.0, 1.0), 1.0);
        assert!((img.sample_zero(0, -0.5, 1.0) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn rgb8_round_trip() {
        let rgb = RgbImage::from_fn(5, 3, |x, y| image::Rgb([x as u8 * 40, y as u8 * 80, 200]));
        assert_eq!(ImageF32::from_rgb8(&rgb).to_rgb8(), rgb);
    }
}

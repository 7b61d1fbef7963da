//! Training-time geometric augmentation and evaluation-time normalization.
//!
//! Both paths end in the same per-channel normalization. The training path
//! first applies, each with its own coin flip, a rotation by a uniform angle
//! about the crop center and a random four-corner perspective warp. Exposed
//! areas are filled with zeros, the same value crops use outside the tablet.
//! All randomness comes from the caller's generator.

use nalgebra::{SMatrix, SVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::raster::ImageF32;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            mean: [0.5; 3],
            std: [0.5; 3],
        }
    }
}

impl Normalization {
    pub fn validate(&self) -> Result<()> {
        if self.std.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Config("normalization std must be positive".into()));
        }
        Ok(())
    }

    pub fn apply(&self, img: &ImageF32) -> ImageF32 {
        let mut out = img.clone();
        self.apply_in_place(&mut out);
        out
    }

    pub fn apply_in_place(&self, img: &mut ImageF32) {
        let plane = img.width * img.height;
        for c in 0..ImageF32::CHANNELS {
            let (m, s) = (self.mean[c], self.std[c]);
            for v in &mut img.data[c * plane..(c + 1) * plane] {
                *v = (*v - m) / s;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPolicy {
    pub enabled: bool,
    pub rotation_prob: f64,
    /// Angles are drawn uniformly from `[0, rotation_range)` degrees.
    pub rotation_range: f64,
    pub perspective_prob: f64,
    /// Maximum corner displacement as a fraction of the side length.
    pub perspective_strength: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            enabled: true,
            rotation_prob: 0.5,
            rotation_range: 360.0,
            perspective_prob: 0.5,
            perspective_strength: 0.3,
        }
    }
}

impl AugmentPolicy {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.rotation_prob) || !prob(self.perspective_prob) {
            return Err(Error::Config("augmentation probabilities must lie in [0, 1]".into()));
        }
        if !(0.0..=360.0).contains(&self.rotation_range) {
            return Err(Error::Config("rotation_range must lie in [0, 360]".into()));
        }
        if !(0.0..0.5).contains(&self.perspective_strength) {
            return Err(Error::Config("perspective_strength must lie in [0, 0.5)".into()));
        }
        Ok(())
    }
}

/// Deterministic preparation: normalization only.
pub fn prepare_eval(crop: &ImageF32, norm: &Normalization) -> ImageF32 {
    norm.apply(crop)
}

/// Stochastic preparation. With a disabled policy this equals [`prepare_eval`]
/// and consumes no randomness.
pub fn prepare_train<R: Rng + ?Sized>(
    crop: &ImageF32,
    policy: &AugmentPolicy,
    norm: &Normalization,
    rng: &mut R,
) -> ImageF32 {
    if !policy.enabled {
        return prepare_eval(crop, norm);
    }
    let mut img = None;
    if rng.random_bool(policy.rotation_prob) {
        let angle = rng.random::<f64>() * policy.rotation_range;
        img = Some(rotate(crop, angle));
    }
    if rng.random_bool(policy.perspective_prob) {
        let offsets = random_corner_offsets(rng, policy.perspective_strength);
        let src = img.as_ref().unwrap_or(crop);
        img = Some(perspective(src, &offsets));
    }
    let mut out = img.unwrap_or_else(|| crop.clone());
    norm.apply_in_place(&mut out);
    out
}

/// Rotation by `degrees` (clockwise on screen) about the image center with
/// bilinear resampling and zero fill.
pub fn rotate(img: &ImageF32, degrees: f64) -> ImageF32 {
    let turns = degrees.rem_euclid(360.0);
    if turns == 0.0 {
        return img.clone();
    }
    let (sin, cos) = turns.to_radians().sin_cos();
    let cx = (img.width as f64 - 1.0) / 2.0;
    let cy = (img.height as f64 - 1.0) / 2.0;
    // Inverse map: rotate output coordinates back by -angle.
    img.warp(|x, y| {
        let (dx, dy) = (x - cx, y - cy);
        (cx + cos * dx + sin * dy, cy - sin * dx + cos * dy)
    })
}

/// Corner offsets `[(dx, dy); 4]` as fractions of the side, for the corners
/// top-left, top-right, bottom-right, bottom-left.
pub fn random_corner_offsets<R: Rng + ?Sized>(rng: &mut R, strength: f64) -> [[f64; 2]; 4] {
    let mut out = [[0.0; 2]; 4];
    for corner in &mut out {
        for v in corner.iter_mut() {
            *v = (rng.random::<f64>() * 2.0 - 1.0) * strength;
        }
    }
    out
}

/// Warps the image so that its corners move by `offsets` (fractions of the
/// side). Output pixels map back to the source through the inverse homography.
pub fn perspective(img: &ImageF32, offsets: &[[f64; 2]; 4]) -> ImageF32 {
    let (w, h) = ((img.width - 1) as f64, (img.height - 1) as f64);
    let src = [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]];
    let mut dst = src;
    for (d, o) in dst.iter_mut().zip(offsets) {
        d[0] += o[0] * w;
        d[1] += o[1] * h;
    }
    match homography(&dst, &src) {
        Some(hm) => img.warp(|x, y| {
            let den = hm[6] * x + hm[7] * y + 1.0;
            ((hm[0] * x + hm[1] * y + hm[2]) / den, (hm[3] * x + hm[4] * y + hm[5]) / den)
        }),
        None => img.clone(),
    }
}

/// Homography (with h33 = 1) mapping each `from[i]` to `to[i]`.
pub fn homography(from: &[[f64; 2]; 4], to: &[[f64; 2]; 4]) -> Option<[f64; 8]> {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for i in 0..4 {
        let ([x, y], [u, v]) = (from[i], to[i]);
        let r = 2 * i;
        a.set_row(r, &SMatrix::<f64, 1, 8>::from_row_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]));
        a.set_row(r + 1, &SMatrix::<f64, 1, 8>::from_row_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]));
        b[r] = u;
        b[r + 1] = v;
    }
    let sol = a.lu().solve(&b)?;
    let mut out = [0.0; 8];
    out.copy_from_slice(sol.as_slice());
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(n: usize) -> ImageF32 {
        let mut img = ImageF32::zeros(n, n);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = ((i * 7919) % 1000) as f32 / 1000.0;
        }
        img
    }

    #[test]
    fn eval_of_mean_image_is_zero() {
        let norm = Normalization { mean: [0.2, 0.4, 0.6], std: [0.1, 0.2, 0.3] };
        let img = ImageF32::filled(8, 8, [0.2, 0.4, 0.6]);
        assert!(prepare_eval(&img, &norm).data.iter().all(|&v| v.abs() < 1e-6));
    }

    #[test]
    fn half_half_normalization_maps_to_unit_interval() {
        let img = ramp(16);
        let out = prepare_eval(&img, &Normalization::default());
        for (a, b) in img.data.iter().zip(&out.data) {
            assert!((b - (2.0 * a - 1.0)).abs() < 1e-6);
            assert!((-1.0..=1.0).contains(b));
        }
    }

    #[test]
    fn disabled_policy_matches_eval() {
        let img = ramp(32);
        let norm = Normalization::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = prepare_train(&img, &AugmentPolicy::disabled(), &norm, &mut rng);
        assert_eq!(a, prepare_eval(&img, &norm));
    }

    #[test]
    fn quarter_turn_moves_pixels() {
        let mut img = ImageF32::zeros(5, 5);
        img.data[0] = 1.0; // (x=0, y=0) in channel 0
        let r = rotate(&img, 90.0);
        // A clockwise quarter turn takes the top-left corner to the top-right.
        assert!((r.get(0, 4, 0) - 1.0).abs() < 1e-6, "{:?}", &r.data[..25]);
    }

    #[test]
    fn identity_homography_for_zero_offsets() {
        let img = ramp(20);
        let out = perspective(&img, &[[0.0; 2]; 4]);
        assert!(out.max_abs_diff(&img) < 1e-5);
    }

    #[test]
    fn policy_validation() {
        assert!(AugmentPolicy::default().validate().is_ok());
        let bad = AugmentPolicy { perspective_strength: 0.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = AugmentPolicy { rotation_prob: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}

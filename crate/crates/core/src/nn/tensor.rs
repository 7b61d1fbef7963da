use crate::raster::ImageF32;
use crate::{Error, Result};

/// Dense NCHW float tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::Shape {
                expected: format!("{} values for [{n}, {c}, {h}, {w}]", n * c * h * w),
                actual: data.len().to_string(),
            });
        }
        Ok(Self { n, c, h, w, data })
    }

    /// Stacks equally sized images into a batch.
    pub fn from_images(images: &[ImageF32]) -> Result<Self> {
        let Some(first) = images.first() else {
            return Ok(Self::zeros(0, ImageF32::CHANNELS, 0, 0));
        };
        let (w, h) = (first.width, first.height);
        let mut data = Vec::with_capacity(images.len() * ImageF32::CHANNELS * w * h);
        for img in images {
            if (img.width, img.height) != (w, h) {
                return Err(Error::Shape {
                    expected: format!("{w}x{h}"),
                    actual: format!("{}x{}", img.width, img.height),
                });
            }
            data.extend_from_slice(&img.data);
        }
        Ok(Self {
            n: images.len(),
            c: ImageF32::CHANNELS,
            h,
            w,
            data,
        })
    }

    #[inline]
    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let s = self.sample_len();
        &self.data[i * s..(i + 1) * s]
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape() == other.shape()
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Rows of a `[n, d, 1, 1]` tensor.
    pub fn rows(&self) -> Vec<Vec<f32>> {
        let d = self.sample_len();
        if d == 0 {
            return vec![Vec::new(); self.n];
        }
        self.data.chunks(d).map(<[f32]>::to_vec).collect()
    }
}

/// `c = a·b + beta·c` for strided row/column-major operands.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    rsa: usize,
    csa: usize,
    b: &[f32],
    rsb: usize,
    csb: usize,
    beta: f32,
    c: &mut [f32],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f32> = (0..m * k).map(|i| i as f32 * 0.5 - 2.0).collect();
        let b: Vec<f32> = (0..k * n).map(|i| (i % 7) as f32 - 3.0).collect();
        let mut c = vec![1.0; m * n];
        gemm(m, k, n, &a, k, 1, &b, n, 1, 1.0, &mut c, n, 1);
        for i in 0..m {
            for j in 0..n {
                let mut s = 1.0;
                for t in 0..k {
                    s += a[i * k + t] * b[t * n + j];
                }
                assert!((c[i * n + j] - s).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(1, 2, 2, 2, vec![0.0; 7]).is_err());
        assert!(Tensor::from_vec(1, 2, 2, 2, vec![0.0; 8]).is_ok());
    }
}

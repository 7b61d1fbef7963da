//! Layers with hand-written backward passes.
//!
//! Every layer has an immutable `forward` used for inference and a
//! `forward_train`/`backward` pair that caches activations. Per-sample work runs
//! on rayon in fixed-size sample chunks whose partial weight gradients are summed
//! in chunk order, so results do not depend on the thread count.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;

use super::tensor::{gemm, Tensor};

/// Samples per gradient-accumulation chunk.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
}

impl Param {
    pub fn new(value: Vec<f32>) -> Self {
        let grad = vec![0.0; value.len()];
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Parameter and buffer traversal in a fixed order.
pub trait Module {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param));
    /// Every persistent array (parameters then buffers) for serialization.
    fn visit_state(&self, f: &mut dyn FnMut(&[f32]));
    fn visit_state_mut(&mut self, f: &mut dyn FnMut(&mut [f32]));
}

pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
    /// `[out_c, in_c / groups, k, k]`
    pub weight: Param,
    /// The first layer of a network has no use for an input gradient.
    pub input_grad: bool,
    input: Option<Tensor>,
}

impl Conv2d {
    pub fn new<R: Rng>(
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        groups: usize,
        rng: &mut R,
    ) -> Self {
        assert!(in_c % groups == 0 && out_c % groups == 0);
        let fan_out = (out_c * k * k) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_out).sqrt()).expect("valid std");
        let n = out_c * (in_c / groups) * k * k;
        let value = (0..n).map(|_| normal.sample(rng) as f32).collect();
        Self {
            in_c,
            out_c,
            k,
            stride,
            pad,
            groups,
            weight: Param::new(value),
            input_grad: true,
            input: None,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn col_rows(&self) -> usize {
        self.in_c * self.k * self.k
    }

    fn im2col(&self, x: &[f32], h: usize, w: usize, col: &mut [f32]) {
        let (oh, ow) = self.out_hw(h, w);
        let (k, s, p) = (self.k, self.stride, self.pad as isize);
        let ohw = oh * ow;
        for c in 0..self.in_c {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut col[row * ohw..(row + 1) * ohw];
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p;
                        let drow = &mut dst[oy * ow..(oy + 1) * ow];
                        if iy < 0 || iy >= h as isize {
                            drow.fill(0.0);
                            continue;
                        }
                        let srow = &plane[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            *d = if ix < 0 || ix >= w as isize {
                                0.0
                            } else {
                                srow[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[f32], h: usize, w: usize, dx: &mut [f32]) {
        let (oh, ow) = self.out_hw(h, w);
        let (k, s, p) = (self.k, self.stride, self.pad as isize);
        let ohw = oh * ow;
        for c in 0..self.in_c {
            let plane = &mut dx[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &col[row * ohw..(row + 1) * ohw];
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let drow = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        for ox in 0..ow {
                            let ix = (ox * s + kx) as isize - p;
                            if ix >= 0 && ix < w as isize {
                                drow[ix as usize] += src[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    fn forward_sample(&self, x: &[f32], h: usize, w: usize, y: &mut [f32], col: &mut Vec<f32>) {
        let (oh, ow) = self.out_hw(h, w);
        let ohw = oh * ow;
        let cols: &[f32] = if self.is_pointwise() {
            x
        } else {
            col.resize(self.col_rows() * ohw, 0.0);
            self.im2col(x, h, w, col);
            col
        };
        let g = self.groups;
        let (oc_g, kg) = (self.out_c / g, self.col_rows() / g);
        for gi in 0..g {
            gemm(
                oc_g,
                kg,
                ohw,
                &self.weight.value[gi * oc_g * kg..],
                kg,
                1,
                &cols[gi * kg * ohw..],
                ohw,
                1,
                0.0,
                &mut y[gi * oc_g * ohw..],
                ohw,
                1,
            );
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.c, self.in_c, "conv input channels");
        let (oh, ow) = self.out_hw(x.h, x.w);
        let mut y = Tensor::zeros(x.n, self.out_c, oh, ow);
        let (xs, ys) = (x.sample_len(), self.out_c * oh * ow);
        if ys == 0 || xs == 0 {
            return y;
        }
        y.data
            .par_chunks_mut(ys)
            .zip(x.data.par_chunks(xs))
            .for_each_init(Vec::new, |col, (yo, xi)| self.forward_sample(xi, x.h, x.w, yo, col));
        y
    }

    pub fn forward_train(&mut self, x: Tensor) -> Tensor {
        let y = self.forward(&x);
        self.input = Some(x);
        y
    }

    pub fn backward(&mut self, dy: Tensor) -> Option<Tensor> {
        let x = self.input.take().expect("backward without forward_train");
        let (h, w) = (x.h, x.w);
        let (oh, ow) = self.out_hw(h, w);
        let ohw = oh * ow;
        let g = self.groups;
        let (oc_g, kg) = (self.out_c / g, self.col_rows() / g);
        let (xs, ys) = (x.sample_len(), dy.sample_len());
        let n_chunks = x.n.div_ceil(CHUNK);
        let wlen = self.weight.value.len();
        let this = &*self;

        let parts: Vec<(Vec<f32>, Vec<f32>)> = (0..n_chunks)
            .into_par_iter()
            .map(|ci| {
                let lo = ci * CHUNK;
                let hi = (lo + CHUNK).min(x.n);
                let mut dw = vec![0.0f32; wlen];
                let mut dx = if this.input_grad {
                    vec![0.0f32; (hi - lo) * xs]
                } else {
                    Vec::new()
                };
                let mut col = Vec::new();
                let mut dcol = vec![0.0f32; this.col_rows() * ohw];
                for i in lo..hi {
                    let xi = &x.data[i * xs..(i + 1) * xs];
                    let dyi = &dy.data[i * ys..(i + 1) * ys];
                    let cols: &[f32] = if this.is_pointwise() {
                        xi
                    } else {
                        col.resize(this.col_rows() * ohw, 0.0);
                        this.im2col(xi, h, w, &mut col);
                        &col
                    };
                    for gi in 0..g {
                        // dW_g += dY_g · cols_gᵀ
                        gemm(
                            oc_g,
                            ohw,
                            kg,
                            &dyi[gi * oc_g * ohw..],
                            ohw,
                            1,
                            &cols[gi * kg * ohw..],
                            1,
                            ohw,
                            1.0,
                            &mut dw[gi * oc_g * kg..],
                            kg,
                            1,
                        );
                    }
                    if this.input_grad {
                        let dxi = &mut dx[(i - lo) * xs..(i - lo + 1) * xs];
                        let target: &mut [f32] = if this.is_pointwise() { dxi } else { &mut dcol };
                        for gi in 0..g {
                            // dcols_g = W_gᵀ · dY_g
                            gemm(
                                kg,
                                oc_g,
                                ohw,
                                &this.weight.value[gi * oc_g * kg..],
                                1,
                                kg,
                                &dyi[gi * oc_g * ohw..],
                                ohw,
                                1,
                                0.0,
                                &mut target[gi * kg * ohw..],
                                ohw,
                                1,
                            );
                        }
                        if !this.is_pointwise() {
                            this.col2im(&dcol, h, w, dxi);
                        }
                    }
                }
                (dw, dx)
            })
            .collect();

        let mut dx_all = if self.input_grad {
            Some(Tensor::zeros(x.n, x.c, h, w))
        } else {
            None
        };
        let mut offset = 0;
        for (dw, dx) in parts {
            for (a, b) in self.weight.grad.iter_mut().zip(&dw) {
                *a += b;
            }
            if let Some(t) = dx_all.as_mut() {
                t.data[offset..offset + dx.len()].copy_from_slice(&dx);
                offset += dx.len();
            }
        }
        dx_all
    }
}

impl Module for Conv2d {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
    }
    fn visit_state(&self, f: &mut dyn FnMut(&[f32])) {
        f(&self.weight.value);
    }
    fn visit_state_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        f(&mut self.weight.value);
    }
}

pub struct BatchNorm2d {
    pub c: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub momentum: f32,
    pub eps: f32,
    cache: Option<(Tensor, Vec<f32>)>,
}

impl BatchNorm2d {
    pub fn new(c: usize) -> Self {
        Self {
            c,
            gamma: Param::new(vec![1.0; c]),
            beta: Param::new(vec![0.0; c]),
            running_mean: vec![0.0; c],
            running_var: vec![1.0; c],
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let mut y = x.clone();
        let hw = x.h * x.w;
        for ch in 0..self.c {
            let scale = self.gamma.value[ch] / (self.running_var[ch] + self.eps).sqrt();
            let shift = self.beta.value[ch] - self.running_mean[ch] * scale;
            for i in 0..x.n {
                let off = (i * self.c + ch) * hw;
                for v in &mut y.data[off..off + hw] {
                    *v = *v * scale + shift;
                }
            }
        }
        y
    }

    pub fn forward_train(&mut self, x: Tensor) -> Tensor {
        let hw = x.h * x.w;
        let m = (x.n * hw) as f64;
        let mut xhat = x;
        let mut inv_std = vec![0.0f32; self.c];
        for ch in 0..self.c {
            let mut sum = 0.0f64;
            let mut sq = 0.0f64;
            for i in 0..xhat.n {
                let off = (i * self.c + ch) * hw;
                for &v in &xhat.data[off..off + hw] {
                    sum += v as f64;
                    sq += (v as f64) * (v as f64);
                }
            }
            let mean = sum / m;
            let var = (sq / m - mean * mean).max(0.0);
            let istd = 1.0 / (var + self.eps as f64).sqrt();
            inv_std[ch] = istd as f32;
            for i in 0..xhat.n {
                let off = (i * self.c + ch) * hw;
                for v in &mut xhat.data[off..off + hw] {
                    *v = ((*v as f64 - mean) * istd) as f32;
                }
            }
            let unbiased = if m > 1.0 { var * m / (m - 1.0) } else { var };
            let mo = self.momentum;
            self.running_mean[ch] = (1.0 - mo) * self.running_mean[ch] + mo * mean as f32;
            self.running_var[ch] = (1.0 - mo) * self.running_var[ch] + mo * unbiased as f32;
        }
        let mut y = xhat.clone();
        for ch in 0..self.c {
            let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
            for i in 0..y.n {
                let off = (i * self.c + ch) * hw;
                for v in &mut y.data[off..off + hw] {
                    *v = *v * g + b;
                }
            }
        }
        self.cache = Some((xhat, inv_std));
        y
    }

    pub fn backward(&mut self, dy: Tensor) -> Tensor {
        let (xhat, inv_std) = self.cache.take().expect("backward without forward_train");
        let hw = dy.h * dy.w;
        let m = (dy.n * hw) as f64;
        let mut dx = dy;
        for ch in 0..self.c {
            let mut sum_dy = 0.0f64;
            let mut sum_dy_x = 0.0f64;
            for i in 0..dx.n {
                let off = (i * self.c + ch) * hw;
                for (d, xh) in dx.data[off..off + hw].iter().zip(&xhat.data[off..off + hw]) {
                    sum_dy += *d as f64;
                    sum_dy_x += (*d as f64) * (*xh as f64);
                }
            }
            self.gamma.grad[ch] += sum_dy_x as f32;
            self.beta.grad[ch] += sum_dy as f32;
            let k = self.gamma.value[ch] as f64 * inv_std[ch] as f64 / m;
            for i in 0..dx.n {
                let off = (i * self.c + ch) * hw;
                for (d, xh) in dx.data[off..off + hw].iter_mut().zip(&xhat.data[off..off + hw]) {
                    *d = (k * (m * *d as f64 - sum_dy - *xh as f64 * sum_dy_x)) as f32;
                }
            }
        }
        dx
    }
}

impl Module for BatchNorm2d {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
    fn visit_state(&self, f: &mut dyn FnMut(&[f32])) {
        f(&self.gamma.value);
        f(&self.beta.value);
        f(&self.running_mean);
        f(&self.running_var);
    }
    fn visit_state_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        f(&mut self.gamma.value);
        f(&mut self.beta.value);
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}

#[derive(Default)]
pub struct Relu {
    output: Option<Tensor>,
}

impl Relu {
    pub fn forward(x: &Tensor) -> Tensor {
        let mut y = x.clone();
        Self::apply(&mut y);
        y
    }

    fn apply(t: &mut Tensor) {
        for v in &mut t.data {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }

    pub fn forward_train(&mut self, mut x: Tensor) -> Tensor {
        Self::apply(&mut x);
        self.output = Some(x.clone());
        x
    }

    pub fn backward(&mut self, mut dy: Tensor) -> Tensor {
        let out = self.output.take().expect("backward without forward_train");
        for (d, o) in dy.data.iter_mut().zip(&out.data) {
            if *o <= 0.0 {
                *d = 0.0;
            }
        }
        dy
    }
}

/// 3×3 max pooling, stride 2, padding 1.
#[derive(Default)]
pub struct MaxPool {
    cache: Option<(Vec<u32>, [usize; 4])>,
}

impl MaxPool {
    const K: usize = 3;
    const S: usize = 2;
    const P: usize = 1;

    pub fn out_hw(h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * Self::P - Self::K) / Self::S + 1,
            (w + 2 * Self::P - Self::K) / Self::S + 1,
        )
    }

    fn run(x: &Tensor) -> (Tensor, Vec<u32>) {
        let (oh, ow) = Self::out_hw(x.h, x.w);
        let mut y = Tensor::zeros(x.n, x.c, oh, ow);
        let mut arg = vec![0u32; y.data.len()];
        for plane in 0..x.n * x.c {
            let src = &x.data[plane * x.h * x.w..(plane + 1) * x.h * x.w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_i = 0u32;
                    for ky in 0..Self::K {
                        let iy = (oy * Self::S + ky) as isize - Self::P as isize;
                        if iy < 0 || iy >= x.h as isize {
                            continue;
                        }
                        for kx in 0..Self::K {
                            let ix = (ox * Self::S + kx) as isize - Self::P as isize;
                            if ix < 0 || ix >= x.w as isize {
                                continue;
                            }
                            let idx = iy as usize * x.w + ix as usize;
                            if src[idx] > best {
                                best = src[idx];
                                best_i = idx as u32;
                            }
                        }
                    }
                    let o = plane * oh * ow + oy * ow + ox;
                    y.data[o] = best;
                    arg[o] = best_i;
                }
            }
        }
        (y, arg)
    }

    pub fn forward(x: &Tensor) -> Tensor {
        Self::run(x).0
    }

    pub fn forward_train(&mut self, x: Tensor) -> Tensor {
        let (y, arg) = Self::run(&x);
        self.cache = Some((arg, x.shape()));
        y
    }

    pub fn backward(&mut self, dy: Tensor) -> Tensor {
        let (arg, [n, c, h, w]) = self.cache.take().expect("backward without forward_train");
        let mut dx = Tensor::zeros(n, c, h, w);
        let ohw = dy.h * dy.w;
        for plane in 0..n * c {
            let dst = &mut dx.data[plane * h * w..(plane + 1) * h * w];
            for o in 0..ohw {
                let gi = plane * ohw + o;
                dst[arg[gi] as usize] += dy.data[gi];
            }
        }
        dx
    }
}

#[derive(Default)]
pub struct GlobalAvgPool {
    shape: Option<[usize; 4]>,
}

impl GlobalAvgPool {
    pub fn forward(x: &Tensor) -> Tensor {
        let hw = x.h * x.w;
        let mut y = Tensor::zeros(x.n, x.c, 1, 1);
        for (o, plane) in y.data.iter_mut().zip(x.data.chunks(hw.max(1))) {
            *o = (plane.iter().map(|&v| v as f64).sum::<f64>() / hw as f64) as f32;
        }
        y
    }

    pub fn forward_train(&mut self, x: Tensor) -> Tensor {
        self.shape = Some(x.shape());
        Self::forward(&x)
    }

    pub fn backward(&mut self, dy: Tensor) -> Tensor {
        let [n, c, h, w] = self.shape.take().expect("backward without forward_train");
        let hw = h * w;
        let mut dx = Tensor::zeros(n, c, h, w);
        for (plane, d) in dx.data.chunks_mut(hw).zip(&dy.data) {
            plane.fill(d / hw as f32);
        }
        dx
    }
}

/// Fully connected layer on `[n, in, 1, 1]` inputs.
pub struct Linear {
    pub in_f: usize,
    pub out_f: usize,
    /// `[out_f, in_f]`
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Linear {
    pub fn new<R: Rng>(in_f: usize, out_f: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_f as f32).sqrt();
        let dist = Uniform::new(-bound, bound).expect("valid bounds");
        let weight = (0..in_f * out_f).map(|_| dist.sample(rng)).collect();
        let bias = (0..out_f).map(|_| dist.sample(rng)).collect();
        Self::from_weights(in_f, out_f, weight, bias)
    }

    pub fn from_weights(in_f: usize, out_f: usize, weight: Vec<f32>, bias: Vec<f32>) -> Self {
        assert_eq!(weight.len(), in_f * out_f);
        assert_eq!(bias.len(), out_f);
        Self {
            in_f,
            out_f,
            weight: Param::new(weight),
            bias: Param::new(bias),
            input: None,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.sample_len(), self.in_f, "linear input features");
        let mut y = Tensor::zeros(x.n, self.out_f, 1, 1);
        for row in y.data.chunks_mut(self.out_f) {
            row.copy_from_slice(&self.bias.value);
        }
        gemm(
            x.n,
            self.in_f,
            self.out_f,
            &x.data,
            self.in_f,
            1,
            &self.weight.value,
            1,
            self.in_f,
            1.0,
            &mut y.data,
            self.out_f,
            1,
        );
        y
    }

    pub fn forward_train(&mut self, x: Tensor) -> Tensor {
        let y = self.forward(&x);
        self.input = Some(x);
        y
    }

    pub fn backward(&mut self, dy: Tensor) -> Tensor {
        let x = self.input.take().expect("backward without forward_train");
        let n = x.n;
        gemm(
            self.out_f,
            n,
            self.in_f,
            &dy.data,
            1,
            self.out_f,
            &x.data,
            self.in_f,
            1,
            1.0,
            &mut self.weight.grad,
            self.in_f,
            1,
        );
        for row in dy.data.chunks(self.out_f) {
            for (g, d) in self.bias.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = Tensor::zeros(n, x.c, x.h, x.w);
        gemm(
            n,
            self.out_f,
            self.in_f,
            &dy.data,
            self.out_f,
            1,
            &self.weight.value,
            self.in_f,
            1,
            0.0,
            &mut dx.data,
            self.in_f,
            1,
        );
        dx
    }
}

impl Module for Linear {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
    fn visit_state(&self, f: &mut dyn FnMut(&[f32])) {
        f(&self.weight.value);
        f(&self.bias.value);
    }
    fn visit_state_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        f(&mut self.weight.value);
        f(&mut self.bias.value);
    }
}

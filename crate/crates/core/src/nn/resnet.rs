//! Residual convolutional backbones with a 2048-wide penultimate layer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{BatchNorm2d, Conv2d, GlobalAvgPool, Linear, MaxPool, Module, Param, Relu};
use super::tensor::Tensor;

/// Width of the penultimate (feature) layer for every architecture.
pub const FEATURE_DIM: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    ResNet18,
    #[default]
    ResNet50,
    ResNeXt50,
    /// Narrow one-block-per-stage residual network for CPU-scale experiments.
    Compact,
}

impl std::str::FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "resnet18" => Ok(Self::ResNet18),
            "resnet50" => Ok(Self::ResNet50),
            "resnext50" => Ok(Self::ResNeXt50),
            "compact" => Ok(Self::Compact),
            other => Err(format!("unknown architecture `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlockKind {
    Basic,
    Bottleneck,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    block: BlockKind,
    stem: usize,
    /// (kernel, stride, padding) of the stem convolution.
    stem_conv: (usize, usize, usize),
    layers: [usize; 4],
    planes: [usize; 4],
    groups: usize,
    width_per_group: usize,
}

impl Architecture {
    fn layout(self) -> Layout {
        match self {
            Architecture::ResNet18 => Layout {
                block: BlockKind::Basic,
                stem: 64,
                stem_conv: (7, 2, 3),
                layers: [2, 2, 2, 2],
                planes: [64, 128, 256, 512],
                groups: 1,
                width_per_group: 64,
            },
            Architecture::ResNet50 => Layout {
                block: BlockKind::Bottleneck,
                stem: 64,
                stem_conv: (7, 2, 3),
                layers: [3, 4, 6, 3],
                planes: [64, 128, 256, 512],
                groups: 1,
                width_per_group: 64,
            },
            Architecture::ResNeXt50 => Layout {
                block: BlockKind::Bottleneck,
                stem: 64,
                stem_conv: (7, 2, 3),
                layers: [3, 4, 6, 3],
                planes: [64, 128, 256, 512],
                groups: 32,
                width_per_group: 4,
            },
            Architecture::Compact => Layout {
                block: BlockKind::Basic,
                stem: 8,
                stem_conv: (4, 4, 0),
                layers: [1, 1, 1, 1],
                planes: [8, 16, 32, 64],
                groups: 1,
                width_per_group: 64,
            },
        }
    }
}

/// Convolution followed by batch normalization.
pub struct ConvBn {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
}

impl ConvBn {
    #[allow(clippy::too_many_arguments)]
    fn new(
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        groups: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            conv: Conv2d::new(in_c, out_c, k, stride, pad, groups, rng),
            bn: BatchNorm2d::new(out_c),
        }
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        self.bn.forward(&self.conv.forward(x))
    }

    fn forward_train(&mut self, x: Tensor) -> Tensor {
        let y = self.conv.forward_train(x);
        self.bn.forward_train(y)
    }

    fn backward(&mut self, dy: Tensor) -> Option<Tensor> {
        let d = self.bn.backward(dy);
        self.conv.backward(d)
    }
}

impl Module for ConvBn {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv.visit_params(f);
        self.bn.visit_params(f);
    }
    fn visit_state(&self, f: &mut dyn FnMut(&[f32])) {
        self.conv.visit_state(f);
        self.bn.visit_state(f);
    }
    fn visit_state_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        self.conv.visit_state_mut(f);
        self.bn.visit_state_mut(f);
    }
}

/// One residual block: a stack of conv-bn layers (ReLU between them), an
/// optional projection shortcut, and a ReLU after the sum.
pub struct ResidualBlock {
    main: Vec<ConvBn>,
    inner_relu: Vec<Relu>,
    shortcut: Option<ConvBn>,
    out_relu: Relu,
}

impl ResidualBlock {
    fn basic(in_c: usize, planes: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let main = vec![
            ConvBn::new(in_c, planes, 3, stride, 1, 1, rng),
            ConvBn::new(planes, planes, 3, 1, 1, 1, rng),
        ];
        let shortcut = (stride != 1 || in_c != planes)
            .then(|| ConvBn::new(in_c, planes, 1, stride, 0, 1, rng));
        Self::assemble(main, shortcut)
    }

    fn bottleneck(
        in_c: usize,
        planes: usize,
        stride: usize,
        groups: usize,
        width_per_group: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let width = planes * width_per_group / 64 * groups;
        let out = planes * 4;
        let main = vec![
            ConvBn::new(in_c, width, 1, 1, 0, 1, rng),
            ConvBn::new(width, width, 3, stride, 1, groups, rng),
            ConvBn::new(width, out, 1, 1, 0, 1, rng),
        ];
        let shortcut =
            (stride != 1 || in_c != out).then(|| ConvBn::new(in_c, out, 1, stride, 0, 1, rng));
        Self::assemble(main, shortcut)
    }

    fn assemble(main: Vec<ConvBn>, shortcut: Option<ConvBn>) -> Self {
        let inner_relu = (1..main.len()).map(|_| Relu::default()).collect();
        Self {
            main,
            inner_relu,
            shortcut,
            out_relu: Relu::default(),
        }
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        let mut h = self.main[0].forward(x);
        for (layer, _) in self.main[1..].iter().zip(&self.inner_relu) {
            h = layer.forward(&Relu::forward(&h));
        }
        match &self.shortcut {
            Some(s) => h.add_assign(&s.forward(x)),
            None => h.add_assign(x),
        }
        Relu::forward(&h)
    }

    fn forward_train(&mut self, x: Tensor) -> Tensor {
        let identity = match &mut self.shortcut {
            Some(s) => s.forward_train(x.clone()),
            None => x.clone(),
        };
        let mut h = self.main[0].forward_train(x);
        for (layer, relu) in self.main[1..].iter_mut().zip(&mut self.inner_relu) {
            h = layer.forward_train(relu.forward_train(h));
        }
        h.add_assign(&identity);
        self.out_relu.forward_train(h)
    }

    fn backward(&mut self, dy: Tensor) -> Tensor {
        let g = self.out_relu.backward(dy);
        let mut d = g.clone();
        for i in (1..self.main.len()).rev() {
            let dl = self.main[i].backward(d).expect("inner conv has input grad");
            d = self.inner_relu[i - 1].backward(dl);
        }
        let mut dx = self.main[0].backward(d).expect("inner conv has input grad");
        match &mut self.shortcut {
            Some(s) => dx.add_assign(&s.backward(g).expect("shortcut has input grad")),
            None => dx.add_assign(&g),
        }
        dx
    }
}

impl Module for ResidualBlock {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for l in &mut self.main {
            l.visit_params(f);
        }
        if let Some(s) = &mut self.shortcut {
            s.visit_params(f);
        }
    }
    fn visit_state(&self, f: &mut dyn FnMut(&[f32])) {
        for l in &self.main {
            l.visit_state(f);
        }
        if let Some(s) = &self.shortcut {
            s.visit_state(f);
        }
    }
    fn visit_state_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        for l in &mut self.main {
            l.visit_state_mut(f);
        }
        if let Some(s) = &mut self.shortcut {
            s.visit_state_mut(f);
        }
    }
}

/// Backbone plus linear classification head.
pub struct ResNet {
    pub architecture: Architecture,
    pub n_classes: usize,
    stem: ConvBn,
    stem_relu: Relu,
    pool: MaxPool,
    blocks: Vec<ResidualBlock>,
    /// 1×1 projection to `FEATURE_DIM` when the last stage is narrower.
    projection: Option<(ConvBn, Relu)>,
    gap: GlobalAvgPool,
    pub head: Linear,
}

impl ResNet {
    pub fn new(architecture: Architecture, n_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = architecture.layout();
        let (sk, ss, sp) = l.stem_conv;
        let mut stem = ConvBn::new(3, l.stem, sk, ss, sp, 1, &mut rng);
        stem.conv.input_grad = false;
        let mut blocks = Vec::new();
        let mut in_c = l.stem;
        for stage in 0..4 {
            for b in 0..l.layers[stage] {
                let stride = if stage > 0 && b == 0 { 2 } else { 1 };
                let planes = l.planes[stage];
                let block = match l.block {
                    BlockKind::Basic => ResidualBlock::basic(in_c, planes, stride, &mut rng),
                    BlockKind::Bottleneck => ResidualBlock::bottleneck(
                        in_c,
                        planes,
                        stride,
                        l.groups,
                        l.width_per_group,
                        &mut rng,
                    ),
                };
                in_c = match l.block {
                    BlockKind::Basic => planes,
                    BlockKind::Bottleneck => planes * 4,
                };
                blocks.push(block);
            }
        }
        let projection = (in_c != FEATURE_DIM)
            .then(|| (ConvBn::new(in_c, FEATURE_DIM, 1, 1, 0, 1, &mut rng), Relu::default()));
        let head = Linear::new(FEATURE_DIM, n_classes, &mut rng);
        Self {
            architecture,
            n_classes,
            stem,
            stem_relu: Relu::default(),
            pool: MaxPool::default(),
            blocks,
            projection,
            gap: GlobalAvgPool::default(),
            head,
        }
    }

    /// Penultimate activations, `[n, FEATURE_DIM, 1, 1]`.
    pub fn features(&self, x: &Tensor) -> Tensor {
        let mut h = MaxPool::forward(&Relu::forward(&self.stem.forward(x)));
        for b in &self.blocks {
            h = b.forward(&h);
        }
        if let Some((p, _)) = &self.projection {
            h = Relu::forward(&p.forward(&h));
        }
        GlobalAvgPool::forward(&h)
    }

    pub fn logits(&self, x: &Tensor) -> Tensor {
        self.head.forward(&self.features(x))
    }

    pub fn forward_train(&mut self, x: Tensor) -> Tensor {
        let mut h = self.stem.forward_train(x);
        h = self.stem_relu.forward_train(h);
        h = self.pool.forward_train(h);
        for b in &mut self.blocks {
            h = b.forward_train(h);
        }
        if let Some((p, r)) = &mut self.projection {
            h = r.forward_train(p.forward_train(h));
        }
        let f = self.gap.forward_train(h);
        self.head.forward_train(f)
    }

    pub fn backward(&mut self, dlogits: Tensor) {
        let mut d = self.head.backward(dlogits);
        d = self.gap.backward(d);
        if let Some((p, r)) = &mut self.projection {
            d = p.backward(r.backward(d)).expect("projection has input grad");
        }
        for b in self.blocks.iter_mut().rev() {
            d = b.backward(d);
        }
        d = self.pool.backward(d);
        d = self.stem_relu.backward(d);
        let none = self.stem.backward(d);
        debug_assert!(none.is_none());
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |p| p.zero_grad());
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_state(&mut |s| n += s.len());
        n
    }

    /// Backbone-only state traversal (everything except the head).
    pub fn visit_backbone_state_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        self.stem.visit_state_mut(f);
        for b in &mut self.blocks {
            b.visit_state_mut(f);
        }
        if let Some((p, _)) = &mut self.projection {
            p.visit_state_mut(f);
        }
    }

    pub fn visit_backbone_state(&self, f: &mut dyn FnMut(&[f32])) {
        self.stem.visit_state(f);
        for b in &self.blocks {
            b.visit_state(f);
        }
        if let Some((p, _)) = &self.projection {
            p.visit_state(f);
        }
    }
}

impl Module for ResNet {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.stem.visit_params(f);
        for b in &mut self.blocks {
            b.visit_params(f);
        }
        if let Some((p, _)) = &mut self.projection {
            p.visit_params(f);
        }
        self.head.visit_params(f);
    }
    fn visit_state(&self, f: &mut dyn FnMut(&[f32])) {
        self.visit_backbone_state(f);
        self.head.visit_state(f);
    }
    fn visit_state_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        self.visit_backbone_state_mut(f);
        self.head.visit_state_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::loss::softmax_cross_entropy;

    fn batch(n: usize, size: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * 3 * size * size)
            .map(|_| rand::Rng::random::<f32>(&mut rng) * 2.0 - 1.0)
            .collect();
        Tensor::from_vec(n, 3, size, size, data).unwrap()
    }

    #[test]
    fn compact_feature_width() {
        let net = ResNet::new(Architecture::Compact, 7, 0);
        let f = net.features(&batch(2, 64, 1));
        assert_eq!(f.shape(), [2, FEATURE_DIM, 1, 1]);
        assert_eq!(net.logits(&batch(2, 64, 1)).shape(), [2, 7, 1, 1]);
    }

    #[test]
    fn train_forward_matches_eval_forward_shapes_and_backward_runs() {
        let mut net = ResNet::new(Architecture::Compact, 4, 3);
        let x = batch(3, 48, 2);
        let logits = net.forward_train(x);
        let (_, d) = softmax_cross_entropy(&logits, &[0, 1, 2]);
        net.zero_grad();
        net.backward(d);
        let mut nonzero = 0;
        net.visit_params(&mut |p| {
            if p.grad.iter().any(|g| *g != 0.0) {
                nonzero += 1;
            }
        });
        assert!(nonzero > 10);
    }

    #[test]
    fn whole_network_gradient_matches_finite_difference() {
        // Eval-mode BN differs from train-mode, so probe the train-mode loss.
        let make = || ResNet::new(Architecture::Compact, 3, 11);
        let x = batch(4, 32, 5);
        let labels = [0usize, 1, 2, 1];
        let loss_of = |net: &mut ResNet| -> f64 {
            let l = net.forward_train(x.clone());
            softmax_cross_entropy(&l, &labels).0
        };
        let mut net = make();
        let logits = net.forward_train(x.clone());
        let (_, d) = softmax_cross_entropy(&logits, &labels);
        net.zero_grad();
        net.backward(d);
        let mut grads = Vec::new();
        net.visit_params(&mut |p| grads.push(p.grad.clone()));
        // Head weight and a third-stage BN scale. Early convolutions sit behind
        // enough ReLU kinks that f32 central differences are unreliable; the
        // per-layer checks cover them.
        for (pi, ei) in [(grads.len() - 2, 5usize), (22, 1)] {
            let eps = 1e-3f32;
            let mut plus = make();
            let mut k = 0;
            plus.visit_params(&mut |p| {
                if k == pi {
                    p.value[ei] += eps;
                }
                k += 1;
            });
            let mut minus = make();
            k = 0;
            minus.visit_params(&mut |p| {
                if k == pi {
                    p.value[ei] -= eps;
                }
                k += 1;
            });
            let fd = (loss_of(&mut plus) - loss_of(&mut minus)) / (2.0 * eps as f64);
            let an = grads[pi][ei] as f64;
            assert!((fd - an).abs() < 2e-3 + 0.05 * an.abs(), "param {pi}[{ei}]: fd {fd} vs {an}");
        }
    }
}

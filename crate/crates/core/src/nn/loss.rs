use super::tensor::Tensor;

/// Numerically stable softmax of one row, computed in f64.
pub fn softmax(row: &[f32]) -> Vec<f64> {
    let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
    let exps: Vec<f64> = row.iter().map(|&v| (v as f64 - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean softmax cross-entropy over the batch and its gradient with respect to
/// the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> (f64, Tensor) {
    let c = logits.sample_len();
    assert_eq!(logits.n, labels.len(), "one label per row");
    let n = labels.len().max(1) as f64;
    let mut grad = Tensor::zeros(logits.n, logits.c, logits.h, logits.w);
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let p = softmax(&logits.data[i * c..(i + 1) * c]);
        loss -= p[y].max(1e-300).ln();
        for (j, pj) in p.iter().enumerate() {
            let t = if j == y { 1.0 } else { 0.0 };
            grad.data[i * c + j] = ((pj - t) / n) as f32;
        }
    }
    (loss / n, grad)
}

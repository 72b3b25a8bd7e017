//! Loss functions returning the value and the gradient with respect to the
//! network output.

/// Mean squared error over the output components.
pub fn mse(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len() as f64;
    let loss = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    (loss, grad)
}

/// Log-softmax restricted to `mask`; masked entries get `-inf`.
pub fn masked_log_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let m = logits
        .iter()
        .zip(mask)
        .filter(|(_, &ok)| ok)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits
        .iter()
        .zip(mask)
        .filter(|(_, &ok)| ok)
        .map(|(&l, _)| (l - m).exp())
        .sum();
    let lz = m + z.ln();
    logits
        .iter()
        .zip(mask)
        .map(|(&l, &ok)| if ok { l - lz } else { f64::NEG_INFINITY })
        .collect()
}

/// Softmax restricted to `mask`; masked entries are exactly zero.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    masked_log_softmax(logits, mask)
        .into_iter()
        .map(|l| if l == f64::NEG_INFINITY { 0.0 } else { l.exp() })
        .collect()
}

/// Negative log-likelihood of `target` under the masked softmax.
pub fn masked_cross_entropy(logits: &[f64], mask: &[bool], target: usize) -> (f64, Vec<f64>) {
    let probs = masked_softmax(logits, mask);
    let loss = -masked_log_softmax(logits, mask)[target];
    let mut grad = probs;
    grad[target] -= 1.0;
    (loss, grad)
}

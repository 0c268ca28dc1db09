/// log(e^a + e^b) as max(a,b) + log1p(e^-|a-b|). Two -inf inputs give -inf.
pub fn logsumexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let m = a.max(b);
    m + (-(a - b).abs()).exp().ln_1p()
}

/// Partial derivatives of [`logsumexp`] with respect to (a, b).
pub fn logsumexp_grad(a: f64, b: f64) -> (f64, f64) {
    let l = logsumexp(a, b);
    ((a - l).exp(), (b - l).exp())
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Loss −log softmax(scores)[gold] and its gradient softmax − onehot(gold).
pub fn softmax_cross_entropy(scores: &[f64], gold: usize) -> (f64, Vec<f64>) {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
    let log_z = m + z.ln();
    let loss = (log_z - scores[gold]).max(0.0);
    let mut grad = softmax(scores);
    grad[gold] -= 1.0;
    (loss, grad)
}

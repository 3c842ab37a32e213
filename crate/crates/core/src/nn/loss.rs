use super::tensor::Scalar;

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Binary cross-entropy on a logit in log-sum-exp form. Returns the loss and
/// its derivative with respect to the logit.
pub fn sigmoid_bce<T: Scalar>(logit: T, label: bool) -> (T, T) {
    let y = if label { T::one() } else { T::zero() };
    let loss = logit.max(T::zero()) - logit * y + (-logit.abs()).exp().ln_1p();
    (loss, sigmoid(logit) - y)
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Multiclass cross-entropy with its gradient `softmax − onehot`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], label: usize) -> (T, Vec<T>) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
    let mut grad = softmax(logits);
    grad[label] = grad[label] - T::one();
    (lse - logits[label], grad)
}

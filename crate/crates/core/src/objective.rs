//! Per-step losses and their gradients with respect to the logits.

use alloc::vec::Vec;

use crate::policy::ActionDistribution;
use crate::real::Real;

/// Probability floor inside logarithms.
pub const PROB_EPS: f64 = 1e-8;

/// Element-wise binary cross-entropy between `π` and the label vector,
/// averaged over the `n` actions:
/// `-(1/n) Σ [y log π + (1-y) log(1-π)]`, both logs floored at [`PROB_EPS`].
pub fn label_cross_entropy<T: Real>(probs: &[T], labels: &[bool]) -> T {
    debug_assert_eq!(probs.len(), labels.len());
    let eps = T::from_f64(PROB_EPS);
    let n = T::from_f64(probs.len() as f64);
    let total = probs.iter().zip(labels).fold(T::zero(), |acc, (&p, &y)| {
        acc + if y { p.max(eps).ln() } else { (T::one() - p).max(eps).ln() }
    });
    -total / n
}

/// Loss `CE(π, y) - β·H(π)` and its gradient with respect to the logits.
pub fn label_loss_grad<T: Real>(dist: &ActionDistribution<T>, labels: &[bool], beta: T) -> (T, Vec<T>) {
    let probs = &dist.probabilities;
    let eps = T::from_f64(PROB_EPS);
    let n = T::from_f64(probs.len() as f64);
    // dCE/dπ_i; the floored branch contributes nothing.
    let dp: Vec<T> = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            if y {
                if p > eps { -T::one() / (p * n) } else { T::zero() }
            } else if T::one() - p > eps {
                T::one() / ((T::one() - p) * n)
            } else {
                T::zero()
            }
        })
        .collect();
    let mean: T = probs.iter().zip(&dp).map(|(&p, &g)| p * g).sum();
    let mut grad: Vec<T> = probs.iter().zip(&dp).map(|(&p, &g)| p * (g - mean)).collect();
    if beta != T::zero() {
        for (g, e) in grad.iter_mut().zip(entropy_grad(dist)) {
            *g -= beta * e;
        }
    }
    let loss = label_cross_entropy(probs, labels) - beta * dist.entropy();
    (loss, grad)
}

/// `∂H/∂logit_j = -π_j (log π_j + H)`.
pub fn entropy_grad<T: Real>(dist: &ActionDistribution<T>) -> Vec<T> {
    let h = dist.entropy();
    dist.probabilities
        .iter()
        .zip(&dist.log_probabilities)
        .map(|(&p, &lp)| -p * (lp + h))
        .collect()
}

/// Gradient of the loss `-(advantage · log π(a) + β·H(π))` with respect to
/// the logits.
pub fn policy_gradient_grad<T: Real>(
    dist: &ActionDistribution<T>,
    action: usize,
    advantage: T,
    beta: T,
) -> Vec<T> {
    let eg = entropy_grad(dist);
    dist.probabilities
        .iter()
        .zip(eg)
        .enumerate()
        .map(|(j, (&p, e))| {
            let onehot = if j == action { T::one() } else { T::zero() };
            -advantage * (onehot - p) - beta * e
        })
        .collect()
}

/// `G_t = Σ_{k≥t} γ^{k-t} R_k`, by reverse accumulation.
pub fn compute_returns<T: Real>(rewards: &[T], gamma: T) -> Vec<T> {
    let mut out = alloc::vec![T::zero(); rewards.len()];
    let mut acc = T::zero();
    for (g, &r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *g = acc;
    }
    out
}

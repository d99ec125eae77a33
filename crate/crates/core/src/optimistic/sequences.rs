//! Adversarial scalar sequences and the variation measure.

use super::{run_optimistic, GuessPolicy, OptimisticConfig, OptimisticRate};
use crate::error::{Error, Result};
use crate::geometry::{norm2, sub, DualVector, Point};
use crate::losses::{Loss, LossSequence};
use crate::schedule::Timeline;

/// `Σ_t ‖g_t − g_{t−k}‖²` with `g_s = 0` for `s ≤ 0`.
pub fn variation(seq: &LossSequence, k: usize) -> Result<f64> {
    let grads = seq
        .linear_gradients()
        .ok_or_else(|| Error::Unsupported("the variation is defined for linear losses only".into()))?;
    let mut v = 0.0;
    for t in 0..grads.len() {
        let d = if t >= k {
            norm2(&sub(&grads[t].0, &grads[t - k].0))
        } else {
            norm2(&grads[t].0)
        };
        v += d * d;
    }
    Ok(v)
}

fn scalar_seq(values: Vec<f64>) -> LossSequence {
    LossSequence::new(values.into_iter().map(Loss::scalar).collect(), 1.0)
}

/// `2m` periods of `ℓ` times −1 then `ℓ` times +1, followed by `τ+1` times −1.
pub fn gen_lb_seq_periods(m: usize, ell: usize, tau: usize) -> Result<LossSequence> {
    if m <= tau || ell <= tau {
        return Err(Error::Validation(format!(
            "the periods sequence needs m > tau and l > tau (got m={m}, l={ell}, tau={tau})"
        )));
    }
    let mut v = Vec::with_capacity(2 * m * ell + tau + 1);
    for _ in 0..m {
        v.extend(std::iter::repeat_n(-1.0, ell));
        v.extend(std::iter::repeat_n(1.0, ell));
    }
    v.extend(std::iter::repeat_n(-1.0, tau + 1));
    Ok(scalar_seq(v))
}

/// `4m` pairs of blocks (`τ+1` zeros, `τ+1` ones), then `2mℓ − 8m(τ+1)` zeros,
/// then `τ+1` ones.
pub fn gen_lb_seq_zero_one(m: usize, ell: usize, tau: usize) -> Result<LossSequence> {
    if m == 0 || ell <= 4 * tau + 4 {
        return Err(Error::Validation(format!(
            "the zero-one sequence needs m >= 1 and l > 4tau+4 (got m={m}, l={ell}, tau={tau})"
        )));
    }
    let b = tau + 1;
    let mut v = Vec::with_capacity(2 * m * ell + b);
    for _ in 0..4 * m {
        v.extend(std::iter::repeat_n(0.0, b));
        v.extend(std::iter::repeat_n(1.0, b));
    }
    v.extend(std::iter::repeat_n(0.0, 2 * m * ell - 8 * m * b));
    v.extend(std::iter::repeat_n(1.0, b));
    Ok(scalar_seq(v))
}

/// The block length used in the impossibility argument: `(16m+9)(τ+1)² + 2τ(τ+1)`.
pub fn lb_proof_length(m: usize, tau: usize) -> usize {
    (16 * m + 9) * (tau + 1) * (tau + 1) + 2 * tau * (tau + 1)
}

/// Repeats every loss `τ+1` times.
pub fn gen_repeat_seq(base: &LossSequence, tau: usize) -> LossSequence {
    let losses = base.losses.iter().flat_map(|l| std::iter::repeat_n(l.clone(), tau + 1)).collect();
    LossSequence::new(losses, base.gbound)
}

/// Result of playing the sign-following adversary against DODA.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryOutcome {
    /// The `±1` base sequence chosen by the adversary.
    pub base: LossSequence,
    /// Average play of DODA over each repeated block.
    pub block_means: Vec<f64>,
    /// Comparator `p = −sign(Σ g_k)` with `|p − x_1| = 1`.
    pub comparator: f64,
    /// Regret of the block-averaged learner on the base sequence.
    pub base_regret: f64,
}

/// Builds a `±1` base sequence of length `len` against DODA with the
/// last-uniform guess, uniform delay `τ`, start 0, and the given rate pair,
/// run on the repeated sequence. Each base loss is `sign(x̄_k)` where `x̄_k`
/// is the average play over block `k`; that block does not depend on `g_k`,
/// so it is obtained by replaying the prefix with a placeholder.
pub fn sign_adversary(len: usize, tau: usize, eta: f64, eta_tilde: f64) -> Result<AdversaryOutcome> {
    let b = tau + 1;
    let mut chosen: Vec<f64> = Vec::with_capacity(len);
    let mut means = Vec::with_capacity(len);
    let mut total = 0.0;
    for k in 1..=len {
        let mut trial = chosen.clone();
        trial.push(1.0);
        let seq = gen_repeat_seq(&scalar_seq(trial), tau);
        let tl = Timeline::constant(k * b, tau);
        let run = run_optimistic(&OptimisticConfig {
            dim: 1,
            x_start: Point(vec![0.0]),
            losses: &seq,
            timeline: &tl,
            guess: GuessPolicy::LastUniform { tau },
            rate: OptimisticRate::Pair { eta, eta_tilde, strict: false },
            comparator: Point(vec![0.0]),
        })?;
        let mean = run.steps[(k - 1) * b..].iter().map(|s| s.played.0[0]).sum::<f64>() / b as f64;
        let g = if mean > 0.0 {
            1.0
        } else if mean < 0.0 {
            -1.0
        } else if total < 0.0 {
            -1.0
        } else {
            1.0
        };
        total += g;
        chosen.push(g);
        means.push(mean);
    }
    let comparator = if total > 0.0 { -1.0 } else { 1.0 };
    let base_regret = chosen.iter().zip(&means).map(|(g, x)| g * (x - comparator)).sum();
    Ok(AdversaryOutcome {
        base: LossSequence::new(chosen.into_iter().map(|g| Loss::Linear(DualVector(vec![g]))).collect(), 1.0),
        block_means: means,
        comparator,
        base_regret,
    })
}

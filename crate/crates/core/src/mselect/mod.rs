//! Robust M-estimator selection.
//!
//! Fit one estimator per block, compare every ordered pair `(K, K')` by the
//! median, over the remaining blocks, of the per-block mean of the loss
//! difference `γ(ŝ_K) − γ(ŝ_{K'})`, and select the estimator whose worst
//! pairwise comparison is smallest. Ties go to the smallest block index.
//!
//! A contrast bundles the per-block fitter with the pointwise loss; the
//! instantiations in [`contrasts`] cover L2 density estimation on an
//! orthonormal dictionary, smoothed histogram density estimation under
//! log loss, and least-squares regression on a feature basis.

pub mod contrasts;

use serde::Serialize;
use thiserror::Error;

use crate::blocks::{
    choose_block_count, compensated_mean, median, BlockCountMode, BlockPartition, BlocksError,
};
use crate::constants::Constants;

pub use contrasts::{
    CellDensity, KullbackHistogram, L2Density, L2Regression, ProjectionEstimate, RegressionEstimate,
};

#[derive(Debug, Error)]
pub enum MselectError {
    #[error("pairwise comparisons need V >= 3 blocks, got {0}")]
    InsufficientBlocks(usize),
    #[error("block {block} fit failed: {source}")]
    BlockFit {
        block: usize,
        #[source]
        source: Box<MselectError>,
    },
    #[error("cannot fit an empty block")]
    EmptyBlock,
    #[error("dictionary must be orthonormal for the L2 density contrast")]
    NotOrthonormal,
    #[error("smoothing level must be positive, got {0}")]
    BadSmoothing(f64),
    #[error("breakpoints must be at least 2, strictly increasing, spanning [0,1]")]
    BadBreakpoints,
    #[error("margin exponents must lie in (0,1) and scales be nonnegative")]
    BadMarginParams,
    #[error("Delta must exceed 1, got {0}")]
    BadDelta(f64),
    #[error(transparent)]
    Blocks(#[from] BlocksError),
}

/// Result of fitting one block: the estimate plus a degeneracy flag (e.g. a
/// rank-deficient regression design resolved by the minimal-norm fallback).
#[derive(Debug, Clone)]
pub struct BlockFit<E> {
    pub estimate: E,
    pub degenerate: bool,
}

impl<E> BlockFit<E> {
    pub fn clean(estimate: E) -> Self {
        BlockFit {
            estimate,
            degenerate: false,
        }
    }
}

/// One M-estimation problem: a per-block fitter and a pointwise loss.
pub trait Contrast {
    type Obs;
    type Estimate: Clone;

    fn fit_block(&self, block: &[Self::Obs]) -> Result<BlockFit<Self::Estimate>, MselectError>;

    /// Pointwise loss γ(estimate)(obs).
    fn loss(&self, estimate: &Self::Estimate, obs: &Self::Obs) -> f64;

    /// Analytic excess loss against the target, when the constructor was
    /// given one (test harness hook).
    fn excess_loss_ref(&self, _estimate: &Self::Estimate) -> Option<f64> {
        None
    }
}

/// Margin condition parameters: the conditional variance of the loss
/// difference is bounded by `σ0²·ℓ² + Σ_i σ_i²·ℓ^{2α_i}` outside an event of
/// probability `ε`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginParams {
    pub sigma0: f64,
    /// Pairs (α_i, σ_i) with 0 < α_i < 1.
    pub terms: Vec<(f64, f64)>,
    pub epsilon: f64,
}

impl MarginParams {
    pub fn new(sigma0: f64, terms: Vec<(f64, f64)>, epsilon: f64) -> Result<Self, MselectError> {
        if sigma0 < 0.0
            || !(0.0..=1.0).contains(&epsilon)
            || terms.iter().any(|&(a, s)| !(a > 0.0 && a < 1.0) || s < 0.0)
        {
            return Err(MselectError::BadMarginParams);
        }
        Ok(MarginParams {
            sigma0,
            terms,
            epsilon,
        })
    }
}

/// The two rate quantities of the selector risk bound, for block count `v`
/// and sample size `n` at trade-off parameter `Delta > 1`:
/// `ν = C0·σ0·√(V/n) + N/Δ` and `R = Σ C_i·(Δ^{α_i}·σ_i·√(V/n))^{1/(1−α_i)}`
/// with `C0 = L1` and `C_i = 4(1−α_i)(L1·α_i^{α_i})^{1/(1−α_i)}`.
pub fn rate_quantities(
    params: &MarginParams,
    v: usize,
    n: usize,
    delta_cap: f64,
) -> Result<(f64, f64), MselectError> {
    rate_quantities_with_chain(params, v, n, delta_cap, Constants::standard().l1, 4.0)
}

/// Shared implementation for the independent and mixing constant chains:
/// `C0 = c0`, `C_i = front·(1−α_i)·(c0·α_i^{α_i})^{1/(1−α_i)}`.
pub fn rate_quantities_with_chain(
    params: &MarginParams,
    v: usize,
    n: usize,
    delta_cap: f64,
    c0: f64,
    front: f64,
) -> Result<(f64, f64), MselectError> {
    if !(delta_cap > 1.0) {
        return Err(MselectError::BadDelta(delta_cap));
    }
    let rn = (v as f64 / n as f64).sqrt();
    let nu = c0 * params.sigma0 * rn + params.terms.len() as f64 / delta_cap;
    let r = params
        .terms
        .iter()
        .map(|&(alpha, sigma)| {
            let ci = front * (1.0 - alpha) * (c0 * alpha.powf(alpha)).powf(1.0 / (1.0 - alpha));
            ci * (delta_cap.powf(alpha) * sigma * rn).powf(1.0 / (1.0 - alpha))
        })
        .sum();
    Ok((nu, r))
}

/// Median, over blocks `J ∉ {k, k_prime}`, of the per-block mean of
/// `loss(estimates[k]) − loss(estimates[k_prime])`. `k == k_prime` is
/// allowed: the integrand is then identically zero and so is the result.
pub fn pairwise_median_loss<C: Contrast>(
    k: usize,
    k_prime: usize,
    estimates: &[C::Estimate],
    sample: &[C::Obs],
    partition: &BlockPartition,
    contrast: &C,
) -> Result<f64, MselectError> {
    pairwise_median_loss_over(k, k_prime, estimates, sample, partition.ranges(), contrast)
}

/// Same comparison over an explicit block list (the mixing selector passes
/// the odd-position blocks of its interleaved layout here).
pub fn pairwise_median_loss_over<C: Contrast>(
    k: usize,
    k_prime: usize,
    estimates: &[C::Estimate],
    sample: &[C::Obs],
    blocks: &[std::ops::Range<usize>],
    contrast: &C,
) -> Result<f64, MselectError> {
    let v = blocks.len();
    if v < 3 {
        return Err(MselectError::InsufficientBlocks(v));
    }
    let ek = &estimates[k];
    let ekp = &estimates[k_prime];
    let means: Vec<f64> = blocks
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k && *j != k_prime)
        .map(|(_, r)| {
            compensated_mean(
                sample[r.clone()]
                    .iter()
                    .map(|obs| contrast.loss(ek, obs) - contrast.loss(ekp, obs)),
            )
        })
        .collect();
    Ok(median(&means)?)
}

/// Full record of one selector run: per-block estimates, the pairwise
/// comparison matrix, the worst case per block, and the winner.
#[derive(Debug, Clone, Serialize)]
pub struct SelectorTrace<E> {
    pub v: usize,
    pub estimates: Vec<E>,
    /// `pairwise[k][k']` = median over remaining blocks of the mean loss gap.
    pub pairwise: Vec<Vec<f64>>,
    /// `worst_case[k]` = max over k' of `pairwise[k][k']`.
    pub worst_case: Vec<f64>,
    /// Argmin of `worst_case`, smallest index on ties. 0-based.
    pub k_star: usize,
    /// Blocks whose fit needed a degeneracy fallback.
    pub degenerate_blocks: Vec<usize>,
    /// Trailing observations dropped for block-length divisibility.
    pub truncated: usize,
    pub delta: Option<f64>,
}

impl<E> SelectorTrace<E> {
    pub fn selected(&self) -> &E {
        &self.estimates[self.k_star]
    }
}

pub fn argmin_first(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |acc, (i, &v)| {
                if v < acc.1 {
                    (i, v)
                } else {
                    acc
                }
            },
        )
        .0
}

/// Runs the selector with the block count implied by the confidence level:
/// `V = ⌈ln(1/δ²)⌉ ∨ 8`.
pub fn select_m_estimator<C: Contrast>(
    sample: &[C::Obs],
    contrast: &C,
    delta: f64,
) -> Result<SelectorTrace<C::Estimate>, MselectError> {
    let v = choose_block_count(delta, sample.len(), BlockCountMode::MSelect)?;
    let mut trace = select_m_estimator_with_v(sample, contrast, v)?;
    trace.delta = Some(delta);
    Ok(trace)
}

/// Runs the selector with an explicit block count (`v >= 3`).
pub fn select_m_estimator_with_v<C: Contrast>(
    sample: &[C::Obs],
    contrast: &C,
    v: usize,
) -> Result<SelectorTrace<C::Estimate>, MselectError> {
    if v < 3 {
        return Err(MselectError::InsufficientBlocks(v));
    }
    let partition = BlockPartition::new_regular(sample.len(), v)?;
    let mut estimates = Vec::with_capacity(v);
    let mut degenerate_blocks = Vec::new();
    for (k, r) in partition.ranges().iter().enumerate() {
        let fit = contrast
            .fit_block(&sample[r.clone()])
            .map_err(|e| MselectError::BlockFit {
                block: k,
                source: Box::new(e),
            })?;
        if fit.degenerate {
            degenerate_blocks.push(k);
        }
        estimates.push(fit.estimate);
    }
    let mut pairwise = Vec::with_capacity(v);
    for k in 0..v {
        let mut row = Vec::with_capacity(v);
        for k_prime in 0..v {
            row.push(pairwise_median_loss(
                k, k_prime, &estimates, sample, &partition, contrast,
            )?);
        }
        pairwise.push(row);
    }
    let worst_case: Vec<f64> = pairwise
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let k_star = argmin_first(&worst_case);
    Ok(SelectorTrace {
        v,
        estimates,
        pairwise,
        worst_case,
        k_star,
        degenerate_blocks,
        truncated: 0,
        delta: None,
    })
}

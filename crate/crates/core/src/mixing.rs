//! Dependent-data variants of the robust mean and the block selector.
//!
//! The sample is cut into `2V` contiguous equal-length blocks. The robust
//! mean takes the median over all `2V` block means. The selector fits
//! estimators on the odd-position blocks only (indices 0, 2, 4, … — every
//! other block starting from the first) and, for each pair, takes the median
//! over the remaining odd-position blocks; the interleaving gaps are what
//! make the construction robust to dependence.

use serde::Serialize;
use thiserror::Error;

use crate::blocks::{compensated_mean, median, BlocksError};
use crate::mselect::{
    argmin_first, pairwise_median_loss_over, Contrast, MselectError, SelectorTrace,
};

#[derive(Debug, Error)]
pub enum MixingError {
    #[error("2V = {two_v} must divide n = {n}; largest usable length is {suggested}")]
    BadLayout {
        n: usize,
        two_v: usize,
        suggested: usize,
    },
    #[error("V must be at least 1")]
    ZeroBlocks,
    #[error("sample length {got} does not match layout over n={expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("autoregression coefficient must satisfy |a| < 1, got {0}")]
    BadCoefficient(f64),
    #[error("delta={delta} too small: needs V={v} with 2V blocks of length >= 1 in n={n}")]
    DeltaTooSmall { delta: f64, v: usize, n: usize },
    #[error(transparent)]
    Blocks(#[from] BlocksError),
    #[error(transparent)]
    Mselect(#[from] MselectError),
}

/// The interleaved block layout: `n = 2Vq`, block `j` covers
/// `[j·q, (j+1)·q)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MixingLayout {
    pub n: usize,
    pub v: usize,
    /// Common block length `n / (2V)`.
    pub q: usize,
}

impl MixingLayout {
    pub fn new(n: usize, v: usize) -> Result<Self, MixingError> {
        if v == 0 {
            return Err(MixingError::ZeroBlocks);
        }
        let two_v = 2 * v;
        if n == 0 || n % two_v != 0 {
            return Err(MixingError::BadLayout {
                n,
                two_v,
                suggested: n - n % two_v,
            });
        }
        Ok(MixingLayout { n, v, q: n / two_v })
    }

    /// All `2V` contiguous blocks in order.
    pub fn blocks(&self) -> Vec<std::ops::Range<usize>> {
        (0..2 * self.v)
            .map(|j| j * self.q..(j + 1) * self.q)
            .collect()
    }

    /// The `V` odd-position blocks (0-based indices 0, 2, 4, …).
    pub fn odd_blocks(&self) -> Vec<std::ops::Range<usize>> {
        (0..self.v)
            .map(|k| 2 * k * self.q..(2 * k + 1) * self.q)
            .collect()
    }
}

/// Median over all `2V` block means of `f`.
pub fn robust_mean_mixing<T>(
    sample: &[T],
    mut f: impl FnMut(&T) -> f64,
    layout: &MixingLayout,
) -> Result<f64, MixingError> {
    if sample.len() != layout.n {
        return Err(MixingError::DimensionMismatch {
            expected: layout.n,
            got: sample.len(),
        });
    }
    let means: Vec<f64> = layout
        .blocks()
        .into_iter()
        .map(|r| compensated_mean(sample[r].iter().map(&mut f)))
        .collect();
    Ok(median(&means)?)
}

/// Runs the mixing selector with the block count implied by the confidence
/// level, `V = ⌈ln(2/δ²)⌉ ∨ 16`, truncating the sample to the largest
/// multiple of `2V`.
pub fn select_m_estimator_mixing<C: Contrast>(
    sample: &[C::Obs],
    contrast: &C,
    delta: f64,
) -> Result<SelectorTrace<C::Estimate>, MixingError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(MixingError::Blocks(BlocksError::BadDelta(delta)));
    }
    let v = (((2.0 / (delta * delta)).ln().ceil()) as usize).max(16);
    if sample.len() < 2 * v {
        return Err(MixingError::DeltaTooSmall {
            delta,
            v,
            n: sample.len(),
        });
    }
    let usable = sample.len() - sample.len() % (2 * v);
    let mut trace = select_m_estimator_mixing_with_v(&sample[..usable], contrast, v)?;
    trace.truncated = sample.len() - usable;
    trace.delta = Some(delta);
    Ok(trace)
}

/// Runs the mixing selector with an explicit block count; the sample length
/// must be an exact multiple of `2V`.
pub fn select_m_estimator_mixing_with_v<C: Contrast>(
    sample: &[C::Obs],
    contrast: &C,
    v: usize,
) -> Result<SelectorTrace<C::Estimate>, MixingError> {
    if v < 3 {
        return Err(MixingError::Mselect(MselectError::InsufficientBlocks(v)));
    }
    let layout = MixingLayout::new(sample.len(), v)?;
    let odd = layout.odd_blocks();
    let mut estimates = Vec::with_capacity(v);
    let mut degenerate_blocks = Vec::new();
    for (k, r) in odd.iter().enumerate() {
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
            row.push(pairwise_median_loss_over(
                k, k_prime, &estimates, sample, &odd, contrast,
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

/// Mixing coefficient record. `beta` and `phi` are geometric envelopes (not
/// exact coefficients); `beta[k] <= phi[k]` pointwise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingCoefficients {
    pub beta: Vec<f64>,
    pub phi: Vec<f64>,
    /// `2·Σ_{l≥0} (l+1)·β_l`, summed until the geometric tail is below 1e-12.
    pub c_beta_sq: f64,
    /// `Σ_{k=1}^{horizon} φ_k`.
    pub phi_sq: f64,
    /// Marks the sequences as conservative envelopes rather than exact values.
    pub envelope: bool,
}

/// Geometric mixing envelope of a stationary first-order autoregression with
/// coefficient `a`: `β_k ≤ |a|^k / (1 − |a|)`, with the same envelope used
/// for `φ_k`.
pub fn ar1_mixing_coefficients(a: f64, horizon: usize) -> Result<MixingCoefficients, MixingError> {
    if !(a.abs() < 1.0) {
        return Err(MixingError::BadCoefficient(a));
    }
    let x = a.abs();
    let c = 1.0 / (1.0 - x);
    let beta: Vec<f64> = (0..=horizon).map(|k| c * x.powi(k as i32)).collect();
    let phi = beta.clone();

    // 2·Σ (l+1)·c·x^l, truncated once the exact geometric tail
    // 2c·x^{L+1}·((L+2) − (L+1)x)/(1−x)² drops below 1e-12
    let mut c_beta_sq = 0.0;
    let mut l = 0usize;
    loop {
        c_beta_sq += 2.0 * (l as f64 + 1.0) * c * x.powi(l as i32);
        let tail = if x == 0.0 {
            0.0
        } else {
            2.0 * c * x.powi(l as i32 + 1) * ((l as f64 + 2.0) - (l as f64 + 1.0) * x)
                / ((1.0 - x) * (1.0 - x))
        };
        if tail < 1e-12 || l > 1_000_000 {
            break;
        }
        l += 1;
    }
    let phi_sq = phi.iter().skip(1).sum();
    Ok(MixingCoefficients {
        beta,
        phi,
        c_beta_sq,
        phi_sq,
        envelope: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{robust_mean, BlockPartition};
    use crate::dictionary::Dictionary;
    use crate::mselect::{select_m_estimator_with_v, L2Density};
    use std::sync::Arc;

    #[test]
    fn layout_examples() {
        let l = MixingLayout::new(8, 2).unwrap();
        assert_eq!(l.q, 2);
        assert_eq!(l.blocks().len(), 4);
        assert_eq!(l.odd_blocks(), vec![0..2, 4..6]);

        let l = MixingLayout::new(12, 3).unwrap();
        assert_eq!(l.blocks().len(), 6);
        assert_eq!(l.q, 2);

        match MixingLayout::new(10, 3) {
            Err(MixingError::BadLayout { suggested, .. }) => assert_eq!(suggested, 6),
            other => panic!("expected layout error, got {other:?}"),
        }
    }

    /// Block boundaries reproduce j·q..(j+1)·q exhaustively for n <= 1000.
    #[test]
    fn layout_boundaries_exhaustive() {
        for n in 2..=1000usize {
            for v in 1..=n / 2 {
                if n % (2 * v) != 0 {
                    continue;
                }
                let l = MixingLayout::new(n, v).unwrap();
                let q = n / (2 * v);
                let blocks = l.blocks();
                assert_eq!(blocks.len(), 2 * v);
                for (j, b) in blocks.iter().enumerate() {
                    assert_eq!(*b, j * q..(j + 1) * q);
                }
                assert_eq!(l.odd_blocks().len(), v);
            }
        }
    }

    #[test]
    fn mixing_mean_examples() {
        let l = MixingLayout::new(8, 2).unwrap();
        let c = vec![2.5; 8];
        assert_eq!(robust_mean_mixing(&c, |&x| x, &l).unwrap(), 2.5);

        // V = 1: midpoint of the two block means
        let l1 = MixingLayout::new(4, 1).unwrap();
        let s = vec![0.0, 0.0, 1.0, 3.0];
        assert_eq!(robust_mean_mixing(&s, |&x| x, &l1).unwrap(), 1.0);

        // equal to the plain robust mean over the same 2V contiguous blocks
        let s: Vec<f64> = (0..12).map(|i| (i * i) as f64).collect();
        let l = MixingLayout::new(12, 3).unwrap();
        let p = BlockPartition::new_regular(12, 6).unwrap();
        assert_eq!(
            robust_mean_mixing(&s, |&x| x, &l).unwrap(),
            robust_mean(&s, |&x| x, &p).unwrap().value
        );
    }

    #[test]
    fn mixing_mean_length_mismatch() {
        let l = MixingLayout::new(8, 2).unwrap();
        assert!(matches!(
            robust_mean_mixing(&[1.0], |&x| x, &l),
            Err(MixingError::DimensionMismatch { .. })
        ));
    }

    fn xorshift(mut state: u64) -> impl FnMut() -> f64 {
        move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    #[test]
    fn identical_odd_blocks_tie_break_to_first() {
        let dict = Arc::new(Dictionary::equal_cells(2).unwrap());
        let c = L2Density::new(dict).unwrap();
        let block = [0.1, 0.6, 0.3, 0.9];
        let sample: Vec<f64> = block.iter().copied().cycle().take(4 * 8).collect();
        let t = select_m_estimator_mixing_with_v(&sample, &c, 4).unwrap();
        assert_eq!(t.k_star, 0);
    }

    /// On i.i.d. data the mixing selector and the plain selector on the
    /// concatenated odd-block subsample are the same formula: same index,
    /// bit-identical comparison matrix.
    #[test]
    fn mixing_equals_plain_selector_on_odd_subsample() {
        let dict = Arc::new(Dictionary::equal_cells(4).unwrap());
        let c = L2Density::new(dict).unwrap();
        let mut next = xorshift(2024);
        for _ in 0..20 {
            let v = 8;
            let q = 6;
            let sample: Vec<f64> = (0..2 * v * q).map(|_| next()).collect();
            let mixing = select_m_estimator_mixing_with_v(&sample, &c, v).unwrap();

            let layout = MixingLayout::new(sample.len(), v).unwrap();
            let odd_data: Vec<f64> = layout
                .odd_blocks()
                .into_iter()
                .flat_map(|r| sample[r].to_vec())
                .collect();
            let plain = select_m_estimator_with_v(&odd_data, &c, v).unwrap();
            assert_eq!(mixing.k_star, plain.k_star);
            assert_eq!(mixing.pairwise, plain.pairwise);
        }
    }

    /// Brute-force argmin-max over the odd blocks with naive sums and an
    /// independent median, V = 16 on n = 256.
    #[test]
    fn mixing_selector_matches_brute_force() {
        let dict = Arc::new(Dictionary::equal_cells(4).unwrap());
        let c = L2Density::new(dict).unwrap();
        let mut next = xorshift(4096);
        let v = 16usize;
        let n = 256usize;
        let q = n / (2 * v);
        for _ in 0..10 {
            let sample: Vec<f64> = (0..n).map(|_| next()).collect();
            let trace = select_m_estimator_mixing_with_v(&sample, &c, v).unwrap();

            let odd: Vec<std::ops::Range<usize>> =
                (0..v).map(|k| 2 * k * q..(2 * k + 1) * q).collect();
            let ests: Vec<_> = odd
                .iter()
                .map(|r| c.fit_block(&sample[r.clone()]).unwrap().estimate)
                .collect();
            let mut best = (0usize, f64::INFINITY);
            for k in 0..v {
                let mut worst = f64::NEG_INFINITY;
                for kp in 0..v {
                    let mut vals = Vec::new();
                    for (j, r) in odd.iter().enumerate() {
                        if j == k || j == kp {
                            continue;
                        }
                        let mut s = 0.0;
                        for x in &sample[r.clone()] {
                            s += c.loss(&ests[k], x) - c.loss(&ests[kp], x);
                        }
                        vals.push(s / r.len() as f64);
                    }
                    vals.sort_by(f64::total_cmp);
                    let m = vals.len();
                    let med = if m % 2 == 1 {
                        vals[m / 2]
                    } else {
                        0.5 * (vals[m / 2 - 1] + vals[m / 2])
                    };
                    worst = worst.max(med);
                }
                if worst < best.1 {
                    best = (k, worst);
                }
            }
            assert_eq!(trace.k_star, best.0);
        }
    }

    #[test]
    fn ar1_coefficients_examples() {
        // a = 0: only the k = 0 envelope term survives
        let m = ar1_mixing_coefficients(0.0, 5).unwrap();
        assert_eq!(m.beta[0], 1.0);
        assert!(m.beta[1..].iter().all(|&b| b == 0.0));

        // envelopes are nonincreasing and β ≤ φ
        let m = ar1_mixing_coefficients(0.7, 50).unwrap();
        assert!(m.beta.windows(2).all(|w| w[1] <= w[0]));
        assert!(m.beta.iter().zip(&m.phi).all(|(b, p)| b <= p));

        // geometric series oracle: 2·Σ(l+1)·c·x^l = 2/(1−x)³
        let m = ar1_mixing_coefficients(0.5, 100).unwrap();
        assert!((m.c_beta_sq - 16.0).abs() < 1e-9, "{}", m.c_beta_sq);
        let m = ar1_mixing_coefficients(0.9, 100).unwrap();
        assert!((m.c_beta_sq - 2.0 / 0.1f64.powi(3)).abs() < 1e-6);

        assert!(ar1_mixing_coefficients(1.0, 5).is_err());
    }

    #[test]
    fn selector_truncates_to_block_multiple() {
        let dict = Arc::new(Dictionary::equal_cells(2).unwrap());
        let c = L2Density::new(dict).unwrap();
        let mut next = xorshift(55);
        // V = 16 at delta = 0.05; 1000 = 31*32 + 8 leaves 8 dropped
        let sample: Vec<f64> = (0..1000).map(|_| next()).collect();
        let t = select_m_estimator_mixing(&sample, &c, 0.05).unwrap();
        assert_eq!(t.v, 16);
        assert_eq!(t.truncated, 1000 % 32);
    }
}

//! Regular partitions, the median convention, and the robust empirical
//! process.
//!
//! A regular partition splits `{0,…,n-1}` into `V` contiguous blocks whose
//! sizes differ from `n/V` by at most one. The robust mean of a function `f`
//! over a sample is the median of the per-block means of `f`. Observations
//! are opaque: callers hand in any slice together with a map `obs → f64`, so
//! the same engine serves scalars, regression pairs, and basis evaluations.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::Constants;

#[derive(Debug, Error, PartialEq)]
pub enum BlocksError {
    #[error("invalid partition: need 1 <= V <= n/2, got V={v}, n={n}")]
    InvalidPartition { n: usize, v: usize },
    #[error("median of an empty sequence is undefined")]
    EmptyInput,
    #[error("sample length {got} does not match partition over n={expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("delta={delta} too small for n={n}: requires V={v} > n/2")]
    DeltaTooSmall { delta: f64, n: usize, v: usize },
    #[error("delta must lie in (0,1), got {0}")]
    BadDelta(f64),
    #[error("negative variance {0} is out of domain")]
    NegativeVariance(f64),
}

/// Ordered contiguous index ranges covering `{0,…,n-1}`, each of size
/// `⌈n/V⌉` or `⌊n/V⌋`, with the larger blocks first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    n: usize,
    ranges: Vec<Range<usize>>,
}

impl BlockPartition {
    /// Builds the regular partition of `{0,…,n-1}` into `v` blocks. The first
    /// `n mod v` blocks get the extra element.
    pub fn new_regular(n: usize, v: usize) -> Result<Self, BlocksError> {
        if v < 1 || 2 * v > n {
            return Err(BlocksError::InvalidPartition { n, v });
        }
        let base = n / v;
        let extra = n % v;
        let mut ranges = Vec::with_capacity(v);
        let mut start = 0;
        for k in 0..v {
            let size = if k < extra { base + 1 } else { base };
            ranges.push(start..start + size);
            start += size;
        }
        debug_assert_eq!(start, n);
        Ok(BlockPartition { n, ranges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn v(&self) -> usize {
        self.ranges.len()
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.ranges.iter().map(|r| r.len()).collect()
    }

    /// Per-block means of `f` over `sample`, in block order.
    pub fn block_means<T>(
        &self,
        sample: &[T],
        mut f: impl FnMut(&T) -> f64,
    ) -> Result<Vec<f64>, BlocksError> {
        if sample.len() != self.n {
            return Err(BlocksError::DimensionMismatch {
                expected: self.n,
                got: sample.len(),
            });
        }
        Ok(self
            .ranges
            .iter()
            .map(|r| compensated_mean(sample[r.clone()].iter().map(&mut f)))
            .collect())
    }
}

/// Kahan-compensated mean in iteration order. Keeps the one-block case equal
/// to the arithmetic mean to machine tolerance.
pub(crate) fn compensated_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut count = 0usize;
    for x in values {
        let y = x - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        count += 1;
    }
    sum / count as f64
}

/// Median with the midpoint convention: the central order statistic for odd
/// length, the midpoint of the two central order statistics for even length.
/// The result `b` satisfies both counting conditions `#{a_i <= b} >= N/2` and
/// `#{a_i >= b} >= N/2`.
pub fn median(values: &[f64]) -> Result<f64, BlocksError> {
    if values.is_empty() {
        return Err(BlocksError::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

/// Result of one robust mean evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustMeanResult {
    /// Median of the block means.
    pub value: f64,
    /// Per-block means of `f`, in block order.
    pub block_means: Vec<f64>,
    /// Block count.
    pub v: usize,
    /// Confidence level the block count was chosen for, when one was.
    pub delta: Option<f64>,
}

/// Robust empirical mean of `f` over `sample`: the median of the per-block
/// means of `f` under `partition`.
pub fn robust_mean<T>(
    sample: &[T],
    f: impl FnMut(&T) -> f64,
    partition: &BlockPartition,
) -> Result<RobustMeanResult, BlocksError> {
    let block_means = partition.block_means(sample, f)?;
    let value = median(&block_means)?;
    Ok(RobustMeanResult {
        value,
        block_means,
        v: partition.v(),
        delta: None,
    })
}

/// Chooses the block count for a target confidence level, then takes the
/// robust mean with the induced regular partition.
pub fn robust_mean_for_confidence<T>(
    sample: &[T],
    f: impl FnMut(&T) -> f64,
    delta: f64,
    mode: BlockCountMode,
) -> Result<RobustMeanResult, BlocksError> {
    let v = choose_block_count(delta, sample.len(), mode)?;
    let partition = BlockPartition::new_regular(sample.len(), v)?;
    let mut result = robust_mean(sample, f, &partition)?;
    result.delta = Some(delta);
    Ok(result)
}

/// Block-count rule to apply: `Mean` for plain mean estimation
/// (`V = ⌈ln(1/δ)⌉ ∨ 1`), `MSelect` for the M-estimator selector
/// (`V = ⌈ln(1/δ²)⌉ ∨ 8`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockCountMode {
    Mean,
    MSelect,
}

/// Number of blocks required for confidence `delta`, floored so that
/// small-confidence calls degrade to the sample mean rather than failing.
/// Errors when the required count exceeds `n/2`.
pub fn choose_block_count(
    delta: f64,
    n: usize,
    mode: BlockCountMode,
) -> Result<usize, BlocksError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(BlocksError::BadDelta(delta));
    }
    let v = match mode {
        BlockCountMode::Mean => ((1.0 / delta).ln().ceil() as usize).max(1),
        BlockCountMode::MSelect => ((1.0 / (delta * delta)).ln().ceil() as usize).max(8),
    };
    if 2 * v > n {
        return Err(BlocksError::DeltaTooSmall { delta, n, v });
    }
    Ok(v)
}

/// Data-driven upper bound for `Var f`: twice the robust mean of `f²`.
/// Under the variance condition this dominates the true variance with
/// probability at least `1 - δ` (a guarantee checked by the Monte Carlo
/// harness, not by this call).
pub fn variance_upper_bound<T>(
    sample: &[T],
    mut f: impl FnMut(&T) -> f64,
    partition: &BlockPartition,
) -> Result<f64, BlocksError> {
    let r = robust_mean(sample, |x| f(x).powi(2), partition)?;
    Ok(2.0 * r.value)
}

/// The variance condition on a function with population second-moment data:
/// `L1·√(Var f²)/(P f²)·√(V/n) ≤ 1/2`, vacuously true when `P f² = 0`.
pub fn check_variance_condition(
    var_f2: f64,
    mean_f2: f64,
    v: usize,
    n: usize,
) -> Result<bool, BlocksError> {
    if var_f2 < 0.0 {
        return Err(BlocksError::NegativeVariance(var_f2));
    }
    if mean_f2 == 0.0 {
        return Ok(true);
    }
    let c = Constants::standard();
    let lhs = c.l1 * var_f2.sqrt() / mean_f2 * (v as f64 / n as f64).sqrt();
    Ok(lhs <= 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_divisible() {
        let p = BlockPartition::new_regular(8, 4).unwrap();
        assert_eq!(p.block_sizes(), vec![2, 2, 2, 2]);
    }

    /// Enumeration oracle: all size vectors with |size - n/V| <= 1 summing to
    /// n, under the larger-blocks-first convention, admit exactly one
    /// nonincreasing representative; the constructor must produce it.
    fn oracle_sizes(n: usize, v: usize) -> Vec<usize> {
        let target = n as f64 / v as f64;
        let lo = target.floor() as usize;
        let hi = target.ceil() as usize;
        // count of larger blocks k solves k*hi + (v-k)*lo = n
        for k in 0..=v {
            if k * hi + (v - k) * lo == n {
                let sizes: Vec<usize> = (0..v).map(|i| if i < k { hi } else { lo }).collect();
                if sizes.iter().all(|&s| (s as f64 - target).abs() <= 1.0) {
                    return sizes;
                }
            }
        }
        panic!("no regular size vector for ({n},{v})");
    }

    #[test]
    fn partition_matches_enumeration_oracle() {
        assert_eq!(
            BlockPartition::new_regular(10, 3).unwrap().block_sizes(),
            oracle_sizes(10, 3)
        );
        assert_eq!(oracle_sizes(10, 3), vec![4, 3, 3]);
        assert_eq!(
            BlockPartition::new_regular(7, 3).unwrap().block_sizes(),
            oracle_sizes(7, 3)
        );
        assert_eq!(oracle_sizes(7, 3), vec![3, 2, 2]);
    }

    #[test]
    fn partition_rejects_too_many_blocks() {
        assert_eq!(
            BlockPartition::new_regular(10, 6),
            Err(BlocksError::InvalidPartition { n: 10, v: 6 })
        );
        assert!(BlockPartition::new_regular(10, 0).is_err());
    }

    /// Regularity holds exhaustively for n <= 200, V <= n/2.
    #[test]
    fn partition_regularity_exhaustive() {
        for n in 2..=200 {
            for v in 1..=(n / 2) {
                let p = BlockPartition::new_regular(n, v).unwrap();
                assert_eq!(p.v(), v);
                let sizes = p.block_sizes();
                assert_eq!(sizes.iter().sum::<usize>(), n);
                let mut next = 0;
                for (r, s) in p.ranges().iter().zip(&sizes) {
                    assert_eq!(r.start, next);
                    next = r.end;
                    assert!((*s as f64 - n as f64 / v as f64).abs() <= 1.0);
                    assert!(*s as f64 >= n as f64 / (2.0 * v as f64));
                }
                assert_eq!(next, n);
            }
        }
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
        assert_eq!(median(&[5.0]).unwrap(), 5.0);
        assert_eq!(median(&[]), Err(BlocksError::EmptyInput));
    }

    #[test]
    fn robust_mean_examples() {
        // constant sample
        let sample = vec![3.5; 12];
        let p = BlockPartition::new_regular(12, 4).unwrap();
        assert_eq!(robust_mean(&sample, |&x| x, &p).unwrap().value, 3.5);

        // V = 1 is the ordinary mean
        let sample = vec![1.0, 2.0, 4.0, 9.0];
        let p = BlockPartition::new_regular(4, 1).unwrap();
        assert!((robust_mean(&sample, |&x| x, &p).unwrap().value - 4.0).abs() < 1e-15);

        // one contaminated block is voted down by the median
        let sample = vec![0.0, 0.0, 0.0, 0.0, 100.0, 0.0];
        let p = BlockPartition::new_regular(6, 3).unwrap();
        let r = robust_mean(&sample, |&x| x, &p).unwrap();
        assert_eq!(r.block_means, vec![0.0, 0.0, 50.0]);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn robust_mean_dimension_error() {
        let p = BlockPartition::new_regular(6, 3).unwrap();
        assert!(matches!(
            robust_mean(&[1.0, 2.0], |&x| x, &p),
            Err(BlocksError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn block_count_examples() {
        let d = (-4.0f64).exp();
        assert_eq!(choose_block_count(d, 100, BlockCountMode::Mean).unwrap(), 4);
        assert_eq!(
            choose_block_count(0.01, 1000, BlockCountMode::MSelect).unwrap(),
            10
        );
        assert_eq!(
            choose_block_count(0.5, 100, BlockCountMode::MSelect).unwrap(),
            8
        );
        assert!(matches!(
            choose_block_count(1e-12, 20, BlockCountMode::Mean),
            Err(BlocksError::DeltaTooSmall { .. })
        ));
        assert!(choose_block_count(0.0, 100, BlockCountMode::Mean).is_err());
    }

    #[test]
    fn variance_bound_examples() {
        let p = BlockPartition::new_regular(6, 3).unwrap();
        let c = vec![2.0; 6];
        assert!((variance_upper_bound(&c, |&x| x, &p).unwrap() - 8.0).abs() < 1e-15);

        let p1 = BlockPartition::new_regular(2, 1).unwrap();
        let s = vec![1.0, -1.0];
        assert_eq!(variance_upper_bound(&s, |&x| x, &p1).unwrap(), 2.0);
    }

    #[test]
    fn variance_condition_examples() {
        assert!(check_variance_condition(3.0, 0.0, 5, 100).unwrap());
        assert!(check_variance_condition(0.0, 1.0, 5, 100).unwrap());
        // L1 ≈ 8.0771 > 1/2 when V = n
        assert!(!check_variance_condition(1.0, 1.0, 100, 100).unwrap());
        assert!(check_variance_condition(-1.0, 1.0, 5, 100).is_err());
    }

    #[test]
    fn variance_condition_boundary_equality_is_true() {
        // L1·√1·√(n/n)/(2·L1) is exactly 1/2 in IEEE arithmetic.
        let c = Constants::standard();
        assert!(check_variance_condition(1.0, 2.0 * c.l1, 100, 100).unwrap());
    }
}

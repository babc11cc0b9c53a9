//! Contrast instantiations for the block selector.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{BlockFit, Contrast, MarginParams, MselectError};
use crate::blocks::compensated_mean;
use crate::dictionary::Dictionary;

type ExcessHook<E> = Arc<dyn Fn(&E) -> f64 + Send + Sync>;

/// L2 density estimation on an orthonormal dictionary: the block fit is the
/// projection estimator with empirical coefficients, the loss is
/// `γ(t)(x) = ‖t‖² − 2·t(x)`.
pub struct L2Density {
    dict: Arc<Dictionary>,
    excess: Option<ExcessHook<ProjectionEstimate>>,
}

/// Coefficients of a span element in the dictionary order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionEstimate {
    pub coeffs: Vec<f64>,
    pub norm_sq: f64,
}

impl L2Density {
    pub fn new(dict: Arc<Dictionary>) -> Result<Self, MselectError> {
        if !dict.is_orthonormal() {
            return Err(MselectError::NotOrthonormal);
        }
        Ok(L2Density { dict, excess: None })
    }

    pub fn with_excess_loss_ref(
        mut self,
        hook: impl Fn(&ProjectionEstimate) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.excess = Some(Arc::new(hook));
        self
    }

    pub fn dict(&self) -> &Dictionary {
        &self.dict
    }

    pub fn eval(&self, est: &ProjectionEstimate, x: f64) -> f64 {
        self.dict.eval_combination(&est.coeffs, x)
    }

    /// Margin parameters for this contrast: `σ0 = 0`, one term with
    /// `α = 1/2` and `σ1² = PΨ − ‖s_o‖²` (population quantities supplied by
    /// the caller).
    pub fn margin_params(p_psi: f64, s_o_norm_sq: f64) -> Result<MarginParams, MselectError> {
        MarginParams::new(0.0, vec![(0.5, (p_psi - s_o_norm_sq).max(0.0).sqrt())], 0.0)
    }
}

impl Contrast for L2Density {
    type Obs = f64;
    type Estimate = ProjectionEstimate;

    fn fit_block(&self, block: &[f64]) -> Result<BlockFit<ProjectionEstimate>, MselectError> {
        if block.is_empty() {
            return Err(MselectError::EmptyBlock);
        }
        let coeffs: Vec<f64> = (0..self.dict.len())
            .map(|l| compensated_mean(block.iter().map(|&x| self.dict.eval(l, x))))
            .collect();
        let norm_sq = coeffs.iter().map(|c| c * c).sum();
        Ok(BlockFit::clean(ProjectionEstimate { coeffs, norm_sq }))
    }

    fn loss(&self, estimate: &ProjectionEstimate, obs: &f64) -> f64 {
        estimate.norm_sq - 2.0 * self.dict.eval_combination(&estimate.coeffs, *obs)
    }

    fn excess_loss_ref(&self, estimate: &ProjectionEstimate) -> Option<f64> {
        self.excess.as_ref().map(|h| h(estimate))
    }
}

/// Histogram density estimation under log loss. The raw cell frequencies are
/// smoothed towards the uniform density, `ŝ = (s̃ + x·1)/(1 + x)`, so the
/// estimate is bounded below by `x/(1+x)` and the loss `−ln ŝ` stays finite
/// on \[0,1\].
pub struct KullbackHistogram {
    breakpoints: Vec<f64>,
    cell_measures: Vec<f64>,
    smoothing: f64,
    excess: Option<ExcessHook<CellDensity>>,
}

/// Piecewise-constant density given by its per-cell values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellDensity {
    pub values: Vec<f64>,
}

impl KullbackHistogram {
    pub fn new(breakpoints: &[f64], smoothing_x: f64) -> Result<Self, MselectError> {
        if !(smoothing_x > 0.0) {
            return Err(MselectError::BadSmoothing(smoothing_x));
        }
        if breakpoints.len() < 2
            || breakpoints.windows(2).any(|w| w[1] <= w[0])
            || breakpoints[0] != 0.0
            || *breakpoints.last().unwrap() != 1.0
        {
            return Err(MselectError::BadBreakpoints);
        }
        let cell_measures = breakpoints.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(KullbackHistogram {
            breakpoints: breakpoints.to_vec(),
            cell_measures,
            smoothing: smoothing_x,
            excess: None,
        })
    }

    pub fn with_excess_loss_ref(
        mut self,
        hook: impl Fn(&CellDensity) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.excess = Some(Arc::new(hook));
        self
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn cell_measures(&self) -> &[f64] {
        &self.cell_measures
    }

    fn cell_of(&self, x: f64) -> Option<usize> {
        if x < self.breakpoints[0] || x > *self.breakpoints.last().unwrap() {
            return None;
        }
        // partition_point gives the first breakpoint > x
        let idx = self.breakpoints.partition_point(|&b| b <= x);
        Some(idx.saturating_sub(1).min(self.cell_measures.len() - 1))
    }

    pub fn eval(&self, est: &CellDensity, x: f64) -> f64 {
        match self.cell_of(x) {
            Some(c) => est.values[c],
            None => 0.0,
        }
    }

    /// Lebesgue integral of the estimate over \[0,1\]; equals 1 by the
    /// smoothing identity.
    pub fn integral(&self, est: &CellDensity) -> f64 {
        est.values
            .iter()
            .zip(&self.cell_measures)
            .map(|(v, m)| v * m)
            .sum()
    }

    /// Margin parameters for this contrast: `σ0 = 0`, one term with
    /// `α = 1/2` and `σ1² = 2 + 3·ln(1 + 1/x)`.
    pub fn margin_params(&self) -> MarginParams {
        let s1 = (2.0 + 3.0 * (1.0 + 1.0 / self.smoothing).ln()).sqrt();
        MarginParams::new(0.0, vec![(0.5, s1)], 0.0).expect("valid by construction")
    }
}

impl Contrast for KullbackHistogram {
    type Obs = f64;
    type Estimate = CellDensity;

    fn fit_block(&self, block: &[f64]) -> Result<BlockFit<CellDensity>, MselectError> {
        if block.is_empty() {
            return Err(MselectError::EmptyBlock);
        }
        let mut counts = vec![0usize; self.cell_measures.len()];
        for &x in block {
            if let Some(c) = self.cell_of(x) {
                counts[c] += 1;
            }
        }
        let n = block.len() as f64;
        let x = self.smoothing;
        let values = counts
            .iter()
            .zip(&self.cell_measures)
            .map(|(&cnt, &mu)| (cnt as f64 / n / mu + x) / (1.0 + x))
            .collect();
        Ok(BlockFit::clean(CellDensity { values }))
    }

    fn loss(&self, estimate: &CellDensity, obs: &f64) -> f64 {
        -self.eval(estimate, *obs).ln()
    }

    fn excess_loss_ref(&self, estimate: &CellDensity) -> Option<f64> {
        self.excess.as_ref().map(|h| h(estimate))
    }
}

/// Least-squares regression of y on a feature basis. The block fit is the
/// minimal-norm least-squares solution (pseudo-inverse when the normal
/// system is singular), the loss is the squared residual.
pub struct L2Regression {
    basis: Arc<Dictionary>,
    excess: Option<ExcessHook<RegressionEstimate>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionEstimate {
    pub coeffs: Vec<f64>,
    pub rank_deficient: bool,
}

impl L2Regression {
    pub fn new(basis: Arc<Dictionary>) -> Self {
        L2Regression {
            basis,
            excess: None,
        }
    }

    pub fn with_excess_loss_ref(
        mut self,
        hook: impl Fn(&RegressionEstimate) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.excess = Some(Arc::new(hook));
        self
    }

    pub fn basis(&self) -> &Dictionary {
        &self.basis
    }

    pub fn predict(&self, est: &RegressionEstimate, x: f64) -> f64 {
        self.basis.eval_combination(&est.coeffs, x)
    }

    /// Margin parameters for this contrast: `σ0² = 2·M_Ψ`, one term with
    /// `α = 1/2` and `σ1² = 8·D` (moment bounds supplied by the caller).
    pub fn margin_params(d: f64, m_psi: f64) -> Result<MarginParams, MselectError> {
        MarginParams::new((2.0 * m_psi).sqrt(), vec![(0.5, (8.0 * d).sqrt())], 0.0)
    }
}

const SVD_EPS: f64 = 1e-10;

impl Contrast for L2Regression {
    type Obs = (f64, f64);
    type Estimate = RegressionEstimate;

    fn fit_block(
        &self,
        block: &[(f64, f64)],
    ) -> Result<BlockFit<RegressionEstimate>, MselectError> {
        if block.is_empty() {
            return Err(MselectError::EmptyBlock);
        }
        let p = self.basis.len();
        let rows = block.len();
        let design = DMatrix::from_fn(rows, p, |i, j| self.basis.eval(j, block[i].0));
        let y = DVector::from_iterator(rows, block.iter().map(|&(_, y)| y));
        let svd = design.svd(true, true);
        let max_sv = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > SVD_EPS * max_sv.max(1.0))
            .count();
        let sol = svd
            .solve(&y, SVD_EPS)
            .map_err(|_| MselectError::EmptyBlock)?;
        Ok(BlockFit {
            estimate: RegressionEstimate {
                coeffs: sol.iter().copied().collect(),
                rank_deficient: rank < p,
            },
            degenerate: rank < p,
        })
    }

    fn loss(&self, estimate: &RegressionEstimate, obs: &(f64, f64)) -> f64 {
        let (x, y) = *obs;
        let r = y - self.basis.eval_combination(&estimate.coeffs, x);
        r * r
    }

    fn excess_loss_ref(&self, estimate: &RegressionEstimate) -> Option<f64> {
        self.excess.as_ref().map(|h| h(estimate))
    }
}

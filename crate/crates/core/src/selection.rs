//! Selection among an arbitrary collection of density estimators.
//!
//! Each candidate carries a menu of models; a model is a label subset of an
//! orthonormal dictionary together with a penalty. The classical criterion
//! scores a candidate by the best penalized contrast of its projections
//! against the plain empirical process; the robust criterion replaces the
//! empirical process with per-label median-of-means, each label getting its
//! own regular partition sized by its prior weight.
//!
//! Candidates are represented by what the criteria actually consume: the
//! squared norm of the estimate and, per model, the projection coefficients
//! onto the model span (we always use the orthogonal projection, so
//! `‖s̆ − ŝ‖² = ‖ŝ‖² − ‖s̆‖²`).

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::{compensated_mean, robust_mean, BlockPartition, BlocksError};
use crate::constants::Constants;
use crate::dictionary::Dictionary;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("candidate {0} has an empty model menu")]
    EmptyMenu(String),
    #[error("no candidates supplied")]
    NoCandidates,
    #[error("model {id}: penalty must be nonnegative, got {pen}")]
    NegativePenalty { id: String, pen: f64 },
    #[error("model {id}: projections have length {got}, label set has {expected}")]
    ProjectionLength {
        id: String,
        expected: usize,
        got: usize,
    },
    #[error("delta={delta} too small: label {lambda} needs V={v} > n/2 = {half_n}")]
    DeltaTooSmall {
        delta: f64,
        lambda: usize,
        v: usize,
        half_n: usize,
    },
    #[error("sup-norm of the model function is unavailable or unbounded; use the robust penalty")]
    UnsupportedModel,
    #[error("epsilon must lie in (0, 1/4), got {0}")]
    BadEpsilon(f64),
    #[error("nu must lie in (0, 1], got {0}")]
    BadNu(f64),
    #[error("priors must be positive and have one entry per label")]
    BadPriors,
    #[error(transparent)]
    Blocks(#[from] BlocksError),
}

/// One model: a label subset of the dictionary and its penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: String,
    /// Indices into the dictionary, in storage order.
    pub lambda_set: Vec<usize>,
    pub pen: f64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), SelectionError> {
        if self.pen < 0.0 {
            return Err(SelectionError::NegativePenalty {
                id: self.id.clone(),
                pen: self.pen,
            });
        }
        Ok(())
    }
}

/// A model together with the candidate's projection coefficients onto it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateModel {
    pub model: ModelSpec,
    /// β coefficients aligned with `model.lambda_set`.
    pub projections: Vec<f64>,
}

/// One candidate estimator, reduced to the quantities the criteria use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEstimator {
    pub id: String,
    /// ‖ŝ_θ‖² of the full estimate.
    pub norm_sq: f64,
    pub menu: Vec<CandidateModel>,
}

impl CandidateEstimator {
    fn validate(&self) -> Result<(), SelectionError> {
        if self.menu.is_empty() {
            return Err(SelectionError::EmptyMenu(self.id.clone()));
        }
        for cm in &self.menu {
            cm.model.validate()?;
            if cm.projections.len() != cm.model.lambda_set.len() {
                return Err(SelectionError::ProjectionLength {
                    id: cm.model.id.clone(),
                    expected: cm.model.lambda_set.len(),
                    got: cm.projections.len(),
                });
            }
        }
        Ok(())
    }
}

/// Per-label robust moments over per-label regular partitions, shared by all
/// candidates for one sample.
#[derive(Debug, Clone, Serialize)]
pub struct RobustMoments {
    /// Blocks used for each label.
    pub v_lambda: Vec<usize>,
    /// P̄ ψ_λ per label.
    pub first: Vec<f64>,
    /// P̄ ψ_λ² per label.
    pub second: Vec<f64>,
    pub n: usize,
    pub delta: f64,
}

/// Uniform prior over the dictionary labels.
pub fn uniform_priors(m: usize) -> Vec<f64> {
    vec![1.0 / m as f64; m]
}

/// Builds per-label robust moments with `V_λ = ⌈ln(2/(π_λ·δ))⌉`, erroring
/// when any label would need more than `n/2` blocks. `v_override` forces one
/// shared block count instead (used by the collapse-to-classical checks).
pub fn robust_moments(
    sample: &[f64],
    dict: &Dictionary,
    delta: f64,
    priors: &[f64],
    v_override: Option<usize>,
) -> Result<RobustMoments, SelectionError> {
    let m = dict.len();
    let n = sample.len();
    if priors.len() != m || priors.iter().any(|&p| !(p > 0.0)) {
        return Err(SelectionError::BadPriors);
    }
    let mut v_lambda = Vec::with_capacity(m);
    let mut first = Vec::with_capacity(m);
    let mut second = Vec::with_capacity(m);
    for lambda in 0..m {
        let v = match v_override {
            Some(v) => v,
            None => ((2.0 / (priors[lambda] * delta)).ln().ceil() as usize).max(1),
        };
        if 2 * v > n {
            return Err(SelectionError::DeltaTooSmall {
                delta,
                lambda,
                v,
                half_n: n / 2,
            });
        }
        let partition = BlockPartition::new_regular(n, v)?;
        first.push(robust_mean(sample, |&x| dict.eval(lambda, x), &partition)?.value);
        second.push(robust_mean(sample, |&x| dict.eval(lambda, x).powi(2), &partition)?.value);
        v_lambda.push(v);
    }
    Ok(RobustMoments {
        v_lambda,
        first,
        second,
        n,
        delta,
    })
}

fn model_value_classical(
    cm: &CandidateModel,
    candidate_norm_sq: f64,
    sample: &[f64],
    dict: &Dictionary,
    alpha: f64,
) -> f64 {
    let brev_norm_sq: f64 = cm.projections.iter().map(|b| b * b).sum();
    let emp = compensated_mean(sample.iter().map(|&x| {
        cm.model
            .lambda_set
            .iter()
            .zip(&cm.projections)
            .map(|(&l, b)| b * dict.eval(l, x))
            .sum::<f64>()
    }));
    let dist_sq = (candidate_norm_sq - brev_norm_sq).max(0.0);
    brev_norm_sq - 2.0 * emp + alpha * dist_sq + cm.model.pen
}

fn model_value_robust(
    cm: &CandidateModel,
    candidate_norm_sq: f64,
    moments: &RobustMoments,
    alpha: f64,
) -> f64 {
    let brev_norm_sq: f64 = cm.projections.iter().map(|b| b * b).sum();
    let robust: f64 = cm
        .model
        .lambda_set
        .iter()
        .zip(&cm.projections)
        .map(|(&l, b)| b * moments.first[l])
        .sum();
    let dist_sq = (candidate_norm_sq - brev_norm_sq).max(0.0);
    brev_norm_sq - 2.0 * robust + alpha * dist_sq + cm.model.pen
}

/// Classical criterion: min over the menu of
/// `‖s̆‖² − 2·P_n s̆ + α·‖s̆ − ŝ‖² + pen(m)`.
pub fn classical_criterion(
    candidate: &CandidateEstimator,
    sample: &[f64],
    dict: &Dictionary,
    alpha: f64,
) -> Result<CriterionBreakdown, SelectionError> {
    candidate.validate()?;
    let values: Vec<f64> = candidate
        .menu
        .iter()
        .map(|cm| model_value_classical(cm, candidate.norm_sq, sample, dict, alpha))
        .collect();
    Ok(CriterionBreakdown::from_values(values))
}

/// Robust criterion: min over the menu of
/// `‖s̆‖² − 2·Σ_λ β_λ·P̄_λ ψ_λ + α·‖s̆ − ŝ‖² + pen(m)`.
pub fn robust_criterion(
    candidate: &CandidateEstimator,
    moments: &RobustMoments,
    alpha: f64,
) -> Result<CriterionBreakdown, SelectionError> {
    candidate.validate()?;
    let values: Vec<f64> = candidate
        .menu
        .iter()
        .map(|cm| model_value_robust(cm, candidate.norm_sq, moments, alpha))
        .collect();
    Ok(CriterionBreakdown::from_values(values))
}

/// Criterion of one candidate: the minimum over its menu plus the per-model
/// values behind it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionBreakdown {
    pub value: f64,
    pub chosen_model: usize,
    pub model_values: Vec<f64>,
}

impl CriterionBreakdown {
    fn from_values(model_values: Vec<f64>) -> Self {
        let (chosen_model, value) =
            model_values
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
                );
        CriterionBreakdown {
            value,
            chosen_model,
            model_values,
        }
    }
}

/// Penalty for the classical criterion:
/// `(5/2 + 2·L0·ν)·PΨ_m/n + (2·L0·‖s‖/ν)·r_m + (2·L0/ν³)·r_m²` with
/// `r_m = √(‖Ψ_m‖_∞)·ln(2/(π_m·δ))/n`. `p_psi_m` may be analytic or the
/// robust plug-in from [`robust_psi_m`]; `psi_sup` is the sup-norm of the
/// model function (error when unavailable).
pub fn classical_penalty(
    p_psi_m: f64,
    psi_sup: Option<f64>,
    s_norm_bound: f64,
    n: usize,
    delta: f64,
    nu: f64,
    pi_m: f64,
) -> Result<f64, SelectionError> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(SelectionError::BadNu(nu));
    }
    let sup = match psi_sup {
        Some(s) if s.is_finite() => s,
        _ => return Err(SelectionError::UnsupportedModel),
    };
    let c = Constants::standard();
    let n = n as f64;
    let r_m = sup.sqrt() * (2.0 / (pi_m * delta)).ln() / n;
    Ok((2.5 + 2.0 * c.l0 * nu) * p_psi_m / n
        + (2.0 * c.l0 * s_norm_bound / nu) * r_m
        + (2.0 * c.l0 / nu.powi(3)) * r_m * r_m)
}

/// Robust plug-in `P̄_B Ψ_m` for a model over one regular partition.
pub fn robust_psi_m(
    sample: &[f64],
    dict: &Dictionary,
    lambda_set: &[usize],
    v: usize,
) -> Result<f64, SelectionError> {
    let partition = BlockPartition::new_regular(sample.len(), v)?;
    Ok(robust_mean(sample, |&x| dict.psi_at(lambda_set, x), &partition)?.value)
}

/// Data-driven penalty for the robust criterion:
/// `(2·L4/(ε·n))·Σ_{λ∈Λ_m} (P̄_λ ψ_λ²)·V_λ`, with `0 < ε < 1/4`.
pub fn robust_penalty(
    lambda_set: &[usize],
    moments: &RobustMoments,
    epsilon: f64,
) -> Result<f64, SelectionError> {
    if !(epsilon > 0.0 && epsilon < 0.25) {
        return Err(SelectionError::BadEpsilon(epsilon));
    }
    let c = Constants::standard();
    let sum: f64 = lambda_set
        .iter()
        .map(|&l| moments.second[l] * moments.v_lambda[l] as f64)
        .sum();
    Ok(2.0 * c.l4 / (epsilon * moments.n as f64) * sum)
}

/// Which empirical process the criterion runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    Classical,
    Robust,
}

/// Shared configuration for a selection run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub alpha: f64,
    pub delta: f64,
    /// Robust-penalty scale parameter, in (0, 1/4).
    pub epsilon: f64,
    /// Per-label priors; uniform when absent.
    pub priors: Option<Vec<f64>>,
    /// Forces one shared block count per label (diagnostics/tests).
    pub v_override: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            alpha: 1.0,
            delta: 0.05,
            epsilon: 0.2,
            priors: None,
            v_override: None,
        }
    }
}

/// Outcome of a selection run with full per-candidate diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionResult {
    pub chosen: usize,
    pub chosen_id: String,
    pub alpha: f64,
    pub mode: SelectionMode,
    pub per_candidate: Vec<CandidateDiagnostics>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateDiagnostics {
    pub id: String,
    pub criterion: f64,
    pub chosen_model: usize,
    pub model_values: Vec<f64>,
}

/// Evaluates the chosen criterion for every candidate and returns the argmin,
/// ties broken by first declaration order.
pub fn select(
    candidates: &[CandidateEstimator],
    sample: &[f64],
    dict: Arc<Dictionary>,
    mode: SelectionMode,
    config: &SelectionConfig,
) -> Result<SelectionResult, SelectionError> {
    if candidates.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    let moments = match mode {
        SelectionMode::Robust => {
            let priors = config
                .priors
                .clone()
                .unwrap_or_else(|| uniform_priors(dict.len()));
            Some(robust_moments(
                sample,
                &dict,
                config.delta,
                &priors,
                config.v_override,
            )?)
        }
        SelectionMode::Classical => None,
    };
    let mut per_candidate = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let breakdown = match mode {
            SelectionMode::Classical => classical_criterion(cand, sample, &dict, config.alpha)?,
            SelectionMode::Robust => {
                robust_criterion(cand, moments.as_ref().unwrap(), config.alpha)?
            }
        };
        per_candidate.push(CandidateDiagnostics {
            id: cand.id.clone(),
            criterion: breakdown.value,
            chosen_model: breakdown.chosen_model,
            model_values: breakdown.model_values,
        });
    }
    let chosen = per_candidate
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, d)| {
            if d.criterion < acc.1 {
                (i, d.criterion)
            } else {
                acc
            }
        })
        .0;
    Ok(SelectionResult {
        chosen,
        chosen_id: per_candidate[chosen].id.clone(),
        alpha: config.alpha,
        mode,
        per_candidate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dict4() -> Arc<Dictionary> {
        Arc::new(Dictionary::equal_cells(4).unwrap())
    }

    fn full_model(pen: f64) -> ModelSpec {
        ModelSpec {
            id: format!("full_pen{pen}"),
            lambda_set: vec![0, 1, 2, 3],
            pen,
        }
    }

    fn candidate(id: &str, coeffs: Vec<f64>, pen: f64) -> CandidateEstimator {
        let norm_sq = coeffs.iter().map(|c| c * c).sum();
        CandidateEstimator {
            id: id.into(),
            norm_sq,
            menu: vec![CandidateModel {
                model: full_model(pen),
                projections: coeffs,
            }],
        }
    }

    fn uniform_sample(n: usize) -> Vec<f64> {
        (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()
    }

    #[test]
    fn classical_zero_candidate_is_zero() {
        let d = dict4();
        let sample = uniform_sample(40);
        let c = candidate("zero", vec![0.0; 4], 0.0);
        let b = classical_criterion(&c, &sample, &d, 1.0).unwrap();
        assert_eq!(b.value, 0.0);
    }

    #[test]
    fn classical_projection_equals_estimate_drops_alpha_term() {
        let d = dict4();
        let sample = uniform_sample(40);
        let c = candidate("flat", vec![0.5, 0.5, 0.5, 0.5], 0.3);
        // s̆ = ŝ: criterion is ‖s̆‖² − 2 P_n s̆ + pen for every alpha
        let b1 = classical_criterion(&c, &sample, &d, 1.0).unwrap();
        let b9 = classical_criterion(&c, &sample, &d, 9.0).unwrap();
        assert!((b1.value - b9.value).abs() < 1e-15);
    }

    #[test]
    fn classical_min_uses_cheapest_model() {
        let d = dict4();
        let sample = uniform_sample(40);
        let mut c = candidate("two", vec![0.5; 4], 0.1);
        let mut second = c.menu[0].clone();
        second.model.pen = 0.7;
        c.menu.push(second);
        let b = classical_criterion(&c, &sample, &d, 1.0).unwrap();
        assert_eq!(b.chosen_model, 0);
        assert!((b.model_values[1] - b.model_values[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn empty_menu_errors() {
        let d = dict4();
        let c = CandidateEstimator {
            id: "bad".into(),
            norm_sq: 0.0,
            menu: vec![],
        };
        assert!(matches!(
            classical_criterion(&c, &uniform_sample(8), &d, 1.0),
            Err(SelectionError::EmptyMenu(_))
        ));
    }

    #[test]
    fn l0_value() {
        let c = Constants::standard();
        assert!((c.l0 - 31.0831).abs() < 1e-4);
    }

    #[test]
    fn classical_penalty_with_zero_sup() {
        // r_m = 0 leaves only the PΨ/n term
        let c = Constants::standard();
        let pen = classical_penalty(4.0, Some(0.0), 1.0, 100, 0.5, 1.0, 1.0).unwrap();
        assert!((pen - (2.5 + 2.0 * c.l0) * 4.0 / 100.0).abs() < 1e-12);
    }

    #[test]
    fn classical_penalty_rejects_unbounded() {
        assert!(matches!(
            classical_penalty(4.0, None, 1.0, 100, 0.1, 0.5, 1.0),
            Err(SelectionError::UnsupportedModel)
        ));
    }

    #[test]
    fn histogram_psi_moments_under_uniform() {
        // d equal cells under the uniform density: PΨ = d and ‖Ψ‖∞ = d
        let d = Dictionary::equal_cells(4).unwrap();
        let all = vec![0, 1, 2, 3];
        let sup = d.psi_sup_bound(&all).unwrap();
        assert!((sup - 4.0).abs() < 1e-12);
        let big = uniform_sample(4000);
        let p_psi = robust_psi_m(&big, &d, &all, 5).unwrap();
        assert!((p_psi - 4.0).abs() < 0.01, "p_psi = {p_psi}");
    }

    #[test]
    fn robust_penalty_examples() {
        let d = Arc::new(Dictionary::histogram(&[0.0, 1.0]).unwrap());
        let sample = uniform_sample(100);
        let moments = robust_moments(&sample, &d, 0.1, &uniform_priors(1), None).unwrap();
        // empty label set
        assert_eq!(robust_penalty(&[], &moments, 0.2).unwrap(), 0.0);
        // single constant function: P̄ψ² = 1, pen = 2·L4·V/(ε·n)
        let c = Constants::standard();
        let v = moments.v_lambda[0] as f64;
        let pen = robust_penalty(&[0], &moments, 0.2).unwrap();
        assert!((pen - 2.0 * c.l4 * v / (0.2 * 100.0)).abs() < 1e-9);
        assert!((c.l4 - 146.787).abs() < 1e-3);
        assert!(robust_penalty(&[0], &moments, 0.3).is_err());
    }

    #[test]
    fn robust_collapses_to_classical_with_one_block() {
        let d = dict4();
        let sample = uniform_sample(101);
        let moments = robust_moments(&sample, &d, 0.1, &uniform_priors(4), Some(1)).unwrap();
        for coeffs in [vec![0.5, -0.2, 1.0, 0.0], vec![2.0, 0.0, 0.0, 1.0]] {
            let c = candidate("c", coeffs, 0.17);
            let rb = robust_criterion(&c, &moments, 1.5).unwrap();
            let cb = classical_criterion(&c, &sample, &d, 1.5).unwrap();
            assert!(
                (rb.value - cb.value).abs() < 1e-12,
                "{} vs {}",
                rb.value,
                cb.value
            );
        }
    }

    #[test]
    fn robust_criterion_with_zero_projections() {
        // all β = 0: only α·‖ŝ‖² + pen remains
        let d = dict4();
        let sample = uniform_sample(40);
        let moments = robust_moments(&sample, &d, 0.1, &uniform_priors(4), None).unwrap();
        let c = CandidateEstimator {
            id: "zeroed".into(),
            norm_sq: 2.5,
            menu: vec![CandidateModel {
                model: full_model(0.3),
                projections: vec![0.0; 4],
            }],
        };
        let b = robust_criterion(&c, &moments, 1.5).unwrap();
        assert!((b.value - (1.5 * 2.5 + 0.3)).abs() < 1e-12);
    }

    #[test]
    fn penalty_shift_moves_criterion_exactly() {
        let d = dict4();
        let sample = uniform_sample(64);
        let cands = vec![
            candidate("a", vec![0.5, 0.2, 0.0, 0.9], 0.1),
            candidate("b", vec![0.1, 0.4, 0.4, 0.1], 0.1),
            candidate("c", vec![1.4, 0.0, 0.0, 0.0], 0.1),
        ];
        let cfg = SelectionConfig::default();
        let base = select(&cands, &sample, d.clone(), SelectionMode::Classical, &cfg).unwrap();
        let shift = 0.75;
        let shifted: Vec<CandidateEstimator> = cands
            .iter()
            .map(|c| {
                let mut c = c.clone();
                for cm in &mut c.menu {
                    cm.model.pen += shift;
                }
                c
            })
            .collect();
        let after = select(&shifted, &sample, d, SelectionMode::Classical, &cfg).unwrap();
        assert_eq!(base.chosen, after.chosen);
        for (b, a) in base.per_candidate.iter().zip(&after.per_candidate) {
            assert!((b.criterion + shift - a.criterion).abs() < 1e-12);
        }
    }

    #[test]
    fn penalty_monotonicity() {
        let d = dict4();
        let sample = uniform_sample(64);
        let c1 = candidate("a", vec![0.5, 0.2, 0.0, 0.9], 0.1);
        let mut c2 = c1.clone();
        c2.menu[0].model.pen = 0.4;
        let v1 = classical_criterion(&c1, &sample, &d, 1.0).unwrap().value;
        let v2 = classical_criterion(&c2, &sample, &d, 1.0).unwrap().value;
        assert!(v2 >= v1);
    }

    #[test]
    fn first_candidate_wins_ties_and_rotation_is_consistent() {
        let d = dict4();
        let sample = uniform_sample(64);
        let a = candidate("a", vec![0.5, 0.2, 0.0, 0.9], 0.1);
        let b = candidate("b", vec![0.1, 0.4, 0.4, 0.1], 0.1);
        let dup = vec![a.clone(), a.clone()];
        let cfg = SelectionConfig::default();
        let r = select(&dup, &sample, d.clone(), SelectionMode::Classical, &cfg).unwrap();
        assert_eq!(r.chosen, 0);

        let order1 = vec![a.clone(), b.clone()];
        let order2 = vec![b, a];
        let r1 = select(&order1, &sample, d.clone(), SelectionMode::Classical, &cfg).unwrap();
        let r2 = select(&order2, &sample, d, SelectionMode::Classical, &cfg).unwrap();
        assert_eq!(r1.chosen_id, r2.chosen_id);
        // criteria values are identical per candidate, only positions rotate
        assert_eq!(r1.per_candidate[0].criterion, r2.per_candidate[1].criterion);
    }

    #[test]
    fn single_candidate_is_selected() {
        let d = dict4();
        let sample = uniform_sample(32);
        let cands = vec![candidate("only", vec![1.0, 1.0, 1.0, 1.0], 0.0)];
        let r = select(
            &cands,
            &sample,
            d,
            SelectionMode::Classical,
            &SelectionConfig::default(),
        )
        .unwrap();
        assert_eq!(r.chosen, 0);
        assert_eq!(r.chosen_id, "only");
    }
}

//! Basis-function families and their Gram/coherence statistics.
//!
//! A dictionary is an ordered finite family of real-valued functions with
//! known L2 norms and a normalized Gram matrix of correlations. Built-in
//! constructors cover histogram cell systems and trigonometric systems on
//! \[0,1\], both of which carry analytic (identity) Grams; custom dictionaries
//! get their Gram from fixed-panel composite Simpson quadrature.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::Constants;

const ORTHONORMAL_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum DictionaryError {
    #[error("histogram needs at least 2 strictly increasing breakpoints spanning [0,1]")]
    BadBreakpoints,
    #[error("coefficient vector has length {got}, dictionary has {expected} functions")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("weights must be strictly positive (index {0})")]
    ZeroWeight(usize),
    #[error("negative variance {0} is out of domain")]
    NegativeVariance(f64),
    #[error("moment data has length {got}, expected {expected}")]
    MomentLength { expected: usize, got: usize },
}

/// Basis function families the crate knows how to describe analytically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    HistogramCell,
    Trigonometric,
    Custom,
}

/// One labeled basis function with its exact L2 norm.
#[derive(Clone)]
pub struct BasisFunction {
    pub label: String,
    pub kind: BasisKind,
    pub l2_norm: f64,
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl BasisFunction {
    pub fn new(
        label: impl Into<String>,
        kind: BasisKind,
        l2_norm: f64,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        BasisFunction {
            label: label.into(),
            kind,
            l2_norm,
            eval: Arc::new(eval),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }
}

impl std::fmt::Debug for BasisFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BasisFunction")
            .field("label", &self.label)
            .field("kind", &self.kind)
            .field("l2_norm", &self.l2_norm)
            .finish()
    }
}

/// Serializable description of a dictionary for experiment reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DictionaryDescriptor {
    Histogram { breakpoints: Vec<f64> },
    Trigonometric { max_frequency: usize },
    Custom { labels: Vec<String> },
}

/// An ordered family of basis functions with Gram data.
#[derive(Debug, Clone)]
pub struct Dictionary {
    functions: Vec<BasisFunction>,
    /// Normalized Gram: entries ⟨ψ_λ, ψ_λ'⟩ / (‖ψ_λ‖‖ψ_λ'‖).
    gram: DMatrix<f64>,
    orthonormal: bool,
    domain: (f64, f64),
    descriptor: DictionaryDescriptor,
}

impl Dictionary {
    /// Histogram cell system on \[0,1\]: one function `μ(I_λ)^{-1/2}·1_{I_λ}`
    /// per interval between consecutive breakpoints. Always orthonormal.
    pub fn histogram(breakpoints: &[f64]) -> Result<Self, DictionaryError> {
        if breakpoints.len() < 2
            || breakpoints.windows(2).any(|w| w[1] <= w[0])
            || breakpoints[0] != 0.0
            || *breakpoints.last().unwrap() != 1.0
        {
            return Err(DictionaryError::BadBreakpoints);
        }
        let m = breakpoints.len() - 1;
        let mut functions = Vec::with_capacity(m);
        for i in 0..m {
            let (lo, hi) = (breakpoints[i], breakpoints[i + 1]);
            let height = 1.0 / (hi - lo).sqrt();
            let last = i == m - 1;
            functions.push(BasisFunction::new(
                format!("cell_{i}"),
                BasisKind::HistogramCell,
                1.0,
                move |x| {
                    let inside = if last {
                        x >= lo && x <= hi
                    } else {
                        x >= lo && x < hi
                    };
                    if inside {
                        height
                    } else {
                        0.0
                    }
                },
            ));
        }
        Ok(Dictionary {
            functions,
            gram: DMatrix::identity(m, m),
            orthonormal: true,
            domain: (0.0, 1.0),
            descriptor: DictionaryDescriptor::Histogram {
                breakpoints: breakpoints.to_vec(),
            },
        })
    }

    /// Histogram system with `cells` equal-width cells on \[0,1\].
    pub fn equal_cells(cells: usize) -> Result<Self, DictionaryError> {
        if cells == 0 {
            return Err(DictionaryError::BadBreakpoints);
        }
        let breakpoints: Vec<f64> = (0..=cells).map(|i| i as f64 / cells as f64).collect();
        Self::histogram(&breakpoints)
    }

    /// Trigonometric system on \[0,1\]:
    /// `{1} ∪ {√2·cos(2πkx), √2·sin(2πkx) : 1 ≤ k ≤ max_frequency}`.
    pub fn trigonometric(max_frequency: usize) -> Self {
        let mut functions = vec![BasisFunction::new(
            "const",
            BasisKind::Trigonometric,
            1.0,
            |_| 1.0,
        )];
        for k in 1..=max_frequency {
            let w = 2.0 * std::f64::consts::PI * k as f64;
            functions.push(BasisFunction::new(
                format!("cos_{k}"),
                BasisKind::Trigonometric,
                1.0,
                move |x| std::f64::consts::SQRT_2 * (w * x).cos(),
            ));
            functions.push(BasisFunction::new(
                format!("sin_{k}"),
                BasisKind::Trigonometric,
                1.0,
                move |x| std::f64::consts::SQRT_2 * (w * x).sin(),
            ));
        }
        let m = functions.len();
        Dictionary {
            functions,
            gram: DMatrix::identity(m, m),
            orthonormal: true,
            domain: (0.0, 1.0),
            descriptor: DictionaryDescriptor::Trigonometric { max_frequency },
        }
    }

    /// Custom dictionary over an arbitrary interval. Norms and the Gram come
    /// from 1024-panel composite Simpson quadrature.
    pub fn custom(
        functions: Vec<BasisFunction>,
        domain: (f64, f64),
    ) -> Result<Self, DictionaryError> {
        let labels = functions.iter().map(|f| f.label.clone()).collect();
        let mut dict = Dictionary {
            functions,
            gram: DMatrix::identity(0, 0),
            orthonormal: false,
            domain,
            descriptor: DictionaryDescriptor::Custom { labels },
        };
        let m = dict.len();
        // raw inner products, then normalize against the quadrature norms
        let mut raw = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = simpson(domain, QUADRATURE_PANELS, |x| {
                    dict.functions[i].eval(x) * dict.functions[j].eval(x)
                });
                raw[(i, j)] = v;
                raw[(j, i)] = v;
            }
        }
        for i in 0..m {
            dict.functions[i].l2_norm = raw[(i, i)].sqrt();
            if !(dict.functions[i].l2_norm > 0.0) {
                return Err(DictionaryError::ZeroWeight(i));
            }
        }
        let mut gram = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                gram[(i, j)] =
                    raw[(i, j)] / (dict.functions[i].l2_norm * dict.functions[j].l2_norm);
            }
        }
        dict.orthonormal = is_identity(&gram, ORTHONORMAL_TOL)
            && dict
                .functions
                .iter()
                .all(|f| (f.l2_norm - 1.0).abs() <= ORTHONORMAL_TOL);
        dict.gram = gram;
        Ok(dict)
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn functions(&self) -> &[BasisFunction] {
        &self.functions
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn descriptor(&self) -> &DictionaryDescriptor {
        &self.descriptor
    }

    /// Normalized Gram matrix of correlations.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Raw inner-product matrix ⟨ψ_λ, ψ_λ'⟩ (correlations scaled by norms).
    pub fn raw_gram(&self) -> DMatrix<f64> {
        let m = self.len();
        DMatrix::from_fn(m, m, |i, j| {
            self.gram[(i, j)] * self.functions[i].l2_norm * self.functions[j].l2_norm
        })
    }

    pub fn eval(&self, idx: usize, x: f64) -> f64 {
        self.functions[idx].eval(x)
    }

    /// Evaluates every basis function at `x` into `out`.
    pub fn eval_all(&self, x: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.functions.iter().map(|f| f.eval(x)));
    }

    /// Evaluates `Σ θ_λ ψ_λ` at `x`.
    pub fn eval_combination(&self, theta: &[f64], x: f64) -> f64 {
        theta
            .iter()
            .zip(&self.functions)
            .map(|(t, f)| t * f.eval(x))
            .sum()
    }

    /// Ψ restricted to a label subset: `Σ_{λ ∈ set} ψ_λ(x)²`.
    pub fn psi_at(&self, lambda_set: &[usize], x: f64) -> f64 {
        lambda_set.iter().map(|&i| self.eval(i, x).powi(2)).sum()
    }

    /// Sup-norm bound for `Σ_{λ ∈ set} ψ_λ²`: exact for histogram cells
    /// (disjoint supports) and trigonometric functions (each bounded by its
    /// amplitude); `None` for custom functions, which may be unbounded.
    pub fn psi_sup_bound(&self, lambda_set: &[usize]) -> Option<f64> {
        let mut hist_max: f64 = 0.0;
        let mut trig_sum = 0.0;
        for &i in lambda_set {
            match self.functions[i].kind {
                BasisKind::HistogramCell => {
                    // cell value is constant μ^{-1/2} on its support
                    let h = self.sup_of(i)?;
                    hist_max = hist_max.max(h * h);
                }
                BasisKind::Trigonometric => {
                    let h = self.sup_of(i)?;
                    trig_sum += h * h;
                }
                BasisKind::Custom => return None,
            }
        }
        Some(hist_max + trig_sum)
    }

    fn sup_of(&self, idx: usize) -> Option<f64> {
        match &self.descriptor {
            DictionaryDescriptor::Histogram { breakpoints } => {
                let mu = breakpoints[idx + 1] - breakpoints[idx];
                Some(1.0 / mu.sqrt())
            }
            DictionaryDescriptor::Trigonometric { .. } => Some(if idx == 0 {
                1.0
            } else {
                std::f64::consts::SQRT_2
            }),
            DictionaryDescriptor::Custom { .. } => None,
        }
    }

    /// Smallest eigenvalue of the normalized Gram, by dense symmetric solve.
    pub fn smallest_gram_eigenvalue(&self) -> f64 {
        smallest_eigenvalue(&self.gram)
    }

    /// Recomputes the normalized Gram by quadrature regardless of analytic
    /// shortcuts. Diagnostic companion to [`Dictionary::gram`].
    pub fn quadrature_gram(&self, panels: usize) -> DMatrix<f64> {
        let m = self.len();
        let mut raw = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = simpson(self.domain, panels, |x| self.eval(i, x) * self.eval(j, x));
                raw[(i, j)] = v;
                raw[(j, i)] = v;
            }
        }
        let norms: Vec<f64> = (0..m).map(|i| raw[(i, i)].sqrt()).collect();
        DMatrix::from_fn(m, m, |i, j| raw[(i, j)] / (norms[i] * norms[j]))
    }
}

pub(crate) const QUADRATURE_PANELS: usize = 1024;

/// Composite Simpson rule with `panels` panels (panels must be even and >= 2;
/// they are rounded up when odd).
pub fn simpson((a, b): (f64, f64), panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    let n = if panels % 2 == 0 { panels } else { panels + 1 }.max(2);
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

pub fn smallest_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    if sym.nrows() == 0 {
        return 0.0;
    }
    sym.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn is_identity(m: &DMatrix<f64>, tol: f64) -> bool {
    m.row_iter().enumerate().all(|(i, row)| {
        row.iter()
            .enumerate()
            .all(|(j, &v)| (v - if i == j { 1.0 } else { 0.0 }).abs() <= tol)
    })
}

/// Coherence quantities of a dictionary at a coefficient vector, with the
/// weight-dependent scale factors used by the Lasso hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceStats {
    /// max over active λ of the largest off-diagonal correlation magnitude.
    pub rho_theta: f64,
    /// Σ over active λ of Σ over later-ordered λ' of |ρ(λ,λ')|.
    pub rho_star: f64,
    /// Active-set size.
    pub m_theta: usize,
    /// Active label indices, in storage order.
    pub j_theta: Vec<usize>,
    /// √(n/ln(2M/δ)) · max over active λ of ω_λ/‖ψ_λ‖.
    pub f_theta: f64,
    /// Σ over active λ of ω_λ².
    pub g_theta: f64,
    /// √(ln(2M/δ)/n) · max over all λ of ‖ψ_λ‖/ω_λ.
    pub g_global: f64,
    /// Smallest eigenvalue of the normalized Gram.
    pub zeta_m: f64,
    /// Caller-supplied lower bound for the eigenvalue hypothesis.
    pub kappa_m: f64,
}

/// Computes all coherence statistics at `theta` with weights `weights`.
/// `kappa_m` is configuration: the bound the eigenvalue hypothesis is tested
/// against.
pub fn coherence_stats(
    dict: &Dictionary,
    theta: &[f64],
    weights: &[f64],
    n: usize,
    delta: f64,
    kappa_m: f64,
) -> Result<CoherenceStats, DictionaryError> {
    let m = dict.len();
    if theta.len() != m {
        return Err(DictionaryError::DimensionMismatch {
            expected: m,
            got: theta.len(),
        });
    }
    if weights.len() != m {
        return Err(DictionaryError::DimensionMismatch {
            expected: m,
            got: weights.len(),
        });
    }
    if let Some(i) = weights.iter().position(|&w| !(w > 0.0)) {
        return Err(DictionaryError::ZeroWeight(i));
    }

    let j_theta: Vec<usize> = (0..m).filter(|&i| theta[i] != 0.0).collect();
    let gram = dict.gram();
    let mut rho_theta: f64 = 0.0;
    let mut rho_star = 0.0;
    for &i in &j_theta {
        for j in 0..m {
            if j != i {
                rho_theta = rho_theta.max(gram[(i, j)].abs());
            }
            if j > i {
                rho_star += gram[(i, j)].abs();
            }
        }
    }
    let log_ratio = (2.0 * m as f64 / delta).ln();
    let f_theta = if j_theta.is_empty() {
        0.0
    } else {
        (n as f64 / log_ratio).sqrt()
            * j_theta
                .iter()
                .map(|&i| weights[i] / dict.functions()[i].l2_norm)
                .fold(f64::NEG_INFINITY, f64::max)
    };
    let g_theta = j_theta.iter().map(|&i| weights[i] * weights[i]).sum();
    let g_global = (log_ratio / n as f64).sqrt()
        * (0..m)
            .map(|i| dict.functions()[i].l2_norm / weights[i])
            .fold(f64::NEG_INFINITY, f64::max);
    let zeta_m = dict.smallest_gram_eigenvalue();
    Ok(CoherenceStats {
        rho_theta,
        rho_star,
        m_theta: j_theta.len(),
        j_theta,
        f_theta,
        g_theta,
        g_global,
        zeta_m,
        kappa_m,
    })
}

/// The three alternative hypotheses behind the Lasso oracle inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisFlags {
    /// 16·G·F(θ)·M(θ) ≤ 1
    pub h1: bool,
    /// 16·G·F(θ)·ρ*(θ)·√M(θ) ≤ 1
    pub h2: bool,
    /// Gram positive definite with smallest eigenvalue ≥ κ_M > 0
    pub h3: bool,
}

pub fn check_lasso_hypotheses(stats: &CoherenceStats) -> HypothesisFlags {
    let gf = stats.g_global * stats.f_theta;
    let m = stats.m_theta as f64;
    HypothesisFlags {
        h1: 16.0 * gf * m <= 1.0,
        h2: 16.0 * gf * stats.rho_star * m.sqrt() <= 1.0,
        h3: stats.zeta_m > 0.0 && stats.kappa_m > 0.0 && stats.zeta_m >= stats.kappa_m,
    }
}

/// The dictionary-wide variance condition: for every λ,
/// `L1·√(Var ψ_λ²)/(P ψ_λ²)·√(V_λ/n) ≤ 1/2` (vacuous where `P ψ_λ² = 0`).
/// `moments[λ] = (Var ψ_λ², P ψ_λ²)`, supplied analytically by the caller.
pub fn check_dictionary_condition(
    moments: &[(f64, f64)],
    v_lambda: &[usize],
    n: usize,
) -> Result<bool, DictionaryError> {
    if moments.len() != v_lambda.len() {
        return Err(DictionaryError::MomentLength {
            expected: moments.len(),
            got: v_lambda.len(),
        });
    }
    let c = Constants::standard();
    for (&(var, mean), &v) in moments.iter().zip(v_lambda) {
        if var < 0.0 {
            return Err(DictionaryError::NegativeVariance(var));
        }
        if mean == 0.0 {
            continue;
        }
        if c.l1 * var.sqrt() / mean * (v as f64 / n as f64).sqrt() > 0.5 {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_examples() {
        let d = Dictionary::histogram(&[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(d.len(), 2);
        assert!(d.is_orthonormal());
        assert!((d.eval(0, 0.25) - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert!((d.eval(1, 0.75) - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert_eq!(d.eval(0, 0.75), 0.0);

        let single = Dictionary::histogram(&[0.0, 1.0]).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single.eval(0, 0.3), 1.0);
        assert_eq!(single.eval(0, 1.0), 1.0); // closed last cell

        let uneven = Dictionary::histogram(&[0.0, 0.25, 1.0]).unwrap();
        assert!((uneven.eval(0, 0.1) - 2.0).abs() < 1e-15);
        assert!((uneven.eval(1, 0.5) - (4.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn histogram_rejects_bad_breakpoints() {
        assert!(Dictionary::histogram(&[0.0]).is_err());
        assert!(Dictionary::histogram(&[0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(Dictionary::histogram(&[0.1, 1.0]).is_err());
    }

    #[test]
    fn trigonometric_counts() {
        assert_eq!(Dictionary::trigonometric(0).len(), 1);
        assert_eq!(Dictionary::trigonometric(1).len(), 3);
        assert_eq!(Dictionary::trigonometric(2).len(), 5);
    }

    /// Quadrature oracle: the analytic identity Gram of the trigonometric
    /// system is reproduced by 1024-panel Simpson within 1e-10.
    #[test]
    fn trig_gram_identity_by_quadrature() {
        let d = Dictionary::trigonometric(2);
        let g = d.quadrature_gram(1024);
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (g[(i, j)] - expect).abs() < 1e-10,
                    "gram[{i},{j}] = {}",
                    g[(i, j)]
                );
            }
        }
    }

    #[test]
    fn orthonormal_gram_eigenvalue_is_one() {
        let d = Dictionary::equal_cells(6).unwrap();
        assert!((d.smallest_gram_eigenvalue() - 1.0).abs() < 1e-8);
    }

    fn correlated_pair(rho: f64) -> Dictionary {
        // unit-norm functions on [0,1] with ⟨f,g⟩ = rho:
        // f = 1, g = rho + √(3(1-rho²))·(2x-1)
        let b = (3.0 * (1.0 - rho * rho)).sqrt();
        Dictionary::custom(
            vec![
                BasisFunction::new("f", BasisKind::Custom, 1.0, |_| 1.0),
                BasisFunction::new("g", BasisKind::Custom, 1.0, move |x| {
                    rho + b * (2.0 * x - 1.0)
                }),
            ],
            (0.0, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn coherence_examples() {
        let d = correlated_pair(0.3);
        assert!((d.gram()[(0, 1)] - 0.3).abs() < 1e-9);
        let w = vec![1.0, 1.0];

        // empty active set
        let s = coherence_stats(&d, &[0.0, 0.0], &w, 100, 0.1, 1.0).unwrap();
        assert_eq!(s.m_theta, 0);
        assert_eq!(s.rho_star, 0.0);
        assert_eq!(s.g_theta, 0.0);
        assert_eq!(s.f_theta, 0.0);

        // both active: ρ* counts the upper-triangle entry once
        let s = coherence_stats(&d, &[1.0, 1.0], &w, 100, 0.1, 1.0).unwrap();
        assert!((s.rho_star - 0.3).abs() < 1e-9);
        assert!((s.rho_theta - 0.3).abs() < 1e-9);

        // orthonormal dictionary has zero coherence at any theta
        let o = Dictionary::equal_cells(4).unwrap();
        let s = coherence_stats(&o, &[1.0, 0.0, 2.0, 0.5], &[1.0; 4], 50, 0.05, 1.0).unwrap();
        assert_eq!(s.rho_theta, 0.0);
        assert_eq!(s.rho_star, 0.0);
    }

    #[test]
    fn coherence_rejects_zero_weight() {
        let d = Dictionary::equal_cells(2).unwrap();
        assert!(matches!(
            coherence_stats(&d, &[1.0, 1.0], &[1.0, 0.0], 10, 0.1, 1.0),
            Err(DictionaryError::ZeroWeight(1))
        ));
    }

    #[test]
    fn hypothesis_examples() {
        let d = Dictionary::equal_cells(2).unwrap();
        // empty active set: H1 and H2 hold trivially
        let s = coherence_stats(&d, &[0.0, 0.0], &[1.0, 1.0], 10, 0.1, 1.0).unwrap();
        let h = check_lasso_hypotheses(&s);
        assert!(h.h1 && h.h2);
        // identity gram with kappa = 1: H3 holds
        assert!(h.h3);

        // forced G = F = M(θ) = 1 fails H1 (16 > 1)
        let fake = CoherenceStats {
            rho_theta: 0.0,
            rho_star: 0.0,
            m_theta: 1,
            j_theta: vec![0],
            f_theta: 1.0,
            g_theta: 1.0,
            g_global: 1.0,
            zeta_m: 1.0,
            kappa_m: 1.0,
        };
        assert!(!check_lasso_hypotheses(&fake).h1);
    }

    /// With ω_λ = c·‖ψ_λ‖ the scale factors collapse: G·F(θ) = 1 exactly, so
    /// 16·G·F(θ)·M(θ) = 16·M(θ).
    #[test]
    fn f_g_collapse_identity() {
        for &c in &[0.25, 1.0, 7.0] {
            let d = Dictionary::equal_cells(5).unwrap();
            let w: Vec<f64> = d.functions().iter().map(|f| c * f.l2_norm).collect();
            let theta = vec![1.0, 0.0, 2.0, 0.0, -1.0];
            let s = coherence_stats(&d, &theta, &w, 321, 0.07, 1.0).unwrap();
            let collapse = 16.0 * s.g_global * s.f_theta * s.m_theta as f64;
            assert!(
                (collapse - 16.0 * s.m_theta as f64).abs() < 1e-9,
                "collapse = {collapse}"
            );
        }
    }

    #[test]
    fn dictionary_condition_examples() {
        // all-zero means: vacuous
        assert!(check_dictionary_condition(&[(1.0, 0.0), (2.0, 0.0)], &[3, 3], 100).unwrap());
        // one violating label
        let c = Constants::standard();
        assert!(!check_dictionary_condition(&[(0.0, 1.0), (100.0, 0.1)], &[50, 50], 100).unwrap());
        // boundary equality counts as satisfied
        assert!(check_dictionary_condition(&[(1.0, 2.0 * c.l1)], &[100], 100).unwrap());
        // negative variance is a domain error
        assert!(check_dictionary_condition(&[(-0.1, 1.0)], &[3], 100).is_err());
    }

    #[test]
    fn custom_gram_matches_quadrature_rerun() {
        let d = correlated_pair(0.42);
        let q = d.quadrature_gram(2048);
        for i in 0..2 {
            for j in 0..2 {
                assert!((d.gram()[(i, j)] - q[(i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn gram_is_symmetric_with_unit_diagonal() {
        for d in [
            Dictionary::equal_cells(5).unwrap(),
            Dictionary::trigonometric(3),
            correlated_pair(0.6),
        ] {
            let g = d.gram();
            for i in 0..d.len() {
                assert!((g[(i, i)] - 1.0).abs() < 1e-12);
                for j in 0..d.len() {
                    assert_eq!(g[(i, j)], g[(j, i)]);
                }
            }
        }
    }

    #[test]
    fn descriptor_serializes() {
        let d = Dictionary::equal_cells(2).unwrap();
        let j = serde_json::to_string(d.descriptor()).unwrap();
        assert!(j.contains("histogram"));
        let back: DictionaryDescriptor = serde_json::from_str(&j).unwrap();
        assert_eq!(&back, d.descriptor());
    }
}

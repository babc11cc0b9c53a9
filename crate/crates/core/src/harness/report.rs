//! Experiment identities, configuration, and the report document.
//!
//! A report is a pure function of `(kind, config, seed)`: reruns serialize to
//! byte-identical JSON. Wall time is measured but deliberately kept out of
//! the serialized document so the determinism contract holds; runners print
//! it to stderr instead.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constants::Constants;
use crate::harness::generators::{GeneratorSpec, NoiseKind};

/// The coverage experiments the runner knows how to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Deviation of the robust mean above the true mean.
    Prop21,
    /// The data-driven variance bound dominating the true variance.
    Cor22,
    /// Sparse-truth robust Lasso risk against its remainder bound.
    Thm31,
    /// Classical estimator selection picking the uncorrupted candidate.
    Thm41,
    /// Robust estimator selection picking the uncorrupted candidate.
    Thm42,
    /// L2-density block selector risk against its rate bound.
    Thm51L2,
    /// Kullback histogram selector excess risk, reported as a ratio.
    Prop55Kull,
    /// Heteroscedastic regression selector risk against its rate bound.
    Prop57Reg,
    /// Mixing-data selector excess risk against the best block plus rate.
    Thm63Mixing,
}

pub const ALL_KINDS: [ExperimentKind; 9] = [
    ExperimentKind::Prop21,
    ExperimentKind::Cor22,
    ExperimentKind::Thm31,
    ExperimentKind::Thm41,
    ExperimentKind::Thm42,
    ExperimentKind::Thm51L2,
    ExperimentKind::Prop55Kull,
    ExperimentKind::Prop57Reg,
    ExperimentKind::Thm63Mixing,
];

impl ExperimentKind {
    pub fn token(&self) -> &'static str {
        match self {
            ExperimentKind::Prop21 => "prop21",
            ExperimentKind::Cor22 => "cor22",
            ExperimentKind::Thm31 => "thm31",
            ExperimentKind::Thm41 => "thm41",
            ExperimentKind::Thm42 => "thm42",
            ExperimentKind::Thm51L2 => "thm51_l2",
            ExperimentKind::Prop55Kull => "prop55_kull",
            ExperimentKind::Prop57Reg => "prop57_reg",
            ExperimentKind::Thm63Mixing => "thm63_mixing",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_KINDS
            .iter()
            .find(|k| k.token() == s)
            .copied()
            .ok_or_else(|| {
                format!(
                    "unknown experiment kind '{s}'; expected one of {}",
                    ALL_KINDS.map(|k| k.token()).join(", ")
                )
            })
    }
}

/// Effective configuration of one experiment run. Unused fields are ignored
/// by kinds that do not need them; `default_for` supplies the standard
/// setting of each kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Config schema version.
    pub version: u32,
    pub n: usize,
    pub delta: f64,
    /// Forces the block count instead of deriving it from `delta`.
    pub v_override: Option<usize>,
    /// Data source for the sample.
    pub family: GeneratorSpec,
    /// Dictionary size (equal cells on \[0,1\]) for density experiments.
    pub cells: usize,
    /// Truth cell probabilities for piecewise-constant truths; the length
    /// sets the truth resolution.
    pub truth_probs: Vec<f64>,
    /// Offset added to the corrupted candidate in selection experiments.
    pub corruption: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub nu: f64,
    /// Bound on the L2 norm of the truth for the classical penalty; derived
    /// from `truth_probs` when absent.
    pub s_norm_bound: Option<f64>,
    pub kappa_m: f64,
    /// Trade-off parameter of the rate quantities.
    pub delta_cap: f64,
    /// Kullback smoothing level; `1/n` when absent.
    pub smoothing_x: Option<f64>,
}

impl ExperimentConfig {
    pub fn default_for(kind: ExperimentKind) -> Self {
        let base = ExperimentConfig {
            version: 1,
            n: 2000,
            delta: 0.05,
            v_override: None,
            family: GeneratorSpec::Gaussian { mean: 0.0, sd: 1.0 },
            cells: 4,
            truth_probs: vec![0.25; 4],
            corruption: 10.0,
            alpha: 1.0,
            epsilon: 0.2,
            nu: 0.5,
            s_norm_bound: None,
            kappa_m: 1.0,
            delta_cap: 2.0,
            smoothing_x: None,
        };
        match kind {
            ExperimentKind::Prop21 | ExperimentKind::Cor22 => ExperimentConfig {
                v_override: Some(3),
                ..base
            },
            ExperimentKind::Thm31 => {
                let mut truth_probs = vec![0.0; 16];
                truth_probs[2] = 0.5;
                truth_probs[11] = 0.5;
                ExperimentConfig {
                    n: 4000,
                    cells: 16,
                    truth_probs,
                    ..base
                }
            }
            ExperimentKind::Thm41 | ExperimentKind::Thm42 => ExperimentConfig {
                cells: 8,
                truth_probs: vec![0.4, 0.3, 0.2, 0.1],
                ..base
            },
            ExperimentKind::Thm51L2 => ExperimentConfig {
                n: 1600,
                delta: 0.01,
                ..base
            },
            ExperimentKind::Prop55Kull => ExperimentConfig {
                n: 1600,
                truth_probs: vec![0.4, 0.3, 0.2, 0.1],
                ..base
            },
            ExperimentKind::Prop57Reg => ExperimentConfig {
                n: 10240,
                family: GeneratorSpec::Regression {
                    intercept: 1.0,
                    slope: 1.0,
                    sigma0_sq: 0.25,
                    sigma1_sq: 0.5,
                    noise: NoiseKind::StudentT { df: 5.0 },
                },
                ..base
            },
            ExperimentKind::Thm63Mixing => ExperimentConfig {
                n: 6400,
                family: GeneratorSpec::Ar1 {
                    a: 0.5,
                    noise_sd: 1.0,
                },
                ..base
            },
        }
    }

    pub fn apply_overrides(mut self, o: ConfigOverrides) -> Self {
        if let Some(v) = o.n {
            self.n = v;
        }
        if let Some(v) = o.delta {
            self.delta = v;
        }
        if o.v_override.is_some() {
            self.v_override = o.v_override;
        }
        if let Some(v) = o.family {
            self.family = v;
        }
        if let Some(v) = o.cells {
            self.cells = v;
        }
        if let Some(v) = o.truth_probs {
            self.truth_probs = v;
        }
        if let Some(v) = o.corruption {
            self.corruption = v;
        }
        if let Some(v) = o.alpha {
            self.alpha = v;
        }
        if let Some(v) = o.epsilon {
            self.epsilon = v;
        }
        if let Some(v) = o.nu {
            self.nu = v;
        }
        if o.s_norm_bound.is_some() {
            self.s_norm_bound = o.s_norm_bound;
        }
        if let Some(v) = o.kappa_m {
            self.kappa_m = v;
        }
        if let Some(v) = o.delta_cap {
            self.delta_cap = v;
        }
        if o.smoothing_x.is_some() {
            self.smoothing_x = o.smoothing_x;
        }
        self
    }
}

/// Sparse configuration overrides, merged onto the per-kind defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub n: Option<usize>,
    pub delta: Option<f64>,
    pub v_override: Option<usize>,
    pub family: Option<GeneratorSpec>,
    pub cells: Option<usize>,
    pub truth_probs: Option<Vec<f64>>,
    pub corruption: Option<f64>,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub nu: Option<f64>,
    pub s_norm_bound: Option<f64>,
    pub kappa_m: Option<f64>,
    pub delta_cap: Option<f64>,
    pub smoothing_x: Option<f64>,
}

/// One replication: the scored statistic, the bound it was compared to, and
/// whether it violated the bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub statistic: f64,
    pub bound: f64,
    pub violation: bool,
}

/// Full record of one Monte Carlo experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    /// The absolute constants in force when the experiment ran.
    pub constants: Constants,
    pub seed: u64,
    pub reps: usize,
    pub violations: usize,
    /// 1 − violations/reps.
    pub coverage: f64,
    /// Mean of the per-rep bounds (bounds may be data-driven).
    pub bound_mean: f64,
    /// Mean of statistic/bound across reps.
    pub ratio_mean: f64,
    /// 95th percentile of statistic/bound.
    pub ratio_p95: f64,
    /// Kind-specific audit values (block counts, weight floors, margin
    /// scales, condition inputs).
    pub details: BTreeMap<String, f64>,
    pub per_rep: Vec<RepRecord>,
    /// Measured wall time; excluded from serialization so that reruns with
    /// one seed are byte-identical.
    #[serde(skip)]
    pub wall_ms: u128,
}

impl ExperimentReport {
    pub(crate) fn assemble(
        kind: ExperimentKind,
        config: ExperimentConfig,
        seed: u64,
        per_rep: Vec<RepRecord>,
        details: BTreeMap<String, f64>,
        wall_ms: u128,
    ) -> Self {
        let reps = per_rep.len();
        let violations = per_rep.iter().filter(|r| r.violation).count();
        let bound_mean = per_rep.iter().map(|r| r.bound).sum::<f64>() / reps.max(1) as f64;
        let mut ratios: Vec<f64> = per_rep
            .iter()
            .map(|r| {
                if r.bound != 0.0 {
                    r.statistic / r.bound
                } else {
                    0.0
                }
            })
            .collect();
        let ratio_mean = ratios.iter().sum::<f64>() / reps.max(1) as f64;
        ratios.sort_by(f64::total_cmp);
        let ratio_p95 = if ratios.is_empty() {
            0.0
        } else {
            let idx = ((0.95 * reps as f64).ceil() as usize).clamp(1, reps) - 1;
            ratios[idx]
        };
        ExperimentReport {
            kind,
            config,
            constants: Constants::standard(),
            seed,
            reps,
            violations,
            coverage: 1.0 - violations as f64 / reps.max(1) as f64,
            bound_mean,
            ratio_mean,
            ratio_p95,
            details,
            per_rep,
            wall_ms,
        }
    }

    /// The canonical JSON document (pretty, deterministic field order).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Plot-ready per-rep CSV: `rep,statistic,bound,violation`.
    pub fn per_rep_csv(&self) -> String {
        let mut out = String::from("rep,statistic,bound,violation\n");
        for r in &self.per_rep {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.rep,
                r.statistic,
                r.bound,
                u8::from(r.violation)
            ));
        }
        out
    }
}

//! Deterministic data generators with analytic moments.
//!
//! Every family used in a condition check exposes its population moments in
//! closed form, so experiments can verify variance conditions before running
//! and can score statistics against exact bounds. Generation is a pure
//! function of the RNG handed in.

use rand::Rng;
use rand_distr::{Distribution, Pareto, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeneratorError {
    #[error("student t needs df > 2 for a finite variance, got {0}")]
    InfiniteVarianceStudent(f64),
    #[error("pareto needs shape > 2 for a finite variance, got {0}")]
    InfiniteVariancePareto(f64),
    #[error("ar(1) needs |a| < 1, got {0}")]
    BadArCoefficient(f64),
    #[error("contamination fraction must lie in [0,1], got {0}")]
    BadFraction(f64),
    #[error("histogram density needs matching breakpoints/probabilities summing to 1")]
    BadHistogram,
    #[error("generator family {0} does not produce scalar samples")]
    NotScalar(String),
    #[error("generator family {0} does not produce (x, y) pairs")]
    NotPairs(String),
}

/// Residual distribution for the regression family, standardized to unit
/// conditional variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    /// Student t scaled by √((df−2)/df); requires df > 2.
    StudentT {
        df: f64,
    },
}

/// A data-generating family plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Gaussian {
        mean: f64,
        sd: f64,
    },
    StudentT {
        df: f64,
    },
    Pareto {
        shape: f64,
    },
    /// Piecewise-constant density on \[0,1\].
    HistogramDensity {
        breakpoints: Vec<f64>,
        cell_probs: Vec<f64>,
    },
    /// Base draw shifted by `magnitude` with probability `fraction`.
    Contaminated {
        base: Box<GeneratorSpec>,
        fraction: f64,
        magnitude: f64,
    },
    /// Stationary first-order autoregression `x_t = a·x_{t−1} + σ·ε_t` with
    /// standard normal innovations, started from the stationary law.
    Ar1 {
        a: f64,
        noise_sd: f64,
    },
    /// `y = c0 + c1·x + σ(x)·ε` with `x ~ U\[0,1\]` and
    /// `σ²(x) = sigma0_sq + sigma1_sq·x`.
    Regression {
        intercept: f64,
        slope: f64,
        sigma0_sq: f64,
        sigma1_sq: f64,
        noise: NoiseKind,
    },
}

/// A generated sample: scalars or regression pairs.
#[derive(Debug, Clone, PartialEq)]
pub enum Sample {
    Scalar(Vec<f64>),
    Pairs(Vec<(f64, f64)>),
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        match self {
            GeneratorSpec::StudentT { df } => {
                if *df <= 2.0 {
                    return Err(GeneratorError::InfiniteVarianceStudent(*df));
                }
            }
            GeneratorSpec::Pareto { shape } => {
                if *shape <= 2.0 {
                    return Err(GeneratorError::InfiniteVariancePareto(*shape));
                }
            }
            GeneratorSpec::Ar1 { a, .. } => {
                if a.abs() >= 1.0 {
                    return Err(GeneratorError::BadArCoefficient(*a));
                }
            }
            GeneratorSpec::Contaminated { base, fraction, .. } => {
                if !(0.0..=1.0).contains(fraction) {
                    return Err(GeneratorError::BadFraction(*fraction));
                }
                base.validate()?;
            }
            GeneratorSpec::HistogramDensity {
                breakpoints,
                cell_probs,
            } => {
                let ok = breakpoints.len() == cell_probs.len() + 1
                    && breakpoints.windows(2).all(|w| w[1] > w[0])
                    && cell_probs.iter().all(|&p| p >= 0.0)
                    && (cell_probs.iter().sum::<f64>() - 1.0).abs() < 1e-9;
                if !ok {
                    return Err(GeneratorError::BadHistogram);
                }
            }
            GeneratorSpec::Regression { noise, .. } => {
                if let NoiseKind::StudentT { df } = noise {
                    if *df <= 2.0 {
                        return Err(GeneratorError::InfiniteVarianceStudent(*df));
                    }
                }
            }
            GeneratorSpec::Gaussian { .. } => {}
        }
        Ok(())
    }

    /// Population mean of the scalar families.
    pub fn mean(&self) -> Option<f64> {
        match self {
            GeneratorSpec::Gaussian { mean, .. } => Some(*mean),
            GeneratorSpec::StudentT { .. } => Some(0.0),
            GeneratorSpec::Pareto { shape } => Some(shape / (shape - 1.0)),
            GeneratorSpec::Ar1 { .. } => Some(0.0),
            GeneratorSpec::HistogramDensity {
                breakpoints,
                cell_probs,
            } => Some(
                breakpoints
                    .windows(2)
                    .zip(cell_probs)
                    .map(|(w, p)| p * (w[0] + w[1]) / 2.0)
                    .sum(),
            ),
            GeneratorSpec::Contaminated {
                base,
                fraction,
                magnitude,
            } => Some(base.mean()? + fraction * magnitude),
            GeneratorSpec::Regression { .. } => None,
        }
    }

    /// Population variance of the scalar families.
    pub fn variance(&self) -> Option<f64> {
        match self {
            GeneratorSpec::Gaussian { sd, .. } => Some(sd * sd),
            GeneratorSpec::StudentT { df } => Some(df / (df - 2.0)),
            GeneratorSpec::Pareto { shape } => {
                Some(shape / ((shape - 1.0) * (shape - 1.0) * (shape - 2.0)))
            }
            GeneratorSpec::Ar1 { a, noise_sd } => Some(noise_sd * noise_sd / (1.0 - a * a)),
            _ => None,
        }
    }

    /// Population second moment `E X²`.
    pub fn second_moment(&self) -> Option<f64> {
        let m = self.mean()?;
        Some(self.variance()? + m * m)
    }

    /// Population fourth moment `E X⁴`, when finite.
    pub fn fourth_moment(&self) -> Option<f64> {
        match self {
            GeneratorSpec::Gaussian { mean, sd } => {
                let (m, s2) = (*mean, sd * sd);
                Some(m.powi(4) + 6.0 * m * m * s2 + 3.0 * s2 * s2)
            }
            GeneratorSpec::StudentT { df } => {
                if *df > 4.0 {
                    Some(3.0 * df * df / ((df - 2.0) * (df - 4.0)))
                } else {
                    None
                }
            }
            GeneratorSpec::Pareto { shape } => {
                if *shape > 4.0 {
                    Some(shape / (shape - 4.0))
                } else {
                    None
                }
            }
            GeneratorSpec::Ar1 { .. } => {
                // gaussian marginal
                let v = self.variance()?;
                Some(3.0 * v * v)
            }
            _ => None,
        }
    }

    /// `Var(X²)`, when finite. This is the second-moment data the variance
    /// condition asks for with `f` the identity.
    pub fn variance_of_square(&self) -> Option<f64> {
        let m2 = self.second_moment()?;
        Some(self.fourth_moment()? - m2 * m2)
    }

    /// Draws `n` observations. Deterministic in the RNG state.
    pub fn generate<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Sample, GeneratorError> {
        self.validate()?;
        Ok(match self {
            GeneratorSpec::Regression { .. } => {
                Sample::Pairs((0..n).map(|_| self.draw_pair(rng)).collect())
            }
            _ => Sample::Scalar(self.generate_scalar(n, rng)?),
        })
    }

    /// Draws `n` scalar observations; errors for the regression family.
    pub fn generate_scalar<R: Rng>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>, GeneratorError> {
        self.validate()?;
        match self {
            GeneratorSpec::Gaussian { mean, sd } => Ok((0..n)
                .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
                .collect()),
            GeneratorSpec::StudentT { df } => {
                let t = StudentT::new(*df).expect("df validated");
                Ok((0..n).map(|_| t.sample(rng)).collect())
            }
            GeneratorSpec::Pareto { shape } => {
                let p = Pareto::new(1.0, *shape).expect("shape validated");
                Ok((0..n).map(|_| p.sample(rng)).collect())
            }
            GeneratorSpec::HistogramDensity {
                breakpoints,
                cell_probs,
            } => {
                let mut cum = Vec::with_capacity(cell_probs.len());
                let mut acc = 0.0;
                for p in cell_probs {
                    acc += p;
                    cum.push(acc);
                }
                Ok((0..n)
                    .map(|_| {
                        let u: f64 = rng.gen();
                        let cell = cum.partition_point(|&c| c < u).min(cell_probs.len() - 1);
                        let (lo, hi) = (breakpoints[cell], breakpoints[cell + 1]);
                        lo + (hi - lo) * rng.gen::<f64>()
                    })
                    .collect())
            }
            GeneratorSpec::Contaminated {
                base,
                fraction,
                magnitude,
            } => {
                let clean = base.generate_scalar(n, rng)?;
                Ok(clean
                    .into_iter()
                    .map(|x| {
                        if rng.gen::<f64>() < *fraction {
                            x + magnitude
                        } else {
                            x
                        }
                    })
                    .collect())
            }
            GeneratorSpec::Ar1 { a, noise_sd } => {
                let marginal_sd = noise_sd / (1.0 - a * a).sqrt();
                let mut x = marginal_sd * rng.sample::<f64, _>(StandardNormal);
                Ok((0..n)
                    .map(|_| {
                        let out = x;
                        x = a * x + noise_sd * rng.sample::<f64, _>(StandardNormal);
                        out
                    })
                    .collect())
            }
            GeneratorSpec::Regression { .. } => Err(GeneratorError::NotScalar(format!("{self:?}"))),
        }
    }

    /// Draws `n` regression pairs; errors for scalar families.
    pub fn generate_pairs<R: Rng>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<(f64, f64)>, GeneratorError> {
        self.validate()?;
        match self {
            GeneratorSpec::Regression { .. } => Ok((0..n).map(|_| self.draw_pair(rng)).collect()),
            _ => Err(GeneratorError::NotPairs(format!("{self:?}"))),
        }
    }

    fn draw_pair<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        match self {
            GeneratorSpec::Regression {
                intercept,
                slope,
                sigma0_sq,
                sigma1_sq,
                noise,
            } => {
                let x: f64 = rng.gen();
                let eps = match noise {
                    NoiseKind::Gaussian => rng.sample::<f64, _>(StandardNormal),
                    NoiseKind::StudentT { df } => {
                        let t = StudentT::new(*df).expect("df validated");
                        t.sample(rng) * ((df - 2.0) / df).sqrt()
                    }
                };
                let sigma = (sigma0_sq + sigma1_sq * x).sqrt();
                (x, intercept + slope * x + sigma * eps)
            }
            _ => unreachable!("draw_pair is only called for the regression family"),
        }
    }
}

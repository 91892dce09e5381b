//! Per-(s,a) reward distributions with analytic means and variance bounds.
//!
//! Bounded kinds have compact support; the heavy-tailed kinds (lognormal,
//! Pareto) only guarantee a finite second moment, which is all the robust
//! learner needs.

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RewardModel {
    Deterministic { value: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Gaussian resampled until the draw falls in `[mean - bound, mean + bound]`.
    /// Truncation is symmetric about the mean, so the analytic mean is `mean`.
    TruncatedGaussian { mean: f64, sd: f64, bound: f64 },
    /// Takes value `hi` with probability `p`, else `lo`.
    BernoulliScaled { p: f64, hi: f64, lo: f64 },
    LogNormal { mu: f64, sigma: f64 },
    /// Shape must exceed 2 so the variance exists.
    Pareto { scale: f64, shape: f64 },
}

impl RewardModel {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            RewardModel::Deterministic { value } => value.is_finite(),
            RewardModel::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            RewardModel::TruncatedGaussian { mean, sd, bound } => {
                mean.is_finite() && sd > 0.0 && bound > 0.0
            }
            RewardModel::BernoulliScaled { p, hi, lo } => {
                (0.0..=1.0).contains(&p) && hi.is_finite() && lo.is_finite()
            }
            RewardModel::LogNormal { mu, sigma } => mu.is_finite() && sigma > 0.0,
            RewardModel::Pareto { scale, shape } => scale > 0.0 && shape > 2.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid reward model: {self:?}"
            )))
        }
    }

    /// Analytic mean of the distribution.
    pub fn mean(&self) -> f64 {
        match *self {
            RewardModel::Deterministic { value } => value,
            RewardModel::Uniform { lo, hi } => 0.5 * (lo + hi),
            RewardModel::TruncatedGaussian { mean, .. } => mean,
            RewardModel::BernoulliScaled { p, hi, lo } => p * hi + (1.0 - p) * lo,
            RewardModel::LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            RewardModel::Pareto { scale, shape } => shape * scale / (shape - 1.0),
        }
    }

    /// Upper bound on the variance (exact for every kind except the
    /// truncated Gaussian, where the untruncated variance is an upper bound).
    pub fn variance_bound(&self) -> f64 {
        match *self {
            RewardModel::Deterministic { .. } => 0.0,
            RewardModel::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            RewardModel::TruncatedGaussian { sd, .. } => sd * sd,
            RewardModel::BernoulliScaled { p, hi, lo } => p * (1.0 - p) * (hi - lo) * (hi - lo),
            RewardModel::LogNormal { mu, sigma } => {
                let s2 = sigma * sigma;
                (s2.exp() - 1.0) * (2.0 * mu + s2).exp()
            }
            RewardModel::Pareto { scale, shape } => {
                scale * scale * shape / ((shape - 1.0) * (shape - 1.0) * (shape - 2.0))
            }
        }
    }

    /// Smallest `r` with support contained in `[-r, r]`, or `None` for the
    /// unbounded kinds.
    pub fn support_bound(&self) -> Option<f64> {
        match *self {
            RewardModel::Deterministic { value } => Some(value.abs()),
            RewardModel::Uniform { lo, hi } => Some(lo.abs().max(hi.abs())),
            RewardModel::TruncatedGaussian { mean, bound, .. } => {
                Some((mean - bound).abs().max((mean + bound).abs()))
            }
            RewardModel::BernoulliScaled { hi, lo, .. } => Some(lo.abs().max(hi.abs())),
            RewardModel::LogNormal { .. } | RewardModel::Pareto { .. } => None,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.support_bound().is_some()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            RewardModel::Deterministic { value } => value,
            RewardModel::Uniform { lo, hi } => rng.gen_range(lo..=hi),
            RewardModel::TruncatedGaussian { mean, sd, bound } => {
                let normal = Normal::new(mean, sd).expect("validated");
                loop {
                    let x = normal.sample(rng);
                    if (x - mean).abs() <= bound {
                        return x;
                    }
                }
            }
            RewardModel::BernoulliScaled { p, hi, lo } => {
                if rng.gen::<f64>() < p {
                    hi
                } else {
                    lo
                }
            }
            RewardModel::LogNormal { mu, sigma } => {
                LogNormal::new(mu, sigma).expect("validated").sample(rng)
            }
            RewardModel::Pareto { scale, shape } => {
                Pareto::new(scale, shape).expect("validated").sample(rng)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn empirical_mean(model: &RewardModel, n: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| model.sample(&mut rng)).sum::<f64>() / n as f64
    }

    #[test]
    fn declared_means_match_samples() {
        let n = 200_000;
        let cases = [
            RewardModel::Deterministic { value: -2.5 },
            RewardModel::Uniform { lo: -1.0, hi: 3.0 },
            RewardModel::TruncatedGaussian {
                mean: 0.7,
                sd: 0.5,
                bound: 2.0,
            },
            RewardModel::BernoulliScaled {
                p: 0.3,
                hi: 2.0,
                lo: -1.0,
            },
            RewardModel::LogNormal {
                mu: 0.0,
                sigma: 0.5,
            },
            RewardModel::Pareto {
                scale: 1.0,
                shape: 3.0,
            },
        ];
        for (i, model) in cases.iter().enumerate() {
            model.validate().unwrap();
            let emp = empirical_mean(model, n, 17 + i as u64);
            let tol = 3.0 * (model.variance_bound() / n as f64).sqrt() + 1e-12;
            assert!(
                (emp - model.mean()).abs() <= tol,
                "{model:?}: empirical {emp} vs analytic {} (tol {tol})",
                model.mean()
            );
        }
    }

    #[test]
    fn lognormal_mean_is_exp_of_mu_plus_half_sigma_sq() {
        let model = RewardModel::LogNormal {
            mu: 0.0,
            sigma: 0.5,
        };
        assert!((model.mean() - 0.125f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn bounded_support_is_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = RewardModel::TruncatedGaussian {
            mean: 1.0,
            sd: 2.0,
            bound: 0.5,
        };
        let bound = model.support_bound().unwrap();
        for _ in 0..10_000 {
            let x = model.sample(&mut rng);
            assert!(x.abs() <= bound);
            assert!((x - 1.0).abs() <= 0.5);
        }
    }

    #[test]
    fn pareto_shape_must_exceed_two() {
        let model = RewardModel::Pareto {
            scale: 1.0,
            shape: 1.5,
        };
        assert!(model.validate().is_err());
    }
}

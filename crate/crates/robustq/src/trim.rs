//! Univariate trimmed-mean estimation.
//!
//! The estimator splits the data into two halves by arrival parity: even
//! positions form the quantile half, odd positions the averaging half.
//! Interleaving keeps both halves temporally representative as a reward
//! history grows, so early-run corruption cannot monopolize one half.
//! Quantile cutoffs computed on the sorted quantile half clamp the averaging
//! half before the mean is taken.
//!
//! When the trim fraction `zeta = 8*eps + 24*ln(4/delta)/M` reaches 1/2 the
//! quantiles are meaningless and the estimator falls back to the median of
//! the averaging half. This regime coincides with sample counts too small
//! for the concentration bound (`delta < 4*exp(-M/2)` implies `zeta > 1/2`
//! well before the bound's precondition fails), so small histories are
//! always served by the bounded fallback.

use crate::error::{Error, Result};

/// Estimator parameters: corruption fraction and confidence level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrimConfig {
    /// Corruption fraction, must lie in `[0, 1/16)`.
    pub epsilon: f64,
    /// Confidence level, in `(0, 1)`.
    pub delta: f64,
}

impl TrimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0 / 16.0).contains(&self.epsilon) {
            return Err(Error::InvalidParameter(format!(
                "trim epsilon must lie in [0, 1/16), got {}",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "trim delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// Whether the concentration bound's precondition `delta >= 4*exp(-M/2)`
    /// holds for a data set of size `m`.
    pub fn confidence_valid(&self, m: usize) -> bool {
        self.delta >= 4.0 * (-(m as f64) / 2.0).exp()
    }

    /// Trim fraction `zeta = 8*eps + 24*ln(4/delta)/M`.
    pub fn zeta(&self, m: usize) -> f64 {
        8.0 * self.epsilon + 24.0 * (4.0 / self.delta).ln() / m as f64
    }
}

/// Estimator output: the estimate, the trim fraction used, and the quantile
/// cutoffs (`None` when the median fallback fired).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrimOutput {
    pub estimate: f64,
    pub zeta: f64,
    /// `(lower, upper)` clamp bounds from the quantile half.
    pub quantiles: Option<(f64, f64)>,
}

impl TrimOutput {
    pub fn fallback(&self) -> bool {
        self.quantiles.is_none()
    }
}

/// Clamps `x` into `[lo, hi]`.
pub fn phi_clamp(x: f64, lo: f64, hi: f64) -> f64 {
    assert!(lo <= hi, "phi_clamp requires lo <= hi, got [{lo}, {hi}]");
    if x > hi {
        hi
    } else if x < lo {
        lo
    } else {
        x
    }
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Core computation over pre-sorted halves. `total` is the full data size M
/// (the zeta formula always uses the true M, also for odd M where the halves
/// are unequal). Quantile indices are 1-based into the sorted quantile half
/// with the conservative ceiling/floor rounding, clamped to `[1, M/2]`.
fn trim_sorted(sorted_a: &[f64], sorted_b: &[f64], total: usize, cfg: &TrimConfig) -> TrimOutput {
    debug_assert_eq!(sorted_a.len() + sorted_b.len(), total);
    if total == 1 {
        // Degenerate single observation; always in the threshold-clamped
        // regime of the learner.
        return TrimOutput {
            estimate: sorted_a[0],
            zeta: cfg.zeta(1),
            quantiles: None,
        };
    }
    let zeta = cfg.zeta(total);
    let m = total / 2;
    if zeta < 0.5 {
        let k_lo = ((zeta * m as f64).ceil() as usize).clamp(1, m);
        let k_hi = (((1.0 - zeta) * m as f64).floor() as usize).clamp(1, m);
        if k_lo <= k_hi {
            let lo = sorted_a[k_lo - 1];
            let hi = sorted_a[k_hi - 1];
            let sum: f64 = sorted_b.iter().map(|&x| phi_clamp(x, lo, hi)).sum();
            return TrimOutput {
                estimate: sum / sorted_b.len() as f64,
                zeta,
                quantiles: Some((lo, hi)),
            };
        }
    }
    TrimOutput {
        estimate: median_of_sorted(sorted_b),
        zeta,
        quantiles: None,
    }
}

fn split_and_sort(data: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some(x) = data.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("trim input {x}")));
    }
    let mut half_a: Vec<f64> = data.iter().copied().step_by(2).collect();
    let mut half_b: Vec<f64> = data.iter().copied().skip(1).step_by(2).collect();
    half_a.sort_unstable_by(|x, y| x.partial_cmp(y).expect("finite"));
    half_b.sort_unstable_by(|x, y| x.partial_cmp(y).expect("finite"));
    Ok((half_a, half_b))
}

/// Trimmed-mean estimate over `data` in arrival order.
pub fn trimmed_mean(data: &[f64], cfg: &TrimConfig) -> Result<TrimOutput> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "trimmed_mean needs at least 2 observations, got {}",
            data.len()
        )));
    }
    let (half_a, half_b) = split_and_sort(data)?;
    Ok(trim_sorted(&half_a, &half_b, data.len(), cfg))
}

/// Convenience wrapper over `trimmed_mean` returning just the estimate; a
/// single-element history returns that element.
pub fn trim(history: &[f64], epsilon: f64, delta1: f64) -> Result<f64> {
    match history.len() {
        0 => Err(Error::InvalidParameter(
            "trim requires a nonempty history".into(),
        )),
        1 => {
            if history[0].is_finite() {
                Ok(history[0])
            } else {
                Err(Error::NonFinite(format!("trim input {}", history[0])))
            }
        }
        _ => Ok(trimmed_mean(
            history,
            &TrimConfig {
                epsilon,
                delta: delta1,
            },
        )?
        .estimate),
    }
}

/// Incrementally maintained reward history for one state-action pair.
///
/// Keeps both halves sorted, buffering new arrivals and merging them in at
/// the next estimate. Produces bit-identical output to [`trimmed_mean`] on
/// the same arrival sequence while avoiding a full re-sort per call.
#[derive(Debug, Clone, Default)]
pub struct RewardHistory {
    sorted_a: Vec<f64>,
    sorted_b: Vec<f64>,
    pending_a: Vec<f64>,
    pending_b: Vec<f64>,
    len: usize,
}

impl RewardHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("reward observation {x}")));
        }
        if self.len % 2 == 0 {
            self.pending_a.push(x);
        } else {
            self.pending_b.push(x);
        }
        self.len += 1;
        Ok(())
    }

    fn flush(&mut self) {
        merge_pending(&mut self.sorted_a, &mut self.pending_a);
        merge_pending(&mut self.sorted_b, &mut self.pending_b);
    }

    /// Trimmed-mean estimate over everything pushed so far.
    pub fn estimate(&mut self, cfg: &TrimConfig) -> TrimOutput {
        assert!(self.len > 0, "estimate over an empty history");
        self.flush();
        trim_sorted(&self.sorted_a, &self.sorted_b, self.len, cfg)
    }
}

fn merge_pending(sorted: &mut Vec<f64>, pending: &mut Vec<f64>) {
    if pending.is_empty() {
        return;
    }
    pending.sort_unstable_by(|x, y| x.partial_cmp(y).expect("finite"));
    let mut merged = Vec::with_capacity(sorted.len() + pending.len());
    let (mut i, mut j) = (0, 0);
    while i < sorted.len() && j < pending.len() {
        if sorted[i] <= pending[j] {
            merged.push(sorted[i]);
            i += 1;
        } else {
            merged.push(pending[j]);
            j += 1;
        }
    }
    merged.extend_from_slice(&sorted[i..]);
    merged.extend_from_slice(&pending[j..]);
    *sorted = merged;
    pending.clear();
}

//! Synchronous Q-learning: the vanilla update and the corruption-robust
//! variant that filters each pair's reward history through the trimmed-mean
//! estimator and clamps the result with a dynamic threshold.

use std::io::{self, BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::RewardObserver;
use crate::error::{Error, Result};
use crate::mdp::{sample_next_state, solve_q_star, QTable, TabularMdp};
use crate::trim::{trim, RewardHistory, TrimConfig};

/// Step-size schedule for the vanilla learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepSize {
    Constant { alpha: f64 },
    /// `alpha_t = a / (t + b)`.
    RobbinsMonro { a: f64, b: f64 },
}

impl StepSize {
    pub fn alpha(&self, t: usize) -> f64 {
        match *self {
            StepSize::Constant { alpha } => alpha,
            StepSize::RobbinsMonro { a, b } => a / (t as f64 + b),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSize::Constant { alpha } => alpha > 0.0 && alpha < 1.0,
            // a < b keeps alpha_t inside (0,1) for every t >= 0.
            StepSize::RobbinsMonro { a, b } => a > 0.0 && b > 0.0 && a < b,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "step-size schedule must keep alpha_t in (0,1): {self:?}"
            )))
        }
    }
}

impl Default for StepSize {
    /// `alpha_t = 1/(t+10)`: satisfies both Robbins-Monro series conditions
    /// and the offset avoids an alpha_0 = 1 noise spike.
    fn default() -> Self {
        StepSize::RobbinsMonro { a: 1.0, b: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanillaConfig {
    #[serde(default)]
    pub step_size: StepSize,
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
}

impl VanillaConfig {
    pub fn validate(&self) -> Result<()> {
        self.step_size.validate()?;
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        Ok(())
    }
}

fn default_c_const() -> f64 {
    1.0
}

fn default_r_bar() -> f64 {
    1.0
}

fn default_retrim_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustConfig {
    /// Corruption fraction handed to the trimmed-mean filter, in `[0, 1/16)`.
    pub epsilon: f64,
    /// Overall failure probability.
    pub delta: f64,
    pub horizon: usize,
    /// Universal constant in the threshold function; only widens the
    /// threshold, never stated numerically, so it defaults to 1.
    #[serde(default = "default_c_const")]
    pub c_const: f64,
    /// Reward scale: a bound on |r(s,a)| for bounded rewards, or
    /// `max{B, sigma}` in heavy-tailed mode.
    #[serde(default = "default_r_bar")]
    pub r_bar: f64,
    /// Constant step size; defaults to `log T / ((1-gamma) T)` when absent.
    #[serde(default)]
    pub step_size: Option<f64>,
    /// Recompute the trimmed mean every `k` iterations, reusing the cached
    /// estimate in between. `1` re-trims every iteration as the update rule
    /// literally specifies; larger values amortize cost on long horizons.
    #[serde(default = "default_retrim_every")]
    pub retrim_every: usize,
    #[serde(default)]
    pub seed: u64,
}

impl RobustConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0 / 16.0).contains(&self.epsilon) {
            return Err(Error::InvalidParameter(format!(
                "robust epsilon must lie in [0, 1/16), got {}",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        if self.c_const < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "universal constant must be >= 1, got {}",
                self.c_const
            )));
        }
        if self.r_bar < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "reward scale must be >= 1, got {}",
                self.r_bar
            )));
        }
        if self.retrim_every == 0 {
            return Err(Error::InvalidParameter(
                "retrim_every must be positive".into(),
            ));
        }
        if let Some(a) = self.step_size {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "step size must lie in (0,1), got {a}"
                )));
            }
        }
        Ok(())
    }

    /// Per-pair, per-iteration confidence level `delta_1 = delta/(2|S||A|T)`.
    /// Computed once from the configured horizon.
    pub fn delta1(&self, num_pairs: usize) -> f64 {
        self.delta / (2.0 * num_pairs as f64 * self.horizon as f64)
    }

    /// Effective constant step size, defaulting to `log T / ((1-gamma) T)`.
    pub fn alpha(&self, gamma: f64) -> f64 {
        self.step_size
            .unwrap_or_else(|| (self.horizon as f64).ln() / ((1.0 - gamma) * self.horizon as f64))
    }

    /// Deterministic bound on the iterates: `3 C r_bar / (1 - gamma)`.
    pub fn iterate_bound(&self, gamma: f64) -> f64 {
        3.0 * self.c_const * self.r_bar / (1.0 - gamma)
    }
}

/// Minimum sample count before the trimmed-mean concentration bound applies:
/// `ceil(2 log(4/delta1))`.
pub fn t_lim(delta1: f64) -> usize {
    (2.0 * (4.0 / delta1).ln()).ceil() as usize
}

/// Dynamic reward threshold: the crude bound `2 r_bar` until `T_lim`, then
/// the concentration-shaped bound `C r_bar (sqrt(log(4/delta1)/t) + sqrt(eps)) + r_bar`.
pub fn threshold_g(t: usize, cfg: &RobustConfig, num_pairs: usize) -> f64 {
    let delta1 = cfg.delta1(num_pairs);
    let limit = t_lim(delta1);
    if t <= limit {
        2.0 * cfg.r_bar
    } else {
        let log_term = (4.0 / delta1).ln();
        cfg.c_const * cfg.r_bar * ((log_term / t as f64).sqrt() + cfg.epsilon.sqrt()) + cfg.r_bar
    }
}

/// One synchronous vanilla update: for every pair,
/// `Q' = (1-alpha) Q + alpha (y + gamma max_a' Q(s_next, a'))`.
pub fn vanilla_step(
    q: &QTable,
    observed: &[f64],
    next_states: &[usize],
    alpha: f64,
    gamma: f64,
) -> QTable {
    assert!(alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0,1]");
    let (ns, na) = (q.num_states(), q.num_actions());
    assert_eq!(observed.len(), ns * na);
    assert_eq!(next_states.len(), ns * na);
    let maxes: Vec<f64> = (0..ns).map(|s| q.max_over_actions(s)).collect();
    let values = q
        .values()
        .iter()
        .zip(observed)
        .zip(next_states)
        .map(|((&qv, &y), &next)| (1.0 - alpha) * qv + alpha * (y + gamma * maxes[next]))
        .collect();
    QTable::from_values(ns, na, values).expect("finite update")
}

/// One robust update from full per-pair histories (each of length `t+1`).
/// Returns the new table and the number of pairs where the threshold clamp
/// fired.
pub fn robust_step(
    q: &QTable,
    histories: &[Vec<f64>],
    next_states: &[usize],
    t: usize,
    cfg: &RobustConfig,
    gamma: f64,
) -> Result<(QTable, usize)> {
    let (ns, na) = (q.num_states(), q.num_actions());
    let pairs = ns * na;
    if histories.len() != pairs {
        return Err(Error::DimensionMismatch {
            expected: format!("{pairs} histories"),
            got: format!("{}", histories.len()),
        });
    }
    for (pair, h) in histories.iter().enumerate() {
        if h.len() != t + 1 {
            return Err(Error::HistoryLength {
                pair,
                expected: t + 1,
                got: h.len(),
            });
        }
    }
    let delta1 = cfg.delta1(pairs);
    let g = threshold_g(t, cfg, pairs);
    let alpha = cfg.alpha(gamma);
    let maxes: Vec<f64> = (0..ns).map(|s| q.max_over_actions(s)).collect();
    let mut clamps = 0usize;
    let mut values = Vec::with_capacity(pairs);
    for pair in 0..pairs {
        let mut filtered = trim(&histories[pair], cfg.epsilon, delta1)?;
        if filtered.abs() > g {
            filtered = if filtered > 0.0 { g } else { -g };
            clamps += 1;
        }
        let qv = q.values()[pair];
        values.push((1.0 - alpha) * qv + alpha * (filtered + gamma * maxes[next_states[pair]]));
    }
    Ok((QTable::from_values(ns, na, values)?, clamps))
}

/// Per-iteration trace record.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    /// `||Q_t - reference||_inf`.
    pub error: f64,
    /// Number of pairs where the threshold clamp fired this iteration.
    pub clamps: usize,
    pub corrupted: bool,
    pub max_abs_q: f64,
}

/// Full record of one learning run: `T+1` rows (the initial table plus one
/// per update step) and the final table.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub final_q: QTable,
    pub seed: u64,
}

pub const TRACE_CSV_HEADER: &str = "t,d_t,clamps,corrupted,max_abs_q";

impl RunTrace {
    pub fn final_error(&self) -> f64 {
        self.records.last().expect("nonempty trace").error
    }

    /// Error series `d_t` indexed by iteration.
    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.error).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{TRACE_CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.iteration,
                r.error,
                r.clamps,
                u8::from(r.corrupted),
                r.max_abs_q
            )?;
        }
        Ok(())
    }
}

/// Parses trace rows back from the CSV emitted by [`RunTrace::write_csv`].
pub fn read_trace_csv<R: BufRead>(reader: R) -> io::Result<Vec<TraceRecord>> {
    let bad = |msg: String| io::Error::new(io::ErrorKind::InvalidData, msg);
    let mut lines = reader.lines();
    let header = lines.next().transpose()?;
    if header.as_deref() != Some(TRACE_CSV_HEADER) {
        return Err(bad(format!("unexpected trace header: {header:?}")));
    }
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 fields, got {}", fields.len())));
        }
        records.push(TraceRecord {
            iteration: fields[0].parse().map_err(|e| bad(format!("{e}")))?,
            error: fields[1].parse().map_err(|e| bad(format!("{e}")))?,
            clamps: fields[2].parse().map_err(|e| bad(format!("{e}")))?,
            corrupted: match fields[3] {
                "0" => false,
                "1" => true,
                other => return Err(bad(format!("bad corrupted flag {other}"))),
            },
            max_abs_q: fields[4].parse().map_err(|e| bad(format!("{e}")))?,
        });
    }
    Ok(records)
}

const STREAM_ADVERSARY: u64 = 0;

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Dedicated, deterministically derived random substreams: one for the
/// adversary plus a transition stream and a reward stream per pair, so
/// per-pair work can be reordered without changing the trace.
struct RunStreams {
    adversary: ChaCha8Rng,
    transitions: Vec<ChaCha8Rng>,
    rewards: Vec<ChaCha8Rng>,
}

impl RunStreams {
    fn new(seed: u64, pairs: usize) -> Self {
        Self {
            adversary: substream(seed, STREAM_ADVERSARY),
            transitions: (0..pairs)
                .map(|p| substream(seed, 1 + p as u64))
                .collect(),
            rewards: (0..pairs)
                .map(|p| substream(seed, 1 + (pairs + p) as u64))
                .collect(),
        }
    }

    fn draw_iteration(&mut self, mdp: &TabularMdp) -> (Vec<f64>, Vec<usize>) {
        let pairs = mdp.num_pairs();
        let mut clean = Vec::with_capacity(pairs);
        let mut next = Vec::with_capacity(pairs);
        for s in 0..mdp.num_states() {
            for a in 0..mdp.num_actions() {
                let pair = mdp.pair_index(s, a);
                clean.push(mdp.reward(s, a).sample(&mut self.rewards[pair]));
                next.push(sample_next_state(mdp, s, a, &mut self.transitions[pair]));
            }
        }
        (clean, next)
    }
}

/// Runs vanilla synchronous Q-learning from the zero table for `horizon`
/// update steps, routing every reward vector through `observer`. Errors are
/// recorded against the supplied reference table.
pub fn run_vanilla(
    mdp: &TabularMdp,
    observer: &mut dyn RewardObserver,
    cfg: &VanillaConfig,
    reference: &QTable,
) -> Result<RunTrace> {
    cfg.validate()?;
    if reference.num_states() != mdp.num_states() || reference.num_actions() != mdp.num_actions() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", mdp.num_states(), mdp.num_actions()),
            got: format!("{}x{}", reference.num_states(), reference.num_actions()),
        });
    }
    let gamma = mdp.discount();
    let mut streams = RunStreams::new(cfg.seed, mdp.num_pairs());
    let mut q = QTable::zeros(mdp.num_states(), mdp.num_actions());
    let mut records = Vec::with_capacity(cfg.horizon + 1);
    records.push(TraceRecord {
        iteration: 0,
        error: q.linf_distance(reference),
        clamps: 0,
        corrupted: false,
        max_abs_q: 0.0,
    });
    for t in 0..cfg.horizon {
        let (clean, next) = streams.draw_iteration(mdp);
        let record = observer.observe(t, &clean, &q, &mut streams.adversary);
        q = vanilla_step(&q, &record.rewards, &next, cfg.step_size.alpha(t), gamma);
        records.push(TraceRecord {
            iteration: t + 1,
            error: q.linf_distance(reference),
            clamps: 0,
            corrupted: record.corrupted,
            max_abs_q: q.max_abs(),
        });
    }
    Ok(RunTrace {
        records,
        final_q: q,
        seed: cfg.seed,
    })
}

/// Runs the robust learner from the zero table: per-pair reward histories
/// are filtered through the trimmed mean, thresholded, and fed into the
/// constant-step update. Errors are recorded against the exact fixed point
/// of the clean MDP.
pub fn run_robust(
    mdp: &TabularMdp,
    observer: &mut dyn RewardObserver,
    cfg: &RobustConfig,
) -> Result<RunTrace> {
    cfg.validate()?;
    let gamma = mdp.discount();
    let alpha = cfg.alpha(gamma);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "effective step size {alpha} must lie in (0,1); set step_size explicitly"
        )));
    }
    let pairs = mdp.num_pairs();
    let trim_cfg = TrimConfig {
        epsilon: cfg.epsilon,
        delta: cfg.delta1(pairs),
    };
    trim_cfg.validate()?;
    let reference = solve_q_star(mdp, 1e-10)?;
    // Deterministic boundedness of the iterates (with Q_0 = 0), with a hair
    // of slack for accumulated rounding.
    let bound = cfg.iterate_bound(gamma) * (1.0 + 1e-12) + 1e-12;

    let mut streams = RunStreams::new(cfg.seed, pairs);
    let mut q = QTable::zeros(mdp.num_states(), mdp.num_actions());
    let mut histories: Vec<RewardHistory> = vec![RewardHistory::new(); pairs];
    let mut filtered: Vec<f64> = vec![0.0; pairs];
    let mut records = Vec::with_capacity(cfg.horizon + 1);
    records.push(TraceRecord {
        iteration: 0,
        error: q.linf_distance(&reference),
        clamps: 0,
        corrupted: false,
        max_abs_q: 0.0,
    });
    for t in 0..cfg.horizon {
        let (clean, next) = streams.draw_iteration(mdp);
        let record = observer.observe(t, &clean, &q, &mut streams.adversary);
        for (h, &y) in histories.iter_mut().zip(&record.rewards) {
            h.push(y)?;
        }
        let retrim = t % cfg.retrim_every == 0;
        let g = threshold_g(t, cfg, pairs);
        let maxes: Vec<f64> = (0..mdp.num_states()).map(|s| q.max_over_actions(s)).collect();
        let mut clamps = 0usize;
        let mut values = Vec::with_capacity(pairs);
        for pair in 0..pairs {
            if retrim {
                filtered[pair] = histories[pair].estimate(&trim_cfg).estimate;
            }
            let mut r = filtered[pair];
            if r.abs() > g {
                r = if r > 0.0 { g } else { -g };
                clamps += 1;
            }
            let qv = q.values()[pair];
            values.push((1.0 - alpha) * qv + alpha * (r + gamma * maxes[next[pair]]));
        }
        q = QTable::from_values(mdp.num_states(), mdp.num_actions(), values)?;
        assert!(
            q.max_abs() <= bound,
            "iterate bound violated at t={t}: {} > {bound}",
            q.max_abs()
        );
        records.push(TraceRecord {
            iteration: t + 1,
            error: q.linf_distance(&reference),
            clamps,
            corrupted: record.corrupted,
            max_abs_q: q.max_abs(),
        });
    }
    Ok(RunTrace {
        records,
        final_q: q,
        seed: cfg.seed,
    })
}

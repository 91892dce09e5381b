//! Adversary strategies that corrupt the per-iteration observed reward
//! vector, either through a mixture model (a biased coin per iteration) or
//! under the strong-contamination prefix budget.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::mdp::{Fig1Mdp, QTable, TabularMdp, ACTION_L, ACTION_R};
use crate::reward::RewardModel;

/// One iteration's observed reward vector over all (s,a) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    pub iteration: usize,
    /// Flattened `[s][a]`, same layout as `TabularMdp` pairs.
    pub rewards: Vec<f64>,
    pub corrupted: bool,
}

/// One independent clean draw per (s,a).
pub fn sample_clean_rewards<R: Rng + ?Sized>(mdp: &TabularMdp, rng: &mut R) -> Vec<f64> {
    mdp.rewards().iter().map(|r| r.sample(rng)).collect()
}

#[derive(Debug, Clone)]
pub enum AttackStrategy {
    /// Pass-through: never corrupts.
    None,
    /// Mixture attack: one biased coin per iteration; on tails each pair with
    /// a corruption distribution is redrawn from it, the rest pass through.
    Huber { corruptions: Vec<Option<RewardModel>> },
    /// Replaces every reward by `-sign(clean) * magnitude`.
    SignFlipLarge { magnitude: f64 },
    /// Adds `offset` to every reward.
    ConstantShift { offset: f64 },
    /// Replaces the reward vector by fixed per-pair targets, steering the
    /// long-run observed means toward a chosen perturbed reward function.
    FixedPointShift { targets: Vec<f64> },
}

/// An omniscient reward attacker with a corruption budget. The committed
/// corruption log lives here; a single run loop owns the instance.
#[derive(Debug, Clone)]
pub struct Adversary {
    strategy: AttackStrategy,
    epsilon: f64,
    flags: Vec<bool>,
}

impl Adversary {
    pub fn new(strategy: AttackStrategy, epsilon: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&epsilon) {
            return Err(Error::InvalidParameter(format!(
                "attack budget must lie in [0, 1/2), got {epsilon}"
            )));
        }
        if let AttackStrategy::Huber { corruptions } = &strategy {
            for c in corruptions.iter().flatten() {
                c.validate()?;
            }
        }
        Ok(Self {
            strategy,
            epsilon,
            flags: Vec::new(),
        })
    }

    pub fn passthrough() -> Self {
        Self::new(AttackStrategy::None, 0.0).expect("valid")
    }

    /// The designed mixture attack on the counter-example MDP: corruption
    /// mass at `-C` for `(0,L)` and `+C` for `(0,R)`, other pairs untouched.
    pub fn theorem2(fig1: &Fig1Mdp) -> Self {
        let c = fig1.corruption_signal;
        let mut corruptions: Vec<Option<RewardModel>> = vec![None; fig1.mdp.num_pairs()];
        corruptions[fig1.mdp.pair_index(0, ACTION_L)] =
            Some(RewardModel::Deterministic { value: -c });
        corruptions[fig1.mdp.pair_index(0, ACTION_R)] =
            Some(RewardModel::Deterministic { value: c });
        Self::new(
            AttackStrategy::Huber { corruptions },
            fig1.params.epsilon,
        )
        .expect("valid")
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn strategy(&self) -> &AttackStrategy {
        &self.strategy
    }

    /// Committed per-iteration corruption log.
    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn is_huber(&self) -> bool {
        matches!(self.strategy, AttackStrategy::Huber { .. })
    }
}

/// True iff the flag log satisfies the prefix budget: for every `k <= t`,
/// the number of flagged iterations among `0..=k` is at most
/// `floor(epsilon * (k+1))`.
pub fn corruption_budget_ok(flags: &[bool], epsilon: f64, t: usize) -> bool {
    let mut corrupted = 0usize;
    for (k, &flag) in flags.iter().enumerate().take(t + 1) {
        if flag {
            corrupted += 1;
        }
        if corrupted as f64 > (epsilon * (k + 1) as f64).floor() {
            return false;
        }
    }
    true
}

/// Mixture-model observation: one biased coin for the whole iteration; on
/// tails every pair with a corruption distribution is redrawn.
pub fn huber_observe<R: Rng + ?Sized>(
    iteration: usize,
    clean: &[f64],
    adversary: &Adversary,
    rng: &mut R,
) -> ObservationRecord {
    let AttackStrategy::Huber { corruptions } = &adversary.strategy else {
        panic!("huber_observe requires a Huber strategy");
    };
    let tails = adversary.epsilon > 0.0 && rng.gen::<f64>() < adversary.epsilon;
    let rewards = if tails {
        clean
            .iter()
            .zip(corruptions)
            .map(|(&y, c)| match c {
                Some(dist) => dist.sample(rng),
                None => y,
            })
            .collect()
    } else {
        clean.to_vec()
    };
    ObservationRecord {
        iteration,
        rewards,
        corrupted: tails,
    }
}

/// Budgeted observation: the strategy may rewrite the whole vector, but only
/// if flagging this iteration keeps every budget prefix valid; otherwise the
/// clean vector passes through. `q` and the committed flag log realize the
/// omniscient interface; the built-in strategies ignore `q`.
pub fn strong_contamination_observe(
    iteration: usize,
    clean: &[f64],
    adversary: &Adversary,
    _q: &QTable,
) -> (Vec<f64>, bool) {
    let candidate: Option<Vec<f64>> = match &adversary.strategy {
        AttackStrategy::None => None,
        AttackStrategy::Huber { .. } => {
            panic!("strong_contamination_observe requires a non-Huber strategy")
        }
        AttackStrategy::SignFlipLarge { magnitude } => Some(
            clean
                .iter()
                .map(|&y| if y < 0.0 { *magnitude } else { -*magnitude })
                .collect(),
        ),
        AttackStrategy::ConstantShift { offset } => {
            Some(clean.iter().map(|&y| y + offset).collect())
        }
        AttackStrategy::FixedPointShift { targets } => Some(targets.clone()),
    };
    match candidate {
        Some(rewards) => {
            let mut flags = adversary.flags.clone();
            flags.push(true);
            if corruption_budget_ok(&flags, adversary.epsilon, iteration) {
                (rewards, true)
            } else {
                (clean.to_vec(), false)
            }
        }
        None => (clean.to_vec(), false),
    }
}

/// Source of observed rewards for a learning run. Implemented by `Adversary`;
/// test code may supply arbitrary (even budget-violating) observers.
pub trait RewardObserver {
    fn observe(
        &mut self,
        iteration: usize,
        clean: &[f64],
        q: &QTable,
        rng: &mut dyn RngCore,
    ) -> ObservationRecord;
}

impl RewardObserver for Adversary {
    fn observe(
        &mut self,
        iteration: usize,
        clean: &[f64],
        q: &QTable,
        rng: &mut dyn RngCore,
    ) -> ObservationRecord {
        debug_assert_eq!(iteration, self.flags.len(), "one observation per iteration");
        let record = if self.is_huber() {
            huber_observe(iteration, clean, self, rng)
        } else {
            let (rewards, corrupted) = strong_contamination_observe(iteration, clean, self, q);
            ObservationRecord {
                iteration,
                rewards,
                corrupted,
            }
        };
        self.flags.push(record.corrupted);
        record
    }
}

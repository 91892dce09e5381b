//! Tabular Q-learning under adversarial reward corruption.
//!
//! The crate provides exact solvers for small tabular MDPs, reward-attack
//! models (probabilistic mixing and budgeted rewrites), a trimmed-mean
//! reward filter, and synchronous Q-learning loops — the vanilla update and
//! a corruption-robust variant that feeds filtered, thresholded reward
//! estimates into the update.

pub mod analysis;
pub mod attack;
pub mod error;
pub mod mdp;
pub mod qlearning;
pub mod reward;
pub mod trim;

pub use attack::{
    corruption_budget_ok, huber_observe, strong_contamination_observe, Adversary, AttackStrategy,
    ObservationRecord, RewardObserver,
};
pub use error::{Error, Result};
pub use mdp::{
    bellman_apply, build_fig1_mdp, greedy_policy, perturbed_mdp, sample_next_state, solve_q_star,
    Fig1Mdp, Fig1Params, Policy, QTable, TabularMdp, ACTION_L, ACTION_R,
};
pub use qlearning::{
    read_trace_csv, robust_step, run_robust, run_vanilla, t_lim, threshold_g, vanilla_step,
    RobustConfig, RunTrace, StepSize, TraceRecord, VanillaConfig, TRACE_CSV_HEADER,
};
pub use reward::RewardModel;
pub use trim::{phi_clamp, trim, trimmed_mean, RewardHistory, TrimConfig, TrimOutput};

//! Tabular MDP representation, generative-model sampling, exact Bellman
//! machinery, and the five-state counter-example MDP with closed-form
//! solutions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::RewardModel;

/// A finite MDP with a dense transition kernel and a reward distribution per
/// state-action pair. Immutable after construction.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    /// Flattened `[s][a][s']`, each row a probability vector.
    transitions: Vec<f64>,
    /// Flattened `[s][a]`.
    rewards: Vec<RewardModel>,
    discount: f64,
}

/// Tolerance for validating that a transition row sums to one. Rows passing
/// the check are renormalized exactly to guard against config-file round-off.
pub const ROW_SUM_TOL: f64 = 1e-12;

impl TabularMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        mut transitions: Vec<f64>,
        rewards: Vec<RewardModel>,
        discount: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidParameter(
                "num_states and num_actions must be positive".into(),
            ));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "discount must lie strictly inside (0,1), got {discount}"
            )));
        }
        let pairs = num_states * num_actions;
        if transitions.len() != pairs * num_states {
            return Err(Error::DimensionMismatch {
                expected: format!("{} transition entries", pairs * num_states),
                got: format!("{}", transitions.len()),
            });
        }
        if rewards.len() != pairs {
            return Err(Error::DimensionMismatch {
                expected: format!("{pairs} reward models"),
                got: format!("{}", rewards.len()),
            });
        }
        for r in &rewards {
            r.validate()?;
        }
        for s in 0..num_states {
            for a in 0..num_actions {
                let row = &mut transitions[(s * num_actions + a) * num_states..][..num_states];
                let mut sum = 0.0;
                for &p in row.iter() {
                    if !(p.is_finite() && p >= 0.0) {
                        return Err(Error::InvalidTransitionRow {
                            state: s,
                            action: a,
                            sum: f64::NAN,
                        });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::InvalidTransitionRow {
                        state: s,
                        action: a,
                        sum,
                    });
                }
                for p in row.iter_mut() {
                    *p /= sum;
                }
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            transitions,
            rewards,
            discount,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn pair_index(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transitions[self.pair_index(s, a) * self.num_states..][..self.num_states]
    }

    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition_row(s, a)[next]
    }

    pub fn reward(&self, s: usize, a: usize) -> &RewardModel {
        &self.rewards[self.pair_index(s, a)]
    }

    pub fn rewards(&self) -> &[RewardModel] {
        &self.rewards
    }

    /// Exact reward means `R(s,a)` as a table.
    pub fn reward_means(&self) -> QTable {
        let values = self.rewards.iter().map(|r| r.mean()).collect();
        QTable::from_values(self.num_states, self.num_actions, values).expect("means are finite")
    }

    /// Largest `|R(s,a)|` over all pairs.
    pub fn max_abs_mean(&self) -> f64 {
        self.rewards
            .iter()
            .map(|r| r.mean().abs())
            .fold(0.0, f64::max)
    }

    /// Same kernel and discount, rewards replaced by new models.
    pub fn with_rewards(&self, rewards: Vec<RewardModel>) -> Result<Self> {
        Self::new(
            self.num_states,
            self.num_actions,
            self.transitions.clone(),
            rewards,
            self.discount,
        )
    }

    /// Replaces every reward distribution with a truncated Gaussian of the
    /// same mean. Leaves `Q*` unchanged while making the observations noisy.
    pub fn with_reward_noise(&self, sd: f64, bound: f64) -> Result<Self> {
        let rewards = self
            .rewards
            .iter()
            .map(|r| RewardModel::TruncatedGaussian {
                mean: r.mean(),
                sd,
                bound,
            })
            .collect();
        self.with_rewards(rewards)
    }
}

/// Same transitions and discount, reward means replaced by `perturbed_means`.
/// The fixed point of the resulting MDP is the perturbed-operator fixed point.
pub fn perturbed_mdp(mdp: &TabularMdp, perturbed_means: &QTable) -> Result<TabularMdp> {
    check_dims(mdp, perturbed_means)?;
    let rewards = perturbed_means
        .values()
        .iter()
        .map(|&m| RewardModel::Deterministic { value: m })
        .collect();
    mdp.with_rewards(rewards)
}

/// Dense `|S| x |A|` state-action value table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![0.0; num_states * num_actions],
        }
    }

    pub fn from_values(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::DimensionMismatch {
                expected: format!("{} values", num_states * num_actions),
                got: format!("{}", values.len()),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("QTable entry {v}")));
        }
        Ok(Self {
            num_states,
            num_actions,
            values,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.num_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..][..self.num_actions]
    }

    /// `max_a Q(s, a)`.
    pub fn max_over_actions(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn linf_distance(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Deterministic policy: one action per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    actions: Vec<usize>,
}

impl Policy {
    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }
}

fn check_dims(mdp: &TabularMdp, q: &QTable) -> Result<()> {
    if q.num_states != mdp.num_states || q.num_actions != mdp.num_actions {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", mdp.num_states, mdp.num_actions),
            got: format!("{}x{}", q.num_states, q.num_actions),
        });
    }
    Ok(())
}

/// One application of the Bellman optimality operator using exact reward
/// means: `(T*Q)(s,a) = R(s,a) + gamma * sum_s' P(s'|s,a) max_a' Q(s',a')`.
pub fn bellman_apply(q: &QTable, mdp: &TabularMdp) -> Result<QTable> {
    check_dims(mdp, q)?;
    let maxes: Vec<f64> = (0..mdp.num_states).map(|s| q.max_over_actions(s)).collect();
    let mut out = QTable::zeros(mdp.num_states, mdp.num_actions);
    for s in 0..mdp.num_states {
        for a in 0..mdp.num_actions {
            let row = mdp.transition_row(s, a);
            let expect: f64 = row.iter().zip(&maxes).map(|(p, m)| p * m).sum();
            out.set(s, a, mdp.reward(s, a).mean() + mdp.discount * expect);
        }
    }
    Ok(out)
}

/// Value iteration from the zero table until `||T*Q - Q||_inf <= tol*(1-gamma)`,
/// which guarantees `||Q - Q*||_inf <= tol` by the contraction property.
pub fn solve_q_star(mdp: &TabularMdp, tol: f64) -> Result<QTable> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let gamma = mdp.discount;
    let target = tol * (1.0 - gamma);
    let r_max = mdp.max_abs_mean().max(1.0);
    // Residual of the zero table is at most ||R||_inf and contracts by gamma
    // each sweep; the cap adds margin on top of the implied iteration count.
    let cap = ((r_max / (tol * (1.0 - gamma) * (1.0 - gamma))).ln() / (1.0 / gamma).ln())
        .ceil()
        .max(1.0) as usize
        + 64;
    let mut q = QTable::zeros(mdp.num_states, mdp.num_actions);
    let mut residual = f64::INFINITY;
    for _ in 0..cap {
        let next = bellman_apply(&q, mdp)?;
        residual = next.linf_distance(&q);
        q = next;
        if residual <= target {
            return Ok(q);
        }
    }
    Err(Error::SolverDidNotConverge {
        iterations: cap,
        residual,
    })
}

/// Greedy policy extraction; ties break to the lowest action index.
pub fn greedy_policy(q: &QTable) -> Policy {
    let actions = (0..q.num_states())
        .map(|s| {
            let row = q.row(s);
            let mut best = 0;
            for (a, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect();
    Policy { actions }
}

/// Draws `s' ~ P(.|s,a)` by inverse-CDF walk over the row.
pub fn sample_next_state<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    s: usize,
    a: usize,
    rng: &mut R,
) -> usize {
    let row = mdp.transition_row(s, a);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (next, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return next;
        }
    }
    row.len() - 1
}

/// Parameters of the five-state counter-example MDP.
///
/// `epsilon` must be strictly positive because the corruption signal divides
/// by it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig1Params {
    pub p: f64,
    pub d: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub gamma: f64,
}

impl Fig1Params {
    pub fn validate(&self) -> Result<()> {
        let ok = self.p > 0.0
            && self.p < 1.0
            && self.d > 0.0
            && self.kappa > 0.0
            && self.epsilon > 0.0
            && self.epsilon < 0.5
            && self.gamma > 0.0
            && self.gamma < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid counter-example parameters: {self:?}"
            )))
        }
    }
}

/// The counter-example MDP together with its closed-form clean and attacked
/// fixed points and the corruption signal that produces the attacked one.
#[derive(Debug, Clone)]
pub struct Fig1Mdp {
    pub params: Fig1Params,
    pub mdp: TabularMdp,
    /// Closed-form clean fixed point `Q*`.
    pub q_star: QTable,
    /// Closed-form fixed point under the designed mixture attack.
    pub q_tilde: QTable,
    /// Corruption signal `C = ((2 - eps) d + kappa) / eps`.
    pub corruption_signal: f64,
}

/// Action indices for the counter-example MDP.
pub const ACTION_L: usize = 0;
pub const ACTION_R: usize = 1;

/// Builds the five-state, two-action counter-example MDP.
///
/// States are zero-indexed: internal state `i` is state `i+1` of the usual
/// presentation. From state 0, `L` moves to state 1 w.p. `p` and to state 4
/// w.p. `1-p`; `R` is symmetric via states 2 and 3. States 1 and 2 self-loop
/// w.p. `p` and otherwise absorb (into states 4 and 3 respectively); states
/// 3 and 4 are absorbing. Rewards: `d`/`-d` for `(0,L)`/`(0,R)`, `1` in
/// states 1 and 2, `0` in states 3 and 4.
pub fn build_fig1_mdp(params: &Fig1Params) -> Result<Fig1Mdp> {
    params.validate()?;
    let Fig1Params {
        p,
        d,
        kappa,
        epsilon,
        gamma,
    } = *params;
    let (ns, na) = (5, 2);
    let mut transitions = vec![0.0; ns * na * ns];
    let mut set = |s: usize, a: usize, sp: usize, v: f64| {
        transitions[(s * na + a) * ns + sp] = v;
    };
    // state 0: L -> {1: p, 4: 1-p}, R -> {2: p, 3: 1-p}
    set(0, ACTION_L, 1, p);
    set(0, ACTION_L, 4, 1.0 - p);
    set(0, ACTION_R, 2, p);
    set(0, ACTION_R, 3, 1.0 - p);
    for a in 0..na {
        // states 1 and 2: self-loop w.p. p, otherwise absorb
        set(1, a, 1, p);
        set(1, a, 4, 1.0 - p);
        set(2, a, 2, p);
        set(2, a, 3, 1.0 - p);
        // states 3 and 4: absorbing
        set(3, a, 3, 1.0);
        set(4, a, 4, 1.0);
    }

    let det = |value: f64| RewardModel::Deterministic { value };
    let rewards = vec![
        det(d),
        det(-d), // state 0
        det(1.0),
        det(1.0), // state 1
        det(1.0),
        det(1.0), // state 2
        det(0.0),
        det(0.0), // state 3
        det(0.0),
        det(0.0), // state 4
    ];
    let mdp = TabularMdp::new(ns, na, transitions, rewards, gamma)?;

    let beta = p * gamma / (1.0 - gamma * p);
    let loop_value = 1.0 / (1.0 - gamma * p);
    let corruption_signal = ((2.0 - epsilon) * d + kappa) / epsilon;

    let q_star = QTable::from_values(
        ns,
        na,
        vec![
            d + beta,
            -d + beta,
            loop_value,
            loop_value,
            loop_value,
            loop_value,
            0.0,
            0.0,
            0.0,
            0.0,
        ],
    )?;
    let q_tilde = QTable::from_values(
        ns,
        na,
        vec![
            -d - kappa + beta,
            d + kappa + beta,
            loop_value,
            loop_value,
            loop_value,
            loop_value,
            0.0,
            0.0,
            0.0,
            0.0,
        ],
    )?;

    Ok(Fig1Mdp {
        params: *params,
        mdp,
        q_star,
        q_tilde,
        corruption_signal,
    })
}

impl Fig1Mdp {
    /// Mixture reward means under the designed attack:
    /// `(1-eps) R(s,a) + eps * m_c(s,a)` with corruption mass at `-C` for
    /// `(0,L)`, `+C` for `(0,R)`, and the clean mean elsewhere.
    pub fn perturbed_means(&self) -> QTable {
        let eps = self.params.epsilon;
        let c = self.corruption_signal;
        let mut means = self.mdp.reward_means();
        let d = self.params.d;
        means.set(0, ACTION_L, (1.0 - eps) * d - eps * c);
        means.set(0, ACTION_R, -(1.0 - eps) * d + eps * c);
        means
    }

    /// The attacked-minus-clean gap `2d + kappa`.
    pub fn gap(&self) -> f64 {
        2.0 * self.params.d + self.params.kappa
    }
}

//! Experiment configuration: TOML schema, validation, sweep application,
//! and construction of the MDP / adversary / learner described by a config.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use robustq::attack::{Adversary, AttackStrategy};
use robustq::mdp::{build_fig1_mdp, Fig1Mdp, Fig1Params, TabularMdp};
use robustq::qlearning::{RobustConfig, StepSize, VanillaConfig};
use robustq::reward::RewardModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mdp: MdpSpec,
    #[serde(default)]
    pub attack: AttackSpec,
    pub learner: LearnerSpec,
    pub run: RunSpec,
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MdpSpec {
    /// The five-state counter-example MDP, optionally with truncated-Gaussian
    /// reward noise of the same means.
    Fig1 {
        p: f64,
        d: f64,
        kappa: f64,
        epsilon: f64,
        gamma: f64,
        #[serde(default)]
        noise_sd: Option<f64>,
        #[serde(default)]
        noise_bound: Option<f64>,
    },
    /// A dense MDP description loaded from a separate TOML file.
    File { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AttackSpec {
    None,
    /// The designed mixture attack on the counter-example MDP (corruption
    /// mass at -C / +C on the state-0 pair rewards), mixed at rate `epsilon`.
    Theorem2 { epsilon: f64 },
    /// Mixture attack replacing every reward by its mean plus `shift` at
    /// rate `epsilon`.
    HuberShift { epsilon: f64, shift: f64 },
    /// Budgeted rewrite to `-sign(clean) * magnitude`.
    SignFlip { epsilon: f64, magnitude: f64 },
    /// Budgeted additive shift.
    ConstantShift { epsilon: f64, offset: f64 },
}

impl Default for AttackSpec {
    fn default() -> Self {
        AttackSpec::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LearnerSpec {
    Vanilla {
        horizon: usize,
        #[serde(default)]
        step_size: StepSize,
    },
    Robust {
        epsilon: f64,
        delta: f64,
        horizon: usize,
        #[serde(default = "one")]
        c_const: f64,
        #[serde(default = "one")]
        r_bar: f64,
        #[serde(default)]
        step_size: Option<f64>,
        #[serde(default = "one_usize")]
        retrim_every: usize,
    },
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

impl LearnerSpec {
    pub fn horizon(&self) -> usize {
        match self {
            LearnerSpec::Vanilla { horizon, .. } | LearnerSpec::Robust { horizon, .. } => *horizon,
        }
    }

    pub fn is_robust(&self) -> bool {
        matches!(self, LearnerSpec::Robust { .. })
    }

    pub fn vanilla_config(&self, seed: u64) -> Result<VanillaConfig> {
        match self {
            LearnerSpec::Vanilla { horizon, step_size } => {
                let cfg = VanillaConfig {
                    step_size: *step_size,
                    horizon: *horizon,
                    seed,
                };
                cfg.validate()?;
                Ok(cfg)
            }
            LearnerSpec::Robust { .. } => bail!("learner is robust, not vanilla"),
        }
    }

    pub fn robust_config(&self, seed: u64) -> Result<RobustConfig> {
        match *self {
            LearnerSpec::Robust {
                epsilon,
                delta,
                horizon,
                c_const,
                r_bar,
                step_size,
                retrim_every,
            } => {
                let cfg = RobustConfig {
                    epsilon,
                    delta,
                    horizon,
                    c_const,
                    r_bar,
                    step_size,
                    retrim_every,
                    seed,
                };
                cfg.validate()?;
                Ok(cfg)
            }
            LearnerSpec::Vanilla { .. } => bail!("learner is vanilla, not robust"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    /// Number of seeds per sweep point.
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Output directory for `run`.
    #[serde(default)]
    pub out: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<f64>,
}

const SWEEP_KEYS: &[&str] = &[
    "attack.epsilon",
    "attack.shift",
    "attack.magnitude",
    "attack.offset",
    "learner.epsilon",
    "learner.delta",
    "learner.horizon",
    "mdp.p",
    "mdp.d",
    "mdp.kappa",
    "mdp.epsilon",
    "mdp.gamma",
];

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.trials == 0 {
            bail!("run.trials must be at least 1");
        }
        for axis in &self.sweep {
            if !SWEEP_KEYS.contains(&axis.key.as_str()) {
                bail!(
                    "unknown sweep key {:?}; known keys: {}",
                    axis.key,
                    SWEEP_KEYS.join(", ")
                );
            }
            if axis.values.is_empty() {
                bail!("sweep axis {:?} has no values", axis.key);
            }
        }
        Ok(())
    }

    /// All sweep points (cross product of axes). A config without sweep axes
    /// yields the single point `[]`.
    pub fn sweep_points(&self) -> Vec<Vec<(String, f64)>> {
        let mut points: Vec<Vec<(String, f64)>> = vec![Vec::new()];
        for axis in &self.sweep {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push((axis.key.clone(), v));
                        q
                    })
                })
                .collect();
        }
        points
    }

    /// Returns a copy with the sweep-point assignments applied.
    pub fn at_point(&self, point: &[(String, f64)]) -> Result<ExperimentConfig> {
        let mut cfg = self.clone();
        for (key, value) in point {
            cfg.apply(key, *value)?;
        }
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: f64) -> Result<()> {
        let missing = || anyhow!("sweep key {key} does not apply to this config");
        match key {
            "attack.epsilon" => match &mut self.attack {
                AttackSpec::None => {
                    return Err(missing());
                }
                AttackSpec::Theorem2 { epsilon }
                | AttackSpec::HuberShift { epsilon, .. }
                | AttackSpec::SignFlip { epsilon, .. }
                | AttackSpec::ConstantShift { epsilon, .. } => *epsilon = value,
            },
            "attack.shift" => match &mut self.attack {
                AttackSpec::HuberShift { shift, .. } => *shift = value,
                _ => return Err(missing()),
            },
            "attack.magnitude" => match &mut self.attack {
                AttackSpec::SignFlip { magnitude, .. } => *magnitude = value,
                _ => return Err(missing()),
            },
            "attack.offset" => match &mut self.attack {
                AttackSpec::ConstantShift { offset, .. } => *offset = value,
                _ => return Err(missing()),
            },
            "learner.epsilon" => match &mut self.learner {
                LearnerSpec::Robust { epsilon, .. } => *epsilon = value,
                _ => return Err(missing()),
            },
            "learner.delta" => match &mut self.learner {
                LearnerSpec::Robust { delta, .. } => *delta = value,
                _ => return Err(missing()),
            },
            "learner.horizon" => {
                if value <= 0.0 || value.fract() != 0.0 {
                    bail!("learner.horizon sweep value {value} is not a positive integer");
                }
                match &mut self.learner {
                    LearnerSpec::Vanilla { horizon, .. } | LearnerSpec::Robust { horizon, .. } => {
                        *horizon = value as usize
                    }
                }
            }
            "mdp.p" | "mdp.d" | "mdp.kappa" | "mdp.epsilon" | "mdp.gamma" => match &mut self.mdp {
                MdpSpec::Fig1 {
                    p,
                    d,
                    kappa,
                    epsilon,
                    gamma,
                    ..
                } => match key {
                    "mdp.p" => *p = value,
                    "mdp.d" => *d = value,
                    "mdp.kappa" => *kappa = value,
                    "mdp.epsilon" => *epsilon = value,
                    _ => *gamma = value,
                },
                MdpSpec::File { .. } => return Err(missing()),
            },
            _ => bail!("unknown sweep key {key:?}"),
        }
        Ok(())
    }
}

/// Human-readable, file-system-safe label for a sweep point.
pub fn point_label(point: &[(String, f64)]) -> String {
    if point.is_empty() {
        return "default".into();
    }
    let mut label = String::new();
    for (i, (key, value)) in point.iter().enumerate() {
        if i > 0 {
            label.push(',');
        }
        let _ = write!(label, "{key}={value}");
    }
    label
}

/// Dense MDP description file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    /// One row per (s,a) pair in state-major order; each row has
    /// `num_states` probabilities.
    pub transitions: Vec<Vec<f64>>,
    /// One model per (s,a) pair in state-major order.
    pub rewards: Vec<RewardModel>,
}

impl MdpFile {
    pub fn build(&self) -> Result<TabularMdp> {
        let pairs = self.num_states * self.num_actions;
        if self.transitions.len() != pairs {
            bail!(
                "expected {pairs} transition rows, found {}",
                self.transitions.len()
            );
        }
        let mut flat = Vec::with_capacity(pairs * self.num_states);
        for (i, row) in self.transitions.iter().enumerate() {
            if row.len() != self.num_states {
                bail!(
                    "transition row {i} has {} entries, expected {}",
                    row.len(),
                    self.num_states
                );
            }
            flat.extend_from_slice(row);
        }
        Ok(TabularMdp::new(
            self.num_states,
            self.num_actions,
            flat,
            self.rewards.clone(),
            self.gamma,
        )?)
    }
}

/// The fully built experiment: the MDP to learn on, and (for the
/// counter-example) its closed-form companion.
pub struct BuiltMdp {
    pub mdp: TabularMdp,
    pub fig1: Option<Fig1Mdp>,
}

pub fn build_mdp(spec: &MdpSpec, config_dir: &Path) -> Result<BuiltMdp> {
    match spec {
        MdpSpec::Fig1 {
            p,
            d,
            kappa,
            epsilon,
            gamma,
            noise_sd,
            noise_bound,
        } => {
            let fig1 = build_fig1_mdp(&Fig1Params {
                p: *p,
                d: *d,
                kappa: *kappa,
                epsilon: *epsilon,
                gamma: *gamma,
            })?;
            let mdp = match noise_sd {
                Some(sd) => fig1.mdp.with_reward_noise(*sd, noise_bound.unwrap_or(4.0 * sd))?,
                None => fig1.mdp.clone(),
            };
            Ok(BuiltMdp {
                mdp,
                fig1: Some(fig1),
            })
        }
        MdpSpec::File { path } => {
            let full = config_dir.join(path);
            let text = std::fs::read_to_string(&full)
                .with_context(|| format!("cannot read MDP file {}", full.display()))?;
            let file: MdpFile = toml::from_str(&text)
                .with_context(|| format!("cannot parse MDP file {}", full.display()))?;
            Ok(BuiltMdp {
                mdp: file.build()?,
                fig1: None,
            })
        }
    }
}

pub fn build_adversary(spec: &AttackSpec, built: &BuiltMdp) -> Result<Adversary> {
    let adv = match spec {
        AttackSpec::None => Adversary::passthrough(),
        AttackSpec::Theorem2 { epsilon } => {
            let fig1 = built
                .fig1
                .as_ref()
                .ok_or_else(|| anyhow!("the theorem2 attack requires the fig1 MDP"))?;
            let c = fig1.corruption_signal;
            let mut corruptions: Vec<Option<RewardModel>> = vec![None; built.mdp.num_pairs()];
            corruptions[built.mdp.pair_index(0, robustq::mdp::ACTION_L)] =
                Some(RewardModel::Deterministic { value: -c });
            corruptions[built.mdp.pair_index(0, robustq::mdp::ACTION_R)] =
                Some(RewardModel::Deterministic { value: c });
            Adversary::new(AttackStrategy::Huber { corruptions }, *epsilon)?
        }
        AttackSpec::HuberShift { epsilon, shift } => {
            let corruptions = built
                .mdp
                .rewards()
                .iter()
                .map(|r| {
                    Some(RewardModel::Deterministic {
                        value: r.mean() + shift,
                    })
                })
                .collect();
            Adversary::new(AttackStrategy::Huber { corruptions }, *epsilon)?
        }
        AttackSpec::SignFlip { epsilon, magnitude } => Adversary::new(
            AttackStrategy::SignFlipLarge {
                magnitude: *magnitude,
            },
            *epsilon,
        )?,
        AttackSpec::ConstantShift { epsilon, offset } => {
            Adversary::new(AttackStrategy::ConstantShift { offset: *offset }, *epsilon)?
        }
    };
    Ok(adv)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[mdp]
kind = "fig1"
p = 0.5
d = 1.0
kappa = 1.0
epsilon = 0.1
gamma = 0.9

[attack]
kind = "theorem2"
epsilon = 0.1

[learner]
kind = "robust"
epsilon = 0.05
delta = 0.05
horizon = 1000
retrim_every = 10

[run]
trials = 4
base_seed = 7
out = "results"

[[sweep]]
key = "attack.epsilon"
values = [0.0, 0.05]
"#;

    #[test]
    fn config_round_trip_is_identity() {
        let cfg: ExperimentConfig = toml::from_str(SAMPLE).unwrap();
        cfg.validate().unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let again: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn sweep_points_are_cross_products() {
        let mut cfg: ExperimentConfig = toml::from_str(SAMPLE).unwrap();
        cfg.sweep.push(SweepAxis {
            key: "learner.epsilon".into(),
            values: vec![0.01, 0.02, 0.03],
        });
        assert_eq!(cfg.sweep_points().len(), 6);
        // First axis varies slowest: index 3 is the second attack value
        // paired with the first learner value.
        let point = &cfg.sweep_points()[3];
        assert_eq!(point_label(point), "attack.epsilon=0.05,learner.epsilon=0.01");
        let at = cfg.at_point(point).unwrap();
        match at.attack {
            AttackSpec::Theorem2 { epsilon } => assert_eq!(epsilon, 0.05),
            _ => panic!("wrong attack"),
        }
    }

    #[test]
    fn unknown_sweep_key_is_rejected() {
        let mut cfg: ExperimentConfig = toml::from_str(SAMPLE).unwrap();
        cfg.sweep[0].key = "learner.banana".into();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mdp_file_row_length_checked() {
        let file = MdpFile {
            num_states: 2,
            num_actions: 1,
            gamma: 0.5,
            transitions: vec![vec![0.5, 0.5], vec![1.0]],
            rewards: vec![
                RewardModel::Deterministic { value: 1.0 },
                RewardModel::Deterministic { value: 0.0 },
            ],
        };
        assert!(file.build().is_err());
    }
}

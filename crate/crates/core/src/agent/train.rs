use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{DrowsyMode, EnvConfig, LongitudinalEnv};
use crate::error::{Error, Result};
use crate::nn::weights::{load_weights, save_weights};
use crate::scalar::Scalar;
use crate::textio::{self, fmt_f64};

use super::learner::{AgentConfig, DqnAgent};
use super::qnet::Variant;
use super::replay::{ReplayBuffer, Transition};

pub const TRAINING_REPORT_HEADER: &str = "episode,cumulative_reward,moving_avg_10,min_reward_to_date,epsilon";

/// Seed domains so training scenarios, evaluation scenarios and network
/// initialisation never share a stream.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub enum SeedDomain {
    Init = 1,
    Actions = 2,
    TrainScenario = 3,
    EvalScenario = 4,
}

/// SplitMix64 mix of `(seed, domain, index)`.
pub fn derive_seed(seed: u64, domain: SeedDomain, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add((domain as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeStats {
    pub episode: usize,
    pub cumulative_reward: f64,
    pub moving_avg_10: f64,
    pub min_reward_to_date: f64,
    pub epsilon: f64,
    pub steps: usize,
    pub collided: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingReport {
    pub episodes: Vec<EpisodeStats>,
    pub losses: Vec<f64>,
}

impl TrainingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAINING_REPORT_HEADER);
        out.push('\n');
        for e in &self.episodes {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.episode,
                fmt_f64(e.cumulative_reward),
                fmt_f64(e.moving_avg_10),
                fmt_f64(e.min_reward_to_date),
                fmt_f64(e.epsilon)
            );
        }
        out
    }

    pub fn final_moving_average(&self) -> Option<f64> {
        self.episodes.last().map(|e| e.moving_avg_10)
    }
}

/// Mean of each value and up to `window - 1` preceding ones.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let w = &values[(i + 1).saturating_sub(window)..=i];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

/// Trains `variant` for `episodes` episodes. `on_episode` sees each episode's
/// statistics as soon as it finishes.
pub fn train<T: Scalar>(
    env_cfg: &EnvConfig,
    agent_cfg: &AgentConfig,
    variant: Variant,
    episodes: usize,
    seed: u64,
    mut on_episode: impl FnMut(&EpisodeStats),
) -> Result<(DqnAgent<T>, TrainingReport)> {
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SeedDomain::Init, 0));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SeedDomain::Actions, 0));
    let mut agent = DqnAgent::<T>::new(variant, agent_cfg.clone(), &mut init_rng)?;
    let mut env = LongitudinalEnv::new(*env_cfg)?;
    let mut buffer = ReplayBuffer::new(agent_cfg.buffer_capacity, agent_cfg.warmup);
    let mut report = TrainingReport::default();
    let mut rewards = Vec::with_capacity(episodes);
    let mut min_reward = f64::INFINITY;
    let mut env_steps = 0usize;

    for episode in 0..episodes {
        let scenario_seed = derive_seed(seed, SeedDomain::TrainScenario, episode as u64);
        let mut obs = env.reset(scenario_seed, DrowsyMode::Schedule)?;
        let mut total = 0.0;
        let mut steps = 0;
        let collided;
        loop {
            let action = agent.select_action(&obs, episode, &mut rng)?;
            let r = env.step(action)?;
            buffer.push(Transition {
                s: obs,
                a: action,
                r: r.reward,
                s_next: r.observation,
                done: r.info.collided,
            });
            total += r.reward;
            steps += 1;
            env_steps += 1;
            obs = r.observation;
            if buffer.is_warm() && env_steps.is_multiple_of(agent_cfg.train_interval) {
                let loss = agent.train_step(&buffer, &mut rng)?;
                report.losses.push(loss.to_f64_lossy());
            }
            if r.done {
                collided = r.info.collided;
                break;
            }
        }
        rewards.push(total);
        min_reward = min_reward.min(total);
        let window = &rewards[rewards.len().saturating_sub(10)..];
        let stats = EpisodeStats {
            episode,
            cumulative_reward: total,
            moving_avg_10: window.iter().sum::<f64>() / window.len() as f64,
            min_reward_to_date: min_reward,
            epsilon: if episode < agent_cfg.guided_episodes {
                1.0
            } else {
                agent_cfg.epsilon(episode)
            },
            steps,
            collided,
        };
        on_episode(&stats);
        report.episodes.push(stats);
    }
    Ok((agent, report))
}

pub const POLICY_FILE: &str = "policy.weights";
pub const TARGET_FILE: &str = "target.weights";
pub const AGENT_FILE: &str = "agent.txt";

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

pub fn agent_config_text(variant: Variant, c: &AgentConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "variant={variant}");
    let _ = writeln!(out, "gamma={}", c.gamma);
    let _ = writeln!(out, "eps_start={}", c.eps_start);
    let _ = writeln!(out, "eps_end={}", c.eps_end);
    let _ = writeln!(out, "eps_decay={}", c.eps_decay);
    let _ = writeln!(out, "guided_episodes={}", c.guided_episodes);
    let _ = writeln!(out, "guided_accel_prob={}", c.guided_accel_prob);
    let _ = writeln!(out, "batch_size={}", c.batch_size);
    let _ = writeln!(out, "target_sync_period={}", c.target_sync_period);
    let _ = writeln!(out, "learning_rate={}", c.learning_rate);
    let _ = writeln!(out, "buffer_capacity={}", c.buffer_capacity);
    let _ = writeln!(out, "warmup={}", c.warmup);
    let _ = writeln!(out, "train_interval={}", c.train_interval);
    let _ = writeln!(out, "trunk={}", join(&c.shape.trunk));
    let _ = writeln!(out, "stream={}", join(&c.shape.stream));
    out
}

pub fn parse_agent_config_text(text: &str, path: &Path) -> Result<(Variant, AgentConfig)> {
    let mut c = AgentConfig::default();
    let mut variant = None;
    for (line, key, value) in textio::key_values(text, path)? {
        let bad = |e: &dyn std::fmt::Display| Error::parse(path, line, format!("{key}: {e}"));
        macro_rules! num {
            ($t:ty) => {
                value.parse::<$t>().map_err(|e| bad(&e))?
            };
        }
        let list = |v: &str| -> Result<Vec<usize>> {
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',').map(|x| x.trim().parse::<usize>().map_err(|e| bad(&e))).collect()
        };
        match key.as_str() {
            "variant" => variant = Some(value.parse::<Variant>().map_err(|e| bad(&e))?),
            "gamma" => c.gamma = num!(f64),
            "eps_start" => c.eps_start = num!(f64),
            "eps_end" => c.eps_end = num!(f64),
            "eps_decay" => c.eps_decay = num!(f64),
            "guided_episodes" => c.guided_episodes = num!(usize),
            "guided_accel_prob" => c.guided_accel_prob = num!(f64),
            "batch_size" => c.batch_size = num!(usize),
            "target_sync_period" => c.target_sync_period = num!(usize),
            "learning_rate" => c.learning_rate = num!(f64),
            "buffer_capacity" => c.buffer_capacity = num!(usize),
            "warmup" => c.warmup = num!(usize),
            "train_interval" => c.train_interval = num!(usize),
            "trunk" => c.shape.trunk = list(&value)?,
            "stream" => c.shape.stream = list(&value)?,
            other => return Err(Error::parse(path, line, format!("unknown key '{other}'"))),
        }
    }
    let variant = variant.ok_or_else(|| Error::parse(path, 0, "missing key 'variant'"))?;
    Ok((variant, c))
}

/// Writes policy and target weights plus the agent settings into `dir`.
pub fn save_checkpoint<T: Scalar>(agent: &DqnAgent<T>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_weights(agent.policy(), &dir.join(POLICY_FILE))?;
    save_weights(agent.target(), &dir.join(TARGET_FILE))?;
    textio::write_atomic(&dir.join(AGENT_FILE), &agent_config_text(agent.variant(), agent.config()))
}

pub fn load_checkpoint<T: Scalar>(dir: &Path) -> Result<DqnAgent<T>> {
    let path = dir.join(AGENT_FILE);
    let (variant, cfg) = parse_agent_config_text(&textio::read_to_string(&path)?, &path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut agent = DqnAgent::new(variant, cfg, &mut rng)?;
    load_weights(agent.policy_mut(), &dir.join(POLICY_FILE))?;
    load_weights(agent.target_mut(), &dir.join(TARGET_FILE))?;
    Ok(agent)
}

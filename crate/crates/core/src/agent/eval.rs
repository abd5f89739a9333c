use std::fmt::Write as _;

use crate::env::{DrowsyMode, EnvConfig, LongitudinalEnv, Phase, Scenario, StepRecord};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::textio::fmt_f64;

use super::learner::DqnAgent;
use super::train::{derive_seed, SeedDomain};

pub const EPISODES_HEADER: &str = "scenario,arm,seed,steps,collided,success,cumulative_reward,mean_distance_m,\
mean_brake_pressure,unsafe_time_alert_s,unsafe_time_drowsy_s,acceleration_s,braking_s,following_s,transition_s";

pub const SUMMARY_HEADER: &str = "arm,episodes,success_rate,collision_rate,mean_reward,median_reward,mean_distance_m,\
mean_brake_pressure,unsafe_time_alert_s,unsafe_time_drowsy_s,acceleration_s,braking_s,following_s,transition_s";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Arm {
    Alert,
    Drowsy,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Alert => "alert",
            Arm::Drowsy => "drowsy",
        }
    }

    fn mode(self) -> DrowsyMode {
        match self {
            Arm::Alert => DrowsyMode::Off,
            Arm::Drowsy => DrowsyMode::Schedule,
        }
    }
}

/// Outcome of one greedy episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeSummary {
    pub scenario: usize,
    pub arm: Arm,
    pub seed: u64,
    pub steps: usize,
    pub collided: bool,
    /// Horizon reached without a collision.
    pub success: bool,
    pub cumulative_reward: f64,
    /// Mean true gap over the episode (m).
    pub mean_distance: f64,
    /// Mean brake pressure over steps with the brake applied (0 if never).
    pub mean_brake_pressure: f64,
    pub unsafe_time_alert_s: f64,
    pub unsafe_time_drowsy_s: f64,
    /// Seconds spent in each phase, in [`Phase::ALL`] order.
    pub phase_s: [f64; 4],
    pub log: Vec<StepRecord>,
}

impl EpisodeSummary {
    pub fn log_name(&self) -> String {
        format!("scenario_{:04}_{}.csv", self.scenario, self.arm.as_str())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub episodes: Vec<EpisodeSummary>,
}

/// Aggregate over a set of episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub episodes: usize,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub mean_reward: f64,
    pub median_reward: f64,
    pub mean_distance: f64,
    pub mean_brake_pressure: f64,
    pub unsafe_time_alert_s: f64,
    pub unsafe_time_drowsy_s: f64,
    pub phase_s: [f64; 4],
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

impl EvalSummary {
    pub fn of<'a>(episodes: impl IntoIterator<Item = &'a EpisodeSummary>) -> EvalSummary {
        let eps: Vec<&EpisodeSummary> = episodes.into_iter().collect();
        let n = eps.len();
        let rate = |f: fn(&EpisodeSummary) -> bool| {
            if n == 0 {
                0.0
            } else {
                eps.iter().filter(|e| f(e)).count() as f64 / n as f64
            }
        };
        let rewards: Vec<f64> = eps.iter().map(|e| e.cumulative_reward).collect();
        let braking: Vec<f64> = eps.iter().filter(|e| e.mean_brake_pressure > 0.0).map(|e| e.mean_brake_pressure).collect();
        let mut phase_s = [0.0; 4];
        for e in &eps {
            for (acc, x) in phase_s.iter_mut().zip(e.phase_s) {
                *acc += x;
            }
        }
        if n > 0 {
            phase_s.iter_mut().for_each(|x| *x /= n as f64);
        }
        EvalSummary {
            episodes: n,
            success_rate: rate(|e| e.success),
            collision_rate: rate(|e| e.collided),
            mean_reward: mean(&rewards),
            median_reward: median(&rewards),
            mean_distance: mean(&eps.iter().map(|e| e.mean_distance).collect::<Vec<_>>()),
            mean_brake_pressure: mean(&braking),
            unsafe_time_alert_s: eps.iter().map(|e| e.unsafe_time_alert_s).sum(),
            unsafe_time_drowsy_s: eps.iter().map(|e| e.unsafe_time_drowsy_s).sum(),
            phase_s,
        }
    }

    fn csv_row(&self, arm: &str) -> String {
        let mut cells = vec![
            arm.to_string(),
            self.episodes.to_string(),
            fmt_f64(self.success_rate),
            fmt_f64(self.collision_rate),
            fmt_f64(self.mean_reward),
            fmt_f64(self.median_reward),
            fmt_f64(self.mean_distance),
            fmt_f64(self.mean_brake_pressure),
            fmt_f64(self.unsafe_time_alert_s),
            fmt_f64(self.unsafe_time_drowsy_s),
        ];
        cells.extend(self.phase_s.iter().map(|&x| fmt_f64(x)));
        cells.join(",")
    }
}

impl EvalReport {
    pub fn arm(&self, arm: Arm) -> impl Iterator<Item = &EpisodeSummary> {
        self.episodes.iter().filter(move |e| e.arm == arm)
    }

    pub fn summary(&self, arm: Option<Arm>) -> EvalSummary {
        match arm {
            Some(a) => EvalSummary::of(self.arm(a)),
            None => EvalSummary::of(&self.episodes),
        }
    }

    /// Rows for the alert arm, the drowsy arm and both together.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(SUMMARY_HEADER);
        out.push('\n');
        for (name, arm) in [("alert", Some(Arm::Alert)), ("drowsy", Some(Arm::Drowsy)), ("all", None)] {
            out.push_str(&self.summary(arm).csv_row(name));
            out.push('\n');
        }
        out
    }

    pub fn episodes_csv(&self) -> String {
        let mut out = String::from(EPISODES_HEADER);
        out.push('\n');
        for e in &self.episodes {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                e.scenario,
                e.arm.as_str(),
                e.seed,
                e.steps,
                u8::from(e.collided),
                u8::from(e.success),
                fmt_f64(e.cumulative_reward),
                fmt_f64(e.mean_distance),
                fmt_f64(e.mean_brake_pressure),
                fmt_f64(e.unsafe_time_alert_s),
                fmt_f64(e.unsafe_time_drowsy_s)
            );
            for x in e.phase_s {
                let _ = write!(out, ",{}", fmt_f64(x));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs one greedy episode on `scenario`.
pub fn run_greedy_episode<T: Scalar>(
    agent: &DqnAgent<T>,
    env: &mut LongitudinalEnv,
    scenario: &Scenario,
    index: usize,
    arm: Arm,
) -> Result<EpisodeSummary> {
    let dt = env.config().dt;
    let mut obs = env.reset_with(scenario.clone(), arm.mode())?;
    let mut log = Vec::with_capacity(env.horizon_steps());
    let mut total = 0.0;
    let mut gap_sum = 0.0;
    let (mut brake_sum, mut brake_steps) = (0.0, 0usize);
    let (mut unsafe_alert, mut unsafe_drowsy) = (0.0, 0.0);
    let mut phase_s = [0.0; 4];
    let collided;
    loop {
        let action = agent.greedy_action(&obs)?;
        let r = env.step(action)?;
        total += r.reward;
        gap_sum += r.info.gap;
        if r.info.actuators.brake > 0.0 {
            brake_sum += r.info.actuators.brake;
            brake_steps += 1;
        }
        if r.info.unsafe_this_step {
            if r.info.theta == 1 {
                unsafe_drowsy += dt;
            } else {
                unsafe_alert += dt;
            }
        }
        let pi = Phase::ALL.iter().position(|&p| p == r.info.phase).expect("known phase");
        phase_s[pi] += dt;
        log.push(r.record());
        obs = r.observation;
        if r.done {
            collided = r.info.collided;
            break;
        }
    }
    let steps = log.len();
    Ok(EpisodeSummary {
        scenario: index,
        arm,
        seed: scenario.seed,
        steps,
        collided,
        success: !collided && steps == env.horizon_steps(),
        cumulative_reward: total,
        mean_distance: gap_sum / steps as f64,
        mean_brake_pressure: if brake_steps > 0 { brake_sum / brake_steps as f64 } else { 0.0 },
        unsafe_time_alert_s: unsafe_alert,
        unsafe_time_drowsy_s: unsafe_drowsy,
        phase_s,
        log,
    })
}

/// Each of `n_scenarios` scenarios is driven greedily twice, once alert and once
/// under the scenario's drowsiness schedule.
pub fn evaluate_paired<T: Scalar>(agent: &DqnAgent<T>, env_cfg: &EnvConfig, n_scenarios: usize, seed: u64) -> Result<EvalReport> {
    let mut env = LongitudinalEnv::new(*env_cfg)?;
    let mut report = EvalReport::default();
    for i in 0..n_scenarios {
        let scenario = Scenario::sample(env_cfg, derive_seed(seed, SeedDomain::EvalScenario, i as u64));
        for arm in [Arm::Alert, Arm::Drowsy] {
            report.episodes.push(run_greedy_episode(agent, &mut env, &scenario, i, arm)?);
        }
    }
    Ok(report)
}

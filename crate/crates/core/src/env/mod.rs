//! Longitudinal car-following simulator with radar sensing and drowsiness-delayed
//! actuation.

mod action;
mod config;
mod log;
pub mod radar;
mod reward;
mod scenario;

use std::collections::VecDeque;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::detector::PredictionSnapshot;
use crate::error::{Error, Result};

pub use action::{Action, Actuators, ACTION_COUNT};
pub use config::{EnvConfig, LeadProfileConfig};
pub use log::{step_log_csv, StepRecord, STEP_LOG_HEADER};
pub use radar::{cluster_radar, ClusterSummary, DbscanParams, RadarConfig, RadarFrame, RadarPoint};
pub use reward::{label_phase, reward_terms, safe_distance_band, Phase, RewardInputs, RewardTerms, RewardWeights};
pub use scenario::{DrowsyInterval, LeadSegment, Scenario};

pub const OBSERVATION_SIZE: usize = 5;

/// Input scaling applied by [`Observation::features`].
pub const FEATURE_SCALE: [f64; OBSERVATION_SIZE] = [30.0, 100.0, 20.0, 5.0, 1.0];

/// Where the drowsiness flag comes from.
#[derive(Clone, Debug, Default)]
pub enum DrowsyMode {
    #[default]
    Off,
    Always,
    /// The scenario's alternating alert/drowsy intervals.
    Schedule,
    /// Latest published detector output, read at step entry.
    Live(Arc<PredictionSnapshot>),
}

impl DrowsyMode {
    pub fn name(&self) -> &'static str {
        match self {
            DrowsyMode::Off => "off",
            DrowsyMode::Always => "always",
            DrowsyMode::Schedule => "schedule",
            DrowsyMode::Live(_) => "live",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub speed: f64,
    /// Last selected action (not necessarily the applied one).
    pub prev_action: Action,
    pub d_rel: f64,
    pub v_rel: f64,
    pub theta: u8,
    /// False when the radar frame held no cluster; `d_rel` then carries the range sentinel.
    pub detected: bool,
}

impl Observation {
    /// `[v/30, d_rel/100, v_rel/20, a/5, theta]`.
    pub fn features(&self) -> [f64; OBSERVATION_SIZE] {
        let raw = [self.speed, self.d_rel, self.v_rel, self.prev_action.index() as f64, self.theta as f64];
        let mut out = [0.0; OBSERVATION_SIZE];
        for i in 0..OBSERVATION_SIZE {
            out[i] = raw[i] / FEATURE_SCALE[i];
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    /// Time at step entry (s).
    pub time: f64,
    pub collided: bool,
    pub unsafe_this_step: bool,
    pub phase: Phase,
    /// Drowsiness flag read at step entry.
    pub theta: u8,
    pub selected: Action,
    pub applied: Action,
    pub actuators: Actuators,
    /// True bumper-to-bumper gap after the step (m).
    pub gap: f64,
    pub terms: RewardTerms,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

impl StepResult {
    pub fn record(&self) -> StepRecord {
        StepRecord {
            t: self.info.time,
            v: self.observation.speed,
            d_rel: self.observation.d_rel,
            v_rel: self.observation.v_rel,
            theta: self.info.theta,
            action: self.info.selected,
            throttle: self.info.actuators.throttle,
            brake: self.info.actuators.brake,
            reward: self.reward,
            phase: self.info.phase,
            collided: self.info.collided,
        }
    }
}

/// Advances speed `v` under constant `accel` for `dt`, stopping at `limit` if
/// it is crossed. Returns `(distance, new_speed)`.
fn integrate(v: f64, accel: f64, dt: f64, limit: f64) -> (f64, f64) {
    if accel == 0.0 {
        return (v * dt, v);
    }
    let reach = (limit - v) / accel;
    if reach < dt {
        let ts = reach.max(0.0);
        let at_limit = if reach >= 0.0 { limit } else { v };
        let dx = v * ts + 0.5 * accel * ts * ts + at_limit * (dt - ts);
        (dx, at_limit)
    } else {
        (v * dt + 0.5 * accel * dt * dt, v + accel * dt)
    }
}

#[derive(Debug)]
pub struct LongitudinalEnv {
    cfg: EnvConfig,
    horizon_steps: usize,
    delay_steps: usize,
    scenario: Scenario,
    mode: DrowsyMode,
    radar_rng: ChaCha8Rng,
    step: usize,
    ego_pos: f64,
    ego_speed: f64,
    lead_pos: f64,
    lead_speed: f64,
    pending: VecDeque<(usize, Action)>,
    applied: Action,
    prev_brake: f64,
    prev_selected: Action,
    done: bool,
}

impl LongitudinalEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let scenario = Scenario::sample(&cfg, 0);
        Ok(LongitudinalEnv {
            horizon_steps: cfg.horizon_steps(),
            delay_steps: cfg.delay_steps(),
            cfg,
            scenario,
            mode: DrowsyMode::Off,
            radar_rng: scenario::stream_rng(0, scenario::RADAR_STREAM),
            step: 0,
            ego_pos: 0.0,
            ego_speed: 0.0,
            lead_pos: 0.0,
            lead_speed: 0.0,
            pending: VecDeque::new(),
            applied: Action::COAST,
            prev_brake: 0.0,
            prev_selected: Action::COAST,
            done: true,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn horizon_steps(&self) -> usize {
        self.horizon_steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn ego_speed(&self) -> f64 {
        self.ego_speed
    }

    pub fn ego_position(&self) -> f64 {
        self.ego_pos
    }

    pub fn gap(&self) -> f64 {
        self.lead_pos - self.ego_pos
    }

    /// Starts an episode from the scenario drawn for `seed`.
    pub fn reset(&mut self, seed: u64, mode: DrowsyMode) -> Result<Observation> {
        let scenario = Scenario::sample(&self.cfg, seed);
        self.reset_with(scenario, mode)
    }

    /// Starts an episode from an explicit scenario; radar noise is seeded from it.
    pub fn reset_with(&mut self, scenario: Scenario, mode: DrowsyMode) -> Result<Observation> {
        scenario.validate(&self.cfg)?;
        self.radar_rng = scenario::stream_rng(scenario.seed, scenario::RADAR_STREAM);
        self.ego_pos = 0.0;
        self.ego_speed = 0.0;
        self.lead_pos = scenario.spacing;
        self.lead_speed = scenario.lead_initial_speed();
        self.scenario = scenario;
        self.mode = mode;
        self.step = 0;
        self.pending.clear();
        self.applied = Action::COAST;
        self.prev_brake = 0.0;
        self.prev_selected = Action::COAST;
        self.done = false;
        let theta = self.theta_at(0);
        let summary = self.sense();
        Ok(self.observe(summary, theta))
    }

    fn theta_at(&self, step: usize) -> u8 {
        match &self.mode {
            DrowsyMode::Off => 0,
            DrowsyMode::Always => 1,
            DrowsyMode::Schedule => self.scenario.scheduled_theta(step as f64 * self.cfg.dt),
            DrowsyMode::Live(s) => s.theta(),
        }
    }

    fn sense(&mut self) -> ClusterSummary {
        let frame = radar::synthesize_frame(
            &self.cfg.radar,
            self.gap(),
            self.ego_speed - self.lead_speed,
            self.cfg.dt,
            &mut self.radar_rng,
        );
        cluster_radar(&frame, &self.cfg.radar.dbscan)
    }

    fn observe(&self, summary: ClusterSummary, theta: u8) -> Observation {
        let (d_rel, v_rel) = summary.or_sentinel(self.cfg.radar.max_range);
        Observation {
            speed: self.ego_speed,
            prev_action: self.prev_selected,
            d_rel,
            v_rel,
            theta,
            detected: summary.detection.is_some(),
        }
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let dt = self.cfg.dt;
        let time = self.step as f64 * dt;
        let theta = self.theta_at(self.step);
        if theta == 1 && self.delay_steps > 0 {
            self.pending.push_back((self.step + self.delay_steps, action));
            while let Some(&(due, a)) = self.pending.front() {
                if due > self.step {
                    break;
                }
                self.applied = a;
                self.pending.pop_front();
            }
        } else {
            self.pending.clear();
            self.applied = action;
        }
        let act = self.applied.actuators();
        let accel = act.throttle * self.cfg.max_accel - act.brake * self.cfg.max_decel;
        let prev_speed = self.ego_speed;
        let limit = if accel < 0.0 { 0.0 } else { self.cfg.max_speed };
        let (dx, v) = integrate(self.ego_speed, accel, dt, limit);
        self.ego_pos += dx;
        self.ego_speed = v;

        let target = self.scenario.lead_target(time);
        let lead_accel = if self.lead_speed < target {
            self.cfg.lead.accel
        } else if self.lead_speed > target {
            -self.cfg.lead.decel
        } else {
            0.0
        };
        let (dx, v) = integrate(self.lead_speed, lead_accel, dt, target);
        self.lead_pos += dx;
        self.lead_speed = v;

        self.step += 1;
        let gap = self.gap();
        let collided = gap <= self.cfg.collision_distance;
        let summary = self.sense();
        self.prev_selected = action;
        let next_theta = self.theta_at(self.step);
        let observation = self.observe(summary, next_theta);

        let terms = reward_terms(
            &self.cfg.reward,
            self.cfg.smooth_brake_threshold,
            &RewardInputs {
                collided,
                prev_brake: self.prev_brake,
                brake: act.brake,
                gap,
                speed: self.ego_speed,
                prev_speed,
            },
        );
        self.prev_brake = act.brake;
        let phase = label_phase(
            self.ego_speed,
            summary.detection.map(|(d, _)| d),
            observation.v_rel,
            self.cfg.following_tolerance,
        );
        let (d_min, _) = safe_distance_band(self.ego_speed);
        self.done = collided || self.step >= self.horizon_steps;
        Ok(StepResult {
            observation,
            reward: terms.total(),
            done: self.done,
            info: StepInfo {
                time,
                collided,
                unsafe_this_step: gap < d_min,
                phase,
                theta,
                selected: action,
                applied: self.applied,
                actuators: act,
                gap,
                terms,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> EnvConfig {
        let mut c = EnvConfig::default();
        c.radar.sigma_depth = 0.0;
        c.radar.sigma_velocity = 0.0;
        c.radar.clutter_fraction = 0.0;
        c
    }

    fn scenario(spacing: f64, lead: f64) -> Scenario {
        Scenario {
            seed: 3,
            spacing,
            lead_segments: vec![LeadSegment { start_s: 0.0, target: lead }],
            drowsy_intervals: vec![],
        }
    }

    #[test]
    fn throttle_from_rest_for_one_second() {
        let mut env = LongitudinalEnv::new(quiet()).unwrap();
        env.reset_with(scenario(200.0, 20.0), DrowsyMode::Off).unwrap();
        for _ in 0..20 {
            env.step(Action::ACCELERATE).unwrap();
        }
        assert!((env.ego_speed() - 3.0).abs() < 1e-12);
        assert!((env.ego_position() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn full_brake_from_ten() {
        let mut env = LongitudinalEnv::new(quiet()).unwrap();
        env.reset_with(scenario(500.0, 20.0), DrowsyMode::Off).unwrap();
        env.ego_speed = 10.0;
        let start = env.ego_position();
        for _ in 0..25 {
            env.step(Action::FULL_BRAKE).unwrap();
        }
        assert!(env.ego_speed() < 1e-9);
        let dist = env.ego_position() - start;
        assert!((dist - 6.25).abs() < 1e-9, "{dist}");
        env.step(Action::FULL_BRAKE).unwrap();
        assert_eq!(env.ego_speed(), 0.0);
        assert!((env.ego_position() - start - 6.25).abs() < 1e-9);
    }

    #[test]
    fn integrate_clamps_inside_the_step() {
        let (dx, v) = integrate(0.2, -8.0, 0.05, 0.0);
        assert_eq!(v, 0.0);
        assert!((dx - 0.2 * 0.2 / 16.0).abs() < 1e-15);
        assert_eq!(integrate(0.0, -8.0, 0.05, 0.0), (0.0, 0.0));
        let (_, v) = integrate(29.9, 3.0, 0.05, 30.0);
        assert_eq!(v, 30.0);
    }

    #[test]
    fn step_after_done_is_an_error() {
        let mut c = quiet();
        c.horizon = 0.1;
        c.delay = 0.05;
        let mut env = LongitudinalEnv::new(c).unwrap();
        assert!(matches!(env.step(Action::COAST), Err(Error::EpisodeDone)));
        env.reset(1, DrowsyMode::Off).unwrap();
        assert!(!env.step(Action::COAST).unwrap().done);
        assert!(env.step(Action::COAST).unwrap().done);
        assert!(matches!(env.step(Action::COAST), Err(Error::EpisodeDone)));
    }

    #[test]
    fn collision_ends_the_episode() {
        let mut env = LongitudinalEnv::new(quiet()).unwrap();
        env.reset_with(scenario(20.0, 0.0), DrowsyMode::Off).unwrap();
        let mut last = None;
        for _ in 0..600 {
            let r = env.step(Action::ACCELERATE).unwrap();
            last = Some(r);
            if r.done {
                break;
            }
        }
        let r = last.unwrap();
        assert!(r.done && r.info.collided);
        assert!(r.reward <= -200.0 + 1.5);
    }

    #[test]
    fn delayed_actions_take_effect_ten_steps_later() {
        let mut env = LongitudinalEnv::new(quiet()).unwrap();
        env.reset_with(scenario(100.0, 15.0), DrowsyMode::Always).unwrap();
        let script: Vec<Action> = (0..40).map(|i| if i < 15 { Action::ACCELERATE } else { Action::LIGHT_BRAKE }).collect();
        let applied: Vec<Action> = script.iter().map(|&a| env.step(a).unwrap().info.applied).collect();
        for (t, a) in applied.iter().enumerate() {
            let expect = if t < 10 { Action::COAST } else { script[t - 10] };
            assert_eq!(*a, expect, "step {t}");
        }
    }

    #[test]
    fn reset_is_deterministic_and_alert_by_default() {
        let mut a = LongitudinalEnv::new(EnvConfig::default()).unwrap();
        let mut b = LongitudinalEnv::new(EnvConfig::default()).unwrap();
        let oa = a.reset(11, DrowsyMode::Off).unwrap();
        let ob = b.reset(11, DrowsyMode::Off).unwrap();
        assert_eq!(oa, ob);
        assert_eq!(oa.theta, 0);
        assert_eq!(oa.speed, 0.0);
    }

    #[test]
    fn live_mode_reads_snapshot() {
        use crate::detector::Prediction;
        let snap = Arc::new(PredictionSnapshot::new());
        let mut env = LongitudinalEnv::new(quiet()).unwrap();
        let o = env.reset_with(scenario(40.0, 5.0), DrowsyMode::Live(Arc::clone(&snap))).unwrap();
        assert_eq!(o.theta, 0);
        snap.publish(Prediction::from_probability(0.8, 0.5, 0.0));
        let r = env.step(Action::COAST).unwrap();
        assert_eq!(r.info.theta, 1);
        assert_eq!(r.observation.theta, 1);
    }

    #[test]
    fn features_are_scaled() {
        let o = Observation {
            speed: 15.0,
            prev_action: Action::ACCELERATE,
            d_rel: 50.0,
            v_rel: -10.0,
            theta: 1,
            detected: true,
        };
        assert_eq!(o.features(), [0.5, 0.5, -0.5, 1.0, 1.0]);
    }
}

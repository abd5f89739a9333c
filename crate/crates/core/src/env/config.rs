use crate::error::{Error, Result};

use super::radar::RadarConfig;
use super::reward::RewardWeights;

/// Lead-vehicle speed profile: piecewise-constant targets tracked with bounded
/// acceleration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeadProfileConfig {
    pub min_segments: usize,
    pub max_segments: usize,
    pub min_speed: f64,
    pub max_speed: f64,
    pub accel: f64,
    pub decel: f64,
}

impl Default for LeadProfileConfig {
    fn default() -> Self {
        LeadProfileConfig {
            min_segments: 2,
            max_segments: 4,
            min_speed: 0.0,
            max_speed: 20.0,
            accel: 2.0,
            decel: 4.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvConfig {
    pub dt: f64,
    /// Acceleration at full throttle (m/s^2).
    pub max_accel: f64,
    /// Deceleration magnitude at full brake (m/s^2).
    pub max_decel: f64,
    pub max_speed: f64,
    pub collision_distance: f64,
    /// Actuation delay while drowsy (s).
    pub delay: f64,
    pub horizon: f64,
    pub spacing_min: f64,
    pub spacing_max: f64,
    pub lead: LeadProfileConfig,
    pub radar: RadarConfig,
    pub reward: RewardWeights,
    pub smooth_brake_threshold: f64,
    /// `|v_rel|` bound for the following phase (m/s).
    pub following_tolerance: f64,
    /// Mean lengths of the alternating alert and drowsy intervals (s).
    pub mean_alert_s: f64,
    pub mean_drowsy_s: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            dt: 0.05,
            max_accel: 3.0,
            max_decel: 8.0,
            max_speed: 30.0,
            collision_distance: 0.5,
            delay: 0.5,
            horizon: 30.0,
            spacing_min: 20.0,
            spacing_max: 60.0,
            lead: LeadProfileConfig::default(),
            radar: RadarConfig::default(),
            reward: RewardWeights::default(),
            smooth_brake_threshold: 0.3,
            following_tolerance: 0.5,
            mean_alert_s: 8.0,
            mean_drowsy_s: 6.0,
        }
    }
}

fn whole_steps(what: &str, span: f64, dt: f64) -> Result<usize> {
    let ratio = span / dt;
    let n = ratio.round();
    if !(ratio.is_finite() && n >= 0.0 && (ratio - n).abs() < 1e-9 * n.max(1.0)) {
        return Err(Error::Config(format!("{what} {span} s is not a whole number of {dt} s steps")));
    }
    Ok(n as usize)
}

impl EnvConfig {
    pub fn horizon_steps(&self) -> usize {
        whole_steps("horizon", self.horizon, self.dt).unwrap_or(0)
    }

    pub fn delay_steps(&self) -> usize {
        whole_steps("delay", self.delay, self.dt).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("max_accel", self.max_accel),
            ("max_decel", self.max_decel),
            ("max_speed", self.max_speed),
            ("collision_distance", self.collision_distance),
            ("horizon", self.horizon),
            ("radar.max_range", self.radar.max_range),
            ("radar.dbscan.eps", self.radar.dbscan.eps),
            ("mean_alert_s", self.mean_alert_s),
            ("mean_drowsy_s", self.mean_drowsy_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("delay", self.delay),
            ("radar.rate_hz", self.radar.rate_hz),
            ("radar.sigma_depth", self.radar.sigma_depth),
            ("radar.sigma_velocity", self.radar.sigma_velocity),
            ("smooth_brake_threshold", self.smooth_brake_threshold),
            ("following_tolerance", self.following_tolerance),
            ("lead.accel", self.lead.accel),
            ("lead.decel", self.lead.decel),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        whole_steps("horizon", self.horizon, self.dt)?;
        whole_steps("delay", self.delay, self.dt)?;
        if self.horizon_steps() == 0 {
            return Err(Error::Config("horizon shorter than one step".into()));
        }
        if !(0.0..=1.0).contains(&self.radar.clutter_fraction) {
            return Err(Error::Config(format!(
                "radar.clutter_fraction {} outside [0, 1]",
                self.radar.clutter_fraction
            )));
        }
        if self.radar.dbscan.min_points == 0 {
            return Err(Error::Config("radar.dbscan.min_points must be at least 1".into()));
        }
        if self.spacing_min < self.collision_distance {
            return Err(Error::Config(format!(
                "initial spacing {} m below collision distance {} m",
                self.spacing_min, self.collision_distance
            )));
        }
        if !(self.spacing_min <= self.spacing_max && self.spacing_max.is_finite()) {
            return Err(Error::Config(format!(
                "empty spacing range [{}, {}]",
                self.spacing_min, self.spacing_max
            )));
        }
        let l = &self.lead;
        if l.min_segments == 0 || l.min_segments > l.max_segments {
            return Err(Error::Config(format!(
                "lead segment range [{}, {}] invalid",
                l.min_segments, l.max_segments
            )));
        }
        if !(l.min_speed >= 0.0 && l.min_speed <= l.max_speed && l.max_speed.is_finite()) {
            return Err(Error::Config(format!(
                "lead speed range [{}, {}] invalid",
                l.min_speed, l.max_speed
            )));
        }
        self.reward.validate(self.horizon)
    }
}

//! Per-step reward terms and braking-phase labels.

use std::fmt;

use crate::error::{Error, Result};

/// Weights of the five reward terms. `epsilon_r` is the smooth-braking bonus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardWeights {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub delta: f64,
    pub epsilon_r: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            alpha: 200.0,
            beta: 1.0,
            kappa: 2.0,
            delta: 1.0,
            epsilon_r: 0.5,
        }
    }
}

impl RewardWeights {
    /// All weights positive and the collision penalty above `horizon_s * delta`.
    pub fn validate(&self, horizon_s: f64) -> Result<()> {
        let w = [self.alpha, self.beta, self.kappa, self.delta, self.epsilon_r];
        if w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Config(format!("reward weights must be positive: {self:?}")));
        }
        if self.alpha <= horizon_s * self.delta {
            return Err(Error::Config(format!(
                "collision weight {} must exceed horizon {horizon_s} s x safe-distance weight {}",
                self.alpha, self.delta
            )));
        }
        Ok(())
    }
}

/// Two-second rule: `d_min = max(5, 2 v)`, `d_max = d_min + 10` (metres).
pub fn safe_distance_band(speed: f64) -> (f64, f64) {
    let d_min = (2.0 * speed).max(5.0);
    (d_min, d_min + 10.0)
}

/// What the reward sees of one transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardInputs {
    pub collided: bool,
    /// Applied brake pressure before and after the step.
    pub prev_brake: f64,
    pub brake: f64,
    /// Bumper-to-bumper gap after the step (m).
    pub gap: f64,
    /// Ego speed after the step (m/s).
    pub speed: f64,
    /// Ego speed before the step; braking only counts while moving.
    pub prev_speed: f64,
}

/// The five reward channels; [`RewardTerms::total`] is their sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RewardTerms {
    pub collision: f64,
    pub pressure_change: f64,
    pub unsafe_distance: f64,
    pub safe_distance: f64,
    pub smooth_braking: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.collision + self.pressure_change + self.unsafe_distance + self.safe_distance + self.smooth_braking
    }
}

pub fn reward_terms(w: &RewardWeights, smooth_threshold: f64, x: &RewardInputs) -> RewardTerms {
    let (d_min, d_max) = safe_distance_band(x.speed);
    let dp = (x.brake - x.prev_brake).abs();
    let braking = x.brake > 0.0 && x.prev_speed > 0.0;
    let ind = |c: bool| if c { 1.0 } else { 0.0 };
    RewardTerms {
        collision: -w.alpha * ind(x.collided),
        pressure_change: -w.beta * dp,
        unsafe_distance: -w.kappa * ind(x.gap < d_min),
        safe_distance: w.delta * ind(d_min <= x.gap && x.gap <= d_max),
        smooth_braking: w.epsilon_r * ind(braking && dp <= smooth_threshold),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Acceleration,
    Braking,
    Following,
    Transition,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::Acceleration, Phase::Braking, Phase::Following, Phase::Transition];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Acceleration => "acceleration",
            Phase::Braking => "braking",
            Phase::Following => "following",
            Phase::Transition => "transition",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Phase from the radar view. `v_rel` is the closing speed (positive when the
/// gap shrinks); `following_tol` bounds `|v_rel|` for the following phase.
pub fn label_phase(speed: f64, d_rel: Option<f64>, v_rel: f64, following_tol: f64) -> Phase {
    let Some(d) = d_rel else {
        return Phase::Transition;
    };
    let (d_min, d_max) = safe_distance_band(speed);
    if v_rel.abs() <= following_tol && (d_min..=d_max).contains(&d) {
        Phase::Following
    } else if v_rel < 0.0 {
        Phase::Acceleration
    } else if d < d_min && v_rel > 0.0 {
        Phase::Braking
    } else {
        Phase::Transition
    }
}

use std::fmt::Write as _;

use crate::textio::fmt_f64;

use super::{Action, Phase};

pub const STEP_LOG_HEADER: &str = "t,v,d_rel,v_rel,theta,action,throttle,brake,reward,phase,collided";

/// One row of the per-episode step log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub v: f64,
    pub d_rel: f64,
    pub v_rel: f64,
    pub theta: u8,
    pub action: Action,
    pub throttle: f64,
    pub brake: f64,
    pub reward: f64,
    pub phase: Phase,
    pub collided: bool,
}

pub fn step_log_csv(rows: &[StepRecord]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(STEP_LOG_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            fmt_f64(r.t),
            fmt_f64(r.v),
            fmt_f64(r.d_rel),
            fmt_f64(r.v_rel),
            r.theta,
            r.action.index(),
            fmt_f64(r.throttle),
            fmt_f64(r.brake),
            fmt_f64(r.reward),
            r.phase,
            u8::from(r.collided)
        );
    }
    out
}

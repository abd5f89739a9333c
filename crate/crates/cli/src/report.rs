//! Aggregates training and evaluation runs into plot-ready CSV series.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hrvbrake_core::agent::{Arm, EpisodeSummary, EvalSummary};
use hrvbrake_core::textio::{self, fmt_f64};
use hrvbrake_core::{Error, Result};

use crate::commands::Context;
use crate::config::RunConfig;
use crate::rundir::{manifest_value, read_manifest};

struct Table {
    path: PathBuf,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn parse_err(path: &Path, line: usize, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    }
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let text = textio::read_to_string(path)?;
        let mut lines = text.lines();
        let columns: Vec<String> = lines
            .next()
            .ok_or_else(|| parse_err(path, 1, "empty file".into()))?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, l) in lines.enumerate() {
            let cells: Vec<String> = l.split(',').map(str::to_string).collect();
            if cells.len() != columns.len() {
                return Err(parse_err(path, i + 2, format!("expected {} fields, got {}", columns.len(), cells.len())));
            }
            rows.push(cells);
        }
        Ok(Table {
            path: path.to_path_buf(),
            columns,
            rows,
        })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| parse_err(&self.path, 1, format!("missing column '{name}'")))
    }

    fn num(&self, row: usize, col: usize) -> Result<f64> {
        let s = &self.rows[row][col];
        s.parse().map_err(|_| parse_err(&self.path, row + 2, format!("not a number: {s:?}")))
    }
}

fn parse_arm(s: &str) -> Option<Arm> {
    match s {
        "alert" => Some(Arm::Alert),
        "drowsy" => Some(Arm::Drowsy),
        _ => None,
    }
}

fn read_episodes(path: &Path) -> Result<Vec<EpisodeSummary>> {
    let t = Table::read(path)?;
    let c = |n: &str| t.col(n);
    let (scenario, arm, seed, steps, collided, success) =
        (c("scenario")?, c("arm")?, c("seed")?, c("steps")?, c("collided")?, c("success")?);
    let (reward, dist, brake, ua, ud) = (
        c("cumulative_reward")?,
        c("mean_distance_m")?,
        c("mean_brake_pressure")?,
        c("unsafe_time_alert_s")?,
        c("unsafe_time_drowsy_s")?,
    );
    let phases = [c("acceleration_s")?, c("braking_s")?, c("following_s")?, c("transition_s")?];
    let mut out = Vec::with_capacity(t.rows.len());
    for (i, r) in t.rows.iter().enumerate() {
        let int = |j: usize| r[j].parse::<u64>().map_err(|_| parse_err(path, i + 2, format!("not an integer: {:?}", r[j])));
        let mut phase_s = [0.0; 4];
        for (p, &j) in phase_s.iter_mut().zip(&phases) {
            *p = t.num(i, j)?;
        }
        out.push(EpisodeSummary {
            scenario: int(scenario)? as usize,
            arm: parse_arm(&r[arm]).ok_or_else(|| parse_err(path, i + 2, format!("unknown arm {:?}", r[arm])))?,
            seed: int(seed)?,
            steps: int(steps)? as usize,
            collided: int(collided)? == 1,
            success: int(success)? == 1,
            cumulative_reward: t.num(i, reward)?,
            mean_distance: t.num(i, dist)?,
            mean_brake_pressure: t.num(i, brake)?,
            unsafe_time_alert_s: t.num(i, ua)?,
            unsafe_time_drowsy_s: t.num(i, ud)?,
            phase_s,
            log: Vec::new(),
        });
    }
    Ok(out)
}

/// Per-step accumulators across episodes of one arm.
#[derive(Clone, Default)]
struct StepAgg {
    t: f64,
    n: usize,
    speed_sum: f64,
    speed_sq: f64,
    d_min: f64,
    d_max: f64,
    throttle_sum: f64,
    brake_sum: f64,
}

fn add_log(series: &mut Vec<StepAgg>, path: &Path) -> Result<()> {
    let t = Table::read(path)?;
    let (ct, cv, cd, cth, cb) = (t.col("t")?, t.col("v")?, t.col("d_rel")?, t.col("throttle")?, t.col("brake")?);
    for i in 0..t.rows.len() {
        if series.len() <= i {
            series.push(StepAgg {
                t: t.num(i, ct)?,
                d_min: f64::INFINITY,
                d_max: f64::NEG_INFINITY,
                ..Default::default()
            });
        }
        let a = &mut series[i];
        let v = t.num(i, cv)?;
        let d = t.num(i, cd)?;
        a.n += 1;
        a.speed_sum += v;
        a.speed_sq += v * v;
        a.d_min = a.d_min.min(d);
        a.d_max = a.d_max.max(d);
        a.throttle_sum += t.num(i, cth)?;
        a.brake_sum += t.num(i, cb)?;
    }
    Ok(())
}

fn summary_lines(out: &mut String, prefix: &str, s: &EvalSummary) {
    let _ = writeln!(out, "{prefix}episodes={}", s.episodes);
    let _ = writeln!(out, "{prefix}success_rate={}", fmt_f64(s.success_rate));
    let _ = writeln!(out, "{prefix}collision_rate={}", fmt_f64(s.collision_rate));
    let _ = writeln!(out, "{prefix}mean_reward={}", fmt_f64(s.mean_reward));
    let _ = writeln!(out, "{prefix}unsafe_time_drowsy_s={}", fmt_f64(s.unsafe_time_drowsy_s));
    let _ = writeln!(out, "{prefix}unsafe_time_alert_s={}", fmt_f64(s.unsafe_time_alert_s));
    let _ = writeln!(out, "{prefix}mean_distance_m={}", fmt_f64(s.mean_distance));
    let _ = writeln!(out, "{prefix}mean_brake_pressure={}", fmt_f64(s.mean_brake_pressure));
}

pub fn report(ctx: &Context, cfg: &RunConfig, runs: &[PathBuf]) -> Result<()> {
    let mut run = ctx.open_run("report", cfg)?;
    let mut training = Vec::new();
    let mut evals = Vec::new();
    for r in runs {
        let m = read_manifest(r)?;
        if manifest_value(&m, "status") != Some("complete") {
            return Err(Error::Io {
                path: r.clone(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, "run is not complete"),
            });
        }
        match manifest_value(&m, "command") {
            Some("train-agent") => {
                let f = r.join("rewards.csv");
                run.add_input(&format!("run{}.rewards", training.len() + evals.len()), &f)?;
                let variant = manifest_value(&m, "config.agent.variant").unwrap_or("?").to_string();
                let seed = manifest_value(&m, "seed").unwrap_or("?").to_string();
                training.push((variant, seed, f));
            }
            Some("eval-paired") => {
                let f = r.join("episodes.csv");
                run.add_input(&format!("run{}.episodes", training.len() + evals.len()), &f)?;
                evals.push(r.clone());
            }
            other => {
                return Err(Error::Config(format!(
                    "{}: report takes train-agent and eval-paired runs, not {}",
                    r.display(),
                    other.unwrap_or("an unknown command")
                )))
            }
        }
    }
    run.write_manifest()?;

    if !training.is_empty() {
        training.sort();
        let mut curves = String::from("variant,seed,episode,cumulative_reward,moving_avg_10\n");
        let mut finals = String::from("variant,seed,final_moving_avg_10\n");
        for (variant, seed, f) in &training {
            let t = Table::read(f)?;
            let (ce, cr, cm) = (t.col("episode")?, t.col("cumulative_reward")?, t.col("moving_avg_10")?);
            for row in &t.rows {
                let _ = writeln!(curves, "{variant},{seed},{},{},{}", row[ce], row[cr], row[cm]);
            }
            if let Some(last) = t.rows.last() {
                let _ = writeln!(finals, "{variant},{seed},{}", last[cm]);
            }
        }
        run.write("reward_curves.csv", &curves)?;
        run.write("reward_final.csv", &finals)?;
    }

    if !evals.is_empty() {
        let mut episodes = Vec::new();
        let mut series: BTreeMap<&'static str, Vec<StepAgg>> = BTreeMap::new();
        for r in &evals {
            let eps = read_episodes(&r.join("episodes.csv"))?;
            for e in &eps {
                add_log(series.entry(e.arm.as_str()).or_default(), &r.join("logs").join(e.log_name()))?;
            }
            episodes.extend(eps);
        }
        let mut s = String::from("arm,t,episodes,speed_mean,speed_sd,distance_min,distance_max,throttle_mean,brake_mean\n");
        for (arm, steps) in &series {
            for a in steps {
                let n = a.n as f64;
                let mean = a.speed_sum / n;
                let sd = (a.speed_sq / n - mean * mean).max(0.0).sqrt();
                let _ = writeln!(
                    s,
                    "{arm},{},{},{},{},{},{},{},{}",
                    fmt_f64(a.t),
                    a.n,
                    fmt_f64(mean),
                    fmt_f64(sd),
                    fmt_f64(a.d_min),
                    fmt_f64(a.d_max),
                    fmt_f64(a.throttle_sum / n),
                    fmt_f64(a.brake_sum / n)
                );
            }
        }
        run.write("eval_series.csv", &s)?;
        let mut summary = String::new();
        summary_lines(&mut summary, "", &EvalSummary::of(&episodes));
        for arm in [Arm::Alert, Arm::Drowsy] {
            let prefix = format!("{}.", arm.as_str());
            summary_lines(&mut summary, &prefix, &EvalSummary::of(episodes.iter().filter(|e| e.arm == arm)));
        }
        run.write("summary.txt", &summary)?;
    }
    run.finish()
}

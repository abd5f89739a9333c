use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hrvbrake_core::agent::{self, load_checkpoint, save_checkpoint, DqnAgent, AGENT_FILE, POLICY_FILE, TARGET_FILE};
use hrvbrake_core::capsule::{build_dataset, dataset_to_text, enumerate_configs, extract_windows, CapsuleConfig};
use hrvbrake_core::detector::{self, cross_validate, sliding_predict, CvReport};
use hrvbrake_core::ecg::{self, synth, EcgRecording};
use hrvbrake_core::env::step_log_csv;
use hrvbrake_core::textio::fmt_f64;
use hrvbrake_core::{Error, Result, Scalar};
use rayon::prelude::*;

use crate::config::{Precision, RunConfig};
use crate::rundir::RunDirectory;
use crate::RecordingArgs;

pub struct Context {
    pub seed: u64,
    pub out: PathBuf,
    pub config_file: Option<PathBuf>,
}

impl Context {
    pub fn open_run(&self, command: &str, cfg: &RunConfig) -> Result<RunDirectory> {
        let mut run = RunDirectory::create(&self.out, command, self.seed, cfg.snapshot())?;
        if let Some(p) = &self.config_file {
            run.add_input("config", p)?;
        }
        Ok(run)
    }
}

pub const BENCHMARK_HEADER: &str = "label,C,N,M,fold,accuracy,f1";
pub const BENCHMARK_SUMMARY_HEADER: &str =
    "rank,label,C,N,M,sequences,mean_accuracy,mean_f1,holdout_accuracy,holdout_f1,status";

fn load_input(input: &RecordingArgs, cfg: &RunConfig, seed: u64, run: &mut RunDirectory) -> Result<EcgRecording> {
    if input.synthetic {
        let s = &cfg.synth;
        run.add_input_note(
            "recording",
            &format!(
                "synthetic events={} spacing_s={} lead_s={} sample_rate_hz={} seed={seed}",
                s.events, s.spacing_s, s.lead_s, s.sample_rate_hz
            ),
        );
        return synth::drowsy_recording(s.events, s.spacing_s, s.lead_s, s.sample_rate_hz, seed);
    }
    let missing = |what: &str| Error::Config(format!("--{what} is required"));
    let signal = input.ecg.as_deref().ok_or_else(|| missing("ecg"))?;
    let events = input.events.as_deref().ok_or_else(|| missing("events"))?;
    let meta = input.meta.as_deref().ok_or_else(|| missing("meta"))?;
    run.add_input("ecg", signal)?;
    run.add_input("events", events)?;
    run.add_input("meta", meta)?;
    ecg::load_with_meta(signal, Some(events), meta)
}

fn m_str(c: &CapsuleConfig) -> String {
    format!("{:.2}", c.m())
}

pub fn benchmark_capsules(ctx: &Context, cfg: &RunConfig, input: &RecordingArgs, limit: Option<usize>) -> Result<()> {
    let mut run = ctx.open_run("benchmark-capsules", cfg)?;
    let rec = load_input(input, cfg, ctx.seed, &mut run)?;
    run.write_manifest()?;
    let fs = rec.sample_rate_hz();
    let params = cfg.window_params(fs);
    let rr = ecg::rr_series(&rec)?;
    let windows = extract_windows(&rec, &params)?;
    let mut configs = enumerate_configs(params.length_samples, fs, cfg.n_range, cfg.c_range_s);
    if let Some(k) = limit {
        configs.truncate(k);
    }
    eprintln!("benchmarking {} configurations on {} windows", configs.len(), windows.len());

    let outcomes: Vec<(CapsuleConfig, Result<(usize, CvReport)>)> = configs
        .par_iter()
        .map(|c| {
            let res = build_dataset(&rr, &windows, c, fs).and_then(|ds| {
                let report = match cfg.precision {
                    Precision::F32 => cross_validate::<f32>(&ds, &cfg.detector, cfg.folds, ctx.seed),
                    Precision::F64 => cross_validate::<f64>(&ds, &cfg.detector, cfg.folds, ctx.seed),
                }?;
                Ok((ds.len(), report))
            });
            (*c, res)
        })
        .collect();

    let mut done = Vec::new();
    let mut failed = Vec::new();
    for (c, res) in outcomes {
        match res {
            Ok(r) => done.push((c, r)),
            Err(e @ Error::Divergence(_)) => return Err(e),
            Err(e) => failed.push((c, e.to_string())),
        }
    }
    done.sort_by(|a, b| b.1 .1.mean_accuracy.total_cmp(&a.1 .1.mean_accuracy).then_with(|| a.0.label().cmp(&b.0.label())));

    let mut rows = format!("{BENCHMARK_HEADER}\n");
    let mut summary = format!("{BENCHMARK_SUMMARY_HEADER}\n");
    for (rank, (c, (n_seq, r))) in done.iter().enumerate() {
        for f in &r.folds {
            let _ = writeln!(rows, "{},{},{},{},{},{},{}", c.label(), c.c, c.n, m_str(c), f.fold, fmt_f64(f.accuracy), fmt_f64(f.f1));
        }
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{n_seq},{},{},{},{},ok",
            rank + 1,
            c.label(),
            c.c,
            c.n,
            m_str(c),
            fmt_f64(r.mean_accuracy),
            fmt_f64(r.mean_f1),
            fmt_f64(r.holdout.accuracy()),
            fmt_f64(r.holdout.f1())
        );
    }
    for (c, why) in &failed {
        let why = why.replace(',', ";");
        let _ = writeln!(summary, ",{},{},{},{},0,,,,,skipped: {why}", c.label(), c.c, c.n, m_str(c));
    }
    run.write("benchmark.csv", &rows)?;
    run.write("summary.csv", &summary)?;
    run.finish()
}

fn train_detector_as<T: Scalar>(ctx: &Context, cfg: &RunConfig, rec: &EcgRecording, run: &mut RunDirectory) -> Result<()> {
    let fs = rec.sample_rate_hz();
    let params = cfg.window_params(fs);
    let capsule = cfg.capsule_config()?;
    if !capsule.is_valid_for(params.length_samples) {
        return Err(Error::Config(format!("{} does not tile a {}-sample window", capsule.label(), params.length_samples)));
    }
    let rr = ecg::rr_series(rec)?;
    let windows = extract_windows(rec, &params)?;
    let dataset = build_dataset(&rr, &windows, &capsule, fs)?;
    eprintln!("{} sequences for {}", dataset.len(), capsule.label());
    run.write("dataset.txt", &dataset_to_text(&dataset))?;

    let cv = cross_validate::<T>(&dataset, &cfg.detector, cfg.folds, ctx.seed)?;
    run.write("cv.csv", &cv.to_csv())?;
    run.write("holdout_confusion.csv", &cv.holdout.confusion_csv())?;

    let refs: Vec<_> = dataset.iter().collect();
    let det = detector::train_detector::<T>(&refs, &cfg.detector, ctx.seed)?;
    let mut hist = String::from("epoch,train_loss,val_loss,val_f1\n");
    for h in &det.history {
        let _ = writeln!(hist, "{},{},{},{}", h.epoch, fmt_f64(h.train_loss), fmt_f64(h.val_loss), fmt_f64(h.val_f1));
    }
    run.write("history.csv", &hist)?;
    det.save(&run.path().join("detector"))?;
    run.record_dir("detector")?;

    let preds = sliding_predict(rec, &det, cfg.window_overlap)?;
    let mut p = String::from("timestamp_s,probability,theta,valid\n");
    for x in &preds {
        let prob = if x.valid { fmt_f64(x.probability) } else { String::new() };
        let _ = writeln!(p, "{},{prob},{},{}", fmt_f64(x.timestamp_s), x.theta, u8::from(x.valid));
    }
    run.write("predictions.csv", &p)?;
    eprintln!(
        "cv accuracy {:.4} f1 {:.4}; hold-out accuracy {:.4}",
        cv.mean_accuracy,
        cv.mean_f1,
        cv.holdout.accuracy()
    );
    Ok(())
}

pub fn train_detector(ctx: &Context, cfg: &RunConfig, input: &RecordingArgs) -> Result<()> {
    let mut run = ctx.open_run("train-detector", cfg)?;
    let rec = load_input(input, cfg, ctx.seed, &mut run)?;
    run.write_manifest()?;
    match cfg.precision {
        Precision::F32 => train_detector_as::<f32>(ctx, cfg, &rec, &mut run)?,
        Precision::F64 => train_detector_as::<f64>(ctx, cfg, &rec, &mut run)?,
    }
    run.finish()
}

fn train_agent_as<T: Scalar>(ctx: &Context, cfg: &RunConfig, run: &mut RunDirectory) -> Result<()> {
    let (agent, report) = agent::train::<T>(&cfg.env, &cfg.agent, cfg.variant, cfg.episodes, ctx.seed, |e| {
        if (e.episode + 1) % 50 == 0 {
            eprintln!("episode {} reward {:.1} moving average {:.1}", e.episode + 1, e.cumulative_reward, e.moving_avg_10);
        }
    })?;
    run.write("rewards.csv", &report.to_csv())?;
    save_checkpoint(&agent, &run.path().join("checkpoint"))?;
    run.record_dir("checkpoint")?;
    let collisions = report.episodes.iter().filter(|e| e.collided).count();
    let mut s = String::new();
    let _ = writeln!(s, "variant={}", cfg.variant);
    let _ = writeln!(s, "episodes={}", report.episodes.len());
    let _ = writeln!(s, "final_moving_avg_10={}", fmt_f64(report.final_moving_average().unwrap_or(0.0)));
    let _ = writeln!(s, "training_collisions={collisions}");
    let _ = writeln!(s, "gradient_steps={}", report.losses.len());
    run.write("summary.txt", &s)?;
    Ok(())
}

pub fn train_agent(ctx: &Context, cfg: &RunConfig) -> Result<()> {
    let mut run = ctx.open_run("train-agent", cfg)?;
    run.write_manifest()?;
    match cfg.precision {
        Precision::F32 => train_agent_as::<f32>(ctx, cfg, &mut run)?,
        Precision::F64 => train_agent_as::<f64>(ctx, cfg, &mut run)?,
    }
    run.finish()
}

/// The checkpoint directory itself, or the one inside a train-agent run.
fn checkpoint_dir(path: &Path) -> Result<PathBuf> {
    for p in [path.to_path_buf(), path.join("checkpoint")] {
        if p.join(AGENT_FILE).is_file() {
            return Ok(p);
        }
    }
    Err(Error::Io {
        path: path.join(AGENT_FILE),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "no agent checkpoint found"),
    })
}

fn eval_as<T: Scalar>(ctx: &Context, cfg: &RunConfig, dir: &Path, run: &mut RunDirectory) -> Result<()> {
    let agent: DqnAgent<T> = load_checkpoint(dir)?;
    let report = agent::evaluate_paired(&agent, &cfg.env, cfg.eval_episodes, ctx.seed)?;
    for e in &report.episodes {
        run.write(&format!("logs/{}", e.log_name()), &step_log_csv(&e.log))?;
    }
    run.write("episodes.csv", &report.episodes_csv())?;
    run.write("summary.csv", &report.summary_csv())?;
    let all = report.summary(None);
    eprintln!(
        "{} episodes: success {:.3} collisions {:.3} unsafe alert {:.2}s drowsy {:.2}s",
        all.episodes, all.success_rate, all.collision_rate, all.unsafe_time_alert_s, all.unsafe_time_drowsy_s
    );
    Ok(())
}

pub fn eval_paired(ctx: &Context, cfg: &RunConfig, checkpoint: &Path) -> Result<()> {
    let dir = checkpoint_dir(checkpoint)?;
    let mut run = ctx.open_run("eval-paired", cfg)?;
    for f in [AGENT_FILE, POLICY_FILE, TARGET_FILE] {
        run.add_input(f, &dir.join(f))?;
    }
    run.write_manifest()?;
    match cfg.precision {
        Precision::F32 => eval_as::<f32>(ctx, cfg, &dir, &mut run)?,
        Precision::F64 => eval_as::<f64>(ctx, cfg, &dir, &mut run)?,
    }
    run.finish()
}

//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion.
//!
//! Environment:
//! - `HRVBRAKE_DDDB_DIR`: directory of `<id>.ecg`, `<id>.events`, `<id>.meta` recordings
//!   for the real-data detector check (skipped when unset).
//! - `HRVBRAKE_SKIP_TRAINING=1`: skip the 12-run agent training criterion.
//! - `HRVBRAKE_ACCEPTANCE_STRICT=1`: exit non-zero when any criterion fails.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use hrvbrake_core::agent::{
    self, bellman_target, dueling_combine, evaluate_paired, moving_average, AgentConfig, Arm, DqnAgent, QNetShape,
    QNetwork, Transition, Variant,
};
use hrvbrake_core::capsule::{
    build_dataset, enumerate_configs, extract_windows, hrv_features, pnn50, rmssd, sdnn, slice_capsules, tachogram_psd,
    CapsuleConfig, CapsuleSequence, Window, WindowKind, WindowParams, C_RANGE_S, N_RANGE,
};
use hrvbrake_core::detector::{cross_validate, separable_fixture, DetectorConfig};
use hrvbrake_core::ecg::{self, synth, EcgRecording};
use hrvbrake_core::env::{
    reward_terms, safe_distance_band, Action, DrowsyMode, EnvConfig, LongitudinalEnv, Observation, RewardInputs,
    RewardWeights, Scenario,
};
use hrvbrake_core::nn::{Activation, Dense, Matrix, Model, RecurrentCell};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

const L: usize = 15_360;
const FS: u32 = 128;

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let configs = enumerate_configs(L, FS, N_RANGE, C_RANGE_S);
    let secs = t.elapsed().as_secs_f64();
    let want = [("C6400_N6_M72", 0.72), ("C10240_N2_M50", 0.50), ("C5120_N6_M60", 0.60)];
    let mut missing = Vec::new();
    for (label, m) in want {
        match configs.iter().find(|c| c.label() == label) {
            Some(c) if c.m() == m => {}
            _ => missing.push(label),
        }
    }
    verdict(
        missing.is_empty() && secs < 1.0,
        format!("{} configs, expected labels missing {missing:?}, {secs:.3}s (< 1 s)", configs.len()),
    )
}

/// Whole-percent overlaps found by integer arithmetic alone.
fn brute_force_labels() -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for secs in C_RANGE_S.0..=C_RANGE_S.1 {
        let c = secs as u64 * FS as u64;
        for n in N_RANGE.0 as u64..=N_RANGE.1 as u64 {
            if c * n < L as u64 {
                continue;
            }
            let num = 100 * (c * n - L as u64);
            let den = c * (n - 1);
            if !num.is_multiple_of(den) {
                continue;
            }
            let m = num / den;
            if m == 0 || m >= 100 {
                continue;
            }
            // round-half-up start of the last capsule
            let last = (2 * (n - 1) * c * (100 - m) + 100) / 200;
            if (last + c).abs_diff(L as u64) <= 1 {
                out.insert(format!("C{c}_N{n}_M{m}"));
            }
        }
    }
    out
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let configs = enumerate_configs(L, FS, N_RANGE, C_RANGE_S);
    let w = Window {
        kind: WindowKind::Dew,
        start_sample: 0,
        length_samples: L,
        pair: 0,
    };
    let mut bad = Vec::new();
    for c in &configs {
        match slice_capsules(&w, c) {
            Ok(r) => {
                let covered = r.len() == c.n
                    && r[0].start == 0
                    && r.windows(2).all(|p| p[1].start <= p[0].end && p[1].start > p[0].start)
                    && r.last().is_some_and(|x| x.end.abs_diff(L) <= 1);
                if !covered {
                    bad.push(c.label());
                }
            }
            Err(_) => bad.push(c.label()),
        }
    }
    let enumerated: BTreeSet<String> = configs.iter().map(CapsuleConfig::label).collect();
    let brute = brute_force_labels();
    let secs = t.elapsed().as_secs_f64();
    verdict(
        bad.is_empty() && enumerated == brute && secs < 10.0,
        format!(
            "{} enumerated, {} brute force, {} symmetric difference, {} non-covering, {secs:.3}s (< 10 s)",
            enumerated.len(),
            brute.len(),
            enumerated.symmetric_difference(&brute).count(),
            bad.len()
        ),
    )
}

fn brute_sdnn(x: &[f64]) -> f64 {
    // mean squared pairwise difference is twice the population variance
    let n = x.len() as f64;
    let mut s = 0.0;
    for a in x {
        for b in x {
            s += (a - b) * (a - b);
        }
    }
    (s / (2.0 * n * n)).sqrt()
}

fn brute_rmssd(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 1..x.len() {
        let d = x[i] - x[i - 1];
        s += d * d;
    }
    (s / (x.len() - 1) as f64).sqrt()
}

fn brute_pnn50(x: &[f64]) -> f64 {
    let mut k = 0usize;
    for i in 1..x.len() {
        let d = x[i] - x[i - 1];
        if !(-50.0..=50.0).contains(&d) {
            k += 1;
        }
    }
    k as f64 * 100.0 / (x.len() - 1) as f64
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut band_violations = 0;
    let mut undefined = 0;
    for trial in 0..1000 {
        let n = rng.gen_range(30..=300);
        let mean = rng.gen_range(600.0..1100.0);
        let sd = rng.gen_range(5.0..80.0);
        let mut x: Vec<f64> = (0..n).map(|_| mean + sd * (rng.gen::<f64>() * 2.0 - 1.0) * 1.7).collect();
        if trial % 2 == 0 {
            // whole milliseconds hit the 50 ms boundary exactly now and then
            x.iter_mut().for_each(|v| *v = v.round());
        }
        worst = worst
            .max(rel(sdnn(&x), brute_sdnn(&x)))
            .max(rel(rmssd(&x), brute_rmssd(&x)))
            .max(rel(pnn50(&x), brute_pnn50(&x)));
        let (freqs, psd) = tachogram_psd(&x);
        let df = freqs[1] - freqs[0];
        let total: f64 = psd.iter().map(|p| p * df).sum();
        match hrv_features(&x) {
            Ok(f) => {
                if f.lf_power + f.hf_power > total * (1.0 + 1e-12) {
                    band_violations += 1;
                }
            }
            Err(_) => undefined += 1,
        }
    }
    verdict(
        worst < 1e-9 && band_violations == 0 && undefined == 0,
        format!("max relative error {worst:.2e} (< 1e-9), LF+HF > total in {band_violations}/1000, {undefined} featurization errors"),
    )
}

fn criterion_4() -> Outcome {
    let (mut truth, mut found) = (0usize, 0usize);
    for seed in 1..=5 {
        let s = synth::synthesize(&synth::SynthSpec {
            duration_s: 300.0,
            snr_db: Some(10.0),
            seed,
            ..Default::default()
        });
        let rec = EcgRecording::new(s.samples.clone(), 128, 16, Vec::new()).expect("valid recording");
        let Ok(rr) = ecg::rr_series(&rec) else {
            return Outcome::Fail(format!("detection failed on seed {seed}"));
        };
        for &p in &s.peak_indices {
            truth += 1;
            let near = rr.peak_indices.iter().any(|&q| (q.abs_diff(p) as f64) * 1000.0 / 128.0 <= 20.0);
            found += usize::from(near);
        }
    }
    let rate = found as f64 / truth as f64;
    verdict(rate >= 0.99, format!("{found}/{truth} peaks within 20 ms = {:.4} (>= 0.99), SNR 10 dB", rate))
}

fn fd_check<M: Model<f64>>(model: &mut M, analytic: &[Matrix<f64>], objective: &dyn Fn(&M) -> f64) -> f64 {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for ti in 0..analytic.len() {
        for j in 0..analytic[ti].as_slice().len() {
            let orig = model.tensors()[ti].as_slice()[j];
            model.tensors_mut()[ti].as_mut_slice()[j] = orig + h;
            let up = objective(model);
            model.tensors_mut()[ti].as_mut_slice()[j] = orig - h;
            let down = objective(model);
            model.tensors_mut()[ti].as_mut_slice()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[ti].as_slice()[j];
            worst = worst.max((a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-7));
        }
    }
    worst
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape")
}

struct DenseModel(Dense<f64>);

impl Model<f64> for DenseModel {
    fn tensors(&self) -> Vec<&Matrix<f64>> {
        self.0.tensors().to_vec()
    }
    fn tensors_mut(&mut self) -> Vec<&mut Matrix<f64>> {
        self.0.tensors_mut().into_iter().collect()
    }
    fn tensor_names(&self) -> Vec<String> {
        vec!["w".into(), "b".into()]
    }
}

struct CellModel(RecurrentCell<f64>);

impl Model<f64> for CellModel {
    fn tensors(&self) -> Vec<&Matrix<f64>> {
        self.0.tensors().to_vec()
    }
    fn tensors_mut(&mut self) -> Vec<&mut Matrix<f64>> {
        self.0.tensors_mut().into_iter().collect()
    }
    fn tensor_names(&self) -> Vec<String> {
        vec!["wx".into(), "wh".into(), "b".into()]
    }
}

fn dot(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut dense_w, mut rnn_w, mut duel_w): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..5 {
        let mut m = DenseModel(Dense::new(4, 3, Activation::Tanh, &mut rng));
        let x = random_matrix(5, 4, &mut rng);
        let w = random_matrix(5, 3, &mut rng);
        let out = m.0.forward(&x).expect("forward");
        let mut grads = m.zero_grads();
        m.0.backward(&x, &out, &w, &mut grads);
        dense_w = dense_w.max(fd_check(&mut m, &grads, &|m: &DenseModel| dot(&m.0.forward(&x).expect("forward"), &w)));

        let mut c = CellModel(RecurrentCell::new(3, 4, &mut rng));
        let steps: Vec<Matrix<f64>> = (0..5).map(|_| random_matrix(2, 3, &mut rng)).collect();
        let ws: Vec<Matrix<f64>> = (0..5).map(|_| random_matrix(2, 4, &mut rng)).collect();
        let trace = c.0.forward_trace(&steps).expect("forward");
        let mut grads = c.zero_grads();
        c.0.backward(&trace, &ws, &mut grads);
        let objective = |c: &CellModel| -> f64 {
            let tr = c.0.forward_trace(&steps).expect("forward");
            tr.hidden[1..].iter().zip(&ws).map(|(h, w)| dot(h, w)).sum()
        };
        rnn_w = rnn_w.max(fd_check(&mut c, &grads, &objective));

        let shape = QNetShape {
            inputs: 5,
            trunk: vec![8, 6],
            stream: vec![5, 4],
        };
        let mut net: QNetwork<f64> = QNetwork::new(Variant::DoubleDuelingDqn, &shape, &mut rng);
        // zero biases behind a fully dead layer put pre-activations exactly on the ReLU kink
        for t in net.tensors_mut() {
            t.as_mut_slice().iter_mut().for_each(|v| *v += rng.gen_range(-0.1..0.1));
        }
        let x = random_matrix(4, 5, &mut rng);
        let w = random_matrix(4, 6, &mut rng);
        let trace = net.forward_trace(&x).expect("forward");
        let grads = net.backward(&trace, &w);
        duel_w = duel_w.max(fd_check(&mut net, &grads, &|n: &QNetwork<f64>| dot(&n.forward(&x).expect("forward"), &w)));
    }
    verdict(
        dense_w < 1e-4 && rnn_w < 1e-4 && duel_w < 1e-4,
        format!("max relative error dense {dense_w:.1e}, recurrent {rnn_w:.1e}, dueling {duel_w:.1e} (< 1e-4)"),
    )
}

fn observation(rng: &mut ChaCha8Rng) -> Observation {
    Observation {
        speed: rng.gen_range(0.0..30.0),
        prev_action: Action::new(rng.gen_range(0..6)).expect("action"),
        d_rel: rng.gen_range(0.0..100.0),
        v_rel: rng.gen_range(-10.0..10.0),
        theta: rng.gen_range(0..2),
        detected: true,
    }
}

fn criterion_7() -> Outcome {
    let mut notes = Vec::new();
    let q_t: [f64; 3] = [1.0, 5.0, 3.0];
    let q_p = [4.0, 0.0, 9.0];
    let hand = [
        (bellman_target(false, 0.9, 1.0, false, &q_p, &q_t), 5.5),
        (bellman_target(true, 0.9, 1.0, false, &q_p, &q_t), 3.7),
        (bellman_target(true, 0.9, -2.0, true, &q_p, &q_t), -2.0),
    ];
    let hand_ok = hand.iter().all(|(got, want)| (got - want).abs() < 1e-12);
    notes.push(format!("scalar oracles {}", if hand_ok { "match" } else { "differ" }));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let shape = QNetShape {
        inputs: 5,
        trunk: vec![6],
        stream: vec![4],
    };
    let cfg = AgentConfig {
        shape: shape.clone(),
        ..Default::default()
    };
    let mut net_ok = true;
    for variant in Variant::ALL {
        let mut agent: DqnAgent<f64> = DqnAgent::new(variant, cfg.clone(), &mut rng).expect("agent");
        *agent.target_mut() = QNetwork::new(variant, &shape, &mut rng);
        let batch: Vec<Transition> = (0..8)
            .map(|i| Transition {
                s: observation(&mut rng),
                a: Action::COAST,
                r: rng.gen_range(-2.0..2.0),
                s_next: observation(&mut rng),
                done: i == 3,
            })
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let got = agent.targets(&refs).expect("targets");
        for (t, g) in batch.iter().zip(got) {
            let x = Matrix::row_vector(&t.s_next.features());
            let qt = agent.target().forward(&x).expect("forward");
            let qp = agent.policy().forward(&x).expect("forward");
            let want = if t.done {
                t.r
            } else if variant.is_double() {
                let a = agent::argmax(qp.as_slice());
                t.r + 0.9 * qt.as_slice()[a]
            } else {
                t.r + 0.9 * qt.as_slice().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            };
            net_ok &= (g - want).abs() < 1e-12;
        }
    }
    notes.push(format!("fixed-net targets {}", if net_ok { "match" } else { "differ" }));

    let mut violations = 0;
    let mut worst_identity: f64 = 0.0;
    let small = QNetShape {
        inputs: 5,
        trunk: vec![4],
        stream: vec![3],
    };
    for _ in 0..10_000 {
        let policy: QNetwork<f64> = QNetwork::new(Variant::DoubleDuelingDqn, &small, &mut rng);
        let target: QNetwork<f64> = QNetwork::new(Variant::DoubleDuelingDqn, &small, &mut rng);
        let x = random_matrix(4, 5, &mut rng);
        let qp = policy.forward(&x).expect("forward");
        let qt = target.forward(&x).expect("forward");
        let gamma = rng.gen_range(0.0..=1.0);
        let r = rng.gen_range(-5.0..5.0);
        for i in 0..4 {
            let d = bellman_target(true, gamma, r, false, qp.row(i), qt.row(i));
            let v = bellman_target(false, gamma, r, false, qp.row(i), qt.row(i));
            violations += usize::from(d > v);
        }
        let (value, adv) = policy.value_and_advantage(&x).expect("forward").expect("dueling head");
        let combined = dueling_combine(&value, &adv);
        for i in 0..4 {
            let mean_q = qp.row(i).iter().sum::<f64>() / qp.cols() as f64;
            worst_identity = worst_identity
                .max((mean_q - value.row(i)[0]).abs())
                .max(qp.row(i).iter().zip(combined.row(i)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
    }
    notes.push(format!("double > vanilla in {violations}/40000 rows"));
    notes.push(format!("dueling identity residual {worst_identity:.1e} (<= 1e-9)"));
    verdict(hand_ok && net_ok && violations == 0 && worst_identity <= 1e-9, notes.join(", "))
}

fn actuator_trace(mode: DrowsyMode, script: &[Action]) -> Vec<(f64, f64)> {
    let cfg = EnvConfig::default();
    let mut env = LongitudinalEnv::new(cfg).expect("env");
    env.reset_with(Scenario::sample(&cfg, 8), mode).expect("reset");
    let mut out = Vec::new();
    for &a in script {
        let r = env.step(a).expect("step");
        out.push((r.info.actuators.throttle, r.info.actuators.brake));
        if r.done {
            break;
        }
    }
    out
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_mismatch = 0usize;
    let mut compared = 0usize;
    for _ in 0..20 {
        let script: Vec<Action> = (0..200)
            .map(|i| match (i / 15) % 4 {
                0 => Action::ACCELERATE,
                1 => Action::COAST,
                2 => Action::new(rng.gen_range(0..4)).expect("action"),
                _ => Action::new(rng.gen_range(0..6)).expect("action"),
            })
            .collect();
        let alert = actuator_trace(DrowsyMode::Off, &script);
        let drowsy = actuator_trace(DrowsyMode::Always, &script);
        let delay = 10;
        let n = drowsy.len().min(alert.len() + delay);
        let mut mismatch = 0;
        for t in 0..n {
            let want = if t < delay { (0.0, 0.0) } else { alert[t - delay] };
            mismatch += usize::from(drowsy[t] != want);
        }
        compared += n;
        worst_mismatch = worst_mismatch.max(mismatch);
    }
    verdict(
        worst_mismatch == 0 && compared > 0,
        format!("20 scripted episodes, {compared} steps compared, theta=1 trace equals theta=0 trace delayed by 10 steps (0.5 s) in all"),
    )
}

fn criterion_10() -> Outcome {
    let w = RewardWeights::default();
    let smooth = EnvConfig::default().smooth_brake_threshold;
    let levels = [0.0, 0.2, 0.4, 0.7, 1.0];
    let mut worst_collision = f64::NEG_INFINITY;
    let mut best_other = f64::INFINITY;
    for &collided in &[true, false] {
        for &pb in &levels {
            for &b in &levels {
                for gi in 0..=60 {
                    let gap = gi as f64 * 2.0 + if collided { 0.0 } else { 0.6 };
                    for si in 0..=12 {
                        let speed = si as f64 * 2.5;
                        for &dv in &[-3.0, 0.0, 3.0] {
                            let x = RewardInputs {
                                collided,
                                prev_brake: pb,
                                brake: b,
                                gap: if collided { gap.min(0.5) } else { gap },
                                speed,
                                prev_speed: (speed + dv).max(0.0),
                            };
                            let r = reward_terms(&w, smooth, &x).total();
                            if collided {
                                worst_collision = worst_collision.max(r);
                            } else {
                                best_other = best_other.min(r);
                            }
                        }
                    }
                }
            }
        }
    }
    let min_ok = worst_collision < best_other;
    let dmin: Vec<f64> = [0.0, 2.5, 10.0, 30.0].iter().map(|&v| safe_distance_band(v).0).collect();
    let dmin_ok = dmin == [5.0, 5.0, 20.0, 60.0];

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let series: Vec<f64> = (0..500).map(|_| rng.gen_range(-300.0..200.0)).collect();
    let brute = |v: &[f64]| -> Vec<f64> {
        (0..v.len())
            .map(|i| {
                let lo = i.saturating_sub(9);
                let mut s = 0.0;
                for x in &v[lo..=i] {
                    s += x;
                }
                s / (i - lo + 1) as f64
            })
            .collect()
    };
    let mut ma_ok = moving_average(&series, 10) == brute(&series);
    let cfg = AgentConfig {
        warmup: 200,
        guided_episodes: 2,
        shape: QNetShape {
            inputs: 5,
            trunk: vec![8],
            stream: vec![4],
        },
        ..Default::default()
    };
    let env = EnvConfig {
        horizon: 5.0,
        ..Default::default()
    };
    let (_, report) = agent::train::<f64>(&env, &cfg, Variant::DoubleDuelingDqn, 25, 1, |_| {}).expect("train");
    let rewards: Vec<f64> = report.episodes.iter().map(|e| e.cumulative_reward).collect();
    let logged: Vec<f64> = report.episodes.iter().map(|e| e.moving_avg_10).collect();
    ma_ok &= logged == brute(&rewards);
    verdict(
        min_ok && dmin_ok && ma_ok,
        format!(
            "max collision reward {worst_collision:.2} < min other reward {best_other:.2}; d_min at 0/2.5/10/30 m/s = {dmin:?}; moving average exact: {ma_ok}"
        ),
    )
}

fn dddb_sequences(dir: &Path, capsule: &CapsuleConfig) -> hrvbrake_core::Result<Vec<CapsuleSequence>> {
    let mut metas: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| hrvbrake_core::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "meta"))
        .collect();
    metas.sort();
    let mut out = Vec::new();
    for meta in metas {
        let rec = ecg::load_with_meta(&meta.with_extension("ecg"), Some(&meta.with_extension("events")), &meta)?;
        let fs = rec.sample_rate_hz();
        let params = WindowParams {
            length_samples: 120 * fs as usize,
            ..Default::default()
        };
        let windows = extract_windows(&rec, &params)?;
        let rr = ecg::rr_series(&rec)?;
        out.extend(build_dataset(&rr, &windows, capsule, fs)?);
    }
    Ok(out)
}

fn criterion_6() -> Outcome {
    let capsule = CapsuleConfig::parse_label("C6400_N6_M72").expect("label");
    let data = separable_fixture(60, capsule, L, 6);
    let cfg = DetectorConfig::default();
    let report = match cross_validate::<f64>(&data, &cfg, 5, 6) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("fixture cross-validation failed: {e}")),
    };
    let fixture_ok = report.mean_accuracy >= 0.95;
    let mut detail = format!("fixture CV accuracy {:.4} (>= 0.95)", report.mean_accuracy);
    let dddb = match std::env::var_os("HRVBRAKE_DDDB_DIR") {
        None => {
            detail.push_str("; real-data target SKIPPED (HRVBRAKE_DDDB_DIR unset)");
            None
        }
        Some(dir) => {
            let r = dddb_sequences(Path::new(&dir), &capsule).and_then(|seqs| cross_validate::<f64>(&seqs, &cfg, 5, 6));
            match r {
                Ok(r) => {
                    let (acc, f1) = (100.0 * r.mean_accuracy, 100.0 * r.mean_f1);
                    let ok = (acc - 92.41).abs() <= 5.0 && (f1 - 92.00).abs() <= 5.0;
                    detail.push_str(&format!("; real data accuracy {acc:.2}% F1 {f1:.2}% (target 92.41/92.00 +/- 5 pp)"));
                    Some(ok)
                }
                Err(e) => {
                    detail.push_str(&format!("; real data failed: {e}"));
                    Some(false)
                }
            }
        }
    };
    verdict(fixture_ok && dddb.unwrap_or(true), detail)
}

fn criterion_9() -> Outcome {
    if std::env::var("HRVBRAKE_SKIP_TRAINING").is_ok_and(|v| v == "1") {
        return Outcome::Skip("HRVBRAKE_SKIP_TRAINING=1".into());
    }
    let t = Instant::now();
    let env = EnvConfig::default();
    let cfg = AgentConfig {
        train_interval: 8,
        ..Default::default()
    };
    let seeds = [1u64, 2, 3];
    let mut dominant = 0;
    let mut rows = Vec::new();
    let mut worst_collision: f64 = 0.0;
    let mut alert_unsafe = 0.0;
    let mut drowsy_unsafe = 0.0;
    for seed in seeds {
        let mut finals = Vec::new();
        let mut best_agent = None;
        for variant in Variant::ALL {
            let (agent, report) = match agent::train::<f32>(&env, &cfg, variant, 500, seed, |_| {}) {
                Ok(x) => x,
                Err(e) => return Outcome::Fail(format!("{variant} seed {seed}: {e}")),
            };
            let ma = report.final_moving_average().unwrap_or(f64::NEG_INFINITY);
            eprintln!("  seed {seed} {variant}: final moving average {ma:.2} ({:.0}s elapsed)", t.elapsed().as_secs_f64());
            finals.push((variant, ma));
            if variant == Variant::DoubleDuelingDqn {
                best_agent = Some(agent);
            }
        }
        let dddqn = finals.iter().find(|f| f.0 == Variant::DoubleDuelingDqn).expect("dddqn").1;
        let wins = finals.iter().all(|&(_, ma)| dddqn >= ma);
        dominant += usize::from(wins);
        rows.push(format!(
            "seed {seed}: {}",
            finals.iter().map(|(v, ma)| format!("{v} {ma:.2}")).collect::<Vec<_>>().join(" / ")
        ));
        let agent = best_agent.expect("trained");
        match evaluate_paired(&agent, &env, 200, seed) {
            Ok(r) => {
                worst_collision = worst_collision.max(r.summary(None).collision_rate);
                alert_unsafe += r.summary(Some(Arm::Alert)).unsafe_time_alert_s + r.summary(Some(Arm::Alert)).unsafe_time_drowsy_s;
                drowsy_unsafe += r.summary(Some(Arm::Drowsy)).unsafe_time_drowsy_s + r.summary(Some(Arm::Drowsy)).unsafe_time_alert_s;
            }
            Err(e) => return Outcome::Fail(format!("evaluation seed {seed}: {e}")),
        }
    }
    let minutes = t.elapsed().as_secs_f64() / 60.0;
    let ok = dominant >= 2 && worst_collision <= 0.01 && alert_unsafe == 0.0 && minutes < 30.0;
    verdict(
        ok,
        format!(
            "DDDQN final MA >= all others on {dominant}/3 seeds (need 2) [{}]; worst eval collision rate {worst_collision:.4} (<= 0.01); unsafe time alert arms {alert_unsafe:.2}s, drowsy arms {drowsy_unsafe:.2}s; {minutes:.1} min (< 30); f32, train_interval 8",
            rows.join("; ")
        ),
    )
}

fn csv_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.push(p.strip_prefix(root).expect("under root").to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_hrvbrake"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn criterion_11() -> Outcome {
    let tmp = tempfile::tempdir().expect("tempdir");
    let agent_fast = [
        "--set", "agent.warmup=300", "--set", "agent.guided_episodes=3", "--set", "agent.trunk=16,16",
        "--set", "agent.stream=8", "--set", "env.horizon=8",
    ];
    let detector_fast = ["--set", "detector.max_epochs=8", "--set", "detector.units=12"];
    let mut total = 0;
    let mut differing = Vec::new();
    for tag in ["a", "b"] {
        let root = tmp.path().join(tag);
        let p = |name: &str| root.join(name).to_string_lossy().into_owned();
        let mut steps: Vec<Vec<String>> = Vec::new();
        let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let mut bench = own(&["benchmark-capsules", "--synthetic", "--configs-limit", "3", "--folds", "3", "--out"]);
        bench.push(p("bench"));
        bench.extend(own(&detector_fast));
        steps.push(bench);
        let mut det = own(&["train-detector", "--synthetic", "--out"]);
        det.push(p("det"));
        det.extend(own(&detector_fast));
        steps.push(det);
        let mut ag = own(&["train-agent", "--variant", "dddqn", "--episodes", "20", "--seed", "4", "--out"]);
        ag.push(p("agent"));
        ag.extend(own(&agent_fast));
        steps.push(ag);
        let mut ev = own(&["eval-paired", "--episodes", "6", "--checkpoint"]);
        ev.push(p("agent"));
        ev.push("--out".into());
        ev.push(p("eval"));
        ev.extend(own(&["--set", "env.horizon=8"]));
        steps.push(ev);
        steps.push(vec!["report".into(), "--run".into(), p("agent"), "--run".into(), p("eval"), "--out".into(), p("report")]);
        for s in &steps {
            let args: Vec<&str> = s.iter().map(String::as_str).collect();
            if let Err(e) = run_cli(&args) {
                return Outcome::Fail(e);
            }
        }
    }
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let files_a = csv_files(&a);
    if files_a != csv_files(&b) {
        return Outcome::Fail("runs produced different sets of CSV files".into());
    }
    for f in &files_a {
        total += 1;
        if fs::read(a.join(f)).ok() != fs::read(b.join(f)).ok() {
            differing.push(f.display().to_string());
        }
    }
    verdict(
        differing.is_empty() && files_a.iter().any(|f| f.starts_with("report")) && total >= 20,
        format!("{total} CSV files across all five commands, {} differ {differing:?}", differing.len()),
    )
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful for this suite.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let start = Instant::now();
    let criteria: [(u8, &str, fn() -> Outcome); 11] = [
        (1, "overlap enumeration", criterion_1),
        (2, "capsule tiling", criterion_2),
        (3, "HRV oracle equivalence", criterion_3),
        (4, "R-peak recovery", criterion_4),
        (5, "gradient checks", criterion_5),
        (6, "detector sanity", criterion_6),
        (7, "Bellman/Double/Dueling oracles", criterion_7),
        (8, "delay exactness", criterion_8),
        (9, "desk-scale training outcome", criterion_9),
        (10, "reward structure", criterion_10),
        (11, "determinism", criterion_11),
    ];
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        let t = Instant::now();
        let (tag, detail) = match f() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed.push(id);
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {id:>2} {tag} {name}: {detail} [{:.1}s]", t.elapsed().as_secs_f64());
    }
    println!(
        "acceptance: {} passed or skipped, {} failed {failed:?} in {:.1} min",
        11 - failed.len(),
        failed.len(),
        start.elapsed().as_secs_f64() / 60.0
    );
    if !failed.is_empty() && std::env::var("HRVBRAKE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

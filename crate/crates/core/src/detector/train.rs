use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::capsule::{CapsuleConfig, CapsuleSequence, Window, WindowKind, FEATURE_COUNT};
use crate::error::{Error, Result};
use crate::nn::{backward_and_step, weights, AdamState, Dropout, Matrix};
use crate::scalar::Scalar;
use crate::textio::{self, fmt_f64};

use super::model::{batch_steps, DetectorConfig, DrowsyRnn};
use super::standardize::Standardizer;

pub const MODEL_FILE: &str = "model.weights";
pub const STANDARDIZER_FILE: &str = "standardizer.txt";
pub const DETECTOR_FILE: &str = "detector.txt";

/// Confusion counts with the drowsy class as positive.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BinaryMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl BinaryMetrics {
    pub fn from_predictions(labels: &[u8], predicted: &[u8]) -> Self {
        let mut m = BinaryMetrics::default();
        for (&y, &p) in labels.iter().zip(predicted) {
            match (y, p) {
                (1, 1) => m.tp += 1,
                (0, 1) => m.fp += 1,
                (0, _) => m.tn += 1,
                _ => m.fn_ += 1,
            }
        }
        m
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / self.total() as f64
        }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Zero when there are no true positives.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    /// Rows are the actual class, columns the predicted class.
    pub fn confusion_csv(&self) -> String {
        format!(
            "actual,predicted_non_drowsy,predicted_drowsy\nnon_drowsy,{},{}\ndrowsy,{},{}\n",
            self.tn, self.fp, self.fn_, self.tp
        )
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn by_class(labels: &[u8]) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        out[usize::from(y == 1)].push(i);
    }
    out
}

/// Holds out `fraction` of each class (at least one sample), leaving at least one.
pub fn stratified_split<R: Rng + ?Sized>(labels: &[u8], fraction: f64, rng: &mut R) -> Result<(Vec<usize>, Vec<usize>)> {
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for (class, mut idx) in by_class(labels).into_iter().enumerate() {
        let n_held = ((fraction * idx.len() as f64).round() as usize).max(1);
        if n_held >= idx.len() {
            return Err(Error::CannotStratify(format!(
                "class {class} has {} samples; cannot hold out {n_held} and keep one",
                idx.len()
            )));
        }
        idx.shuffle(rng);
        held.extend_from_slice(&idx[..n_held]);
        train.extend_from_slice(&idx[n_held..]);
    }
    train.sort_unstable();
    held.sort_unstable();
    Ok((train, held))
}

/// `k` disjoint folds, each holding members of both classes.
pub fn stratified_folds<R: Rng + ?Sized>(labels: &[u8], k: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("cross-validation needs k >= 2, got {k}")));
    }
    if labels.len() < k {
        return Err(Error::CannotStratify(format!("{} samples for {k} folds", labels.len())));
    }
    let mut folds = vec![Vec::new(); k];
    for (class, mut idx) in by_class(labels).into_iter().enumerate() {
        if idx.len() < k {
            return Err(Error::CannotStratify(format!(
                "class {class} has {} samples, fewer than {k} folds",
                idx.len()
            )));
        }
        idx.shuffle(rng);
        for (j, i) in idx.into_iter().enumerate() {
            folds[j % k].push(i);
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f1: f64,
}

/// A fitted classifier with its input scaling and capsule layout.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedDetector<T> {
    pub model: DrowsyRnn<T>,
    pub standardizer: Standardizer,
    pub config: DetectorConfig,
    pub capsule: CapsuleConfig,
    pub window_samples: usize,
    pub history: Vec<EpochStats>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
}

fn standardize_rows(rows: &[[f64; FEATURE_COUNT]], s: &Standardizer) -> Matrix<f64> {
    let data: Vec<f64> = rows.iter().flat_map(|r| s.apply(r)).collect();
    Matrix::from_vec(rows.len(), s.output_features(), data).expect("consistent shape")
}

fn mean_bce(probs: &[f64], labels: &[u8]) -> f64 {
    let eps = 1e-12;
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| if y == 1 { -(p.max(eps)).ln() } else { -((1.0 - p).max(eps)).ln() })
        .sum::<f64>()
        / probs.len().max(1) as f64
}

impl<T: Scalar> TrainedDetector<T> {
    /// Drowsiness probability of each feature matrix (`N x 7`).
    pub fn predict_rows(&self, seqs: &[&[[f64; FEATURE_COUNT]]]) -> Result<Vec<f64>> {
        let mats: Vec<Matrix<f64>> = seqs.iter().map(|s| standardize_rows(s, &self.standardizer)).collect();
        let refs: Vec<&Matrix<f64>> = mats.iter().collect();
        let mut out = Vec::with_capacity(refs.len());
        for chunk in refs.chunks(256) {
            out.extend(self.model.probabilities(chunk)?);
        }
        Ok(out)
    }

    pub fn predict(&self, seqs: &[&CapsuleSequence]) -> Result<Vec<f64>> {
        let rows: Vec<&[[f64; FEATURE_COUNT]]> = seqs.iter().map(|q| q.rows.as_slice()).collect();
        self.predict_rows(&rows)
    }

    pub fn classify(&self, probability: f64) -> u8 {
        u8::from(probability >= self.config.decision_threshold)
    }

    /// Writes the weights, the standardizer and the configuration into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        weights::save_weights(&self.model, &dir.join(MODEL_FILE))?;
        self.standardizer.save(&dir.join(STANDARDIZER_FILE))?;
        let mut text = self.config.to_text();
        let _ = write!(
            text,
            "capsule={}\nwindow_samples={}\nfeatures={}\nbest_epoch={}\n",
            self.capsule.label(),
            self.window_samples,
            self.model.features(),
            self.best_epoch
        );
        textio::write_atomic(&dir.join(DETECTOR_FILE), &text)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(DETECTOR_FILE);
        let text = textio::read_to_string(&path)?;
        let mut config = DetectorConfig::default();
        let (mut capsule, mut window, mut features, mut best) = (None, None, None, 0);
        for (line, key, value) in textio::key_values(&text, &path)? {
            let num = || value.parse::<usize>().map_err(|e| Error::parse(&path, line, format!("{key}: {e}")));
            match key.as_str() {
                "capsule" => capsule = Some(CapsuleConfig::parse_label(&value).map_err(|e| Error::parse(&path, line, e.to_string()))?),
                "window_samples" => window = Some(num()?),
                "features" => features = Some(num()?),
                "best_epoch" => best = num()?,
                _ => {
                    if !config.set(&key, &value).map_err(|e| Error::parse(&path, line, e.to_string()))? {
                        return Err(Error::parse(&path, line, format!("unknown key '{key}'")));
                    }
                }
            }
        }
        config.validate()?;
        let missing = |k: &str| Error::parse(&path, 0, format!("missing key '{k}'"));
        let capsule = capsule.ok_or_else(|| missing("capsule"))?;
        let window_samples = window.ok_or_else(|| missing("window_samples"))?;
        let features = features.ok_or_else(|| missing("features"))?;
        let standardizer = Standardizer::load(&dir.join(STANDARDIZER_FILE))?;
        if standardizer.output_features() != features {
            return Err(Error::Shape(format!(
                "standardizer keeps {} features, model expects {features}",
                standardizer.output_features()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = DrowsyRnn::new(features, &config, &mut rng);
        weights::load_weights(&mut model, &dir.join(MODEL_FILE))?;
        Ok(TrainedDetector {
            model,
            standardizer,
            config,
            capsule,
            window_samples,
            history: Vec::new(),
            best_epoch: best,
        })
    }
}

fn dataset_layout(dataset: &[&CapsuleSequence]) -> Result<(CapsuleConfig, usize)> {
    let first = dataset.first().ok_or_else(|| Error::Validation("empty dataset".into()))?;
    let layout = (first.config, first.source_window.length_samples);
    if dataset
        .iter()
        .any(|q| (q.config, q.source_window.length_samples) != layout || q.rows.len() != q.config.n)
    {
        return Err(Error::Validation("dataset mixes capsule configurations".into()));
    }
    Ok(layout)
}

/// Trains on `dataset`, holding back a stratified share for early stopping on
/// validation F1 (ties go to the lower validation loss). The best epoch's
/// weights are restored.
pub fn train_detector<T: Scalar>(dataset: &[&CapsuleSequence], cfg: &DetectorConfig, seed: u64) -> Result<TrainedDetector<T>> {
    cfg.validate()?;
    let (capsule, window_samples) = dataset_layout(dataset)?;
    let labels: Vec<u8> = dataset.iter().map(|q| q.label).collect();
    let counts = by_class(&labels);
    if counts.iter().any(|c| c.len() < 2) {
        return Err(Error::Validation(format!(
            "need at least 2 samples per class, got {} non-drowsy and {} drowsy",
            counts[0].len(),
            counts[1].len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train_idx, val_idx) = stratified_split(&labels, cfg.validation_fraction, &mut rng)?;

    let all_rows: Vec<&[f64]> = dataset.iter().flat_map(|q| q.rows.iter().map(|r| r.as_slice())).collect();
    let standardizer = Standardizer::fit(&all_rows)?;
    if standardizer.output_features() == 0 {
        return Err(Error::Validation("every feature is constant".into()));
    }
    let mats: Vec<Matrix<f64>> = dataset.iter().map(|q| standardize_rows(&q.rows, &standardizer)).collect();

    let mut model: DrowsyRnn<T> = DrowsyRnn::new(standardizer.output_features(), cfg, &mut rng);
    let mut adam = AdamState::new(&model, cfg.learning_rate);
    let dropout = Dropout::new(cfg.dropout)?;
    let val_mats: Vec<&Matrix<f64>> = val_idx.iter().map(|&i| &mats[i]).collect();
    let val_labels: Vec<u8> = val_idx.iter().map(|&i| labels[i]).collect();

    let mut order = train_idx.clone();
    let mut history = Vec::new();
    let mut best = (model.clone(), f64::NEG_INFINITY, f64::INFINITY, 0usize);
    let mut since_best = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let seqs: Vec<&Matrix<f64>> = batch.iter().map(|&i| &mats[i]).collect();
            let steps = batch_steps::<T>(&seqs)?;
            let y = Matrix::from_vec(batch.len(), 1, batch.iter().map(|&i| T::lit(labels[i] as f64)).collect())?;
            let loss = backward_and_step(
                &mut model,
                |m| m.objective(&steps, &y, dropout, cfg.l2, &mut rng),
                &mut adam,
            )?;
            loss_sum += loss.to_f64_lossy() * batch.len() as f64;
        }
        let probs = model.probabilities(&val_mats)?;
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence(format!("non-finite validation output at epoch {epoch}")));
        }
        let predicted: Vec<u8> = probs.iter().map(|&p| u8::from(p >= cfg.decision_threshold)).collect();
        let val_f1 = BinaryMetrics::from_predictions(&val_labels, &predicted).f1();
        let val_loss = mean_bce(&probs, &val_labels);
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            val_loss,
            val_f1,
        });
        if val_f1 > best.1 || (val_f1 == best.1 && val_loss < best.2) {
            best = (model.clone(), val_f1, val_loss, epoch);
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= cfg.early_stop_patience {
            break;
        }
    }
    Ok(TrainedDetector {
        model: best.0,
        standardizer,
        config: *cfg,
        capsule,
        window_samples,
        history,
        best_epoch: best.3,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvReport {
    pub capsule: CapsuleConfig,
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    pub mean_f1: f64,
    /// Hold-out confusion from the mean probability of the fold models.
    pub holdout: BinaryMetrics,
}

impl CvReport {
    /// `fold,accuracy,f1` rows and a closing `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fold,accuracy,f1\n");
        for f in &self.folds {
            let _ = writeln!(s, "{},{},{}", f.fold, fmt_f64(f.accuracy), fmt_f64(f.f1));
        }
        let _ = writeln!(s, "mean,{},{}", fmt_f64(self.mean_accuracy), fmt_f64(self.mean_f1));
        s
    }
}

pub(crate) fn sub_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ (index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stratified hold-out (20 %), then stratified `k`-fold cross-validation on the
/// rest. Each fold model refits its own standardizer on its training folds.
pub fn cross_validate<T: Scalar>(dataset: &[CapsuleSequence], cfg: &DetectorConfig, k: usize, seed: u64) -> Result<CvReport> {
    cross_validate_with::<T>(dataset, cfg, k, seed).map(|(r, _)| r)
}

/// As [`cross_validate`], also returning the fold models.
pub fn cross_validate_with<T: Scalar>(
    dataset: &[CapsuleSequence],
    cfg: &DetectorConfig,
    k: usize,
    seed: u64,
) -> Result<(CvReport, Vec<TrainedDetector<T>>)> {
    if dataset.len() < k {
        return Err(Error::CannotStratify(format!("{} samples for {k} folds", dataset.len())));
    }
    let refs: Vec<&CapsuleSequence> = dataset.iter().collect();
    let (capsule, _) = dataset_layout(&refs)?;
    let labels: Vec<u8> = dataset.iter().map(|q| q.label).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (pool, holdout) = stratified_split(&labels, 0.2, &mut rng)?;
    let pool_labels: Vec<u8> = pool.iter().map(|&i| labels[i]).collect();
    let folds = stratified_folds(&pool_labels, k, &mut rng)?;

    let mut results = Vec::with_capacity(k);
    let mut models = Vec::with_capacity(k);
    for (f, val) in folds.iter().enumerate() {
        let train: Vec<&CapsuleSequence> = (0..pool.len())
            .filter(|j| val.binary_search(j).is_err())
            .map(|j| &dataset[pool[j]])
            .collect();
        let det = train_detector::<T>(&train, cfg, sub_seed(seed, f as u64))?;
        let val_seqs: Vec<&CapsuleSequence> = val.iter().map(|&j| &dataset[pool[j]]).collect();
        let probs = det.predict(&val_seqs)?;
        let predicted: Vec<u8> = probs.iter().map(|&p| det.classify(p)).collect();
        let truth: Vec<u8> = val_seqs.iter().map(|q| q.label).collect();
        let m = BinaryMetrics::from_predictions(&truth, &predicted);
        results.push(FoldResult {
            fold: f,
            accuracy: m.accuracy(),
            f1: m.f1(),
            epochs: det.history.len(),
        });
        models.push(det);
    }

    let held: Vec<&CapsuleSequence> = holdout.iter().map(|&i| &dataset[i]).collect();
    let mut mean_prob = vec![0.0; held.len()];
    for det in &models {
        for (acc, p) in mean_prob.iter_mut().zip(det.predict(&held)?) {
            *acc += p / models.len() as f64;
        }
    }
    let predicted: Vec<u8> = mean_prob.iter().map(|&p| u8::from(p >= cfg.decision_threshold)).collect();
    let truth: Vec<u8> = held.iter().map(|q| q.label).collect();
    let n = results.len() as f64;
    let report = CvReport {
        capsule,
        mean_accuracy: results.iter().map(|r| r.accuracy).sum::<f64>() / n,
        mean_f1: results.iter().map(|r| r.f1).sum::<f64>() / n,
        folds: results,
        holdout: BinaryMetrics::from_predictions(&truth, &predicted),
    };
    Ok((report, models))
}

/// Two classes of capsule sequences separated along the mean RR interval and
/// spectral powers; labels alternate drowsy / non-drowsy by pair.
pub fn separable_fixture(pairs: usize, capsule: CapsuleConfig, window_samples: usize, seed: u64) -> Vec<CapsuleSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = Vec::with_capacity(2 * pairs);
    for pair in 0..pairs {
        for kind in [WindowKind::Dew, WindowKind::Nsrw] {
            let y = f64::from(kind.label());
            let rows = (0..capsule.n)
                .map(|_| {
                    let mut z = || unit.sample(&mut rng);
                    let lf = 400.0 + 400.0 * y + 50.0 * z();
                    let hf = 300.0 + 500.0 * y + 50.0 * z();
                    [
                        760.0 + 200.0 * y + 20.0 * z(),
                        30.0 + 30.0 * y + 5.0 * z(),
                        25.0 + 25.0 * y + 5.0 * z(),
                        (5.0 + 15.0 * y + 2.0 * z()).clamp(0.0, 100.0),
                        lf,
                        hf,
                        lf / hf,
                    ]
                })
                .collect();
            out.push(CapsuleSequence {
                config: capsule,
                rows,
                label: kind.label(),
                source_window: Window {
                    kind,
                    start_sample: (2 * pair + usize::from(kind == WindowKind::Nsrw)) * window_samples,
                    length_samples: window_samples,
                    pair,
                },
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(pairs: usize) -> Vec<CapsuleSequence> {
        separable_fixture(pairs, CapsuleConfig::parse_label("C6400_N6_M72").unwrap(), 15_360, 3)
    }

    fn quick() -> DetectorConfig {
        DetectorConfig {
            max_epochs: 30,
            ..Default::default()
        }
    }

    #[test]
    fn constant_prediction_is_chance() {
        let labels = [1, 0, 1, 0, 1, 0];
        let m = BinaryMetrics::from_predictions(&labels, &[1; 6]);
        assert_eq!(m.accuracy(), 0.5);
        assert_eq!(m.total(), 6);
    }

    #[test]
    fn metrics_by_hand() {
        let m = BinaryMetrics::from_predictions(&[1, 1, 1, 0, 0], &[1, 1, 0, 1, 0]);
        assert_eq!((m.tp, m.fn_, m.fp, m.tn), (2, 1, 1, 1));
        assert!((m.f1() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn folds_are_disjoint_and_stratified() {
        let labels: Vec<u8> = (0..23).map(|i| (i % 2) as u8).collect();
        let folds = stratified_folds(&labels, 5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        for f in &folds {
            assert!(f.iter().any(|&i| labels[i] == 1) && f.iter().any(|&i| labels[i] == 0));
        }
        let lopsided = [1, 1, 1, 1, 1, 0, 0, 0];
        assert!(matches!(
            stratified_folds(&lopsided, 5, &mut ChaCha8Rng::seed_from_u64(1)),
            Err(Error::CannotStratify(_))
        ));
    }

    #[test]
    fn separable_training_accuracy() {
        let data = fixture(20);
        let refs: Vec<&CapsuleSequence> = data.iter().collect();
        let det = train_detector::<f64>(&refs, &quick(), 1).unwrap();
        let probs = det.predict(&refs).unwrap();
        let predicted: Vec<u8> = probs.iter().map(|&p| det.classify(p)).collect();
        let truth: Vec<u8> = data.iter().map(|q| q.label).collect();
        assert!(BinaryMetrics::from_predictions(&truth, &predicted).accuracy() >= 0.99);
    }

    #[test]
    fn zero_patience_runs_one_epoch() {
        let data = fixture(5);
        let refs: Vec<&CapsuleSequence> = data.iter().collect();
        let cfg = DetectorConfig {
            early_stop_patience: 0,
            ..Default::default()
        };
        assert_eq!(train_detector::<f64>(&refs, &cfg, 2).unwrap().history.len(), 1);
    }

    #[test]
    fn same_seed_same_weights() {
        let data = fixture(6);
        let refs: Vec<&CapsuleSequence> = data.iter().collect();
        let a = train_detector::<f64>(&refs, &quick(), 4).unwrap();
        let b = train_detector::<f64>(&refs, &quick(), 4).unwrap();
        assert_eq!(weights::weights_to_string(&a.model), weights::weights_to_string(&b.model));
    }

    #[test]
    fn bundle_round_trip() {
        let data = fixture(5);
        let refs: Vec<&CapsuleSequence> = data.iter().collect();
        let cfg = DetectorConfig {
            max_epochs: 2,
            ..Default::default()
        };
        let det = train_detector::<f64>(&refs, &cfg, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        det.save(dir.path()).unwrap();
        let back = TrainedDetector::<f64>::load(dir.path()).unwrap();
        assert_eq!(back.model, det.model);
        assert_eq!(back.standardizer, det.standardizer);
        assert_eq!(back.capsule, det.capsule);
        assert_eq!(back.predict(&refs).unwrap(), det.predict(&refs).unwrap());
    }

    #[test]
    fn cv_report_shape() {
        let data = fixture(20);
        let cfg = DetectorConfig {
            max_epochs: 10,
            ..Default::default()
        };
        let r = cross_validate::<f64>(&data, &cfg, 5, 9).unwrap();
        assert_eq!(r.folds.len(), 5);
        assert_eq!(r.holdout.total(), 8);
        assert!(r.to_csv().ends_with(&format!("mean,{},{}\n", fmt_f64(r.mean_accuracy), fmt_f64(r.mean_f1))));
    }
}

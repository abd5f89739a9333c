use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{add_l2_penalty, loss_and_grad, sigmoid, Activation, Dense, Dropout, LossKind, Matrix, Model, RecurrentCell};
use crate::scalar::Scalar;
use crate::textio;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorConfig {
    pub units: usize,
    pub recurrent_layers: usize,
    pub dropout: f64,
    /// Applied to the output layer weights.
    pub l2: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub decision_threshold: f64,
    /// Share of the training data held back to monitor early stopping.
    pub validation_fraction: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            units: 40,
            recurrent_layers: 3,
            dropout: 0.25,
            l2: 0.28,
            learning_rate: 0.002,
            batch_size: 48,
            max_epochs: 100,
            early_stop_patience: 10,
            decision_threshold: 0.5,
            validation_fraction: 0.2,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.units == 0 || self.recurrent_layers == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return bad("detector units, layers, batch size and epochs must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.l2 >= 0.0 && self.learning_rate > 0.0) {
            return bad("l2 must be non-negative and the learning rate positive".into());
        }
        if !(0.0..=1.0).contains(&self.decision_threshold) {
            return bad(format!("decision threshold {} outside [0, 1]", self.decision_threshold));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!("validation fraction {} outside (0, 1)", self.validation_fraction));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        format!(
            "units={}\nrecurrent_layers={}\ndropout={}\nl2={}\nlearning_rate={}\nbatch_size={}\nmax_epochs={}\n\
early_stop_patience={}\ndecision_threshold={}\nvalidation_fraction={}\n",
            self.units,
            self.recurrent_layers,
            self.dropout,
            self.l2,
            self.learning_rate,
            self.batch_size,
            self.max_epochs,
            self.early_stop_patience,
            self.decision_threshold,
            self.validation_fraction
        )
    }

    /// Applies `key=value` pairs; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn p<V: std::str::FromStr>(key: &str, v: &str) -> Result<V> {
            v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
        }
        match key {
            "units" => self.units = p(key, value)?,
            "recurrent_layers" => self.recurrent_layers = p(key, value)?,
            "dropout" => self.dropout = p(key, value)?,
            "l2" => self.l2 = p(key, value)?,
            "learning_rate" => self.learning_rate = p(key, value)?,
            "batch_size" => self.batch_size = p(key, value)?,
            "max_epochs" => self.max_epochs = p(key, value)?,
            "early_stop_patience" => self.early_stop_patience = p(key, value)?,
            "decision_threshold" => self.decision_threshold = p(key, value)?,
            "validation_fraction" => self.validation_fraction = p(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = DetectorConfig::default();
        for (line, key, value) in textio::key_values(text, path)? {
            if !cfg.set(&key, &value).map_err(|e| Error::parse(path, line, e.to_string()))? {
                return Err(Error::parse(path, line, format!("unknown key '{key}'")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Stacked Elman layers followed by a single logit.
#[derive(Clone, Debug, PartialEq)]
pub struct DrowsyRnn<T> {
    pub cells: Vec<RecurrentCell<T>>,
    pub head: Dense<T>,
}

impl<T: Scalar> Model<T> for DrowsyRnn<T> {
    fn tensors(&self) -> Vec<&Matrix<T>> {
        let mut v: Vec<&Matrix<T>> = self.cells.iter().flat_map(|c| c.tensors()).collect();
        v.extend(self.head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut v: Vec<&mut Matrix<T>> = self.cells.iter_mut().flat_map(|c| c.tensors_mut()).collect();
        v.extend(self.head.tensors_mut());
        v
    }

    fn tensor_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for i in 0..self.cells.len() {
            v.extend([format!("rnn{i}.input"), format!("rnn{i}.hidden"), format!("rnn{i}.bias")]);
        }
        v.extend(["head.weight".to_string(), "head.bias".to_string()]);
        v
    }
}

/// Sequences of equal length as one matrix per time step (`batch x features`).
pub fn batch_steps<T: Scalar>(seqs: &[&Matrix<f64>]) -> Result<Vec<Matrix<T>>> {
    let Some(first) = seqs.first() else {
        return Err(Error::Validation("empty batch".into()));
    };
    let (n, f) = first.shape();
    if seqs.iter().any(|s| s.shape() != (n, f)) {
        return Err(Error::Shape("sequences in a batch must share a shape".into()));
    }
    Ok((0..n)
        .map(|t| {
            let mut m = Matrix::zeros(seqs.len(), f);
            for (b, s) in seqs.iter().enumerate() {
                for (dst, &src) in m.row_mut(b).iter_mut().zip(s.row(t)) {
                    *dst = T::lit(src);
                }
            }
            m
        })
        .collect())
}

impl<T: Scalar> DrowsyRnn<T> {
    pub fn new<R: Rng + ?Sized>(features: usize, cfg: &DetectorConfig, rng: &mut R) -> Self {
        let mut cells = Vec::with_capacity(cfg.recurrent_layers);
        let mut inputs = features;
        for _ in 0..cfg.recurrent_layers {
            cells.push(RecurrentCell::new(inputs, cfg.units, rng));
            inputs = cfg.units;
        }
        DrowsyRnn {
            cells,
            head: Dense::new(cfg.units, 1, Activation::Identity, rng),
        }
    }

    pub fn features(&self) -> usize {
        self.cells[0].inputs()
    }

    /// Logits (`batch x 1`), inference mode.
    pub fn logits(&self, steps: &[Matrix<T>]) -> Result<Matrix<T>> {
        let mut xs = steps.to_vec();
        for cell in &self.cells {
            xs = cell.forward_trace(&xs)?.hidden.split_off(1);
        }
        self.head.forward(xs.last().expect("non-empty sequence"))
    }

    pub fn probabilities(&self, seqs: &[&Matrix<f64>]) -> Result<Vec<f64>> {
        let logits = self.logits(&batch_steps::<T>(seqs)?)?;
        Ok(logits.as_slice().iter().map(|&z| sigmoid(z).to_f64_lossy()).collect())
    }

    /// Cross-entropy plus the L2 penalty on the output weights, with gradients.
    /// Dropout masks are drawn from `rng` when `dropout > 0`.
    pub fn objective<R: Rng + ?Sized>(
        &self,
        steps: &[Matrix<T>],
        labels: &Matrix<T>,
        dropout: Dropout,
        l2: f64,
        rng: &mut R,
    ) -> Result<(T, Vec<Matrix<T>>)> {
        let mut traces = Vec::with_capacity(self.cells.len());
        let mut masks: Vec<Vec<Option<Matrix<T>>>> = Vec::with_capacity(self.cells.len());
        let mut xs = steps.to_vec();
        for cell in &self.cells {
            let trace = cell.forward_trace(&xs)?;
            xs = trace.hidden[1..].to_vec();
            masks.push(xs.iter_mut().map(|h| dropout.apply(h, true, rng)).collect());
            traces.push(trace);
        }
        let last = xs.last().expect("non-empty sequence");
        let out = self.head.forward(last)?;
        let (mut loss, g) = loss_and_grad(LossKind::BinaryCrossEntropy, &out, labels);
        let mut grads = self.zero_grads();
        let head_slot = 3 * self.cells.len();
        loss += add_l2_penalty(&self.head.weights, T::lit(l2), &mut grads[head_slot]);
        let dh = self.head.backward(last, &out, &g, &mut grads[head_slot..head_slot + 2]);
        let (batch, units) = last.shape();
        let mut upstream: Vec<Matrix<T>> = (0..steps.len()).map(|_| Matrix::zeros(batch, units)).collect();
        *upstream.last_mut().expect("non-empty") = dh;
        for (i, cell) in self.cells.iter().enumerate().rev() {
            for (u, m) in upstream.iter_mut().zip(&masks[i]) {
                if let Some(m) = m {
                    u.zip_inplace(m, |a, b| a * b);
                }
            }
            upstream = cell.backward(&traces[i], &upstream, &mut grads[3 * i..3 * i + 3]);
        }
        Ok((loss, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn probabilities_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model: DrowsyRnn<f64> = DrowsyRnn::new(7, &DetectorConfig::default(), &mut rng);
        let seqs: Vec<Matrix<f64>> = (0..5)
            .map(|i| Matrix::filled(6, 7, (i as f64 - 2.0) * 10.0))
            .collect();
        let refs: Vec<&Matrix<f64>> = seqs.iter().collect();
        for p in model.probabilities(&refs).unwrap() {
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn gradients_without_dropout_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = DetectorConfig {
            units: 4,
            recurrent_layers: 2,
            ..Default::default()
        };
        let mut model: DrowsyRnn<f64> = DrowsyRnn::new(3, &cfg, &mut rng);
        let steps: Vec<Matrix<f64>> = (0..4)
            .map(|_| Matrix::from_vec(5, 3, (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        let y = Matrix::from_vec(5, 1, vec![1.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        let none = Dropout::new(0.0).unwrap();
        let (_, analytic) = model.objective(&steps, &y, none, 0.28, &mut rng).unwrap();
        let h = 1e-5;
        for ti in 0..analytic.len() {
            for j in 0..analytic[ti].as_slice().len() {
                let orig = model.tensors()[ti].as_slice()[j];
                model.tensors_mut()[ti].as_mut_slice()[j] = orig + h;
                let up = model.objective(&steps, &y, none, 0.28, &mut rng).unwrap().0;
                model.tensors_mut()[ti].as_mut_slice()[j] = orig - h;
                let down = model.objective(&steps, &y, none, 0.28, &mut rng).unwrap().0;
                model.tensors_mut()[ti].as_mut_slice()[j] = orig;
                let num = (up - down) / (2.0 * h);
                let a = analytic[ti].as_slice()[j];
                assert!((a - num).abs() / (a.abs() + num.abs()).max(1e-7) < 1e-4, "{ti}/{j}: {a} vs {num}");
            }
        }
    }

    #[test]
    fn config_text_round_trip() {
        let cfg = DetectorConfig {
            early_stop_patience: 3,
            ..Default::default()
        };
        assert_eq!(DetectorConfig::from_text(&cfg.to_text(), Path::new("d")).unwrap(), cfg);
    }
}

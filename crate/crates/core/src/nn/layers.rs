use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Identity => T::one(),
        }
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Uniform Glorot initialisation, `U(-r, r)` with `r = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix<T> {
    let r = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::lit(rng.gen_range(-r..r)))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("shape")
}

/// Random orthogonal matrix (Gram-Schmidt on a Gaussian draw).
pub fn orthogonal<T: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix<T> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for q in &cols {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            cols.push(v);
        }
    }
    let mut m = Matrix::zeros(n, n);
    for (j, c) in cols.iter().enumerate() {
        for (i, &x) in c.iter().enumerate() {
            m[(i, j)] = T::lit(x);
        }
    }
    m
}

/// Fully connected layer, `y = act(x W + b)` over a batch of rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weights: Matrix<T>,
    pub bias: Matrix<T>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        Dense {
            weights: glorot_uniform(inputs, outputs, rng),
            bias: Matrix::zeros(1, outputs),
            activation,
        }
    }

    pub fn from_parts(weights: Matrix<T>, bias: Vec<T>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(Error::Shape(format!(
                "bias of length {} for {} outputs",
                bias.len(),
                weights.cols()
            )));
        }
        Ok(Dense {
            weights,
            bias: Matrix::row_vector(&bias),
            activation,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn forward(&self, input: &Matrix<T>) -> Result<Matrix<T>> {
        if input.cols() != self.inputs() {
            return Err(Error::Shape(format!(
                "dense layer expects {} inputs, got {}",
                self.inputs(),
                input.cols()
            )));
        }
        let mut out = input.matmul(&self.weights)?;
        out.add_row_broadcast(&self.bias);
        let act = self.activation;
        out.map_inplace(|x| act.apply(x));
        Ok(out)
    }

    /// Back-propagates `grad_out` (w.r.t. this layer's output) given the forward
    /// input and output. Accumulates into `grads = [dW, db]`, returns d/d input.
    pub fn backward(
        &self,
        input: &Matrix<T>,
        output: &Matrix<T>,
        grad_out: &Matrix<T>,
        grads: &mut [Matrix<T>],
    ) -> Matrix<T> {
        let act = self.activation;
        let mut dz = grad_out.clone();
        dz.zip_inplace(output, |g, y| g * act.derivative_from_output(y));
        input.t_matmul_acc(&dz, &mut grads[0]);
        grads[1].add_assign(&dz.column_sums());
        dz.matmul_t(&self.weights)
    }

    pub fn tensors(&self) -> [&Matrix<T>; 2] {
        [&self.weights, &self.bias]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix<T>; 2] {
        [&mut self.weights, &mut self.bias]
    }
}

/// Stack of dense layers with cached activations for back-propagation.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
}

/// Per-layer activations from a forward pass; `activations[0]` is the input.
pub struct MlpTrace<T> {
    pub activations: Vec<Matrix<T>>,
}

impl<T: Scalar> MlpTrace<T> {
    pub fn output(&self) -> &Matrix<T> {
        self.activations.last().expect("trace holds the input")
    }
}

impl<T: Scalar> Mlp<T> {
    /// `sizes = [in, h1, ..., out]`; hidden layers use `hidden`, the last `output`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        let n = sizes.len().saturating_sub(1);
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                Dense::new(sizes[i], sizes[i + 1], act, rng)
            })
            .collect();
        Mlp { layers }
    }

    pub fn forward(&self, input: &Matrix<T>) -> Result<Matrix<T>> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: &Matrix<T>) -> Result<MlpTrace<T>> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for layer in &self.layers {
            let next = layer.forward(activations.last().expect("non-empty"))?;
            activations.push(next);
        }
        Ok(MlpTrace { activations })
    }

    /// `grads` holds two tensors per layer in layer order.
    pub fn backward(&self, trace: &MlpTrace<T>, grad_out: &Matrix<T>, grads: &mut [Matrix<T>]) -> Matrix<T> {
        let mut g = grad_out.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            g = layer.backward(
                &trace.activations[i],
                &trace.activations[i + 1],
                &g,
                &mut grads[2 * i..2 * i + 2],
            );
        }
        g
    }

    pub fn tensors(&self) -> Vec<&Matrix<T>> {
        self.layers.iter().flat_map(|l| l.tensors()).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }

    pub fn tensor_names(&self, prefix: &str) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("{prefix}{i}.weight"), format!("{prefix}{i}.bias")])
            .collect()
    }
}

/// Elman cell, `h_t = tanh(x_t W_in + h_{t-1} W_h + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentCell<T> {
    pub input_weights: Matrix<T>,
    pub hidden_weights: Matrix<T>,
    pub bias: Matrix<T>,
}

/// Hidden states of one layer over a batched sequence; `hidden[0]` is `h_0 = 0`.
pub struct RecurrentTrace<T> {
    pub inputs: Vec<Matrix<T>>,
    pub hidden: Vec<Matrix<T>>,
}

impl<T: Scalar> RecurrentCell<T> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, units: usize, rng: &mut R) -> Self {
        RecurrentCell {
            input_weights: glorot_uniform(inputs, units, rng),
            hidden_weights: orthogonal(units, rng),
            bias: Matrix::zeros(1, units),
        }
    }

    pub fn from_parts(input_weights: Matrix<T>, hidden_weights: Matrix<T>, bias: Vec<T>) -> Result<Self> {
        let units = hidden_weights.rows();
        if hidden_weights.cols() != units {
            return Err(Error::Shape("hidden weights must be square".into()));
        }
        if input_weights.cols() != units || bias.len() != units {
            return Err(Error::Shape(format!("recurrent cell with {units} units")));
        }
        Ok(RecurrentCell {
            input_weights,
            hidden_weights,
            bias: Matrix::row_vector(&bias),
        })
    }

    pub fn inputs(&self) -> usize {
        self.input_weights.rows()
    }

    pub fn units(&self) -> usize {
        self.hidden_weights.rows()
    }

    /// Runs the cell over `steps` (each `batch x inputs`).
    pub fn forward_trace(&self, steps: &[Matrix<T>]) -> Result<RecurrentTrace<T>> {
        if steps.is_empty() {
            return Err(Error::Validation("empty sequence".into()));
        }
        let batch = steps[0].rows();
        let mut hidden = Vec::with_capacity(steps.len() + 1);
        hidden.push(Matrix::zeros(batch, self.units()));
        for x in steps {
            if x.cols() != self.inputs() {
                return Err(Error::Shape(format!(
                    "recurrent cell expects {} inputs, got {}",
                    self.inputs(),
                    x.cols()
                )));
            }
            let mut z = x.matmul(&self.input_weights)?;
            let rec = hidden.last().expect("h0").matmul(&self.hidden_weights)?;
            z.add_assign(&rec);
            z.add_row_broadcast(&self.bias);
            z.map_inplace(|v| v.tanh());
            hidden.push(z);
        }
        Ok(RecurrentTrace {
            inputs: steps.to_vec(),
            hidden,
        })
    }

    /// Back-propagation through time. `grad_hidden[t]` is the loss gradient with
    /// respect to `h_{t+1}` from outside the recurrence. Accumulates into
    /// `grads = [dW_in, dW_h, db]` and returns the gradient for each input step.
    pub fn backward(&self, trace: &RecurrentTrace<T>, grad_hidden: &[Matrix<T>], grads: &mut [Matrix<T>]) -> Vec<Matrix<T>> {
        let steps = trace.inputs.len();
        let mut grad_inputs = vec![Matrix::zeros(0, 0); steps];
        let mut carry: Option<Matrix<T>> = None;
        for t in (0..steps).rev() {
            let mut dz = grad_hidden[t].clone();
            if let Some(c) = &carry {
                dz.add_assign(c);
            }
            dz.zip_inplace(&trace.hidden[t + 1], |g, h| g * (T::one() - h * h));
            trace.inputs[t].t_matmul_acc(&dz, &mut grads[0]);
            trace.hidden[t].t_matmul_acc(&dz, &mut grads[1]);
            grads[2].add_assign(&dz.column_sums());
            grad_inputs[t] = dz.matmul_t(&self.input_weights);
            carry = Some(dz.matmul_t(&self.hidden_weights));
        }
        grad_inputs
    }

    pub fn tensors(&self) -> [&Matrix<T>; 3] {
        [&self.input_weights, &self.hidden_weights, &self.bias]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix<T>; 3] {
        [&mut self.input_weights, &mut self.hidden_weights, &mut self.bias]
    }
}

/// Runs stacked cells over an `N x F` sequence and returns the last layer's final
/// hidden state.
pub fn rnn_forward<T: Scalar>(cells: &[RecurrentCell<T>], sequence: &Matrix<T>) -> Result<Vec<T>> {
    if sequence.rows() == 0 {
        return Err(Error::Validation("empty sequence".into()));
    }
    if cells.is_empty() {
        return Err(Error::Config("no recurrent layers".into()));
    }
    let mut steps: Vec<Matrix<T>> = (0..sequence.rows())
        .map(|t| Matrix::row_vector(sequence.row(t)))
        .collect();
    for cell in cells {
        let trace = cell.forward_trace(&steps)?;
        steps = trace.hidden[1..].to_vec();
    }
    Ok(steps.last().expect("non-empty").as_slice().to_vec())
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)` during training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dropout {
    pub rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Dropout { rate })
    }

    /// Returns the mask applied (already scaled); `None` in inference mode.
    pub fn apply<T: Scalar, R: Rng + ?Sized>(
        &self,
        x: &mut Matrix<T>,
        training: bool,
        rng: &mut R,
    ) -> Option<Matrix<T>> {
        if !training || self.rate == 0.0 {
            return None;
        }
        let keep = T::lit(1.0 / (1.0 - self.rate));
        let mut mask = Matrix::zeros(x.rows(), x.cols());
        for m in mask.as_mut_slice() {
            if rng.gen::<f64>() >= self.rate {
                *m = keep;
            }
        }
        x.zip_inplace(&mask, |a, m| a * m);
        Some(mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mat(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn dense_identity_passes_input_through() {
        let layer = Dense::from_parts(Matrix::<f64>::identity(3), vec![0.0; 3], Activation::Identity).unwrap();
        let x = mat(&[&[1.0, -2.0, 3.5], &[0.0, 4.0, -1.0]]);
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn dense_relu_clips_negative_preactivations() {
        let layer = Dense::from_parts(Matrix::<f64>::identity(2), vec![-10.0, -10.0], Activation::Relu).unwrap();
        let y = layer.forward(&mat(&[&[1.0, 2.0], &[3.0, -4.0]])).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_hand_product() {
        let layer = Dense::from_parts(Matrix::<f64>::identity(2), vec![1.0, 1.0], Activation::Identity).unwrap();
        let y = layer.forward(&mat(&[&[1.0, 2.0]])).unwrap();
        assert_eq!(y.as_slice(), &[2.0, 3.0]);
        assert!(layer.forward(&mat(&[&[1.0, 2.0, 3.0]])).is_err());
    }

    #[test]
    fn rnn_zero_weights_give_zero_state() {
        let cell = RecurrentCell::from_parts(Matrix::<f64>::zeros(3, 4), Matrix::zeros(4, 4), vec![0.0; 4]).unwrap();
        let seq = mat(&[&[1.0, 2.0, 3.0], &[-1.0, 0.5, 2.0]]);
        assert_eq!(rnn_forward(&[cell.clone(), RecurrentCell::from_parts(Matrix::zeros(4, 4), Matrix::zeros(4, 4), vec![0.0; 4]).unwrap()], &seq).unwrap(), vec![0.0; 4]);
        assert!(rnn_forward(&[cell], &Matrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn rnn_single_step_ignores_recurrence() {
        let w_in = mat(&[&[0.5, -0.25]]);
        let cell = RecurrentCell::from_parts(w_in, mat(&[&[9.0, 9.0], &[9.0, 9.0]]), vec![0.1, 0.2]).unwrap();
        let h = rnn_forward(&[cell], &mat(&[&[2.0]])).unwrap();
        assert_eq!(h, vec![(1.0f64 + 0.1).tanh(), (-0.5f64 + 0.2).tanh()]);
    }

    #[test]
    fn rnn_two_steps_match_hand_unrolling() {
        let w_in = mat(&[&[0.5, -0.3], &[0.2, 0.8]]);
        let w_h = mat(&[&[0.1, 0.4], &[-0.6, 0.3]]);
        let b = [0.05, -0.1];
        let cell = RecurrentCell::from_parts(w_in, w_h, b.to_vec()).unwrap();
        let seq = mat(&[&[1.0, 2.0], &[-1.0, 0.5]]);
        let h1 = [
            (1.0f64 * 0.5 + 2.0 * 0.2 + 0.05).tanh(),
            (1.0f64 * -0.3 + 2.0 * 0.8 - 0.1).tanh(),
        ];
        let h2 = [
            (-0.5 + 0.5 * 0.2 + h1[0] * 0.1 + h1[1] * -0.6 + 0.05f64).tanh(),
            (-1.0 * -0.3 + 0.5 * 0.8 + h1[0] * 0.4 + h1[1] * 0.3 - 0.1f64).tanh(),
        ];
        let out = rnn_forward(&[cell], &seq).unwrap();
        assert!((out[0] - h2[0]).abs() < 1e-15 && (out[1] - h2[1]).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_init_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q: Matrix<f64> = orthogonal(6, &mut rng);
        let qtq = q.transpose().matmul(&q).unwrap();
        let eye = Matrix::<f64>::identity(6);
        for (a, b) in qtq.as_slice().iter().zip(eye.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_inference_is_identity_and_training_is_unbiased() {
        let d = Dropout::new(0.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut x = Matrix::<f64>::filled(200, 50, 1.0);
        assert!(d.apply(&mut x, false, &mut rng).is_none());
        assert!(x.as_slice().iter().all(|&v| v == 1.0));
        d.apply(&mut x, true, &mut rng).unwrap();
        let mean = x.as_slice().iter().sum::<f64>() / 10_000.0;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
        assert!(Dropout::new(1.0).is_err());
    }
}

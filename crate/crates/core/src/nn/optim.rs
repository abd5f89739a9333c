use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A model exposes its parameter tensors in a fixed order. Gradients, optimizer
/// moments and weight files all follow that order.
pub trait Model<T: Scalar> {
    fn tensors(&self) -> Vec<&Matrix<T>>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>>;
    fn tensor_names(&self) -> Vec<String>;

    /// Zero gradients shaped like the parameters.
    fn zero_grads(&self) -> Vec<Matrix<T>> {
        self.tensors()
            .iter()
            .map(|t| Matrix::zeros(t.rows(), t.cols()))
            .collect()
    }

    fn copy_from(&mut self, other: &Self)
    where
        Self: Sized,
    {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.as_mut_slice().copy_from_slice(src.as_slice());
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    MeanSquaredError,
    /// Binary cross-entropy on logits.
    BinaryCrossEntropy,
}

/// Mean loss over all entries and its gradient w.r.t. `pred`.
pub fn loss_and_grad<T: Scalar>(kind: LossKind, pred: &Matrix<T>, target: &Matrix<T>) -> (T, Matrix<T>) {
    assert_eq!(pred.shape(), target.shape(), "loss: shape mismatch");
    let n = T::lit(pred.as_slice().len().max(1) as f64);
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let mut total = T::zero();
    for ((g, &p), &y) in grad.as_mut_slice().iter_mut().zip(pred.as_slice()).zip(target.as_slice()) {
        match kind {
            LossKind::MeanSquaredError => {
                let d = p - y;
                total += d * d;
                *g = (d + d) / n;
            }
            LossKind::BinaryCrossEntropy => {
                // softplus(z) - y z, written to stay finite for large |z|
                let softplus = p.max(T::zero()) + (-p.abs()).exp().ln_1p();
                total += softplus - y * p;
                *g = (super::sigmoid(p) - y) / n;
            }
        }
    }
    (total / n, grad)
}

/// `lambda * sum(w^2)` added to the loss, `2 lambda w` added to the gradient.
pub fn add_l2_penalty<T: Scalar>(weights: &Matrix<T>, lambda: T, grad: &mut Matrix<T>) -> T {
    if lambda == T::zero() {
        return T::zero();
    }
    grad.zip_inplace(weights, |g, w| g + (lambda + lambda) * w);
    lambda * weights.sum_squares()
}

#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Matrix<T>>,
    second: Vec<Matrix<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<M: Model<T>>(model: &M, learning_rate: f64) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: model.zero_grads(),
            second: model.zero_grads(),
        }
    }

    pub fn apply<M: Model<T>>(&mut self, model: &mut M, grads: &[Matrix<T>]) {
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::lit(self.beta1);
        let b2 = T::lit(self.beta2);
        let c1 = T::one() - T::lit(self.beta1.powi(t));
        let c2 = T::one() - T::lit(self.beta2.powi(t));
        let lr = T::lit(self.learning_rate);
        let eps = T::lit(self.eps);
        let tiny = T::min_positive_value();
        let params = model.tensors_mut();
        assert_eq!(params.len(), grads.len(), "adam: gradient count");
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            let iter = p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice().iter_mut().zip(v.as_mut_slice()));
            for ((w, &gi), (mi, vi)) in iter {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                // moments of parameters with zero gradient decay geometrically;
                // subnormals would slow every later step
                if mi.abs() < tiny {
                    *mi = T::zero();
                }
                if *vi < tiny {
                    *vi = T::zero();
                }
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Evaluates `objective` (loss and gradients at the current parameters), applies
/// one Adam update and returns the pre-update loss.
pub fn backward_and_step<T, M, F>(model: &mut M, objective: F, adam: &mut AdamState<T>) -> Result<T>
where
    T: Scalar,
    M: Model<T>,
    F: FnOnce(&M) -> Result<(T, Vec<Matrix<T>>)>,
{
    let (loss, grads) = objective(model)?;
    if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence(format!("non-finite loss {loss}")));
    }
    adam.apply(model, &grads);
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        w: Matrix<f64>,
    }

    impl Model<f64> for Quadratic {
        fn tensors(&self) -> Vec<&Matrix<f64>> {
            vec![&self.w]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Matrix<f64>> {
            vec![&mut self.w]
        }
        fn tensor_names(&self) -> Vec<String> {
            vec!["w".into()]
        }
    }

    fn mse_to(target: f64) -> impl Fn(&Quadratic) -> Result<(f64, Vec<Matrix<f64>>)> {
        move |q: &Quadratic| {
            let (l, g) = loss_and_grad(LossKind::MeanSquaredError, &q.w, &Matrix::filled(1, 1, target));
            Ok((l, vec![g]))
        }
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut q = Quadratic { w: Matrix::filled(1, 1, 2.0) };
        let mut adam = AdamState::new(&q, 0.0);
        let loss = backward_and_step(&mut q, mse_to(5.0), &mut adam).unwrap();
        assert_eq!(loss, 9.0);
        assert_eq!(q.w[(0, 0)], 2.0);
    }

    #[test]
    fn adam_decreases_convex_loss_monotonically() {
        let mut q = Quadratic { w: Matrix::filled(1, 1, -3.0) };
        let mut adam = AdamState::new(&q, 0.01);
        let mut prev = f64::INFINITY;
        for _ in 0..100 {
            let loss = backward_and_step(&mut q, mse_to(1.5), &mut adam).unwrap();
            assert!(loss < prev, "{loss} >= {prev}");
            prev = loss;
        }
    }

    #[test]
    fn divergence_is_reported() {
        let mut q = Quadratic { w: Matrix::filled(1, 1, f64::INFINITY) };
        let mut adam = AdamState::new(&q, 0.1);
        assert!(matches!(
            backward_and_step(&mut q, mse_to(0.0), &mut adam),
            Err(Error::Divergence(_))
        ));
    }

    #[test]
    fn l2_penalty_value_and_gradient() {
        let w = Matrix::from_vec(1, 3, vec![1.0, -2.0, 0.5]).unwrap();
        let mut g = Matrix::zeros(1, 3);
        let p: f64 = add_l2_penalty(&w, 0.1, &mut g);
        assert!((p - 0.1 * 5.25).abs() < 1e-15);
        assert_eq!(g.as_slice(), &[0.2, -0.4, 0.1]);
    }

    #[test]
    fn bce_is_finite_for_extreme_logits() {
        let pred = Matrix::from_vec(1, 2, vec![800.0, -800.0]).unwrap();
        let target = Matrix::from_vec(1, 2, vec![0.0, 1.0]).unwrap();
        let (l, g): (f64, _) = loss_and_grad(LossKind::BinaryCrossEntropy, &pred, &target);
        assert!(l.is_finite() && (l - 800.0).abs() < 1e-9);
        assert!(g.is_finite());
    }
}

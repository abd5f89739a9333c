use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::env::ACTION_COUNT;
use crate::error::{Error, Result};
use crate::nn::{Activation, Dense, Matrix, Mlp, MlpTrace, Model};
use crate::scalar::Scalar;

/// The four agent variants compared in the evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Dqn,
    DoubleDqn,
    DuelingDqn,
    DoubleDuelingDqn,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Dqn,
        Variant::DoubleDqn,
        Variant::DuelingDqn,
        Variant::DoubleDuelingDqn,
    ];

    /// Double variants pick the next action with the policy net.
    pub fn is_double(self) -> bool {
        matches!(self, Variant::DoubleDqn | Variant::DoubleDuelingDqn)
    }

    pub fn is_dueling(self) -> bool {
        matches!(self, Variant::DuelingDqn | Variant::DoubleDuelingDqn)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Dqn => "dqn",
            Variant::DoubleDqn => "double",
            Variant::DuelingDqn => "dueling",
            Variant::DoubleDuelingDqn => "dddqn",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dqn" => Ok(Variant::Dqn),
            "double" | "doubledqn" | "double_dqn" | "ddqn" => Ok(Variant::DoubleDqn),
            "dueling" | "duelingdqn" | "dueling_dqn" => Ok(Variant::DuelingDqn),
            "dddqn" | "double_dueling" | "doubleduelingdqn" => Ok(Variant::DoubleDuelingDqn),
            other => Err(Error::Config(format!("unknown agent variant {other:?}"))),
        }
    }
}

/// Layer widths: a shared trunk (128-256-128 by default) and, for dueling
/// variants, value/advantage streams (128-64 each).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QNetShape {
    pub inputs: usize,
    pub trunk: Vec<usize>,
    pub stream: Vec<usize>,
}

impl Default for QNetShape {
    fn default() -> Self {
        QNetShape {
            inputs: crate::env::OBSERVATION_SIZE,
            trunk: vec![128, 256, 128],
            stream: vec![128, 64],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Head<T> {
    Plain(Dense<T>),
    Dueling { value: Mlp<T>, advantage: Mlp<T> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork<T> {
    variant: Variant,
    trunk: Mlp<T>,
    head: Head<T>,
}

/// Intermediate activations of a batched forward pass.
pub struct QTrace<T> {
    trunk: MlpTrace<T>,
    head: HeadTrace<T>,
    pub q: Matrix<T>,
}

enum HeadTrace<T> {
    Plain(Matrix<T>),
    Dueling { value: MlpTrace<T>, advantage: MlpTrace<T> },
}

impl<T: Scalar> QNetwork<T> {
    pub fn new<R: Rng + ?Sized>(variant: Variant, shape: &QNetShape, rng: &mut R) -> Self {
        let mut trunk_sizes = vec![shape.inputs];
        trunk_sizes.extend(&shape.trunk);
        let trunk = Mlp::new(&trunk_sizes, Activation::Relu, Activation::Relu, rng);
        let features = *trunk_sizes.last().expect("non-empty");
        let head = if variant.is_dueling() {
            let stream = |out: usize, rng: &mut R| {
                let mut sizes = vec![features];
                sizes.extend(&shape.stream);
                sizes.push(out);
                Mlp::new(&sizes, Activation::Relu, Activation::Identity, rng)
            };
            let value = stream(1, rng);
            let advantage = stream(ACTION_COUNT, rng);
            Head::Dueling { value, advantage }
        } else {
            Head::Plain(Dense::new(features, ACTION_COUNT, Activation::Identity, rng))
        };
        QNetwork { variant, trunk, head }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn has_dueling_head(&self) -> bool {
        matches!(self.head, Head::Dueling { .. })
    }

    /// Batched Q-values, one row of [`ACTION_COUNT`] entries per input row.
    pub fn forward(&self, inputs: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.forward_trace(inputs)?.q)
    }

    /// State values and raw advantages of a dueling head (`None` for plain heads).
    pub fn value_and_advantage(&self, inputs: &Matrix<T>) -> Result<Option<(Matrix<T>, Matrix<T>)>> {
        let features = self.trunk.forward(inputs)?;
        match &self.head {
            Head::Plain(_) => Ok(None),
            Head::Dueling { value, advantage } => Ok(Some((value.forward(&features)?, advantage.forward(&features)?))),
        }
    }

    pub fn forward_trace(&self, inputs: &Matrix<T>) -> Result<QTrace<T>> {
        let trunk = self.trunk.forward_trace(inputs)?;
        let features = trunk.output();
        let (head, q) = match &self.head {
            Head::Plain(dense) => {
                let q = dense.forward(features)?;
                (HeadTrace::Plain(q.clone()), q)
            }
            Head::Dueling { value, advantage } => {
                let v = value.forward_trace(features)?;
                let a = advantage.forward_trace(features)?;
                let q = dueling_combine(v.output(), a.output());
                (HeadTrace::Dueling { value: v, advantage: a }, q)
            }
        };
        Ok(QTrace { trunk, head, q })
    }

    /// Gradients of a loss with gradient `grad_q` (w.r.t. the Q matrix) in
    /// [`Model::tensors`] order.
    pub fn backward(&self, trace: &QTrace<T>, grad_q: &Matrix<T>) -> Vec<Matrix<T>> {
        let mut grads = self.zero_grads();
        let n_trunk = 2 * self.trunk.layers.len();
        let (trunk_grads, head_grads) = grads.split_at_mut(n_trunk);
        let features = trace.trunk.output();
        let grad_features = match (&self.head, &trace.head) {
            (Head::Plain(dense), HeadTrace::Plain(q)) => dense.backward(features, q, grad_q, head_grads),
            (Head::Dueling { value, advantage }, HeadTrace::Dueling { value: vt, advantage: at }) => {
                let (grad_v, grad_a) = dueling_backward(grad_q);
                let n_value = 2 * value.layers.len();
                let (vg, ag) = head_grads.split_at_mut(n_value);
                let mut g = value.backward(vt, &grad_v, vg);
                g.add_assign(&advantage.backward(at, &grad_a, ag));
                g
            }
            _ => unreachable!("trace produced by a different head"),
        };
        self.trunk.backward(&trace.trunk, &grad_features, trunk_grads);
        grads
    }
}

/// `Q(s, a) = V(s) + A(s, a) - mean_a' A(s, a')`.
pub fn dueling_combine<T: Scalar>(value: &Matrix<T>, advantage: &Matrix<T>) -> Matrix<T> {
    let n = T::lit(advantage.cols() as f64);
    let mut q = advantage.clone();
    for i in 0..q.rows() {
        let v = value[(i, 0)];
        let row = q.row_mut(i);
        let mean = row.iter().copied().sum::<T>() / n;
        for x in row.iter_mut() {
            *x = v + *x - mean;
        }
    }
    q
}

fn dueling_backward<T: Scalar>(grad_q: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
    let n = T::lit(grad_q.cols() as f64);
    let mut grad_v = Matrix::zeros(grad_q.rows(), 1);
    let mut grad_a = grad_q.clone();
    for i in 0..grad_q.rows() {
        let total: T = grad_q.row(i).iter().copied().sum();
        grad_v[(i, 0)] = total;
        let mean = total / n;
        grad_a.row_mut(i).iter_mut().for_each(|g| *g -= mean);
    }
    (grad_v, grad_a)
}

impl<T: Scalar> Model<T> for QNetwork<T> {
    fn tensors(&self) -> Vec<&Matrix<T>> {
        let mut v = self.trunk.tensors();
        match &self.head {
            Head::Plain(d) => v.extend(d.tensors()),
            Head::Dueling { value, advantage } => {
                v.extend(value.tensors());
                v.extend(advantage.tensors());
            }
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut v = self.trunk.tensors_mut();
        match &mut self.head {
            Head::Plain(d) => v.extend(d.tensors_mut()),
            Head::Dueling { value, advantage } => {
                v.extend(value.tensors_mut());
                v.extend(advantage.tensors_mut());
            }
        }
        v
    }

    fn tensor_names(&self) -> Vec<String> {
        let mut v = self.trunk.tensor_names("trunk");
        match &self.head {
            Head::Plain(_) => v.extend(["head.weight".to_string(), "head.bias".to_string()]),
            Head::Dueling { value, advantage } => {
                v.extend(value.tensor_names("value"));
                v.extend(advantage.tensor_names("advantage"));
            }
        }
        v
    }
}

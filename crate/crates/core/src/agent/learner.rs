use rand::Rng;

use crate::env::{Action, Observation, ACTION_COUNT, OBSERVATION_SIZE};
use crate::error::{Error, Result};
use crate::nn::{backward_and_step, AdamState, Matrix, Model};
use crate::scalar::Scalar;

use super::qnet::{QNetShape, QNetwork, Variant};
use super::replay::{ReplayBuffer, Transition};

#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Per-episode rate of the exponential decay towards `eps_end`.
    pub eps_decay: f64,
    pub guided_episodes: usize,
    pub guided_accel_prob: f64,
    pub batch_size: usize,
    pub target_sync_period: usize,
    pub learning_rate: f64,
    pub buffer_capacity: usize,
    pub warmup: usize,
    /// Environment steps between gradient updates.
    pub train_interval: usize,
    pub shape: QNetShape,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.9,
            eps_start: 1.0,
            eps_end: 0.05,
            // reaches 0.1 at episode 300
            eps_decay: 19f64.ln() / 300.0,
            guided_episodes: 50,
            guided_accel_prob: 0.8,
            batch_size: 64,
            target_sync_period: 1000,
            learning_rate: 5e-4,
            buffer_capacity: 50_000,
            warmup: 5_000,
            train_interval: 1,
            shape: QNetShape::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("gamma", self.gamma),
            ("eps_start", self.eps_start),
            ("eps_end", self.eps_end),
            ("guided_accel_prob", self.guided_accel_prob),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} {p} outside [0, 1]")));
            }
        }
        if !(self.eps_decay >= 0.0 && self.eps_decay.is_finite()) {
            return Err(Error::Config(format!("eps_decay {} must be non-negative", self.eps_decay)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        let counts = [
            ("batch_size", self.batch_size),
            ("target_sync_period", self.target_sync_period),
            ("buffer_capacity", self.buffer_capacity),
            ("train_interval", self.train_interval),
        ];
        for (name, n) in counts {
            if n == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.warmup > self.buffer_capacity {
            return Err(Error::Config(format!(
                "warmup {} exceeds buffer capacity {}",
                self.warmup, self.buffer_capacity
            )));
        }
        if self.shape.inputs != OBSERVATION_SIZE || self.shape.trunk.is_empty() || self.shape.trunk.contains(&0) {
            return Err(Error::Config(format!("invalid network shape {:?}", self.shape)));
        }
        Ok(())
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        self.eps_end + (self.eps_start - self.eps_end) * (-self.eps_decay * episode as f64).exp()
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One-step target. Double variants evaluate the policy net's choice with the
/// target net; the others take the target net's own maximum.
pub fn bellman_target<T: Scalar>(double: bool, gamma: T, reward: T, done: bool, q_policy_next: &[T], q_target_next: &[T]) -> T {
    if done {
        return reward;
    }
    let next = if double {
        q_target_next[argmax(q_policy_next)]
    } else {
        q_target_next[argmax(q_target_next)]
    };
    reward + gamma * next
}

fn feature_matrix<T: Scalar>(obs: &[&Observation]) -> Matrix<T> {
    let mut data = Vec::with_capacity(obs.len() * OBSERVATION_SIZE);
    for o in obs {
        data.extend(o.features().iter().map(|&x| T::lit(x)));
    }
    Matrix::from_vec(obs.len(), OBSERVATION_SIZE, data).expect("feature shape")
}

/// Policy and target networks with their optimizer.
#[derive(Clone, Debug)]
pub struct DqnAgent<T: Scalar> {
    cfg: AgentConfig,
    policy: QNetwork<T>,
    target: QNetwork<T>,
    adam: AdamState<T>,
    updates: usize,
}

impl<T: Scalar> DqnAgent<T> {
    pub fn new<R: Rng + ?Sized>(variant: Variant, cfg: AgentConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let policy = QNetwork::new(variant, &cfg.shape, rng);
        let target = policy.clone();
        let adam = AdamState::new(&policy, cfg.learning_rate);
        Ok(DqnAgent {
            cfg,
            policy,
            target,
            adam,
            updates: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn variant(&self) -> Variant {
        self.policy.variant()
    }

    pub fn policy(&self) -> &QNetwork<T> {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut QNetwork<T> {
        &mut self.policy
    }

    pub fn target(&self) -> &QNetwork<T> {
        &self.target
    }

    pub fn target_mut(&mut self) -> &mut QNetwork<T> {
        &mut self.target
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn sync_target(&mut self) {
        self.target.copy_from(&self.policy);
    }

    pub fn q_values(&self, obs: &Observation) -> Result<[T; ACTION_COUNT]> {
        let q = self.policy.forward(&feature_matrix(&[obs]))?;
        if !q.is_finite() {
            return Err(Error::Divergence(format!("non-finite Q-values {:?}", q.as_slice())));
        }
        let mut out = [T::zero(); ACTION_COUNT];
        out.copy_from_slice(q.row(0));
        Ok(out)
    }

    pub fn greedy_action(&self, obs: &Observation) -> Result<Action> {
        Action::new(argmax(&self.q_values(obs)?))
    }

    /// Guided draw during the first episodes, ε-greedy afterwards.
    pub fn select_action<R: Rng + ?Sized>(&self, obs: &Observation, episode: usize, rng: &mut R) -> Result<Action> {
        if episode < self.cfg.guided_episodes {
            return Ok(guided_action(self.cfg.guided_accel_prob, rng));
        }
        self.epsilon_greedy(obs, self.cfg.epsilon(episode), rng)
    }

    pub fn epsilon_greedy<R: Rng + ?Sized>(&self, obs: &Observation, epsilon: f64, rng: &mut R) -> Result<Action> {
        if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
            return Action::new(rng.gen_range(0..ACTION_COUNT));
        }
        self.greedy_action(obs)
    }

    /// Targets for a batch of transitions.
    pub fn targets(&self, batch: &[&Transition]) -> Result<Vec<T>> {
        let next: Vec<&Observation> = batch.iter().map(|t| &t.s_next).collect();
        let x = feature_matrix(&next);
        let q_target = self.target.forward(&x)?;
        let q_policy = if self.variant().is_double() {
            Some(self.policy.forward(&x)?)
        } else {
            None
        };
        let gamma = T::lit(self.cfg.gamma);
        Ok(batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let qt = q_target.row(i);
                let qp = q_policy.as_ref().map_or(qt, |m| m.row(i));
                bellman_target(self.variant().is_double(), gamma, T::lit(t.r), t.done, qp, qt)
            })
            .collect())
    }

    /// One gradient step on a uniformly sampled minibatch. Returns the
    /// pre-update mean squared TD error.
    pub fn train_step<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<T> {
        if !buffer.is_warm() {
            return Err(Error::BufferWarmingUp {
                size: buffer.len(),
                warmup: buffer.warmup(),
            });
        }
        let batch = buffer.sample(self.cfg.batch_size, rng);
        self.fit_batch(&batch)
    }

    /// Gradient step on an explicit batch.
    pub fn fit_batch(&mut self, batch: &[&Transition]) -> Result<T> {
        let y = self.targets(batch)?;
        let states: Vec<&Observation> = batch.iter().map(|t| &t.s).collect();
        let x = feature_matrix(&states);
        let actions: Vec<usize> = batch.iter().map(|t| t.a.index()).collect();
        let n = T::lit(batch.len() as f64);
        let loss = backward_and_step(
            &mut self.policy,
            |net: &QNetwork<T>| {
                let trace = net.forward_trace(&x)?;
                let mut grad = Matrix::zeros(batch.len(), ACTION_COUNT);
                let mut loss = T::zero();
                for (i, (&a, &yi)) in actions.iter().zip(&y).enumerate() {
                    let diff = trace.q[(i, a)] - yi;
                    loss += diff * diff;
                    grad[(i, a)] = T::lit(2.0) * diff / n;
                }
                Ok((loss / n, net.backward(&trace, &grad)))
            },
            &mut self.adam,
        )?;
        self.updates += 1;
        if self.updates.is_multiple_of(self.cfg.target_sync_period) {
            self.sync_target();
        }
        Ok(loss)
    }
}

/// Accelerate with probability `p_accel`, otherwise one of the other actions uniformly.
pub fn guided_action<R: Rng + ?Sized>(p_accel: f64, rng: &mut R) -> Action {
    if rng.gen::<f64>() < p_accel {
        Action::ACCELERATE
    } else {
        Action::new(rng.gen_range(0..ACTION_COUNT - 1)).expect("index below ACCELERATE")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs(speed: f64) -> Observation {
        Observation {
            speed,
            prev_action: Action::COAST,
            d_rel: 30.0,
            v_rel: 0.0,
            theta: 0,
            detected: true,
        }
    }

    fn small_cfg() -> AgentConfig {
        AgentConfig {
            shape: QNetShape {
                inputs: OBSERVATION_SIZE,
                trunk: vec![8],
                stream: vec![4],
            },
            batch_size: 2,
            warmup: 2,
            buffer_capacity: 16,
            ..Default::default()
        }
    }

    #[test]
    fn epsilon_schedule() {
        let c = AgentConfig::default();
        assert_eq!(c.epsilon(0), 1.0);
        assert!((c.epsilon(300) - 0.1).abs() < 1e-12);
        assert!(c.epsilon(10_000) - 0.05 < 1e-12);
    }

    #[test]
    fn bellman_hand_values() {
        let qp: [f64; 3] = [1.0, 3.0, 2.0];
        let qt = [0.5, 1.0, 4.0];
        assert!((bellman_target(true, 0.9, 0.0, false, &qp, &qt) - 0.9).abs() < 1e-12);
        assert!((bellman_target(false, 0.9, 0.0, false, &qp, &qt) - 3.6).abs() < 1e-12);
        assert_eq!(bellman_target(true, 0.9, -200.0, true, &qp, &qt), -200.0);
        assert_eq!(bellman_target(false, 0.0, 1.5, false, &qp, &qt), 1.5);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0; 6]), 0);
    }

    #[test]
    fn warming_up_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut agent: DqnAgent<f64> = DqnAgent::new(Variant::Dqn, small_cfg(), &mut rng).unwrap();
        let buf = ReplayBuffer::new(16, 2);
        assert!(matches!(
            agent.train_step(&buf, &mut rng),
            Err(Error::BufferWarmingUp { size: 0, warmup: 2 })
        ));
    }

    #[test]
    fn loss_with_zero_rewards_and_gamma_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = AgentConfig { gamma: 0.0, ..small_cfg() };
        let mut agent: DqnAgent<f64> = DqnAgent::new(Variant::Dqn, cfg, &mut rng).unwrap();
        let t1 = Transition { s: obs(3.0), a: Action::new(1).unwrap(), r: 0.0, s_next: obs(4.0), done: false };
        let t2 = Transition { s: obs(9.0), a: Action::new(4).unwrap(), r: 0.0, s_next: obs(8.0), done: true };
        let q1 = agent.q_values(&t1.s).unwrap()[1];
        let q2 = agent.q_values(&t2.s).unwrap()[4];
        let loss = agent.fit_batch(&[&t1, &t2]).unwrap();
        assert!((loss - (q1 * q1 + q2 * q2) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn sync_copies_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = AgentConfig { target_sync_period: 3, ..small_cfg() };
        let mut agent: DqnAgent<f64> = DqnAgent::new(Variant::DoubleDuelingDqn, cfg, &mut rng).unwrap();
        let t = Transition { s: obs(3.0), a: Action::new(0).unwrap(), r: 1.0, s_next: obs(4.0), done: false };
        agent.fit_batch(&[&t]).unwrap();
        assert_ne!(agent.policy(), agent.target());
        agent.fit_batch(&[&t]).unwrap();
        agent.fit_batch(&[&t]).unwrap();
        assert_eq!(agent.policy(), agent.target());
    }

    #[test]
    fn guided_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut counts = [0usize; ACTION_COUNT];
        for _ in 0..n {
            counts[guided_action(0.8, &mut rng).index()] += 1;
        }
        let f = counts[5] as f64 / n as f64;
        assert!((f - 0.8).abs() < 0.01, "{f}");
        for &c in &counts[..5] {
            let p = c as f64 / n as f64;
            assert!((p - 0.04).abs() < 0.004, "{counts:?}");
        }
    }
}

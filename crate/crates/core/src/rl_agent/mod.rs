//! Learning agents behind a small interface: a TD3 actor-critic and a
//! uniform random baseline. All emitted actions lie in the input box.

mod adam;
mod mlp;
mod replay;
mod td3;
mod weights;

use nalgebra::DVector;
use rand::{Rng, RngCore};

use crate::set_algebra::IntervalBox;

pub use adam::Adam;
pub use mlp::{ForwardCache, Layer, Mlp, OutputActivation};
pub use replay::{ReplayBuffer, Transition, DEFAULT_REPLAY_CAPACITY};
pub use td3::{actor_loss_and_grad, critic_loss_and_grad, Td3, Td3Config, UpdateDiagnostics};
pub use weights::{read_networks, write_networks, StoredNetwork};

pub trait Agent {
    /// Deterministic policy output.
    fn act(&self, obs: &[f64]) -> DVector<f64>;

    /// Action used while collecting training data.
    fn act_exploratory(&self, obs: &[f64], rng: &mut dyn RngCore) -> DVector<f64>;

    /// Action used in evaluation. Defaults to [`Agent::act`].
    fn eval_action(&self, obs: &[f64], _rng: &mut dyn RngCore) -> DVector<f64> {
        self.act(obs)
    }

    fn observe_transition(&mut self, t: Transition);

    fn update(&mut self, rng: &mut dyn RngCore) -> UpdateDiagnostics;
}

/// TD3 learner with its own replay buffer. The first `warmup_steps`
/// exploratory actions are uniform over the input box.
#[derive(Debug, Clone)]
pub struct Td3Agent {
    pub learner: Td3,
    pub buffer: ReplayBuffer,
    seen: usize,
}

impl Td3Agent {
    pub fn new(learner: Td3) -> Self {
        let buffer = ReplayBuffer::new(learner.config().replay_capacity);
        Self { learner, buffer, seen: 0 }
    }

    pub fn transitions_seen(&self) -> usize {
        self.seen
    }
}

impl Agent for Td3Agent {
    fn act(&self, obs: &[f64]) -> DVector<f64> {
        self.learner.act(obs)
    }

    fn act_exploratory(&self, obs: &[f64], rng: &mut dyn RngCore) -> DVector<f64> {
        if self.seen < self.learner.config().warmup_steps {
            uniform_in(self.learner.u_box(), rng)
        } else {
            self.learner.act_exploratory(obs, rng)
        }
    }

    fn observe_transition(&mut self, t: Transition) {
        self.seen += 1;
        self.buffer.push(t);
    }

    fn update(&mut self, rng: &mut dyn RngCore) -> UpdateDiagnostics {
        self.learner.update(&self.buffer, rng)
    }
}

/// Uniform random policy. `act` has no randomness source, so it returns
/// the box center; exploration and evaluation draw uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomAgent {
    u_box: IntervalBox,
}

impl RandomAgent {
    pub fn new(u_box: IntervalBox) -> Self {
        Self { u_box }
    }
}

fn uniform_in(b: &IntervalBox, rng: &mut dyn RngCore) -> DVector<f64> {
    DVector::from_fn(b.dim(), |i, _| rng.random_range(b.lower()[i]..=b.upper()[i]))
}

impl Agent for RandomAgent {
    fn act(&self, _obs: &[f64]) -> DVector<f64> {
        self.u_box.center()
    }

    fn act_exploratory(&self, _obs: &[f64], rng: &mut dyn RngCore) -> DVector<f64> {
        uniform_in(&self.u_box, rng)
    }

    fn eval_action(&self, _obs: &[f64], rng: &mut dyn RngCore) -> DVector<f64> {
        uniform_in(&self.u_box, rng)
    }

    fn observe_transition(&mut self, _t: Transition) {}

    fn update(&mut self, _rng: &mut dyn RngCore) -> UpdateDiagnostics {
        UpdateDiagnostics { skipped: true, ..Default::default() }
    }
}

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::mlp::{Mlp, OutputActivation};
use super::replay::{ReplayBuffer, Transition};
use super::weights::{read_networks, write_networks};
use crate::error::{Error, Result};
use crate::set_algebra::IntervalBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Td3Config {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub tau: f64,
    pub policy_delay: u64,
    pub target_noise: f64,
    pub target_noise_clip: f64,
    pub exploration_noise: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub replay_capacity: usize,
    /// Uniformly random exploratory actions before the policy takes over.
    pub warmup_steps: usize,
    /// Weight of `mean ‖π(s)‖²` (normalized actions) added to the actor
    /// loss. Keeps the tanh output away from saturation, where the policy
    /// gradient vanishes.
    pub action_l2: f64,
    /// Rewards are multiplied by this before entering the TD targets. The
    /// ±100 terminal rewards otherwise dominate the critic's early fit.
    pub reward_scale: f64,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            gamma: 0.99,
            tau: 0.005,
            policy_delay: 2,
            target_noise: 0.2,
            target_noise_clip: 0.5,
            exploration_noise: 0.1,
            batch_size: 128,
            learning_rate: 3e-4,
            replay_capacity: super::replay::DEFAULT_REPLAY_CAPACITY,
            warmup_steps: 1000,
            action_l2: 0.03,
            reward_scale: 0.1,
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.gamma)
            && self.tau > 0.0
            && self.tau <= 1.0
            && self.policy_delay > 0
            && self.batch_size > 0
            && self.learning_rate > 0.0
            && self.target_noise >= 0.0
            && self.target_noise_clip >= 0.0
            && self.exploration_noise >= 0.0
            && self.action_l2 >= 0.0
            && self.reward_scale > 0.0
            && self.reward_scale.is_finite()
            && self.replay_capacity > 0
            && !self.hidden.contains(&0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid TD3 configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateDiagnostics {
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
    /// Buffer smaller than a batch; nothing was updated.
    pub skipped: bool,
}

/// Mean squared error `mean (Q(x) − y)²` of a scalar critic, with its flat
/// parameter gradient.
pub fn critic_loss_and_grad(critic: &Mlp, inputs: &DMatrix<f64>, targets: &DVector<f64>) -> (f64, Vec<f64>) {
    let cache = critic.forward_cached(inputs);
    let q = cache.output();
    let b = inputs.ncols() as f64;
    let resid = DMatrix::from_fn(1, inputs.ncols(), |_, j| q[(0, j)] - targets[j]);
    let loss = resid.iter().map(|r| r * r).sum::<f64>() / b;
    let (grad, _) = critic.backward(&cache, &(resid * (2.0 / b)));
    (loss, grad)
}

/// Deterministic policy-gradient loss
/// `−mean Q(s, c + r ⊙ π(s)) + β mean ‖π(s)‖²` with the flat gradient with
/// respect to the actor parameters.
pub fn actor_loss_and_grad(
    actor: &Mlp,
    critic: &Mlp,
    obs: &DMatrix<f64>,
    center: &DVector<f64>,
    radius: &DVector<f64>,
    action_l2: f64,
) -> (f64, Vec<f64>) {
    let b = obs.ncols() as f64;
    let a_cache = actor.forward_cached(obs);
    let pi = a_cache.output();
    let actions = scale_actions(pi, center, radius);
    let c_cache = critic.forward_cached(&stack(obs, &actions));
    let loss = -c_cache.output().sum() / b + action_l2 * pi.norm_squared() / b;
    let (_, d_in) = critic.backward(&c_cache, &DMatrix::from_element(1, obs.ncols(), -1.0 / b));
    let mut d_act = d_in.rows(obs.nrows(), actions.nrows()).into_owned();
    for mut col in d_act.column_iter_mut() {
        col.component_mul_assign(radius);
    }
    d_act += pi * (2.0 * action_l2 / b);
    let (grad, _) = actor.backward(&a_cache, &d_act);
    (loss, grad)
}

fn scale_actions(normalized: &DMatrix<f64>, center: &DVector<f64>, radius: &DVector<f64>) -> DMatrix<f64> {
    let mut out = normalized.clone();
    for mut col in out.column_iter_mut() {
        col.component_mul_assign(radius);
        col += center;
    }
    out
}

fn stack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

fn columns(rows: usize, items: impl ExactSizeIterator<Item = impl AsRef<[f64]>>) -> DMatrix<f64> {
    let n = items.len();
    let mut out = DMatrix::zeros(rows, n);
    for (j, v) in items.enumerate() {
        out.column_mut(j).copy_from_slice(v.as_ref());
    }
    out
}

const NET_NAMES: [&str; 6] = [
    "actor",
    "critic1",
    "critic2",
    "actor_target",
    "critic1_target",
    "critic2_target",
];

/// Twin-delayed deterministic actor-critic learner.
#[derive(Debug, Clone)]
pub struct Td3 {
    cfg: Td3Config,
    u_box: IntervalBox,
    center: DVector<f64>,
    radius: DVector<f64>,
    obs_dim: usize,
    actor: Mlp,
    critic1: Mlp,
    critic2: Mlp,
    actor_target: Mlp,
    critic1_target: Mlp,
    critic2_target: Mlp,
    actor_opt: Adam,
    critic1_opt: Adam,
    critic2_opt: Adam,
    updates: u64,
}

impl Td3 {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, u_box: &IntervalBox, cfg: Td3Config, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if u_box.lower().iter().chain(u_box.upper().iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("action box must be bounded".into()));
        }
        let m = u_box.dim();
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend(&cfg.hidden);
        actor_sizes.push(m);
        let mut critic_sizes = vec![obs_dim + m];
        critic_sizes.extend(&cfg.hidden);
        critic_sizes.push(1);
        let actor = Mlp::new(&actor_sizes, OutputActivation::Tanh, rng)?;
        let critic1 = Mlp::new(&critic_sizes, OutputActivation::Linear, rng)?;
        let critic2 = Mlp::new(&critic_sizes, OutputActivation::Linear, rng)?;
        let lr = cfg.learning_rate;
        Ok(Self {
            actor_opt: Adam::new(actor.num_params(), lr),
            critic1_opt: Adam::new(critic1.num_params(), lr),
            critic2_opt: Adam::new(critic2.num_params(), lr),
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            center: u_box.center(),
            radius: u_box.radius(),
            u_box: u_box.clone(),
            obs_dim,
            cfg,
            updates: 0,
        })
    }

    pub fn config(&self) -> &Td3Config {
        &self.cfg
    }

    pub fn config_mut(&mut self) -> &mut Td3Config {
        &mut self.cfg
    }

    pub fn u_box(&self) -> &IntervalBox {
        &self.u_box
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critics(&self) -> (&Mlp, &Mlp) {
        (&self.critic1, &self.critic2)
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    fn networks(&self) -> [&Mlp; 6] {
        [
            &self.actor,
            &self.critic1,
            &self.critic2,
            &self.actor_target,
            &self.critic1_target,
            &self.critic2_target,
        ]
    }

    fn networks_mut(&mut self) -> [&mut Mlp; 6] {
        [
            &mut self.actor,
            &mut self.critic1,
            &mut self.critic2,
            &mut self.actor_target,
            &mut self.critic1_target,
            &mut self.critic2_target,
        ]
    }

    /// Sets every parameter of every network (targets included) to zero.
    pub fn zero_weights(&mut self) {
        for net in self.networks_mut() {
            let n = net.num_params();
            net.set_params(&vec![0.0; n]).expect("matching length");
        }
    }

    /// Distance between live and target parameters, all three pairs.
    pub fn target_gap(&self) -> f64 {
        [
            (&self.actor, &self.actor_target),
            (&self.critic1, &self.critic1_target),
            (&self.critic2, &self.critic2_target),
        ]
        .iter()
        .flat_map(|(a, b)| a.params().into_iter().zip(b.params()).map(|(x, y)| (x - y).powi(2)))
        .sum::<f64>()
        .sqrt()
    }

    /// Polyak step of all targets toward the live networks.
    pub fn soft_update_targets(&mut self) {
        let tau = self.cfg.tau;
        self.actor_target.soft_update_from(&self.actor, tau);
        self.critic1_target.soft_update_from(&self.critic1, tau);
        self.critic2_target.soft_update_from(&self.critic2, tau);
    }

    pub fn act(&self, obs: &[f64]) -> DVector<f64> {
        let a = self.actor.forward_one(obs);
        a.component_mul(&self.radius) + &self.center
    }

    pub fn act_exploratory(&self, obs: &[f64], rng: &mut dyn RngCore) -> DVector<f64> {
        let mut u = self.act(obs);
        if self.cfg.exploration_noise > 0.0 {
            let normal = Normal::new(0.0, self.cfg.exploration_noise).expect("finite std");
            for i in 0..u.len() {
                u[i] += normal.sample(rng) * self.radius[i];
            }
        }
        crate::environment::clamp_to_box(&u, &self.u_box)
    }

    /// Clipped double-Q targets `r + γ (1 − done) min(Q₁′, Q₂′)(ŷ′, ã′)`.
    pub fn td_targets(&self, batch: &[&Transition], rng: &mut dyn RngCore) -> DVector<f64> {
        let next = columns(self.obs_dim, batch.iter().map(|t| &t.next_obs));
        let mut a_next = self.actor_target.forward(&next);
        if self.cfg.target_noise > 0.0 {
            let normal = Normal::new(0.0, self.cfg.target_noise).expect("finite std");
            let clip = self.cfg.target_noise_clip;
            a_next.apply(|a| *a = (*a + normal.sample(rng).clamp(-clip, clip)).clamp(-1.0, 1.0));
        }
        let u_next = scale_actions(&a_next, &self.center, &self.radius);
        let x = stack(&next, &u_next);
        let q1 = self.critic1_target.forward(&x);
        let q2 = self.critic2_target.forward(&x);
        DVector::from_fn(batch.len(), |j, _| {
            let t = batch[j];
            let r = self.cfg.reward_scale * t.reward;
            if self.cfg.gamma == 0.0 || t.done {
                r
            } else {
                r + self.cfg.gamma * q1[(0, j)].min(q2[(0, j)])
            }
        })
    }

    /// One TD3 step on a batch drawn from `buffer`.
    pub fn update(&mut self, buffer: &ReplayBuffer, rng: &mut dyn RngCore) -> UpdateDiagnostics {
        let Some(batch) = buffer.sample(self.cfg.batch_size, rng) else {
            return UpdateDiagnostics { skipped: true, ..Default::default() };
        };
        self.update_on_batch(&batch, rng)
    }

    pub fn update_on_batch(&mut self, batch: &[&Transition], rng: &mut dyn RngCore) -> UpdateDiagnostics {
        let targets = self.td_targets(batch, rng);
        let obs = columns(self.obs_dim, batch.iter().map(|t| &t.obs));
        let acts = columns(self.radius.len(), batch.iter().map(|t| &t.action));
        let x = stack(&obs, &acts);

        let (l1, g1) = critic_loss_and_grad(&self.critic1, &x, &targets);
        let step = self.critic1_opt.step(&g1);
        self.critic1.add_scaled(&step, 1.0);
        let (l2, g2) = critic_loss_and_grad(&self.critic2, &x, &targets);
        let step = self.critic2_opt.step(&g2);
        self.critic2.add_scaled(&step, 1.0);
        self.updates += 1;

        let mut diag = UpdateDiagnostics {
            critic_loss: 0.5 * (l1 + l2),
            actor_loss: None,
            skipped: false,
        };
        if self.updates.is_multiple_of(self.cfg.policy_delay) {
            let (la, ga) = actor_loss_and_grad(&self.actor, &self.critic1, &obs, &self.center, &self.radius, self.cfg.action_l2);
            let step = self.actor_opt.step(&ga);
            self.actor.add_scaled(&step, 1.0);
            self.soft_update_targets();
            diag.actor_loss = Some(la);
        }
        diag
    }

    /// Writes all six networks (live and target).
    pub fn save(&self, path: &Path) -> Result<()> {
        let nets = self.networks();
        let named: Vec<(&str, &Mlp)> = NET_NAMES.iter().copied().zip(nets).collect();
        write_networks(path, &named)
    }

    /// Overwrites all parameters from a file written by [`Td3::save`]; the
    /// stored shapes must match this learner's architecture.
    pub fn load_params(&mut self, path: &Path) -> Result<()> {
        let stored = read_networks(path)?;
        if stored.len() != NET_NAMES.len() {
            return Err(Error::WeightFormat(format!(
                "expected {} networks, found {}",
                NET_NAMES.len(),
                stored.len()
            )));
        }
        for ((name, net), s) in NET_NAMES.iter().zip(self.networks_mut()).zip(&stored) {
            if s.name != *name || s.shapes != net.shapes() {
                return Err(Error::WeightFormat(format!(
                    "network `{}` {:?} does not match `{}` {:?}",
                    s.name,
                    s.shapes,
                    name,
                    net.shapes()
                )));
            }
            net.set_params(&s.params)?;
        }
        Ok(())
    }

    pub fn load<R: Rng + ?Sized>(
        path: &Path,
        obs_dim: usize,
        u_box: &IntervalBox,
        cfg: Td3Config,
        rng: &mut R,
    ) -> Result<Self> {
        let mut td3 = Self::new(obs_dim, u_box, cfg, rng)?;
        td3.load_params(path)?;
        Ok(td3)
    }

}

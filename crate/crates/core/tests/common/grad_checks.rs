//! Analytic TD3 gradients against central finite differences. Each check
//! returns the largest relative error over its toy networks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::rng;
use ddsafe::rl_agent::{actor_loss_and_grad, critic_loss_and_grad, Mlp, OutputActivation, Td3, Td3Config, Transition};
use ddsafe::set_algebra::IntervalBox;

/// Central-difference step.
pub const FD_EPS: f64 = 1e-5;
/// Largest accepted relative error between analytic and numeric gradients.
pub const GRAD_REL_TOL: f64 = 1e-4;

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = DVector::from_column_slice(a).norm().max(DVector::from_column_slice(b).norm());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn numeric_grad(params: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + FD_EPS;
            let up = f(&p);
            p[i] = orig - FD_EPS;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * FD_EPS)
        })
        .collect()
}

fn batch(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    super::uniform_matrix(rows, cols, -1.0, 1.0, &mut rng(seed))
}

pub fn toy_learner(seed: u64, cfg: Td3Config) -> Td3 {
    let ubox = IntervalBox::from_slices(&[-1.0, -0.5], &[1.0, 1.5]).unwrap();
    Td3::new(3, &ubox, cfg, &mut rng(seed)).unwrap()
}

pub fn random_transitions(n: usize, seed: u64) -> Vec<Transition> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| Transition {
            obs: (0..3).map(|_| r.random_range(-1.0..1.0)).collect(),
            action: vec![r.random_range(-1.0..1.0), r.random_range(-0.5..1.5)],
            reward: r.random_range(-1.0..1.0),
            next_obs: (0..3).map(|_| r.random_range(-1.0..1.0)).collect(),
            done: r.random_bool(0.2),
        })
        .collect()
}

/// Mean squared TD loss with respect to critic parameters, three shapes.
pub fn critic_parameters() -> f64 {
    let mut worst = 0.0f64;
    for (sizes, seed) in [(vec![3, 4, 1], 1u64), (vec![5, 6, 6, 1], 2), (vec![2, 1], 3)] {
        let critic = Mlp::new(&sizes, OutputActivation::Linear, &mut rng(seed)).unwrap();
        let x = batch(sizes[0], 7, seed + 10);
        let y = DVector::from_fn(7, |i, _| (i as f64 * 0.3).sin());
        let (_, analytic) = critic_loss_and_grad(&critic, &x, &y);
        let numeric = numeric_grad(&critic.params(), |p| {
            let mut c = critic.clone();
            c.set_params(p).unwrap();
            critic_loss_and_grad(&c, &x, &y).0
        });
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

/// Policy loss (including the action penalty) with respect to actor
/// parameters, through a fixed critic.
pub fn actor_parameters() -> f64 {
    let mut worst = 0.0f64;
    for (obs, m, hidden, seed, l2) in [(3usize, 2usize, 4usize, 4u64, 0.0), (4, 1, 5, 5, 0.7), (2, 3, 3, 6, 2.0)] {
        let actor = Mlp::new(&[obs, hidden, m], OutputActivation::Tanh, &mut rng(seed)).unwrap();
        let critic = Mlp::new(&[obs + m, hidden, hidden, 1], OutputActivation::Linear, &mut rng(seed + 1)).unwrap();
        let s = batch(obs, 6, seed + 20);
        let center = DVector::from_fn(m, |i, _| 0.1 * i as f64 - 0.2);
        let radius = DVector::from_fn(m, |i, _| 0.5 + i as f64);
        let (_, analytic) = actor_loss_and_grad(&actor, &critic, &s, &center, &radius, l2);
        let numeric = numeric_grad(&actor.params(), |p| {
            let mut a = actor.clone();
            a.set_params(p).unwrap();
            actor_loss_and_grad(&a, &critic, &s, &center, &radius, l2).0
        });
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

/// Backpropagated gradient with respect to the network input.
pub fn network_input() -> f64 {
    let net = Mlp::new(&[4, 5, 3], OutputActivation::Tanh, &mut rng(7)).unwrap();
    let x = batch(4, 3, 8);
    let w = batch(3, 3, 9);
    // scalar objective sum(w ⊙ f(x))
    let objective = |x: &DMatrix<f64>| net.forward(x).component_mul(&w).sum();
    let (_, d_in) = net.backward(&net.forward_cached(&x), &w);
    let numeric = numeric_grad(x.as_slice(), |p| objective(&DMatrix::from_column_slice(4, 3, p)));
    rel_err(d_in.as_slice(), &numeric)
}

/// Both critics of a learner on its own clipped double-Q targets.
pub fn learner_critics() -> f64 {
    let td3 = toy_learner(10, Td3Config { hidden: vec![4], ..Default::default() });
    let ts = random_transitions(5, 11);
    let refs: Vec<&Transition> = ts.iter().collect();
    let targets = td3.td_targets(&refs, &mut rng(12));
    let mut x = DMatrix::zeros(5, ts.len());
    for (j, t) in ts.iter().enumerate() {
        x.column_mut(j).copy_from_slice(&[t.obs.clone(), t.action.clone()].concat());
    }
    let (c1, c2) = td3.critics();
    let mut worst = 0.0f64;
    for critic in [c1, c2] {
        let (_, analytic) = critic_loss_and_grad(critic, &x, &targets);
        let numeric = numeric_grad(&critic.params(), |p| {
            let mut c = critic.clone();
            c.set_params(p).unwrap();
            critic_loss_and_grad(&c, &x, &targets).0
        });
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

pub const ALL: &[(&str, fn() -> f64)] = &[
    ("critic_parameters", critic_parameters),
    ("actor_parameters", actor_parameters),
    ("network_input", network_input),
    ("learner_critics", learner_critics),
];

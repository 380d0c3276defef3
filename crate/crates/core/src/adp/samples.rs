use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basis::Basis;
use super::{AdpCost, CriticActorWeights};
use crate::error::{Error, Result};
use crate::linalg::trapezoid;

/// Grid samples of one control interval as seen by the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRecord {
    /// Start time of the interval (s).
    pub t: f64,
    /// Measured states on the integrator grid, both ends included.
    pub states: Vec<DVector<f64>>,
    /// Feedback actually applied at each grid point (after actuator clamping).
    pub applied: Vec<DVector<f64>>,
    /// Grid spacing (s).
    pub dt: f64,
}

/// A system the learner can only observe and actuate.
///
/// Implementations must not leak drift or input dynamics; the learner sees
/// measured states and the feedback the actuators really applied.
pub trait LearningEnvironment {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// Current time (s).
    fn time(&self) -> f64;
    fn observe(&self) -> DVector<f64>;
    /// Requests the feedback `mu` for one control interval and returns the
    /// grid record of that interval.
    fn advance(&mut self, mu: &DVector<f64>) -> Result<IntervalRecord>;
}

/// One IRL data tuple spanning a control interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSample {
    /// Start time of the interval (s).
    pub t: f64,
    pub path: Vec<DVector<f64>>,
    /// Behaviour feedback `μ_b` on the grid.
    pub behavior: Vec<DVector<f64>>,
    pub dt: f64,
    /// `∫ eᵀ Q e dτ` over the interval.
    pub state_cost: f64,
}

impl TransitionSample {
    pub fn from_record(rec: IntervalRecord, cost: &AdpCost) -> Result<Self> {
        if rec.states.len() < 2 || rec.states.len() != rec.applied.len() {
            return Err(Error::InvalidArgument("interval record needs matching state/input paths of length >= 2".into()));
        }
        let sc: Vec<f64> = rec.states.iter().map(|x| cost.state_cost(x)).collect();
        Ok(Self { t: rec.t, state_cost: trapezoid(&sc, rec.dt), path: rec.states, behavior: rec.applied, dt: rec.dt })
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.path[0]
    }

    pub fn end(&self) -> &DVector<f64> {
        &self.path[self.path.len() - 1]
    }

    pub fn duration(&self) -> f64 {
        self.dt * (self.path.len() - 1) as f64
    }

    /// `∫ [eᵀQe + Ū(μ^(k))] dτ` for the policy given by `weights`.
    pub fn integrated_stage_cost(&self, weights: &CriticActorWeights, actor: &Basis, cost: &AdpCost) -> f64 {
        let u: Vec<f64> = self
            .path
            .iter()
            .map(|x| cost.control_cost_preactivation(&weights.preactivation(actor, x)))
            .collect();
        self.state_cost + trapezoid(&u, self.dt)
    }
}

/// Sum-of-sinusoids excitation, independent per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbingNoise {
    /// Overall amplitude per channel; each of the `K` sinusoids gets `amplitude / sqrt(K)`.
    pub amplitude: Vec<f64>,
    /// Angular frequencies (rad/s).
    pub frequencies: Vec<f64>,
    /// Phases per channel and frequency.
    pub phases: Vec<Vec<f64>>,
    /// Hold the excitation constant over this interval (s); zero for continuous.
    pub hold: f64,
}

/// Periods (s) of the default excitation; pairwise incommensurate.
pub const DEFAULT_PERIODS: [f64; 8] = [137.0, 311.0, 523.0, 877.0, 1409.0, 2203.0, 3571.0, 5501.0];

impl ProbingNoise {
    /// Random phases drawn from `seed` and `stream`.
    pub fn new(amplitude: Vec<f64>, periods: &[f64], hold: f64, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let phases = (0..amplitude.len()).map(|_| periods.iter().map(|_| rng.random::<f64>() * 2.0 * PI).collect()).collect();
        Self { amplitude, frequencies: periods.iter().map(|p| 2.0 * PI / p).collect(), phases, hold }
    }

    pub fn zero(channels: usize) -> Self {
        Self { amplitude: vec![0.0; channels], frequencies: vec![], phases: vec![vec![]; channels], hold: 0.0 }
    }

    pub fn value(&self, t: f64) -> DVector<f64> {
        let t = if self.hold > 0.0 { (t / self.hold).floor() * self.hold } else { t };
        let k = self.frequencies.len().max(1) as f64;
        DVector::from_iterator(
            self.amplitude.len(),
            self.amplitude.iter().zip(&self.phases).map(|(a, ph)| {
                a / k.sqrt() * self.frequencies.iter().zip(ph).map(|(w, p)| (w * t + p).sin()).sum::<f64>()
            }),
        )
    }
}

/// Rolls each environment for `intervals` control intervals under the
/// behaviour policy `μ^(k) + noise` and slices the result into samples.
/// Rollouts run in parallel; output order follows the input order.
pub fn collect_samples<E>(
    envs: Vec<E>,
    weights: &CriticActorWeights,
    actor: &Basis,
    cost: &AdpCost,
    noise: &[ProbingNoise],
    intervals: usize,
) -> Result<Vec<TransitionSample>>
where
    E: LearningEnvironment + Send,
{
    if noise.len() != envs.len() {
        return Err(Error::InvalidArgument("one noise generator per rollout is required".into()));
    }
    let per_env: Vec<Result<Vec<TransitionSample>>> = envs
        .into_par_iter()
        .zip(noise.par_iter())
        .map(|(mut env, nz)| {
            let mut out = Vec::with_capacity(intervals);
            for _ in 0..intervals {
                let x = env.observe();
                let mu = weights.policy(actor, &x, cost.lambda) + nz.value(env.time());
                let rec = env.advance(&mu)?;
                out.push(TransitionSample::from_record(rec, cost)?);
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for r in per_env {
        all.extend(r?);
    }
    Ok(all)
}

/// Minimum number of samples for a critic of size `p` and an actor of size
/// `p_a` per channel with `m` channels.
pub fn required_samples(p: usize, p_a: usize, m: usize) -> usize {
    2 * (p + m * p_a)
}

/// Per-sample cached features, reused across policy iterations.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub delta_phi: DVector<f64>,
    /// Actor features on the grid, one column per grid point.
    pub actor_features: DMatrix<f64>,
    /// Behaviour feedback on the grid, one column per grid point.
    pub behavior: DMatrix<f64>,
    pub dt: f64,
    pub state_cost: f64,
}

pub fn prepare(samples: &[TransitionSample], critic: &Basis, actor: &Basis) -> Vec<PreparedSample> {
    samples
        .par_iter()
        .map(|s| {
            let cols: Vec<DVector<f64>> = s.path.iter().map(|x| actor.eval(x.as_slice())).collect();
            PreparedSample {
                delta_phi: critic.eval(s.end().as_slice()) - critic.eval(s.start().as_slice()),
                actor_features: DMatrix::from_columns(&cols),
                behavior: DMatrix::from_columns(&s.behavior),
                dt: s.dt,
                state_cost: s.state_cost,
            }
        })
        .collect()
}

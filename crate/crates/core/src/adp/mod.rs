//! Critic/actor learning: integral reinforcement learning from measured data
//! and a model-based policy iteration used as a reference solution.
//!
//! The learning core works on plain vectors so the same code drives the
//! two-region network and small analytic test systems.

mod artifact;
mod basis;
mod iteration;
mod samples;
pub mod toy;

pub use artifact::{TrainingArtifact, ARTIFACT_VERSION};
pub use basis::{Basis, BasisKind, BasisSpec};
pub use iteration::{
    bellman_residual, improve_policy, irl_evaluate, irl_lstsq, model_based_evaluate, policy_iteration_model_based, policy_iteration_model_free,
    IterationRecord, ModelPoint, PiSettings, SampleSource, TrainingOutcome,
};
pub use samples::{
    collect_samples, prepare, required_samples, IntervalRecord, LearningEnvironment, PreparedSample, ProbingNoise, TransitionSample,
    DEFAULT_PERIODS,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::augmented::{channel_cost_preactivation, CostWeights};
use crate::error::{Error, Result};

/// Cost in learner coordinates: `eᵀ Q e` on the leading `Q.nrows()` state
/// components plus the saturated control cost with weights `γ` and bound `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdpCost {
    pub q: DMatrix<f64>,
    pub gamma: Vec<f64>,
    pub lambda: f64,
}

impl AdpCost {
    pub fn new(q: DMatrix<f64>, gamma: Vec<f64>, lambda: f64) -> Result<Self> {
        if !q.is_square() || !(lambda > 0.0) || gamma.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::InvalidArgument("cost needs square Q, lambda > 0 and gamma > 0".into()));
        }
        Ok(Self { q, gamma, lambda })
    }

    pub fn from_weights(w: &CostWeights) -> Result<Self> {
        Self::new(DMatrix::from_fn(4, 4, |i, j| w.q()[(i, j)]), w.gamma().to_vec(), w.lambda())
    }

    pub fn state_cost(&self, x: &DVector<f64>) -> f64 {
        let e = x.rows(0, self.q.nrows());
        e.dot(&(&self.q * e))
    }

    pub fn control_cost_preactivation(&self, d: &DVector<f64>) -> f64 {
        d.iter().zip(&self.gamma).map(|(di, g)| channel_cost_preactivation(*di, *g, self.lambda)).sum()
    }
}

/// Linear-in-parameters value function `V = Wcᵀ φ` and policy pre-activation
/// `D = Wa φ_a`, with `μ = -λ tanh D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticActorWeights {
    pub wc: DVector<f64>,
    pub wa: DMatrix<f64>,
}

impl CriticActorWeights {
    pub fn zeros(critic_len: usize, channels: usize, actor_len: usize) -> Self {
        Self { wc: DVector::zeros(critic_len), wa: DMatrix::zeros(channels, actor_len) }
    }

    pub fn value(&self, critic: &Basis, x: &DVector<f64>) -> f64 {
        self.wc.dot(&critic.eval(x.as_slice()))
    }

    pub fn preactivation(&self, actor: &Basis, x: &DVector<f64>) -> DVector<f64> {
        &self.wa * actor.eval(x.as_slice())
    }

    pub fn policy(&self, actor: &Basis, x: &DVector<f64>, lambda: f64) -> DVector<f64> {
        self.preactivation(actor, x).map(|d| -lambda * d.tanh())
    }

    pub fn is_finite(&self) -> bool {
        self.wc.iter().chain(self.wa.iter()).all(|v| v.is_finite())
    }
}

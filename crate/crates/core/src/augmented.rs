//! Augmented tracking system and the constrained-input cost.

use nalgebra::{Matrix4, SMatrix, SVector, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mfd::{ControlInput, DemandVector, OdAccumulation, TwoRegionNetwork};
use crate::reference::{steady_state_control, CommandGenerator, ReferenceState};

pub type Vector8 = SVector<f64, 8>;
pub type Matrix8x2 = SMatrix<f64, 8, 2>;

/// Tracking error `e = n - n_d` stacked on the reference `n_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentedState {
    pub e: Vector4<f64>,
    pub nd: Vector4<f64>,
}

impl AugmentedState {
    pub fn to_vector(&self) -> Vector8 {
        Vector8::from_iterator(self.e.iter().chain(self.nd.iter()).copied())
    }

    pub fn from_vector(v: &Vector8) -> Self {
        Self { e: v.fixed_rows::<4>(0).into_owned(), nd: v.fixed_rows::<4>(4).into_owned() }
    }

    pub fn plant_state(&self) -> OdAccumulation {
        OdAccumulation::from_vector(&(self.e + self.nd))
    }

    pub fn reference(&self) -> ReferenceState {
        ReferenceState::from_od(&OdAccumulation::from_vector(&self.nd))
    }
}

pub fn augment(n: &OdAccumulation, nd: &ReferenceState) -> AugmentedState {
    AugmentedState { e: n.to_vector() - nd.to_vector(), nd: nd.to_vector() }
}

/// Quadratic error weight `Q`, input weights `R = diag(γ1, γ2)` and the
/// saturation bound `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CostWeightsParams", into = "CostWeightsParams")]
pub struct CostWeights {
    q: Matrix4<f64>,
    gamma: [f64; 2],
    lambda: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CostWeightsParams {
    q: [[f64; 4]; 4],
    gamma: [f64; 2],
    lambda: f64,
}

impl TryFrom<CostWeightsParams> for CostWeights {
    type Error = Error;
    fn try_from(p: CostWeightsParams) -> Result<Self> {
        CostWeights::new(Matrix4::from_fn(|i, j| p.q[i][j]), p.gamma, p.lambda)
    }
}

impl From<CostWeights> for CostWeightsParams {
    fn from(w: CostWeights) -> Self {
        CostWeightsParams { q: std::array::from_fn(|i| std::array::from_fn(|j| w.q[(i, j)])), gamma: w.gamma, lambda: w.lambda }
    }
}

impl CostWeights {
    pub fn new(q: Matrix4<f64>, gamma: [f64; 2], lambda: f64) -> Result<Self> {
        if (q - q.transpose()).amax() > 1e-12 * q.amax().max(1.0) {
            return Err(Error::InvalidArgument("Q must be symmetric".into()));
        }
        let eig = q.symmetric_eigenvalues();
        if !(eig.min() > 0.0) {
            return Err(Error::InvalidArgument(format!("Q must be positive definite (min eigenvalue {})", eig.min())));
        }
        if gamma.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::InvalidArgument("gamma must be >= 0".into()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument("lambda must be positive".into()));
        }
        Ok(Self { q, gamma, lambda })
    }

    pub fn diagonal(q: f64, gamma: [f64; 2], lambda: f64) -> Result<Self> {
        Self::new(Matrix4::identity() * q, gamma, lambda)
    }

    pub fn q(&self) -> &Matrix4<f64> {
        &self.q
    }

    pub fn gamma(&self) -> [f64; 2] {
        self.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `R̄ = γ1 + γ2`, the coefficient multiplying the log term of the HJB.
    pub fn r_bar(&self) -> f64 {
        self.gamma[0] + self.gamma[1]
    }
}

/// Bounded feedback `μ` with `|μ_i| < λ`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeedbackAction {
    pub mu: [f64; 2],
}

impl FeedbackAction {
    pub fn new(mu12: f64, mu21: f64) -> Self {
        Self { mu: [mu12, mu21] }
    }

    pub fn to_vector(&self) -> Vector2<f64> {
        Vector2::new(self.mu[0], self.mu[1])
    }
}

/// Blocks of the augmented dynamics `Ṅ = F(N) + S(N) μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedModel {
    pub drift: Vector8,
    pub input: Matrix8x2,
    pub u_s: [f64; 2],
}

/// Builds `F = [f(n) + s(n) u_s - θ; θ]` and `S = [s(n); 0]` at `n = e + n_d`.
pub fn augmented_model(net: &TwoRegionNetwork, state: &AugmentedState, theta: &Vector4<f64>, u_s: [f64; 2], q: &DemandVector) -> AugmentedModel {
    let (f, s) = net.drift_and_input(&state.plant_state(), q);
    let top = f + s * Vector2::new(u_s[0], u_s[1]) - theta;
    let drift = Vector8::from_iterator(top.iter().chain(theta.iter()).copied());
    let mut input = Matrix8x2::zeros();
    input.fixed_view_mut::<4, 2>(0, 0).copy_from(&s);
    AugmentedModel { drift, input, u_s }
}

/// Augmented model with `θ` and `u_s` taken from the command generator at `t`.
pub fn augmented_model_at(
    net: &TwoRegionNetwork,
    state: &AugmentedState,
    q: &DemandVector,
    gen: &CommandGenerator,
    t: f64,
) -> Result<AugmentedModel> {
    let p = gen.sample(t)?;
    let ss = steady_state_control(net, &p.nd, &p.theta, &p.q_hat)?;
    Ok(augmented_model(net, state, &p.theta, ss.u, q))
}

/// `Ṅ = F(N) + S(N) μ`.
pub fn augmented_rhs(
    net: &TwoRegionNetwork,
    state: &AugmentedState,
    mu: &FeedbackAction,
    q: &DemandVector,
    gen: &CommandGenerator,
    t: f64,
) -> Result<Vector8> {
    let m = augmented_model_at(net, state, q, gen, t)?;
    Ok(m.drift + m.input * mu.to_vector())
}

/// Total control the plant sees for a given feedback, before clamping.
pub fn total_control(u_s: [f64; 2], mu: &FeedbackAction) -> ControlInput {
    ControlInput::new(u_s[0] + mu.mu[0], u_s[1] + mu.mu[1])
}

/// `ln cosh x` without overflow.
#[inline]
pub fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `γ λ² (2 D tanh D - 2 ln cosh D)`, the control cost of `μ = -λ tanh D`
/// written in terms of the pre-activation. Finite for every `D`.
#[inline]
pub fn channel_cost_preactivation(d: f64, gamma: f64, lambda: f64) -> f64 {
    gamma * lambda * lambda * (2.0 * d * d.tanh() - 2.0 * ln_cosh(d))
}

/// `Ū(μ) = Σ γ_i [2 λ μ_i atanh(μ_i/λ) + λ² ln(1 - μ_i²/λ²)]`.
pub fn control_cost(mu: &FeedbackAction, w: &CostWeights) -> Result<f64> {
    let lam = w.lambda;
    let mut total = 0.0;
    for (m, g) in mu.mu.iter().zip(w.gamma) {
        if !(m.abs() < lam) {
            return Err(Error::SaturationDomain { mu: *m, lambda: lam });
        }
        let r = m / lam;
        total += g * (2.0 * lam * m * r.atanh() + lam * lam * (-r * r).ln_1p());
    }
    Ok(total)
}

/// Control cost evaluated from the pre-activation `D` of `μ = -λ tanh D`.
pub fn control_cost_preactivation(d: &[f64; 2], w: &CostWeights) -> f64 {
    channel_cost_preactivation(d[0], w.gamma[0], w.lambda) + channel_cost_preactivation(d[1], w.gamma[1], w.lambda)
}

/// `eᵀ Q e`; the reference block carries no weight.
pub fn state_cost(state: &AugmentedState, w: &CostWeights) -> f64 {
    state.e.dot(&(w.q * state.e))
}

pub fn stage_cost(state: &AugmentedState, mu: &FeedbackAction, w: &CostWeights) -> Result<f64> {
    Ok(state_cost(state, w) + control_cost(mu, w)?)
}

/// `μ_i = -λ tanh(D_i)`.
pub fn saturated_policy(d: [f64; 2], lambda: f64) -> FeedbackAction {
    FeedbackAction { mu: [-lambda * d[0].tanh(), -lambda * d[1].tanh()] }
}

/// Pre-activation of the optimal policy for a value gradient:
/// `D = (1/2λ) R⁻¹ Sᵀ ∇V`.
pub fn policy_preactivation(input: &Matrix8x2, grad_v: &Vector8, w: &CostWeights) -> [f64; 2] {
    let sg = input.transpose() * grad_v;
    std::array::from_fn(|i| sg[i] / (2.0 * w.lambda * w.gamma[i]))
}

/// `H(N, μ, ∇V) = stage_cost + ∇Vᵀ (F + S μ)`.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian(
    state: &AugmentedState,
    mu: &FeedbackAction,
    grad_v: &Vector8,
    w: &CostWeights,
    net: &TwoRegionNetwork,
    q: &DemandVector,
    gen: &CommandGenerator,
    t: f64,
) -> Result<f64> {
    let m = augmented_model_at(net, state, q, gen, t)?;
    hamiltonian_with(state, mu, grad_v, w, &m)
}

/// Hamiltonian with precomputed model blocks.
pub fn hamiltonian_with(state: &AugmentedState, mu: &FeedbackAction, grad_v: &Vector8, w: &CostWeights, m: &AugmentedModel) -> Result<f64> {
    Ok(stage_cost(state, mu, w)? + grad_v.dot(&(m.drift + m.input * mu.to_vector())))
}

//! Closed-loop execution: feedforward plus learned feedback, the set-point
//! baseline, demand realizations and the learning environment.

use std::cell::RefCell;

use nalgebra::{DVector, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::adp::{Basis, CriticActorWeights, IntervalRecord, LearningEnvironment, ModelPoint, TrainingArtifact};
use crate::augmented::{augment, augmented_model, saturated_policy, FeedbackAction};
use crate::error::{Error, Result};
use crate::mfd::{
    advance_interval, integrate, ActuatorBox, ControlInput, DemandVector, IntegratorSettings, OdAccumulation, SimulationTrace,
    TrackingColumns, TwoRegionNetwork,
};
use crate::reference::{equilibrium_solve, CommandGenerator, NominalDemand, ReferencePoint, ReferenceState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    /// Tracking perimeter control against a time-varying reference.
    Tpc,
    /// Set-point perimeter control against fixed region accumulations.
    Spc,
    /// Full metering `u = u_max`.
    Uncontrolled,
}

/// What the controller tracks.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSource {
    Generator(CommandGenerator),
    /// Fixed region accumulations; the OD split is the equilibrium for the
    /// current nominal demand.
    RegionSetpoint { n1: f64, n2: f64, nominal: NominalDemand },
    None,
}

impl ReferenceSource {
    pub fn sample(&self, net: &TwoRegionNetwork, bounds: &ActuatorBox, t: f64) -> Result<Option<ReferencePoint>> {
        match self {
            ReferenceSource::Generator(g) => g.sample(t).map(Some),
            ReferenceSource::RegionSetpoint { n1, n2, nominal } => {
                let q_hat = nominal.at(t)?;
                let eq = equilibrium_solve(net, &q_hat, *n1, *n2, bounds)?;
                Ok(Some(ReferencePoint { nd: ReferenceState::from_od(&eq.n_star), theta: Vector4::zeros(), q_hat }))
            }
            ReferenceSource::None => Ok(None),
        }
    }
}

/// Learned feedback `μ = -λ tanh(Wa φ_a(N))`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackPolicy {
    pub weights: CriticActorWeights,
    pub actor: Basis,
    pub lambda: f64,
}

impl FeedbackPolicy {
    pub fn from_artifact(a: &TrainingArtifact) -> Result<Self> {
        Ok(Self { weights: a.weights()?, actor: a.basis.actor()?, lambda: a.cost.lambda() })
    }

    pub fn feedback(&self, x: &DVector<f64>) -> FeedbackAction {
        let d = self.weights.preactivation(&self.actor, x);
        saturated_policy([d[0], d[1]], self.lambda)
    }
}

/// Steady-state control with a per-channel fallback to `u_max` when the
/// reference has (almost) no transfer vehicles on that channel.
pub fn feedforward(net: &TwoRegionNetwork, p: &ReferencePoint, u_max: f64) -> [f64; 2] {
    let (f, s) = net.drift_and_input(&p.nd.as_od(), &p.q_hat);
    let target = p.theta - f;
    let transfer = [p.nd.nd12, p.nd.nd21];
    std::array::from_fn(|j| {
        let c = s.column(j);
        let cc = c.norm_squared();
        if transfer[j] < net.epsilon_floor || cc <= 0.0 {
            u_max
        } else {
            c.dot(&target) / cc
        }
    })
}

/// Everything the controller decided at one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub u: ControlInput,
    pub mu: FeedbackAction,
    pub u_s: [f64; 2],
    pub reference: Option<ReferencePoint>,
    pub e: [f64; 4],
}

impl ControlOutput {
    pub fn tracking(&self) -> Option<TrackingColumns> {
        self.reference.map(|p| TrackingColumns { nd: p.nd.to_array(), e: self.e, mu: self.mu.mu, us: self.u_s })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub net: TwoRegionNetwork,
    pub mode: ControllerMode,
    pub reference: ReferenceSource,
    pub policy: Option<FeedbackPolicy>,
    pub bounds: ActuatorBox,
}

impl Controller {
    pub fn new(
        net: TwoRegionNetwork,
        mode: ControllerMode,
        reference: ReferenceSource,
        policy: Option<FeedbackPolicy>,
        bounds: ActuatorBox,
    ) -> Result<Self> {
        bounds.validate()?;
        match (mode, &reference) {
            (ControllerMode::Spc, ReferenceSource::RegionSetpoint { .. }) => {}
            (ControllerMode::Spc, _) => return Err(Error::Config("SPC needs a constant region set-point".into())),
            (ControllerMode::Tpc, ReferenceSource::None) => return Err(Error::Config("TPC needs a reference".into())),
            _ => {}
        }
        Ok(Self { net, mode, reference, policy, bounds })
    }

    /// `u = clamp(u_s + μ)`; uncontrolled mode returns `u_max`.
    pub fn compute_control(&self, n: &OdAccumulation, t: f64) -> Result<ControlOutput> {
        let reference = self.reference.sample(&self.net, &self.bounds, t)?;
        let e = reference.map(|p| (n.to_vector() - p.nd.to_vector()).into()).unwrap_or([0.0; 4]);
        if self.mode == ControllerMode::Uncontrolled {
            let u = ControlInput::uniform(self.bounds.u_max);
            return Ok(ControlOutput { u, mu: FeedbackAction::default(), u_s: u.to_array(), reference, e });
        }
        let p = reference.expect("checked in constructor");
        let u_s = feedforward(&self.net, &p, self.bounds.u_max);
        let mu = match &self.policy {
            Some(pol) => pol.feedback(&DVector::from_column_slice(augment(n, &p.nd).to_vector().as_slice())),
            None => FeedbackAction::default(),
        };
        let u = self.bounds.clamp(ControlInput::new(u_s[0] + mu.mu[0], u_s[1] + mu.mu[1]));
        Ok(ControlOutput { u, mu, u_s, reference, e })
    }
}

/// Demand noise: truncated Gaussian, relative standard deviation, redrawn
/// once per `interval` from a seeded per-interval stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_rel: f64,
    pub interval: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandProfile {
    pub nominal: NominalDemand,
    pub noise: Option<NoiseSpec>,
}

impl DemandProfile {
    pub fn nominal(nominal: NominalDemand) -> Self {
        Self { nominal, noise: None }
    }

    pub fn with_noise(nominal: NominalDemand, noise: NoiseSpec) -> Result<Self> {
        if !(noise.sigma_rel >= 0.0 && noise.interval > 0.0) {
            return Err(Error::Config("noise needs sigma_rel >= 0 and a positive redraw interval".into()));
        }
        Ok(Self { nominal, noise: Some(noise) })
    }

    /// Demand at `t` clamped into the horizon; used inside integrators where
    /// the last stage may touch the horizon end.
    pub fn at_clamped(&self, t: f64) -> DemandVector {
        let (a, b) = self.nominal.horizon();
        realize_demand(self, t.clamp(a, b)).expect("inside horizon")
    }
}

/// Nominal demand at `t` plus the noise draw of the interval containing `t`.
pub fn realize_demand(profile: &DemandProfile, t: f64) -> Result<DemandVector> {
    let q = profile.nominal.at(t)?;
    let Some(ns) = profile.noise else { return Ok(q) };
    if ns.sigma_rel == 0.0 {
        return Ok(q);
    }
    let t0 = profile.nominal.horizon().0;
    let k = ((t - t0) / ns.interval + 1e-9).floor().max(0.0) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(ns.seed);
    rng.set_stream(k);
    let a = q.to_array();
    Ok(DemandVector::from_array(std::array::from_fn(|i| {
        let z: f64 = StandardNormal.sample(&mut rng);
        (a[i] * (1.0 + ns.sigma_rel * z)).max(0.0)
    })))
}

/// Runs the controller against the plant. Rows carry the applied control,
/// realized demand and, when a reference exists, the tracking columns.
pub fn run_closed_loop(
    controller: &Controller,
    profile: &DemandProfile,
    initial: OdAccumulation,
    t0: f64,
    t1: f64,
    settings: IntegratorSettings,
) -> Result<SimulationTrace> {
    let outputs: RefCell<Vec<ControlOutput>> = RefCell::new(Vec::new());
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let mut trace = integrate(
        &controller.net,
        initial,
        |t, n| match controller.compute_control(n, t) {
            Ok(o) => {
                outputs.borrow_mut().push(o);
                o.u
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                ControlInput::uniform(controller.bounds.u_max)
            }
        },
        |t| profile.at_clamped(t),
        t0,
        t1,
        settings,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    for (row, o) in trace.rows.iter_mut().zip(outputs.into_inner()) {
        row.tracking = o.tracking();
    }
    Ok(trace)
}

/// Plant wrapper exposing only measurements and applied feedback to the learner.
#[derive(Debug, Clone)]
pub struct MfdEnvironment {
    net: TwoRegionNetwork,
    generator: CommandGenerator,
    demand: DemandProfile,
    bounds: ActuatorBox,
    settings: IntegratorSettings,
    n: OdAccumulation,
    t: f64,
}

impl MfdEnvironment {
    pub fn new(
        net: TwoRegionNetwork,
        generator: CommandGenerator,
        demand: DemandProfile,
        bounds: ActuatorBox,
        settings: IntegratorSettings,
        initial: OdAccumulation,
        t0: f64,
    ) -> Result<Self> {
        settings.steps_per_interval()?;
        initial.validate(&net)?;
        generator.sample(t0)?;
        Ok(Self { net, generator, demand, bounds, settings, n: initial, t: t0 })
    }

    pub fn state(&self) -> OdAccumulation {
        self.n
    }

    fn reference(&self, t: f64) -> ReferencePoint {
        let (a, b) = self.generator.horizon();
        self.generator.sample(t.clamp(a, b)).expect("inside horizon")
    }

    /// Model blocks at a measured augmented state, for the model-based oracle
    /// and diagnostics. Not used by the learner.
    pub fn model_point(&self, x: &DVector<f64>, t: f64) -> ModelPoint {
        let p = self.reference(t);
        let state = crate::augmented::AugmentedState::from_vector(&crate::augmented::Vector8::from_column_slice(x.as_slice()));
        let u_s = feedforward(&self.net, &p, self.bounds.u_max);
        let m = augmented_model(&self.net, &state, &p.theta, u_s, &self.demand.at_clamped(t));
        ModelPoint {
            state: x.clone(),
            drift: DVector::from_column_slice(m.drift.as_slice()),
            input: nalgebra::DMatrix::from_column_slice(8, 2, m.input.as_slice()),
        }
    }
}

impl LearningEnvironment for MfdEnvironment {
    fn state_dim(&self) -> usize {
        8
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn time(&self) -> f64 {
        self.t
    }

    fn observe(&self) -> DVector<f64> {
        let p = self.reference(self.t);
        DVector::from_column_slice(augment(&self.n, &p.nd).to_vector().as_slice())
    }

    fn advance(&mut self, mu: &DVector<f64>) -> Result<IntervalRecord> {
        let steps = self.settings.steps_per_interval()?;
        let dt = self.settings.dt;
        let p0 = self.reference(self.t);
        let u_s0 = feedforward(&self.net, &p0, self.bounds.u_max);
        let u = self.bounds.clamp(ControlInput::new(u_s0[0] + mu[0], u_s0[1] + mu[1]));
        let mut states = Vec::with_capacity(steps + 1);
        let mut applied = Vec::with_capacity(steps + 1);
        let mut clamps = Vec::new();
        let demand = |t: f64| self.demand.at_clamped(t);
        let out = advance_interval(&self.net, self.n, &u, &demand, self.t, dt, steps, &mut clamps, |t, n| {
            let p = self.reference(t);
            let us = feedforward(&self.net, &p, self.bounds.u_max);
            states.push(DVector::from_column_slice(augment(n, &p.nd).to_vector().as_slice()));
            applied.push(DVector::from_vec(vec![u.u12 - us[0], u.u21 - us[1]]));
        });
        let t = self.t;
        self.n = out.state;
        self.t += steps as f64 * dt;
        Ok(IntervalRecord { t, states, applied, dt })
    }
}

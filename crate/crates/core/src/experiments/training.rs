//! Training scenarios and the glue between the experiment config and the learners.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{DataMode, ExperimentConfig, ReferenceConfig};
use crate::adp::{
    bellman_residual, collect_samples, policy_iteration_model_based, policy_iteration_model_free, AdpCost, Basis, CriticActorWeights,
    ModelPoint, ProbingNoise, SampleSource, TrainingArtifact, TrainingOutcome, TransitionSample, ARTIFACT_VERSION,
};
use crate::control::{DemandProfile, MfdEnvironment, NoiseSpec};
use crate::error::{Error, Result};
use crate::mfd::{DemandVector, OdAccumulation, TwoRegionNetwork};
use crate::reference::{
    equilibrium_solve, CommandGenerator, NominalDemand, ReferenceState, SetpointPeriod, SetpointSchedule, TrajectoryGenerator,
};

const MAX_DRAWS: usize = 10_000;

/// Margin kept between a scenario's equilibrium control and the actuator box.
const CONTROL_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ModelFree,
    ModelBased,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::ModelFree => "model_free",
            Method::ModelBased => "model_based",
        }
    }
}

/// Rollout environments (in their initial state) with their excitation.
#[derive(Debug, Clone)]
pub struct TrainingSetup {
    pub envs: Vec<MfdEnvironment>,
    pub noise: Vec<ProbingNoise>,
    pub intervals: usize,
    pub critic: Basis,
    pub actor: Basis,
    pub cost: AdpCost,
    pub dt: f64,
}

fn jitter(rng: &mut ChaCha8Rng, rel: f64) -> f64 {
    if rel == 0.0 {
        1.0
    } else {
        rng.random_range(1.0 - rel..=1.0 + rel)
    }
}

fn perturb(rng: &mut ChaCha8Rng, n: OdAccumulation, half_width: f64) -> OdAccumulation {
    let a = n.to_array();
    OdAccumulation::from_array(std::array::from_fn(|i| {
        let d = if half_width > 0.0 { rng.random_range(-half_width..=half_width) } else { 0.0 };
        (a[i] + d).max(10.0)
    }))
}

/// Builds the rollout environments for the configured experiment.
///
/// Schedule references draw scenarios around each period: demand and
/// set-points are jittered, the equilibrium is re-solved and the start state
/// is perturbed. Trajectory references start rollouts at random times along
/// the nominal trajectory with jittered demand.
pub fn training_setup(cfg: &ExperimentConfig) -> Result<TrainingSetup> {
    let net = cfg.network()?;
    let t = &cfg.training;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let span = t.intervals as f64 * cfg.integrator.control_interval;
    let mut envs = Vec::with_capacity(t.rollouts);
    match &cfg.reference {
        ReferenceConfig::Schedule { periods } => {
            let mut draws = 0;
            while envs.len() < t.rollouts {
                draws += 1;
                if draws > MAX_DRAWS {
                    return Err(Error::Config("could not draw feasible training scenarios".into()));
                }
                let p = &periods[envs.len() % periods.len()];
                let q = DemandVector::from_array(std::array::from_fn(|i| p.demand[i] * jitter(&mut rng, t.demand_jitter)));
                let n1 = p.setpoint[0] * jitter(&mut rng, t.setpoint_jitter);
                let n2 = p.setpoint[1] * jitter(&mut rng, t.setpoint_jitter);
                let Ok(eq) = equilibrium_solve(&net, &q, n1, n2, &cfg.actuator) else { continue };
                let lo = cfg.actuator.u_min + CONTROL_MARGIN;
                let hi = cfg.actuator.u_max - CONTROL_MARGIN;
                if [eq.u_star.u12, eq.u_star.u21].iter().any(|u| *u < lo || *u > hi) {
                    continue;
                }
                let schedule = SetpointSchedule::new(
                    vec![SetpointPeriod { start: 0.0, end: span, nd: ReferenceState::from_od(&eq.n_star), u_star: eq.u_star, q_nominal: q }],
                    &net,
                )?;
                let start = perturb(&mut rng, eq.n_star, t.initial_perturbation);
                envs.push(MfdEnvironment::new(
                    net,
                    CommandGenerator::Piecewise(schedule),
                    DemandProfile::nominal(NominalDemand::constant(0.0, span, q)),
                    cfg.actuator,
                    cfg.integrator,
                    start,
                    0.0,
                )?);
            }
        }
        ReferenceConfig::Trajectory { initial, dt } => {
            let nominal = cfg.nominal_demand()?;
            let (t0, t1) = nominal.horizon();
            let last_start = ((t1 - t0 - span) / cfg.integrator.control_interval).floor();
            if last_start < 0.0 {
                return Err(Error::Config("training rollouts are longer than the horizon".into()));
            }
            let init = ReferenceState::new(initial[0], initial[1], initial[2], initial[3]);
            for r in 0..t.rollouts {
                let scale: [f64; 4] = std::array::from_fn(|_| jitter(&mut rng, t.demand_jitter));
                let segments = nominal
                    .segments()
                    .iter()
                    .map(|s| {
                        let mut s = *s;
                        s.q_start = DemandVector::from_array(std::array::from_fn(|i| s.q_start.to_array()[i] * scale[i]));
                        s.q_end = DemandVector::from_array(std::array::from_fn(|i| s.q_end.to_array()[i] * scale[i]));
                        s
                    })
                    .collect();
                let k = rng.random_range(0..=last_start as u64) as f64;
                let start_t = t0 + k * cfg.integrator.control_interval;
                let generator = TrajectoryGenerator::new(net, cfg.actuator.u_max, nominal.clone(), init, *dt)?;
                let nd = generator.state_at(start_t)?;
                let start = perturb(&mut rng, nd, t.initial_perturbation);
                let demand = match cfg.demand.noise {
                    Some(n) => DemandProfile::with_noise(
                        NominalDemand::new(segments)?,
                        NoiseSpec { sigma_rel: n.sigma_rel, interval: n.interval, seed: cfg.seed.wrapping_add(1_000 + r as u64) },
                    )?,
                    None => DemandProfile::nominal(NominalDemand::new(segments)?),
                };
                envs.push(MfdEnvironment::new(net, CommandGenerator::Trajectory(generator), demand, cfg.actuator, cfg.integrator, start, start_t)?);
            }
        }
    }
    let amplitude = t.probing_amplitude * cfg.cost.lambda;
    let noise = (0..envs.len())
        .map(|i| ProbingNoise::new(vec![amplitude; 2], &t.probing_periods, t.probing_hold, cfg.seed, i as u64 + 1))
        .collect();
    Ok(TrainingSetup {
        envs,
        noise,
        intervals: t.intervals,
        critic: cfg.basis.critic()?,
        actor: cfg.basis.actor()?,
        cost: AdpCost::from_weights(&cfg.cost_weights()?)?,
        dt: cfg.integrator.dt,
    })
}

impl TrainingSetup {
    pub fn initial_weights(&self) -> CriticActorWeights {
        CriticActorWeights::zeros(self.critic.len(), 2, self.actor.len())
    }

    /// Rolls every environment under `μ^(k) + noise`.
    pub fn collect(&self, weights: &CriticActorWeights) -> Result<Vec<TransitionSample>> {
        collect_samples(self.envs.clone(), weights, &self.actor, &self.cost, &self.noise, self.intervals)
    }

    fn env_of(&self, sample_index: usize) -> &MfdEnvironment {
        &self.envs[sample_index / self.intervals]
    }

    /// One model window per sample, covering its grid points.
    pub fn model_windows(&self, samples: &[TransitionSample]) -> Vec<Vec<ModelPoint>> {
        samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let env = self.env_of(i);
                s.path.iter().enumerate().map(|(g, x)| env.model_point(x, s.t + g as f64 * s.dt)).collect()
            })
            .collect()
    }

    /// Every `stride`-th grid point of the data as a model point.
    pub fn probe_points(&self, samples: &[TransitionSample], stride: usize) -> Vec<ModelPoint> {
        samples
            .iter()
            .enumerate()
            .flat_map(|(i, s)| {
                let env = self.env_of(i);
                s.path
                    .iter()
                    .enumerate()
                    .step_by(stride.max(1))
                    .map(move |(g, x)| env.model_point(x, s.t + g as f64 * s.dt))
            })
            .collect()
    }
}

/// Trained weights plus the data and diagnostics they came from.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub outcome: TrainingOutcome,
    pub artifact: TrainingArtifact,
    pub samples: Vec<TransitionSample>,
}

/// Admissibility of the initial policy, operationalized: every rollout under
/// it stays finite and strictly below jam accumulation in both regions.
pub fn check_admissible(samples: &[TransitionSample], net: &TwoRegionNetwork) -> Result<()> {
    for s in samples {
        for x in &s.path {
            let n: [f64; 4] = std::array::from_fn(|i| x[i] + x[i + 4]);
            let regions = [(n[0] + n[1], net.curve1.n_jam()), (n[2] + n[3], net.curve2.n_jam())];
            if let Some((v, jam)) = regions.iter().find(|(v, jam)| !(v.is_finite() && v < jam)) {
                return Err(Error::NotAdmissible(format!("region accumulation {v} veh reached jam {jam} veh at t = {} s", s.t)));
            }
        }
    }
    Ok(())
}

/// Runs policy iteration with the configured data mode.
pub fn train(cfg: &ExperimentConfig, method: Method) -> Result<TrainingRun> {
    let setup = training_setup(cfg)?;
    let init = setup.initial_weights();
    let samples = setup.collect(&init)?;
    check_admissible(&samples, &cfg.network()?)?;
    let probes = setup.probe_points(&samples, cfg.training.probe_stride);
    let diag = |w: &CriticActorWeights| bellman_residual(w, &probes, &setup.critic, &setup.actor, &setup.cost);
    let settings = cfg.training.pi_settings();
    let outcome = match method {
        Method::ModelFree => match cfg.training.data {
            DataMode::Reuse => {
                policy_iteration_model_free(SampleSource::Fixed(&samples), &setup.critic, &setup.actor, &setup.cost, init, &settings, Some(&diag))?
            }
            DataMode::Recollect => policy_iteration_model_free(
                SampleSource::Recollect(Box::new(|w, k| if k == 0 { Ok(samples.clone()) } else { setup.collect(w) })),
                &setup.critic,
                &setup.actor,
                &setup.cost,
                init,
                &settings,
                Some(&diag),
            )?,
        },
        Method::ModelBased => {
            let windows = setup.model_windows(&samples);
            policy_iteration_model_based(&windows, setup.dt, &setup.critic, &setup.actor, &setup.cost, init, &settings, Some(&diag))?
        }
    };
    let artifact = TrainingArtifact {
        version: ARTIFACT_VERSION,
        method: method.label().into(),
        basis: cfg.basis,
        cost: cfg.cost_weights()?,
        critic: outcome.weights.wc.iter().copied().collect(),
        actor: TrainingArtifact::actor_rows(&outcome.weights),
        converged: outcome.converged,
        config_hash: cfg.hash()?,
        seed: cfg.seed,
        log: outcome.log.clone(),
    };
    Ok(TrainingRun { outcome, artifact, samples })
}

/// Relative distance `||a - b|| / ||b||`.
pub fn relative_difference(a: &nalgebra::DVector<f64>, b: &nalgebra::DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Matrix variant of [`relative_difference`].
pub fn relative_difference_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

//! Experiment configuration (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adp::{BasisSpec, PiSettings, DEFAULT_PERIODS};
use crate::augmented::CostWeights;
use crate::error::{Error, Result};
use crate::linalg::MAX_CONDITION;
use crate::mfd::{ActuatorBox, DemandVector, IntegratorSettings, MfdCurve, OdAccumulation, TwoRegionNetwork};
use crate::reference::{DemandSegment, NominalDemand, ReferenceState, SetpointSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Piecewise set-point tracking with a TPC/SPC comparison.
    SetpointTracking,
    /// Trajectory tracking under noisy demand.
    TrajectoryTracking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: ExperimentKind,
    pub seed: u64,
    /// Plant initial accumulation `(n11, n12, n21, n22)` in veh.
    pub initial_state: [f64; 4],
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    #[serde(default)]
    pub actuator: ActuatorBox,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default)]
    pub basis: BasisSpec,
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub demand: DemandConfig,
    #[serde(default)]
    pub spc: Option<SpcConfig>,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Cubic coefficients `[c3, c2, c1]` in veh/h form; divided by 3600 on load.
    pub coefficients_hourly: [f64; 3],
    pub n_jam: f64,
    pub epsilon_floor: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { coefficients_hourly: [1.4877e-7, -2.9815e-3, 15.0912], n_jam: 10_000.0, epsilon_floor: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub q_diag: [f64; 4],
    pub gamma: [f64; 2],
    pub lambda: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self { q_diag: [1e-5; 4], gamma: [1.0, 1.0], lambda: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceConfig {
    Schedule { periods: Vec<PeriodConfig> },
    /// Reference generated by the unmetered plant under the nominal demand.
    Trajectory {
        initial: [f64; 4],
        #[serde(default = "default_reference_dt")]
        dt: f64,
    },
}

fn default_reference_dt() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodConfig {
    pub start: f64,
    pub end: f64,
    /// Region set-points `(n1*, n2*)` in veh.
    pub setpoint: [f64; 2],
    /// Nominal OD demand in veh/s.
    pub demand: [f64; 4],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandConfig {
    /// Nominal demand segments; when empty the schedule's period demands are used.
    #[serde(default)]
    pub segments: Vec<SegmentConfig>,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub start: f64,
    pub end: f64,
    pub q_start: [f64; 4],
    /// Defaults to `q_start` (constant segment).
    #[serde(default)]
    pub q_end: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma_rel: f64,
    #[serde(default = "default_noise_interval")]
    pub interval: f64,
}

fn default_noise_interval() -> f64 {
    60.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpcConfig {
    pub setpoint: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    /// Collect one batch under the initial policy and reuse it (off-policy).
    Reuse,
    /// Collect fresh data under the current policy at every iteration.
    Recollect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub rollouts: usize,
    /// Control intervals per rollout.
    pub intervals: usize,
    /// Relative jitter applied to set-points when drawing training scenarios.
    pub setpoint_jitter: f64,
    /// Relative jitter applied to each nominal demand component.
    pub demand_jitter: f64,
    /// Half-width of the uniform initial-state perturbation (veh).
    pub initial_perturbation: f64,
    /// Excitation amplitude as a fraction of `λ`.
    pub probing_amplitude: f64,
    /// Excitation periods (s).
    pub probing_periods: Vec<f64>,
    /// Hold the excitation for this long (s); 0 for continuous.
    pub probing_hold: f64,
    pub data: DataMode,
    pub tol: f64,
    pub max_iterations: usize,
    pub divergence_norm: f64,
    pub max_condition: f64,
    /// Keep every `stride`-th grid point as a probe for residual diagnostics.
    pub probe_stride: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            rollouts: 768,
            intervals: 4,
            setpoint_jitter: 0.15,
            demand_jitter: 0.15,
            initial_perturbation: 40.0,
            probing_amplitude: 0.1,
            probing_periods: DEFAULT_PERIODS.to_vec(),
            probing_hold: 60.0,
            data: DataMode::Reuse,
            tol: 1e-3,
            max_iterations: 50,
            divergence_norm: 1e6,
            max_condition: MAX_CONDITION,
            probe_stride: 10,
        }
    }
}

impl TrainingConfig {
    pub fn pi_settings(&self) -> PiSettings {
        PiSettings { tol: self.tol, max_iterations: self.max_iterations, divergence_norm: self.divergence_norm, max_condition: self.max_condition }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Demand-noise seeds for robustness sweeps.
    pub noise_seeds: Vec<u64>,
    /// Window at the end of the horizon used for tracking statistics (s).
    pub tracking_window: f64,
    /// Window at the end of the horizon used for terminal control levels (s).
    pub control_window: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { noise_seeds: (1..=10).collect(), tracking_window: 3600.0, control_window: 1800.0 }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Canonical TOML of the resolved config (defaults filled in).
    pub fn resolved_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the resolved config.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.resolved_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        let net = self.network().map_err(cfg)?;
        self.integrator.steps_per_interval().map_err(cfg)?;
        self.actuator.validate().map_err(cfg)?;
        self.cost_weights().map_err(cfg)?;
        self.basis.critic().map_err(cfg)?;
        OdAccumulation::from_array(self.initial_state).validate(&net).map_err(cfg)?;
        let nominal = self.nominal_demand().map_err(cfg)?;
        let (t0, t1) = self.horizon()?;
        if nominal.horizon() != (t0, t1) {
            return Err(Error::Config(format!("demand horizon {:?} differs from reference horizon ({t0}, {t1})", nominal.horizon())));
        }
        self.integrator.intervals_in(t0, t1).map_err(cfg)?;
        if let ReferenceConfig::Schedule { .. } = self.reference {
            self.schedule(&net).map_err(cfg)?;
        }
        if self.kind == ExperimentKind::SetpointTracking && self.spc.is_none() {
            return Err(Error::Config("set-point tracking needs an [spc] section".into()));
        }
        if let Some(n) = self.demand.noise {
            if !(n.sigma_rel >= 0.0 && n.interval > 0.0) {
                return Err(Error::Config("noise needs sigma_rel >= 0 and interval > 0".into()));
            }
        }
        let t = &self.training;
        if t.rollouts == 0 || t.intervals == 0 || t.probe_stride == 0 || !(t.tol > 0.0) || t.max_iterations == 0 {
            return Err(Error::Config("training needs rollouts, intervals, probe_stride, max_iterations >= 1 and tol > 0".into()));
        }
        if !(0.0..1.0).contains(&t.setpoint_jitter) || !(0.0..1.0).contains(&t.demand_jitter) || t.initial_perturbation < 0.0 {
            return Err(Error::Config("jitters must lie in [0, 1) and the perturbation must be >= 0".into()));
        }
        Ok(())
    }

    pub fn network(&self) -> Result<TwoRegionNetwork> {
        let [c3, c2, c1] = self.network.coefficients_hourly;
        let curve = MfdCurve::from_hourly(c3, c2, c1, self.network.n_jam)?;
        TwoRegionNetwork::new(curve, curve, self.network.epsilon_floor)
    }

    pub fn cost_weights(&self) -> Result<CostWeights> {
        let q = nalgebra::Matrix4::from_diagonal(&nalgebra::Vector4::from(self.cost.q_diag));
        CostWeights::new(q, self.cost.gamma, self.cost.lambda)
    }

    pub fn initial(&self) -> OdAccumulation {
        OdAccumulation::from_array(self.initial_state)
    }

    pub fn horizon(&self) -> Result<(f64, f64)> {
        match &self.reference {
            ReferenceConfig::Schedule { periods } => match (periods.first(), periods.last()) {
                (Some(a), Some(b)) => Ok((a.start, b.end)),
                _ => Err(Error::Config("schedule has no periods".into())),
            },
            ReferenceConfig::Trajectory { .. } => {
                let s = &self.demand.segments;
                match (s.first(), s.last()) {
                    (Some(a), Some(b)) => Ok((a.start, b.end)),
                    _ => Err(Error::Config("trajectory reference needs demand segments".into())),
                }
            }
        }
    }

    pub fn schedule(&self, net: &TwoRegionNetwork) -> Result<SetpointSchedule> {
        match &self.reference {
            ReferenceConfig::Schedule { periods } => SetpointSchedule::from_setpoints(
                net,
                &self.actuator,
                &periods
                    .iter()
                    .map(|p| (p.start, p.end, DemandVector::from_array(p.demand), p.setpoint[0], p.setpoint[1]))
                    .collect::<Vec<_>>(),
            ),
            ReferenceConfig::Trajectory { .. } => Err(Error::Config("not a schedule reference".into())),
        }
    }

    pub fn nominal_demand(&self) -> Result<NominalDemand> {
        if self.demand.segments.is_empty() {
            return match &self.reference {
                ReferenceConfig::Schedule { periods } => NominalDemand::new(
                    periods.iter().map(|p| DemandSegment::constant(p.start, p.end, DemandVector::from_array(p.demand))).collect(),
                ),
                ReferenceConfig::Trajectory { .. } => Err(Error::Config("trajectory reference needs demand segments".into())),
            };
        }
        NominalDemand::new(
            self.demand
                .segments
                .iter()
                .map(|s| DemandSegment {
                    start: s.start,
                    end: s.end,
                    q_start: DemandVector::from_array(s.q_start),
                    q_end: DemandVector::from_array(s.q_end.unwrap_or(s.q_start)),
                })
                .collect(),
        )
    }

    pub fn reference_initial(&self) -> Option<ReferenceState> {
        match self.reference {
            ReferenceConfig::Trajectory { initial, .. } => Some(ReferenceState::new(initial[0], initial[1], initial[2], initial[3])),
            ReferenceConfig::Schedule { .. } => None,
        }
    }
}

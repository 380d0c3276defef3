//! Closed-loop experiment runners and their reports.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ReferenceConfig};
use super::metrics::{compute_metrics, relative_tracking_rms, MetricsReport};
use crate::control::{run_closed_loop, Controller, ControllerMode, DemandProfile, FeedbackPolicy, NoiseSpec, ReferenceSource};
use crate::error::{Error, Result};
use crate::mfd::SimulationTrace;
use crate::reference::{CommandGenerator, TrajectoryGenerator};

#[derive(Debug, Clone)]
pub struct RunResult {
    pub label: String,
    pub trace: SimulationTrace,
    pub metrics: MetricsReport,
}

/// Demand for closed-loop runs: the nominal profile plus configured noise
/// drawn with `seed`.
pub fn demand_profile(cfg: &ExperimentConfig, seed: u64) -> Result<DemandProfile> {
    let nominal = cfg.nominal_demand()?;
    match cfg.demand.noise {
        Some(n) => DemandProfile::with_noise(nominal, NoiseSpec { sigma_rel: n.sigma_rel, interval: n.interval, seed }),
        None => Ok(DemandProfile::nominal(nominal)),
    }
}

/// Command generator for the configured reference.
pub fn generator(cfg: &ExperimentConfig) -> Result<CommandGenerator> {
    let net = cfg.network()?;
    match &cfg.reference {
        ReferenceConfig::Schedule { .. } => Ok(CommandGenerator::Piecewise(cfg.schedule(&net)?)),
        ReferenceConfig::Trajectory { dt, .. } => Ok(CommandGenerator::Trajectory(TrajectoryGenerator::new(
            net,
            cfg.actuator.u_max,
            cfg.nominal_demand()?,
            cfg.reference_initial().expect("trajectory reference"),
            *dt,
        )?)),
    }
}

pub fn periods(cfg: &ExperimentConfig) -> Vec<(f64, f64)> {
    match &cfg.reference {
        ReferenceConfig::Schedule { periods } => periods.iter().map(|p| (p.start, p.end)).collect(),
        ReferenceConfig::Trajectory { .. } => cfg.horizon().map(|h| vec![h]).unwrap_or_default(),
    }
}

pub fn controller(cfg: &ExperimentConfig, mode: ControllerMode, policy: Option<FeedbackPolicy>) -> Result<Controller> {
    let net = cfg.network()?;
    let reference = match mode {
        ControllerMode::Tpc => ReferenceSource::Generator(generator(cfg)?),
        ControllerMode::Spc => {
            let sp = cfg.spc.ok_or_else(|| Error::Config("SPC needs an [spc] section".into()))?;
            ReferenceSource::RegionSetpoint { n1: sp.setpoint[0], n2: sp.setpoint[1], nominal: cfg.nominal_demand()? }
        }
        ControllerMode::Uncontrolled => ReferenceSource::Generator(generator(cfg)?),
    };
    Controller::new(net, mode, reference, policy, cfg.actuator)
}

/// One closed-loop run over the configured horizon.
pub fn simulate(cfg: &ExperimentConfig, mode: ControllerMode, policy: Option<FeedbackPolicy>, seed: u64) -> Result<RunResult> {
    let ctrl = controller(cfg, mode, policy)?;
    let (t0, t1) = cfg.horizon()?;
    let trace = run_closed_loop(&ctrl, &demand_profile(cfg, seed)?, cfg.initial(), t0, t1, cfg.integrator)?;
    let metrics = compute_metrics(&trace, &ctrl.net, &cfg.actuator, &periods(cfg))?;
    let label = match mode {
        ControllerMode::Tpc => "TPC",
        ControllerMode::Spc => "SPC",
        ControllerMode::Uncontrolled => "uncontrolled",
    };
    Ok(RunResult { label: label.into(), trace, metrics })
}

/// One row of a controller comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub controller: String,
    pub tts_veh_s: f64,
    pub ctc_veh: f64,
    pub tracking_rms: Option<f64>,
}

/// Paired comparison; percentages are relative to the baseline row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config_hash: String,
    pub seed: u64,
    pub candidate: ComparisonRow,
    pub baseline: ComparisonRow,
    /// `100 (TTS_candidate / TTS_baseline - 1)`; negative is better.
    pub tts_change_pct: f64,
    /// `100 (CTC_candidate / CTC_baseline - 1)`; positive is better.
    pub ctc_change_pct: f64,
}

impl ComparisonReport {
    pub fn new(config_hash: String, seed: u64, candidate: &RunResult, baseline: &RunResult) -> Self {
        let row = |r: &RunResult| ComparisonRow {
            controller: r.label.clone(),
            tts_veh_s: r.metrics.tts_veh_s,
            ctc_veh: r.metrics.ctc_veh,
            tracking_rms: r.metrics.tracking_rms,
        };
        let c = row(candidate);
        let b = row(baseline);
        Self {
            config_hash,
            seed,
            tts_change_pct: 100.0 * (c.tts_veh_s / b.tts_veh_s - 1.0),
            ctc_change_pct: 100.0 * (c.ctc_veh / b.ctc_veh - 1.0),
            candidate: c,
            baseline: b,
        }
    }

    /// Two-row summary: candidate with percentage changes, then the baseline.
    pub fn table(&self) -> String {
        format!(
            "{:<14}{:>16}{:>16}\n{:<14}{:>9.3e} ({:+.2}%){:>9.3e} ({:+.2}%)\n{:<14}{:>16.3e}{:>16.3e}\n",
            "controller",
            "TTS (veh s)",
            "CTC (veh)",
            self.candidate.controller,
            self.candidate.tts_veh_s,
            self.tts_change_pct,
            self.candidate.ctc_veh,
            self.ctc_change_pct,
            self.baseline.controller,
            self.baseline.tts_veh_s,
            self.baseline.ctc_veh,
        )
    }
}

/// TPC against SPC with identical weights, demand and seed.
pub fn run_example1(cfg: &ExperimentConfig, policy: &FeedbackPolicy) -> Result<(RunResult, RunResult, ComparisonReport)> {
    let (tpc, spc) = rayon::join(
        || simulate(cfg, ControllerMode::Tpc, Some(policy.clone()), cfg.seed),
        || simulate(cfg, ControllerMode::Spc, Some(policy.clone()), cfg.seed),
    );
    let (tpc, spc) = (tpc?, spc?);
    let report = ComparisonReport::new(cfg.hash()?, cfg.seed, &tpc, &spc);
    Ok((tpc, spc, report))
}

/// Per-seed robustness statistics of a trajectory-tracking run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub seed: Option<u64>,
    pub tts_veh_s: f64,
    pub ctc_veh: f64,
    /// Region-total RMS error over the tracking window relative to the mean reference.
    pub tracking_rms: f64,
    /// Smallest applied `(u12, u21)` over the control window.
    pub min_control: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub config_hash: String,
    pub tracking_window_s: f64,
    pub control_window_s: f64,
    pub u_max: f64,
    pub noisy: Vec<RobustnessRow>,
    pub noise_free: RobustnessRow,
}

fn robustness_row(cfg: &ExperimentConfig, r: &RunResult, seed: Option<u64>) -> Result<RobustnessRow> {
    let (_, t1) = cfg.horizon()?;
    let ev = &cfg.evaluation;
    let tracking = relative_tracking_rms(&r.trace, t1 - ev.tracking_window).ok_or(Error::EmptyTrace)?;
    // the final row's control is never applied; the window covers the controls held inside it
    let held: Vec<_> = r.trace.rows.iter().filter(|row| row.t >= t1 - ev.control_window - 1e-9 && row.t < t1 - 1e-9).collect();
    let min_control = [
        held.iter().map(|row| row.u.u12).fold(f64::INFINITY, f64::min),
        held.iter().map(|row| row.u.u21).fold(f64::INFINITY, f64::min),
    ];
    Ok(RobustnessRow { seed, tts_veh_s: r.metrics.tts_veh_s, ctc_veh: r.metrics.ctc_veh, tracking_rms: tracking, min_control })
}

/// TPC under each configured noise seed plus one noise-free run.
pub fn run_example2(cfg: &ExperimentConfig, policy: &FeedbackPolicy) -> Result<(Vec<RunResult>, RunResult, RobustnessReport)> {
    let noisy: Vec<RunResult> = cfg
        .evaluation
        .noise_seeds
        .par_iter()
        .map(|&s| simulate(cfg, ControllerMode::Tpc, Some(policy.clone()), s))
        .collect::<Result<_>>()?;
    let mut clean_cfg = cfg.clone();
    clean_cfg.demand.noise = None;
    let clean = simulate(&clean_cfg, ControllerMode::Tpc, Some(policy.clone()), cfg.seed)?;
    let report = RobustnessReport {
        config_hash: cfg.hash()?,
        tracking_window_s: cfg.evaluation.tracking_window,
        control_window_s: cfg.evaluation.control_window,
        u_max: cfg.actuator.u_max,
        noisy: noisy
            .iter()
            .zip(&cfg.evaluation.noise_seeds)
            .map(|(r, s)| robustness_row(cfg, r, Some(*s)))
            .collect::<Result<_>>()?,
        noise_free: robustness_row(cfg, &clean, None)?,
    };
    Ok((noisy, clean, report))
}

/// The configured reference sampled every `step` seconds, with the
/// steady-state control in the control columns and `q̂` in the demand columns.
pub fn reference_trace(cfg: &ExperimentConfig, step: f64) -> Result<SimulationTrace> {
    if !(step > 0.0) {
        return Err(Error::Config(format!("sampling step must be positive, got {step}")));
    }
    let net = cfg.network()?;
    let gen = generator(cfg)?;
    let (t0, t1) = gen.horizon();
    let count = ((t1 - t0) / step + 1e-9).floor() as usize;
    let rows = (0..=count)
        .map(|k| {
            let t = t0 + k as f64 * step;
            let p = gen.sample(t)?;
            let us = crate::control::feedforward(&net, &p, cfg.actuator.u_max);
            Ok(crate::mfd::TraceRow {
                t,
                n: p.nd.as_od(),
                u: crate::mfd::ControlInput::new(us[0], us[1]),
                q: p.q_hat,
                clamped: false,
                tracking: None,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SimulationTrace { rows, ..Default::default() })
}

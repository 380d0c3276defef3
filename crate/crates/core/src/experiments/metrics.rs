//! Total time spent, cumulative trip completion and tracking statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::trapezoid;
use crate::mfd::{ActuatorBox, SimulationTrace, TwoRegionNetwork};

/// Tracking statistics over one period of the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodTracking {
    pub start: f64,
    pub end: f64,
    /// Relative region-total error `|n_i - nd_i| / nd_i` at the last sample of the period.
    pub final_region_error: [f64; 2],
    /// Relative OD error `|n_ij - nd_ij| / nd_ij` at the last sample of the period.
    pub final_od_error: [f64; 4],
    /// RMS of the region-total error over the period (veh).
    pub region_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tts_veh_s: f64,
    pub ctc_veh: f64,
    /// RMS of the region-total tracking error over the whole trace (veh); absent without a reference.
    pub tracking_rms: Option<f64>,
    pub periods: Vec<PeriodTracking>,
    /// Intervals in which the integrator clamped the state.
    pub clamped_intervals: usize,
    /// Samples whose applied control lies outside the actuator box.
    pub control_violations: usize,
}

fn uniform_step(trace: &SimulationTrace) -> Result<f64> {
    let rows = &trace.rows;
    if rows.len() < 2 {
        return Ok(0.0);
    }
    let h = rows[1].t - rows[0].t;
    if !(h > 0.0) || rows.windows(2).any(|w| ((w[1].t - w[0].t) - h).abs() > 1e-9 * h.max(1.0)) {
        return Err(Error::InvalidArgument("trace sampling is not uniform".into()));
    }
    Ok(h)
}

/// `TTS = ∫ Σ n_ij dt`.
pub fn total_time_spent(trace: &SimulationTrace) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let h = uniform_step(trace)?;
    Ok(trapezoid(&trace.rows.iter().map(|r| r.n.total()).collect::<Vec<_>>(), h))
}

/// `CTC = ∫ [(n11/n1) G1 + (n22/n2) G2] dt`.
pub fn cumulative_trip_completion(trace: &SimulationTrace, net: &TwoRegionNetwork) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let h = uniform_step(trace)?;
    Ok(trapezoid(&trace.rows.iter().map(|r| net.flows(&r.n).internal_completion()).collect::<Vec<_>>(), h))
}

fn region_error(r: &crate::mfd::TraceRow) -> Option<[f64; 2]> {
    r.tracking.map(|tc| [r.n.region1() - (tc.nd[0] + tc.nd[1]), r.n.region2() - (tc.nd[2] + tc.nd[3])])
}

fn rms(rows: &[&crate::mfd::TraceRow]) -> Option<f64> {
    let errs: Vec<[f64; 2]> = rows.iter().filter_map(|r| region_error(r)).collect();
    if errs.is_empty() {
        return None;
    }
    Some((errs.iter().map(|e| e[0] * e[0] + e[1] * e[1]).sum::<f64>() / (2 * errs.len()) as f64).sqrt())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Metrics of a trace. `periods` lists `(start, end)` windows for per-period
/// tracking statistics. A window covers samples with `start <= t < end`; the
/// window that reaches the end of the trace also includes its final sample.
pub fn compute_metrics(trace: &SimulationTrace, net: &TwoRegionNetwork, bounds: &ActuatorBox, periods: &[(f64, f64)]) -> Result<MetricsReport> {
    let tts = total_time_spent(trace)?;
    let ctc = cumulative_trip_completion(trace, net)?;
    let all: Vec<&crate::mfd::TraceRow> = trace.rows.iter().collect();
    let t_last = trace.rows.last().map_or(f64::NEG_INFINITY, |r| r.t);
    let mut out_periods = Vec::new();
    for &(start, end) in periods {
        let closed = end >= t_last - 1e-9;
        let rows: Vec<&crate::mfd::TraceRow> =
            trace.rows.iter().filter(|r| r.t >= start - 1e-9 && (r.t < end - 1e-9 || (closed && r.t <= end + 1e-9))).collect();
        let Some(last) = rows.last() else { continue };
        let Some(tc) = last.tracking else { continue };
        let n = last.n.to_array();
        out_periods.push(PeriodTracking {
            start,
            end,
            final_region_error: [rel(last.n.region1(), tc.nd[0] + tc.nd[1]), rel(last.n.region2(), tc.nd[2] + tc.nd[3])],
            final_od_error: std::array::from_fn(|i| rel(n[i], tc.nd[i])),
            region_rms: rms(&rows).unwrap_or(0.0),
        });
    }
    Ok(MetricsReport {
        tts_veh_s: tts,
        ctc_veh: ctc,
        tracking_rms: rms(&all),
        periods: out_periods,
        clamped_intervals: trace.rows.iter().filter(|r| r.clamped).count(),
        control_violations: trace.rows.iter().filter(|r| !bounds.contains(r.u)).count(),
    })
}

/// Region-total RMS error over `[t_from, end]` relative to the mean region
/// reference over the same window.
pub fn relative_tracking_rms(trace: &SimulationTrace, t_from: f64) -> Option<f64> {
    let rows: Vec<&crate::mfd::TraceRow> = trace.rows.iter().filter(|r| r.t >= t_from - 1e-9).collect();
    let refs: Vec<f64> = rows.iter().filter_map(|r| r.tracking.map(|tc| 0.5 * (tc.nd.iter().sum::<f64>()))).collect();
    if refs.is_empty() {
        return None;
    }
    let mean = refs.iter().sum::<f64>() / refs.len() as f64;
    Some(rms(&rows)? / mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mfd::{ControlInput, DemandVector, OdAccumulation, TraceRow};

    fn flat(total: f64, n: usize) -> SimulationTrace {
        let rows = (0..n)
            .map(|k| TraceRow {
                t: 60.0 * k as f64,
                n: OdAccumulation::new(total / 4.0, total / 4.0, total / 4.0, total / 4.0),
                u: ControlInput::uniform(0.5),
                q: DemandVector::default(),
                clamped: false,
                tracking: None,
            })
            .collect();
        SimulationTrace { rows, ..Default::default() }
    }

    #[test]
    fn empty_network_zero_metrics() {
        let m = compute_metrics(&flat(0.0, 11), &TwoRegionNetwork::default(), &ActuatorBox::default(), &[]).unwrap();
        assert_eq!((m.tts_veh_s, m.ctc_veh), (0.0, 0.0));
    }

    #[test]
    fn constant_accumulation_tts() {
        let m = compute_metrics(&flat(2000.0, 61), &TwoRegionNetwork::default(), &ActuatorBox::default(), &[]).unwrap();
        assert_eq!(m.tts_veh_s, 2000.0 * 3600.0);
    }

    #[test]
    fn empty_trace_error() {
        let r = compute_metrics(&SimulationTrace::default(), &TwoRegionNetwork::default(), &ActuatorBox::default(), &[]);
        assert!(matches!(r, Err(Error::EmptyTrace)));
    }
}

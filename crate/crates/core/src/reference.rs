//! Desired trajectories, equilibria and steady-state control.

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mfd::{ActuatorBox, ControlInput, DemandVector, OdAccumulation, TwoRegionNetwork};

/// OD-level reference accumulation `n_d` (veh).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferenceState {
    pub nd11: f64,
    pub nd12: f64,
    pub nd21: f64,
    pub nd22: f64,
}

impl ReferenceState {
    pub fn new(nd11: f64, nd12: f64, nd21: f64, nd22: f64) -> Self {
        Self { nd11, nd12, nd21, nd22 }
    }

    pub fn as_od(&self) -> OdAccumulation {
        OdAccumulation::new(self.nd11, self.nd12, self.nd21, self.nd22)
    }

    pub fn from_od(n: &OdAccumulation) -> Self {
        Self::new(n.n11, n.n12, n.n21, n.n22)
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        self.as_od().to_vector()
    }

    pub fn to_array(&self) -> [f64; 4] {
        self.as_od().to_array()
    }
}

/// Piecewise-linear nominal demand `q̂(t)`.
///
/// Each segment ramps linearly from `q_start` to `q_end` over `[start, end)`.
/// Segments must be contiguous; the last segment is closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NominalDemand {
    segments: Vec<DemandSegment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandSegment {
    pub start: f64,
    pub end: f64,
    pub q_start: DemandVector,
    pub q_end: DemandVector,
}

impl DemandSegment {
    pub fn constant(start: f64, end: f64, q: DemandVector) -> Self {
        Self { start, end, q_start: q, q_end: q }
    }
}

impl NominalDemand {
    pub fn new(segments: Vec<DemandSegment>) -> Result<Self> {
        check_contiguous(segments.iter().map(|s| (s.start, s.end)))?;
        for s in &segments {
            s.q_start.validate()?;
            s.q_end.validate()?;
        }
        Ok(Self { segments })
    }

    pub fn constant(start: f64, end: f64, q: DemandVector) -> Self {
        Self { segments: vec![DemandSegment::constant(start, end, q)] }
    }

    pub fn segments(&self) -> &[DemandSegment] {
        &self.segments
    }

    pub fn horizon(&self) -> (f64, f64) {
        (self.segments[0].start, self.segments[self.segments.len() - 1].end)
    }

    pub fn at(&self, t: f64) -> Result<DemandVector> {
        let idx = locate(self.segments.iter().map(|s| (s.start, s.end)), t)?;
        let s = &self.segments[idx];
        let w = if s.end > s.start { ((t - s.start) / (s.end - s.start)).clamp(0.0, 1.0) } else { 0.0 };
        let a = s.q_start.to_array();
        let b = s.q_end.to_array();
        Ok(DemandVector::from_array(std::array::from_fn(|i| a[i] + w * (b[i] - a[i]))))
    }
}

/// One period of a set-point schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetpointPeriod {
    pub start: f64,
    pub end: f64,
    pub nd: ReferenceState,
    /// Equilibrium control, kept for diagnostics; the controller recomputes `u_s`.
    pub u_star: ControlInput,
    pub q_nominal: DemandVector,
}

/// Ordered, contiguous list of set-point periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetpointSchedule {
    periods: Vec<SetpointPeriod>,
}

impl SetpointSchedule {
    pub fn new(periods: Vec<SetpointPeriod>, net: &TwoRegionNetwork) -> Result<Self> {
        check_contiguous(periods.iter().map(|p| (p.start, p.end)))?;
        for p in &periods {
            p.nd.as_od().validate(net)?;
        }
        Ok(Self { periods })
    }

    /// Builds a schedule from `(start, end, demand, n1*, n2*)` tuples by
    /// solving the equilibrium of each period.
    pub fn from_setpoints(
        net: &TwoRegionNetwork,
        bounds: &ActuatorBox,
        spec: &[(f64, f64, DemandVector, f64, f64)],
    ) -> Result<Self> {
        let periods = spec
            .iter()
            .map(|&(start, end, q, n1, n2)| {
                let eq = equilibrium_solve(net, &q, n1, n2, bounds)?;
                Ok(SetpointPeriod { start, end, nd: ReferenceState::from_od(&eq.n_star), u_star: eq.u_star, q_nominal: q })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(periods, net)
    }

    pub fn periods(&self) -> &[SetpointPeriod] {
        &self.periods
    }

    pub fn horizon(&self) -> (f64, f64) {
        (self.periods[0].start, self.periods[self.periods.len() - 1].end)
    }

    pub fn period_at(&self, t: f64) -> Result<&SetpointPeriod> {
        Ok(&self.periods[locate(self.periods.iter().map(|p| (p.start, p.end)), t)?])
    }

    /// Nominal demand implied by the schedule (constant per period).
    pub fn nominal_demand(&self) -> NominalDemand {
        NominalDemand {
            segments: self.periods.iter().map(|p| DemandSegment::constant(p.start, p.end, p.q_nominal)).collect(),
        }
    }
}

fn check_contiguous(intervals: impl Iterator<Item = (f64, f64)>) -> Result<()> {
    let mut prev_end: Option<f64> = None;
    let mut count = 0;
    for (s, e) in intervals {
        count += 1;
        if !(s.is_finite() && e.is_finite() && e > s) {
            return Err(Error::InvalidArgument(format!("interval [{s}, {e}] is empty or not finite")));
        }
        if let Some(pe) = prev_end {
            if (s - pe).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("intervals not contiguous at {pe} / {s}")));
            }
        }
        prev_end = Some(e);
    }
    if count == 0 {
        return Err(Error::InvalidArgument("at least one interval is required".into()));
    }
    Ok(())
}

/// Index of the half-open interval containing `t`; the last interval is closed.
fn locate(intervals: impl Iterator<Item = (f64, f64)>, t: f64) -> Result<usize> {
    let iv: Vec<(f64, f64)> = intervals.collect();
    let (start, end) = (iv[0].0, iv[iv.len() - 1].1);
    if !(t >= start && t <= end) {
        return Err(Error::OutsideHorizon { t, start, end });
    }
    Ok(iv.iter().position(|&(_, e)| t < e).unwrap_or(iv.len() - 1))
}

/// Trajectory generator: the reference follows the uncontrolled plant
/// (`u = u_max`) under nominal demand, pre-integrated on a fixed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryGenerator {
    net: TwoRegionNetwork,
    u_max: f64,
    nominal: NominalDemand,
    t0: f64,
    dt: f64,
    grid: Vec<OdAccumulation>,
}

impl TrajectoryGenerator {
    /// Integrates `trajectory_rhs` with RK4 at step `dt` over the demand horizon.
    pub fn new(net: TwoRegionNetwork, u_max: f64, nominal: NominalDemand, initial: ReferenceState, dt: f64) -> Result<Self> {
        let (t0, t1) = nominal.horizon();
        let steps = ((t1 - t0) / dt).round();
        if !(dt > 0.0) || ((t1 - t0) / dt - steps).abs() > 1e-9 {
            return Err(Error::StepDoesNotDivide { dt, interval: t1 - t0 });
        }
        let u = ControlInput::uniform(u_max);
        let mut n = initial.as_od();
        n.validate(&net)?;
        let mut grid = Vec::with_capacity(steps as usize + 1);
        grid.push(n);
        for k in 0..steps as usize {
            let t = t0 + k as f64 * dt;
            let demand = |tt: f64| nominal.at(tt.min(t1)).expect("inside horizon");
            n = crate::mfd::rk4_step(&net, &n, &u, &demand, t, dt).state;
            grid.push(n);
        }
        Ok(Self { net, u_max, nominal, t0, dt, grid })
    }

    pub fn nominal(&self) -> &NominalDemand {
        &self.nominal
    }

    pub fn horizon(&self) -> (f64, f64) {
        (self.t0, self.t0 + self.dt * (self.grid.len() - 1) as f64)
    }

    /// State at `t`, linearly interpolated between grid points.
    pub fn state_at(&self, t: f64) -> Result<OdAccumulation> {
        let (start, end) = self.horizon();
        if !(t >= start && t <= end) {
            return Err(Error::OutsideHorizon { t, start, end });
        }
        let x = (t - self.t0) / self.dt;
        let k = (x.floor() as usize).min(self.grid.len() - 1);
        let w = x - k as f64;
        if w < 1e-12 || k + 1 >= self.grid.len() {
            return Ok(self.grid[k]);
        }
        let a = self.grid[k].to_vector();
        let b = self.grid[k + 1].to_vector();
        Ok(OdAccumulation::from_vector(&(a + (b - a) * w)))
    }
}

/// Command generator in either piecewise-constant or trajectory mode.
#[derive(Debug, Clone, PartialEq)]
pub enum CommandGenerator {
    Piecewise(SetpointSchedule),
    Trajectory(TrajectoryGenerator),
}

/// Reference sample: `n_d(t)`, its derivative `θ`, and the nominal demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoint {
    pub nd: ReferenceState,
    pub theta: Vector4<f64>,
    pub q_hat: DemandVector,
}

impl CommandGenerator {
    pub fn horizon(&self) -> (f64, f64) {
        match self {
            CommandGenerator::Piecewise(s) => s.horizon(),
            CommandGenerator::Trajectory(g) => g.horizon(),
        }
    }

    pub fn nominal_demand(&self, t: f64) -> Result<DemandVector> {
        match self {
            CommandGenerator::Piecewise(s) => Ok(s.period_at(t)?.q_nominal),
            CommandGenerator::Trajectory(g) => g.nominal.at(t),
        }
    }

    /// Full reference sample at `t`.
    pub fn sample(&self, t: f64) -> Result<ReferencePoint> {
        match self {
            CommandGenerator::Piecewise(s) => {
                let p = s.period_at(t)?;
                Ok(ReferencePoint { nd: p.nd, theta: Vector4::zeros(), q_hat: p.q_nominal })
            }
            CommandGenerator::Trajectory(g) => {
                let nd = ReferenceState::from_od(&g.state_at(t)?);
                let q_hat = g.nominal.at(t)?;
                let theta = trajectory_rhs_with(&g.net, &nd, &q_hat, g.u_max);
                Ok(ReferencePoint { nd, theta, q_hat })
            }
        }
    }
}

/// `(n_d(t), θ(n_d(t)))` for either generator mode.
pub fn reference_at(gen: &CommandGenerator, t: f64) -> Result<(ReferenceState, Vector4<f64>)> {
    let p = gen.sample(t)?;
    Ok((p.nd, p.theta))
}

/// Command-generator map for the trajectory mode with full metering,
/// `ṅ_d = K(n_d, 1, q̂)`.
pub fn trajectory_rhs(net: &TwoRegionNetwork, nd: &ReferenceState, q_hat: &DemandVector) -> Vector4<f64> {
    trajectory_rhs_with(net, nd, q_hat, 1.0)
}

/// As [`trajectory_rhs`] with the metering held at `u_max`.
pub fn trajectory_rhs_with(net: &TwoRegionNetwork, nd: &ReferenceState, q_hat: &DemandVector, u_max: f64) -> Vector4<f64> {
    net.dynamics_rhs(&nd.as_od(), &ControlInput::uniform(u_max), q_hat)
}

/// Equilibrium point for given demand and region set-points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub n_star: OdAccumulation,
    pub u_star: ControlInput,
    pub iterations: usize,
    /// `||K(n*, u*, q)||_inf`, re-evaluated through the plant dynamics.
    pub residual: f64,
}

const EQ_MAX_ITER: usize = 200;
const EQ_TOL: f64 = 1e-6;

/// Solves `K(n*, u*, q) = 0` with `n11 + n12 = n1*` and `n21 + n22 = n2*`.
///
/// The unknowns are the internal shares `(n11, n22)`; `u*` is eliminated
/// through the transfer balances. Newton steps are halved until the residual
/// decreases.
pub fn equilibrium_solve(
    net: &TwoRegionNetwork,
    q: &DemandVector,
    n1_star: f64,
    n2_star: f64,
    bounds: &ActuatorBox,
) -> Result<Equilibrium> {
    q.validate()?;
    for (n, c) in [(n1_star, &net.curve1), (n2_star, &net.curve2)] {
        if !(n > 0.0 && n < c.n_jam()) {
            return Err(Error::Domain { value: n, n_jam: c.n_jam() });
        }
    }
    let g1 = net.curve1.rate(n1_star);
    let g2 = net.curve2.rate(n2_star);
    // with u eliminated: r1 = -(n11/n1) G1 + q11 + q21, r2 = -(n22/n2) G2 + q22 + q12
    let resid = |x: [f64; 2]| [-x[0] / n1_star * g1 + q.q11 + q.q21, -x[1] / n2_star * g2 + q.q22 + q.q12];
    let jac = [-g1 / n1_star, -g2 / n2_star];
    let norm = |r: [f64; 2]| r[0].abs().max(r[1].abs());
    let mut x = [0.5 * n1_star, 0.5 * n2_star];
    let mut r = resid(x);
    let mut iterations = 0;
    while norm(r) >= EQ_TOL * 1e-3 {
        if iterations == EQ_MAX_ITER {
            return Err(Error::NoConvergence { iterations, residual: norm(r) });
        }
        iterations += 1;
        let step = [-r[0] / jac[0], -r[1] / jac[1]];
        let mut alpha = 1.0;
        loop {
            let cand = [x[0] + alpha * step[0], x[1] + alpha * step[1]];
            let rc = resid(cand);
            if norm(rc) < norm(r) || alpha < 1e-12 {
                x = cand;
                r = rc;
                break;
            }
            alpha *= 0.5;
        }
    }
    let (n11, n22) = (x[0], x[1]);
    let n12 = n1_star - n11;
    let n21 = n2_star - n22;
    if !(n11 >= 0.0 && n22 >= 0.0 && n12 >= net.epsilon_floor && n21 >= net.epsilon_floor) {
        return Err(Error::InvalidArgument(format!(
            "demand {:?} admits no equilibrium at set-points ({n1_star}, {n2_star})",
            q.to_array()
        )));
    }
    let n_star = OdAccumulation::new(n11, n12, n21, n22);
    let u12 = q.q12 * n1_star / (n12 * g1);
    let u21 = q.q21 * n2_star / (n21 * g2);
    if !(u12 >= bounds.u_min && u12 <= bounds.u_max && u21 >= bounds.u_min && u21 <= bounds.u_max) {
        return Err(Error::InfeasibleSetpoint { u12, u21, u_min: bounds.u_min, u_max: bounds.u_max });
    }
    let u_star = ControlInput::new(u12, u21);
    let residual = net.dynamics_rhs(&n_star, &u_star, q).amax();
    if residual >= EQ_TOL {
        return Err(Error::NoConvergence { iterations, residual });
    }
    Ok(Equilibrium { n_star, u_star, iterations, residual })
}

/// Steady-state control and its least-squares residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    /// Raw least-squares solution; not clamped to the actuator box.
    pub u: [f64; 2],
    /// `||s u - (θ - f)||_2`.
    pub residual: f64,
}

/// `u_s = (sᵀs)⁻¹ sᵀ (θ - f)` at the reference. The two columns of `s` have
/// disjoint supports, so `sᵀs` is diagonal and the solve is per channel.
pub fn steady_state_control(
    net: &TwoRegionNetwork,
    nd: &ReferenceState,
    theta: &Vector4<f64>,
    q_hat: &DemandVector,
) -> Result<SteadyState> {
    for v in [nd.nd12, nd.nd21] {
        if v < net.epsilon_floor {
            return Err(Error::SingularInput { value: v, floor: net.epsilon_floor });
        }
    }
    let (f, s) = net.drift_and_input(&nd.as_od(), q_hat);
    let target = theta - f;
    let mut u = [0.0; 2];
    for j in 0..2 {
        let c = s.column(j);
        let cc = c.norm_squared();
        if cc <= 0.0 {
            return Err(Error::SingularInput { value: if j == 0 { nd.nd12 } else { nd.nd21 }, floor: net.epsilon_floor });
        }
        u[j] = c.dot(&target) / cc;
    }
    let residual = (s * nalgebra::Vector2::new(u[0], u[1]) - target).norm();
    Ok(SteadyState { u, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Matrix2, Vector2};

    fn net() -> TwoRegionNetwork {
        TwoRegionNetwork::default()
    }

    fn bounds() -> ActuatorBox {
        ActuatorBox::default()
    }

    fn example1_schedule() -> SetpointSchedule {
        SetpointSchedule::from_setpoints(
            &net(),
            &bounds(),
            &[
                (0.0, 3600.0, DemandVector::new(1.2, 1.6, 1.0, 1.4), 2000.0, 2000.0),
                (3600.0, 12600.0, DemandVector::new(1.6, 1.6, 1.6, 1.6), 3000.0, 3000.0),
                (12600.0, 18000.0, DemandVector::new(0.9, 0.9, 0.9, 0.9), 1500.0, 1500.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn schedule_lookup() {
        let gen = CommandGenerator::Piecewise(example1_schedule());
        let (nd, th) = reference_at(&gen, 1800.0).unwrap();
        assert!((nd.nd11 - 814.5).abs() < 1.0 && (nd.nd21 - 889.3).abs() < 1.0);
        assert_eq!(th, Vector4::zeros());
        let (nd, _) = reference_at(&gen, 7200.0).unwrap();
        assert!((nd.nd11 - 1538.9).abs() < 1.0 && (nd.nd12 - 1461.1).abs() < 1.0);
        // right-continuous at the switch
        let (nd, _) = reference_at(&gen, 3600.0).unwrap();
        assert!((nd.nd11 - 1538.9).abs() < 1.0);
        assert!(matches!(reference_at(&gen, 18000.5), Err(Error::OutsideHorizon { .. })));
    }

    #[test]
    fn schedule_rejects_gaps() {
        let p = example1_schedule().periods()[0];
        let mut q = p;
        q.start = 4000.0;
        q.end = 5000.0;
        assert!(SetpointSchedule::new(vec![p, q], &net()).is_err());
    }

    #[test]
    fn trajectory_theta_at_empty_origin() {
        let q = DemandVector::new(1.0, 0.7, 0.8, 1.1);
        let g = TrajectoryGenerator::new(net(), 0.9, NominalDemand::constant(0.0, 600.0, q), ReferenceState::default(), 1.0).unwrap();
        let (_, th) = reference_at(&CommandGenerator::Trajectory(g), 0.0).unwrap();
        assert_eq!(th, Vector4::new(1.0, 0.7, 0.8, 1.1));
    }

    #[test]
    fn trajectory_rhs_at_zero() {
        let r = trajectory_rhs(&net(), &ReferenceState::default(), &DemandVector::new(1.0, 1.0, 1.0, 1.0));
        assert_eq!(r, Vector4::new(1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn trajectory_region_aggregation() {
        // region form: dn1 = q11 + q12 - (n11/n1) G1 + (n21/n2) G2 - (n12/n1) G1
        let c = crate::mfd::MfdCurve::standard();
        for nd in [ReferenceState::new(500.0, 300.0, 700.0, 900.0), ReferenceState::new(1500.0, 10.0, 20.0, 2500.0)] {
            let q = DemandVector::new(1.1, 0.4, 0.9, 1.3);
            let r = trajectory_rhs(&net(), &nd, &q);
            let n1 = nd.nd11 + nd.nd12;
            let n2 = nd.nd21 + nd.nd22;
            let d1 = q.q11 + q.q12 - nd.nd11 / n1 * c.rate(n1) + nd.nd21 / n2 * c.rate(n2) - nd.nd12 / n1 * c.rate(n1);
            let d2 = q.q21 + q.q22 - nd.nd22 / n2 * c.rate(n2) + nd.nd12 / n1 * c.rate(n1) - nd.nd21 / n2 * c.rate(n2);
            assert_relative_eq!(r[0] + r[1], d1, epsilon = 1e-12);
            assert_relative_eq!(r[2] + r[3], d2, epsilon = 1e-12);
        }
    }

    #[test]
    fn trajectory_settles_under_constant_demand() {
        let q = DemandVector::new(1.0, 0.8, 0.7, 1.2);
        let g = TrajectoryGenerator::new(net(), 1.0, NominalDemand::constant(0.0, 36_000.0, q), ReferenceState::default(), 2.0).unwrap();
        let end = g.state_at(36_000.0).unwrap();
        assert!(trajectory_rhs(&net(), &ReferenceState::from_od(&end), &q).amax() < 1e-6);
    }

    #[test]
    fn equilibria_table() {
        let cases = [
            ([1.2, 1.6, 1.0, 1.4], 2000.0, [814.5, 1185.5, 889.3, 1110.7], [0.50, 0.42]),
            ([1.6; 4], 3000.0, [1538.9, 1461.1, 1461.1, 1538.9], [0.53, 0.53]),
            ([0.9; 4], 1500.0, [591.6, 908.4, 908.4, 591.6], [0.33, 0.33]),
        ];
        for (q, sp, n_exp, u_exp) in cases {
            let eq = equilibrium_solve(&net(), &DemandVector::from_array(q), sp, sp, &bounds()).unwrap();
            for (a, b) in eq.n_star.to_array().iter().zip(n_exp) {
                assert!((a - b).abs() <= 1.0, "{a} vs {b}");
            }
            assert!((eq.u_star.u12 - u_exp[0]).abs() <= 0.01);
            assert!((eq.u_star.u21 - u_exp[1]).abs() <= 0.01);
            assert!(eq.residual < 1e-6);
        }
    }

    #[test]
    fn equilibrium_symmetry() {
        let eq = equilibrium_solve(&net(), &DemandVector::new(1.3, 0.9, 0.9, 1.3), 2500.0, 2500.0, &bounds()).unwrap();
        assert_relative_eq!(eq.n_star.n11, eq.n_star.n22, max_relative = 1e-12);
        assert_relative_eq!(eq.n_star.n12, eq.n_star.n21, max_relative = 1e-12);
        assert_relative_eq!(eq.u_star.u12, eq.u_star.u21, max_relative = 1e-12);
    }

    #[test]
    fn equilibrium_infeasible_control() {
        // tiny transfer demand forces u* below u_min
        let r = equilibrium_solve(&net(), &DemandVector::new(1.0, 0.01, 1.0, 1.0), 2000.0, 2000.0, &bounds());
        assert!(matches!(r, Err(Error::InfeasibleSetpoint { .. })));
    }

    #[test]
    fn steady_state_equals_equilibrium_control() {
        let q = DemandVector::new(1.6, 1.6, 1.6, 1.6);
        let eq = equilibrium_solve(&net(), &q, 3000.0, 3000.0, &bounds()).unwrap();
        let ss = steady_state_control(&net(), &ReferenceState::from_od(&eq.n_star), &Vector4::zeros(), &q).unwrap();
        assert!((ss.u[0] - 0.53).abs() < 0.01 && (ss.u[1] - 0.53).abs() < 0.01);
        assert!(ss.residual < 1e-9);
    }

    #[test]
    fn steady_state_zero_when_theta_is_drift() {
        let nd = ReferenceState::new(700.0, 500.0, 600.0, 900.0);
        let q = DemandVector::new(1.0, 1.0, 1.0, 1.0);
        let (f, _) = net().drift_and_input(&nd.as_od(), &q);
        let ss = steady_state_control(&net(), &nd, &f, &q).unwrap();
        assert_eq!(ss.u, [0.0, 0.0]);
    }

    #[test]
    fn steady_state_singular() {
        let nd = ReferenceState::new(700.0, 0.5, 600.0, 900.0);
        let r = steady_state_control(&net(), &nd, &Vector4::zeros(), &DemandVector::default());
        assert!(matches!(r, Err(Error::SingularInput { .. })));
    }

    #[test]
    fn steady_state_matches_dense_solve() {
        // compare the diagonal closed form with (sᵀs)⁻¹ sᵀ b and with QR
        let nd = ReferenceState::new(640.0, 820.0, 410.0, 1330.0);
        let q = DemandVector::new(0.9, 1.2, 0.6, 1.5);
        let theta = Vector4::new(0.3, -0.1, 0.2, 0.05);
        let ss = steady_state_control(&net(), &nd, &theta, &q).unwrap();
        let (f, s) = net().drift_and_input(&nd.as_od(), &q);
        let b = theta - f;
        let sts: Matrix2<f64> = s.transpose() * s;
        let explicit: Vector2<f64> = sts.try_inverse().unwrap() * s.transpose() * b;
        let qr = s.qr();
        let qr_sol: Vector2<f64> = qr.r().try_inverse().unwrap() * qr.q().transpose() * b;
        assert_relative_eq!(ss.u[0], explicit[0], max_relative = 1e-10);
        assert_relative_eq!(ss.u[1], qr_sol[1], max_relative = 1e-10);
        assert_relative_eq!(ss.residual, (s * qr_sol - b).norm(), max_relative = 1e-10);
    }

    #[test]
    fn nominal_demand_ramps() {
        let d = NominalDemand::new(vec![
            DemandSegment { start: 0.0, end: 100.0, q_start: DemandVector::new(0.0, 0.0, 0.0, 0.0), q_end: DemandVector::new(1.0, 2.0, 3.0, 4.0) },
            DemandSegment::constant(100.0, 200.0, DemandVector::new(1.0, 2.0, 3.0, 4.0)),
        ])
        .unwrap();
        assert_relative_eq!(d.at(50.0).unwrap().q12, 1.0);
        assert_eq!(d.at(200.0).unwrap().q22, 4.0);
        assert!(d.at(-1.0).is_err());
    }
}

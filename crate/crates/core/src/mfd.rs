//! Two-region MFD plant.
//!
//! The network is split into two regions, each with a cubic trip-completion
//! curve `G(n)`. The state is the OD-level accumulation `n_ij` (vehicles in
//! region `i` heading for region `j`) and the two perimeter controls meter the
//! transfer flows `u_ij * (n_ij / n_i) * G_i(n_i)`.
//!
//! All internal units are vehicles and seconds; curves built from hourly
//! coefficients have the `/3600` folded in.

use nalgebra::{Matrix4x2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that the integrator step divides the control interval.
const DIVISIBILITY_TOL: f64 = 1e-9;

/// Cubic trip-completion curve `G(n) = a3 n^3 + a2 n^2 + a1 n` on `[0, n_jam]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MfdCurveParams", into = "MfdCurveParams")]
pub struct MfdCurve {
    a3: f64,
    a2: f64,
    a1: f64,
    n_jam: f64,
    n_crit: f64,
    g_max: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct MfdCurveParams {
    a3: f64,
    a2: f64,
    a1: f64,
    n_jam: f64,
}

impl TryFrom<MfdCurveParams> for MfdCurve {
    type Error = Error;
    fn try_from(p: MfdCurveParams) -> Result<Self> {
        MfdCurve::new(p.a3, p.a2, p.a1, p.n_jam)
    }
}

impl From<MfdCurve> for MfdCurveParams {
    fn from(c: MfdCurve) -> Self {
        MfdCurveParams { a3: c.a3, a2: c.a2, a1: c.a1, n_jam: c.n_jam }
    }
}

impl MfdCurve {
    /// Builds a curve from per-second coefficients and caches `n_crit` and `G_max`.
    pub fn new(a3: f64, a2: f64, a1: f64, n_jam: f64) -> Result<Self> {
        if ![a3, a2, a1, n_jam].iter().all(|v| v.is_finite()) || n_jam <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "curve coefficients must be finite with n_jam > 0 (got {a3}, {a2}, {a1}, {n_jam})"
            )));
        }
        let n_crit = critical_accumulation(a3, a2, a1, n_jam)?;
        let mut curve = MfdCurve { a3, a2, a1, n_jam, n_crit, g_max: 0.0 };
        curve.g_max = curve.rate(n_crit);
        // G must stay non-negative: check the right end and any interior local minimum.
        let mut probes = vec![curve.n_jam];
        probes.extend(stationary_points(a3, a2, a1).into_iter().filter(|&n| n > 0.0 && n < n_jam));
        if let Some(&bad) = probes.iter().find(|&&n| curve.rate(n) < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "trip completion negative at n = {bad:.1} veh"
            )));
        }
        Ok(curve)
    }

    /// Builds a curve from coefficients expressed in veh/h, dividing them by 3600.
    pub fn from_hourly(c3: f64, c2: f64, c1: f64, n_jam: f64) -> Result<Self> {
        Self::new(c3 / 3600.0, c2 / 3600.0, c1 / 3600.0, n_jam)
    }

    /// The cubic used for both regions of the two worked examples:
    /// `(1.4877e-7 n^3 - 2.9815e-3 n^2 + 15.0912 n) / 3600` with `n_jam = 10000`.
    pub fn standard() -> Self {
        Self::from_hourly(1.4877e-7, -2.9815e-3, 15.0912, 10_000.0)
            .expect("standard curve is valid")
    }

    pub fn coefficients(&self) -> (f64, f64, f64) {
        (self.a3, self.a2, self.a1)
    }

    pub fn n_jam(&self) -> f64 {
        self.n_jam
    }

    pub fn n_crit(&self) -> f64 {
        self.n_crit
    }

    pub fn g_max(&self) -> f64 {
        self.g_max
    }

    /// Trip completion rate (veh/s) with a domain check.
    pub fn trip_completion(&self, n: f64) -> Result<f64> {
        if !(0.0..=self.n_jam).contains(&n) {
            return Err(Error::Domain { value: n, n_jam: self.n_jam });
        }
        Ok(self.rate(n))
    }

    /// Unchecked polynomial evaluation.
    #[inline]
    pub fn rate(&self, n: f64) -> f64 {
        ((self.a3 * n + self.a2) * n + self.a1) * n
    }

    /// `G` evaluated on the accumulation clipped into `[0, n_jam]`. Used on
    /// intermediate Runge-Kutta stages, which may step marginally outside.
    #[inline]
    pub fn rate_clipped(&self, n: f64) -> f64 {
        self.rate(n.clamp(0.0, self.n_jam))
    }

    #[inline]
    pub fn slope(&self, n: f64) -> f64 {
        (3.0 * self.a3 * n + 2.0 * self.a2) * n + self.a1
    }
}

fn stationary_points(a3: f64, a2: f64, a1: f64) -> Vec<f64> {
    // roots of 3 a3 n^2 + 2 a2 n + a1
    let (a, b, c) = (3.0 * a3, 2.0 * a2, a1);
    if a == 0.0 {
        return if b == 0.0 { vec![] } else { vec![-c / b] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let sq = disc.sqrt();
    // numerically stable pair
    let q = -0.5 * (b + b.signum() * sq);
    let mut roots = vec![q / a];
    if q != 0.0 {
        roots.push(c / q);
    }
    roots
}

/// Argmax of the cubic on `[0, n_jam]`, located as the interior root of `G'`
/// where `G'' < 0`.
pub fn critical_accumulation(a3: f64, a2: f64, a1: f64, n_jam: f64) -> Result<f64> {
    let second = |n: f64| 6.0 * a3 * n + 2.0 * a2;
    let mut interior: Vec<f64> = stationary_points(a3, a2, a1)
        .into_iter()
        .filter(|&n| n > 0.0 && n < n_jam && second(n) < 0.0)
        .collect();
    interior.sort_by(f64::total_cmp);
    let g = |n: f64| ((a3 * n + a2) * n + a1) * n;
    match interior.first() {
        // the local maximum must also beat the right end of the interval
        Some(&n) if g(n) >= g(n_jam) => Ok(n),
        _ => Err(Error::NoInteriorMaximum { n_jam }),
    }
}

/// OD-level accumulations (veh).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OdAccumulation {
    pub n11: f64,
    pub n12: f64,
    pub n21: f64,
    pub n22: f64,
}

impl OdAccumulation {
    pub const ZERO: Self = Self { n11: 0.0, n12: 0.0, n21: 0.0, n22: 0.0 };

    pub fn new(n11: f64, n12: f64, n21: f64, n22: f64) -> Self {
        Self { n11, n12, n21, n22 }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.n11, self.n12, self.n21, self.n22]
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.n11, self.n12, self.n21, self.n22)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn region1(&self) -> f64 {
        self.n11 + self.n12
    }

    pub fn region2(&self) -> f64 {
        self.n21 + self.n22
    }

    pub fn total(&self) -> f64 {
        self.region1() + self.region2()
    }

    /// Checks non-negativity and the per-region jam limits.
    pub fn validate(&self, net: &TwoRegionNetwork) -> Result<()> {
        let a = self.to_array();
        if a.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(format!("accumulations must be finite and >= 0: {a:?}")));
        }
        if self.region1() > net.curve1.n_jam() {
            return Err(Error::Domain { value: self.region1(), n_jam: net.curve1.n_jam() });
        }
        if self.region2() > net.curve2.n_jam() {
            return Err(Error::Domain { value: self.region2(), n_jam: net.curve2.n_jam() });
        }
        Ok(())
    }
}

/// OD demand (veh/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DemandVector {
    pub q11: f64,
    pub q12: f64,
    pub q21: f64,
    pub q22: f64,
}

impl DemandVector {
    pub fn new(q11: f64, q12: f64, q21: f64, q22: f64) -> Self {
        Self { q11, q12, q21, q22 }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.q11, self.q12, self.q21, self.q22]
    }

    pub fn total(&self) -> f64 {
        self.q11 + self.q12 + self.q21 + self.q22
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(format!("demand must be >= 0: {:?}", self.to_array())));
        }
        Ok(())
    }
}

/// Perimeter metering rates `(u12, u21)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub u12: f64,
    pub u21: f64,
}

impl ControlInput {
    pub fn new(u12: f64, u21: f64) -> Self {
        Self { u12, u21 }
    }

    pub fn uniform(u: f64) -> Self {
        Self::new(u, u)
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.u12, self.u21]
    }
}

/// Actuator box `u_min <= u_ij <= u_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActuatorBox {
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for ActuatorBox {
    fn default() -> Self {
        Self { u_min: 0.1, u_max: 0.9 }
    }
}

impl ActuatorBox {
    pub fn new(u_min: f64, u_max: f64) -> Result<Self> {
        let b = Self { u_min, u_max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.u_min && self.u_min <= self.u_max && self.u_max <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "actuator box needs 0 <= u_min <= u_max <= 1 (got [{}, {}])",
                self.u_min, self.u_max
            )));
        }
        Ok(())
    }

    pub fn clamp(&self, u: ControlInput) -> ControlInput {
        ControlInput::new(u.u12.clamp(self.u_min, self.u_max), u.u21.clamp(self.u_min, self.u_max))
    }

    pub fn contains(&self, u: ControlInput) -> bool {
        [u.u12, u.u21].iter().all(|v| (self.u_min..=self.u_max).contains(v))
    }
}

/// The two regions and the singularity guard used for the ratios `n_ij / n_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoRegionNetwork {
    pub curve1: MfdCurve,
    pub curve2: MfdCurve,
    pub epsilon_floor: f64,
}

impl Default for TwoRegionNetwork {
    fn default() -> Self {
        Self::symmetric(MfdCurve::standard())
    }
}

/// Per-region flow quantities at a state: `(n_ij / n_i) * G_i(n_i)` for each OD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdFlows {
    pub internal1: f64,
    pub transfer12: f64,
    pub transfer21: f64,
    pub internal2: f64,
}

impl OdFlows {
    /// Internal (intra-region) trip completions `(n11/n1) G1 + (n22/n2) G2`.
    pub fn internal_completion(&self) -> f64 {
        self.internal1 + self.internal2
    }
}

impl TwoRegionNetwork {
    pub fn new(curve1: MfdCurve, curve2: MfdCurve, epsilon_floor: f64) -> Result<Self> {
        if !(epsilon_floor > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon_floor must be > 0 (got {epsilon_floor})")));
        }
        Ok(Self { curve1, curve2, epsilon_floor })
    }

    pub fn symmetric(curve: MfdCurve) -> Self {
        Self { curve1: curve, curve2: curve, epsilon_floor: 1.0 }
    }

    pub fn flows(&self, n: &OdAccumulation) -> OdFlows {
        let n1 = n.region1();
        let n2 = n.region2();
        let g1 = self.curve1.rate_clipped(n1) / n1.max(self.epsilon_floor);
        let g2 = self.curve2.rate_clipped(n2) / n2.max(self.epsilon_floor);
        OdFlows {
            internal1: n.n11 * g1,
            transfer12: n.n12 * g1,
            transfer21: n.n21 * g2,
            internal2: n.n22 * g2,
        }
    }

    /// Right-hand side `K(n, u, q)` of the OD-level flow-conservation dynamics.
    pub fn dynamics_rhs(&self, n: &OdAccumulation, u: &ControlInput, q: &DemandVector) -> Vector4<f64> {
        let fl = self.flows(n);
        Vector4::new(
            -fl.internal1 + u.u21 * fl.transfer21 + q.q11,
            -u.u12 * fl.transfer12 + q.q12,
            -u.u21 * fl.transfer21 + q.q21,
            -fl.internal2 + u.u12 * fl.transfer12 + q.q22,
        )
    }

    /// Affine split `K(n, u, q) = f(n, q) + s(n) u`.
    pub fn drift_and_input(&self, n: &OdAccumulation, q: &DemandVector) -> (Vector4<f64>, Matrix4x2<f64>) {
        let fl = self.flows(n);
        let f = Vector4::new(-fl.internal1 + q.q11, q.q12, q.q21, -fl.internal2 + q.q22);
        #[rustfmt::skip]
        let s = Matrix4x2::new(
            0.0,            fl.transfer21,
            -fl.transfer12, 0.0,
            0.0,            -fl.transfer21,
            fl.transfer12,  0.0,
        );
        (f, s)
    }

    /// Clamps each component to `>= 0` and scales a region down onto its jam
    /// accumulation when exceeded. Returns whether anything changed.
    pub fn clamp_state(&self, n: &mut OdAccumulation) -> bool {
        let mut changed = false;
        for v in [&mut n.n11, &mut n.n12, &mut n.n21, &mut n.n22] {
            if *v < 0.0 {
                *v = 0.0;
                changed = true;
            }
        }
        let n1 = n.region1();
        if n1 > self.curve1.n_jam() {
            let k = self.curve1.n_jam() / n1;
            n.n11 *= k;
            n.n12 *= k;
            changed = true;
        }
        let n2 = n.region2();
        if n2 > self.curve2.n_jam() {
            let k = self.curve2.n_jam() / n2;
            n.n21 *= k;
            n.n22 *= k;
            changed = true;
        }
        changed
    }
}

/// Result of one internal Runge-Kutta step.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub state: OdAccumulation,
    /// State before clamping.
    pub raw: OdAccumulation,
    pub clamped: bool,
    /// Demand entering the network over the step (RK4-weighted, veh).
    pub inflow: f64,
    /// Internal trip completions over the step (RK4-weighted, veh).
    pub completion: f64,
}

/// One classical RK4 step with the control held constant and demand
/// evaluated at the stage times. Inflow and completions are accumulated with
/// the same stage weights, so that `inflow - completion` equals the change in
/// total accumulation whenever no clamping happens.
pub fn rk4_step<D>(net: &TwoRegionNetwork, n: &OdAccumulation, u: &ControlInput, demand: &D, t: f64, dt: f64) -> StepOutcome
where
    D: Fn(f64) -> DemandVector + ?Sized,
{
    let x0 = n.to_vector();
    let eval = |x: &Vector4<f64>, tt: f64| {
        let s = OdAccumulation::from_vector(x);
        let q = demand(tt);
        let rhs = net.dynamics_rhs(&s, u, &q);
        (rhs, q.total(), net.flows(&s).internal_completion())
    };
    let (k1, i1, c1) = eval(&x0, t);
    let (k2, i2, c2) = eval(&(x0 + k1 * (dt / 2.0)), t + dt / 2.0);
    let (k3, i3, c3) = eval(&(x0 + k2 * (dt / 2.0)), t + dt / 2.0);
    // left limit: demand may jump exactly at the end of the step
    let (k4, i4, c4) = eval(&(x0 + k3 * dt), t + dt * (1.0 - 1e-9));
    let x1 = x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    let raw = OdAccumulation::from_vector(&x1);
    let mut state = raw;
    let clamped = net.clamp_state(&mut state);
    StepOutcome {
        state,
        raw,
        clamped,
        inflow: dt / 6.0 * (i1 + 2.0 * i2 + 2.0 * i3 + i4),
        completion: dt / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4),
    }
}

/// Fixed-step integration settings with a zero-order hold on the control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorSettings {
    pub dt: f64,
    pub control_interval: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self { dt: 1.0, control_interval: 60.0 }
    }
}

impl IntegratorSettings {
    /// Number of internal steps per control interval.
    pub fn steps_per_interval(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.control_interval > 0.0) {
            return Err(Error::InvalidArgument("dt and control interval must be positive".into()));
        }
        let ratio = self.control_interval / self.dt;
        let k = ratio.round();
        if k < 1.0 || (ratio - k).abs() > DIVISIBILITY_TOL * ratio.max(1.0) {
            return Err(Error::StepDoesNotDivide { dt: self.dt, interval: self.control_interval });
        }
        Ok(k as usize)
    }

    /// Number of control intervals in `[t0, t1]`.
    pub fn intervals_in(&self, t0: f64, t1: f64) -> Result<usize> {
        let ratio = (t1 - t0) / self.control_interval;
        let k = ratio.round();
        if !(t1 > t0) || (ratio - k).abs() > DIVISIBILITY_TOL * ratio.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon [{t0}, {t1}] is not a positive multiple of the control interval {}",
                self.control_interval
            )));
        }
        Ok(k as usize)
    }
}

/// Record of a state clamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampEvent {
    pub t: f64,
    pub before: OdAccumulation,
    pub after: OdAccumulation,
}

/// Result of holding one control over one interval.
#[derive(Debug, Clone)]
pub struct IntervalOutcome {
    pub state: OdAccumulation,
    pub clamped: bool,
    pub inflow: f64,
    pub completion: f64,
}

/// Holds `u` for `steps` RK4 steps of size `dt` starting at `t`. `observer`
/// sees every grid point, including both interval ends.
pub fn advance_interval<D, O>(
    net: &TwoRegionNetwork,
    start: OdAccumulation,
    u: &ControlInput,
    demand: &D,
    t: f64,
    dt: f64,
    steps: usize,
    clamps: &mut Vec<ClampEvent>,
    mut observer: O,
) -> IntervalOutcome
where
    D: Fn(f64) -> DemandVector + ?Sized,
    O: FnMut(f64, &OdAccumulation),
{
    let mut n = start;
    let mut out = IntervalOutcome { state: start, clamped: false, inflow: 0.0, completion: 0.0 };
    observer(t, &n);
    for k in 0..steps {
        let tk = t + k as f64 * dt;
        let step = rk4_step(net, &n, u, demand, tk, dt);
        if step.clamped {
            clamps.push(ClampEvent { t: tk + dt, before: step.raw, after: step.state });
            out.clamped = true;
        }
        out.inflow += step.inflow;
        out.completion += step.completion;
        n = step.state;
        observer(tk + dt, &n);
    }
    out.state = n;
    out
}

/// Optional tracking columns attached to closed-loop traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingColumns {
    pub nd: [f64; 4],
    pub e: [f64; 4],
    pub mu: [f64; 2],
    pub us: [f64; 2],
}

/// One 60 s sample of a simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub n: OdAccumulation,
    /// Control held over `[t, t + interval)`; for the final row, the control
    /// the controller would apply next.
    pub u: ControlInput,
    pub q: DemandVector,
    /// Whether a clamp happened during the interval ending at `t`.
    pub clamped: bool,
    pub tracking: Option<TrackingColumns>,
}

/// Sampled simulation output plus the integrator's flow bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct SimulationTrace {
    pub rows: Vec<TraceRow>,
    pub clamp_events: Vec<ClampEvent>,
    /// Cumulative demand inflow at each row (veh), from the RK4 bookkeeping.
    pub cumulative_inflow: Vec<f64>,
    /// Cumulative internal completions at each row (veh).
    pub cumulative_completion: Vec<f64>,
}

impl SimulationTrace {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn last_state(&self) -> Option<OdAccumulation> {
        self.rows.last().map(|r| r.n)
    }
}

/// Integrates the plant over `[t0, t1]` with RK4 at step `dt`, querying
/// `controller` at the start of each control interval and holding its output.
pub fn integrate<C, D>(
    net: &TwoRegionNetwork,
    initial: OdAccumulation,
    mut controller: C,
    demand: D,
    t0: f64,
    t1: f64,
    settings: IntegratorSettings,
) -> Result<SimulationTrace>
where
    C: FnMut(f64, &OdAccumulation) -> ControlInput,
    D: Fn(f64) -> DemandVector,
{
    let steps = settings.steps_per_interval()?;
    let intervals = settings.intervals_in(t0, t1)?;
    initial.validate(net)?;
    let mut trace = SimulationTrace::default();
    let mut n = initial;
    let mut inflow = 0.0;
    let mut completion = 0.0;
    let mut clamped = false;
    for k in 0..=intervals {
        let t = t0 + k as f64 * settings.control_interval;
        let u = controller(t, &n);
        trace.rows.push(TraceRow { t, n, u, q: demand(t), clamped, tracking: None });
        trace.cumulative_inflow.push(inflow);
        trace.cumulative_completion.push(completion);
        if k == intervals {
            break;
        }
        let out = advance_interval(net, n, &u, &demand, t, settings.dt, steps, &mut trace.clamp_events, |_, _| {});
        n = out.state;
        clamped = out.clamped;
        inflow += out.inflow;
        completion += out.completion;
    }
    Ok(trace)
}

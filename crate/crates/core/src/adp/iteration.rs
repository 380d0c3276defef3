use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basis::Basis;
use super::samples::{prepare, required_samples, PreparedSample, TransitionSample};
use super::{AdpCost, CriticActorWeights};
use crate::augmented::ln_cosh;
use crate::error::{Error, Result};
use crate::linalg::{lstsq, lstsq_multi, MAX_CONDITION};

/// Stopping rule and safeguards for policy iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiSettings {
    /// Relative critic change `||ΔWc|| / max(1, ||Wc||)` below which iteration stops.
    pub tol: f64,
    pub max_iterations: usize,
    /// Weight norm treated as divergence.
    pub divergence_norm: f64,
    pub max_condition: f64,
}

impl Default for PiSettings {
    fn default() -> Self {
        Self { tol: 1e-3, max_iterations: 50, divergence_norm: 1e6, max_condition: MAX_CONDITION }
    }
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub critic_norm: f64,
    pub actor_norm: f64,
    pub weight_change: f64,
    /// Least-squares residual relative to the right-hand side norm.
    pub relative_residual: f64,
    pub condition: f64,
    pub bellman_residual: Option<f64>,
}

/// Result of a policy-iteration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingOutcome {
    pub weights: CriticActorWeights,
    pub log: Vec<IterationRecord>,
    pub converged: bool,
}

impl TrainingOutcome {
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            let last = self.log.last().map(|r| r.weight_change).unwrap_or(f64::NAN);
            Err(Error::NoConvergence { iterations: self.log.len(), residual: last })
        }
    }
}

fn trap_weight(g: usize, len: usize, dt: f64) -> f64 {
    if len == 1 {
        1.0
    } else if g == 0 || g == len - 1 {
        0.5 * dt
    } else {
        dt
    }
}

fn irl_system(prepared: &[PreparedSample], weights: &CriticActorWeights, cost: &AdpCost, with_actor: bool) -> (DMatrix<f64>, DVector<f64>) {
    let p = prepared[0].delta_phi.len();
    let (m, pa) = weights.wa.shape();
    let cols = if with_actor { p + m * pa } else { p };
    let rows: Vec<(Vec<f64>, f64)> = prepared
        .par_iter()
        .map(|s| {
            let d = &weights.wa * &s.actor_features;
            let len = d.ncols();
            let mut row = vec![0.0; cols];
            row[..p].copy_from_slice(s.delta_phi.as_slice());
            let mut ctrl = 0.0;
            for g in 0..len {
                let w = trap_weight(g, len, s.dt);
                let dg = d.column(g).into_owned();
                ctrl += w * cost.control_cost_preactivation(&dg);
                if with_actor {
                    let phi = s.actor_features.column(g);
                    for i in 0..m {
                        let mu_k = -cost.lambda * dg[i].tanh();
                        let c = w * 2.0 * cost.lambda * cost.gamma[i] * (mu_k - s.behavior[(i, g)]);
                        if c != 0.0 {
                            for (r, v) in row[p + i * pa..p + (i + 1) * pa].iter_mut().zip(phi.iter()) {
                                *r += c * v;
                            }
                        }
                    }
                }
            }
            (row, -(s.state_cost + ctrl))
        })
        .collect();
    let a = DMatrix::from_row_iterator(rows.len(), cols, rows.iter().flat_map(|(r, _)| r.iter().copied()));
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|(_, v)| *v));
    (a, b)
}

fn split(x: &DVector<f64>, p: usize, m: usize, pa: usize) -> CriticActorWeights {
    CriticActorWeights {
        wc: x.rows(0, p).into_owned(),
        wa: DMatrix::from_fn(m, pa, |i, j| x[p + i * pa + j]),
    }
}

struct StepResult {
    weights: CriticActorWeights,
    relative_residual: f64,
    condition: f64,
}

fn irl_step(prepared: &[PreparedSample], weights: &CriticActorWeights, cost: &AdpCost, max_condition: f64) -> Result<StepResult> {
    let p = prepared[0].delta_phi.len();
    let (m, pa) = weights.wa.shape();
    let needed = required_samples(p, pa, m);
    if prepared.len() < needed {
        return Err(Error::TooFewSamples { got: prepared.len(), needed });
    }
    let (a, b) = irl_system(prepared, weights, cost, true);
    let sol = lstsq(&a, &b, max_condition)?;
    Ok(StepResult {
        weights: split(&sol.x, p, m, pa),
        relative_residual: sol.residual / b.norm().max(f64::MIN_POSITIVE),
        condition: sol.condition,
    })
}

/// One IRL update: solves jointly for the critic of the current policy and
/// the actor of the improved policy from off-policy samples.
pub fn irl_lstsq(
    samples: &[TransitionSample],
    weights: &CriticActorWeights,
    critic: &Basis,
    actor: &Basis,
    cost: &AdpCost,
) -> Result<(CriticActorWeights, f64)> {
    if samples.is_empty() {
        return Err(Error::TooFewSamples { got: 0, needed: 1 });
    }
    let prepared = prepare(samples, critic, actor);
    let r = irl_step(&prepared, weights, cost, MAX_CONDITION)?;
    Ok((r.weights, r.relative_residual))
}

/// Critic-only IRL evaluation of the policy in `weights`, valid for
/// on-policy data where the off-policy correction vanishes.
pub fn irl_evaluate(
    samples: &[TransitionSample],
    weights: &CriticActorWeights,
    critic: &Basis,
    actor: &Basis,
    cost: &AdpCost,
) -> Result<DVector<f64>> {
    if samples.len() < critic.len() {
        return Err(Error::TooFewSamples { got: samples.len(), needed: critic.len() });
    }
    let prepared = prepare(samples, critic, actor);
    let (a, b) = irl_system(&prepared, weights, cost, false);
    Ok(lstsq(&a, &b, MAX_CONDITION)?.x)
}

/// Where model-free iterations get their data.
pub enum SampleSource<'a> {
    /// One batch reused at every iteration (off-policy).
    Fixed(&'a [TransitionSample]),
    /// Fresh data under the current policy at every iteration.
    Recollect(Box<dyn FnMut(&CriticActorWeights, usize) -> Result<Vec<TransitionSample>> + 'a>),
}

type Diagnostic<'a> = Option<&'a (dyn Fn(&CriticActorWeights) -> f64 + Sync)>;

fn run_iterations<F>(init: CriticActorWeights, settings: &PiSettings, diag: Diagnostic<'_>, mut step: F) -> Result<TrainingOutcome>
where
    F: FnMut(&CriticActorWeights, usize) -> Result<StepResult>,
{
    let mut weights = init;
    let mut log = Vec::new();
    for k in 0..settings.max_iterations.max(1) {
        let r = step(&weights, k)?;
        let critic_norm = r.weights.wc.norm();
        let actor_norm = r.weights.wa.norm();
        if !r.weights.is_finite() || critic_norm > settings.divergence_norm || actor_norm > settings.divergence_norm {
            return Err(Error::Diverged { iteration: k + 1, norm: critic_norm.max(actor_norm) });
        }
        let change = (&r.weights.wc - &weights.wc).norm() / weights.wc.norm().max(1.0);
        weights = r.weights;
        log.push(IterationRecord {
            iteration: k + 1,
            critic_norm,
            actor_norm,
            weight_change: change,
            relative_residual: r.relative_residual,
            condition: r.condition,
            bellman_residual: diag.map(|f| f(&weights)),
        });
        if change < settings.tol || settings.tol.is_infinite() {
            return Ok(TrainingOutcome { weights, log, converged: true });
        }
    }
    Ok(TrainingOutcome { weights, log, converged: false })
}

/// Model-free policy iteration on IRL data. Stops when the relative critic
/// change drops below `settings.tol`; a run that hits the iteration cap is
/// returned with `converged = false` and its full log.
pub fn policy_iteration_model_free(
    source: SampleSource<'_>,
    critic: &Basis,
    actor: &Basis,
    cost: &AdpCost,
    init: CriticActorWeights,
    settings: &PiSettings,
    diagnostic: Diagnostic<'_>,
) -> Result<TrainingOutcome> {
    match source {
        SampleSource::Fixed(samples) => {
            if samples.is_empty() {
                return Err(Error::TooFewSamples { got: 0, needed: 1 });
            }
            let prepared = prepare(samples, critic, actor);
            run_iterations(init, settings, diagnostic, |w, _| irl_step(&prepared, w, cost, settings.max_condition))
        }
        SampleSource::Recollect(mut collect) => run_iterations(init, settings, diagnostic, |w, k| {
            let samples = collect(w, k)?;
            if samples.is_empty() {
                return Err(Error::TooFewSamples { got: 0, needed: 1 });
            }
            irl_step(&prepare(&samples, critic, actor), w, cost, settings.max_condition)
        }),
    }
}

/// State with its model blocks `Ṅ = F + S μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPoint {
    pub state: DVector<f64>,
    pub drift: DVector<f64>,
    pub input: DMatrix<f64>,
}

struct PreparedPoint {
    grad_drift: DVector<f64>,
    grad_input: DMatrix<f64>,
    actor_features: DVector<f64>,
    state_cost: f64,
}

fn prepare_points(windows: &[Vec<ModelPoint>], critic: &Basis, actor: &Basis, cost: &AdpCost) -> Vec<Vec<PreparedPoint>> {
    windows
        .par_iter()
        .map(|w| {
            w.iter()
                .map(|pt| {
                    let j = critic.jacobian(pt.state.as_slice());
                    PreparedPoint {
                        grad_drift: &j * &pt.drift,
                        grad_input: &j * &pt.input,
                        actor_features: actor.eval(pt.state.as_slice()),
                        state_cost: cost.state_cost(&pt.state),
                    }
                })
                .collect()
        })
        .collect()
}

fn evaluation_system(windows: &[Vec<PreparedPoint>], wa: &DMatrix<f64>, cost: &AdpCost, dt: f64) -> (DMatrix<f64>, DVector<f64>) {
    let p = windows[0][0].grad_drift.len();
    let rows: Vec<(DVector<f64>, f64)> = windows
        .par_iter()
        .map(|w| {
            let mut row = DVector::zeros(p);
            let mut rhs = 0.0;
            for (g, pt) in w.iter().enumerate() {
                let wt = trap_weight(g, w.len(), dt);
                let d = wa * &pt.actor_features;
                let mu = d.map(|v| -cost.lambda * v.tanh());
                row += (&pt.grad_drift + &pt.grad_input * &mu) * wt;
                rhs -= wt * (pt.state_cost + cost.control_cost_preactivation(&d));
            }
            (row, rhs)
        })
        .collect();
    let a = DMatrix::from_fn(rows.len(), p, |i, j| rows[i].0[j]);
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    (a, b)
}

/// Model-based policy evaluation of the policy `wa` on the given windows.
/// A window with one point contributes the pointwise Bellman residual; longer
/// windows contribute its trapezoid integral at spacing `dt`.
pub fn model_based_evaluate(
    windows: &[Vec<ModelPoint>],
    dt: f64,
    wa: &DMatrix<f64>,
    critic: &Basis,
    actor: &Basis,
    cost: &AdpCost,
) -> Result<DVector<f64>> {
    let prepared = prepare_points(windows, critic, actor, cost);
    let (a, b) = evaluation_system(&prepared, wa, cost, dt);
    Ok(lstsq(&a, &b, MAX_CONDITION)?.x)
}

fn improvement(windows: &[Vec<PreparedPoint>], wc: &DVector<f64>, m: usize, cost: &AdpCost, max_condition: f64) -> Result<DMatrix<f64>> {
    let pts: Vec<&PreparedPoint> = windows.iter().flatten().collect();
    let pa = pts[0].actor_features.len();
    let phi = DMatrix::from_fn(pts.len(), pa, |r, c| pts[r].actor_features[c]);
    let target = DMatrix::from_fn(pts.len(), m, |r, i| {
        let sg = pts[r].grad_input.column(i).dot(wc);
        sg / (2.0 * cost.lambda * cost.gamma[i])
    });
    if target.amax() == 0.0 {
        return Ok(DMatrix::zeros(m, pa));
    }
    let (w, _) = lstsq_multi(&phi, &target, max_condition)?;
    Ok(w.transpose())
}

/// Policy iteration with full model access. Evaluation solves the Bellman
/// equation for the critic in least squares over the windows; improvement
/// projects `D = (1/2λ) R⁻¹ Sᵀ ∇φᵀ Wc` onto the actor basis.
pub fn policy_iteration_model_based(
    windows: &[Vec<ModelPoint>],
    dt: f64,
    critic: &Basis,
    actor: &Basis,
    cost: &AdpCost,
    init: CriticActorWeights,
    settings: &PiSettings,
    diagnostic: Diagnostic<'_>,
) -> Result<TrainingOutcome> {
    if windows.is_empty() || windows.iter().any(|w| w.is_empty()) {
        return Err(Error::TooFewSamples { got: 0, needed: critic.len() });
    }
    let prepared = prepare_points(windows, critic, actor, cost);
    let m = init.wa.nrows();
    run_iterations(init, settings, diagnostic, |w, _| {
        let (a, b) = evaluation_system(&prepared, &w.wa, cost, dt);
        let sol = lstsq(&a, &b, settings.max_condition)?;
        let wa = improvement(&prepared, &sol.x, m, cost, settings.max_condition)?;
        Ok(StepResult {
            relative_residual: sol.residual / b.norm().max(f64::MIN_POSITIVE),
            condition: sol.condition,
            weights: CriticActorWeights { wc: sol.x, wa },
        })
    })
}

/// Action-improvement step in isolation, exposed for tests.
pub fn improve_policy(points: &[ModelPoint], wc: &DVector<f64>, channels: usize, critic: &Basis, actor: &Basis, cost: &AdpCost) -> Result<DMatrix<f64>> {
    let windows: Vec<Vec<ModelPoint>> = points.iter().map(|p| vec![p.clone()]).collect();
    improvement(&prepare_points(&windows, critic, actor, cost), wc, channels, cost, MAX_CONDITION)
}

/// RMS over probe points of `eᵀQe + ∇Vᵀ F + λ² Σ γ_i ln(1 - tanh² D_i)` with
/// `V` from the critic and `D` from the actor.
pub fn bellman_residual(weights: &CriticActorWeights, points: &[ModelPoint], critic: &Basis, actor: &Basis, cost: &AdpCost) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let sq: f64 = points
        .par_iter()
        .map(|pt| {
            let j = critic.jacobian(pt.state.as_slice());
            let grad = j.transpose() * &weights.wc;
            let d = weights.preactivation(actor, &pt.state);
            let log_term: f64 = d.iter().zip(&cost.gamma).map(|(di, g)| -2.0 * g * ln_cosh(*di)).sum();
            let r = cost.state_cost(&pt.state) + grad.dot(&pt.drift) + cost.lambda * cost.lambda * log_term;
            r * r
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    (sq / points.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adp::toy::ScalarLinearPlant;
    use crate::adp::{collect_samples, ProbingNoise};

    fn toy() -> (ScalarLinearPlant, Basis, Basis, AdpCost) {
        let plant = ScalarLinearPlant::new(-0.5, 1.0, 1.0, 0.5, 0.01);
        let critic = Basis::new(vec![0.0], vec![1.0], vec![vec![0, 0]]).unwrap();
        let actor = Basis::new(vec![0.0], vec![1.0], vec![vec![0]]).unwrap();
        let cost = AdpCost::new(DMatrix::from_element(1, 1, 1.0), vec![1.0], 50.0).unwrap();
        (plant, critic, actor, cost)
    }

    fn toy_samples(noise_amp: f64) -> (Vec<TransitionSample>, Basis, Basis, AdpCost) {
        let (plant, critic, actor, cost) = toy();
        let envs: Vec<_> = (0..8).map(|i| plant.with_state(-1.0 + 0.25 * i as f64 + 0.1)).collect();
        let noise: Vec<_> = (0..8).map(|i| ProbingNoise::new(vec![noise_amp], &[1.3, 2.9, 4.1, 7.7], 0.0, 3, i)).collect();
        let w0 = CriticActorWeights::zeros(1, 1, 1);
        let s = collect_samples(envs, &w0, &actor, &cost, &noise, 20).unwrap();
        (s, critic, actor, cost)
    }

    #[test]
    fn duplicated_samples_same_solution() {
        let (s, critic, actor, cost) = toy_samples(0.5);
        let w0 = CriticActorWeights::zeros(1, 1, 1);
        let (a, _) = irl_lstsq(&s, &w0, &critic, &actor, &cost).unwrap();
        let doubled: Vec<_> = s.iter().chain(s.iter()).cloned().collect();
        let (b, _) = irl_lstsq(&doubled, &w0, &critic, &actor, &cost).unwrap();
        assert!((&a.wc - &b.wc).norm() < 1e-10 * a.wc.norm());
        assert!((&a.wa - &b.wa).norm() < 1e-10 * a.wa.norm().max(1.0));
    }

    #[test]
    fn tol_infinite_single_iteration() {
        let (s, critic, actor, cost) = toy_samples(0.5);
        let settings = PiSettings { tol: f64::INFINITY, ..Default::default() };
        let out = policy_iteration_model_free(SampleSource::Fixed(&s), &critic, &actor, &cost, CriticActorWeights::zeros(1, 1, 1), &settings, None).unwrap();
        assert_eq!(out.log.len(), 1);
    }

    #[test]
    fn zero_noise_behavior_equals_policy() {
        let (s, ..) = toy_samples(0.0);
        assert!(s.iter().all(|x| x.behavior.iter().all(|b| b[0] == 0.0)));
    }

    #[test]
    fn zero_critic_zero_improvement() {
        let (plant, critic, actor, cost) = toy();
        let pts: Vec<_> = [-1.0, -0.3, 0.4, 0.9].iter().map(|&x| plant.model_point(x)).collect();
        let wa = improve_policy(&pts, &DVector::zeros(1), 1, &critic, &actor, &cost).unwrap();
        assert_eq!(wa, DMatrix::zeros(1, 1));
    }

    #[test]
    fn residual_zero_for_zero_weights_at_origin() {
        let (plant, critic, actor, cost) = toy();
        let w = CriticActorWeights::zeros(1, 1, 1);
        assert_eq!(bellman_residual(&w, &[plant.model_point(0.0)], &critic, &actor, &cost), 0.0);
    }

    #[test]
    fn irl_linear_in_costs() {
        // scaling the regression rows and rhs scales the residual at fixed weights
        let (s, critic, actor, cost) = toy_samples(0.5);
        let w0 = CriticActorWeights::zeros(1, 1, 1);
        let prepared = prepare(&s, &critic, &actor);
        let (a, b) = irl_system(&prepared, &w0, &cost, true);
        let x = DVector::from_vec(vec![0.3, -0.2]);
        let r1 = (&a * &x - &b).norm();
        let r2 = ((&a * 2.0) * &x - &b * 2.0).norm();
        assert!((r2 - 2.0 * r1).abs() < 1e-12 * r1.max(1.0));
    }
}

use nalgebra::{DMatrix, DVector};
use perimeter_adp::adp::toy::{riccati_value, ScalarLinearPlant};
use perimeter_adp::adp::{
    collect_samples, irl_evaluate, irl_lstsq, model_based_evaluate, policy_iteration_model_based, policy_iteration_model_free, AdpCost, Basis,
    CriticActorWeights, PiSettings, ProbingNoise, SampleSource, TransitionSample,
};
use perimeter_adp::linalg::trapezoid;

struct Toy {
    plant: ScalarLinearPlant,
    critic: Basis,
    actor: Basis,
    cost: AdpCost,
}

fn toy() -> Toy {
    Toy {
        plant: ScalarLinearPlant::new(-0.5, 1.0, 1.0, 0.5, 0.01),
        critic: Basis::new(vec![0.0], vec![1.0], vec![vec![0, 0]]).unwrap(),
        actor: Basis::new(vec![0.0], vec![1.0], vec![vec![0]]).unwrap(),
        cost: AdpCost::new(DMatrix::from_element(1, 1, 1.0), vec![1.0], 50.0).unwrap(),
    }
}

fn samples(t: &Toy, w: &CriticActorWeights, amp: f64) -> Vec<TransitionSample> {
    let envs: Vec<_> = (0..8).map(|i| t.plant.with_state(-1.0 + 0.25 * i as f64 + 0.1)).collect();
    let noise: Vec<_> = (0..8).map(|i| ProbingNoise::new(vec![amp], &[1.3, 2.9, 4.1, 7.7], 0.0, 3, i)).collect();
    collect_samples(envs, w, &t.actor, &t.cost, &noise, 20).unwrap()
}

#[test]
fn model_free_matches_riccati() {
    let t = toy();
    let s = samples(&t, &CriticActorWeights::zeros(1, 1, 1), 0.5);
    let out =
        policy_iteration_model_free(SampleSource::Fixed(&s), &t.critic, &t.actor, &t.cost, CriticActorWeights::zeros(1, 1, 1), &PiSettings::default(), None)
            .unwrap();
    let p = riccati_value(-0.5, 1.0, 1.0, 1.0);
    assert!(out.converged);
    assert!((out.weights.wc[0] / p - 1.0).abs() < 0.02, "{} vs {p}", out.weights.wc[0]);
}

#[test]
fn model_based_matches_riccati() {
    let t = toy();
    let windows: Vec<_> = (-20..=20).map(|k| vec![t.plant.model_point(0.05 * k as f64)]).collect();
    let out =
        policy_iteration_model_based(&windows, 0.01, &t.critic, &t.actor, &t.cost, CriticActorWeights::zeros(1, 1, 1), &PiSettings::default(), None)
            .unwrap();
    let p = riccati_value(-0.5, 1.0, 1.0, 1.0);
    assert!((out.weights.wc[0] / p - 1.0).abs() < 0.02, "{} vs {p}", out.weights.wc[0]);
}

/// Closed-loop paths with the feedback evaluated continuously, so the
/// behaviour equals the target policy at every grid point.
fn on_policy_samples(t: &Toy, w: &CriticActorWeights) -> Vec<TransitionSample> {
    let (dt, steps) = (0.01, 50);
    let mu = |x: f64| w.policy(&t.actor, &DVector::from_element(1, x), t.cost.lambda)[0];
    let f = |x: f64| t.plant.a * x + t.plant.b * mu(x);
    let mut out = Vec::new();
    for i in 0..8 {
        let mut x = -1.0 + 0.25 * i as f64 + 0.1;
        for k in 0..20 {
            let mut path = vec![x];
            for _ in 0..steps {
                let k1 = f(x);
                let k2 = f(x + 0.5 * dt * k1);
                let k3 = f(x + 0.5 * dt * k2);
                let k4 = f(x + dt * k3);
                x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                path.push(x);
            }
            let sc: Vec<f64> = path.iter().map(|x| x * x).collect();
            out.push(TransitionSample {
                t: 0.5 * k as f64,
                path: path.iter().map(|x| DVector::from_element(1, *x)).collect(),
                behavior: path.iter().map(|x| DVector::from_element(1, mu(*x))).collect(),
                dt,
                state_cost: trapezoid(&sc, dt),
            });
        }
    }
    out
}

#[test]
fn on_policy_irl_matches_model_based_evaluation() {
    let t = toy();
    let w = CriticActorWeights { wc: DVector::zeros(1), wa: DMatrix::from_element(1, 1, 0.01) };
    let s = on_policy_samples(&t, &w);
    let irl = irl_evaluate(&s, &w, &t.critic, &t.actor, &t.cost).unwrap();
    let windows: Vec<Vec<_>> = s.iter().map(|x| x.path.iter().map(|p| t.plant.model_point(p[0])).collect()).collect();
    let mb = model_based_evaluate(&windows, 0.01, &w.wa, &t.critic, &t.actor, &t.cost).unwrap();
    let rel = (&irl - &mb).norm() / mb.norm();
    assert!(rel < 1e-3, "irl {irl} model-based {mb}");
}

#[test]
fn held_feedback_needs_the_off_policy_correction() {
    // the plant holds μ over each interval, so zero-noise data is not on-policy;
    // the joint solve still recovers the model-based value of the target policy
    let t = toy();
    let w = CriticActorWeights { wc: DVector::zeros(1), wa: DMatrix::from_element(1, 1, 0.01) };
    let s = samples(&t, &w, 0.5);
    let (joint, _) = irl_lstsq(&s, &w, &t.critic, &t.actor, &t.cost).unwrap();
    let windows: Vec<Vec<_>> = s.iter().map(|x| x.path.iter().map(|p| t.plant.model_point(p[0])).collect()).collect();
    let mb = model_based_evaluate(&windows, 0.01, &w.wa, &t.critic, &t.actor, &t.cost).unwrap();
    assert!((&joint.wc - &mb).norm() / mb.norm() < 1e-2, "joint {} model-based {mb}", joint.wc);
}

#[test]
fn interval_state_cost_matches_fine_grid() {
    let t = toy();
    let w = CriticActorWeights { wc: DVector::zeros(1), wa: DMatrix::from_element(1, 1, 0.01) };
    let run = |dt: f64| {
        let envs: Vec<_> = (0..4).map(|i| ScalarLinearPlant::new(-0.5, 1.0, 0.3 + 0.2 * i as f64, 0.5, dt)).collect();
        let noise: Vec<_> = (0..4).map(|_| ProbingNoise::zero(1)).collect();
        collect_samples(envs, &w, &t.actor, &t.cost, &noise, 6).unwrap()
    };
    let (coarse, fine) = (run(1e-3), run(1e-4));
    for (a, b) in coarse.iter().zip(&fine) {
        assert!((a.state_cost / b.state_cost - 1.0).abs() < 1e-6, "{} vs {}", a.state_cost, b.state_cost);
    }
}

#[test]
fn example1_training_log_settles() {
    use perimeter_adp::experiments::training::{train, Method};
    use perimeter_adp::experiments::ExperimentConfig;
    let cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example1.toml").as_ref()).unwrap();
    let log = train(&cfg, Method::ModelFree).unwrap().outcome.log;
    let changes: Vec<f64> = log.iter().map(|r| r.weight_change).collect();
    assert!(changes[2..].windows(2).all(|w| w[1] < w[0]), "{changes:?}");
    let residuals: Vec<f64> = log.iter().map(|r| r.bellman_residual.unwrap()).collect();
    assert!(residuals.windows(2).all(|w| w[1] < w[0]), "{residuals:?}");
}

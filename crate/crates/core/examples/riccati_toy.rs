//! Both learners on a scalar linear plant, checked against the Riccati solution.

use nalgebra::DMatrix;
use perimeter_adp::adp::toy::{riccati_value, ScalarLinearPlant};
use perimeter_adp::adp::{
    collect_samples, policy_iteration_model_based, policy_iteration_model_free, AdpCost, Basis, CriticActorWeights, PiSettings, ProbingNoise,
    SampleSource,
};

fn main() -> perimeter_adp::Result<()> {
    let (a, b, q, gamma) = (-0.5, 1.0, 1.0, 1.0);
    let plant = ScalarLinearPlant::new(a, b, 1.0, 0.5, 0.01);
    let critic = Basis::new(vec![0.0], vec![1.0], vec![vec![0, 0]])?;
    let actor = Basis::new(vec![0.0], vec![1.0], vec![vec![0]])?;
    // a wide saturation bound makes the tanh cost nearly quadratic
    let cost = AdpCost::new(DMatrix::from_element(1, 1, q), vec![gamma], 50.0)?;

    let envs: Vec<_> = (0..8).map(|i| plant.with_state(-1.0 + 0.25 * i as f64 + 0.1)).collect();
    let noise: Vec<_> = (0..8).map(|i| ProbingNoise::new(vec![0.5], &[1.3, 2.9, 4.1, 7.7], 0.0, 3, i)).collect();
    let init = CriticActorWeights::zeros(1, 1, 1);
    let samples = collect_samples(envs, &init, &actor, &cost, &noise, 20)?;
    let settings = PiSettings { tol: 1e-8, ..Default::default() };

    let mf = policy_iteration_model_free(SampleSource::Fixed(&samples), &critic, &actor, &cost, init.clone(), &settings, None)?.require_converged()?;
    let windows: Vec<_> = (-20..=20).map(|k| vec![plant.model_point(0.05 * k as f64)]).collect();
    let mb = policy_iteration_model_based(&windows, 0.01, &critic, &actor, &cost, init, &settings, None)?.require_converged()?;

    let p = riccati_value(a, b, q, gamma);
    println!("Riccati      p = {p:.6}");
    for (name, out) in [("model-free", &mf), ("model-based", &mb)] {
        let w = out.weights.wc[0];
        println!("{name:<12} p = {w:.6}  ({:+.3}%, {} iterations)", 100.0 * (w / p - 1.0), out.log.len());
    }
    Ok(())
}

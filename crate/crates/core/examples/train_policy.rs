//! Learns the tracking controller from closed-loop data and saves the weights.

use perimeter_adp::experiments::training::{train, Method};
use perimeter_adp::experiments::ExperimentConfig;

fn main() -> perimeter_adp::Result<()> {
    let cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example1.toml").as_ref())?;
    let run = train(&cfg, Method::ModelFree)?;
    println!("{} samples from {} rollouts", run.samples.len(), cfg.training.rollouts);
    println!("{:>5}{:>12}{:>12}{:>12}{:>12}", "iter", "|Wc|", "|Wa|", "change", "bellman");
    for r in &run.outcome.log {
        println!(
            "{:>5}{:>12.4e}{:>12.4e}{:>12.3e}{:>12.3e}",
            r.iteration,
            r.critic_norm,
            r.actor_norm,
            r.weight_change,
            r.bellman_residual.unwrap_or(f64::NAN)
        );
    }
    let path = std::env::temp_dir().join("weights_model_free.json");
    run.artifact.save(&path)?;
    println!("converged: {}; weights in {}", run.outcome.converged, path.display());
    Ok(())
}

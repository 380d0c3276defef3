//! Tracking a time-varying reference under noisy demand, over ten noise seeds.

use perimeter_adp::control::FeedbackPolicy;
use perimeter_adp::experiments::runs::run_example2;
use perimeter_adp::experiments::training::{train, Method};
use perimeter_adp::experiments::ExperimentConfig;

fn main() -> perimeter_adp::Result<()> {
    let cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example2.toml").as_ref())?;
    let out = train(&cfg, Method::ModelFree)?.outcome.require_converged()?;
    println!("trained in {} iterations", out.log.len());
    let policy = FeedbackPolicy { weights: out.weights, actor: cfg.basis.actor()?, lambda: cfg.cost.lambda };
    let (_, _, report) = run_example2(&cfg, &policy)?;
    println!(
        "tracking RMS over the last {:.0} min, smallest control over the last {:.0} min",
        report.tracking_window_s / 60.0,
        report.control_window_s / 60.0
    );
    for r in report.noisy.iter().chain([&report.noise_free]) {
        let label = r.seed.map_or("noise-free".to_string(), |s| format!("seed {s}"));
        println!("  {label:<11} {:>6.2}%   u12 >= {:.3}  u21 >= {:.3}", 100.0 * r.tracking_rms, r.min_control[0], r.min_control[1]);
    }
    Ok(())
}

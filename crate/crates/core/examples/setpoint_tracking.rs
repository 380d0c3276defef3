//! Tracking perimeter control against a set-point controller on a three-period schedule.

use perimeter_adp::control::FeedbackPolicy;
use perimeter_adp::experiments::runs::run_example1;
use perimeter_adp::experiments::training::{train, Method};
use perimeter_adp::experiments::ExperimentConfig;

fn main() -> perimeter_adp::Result<()> {
    let cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example1.toml").as_ref())?;
    let out = train(&cfg, Method::ModelFree)?.outcome.require_converged()?;
    let policy = FeedbackPolicy { weights: out.weights, actor: cfg.basis.actor()?, lambda: cfg.cost.lambda };
    let (tpc, _, report) = run_example1(&cfg, &policy)?;
    print!("{}", report.table());
    println!("\nTPC at the end of each period:");
    for p in &tpc.metrics.periods {
        let od = p.final_od_error.iter().fold(0.0f64, |a, b| a.max(*b));
        println!(
            "  [{:>5.0}, {:>5.0}) region error {:.3}% / {:.3}%, worst OD error {:.3}%",
            p.start,
            p.end,
            100.0 * p.final_region_error[0],
            100.0 * p.final_region_error[1],
            100.0 * od
        );
    }
    Ok(())
}

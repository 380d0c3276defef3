//! Writes a closed-loop trace to CSV, reads it back and recomputes the metrics.

use perimeter_adp::control::ControllerMode;
use perimeter_adp::experiments::metrics::compute_metrics;
use perimeter_adp::experiments::runs::{periods, simulate};
use perimeter_adp::experiments::ExperimentConfig;
use perimeter_adp::trace::{read_trace_file, write_trace_file};

fn main() -> perimeter_adp::Result<()> {
    let cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example1.toml").as_ref())?;
    // uncontrolled gating needs no training
    let run = simulate(&cfg, ControllerMode::Uncontrolled, None, cfg.seed)?;
    let path = std::env::temp_dir().join("uncontrolled_trace.csv");
    write_trace_file(&run.trace, &path)?;

    let back = read_trace_file(&path)?;
    let m = compute_metrics(&back, &cfg.network()?, &cfg.actuator, &periods(&cfg))?;
    println!("{} rows read from {}", back.len(), path.display());
    println!("TTS {:.6e} veh s (in memory {:.6e})", m.tts_veh_s, run.metrics.tts_veh_s);
    println!("CTC {:.6e} veh   (in memory {:.6e})", m.ctc_veh, run.metrics.ctc_veh);
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(())
}

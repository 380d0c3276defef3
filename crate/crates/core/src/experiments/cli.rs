//! Command-line front end behind the `mfdpc` binary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind};
use super::metrics::{compute_metrics, MetricsReport};
use super::runs::{self, reference_trace};
use super::training::{train, Method};
use crate::adp::TrainingArtifact;
use crate::control::{ControllerMode, FeedbackPolicy};
use crate::error::{Error, Result};
use crate::mfd::{ActuatorBox, TwoRegionNetwork};
use crate::reference::equilibrium_solve;
use crate::trace::{read_trace_file, write_reference, write_trace_file};

#[derive(Debug, Parser)]
#[command(name = "mfdpc", about = "Two-region MFD tracking perimeter control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the TPC closed loop and write its trace and metrics.
    Simulate(RunArgs),
    /// Learn critic and actor weights.
    Train(RunArgs),
    /// Compute metrics of a trace file.
    Evaluate(EvalArgs),
    /// TPC against SPC (set-point configs) or the noise sweep (trajectory configs).
    Compare(RunArgs),
    /// Write the reference trajectory as CSV.
    Reference(RunArgs),
    /// Print MFD constants and the equilibria behind the configured set-points.
    Metrics(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Use the model-based policy iteration instead of the data-driven learner.
    #[arg(long)]
    model_based: bool,
    /// Integrator step for runs; sampling step for `reference`.
    #[arg(long, value_name = "SECONDS")]
    dt: Option<f64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    trace: PathBuf,
    /// Supplies the network and the period windows; defaults to the standard network.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

/// Report written next to every run.
#[derive(Debug, Serialize)]
struct RunReport<'a> {
    config_hash: String,
    seeds: Vec<u64>,
    method: &'a str,
    #[serde(flatten)]
    metrics: &'a MetricsReport,
}

fn load(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(dt) = args.dt {
        cfg.integrator.dt = dt;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn method(args: &RunArgs) -> Method {
    if args.model_based {
        Method::ModelBased
    } else {
        Method::ModelFree
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn out_dir(dir: &Path) -> Result<&Path> {
    std::fs::create_dir_all(dir)?;
    Ok(dir)
}

/// Creates `dir` and writes the resolved config into it.
fn run_dir<'a>(cfg: &ExperimentConfig, dir: &'a Path) -> Result<&'a Path> {
    out_dir(dir)?;
    std::fs::write(dir.join("config.resolved.toml"), cfg.resolved_toml()?)?;
    Ok(dir)
}

fn weights_file(dir: &Path, m: Method) -> PathBuf {
    dir.join(format!("weights_{}.json", m.label()))
}

/// Loads weights trained on this exact config from `dir`, training and saving them otherwise.
fn policy(cfg: &ExperimentConfig, m: Method, dir: &Path) -> Result<FeedbackPolicy> {
    let path = weights_file(dir, m);
    let hash = cfg.hash()?;
    if let Ok(a) = TrainingArtifact::load(&path) {
        if a.config_hash == hash && a.method == m.label() {
            return FeedbackPolicy::from_artifact(&a);
        }
    }
    let run = train(cfg, m)?;
    let outcome = run.outcome.require_converged()?;
    run.artifact.save(&path)?;
    Ok(FeedbackPolicy { weights: outcome.weights, actor: cfg.basis.actor()?, lambda: cfg.cost.lambda })
}

fn simulate(args: &RunArgs) -> Result<()> {
    let cfg = load(args)?;
    let dir = run_dir(&cfg, &args.out)?;
    let m = method(args);
    let pol = policy(&cfg, m, dir)?;
    let r = runs::simulate(&cfg, ControllerMode::Tpc, Some(pol), cfg.seed)?;
    write_trace_file(&r.trace, &dir.join("trace.csv"))?;
    write_json(&RunReport { config_hash: cfg.hash()?, seeds: vec![cfg.seed], method: m.label(), metrics: &r.metrics }, &dir.join("report.json"))?;
    println!("TTS {:.6e} veh s, CTC {:.6e} veh", r.metrics.tts_veh_s, r.metrics.ctc_veh);
    Ok(())
}

fn train_cmd(args: &RunArgs) -> Result<()> {
    let cfg = load(args)?;
    let dir = run_dir(&cfg, &args.out)?;
    let m = method(args);
    let run = train(&cfg, m)?;
    let path = weights_file(dir, m);
    run.artifact.save(&path)?;
    for r in &run.outcome.log {
        println!(
            "iter {:>3}  |Wc| {:>12.5e}  change {:>10.3e}  bellman {}",
            r.iteration,
            r.critic_norm,
            r.weight_change,
            r.bellman_residual.map_or("-".into(), |b| format!("{b:.3e}"))
        );
    }
    println!("wrote {}", path.display());
    run.outcome.require_converged().map(|_| ())
}

fn evaluate(args: &EvalArgs) -> Result<()> {
    let trace = read_trace_file(&args.trace)?;
    let (net, bounds, periods, hash) = match &args.config {
        Some(p) => {
            let cfg = ExperimentConfig::load(p)?;
            (cfg.network()?, cfg.actuator, runs::periods(&cfg), Some(cfg.hash()?))
        }
        None => (TwoRegionNetwork::default(), ActuatorBox::default(), Vec::new(), None),
    };
    let metrics = compute_metrics(&trace, &net, &bounds, &periods)?;
    #[derive(Serialize)]
    struct EvalReport<'a> {
        config_hash: Option<String>,
        trace: String,
        #[serde(flatten)]
        metrics: &'a MetricsReport,
    }
    let report = EvalReport { config_hash: hash, trace: args.trace.display().to_string(), metrics: &metrics };
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(dir) = &args.out {
        write_json(&report, &out_dir(dir)?.join("metrics.json"))?;
    }
    Ok(())
}

fn compare(args: &RunArgs) -> Result<()> {
    let cfg = load(args)?;
    let dir = run_dir(&cfg, &args.out)?;
    let pol = policy(&cfg, method(args), dir)?;
    match cfg.kind {
        ExperimentKind::SetpointTracking => {
            let (tpc, spc, report) = runs::run_example1(&cfg, &pol)?;
            write_trace_file(&tpc.trace, &dir.join("trace_tpc.csv"))?;
            write_trace_file(&spc.trace, &dir.join("trace_spc.csv"))?;
            write_json(&report, &dir.join("comparison.json"))?;
            print!("{}", report.table());
        }
        ExperimentKind::TrajectoryTracking => {
            let (noisy, clean, report) = runs::run_example2(&cfg, &pol)?;
            for (r, s) in noisy.iter().zip(&cfg.evaluation.noise_seeds) {
                write_trace_file(&r.trace, &dir.join(format!("trace_seed{s}.csv")))?;
            }
            write_trace_file(&clean.trace, &dir.join("trace_noise_free.csv"))?;
            write_json(&report, &dir.join("robustness.json"))?;
            println!("{:<12}{:>14}{:>10}{:>10}", "seed", "tracking rms", "min u12", "min u21");
            for r in report.noisy.iter().chain([&report.noise_free]) {
                let label = r.seed.map_or("noise-free".into(), |s| s.to_string());
                println!("{:<12}{:>13.2}%{:>10.3}{:>10.3}", label, 100.0 * r.tracking_rms, r.min_control[0], r.min_control[1]);
            }
        }
    }
    Ok(())
}

fn reference(args: &RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let step = args.dt.unwrap_or(cfg.integrator.control_interval);
    let trace = reference_trace(&cfg, step)?;
    let path = run_dir(&cfg, &args.out)?.join("reference.csv");
    write_reference(&trace, std::fs::File::create(&path)?)?;
    println!("wrote {} ({} rows)", path.display(), trace.rows.len());
    Ok(())
}

fn constants(args: &RunArgs) -> Result<()> {
    let cfg = load(args)?;
    let net = cfg.network()?;
    for (i, c) in [net.curve1, net.curve2].iter().enumerate() {
        println!("region {}: n_crit {:.1} veh, G_max {:.4} veh/s, n_jam {:.0} veh", i + 1, c.n_crit(), c.g_max(), c.n_jam());
    }
    if let super::config::ReferenceConfig::Schedule { periods } = &cfg.reference {
        println!("{:>8}{:>8}{:>10}{:>10}{:>10}{:>10}{:>8}{:>8}", "start", "end", "n11", "n12", "n21", "n22", "u12", "u21");
        for p in periods {
            let eq = equilibrium_solve(&net, &crate::mfd::DemandVector::from_array(p.demand), p.setpoint[0], p.setpoint[1], &cfg.actuator)?;
            let n = eq.n_star.to_array();
            println!(
                "{:>8.0}{:>8.0}{:>10.1}{:>10.1}{:>10.1}{:>10.1}{:>8.3}{:>8.3}",
                p.start, p.end, n[0], n[1], n[2], n[3], eq.u_star.u12, eq.u_star.u21
            );
        }
    }
    Ok(())
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code: 0 on success, 1 for usage or config errors, 2 for
/// numerical failures.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => compare(a),
        Command::Reference(a) => reference(a),
        Command::Metrics(a) => constants(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

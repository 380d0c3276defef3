//! Open-loop run with fixed gating, showing the flow bookkeeping and the CSV trace.

use perimeter_adp::mfd::{integrate, ControlInput, DemandVector, IntegratorSettings, OdAccumulation, TwoRegionNetwork};
use perimeter_adp::trace::write_trace;

fn main() -> perimeter_adp::Result<()> {
    let net = TwoRegionNetwork::default();
    let start = OdAccumulation::new(450.0, 1050.0, 1750.0, 750.0);
    let q = DemandVector::new(1.6, 1.6, 1.6, 1.6);
    let trace = integrate(&net, start, |_, _| ControlInput::uniform(0.53), |_| q, 0.0, 3600.0, IntegratorSettings::default())?;

    let end = trace.last_state().unwrap();
    let inflow = trace.cumulative_inflow.last().unwrap();
    let done = trace.cumulative_completion.last().unwrap();
    println!("n(1 h) = {:?}", end.to_array().map(|x| x.round()));
    println!("inflow {inflow:.3} veh, completed {done:.3} veh");
    println!("inflow - completed - change in stock = {:.2e} veh", inflow - done - (end.total() - start.total()));

    println!("\nfirst rows of the trace:");
    let mut buf = Vec::new();
    write_trace(&trace, &mut buf)?;
    for line in String::from_utf8_lossy(&buf).lines().take(4) {
        println!("{line}");
    }
    Ok(())
}

//! A reference generated by the unmetered plant under a trapezoidal demand peak.

use perimeter_adp::mfd::{DemandVector, TwoRegionNetwork};
use perimeter_adp::reference::{CommandGenerator, DemandSegment, NominalDemand, ReferenceState, TrajectoryGenerator};

fn main() -> perimeter_adp::Result<()> {
    let low = DemandVector::new(0.8, 0.6, 0.6, 0.8);
    let peak = DemandVector::new(1.8, 1.5, 1.2, 1.6);
    let demand = NominalDemand::new(vec![
        DemandSegment { start: 0.0, end: 900.0, q_start: low, q_end: peak },
        DemandSegment::constant(900.0, 4500.0, peak),
        DemandSegment { start: 4500.0, end: 5400.0, q_start: peak, q_end: low },
        DemandSegment::constant(5400.0, 10800.0, low),
    ])?;
    let gen = TrajectoryGenerator::new(TwoRegionNetwork::default(), 0.9, demand, ReferenceState::new(0.0, 0.0, 0.0, 0.0), 1.0)?;
    let gen = CommandGenerator::Trajectory(gen);

    println!("{:>7}{:>9}{:>9}{:>10}{:>10}", "t", "nd_1", "nd_2", "dnd_1/dt", "dnd_2/dt");
    for k in 0..=18 {
        let t = k as f64 * 600.0;
        let p = gen.sample(t)?;
        let th = p.theta;
        println!(
            "{t:>7.0}{:>9.1}{:>9.1}{:>10.4}{:>10.4}",
            p.nd.nd11 + p.nd.nd12,
            p.nd.nd21 + p.nd.nd22,
            th[0] + th[1],
            th[2] + th[3]
        );
    }
    Ok(())
}

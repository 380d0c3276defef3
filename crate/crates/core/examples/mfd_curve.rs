//! The standard cubic MFD: critical accumulation, capacity and a few sample rates.

use perimeter_adp::mfd::{MfdCurve, OdAccumulation, TwoRegionNetwork};

fn main() {
    let g = MfdCurve::standard();
    println!("n_crit = {:.1} veh, G_max = {:.4} veh/s, n_jam = {} veh", g.n_crit(), g.g_max(), g.n_jam());
    for n in [0.0, 1000.0, 2000.0, 3000.0, g.n_crit(), 5000.0, 8000.0, 10000.0] {
        println!("G({n:>7.1}) = {:.4} veh/s   G' = {:+.5}", g.rate(n), g.slope(n));
    }

    let net = TwoRegionNetwork::default();
    let f = net.flows(&OdAccumulation::new(1538.9, 1461.1, 1461.1, 1538.9));
    println!("\nflows at the congested equilibrium: {f:?}");
    println!("internal completion = {:.4} veh/s", f.internal_completion());
}

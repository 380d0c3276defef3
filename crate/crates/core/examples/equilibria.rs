//! Equilibria for the three demand periods of the set-point example, plus the
//! steady-state control that holds a reference still.

use nalgebra::Vector4;
use perimeter_adp::mfd::{ActuatorBox, DemandVector, TwoRegionNetwork};
use perimeter_adp::reference::{equilibrium_solve, steady_state_control, ReferenceState};

fn main() -> perimeter_adp::Result<()> {
    let net = TwoRegionNetwork::default();
    let bounds = ActuatorBox::default();
    let periods = [
        ([1.2, 1.6, 1.0, 1.4], 2000.0, 2000.0),
        ([1.6, 1.6, 1.6, 1.6], 3000.0, 3000.0),
        ([0.9, 0.9, 0.9, 0.9], 1500.0, 1500.0),
    ];
    println!("{:>8}{:>8}{:>9}{:>9}{:>9}{:>9}{:>7}{:>7}{:>11}", "n1*", "n2*", "n11", "n12", "n21", "n22", "u12", "u21", "|K|inf");
    for (q, n1, n2) in periods {
        let q = DemandVector::from_array(q);
        let eq = equilibrium_solve(&net, &q, n1, n2, &bounds)?;
        let n = eq.n_star.to_array();
        let k = net.dynamics_rhs(&eq.n_star, &eq.u_star, &q).amax();
        println!(
            "{n1:>8.0}{n2:>8.0}{:>9.1}{:>9.1}{:>9.1}{:>9.1}{:>7.3}{:>7.3}{k:>11.2e}",
            n[0], n[1], n[2], n[3], eq.u_star.u12, eq.u_star.u21
        );

        // at an equilibrium the steady-state control reproduces u*
        let ss = steady_state_control(&net, &ReferenceState::from_od(&eq.n_star), &Vector4::zeros(), &q)?;
        println!("        steady-state control ({:.4}, {:.4}), residual {:.1e}", ss.u[0], ss.u[1], ss.residual);
    }
    Ok(())
}

//! The saturated feedback law and its non-quadratic control cost.

use perimeter_adp::augmented::{control_cost, control_cost_preactivation, saturated_policy, CostWeights};

fn main() -> perimeter_adp::Result<()> {
    let lambda = 0.5;
    let w = CostWeights::diagonal(1e-5, [1.0, 1.0], lambda)?;
    println!("{:>6}{:>10}{:>14}{:>14}", "D", "mu", "cost(mu)", "cost(D)");
    for d in [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
        let mu = saturated_policy([d, -d], lambda);
        let direct = control_cost(&mu, &w)?;
        let via_d = control_cost_preactivation(&[d, -d], &w);
        println!("{d:>6.2}{:>10.5}{direct:>14.6e}{via_d:>14.6e}", mu.mu[0]);
    }
    // the pre-activation form stays finite where atanh(mu/lambda) would overflow
    let big = control_cost_preactivation(&[40.0, 40.0], &w);
    println!("\nD = 40: |mu| = lambda to machine precision, cost {big:.6e}, the bound 4 ln2 lambda^2 = {:.6e}", 4.0 * 2f64.ln() * lambda * lambda);
    Ok(())
}

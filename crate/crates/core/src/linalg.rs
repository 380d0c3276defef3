//! Dense least squares with conditioning diagnostics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition number above which a regression is treated as rank deficient.
pub const MAX_CONDITION: f64 = 1e10;

/// Least-squares solution with diagnostics.
#[derive(Debug, Clone)]
pub struct LstsqSolution {
    pub x: DVector<f64>,
    /// Residual 2-norm `||A x - b||`.
    pub residual: f64,
    /// Ratio of extreme singular values after column equilibration.
    pub condition: f64,
    pub rank: usize,
}

/// Solves `min ||A x - b||` by SVD on a column-equilibrated copy of `A`.
///
/// Fails with [`Error::InsufficientExcitation`] when the equilibrated matrix
/// has condition number above `max_condition`, and with
/// [`Error::TooFewSamples`] when there are fewer rows than columns.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, max_condition: f64) -> Result<LstsqSolution> {
    let (m, p) = a.shape();
    if m < p {
        return Err(Error::TooFewSamples { got: m, needed: p });
    }
    if b.len() != m {
        return Err(Error::InvalidArgument(format!("rhs length {} != rows {m}", b.len())));
    }
    let scale: Vec<f64> = (0..p)
        .map(|j| {
            let c = a.column(j).norm();
            if c > 0.0 { 1.0 / c } else { 1.0 }
        })
        .collect();
    let mut scaled = a.clone();
    for (j, s) in scale.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*s);
    }
    let svd = scaled.svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let tol = smax * f64::EPSILON * m.max(p) as f64;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= max_condition) {
        return Err(Error::InsufficientExcitation { condition, rank, columns: p });
    }
    let y = svd
        .solve(b, tol)
        .map_err(|e| Error::InvalidArgument(format!("svd solve failed: {e}")))?;
    let x = DVector::from_iterator(p, y.iter().zip(&scale).map(|(v, s)| v * s));
    let residual = (a * &x - b).norm();
    Ok(LstsqSolution { x, residual, condition, rank })
}

/// Multi-right-hand-side variant used for actor projections.
pub fn lstsq_multi(a: &DMatrix<f64>, b: &DMatrix<f64>, max_condition: f64) -> Result<(DMatrix<f64>, f64)> {
    let mut out = DMatrix::zeros(a.ncols(), b.ncols());
    let mut cond = 0.0_f64;
    for j in 0..b.ncols() {
        let sol = lstsq(a, &b.column(j).into_owned(), max_condition)?;
        out.set_column(j, &sol.x);
        cond = cond.max(sol.condition);
    }
    Ok((out, cond))
}

/// Composite trapezoid rule on a uniform grid.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

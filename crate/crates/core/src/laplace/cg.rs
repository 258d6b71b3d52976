//! Conjugate gradient for the SPD Dirichlet Laplacian on arbitrary site sets.

use crate::error::{Error, Result};
use crate::stats::det_dot;

/// Solves A x = b for SPD `apply`, starting from zero, until the residual
/// infinity norm drops below `tol_inf`. Returns (x, final residual, iters).
pub fn solve<F>(apply: F, b: &[f64], tol_inf: f64, max_iter: usize) -> Result<(Vec<f64>, f64, usize)>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let mut ap = vec![0.0; n];
    let mut rs = det_dot(&r, &r);
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, &t| m.max(t.abs()));
    let mut res = inf(&r);
    if res <= tol_inf {
        return Ok((x, res, 0));
    }
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = det_dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::Solver(format!("CG breakdown: p'Ap = {pap}")));
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = det_dot(&r, &r);
        res = inf(&r);
        if res <= tol_inf {
            return Ok((x, res, it));
        }
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::Solver(format!(
        "CG did not reach residual {tol_inf:.1e} in {max_iter} iterations (residual {res:.3e})"
    )))
}

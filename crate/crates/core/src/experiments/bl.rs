//! Brascamp-Lieb domination: Var<phi, f> against the Gaussian variance
//! scaled by 1/c_minus, plus the k = 2 even-moment bound.

use super::{Check, Estimate, ExperimentReport};
use crate::error::{Error, Result};
use crate::harmonic::HarmonicWeights;
use crate::laplace::DirichletOperator;
use crate::source::Source;
use crate::stats;

pub struct BlCheck {
    pub gaussian_var: f64,
    pub var: f64,
    pub var_se: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    pub bound: f64,
    pub ratio_ok: bool,
    pub fourth_moment_ok: bool,
}

/// Variance-domination check for one test functional f.
pub fn bl_check(
    source: &Source<'_>,
    f: &HarmonicWeights,
    oracle: &DirichletOperator,
    c_minus: f64,
    boot_seed: u64,
) -> Result<(BlCheck, ExperimentReport)> {
    if c_minus <= 0.0 {
        return Err(Error::Parameter("c_minus must be positive".into()));
    }
    let gaussian_var = oracle.quadratic_form(f)?;
    if gaussian_var <= 0.0 {
        return Err(Error::Input("test functional has zero Gaussian variance".into()));
    }
    let run = source.run(&|field| vec![f.apply(field)])?;
    let vals: Vec<f64> = run.per_field.iter().map(|r| r[0]).collect();
    let infl = (vals.len() as f64 / run.ess.max(1.0)).sqrt();
    let boot = stats::bootstrap_ci(&vals, 1000, 0.95, boot_seed, stats::variance);
    let var = boot.estimate;
    let var_se = boot.se * infl;
    let ratio = var / gaussian_var;
    let ratio_se = var_se / gaussian_var;
    let bound = 1.0 / c_minus;
    let ratio_ok = ratio <= bound + 3.0 * ratio_se;

    // even-moment domination at k = 2: E (X - EX)^4 <= c_minus^-2 * 3 Var_G^2
    let m = stats::mean(&vals);
    let fourth: Vec<f64> = vals.iter().map(|x| (x - m).powi(4)).collect();
    let b4 = stats::bootstrap_ci(&fourth, 1000, 0.95, boot_seed ^ 0x5e5e, stats::mean);
    let m4 = b4.estimate;
    let m4_se = b4.se * infl;
    let m4_bound = 3.0 * gaussian_var * gaussian_var / (c_minus * c_minus);
    let fourth_moment_ok = m4 <= m4_bound + 3.0 * m4_se;

    let out = BlCheck { gaussian_var, var, var_se, ratio, ratio_se, bound, ratio_ok, fourth_moment_ok };
    let mut report = ExperimentReport::new(
        "bl-check",
        serde_json::json!({ "c_minus": c_minus, "kernel_kind": format!("{:?}", f.kind()), "support": f.len() }),
    );
    report.estimates.push(Estimate::exact("gaussian_var", gaussian_var));
    report.estimates.push(Estimate::with_se("var", var, var_se));
    report.estimates.push(Estimate::with_se("ratio", ratio, ratio_se));
    report.estimates.push(Estimate::exact("bound", bound));
    report.estimates.push(Estimate::with_se("fourth_moment", m4, m4_se));
    report.estimates.push(Estimate::exact("fourth_moment_bound", m4_bound));
    report.checks.push(Check::new(
        "variance_dominated",
        ratio_ok,
        format!("ratio {ratio:.4} vs bound {bound:.4} + 3se {:.4}", 3.0 * ratio_se),
    ));
    report.checks.push(Check::new(
        "fourth_moment_dominated",
        fourth_moment_ok,
        format!("m4 {m4:.4} vs bound {m4_bound:.4}"),
    ));
    Ok((out, report))
}

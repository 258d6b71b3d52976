//! Central limit behaviour of macroscopic linear functionals N^{-1} <rho, phi>
//! for kernels annihilating discrete harmonic functions.

use super::{Check, Estimate, ExperimentReport};
use crate::error::{Error, Result};
use crate::harmonic::{harmonic_test_family, HarmonicWeights};
use crate::laplace::DirichletOperator;
use crate::source::Source;
use crate::stats;

pub struct CltCheck {
    pub gaussian_var: f64,
    pub var: f64,
    pub var_se: f64,
    /// Var / (Gaussian variance * stiffness ratio).
    pub ratio: f64,
    pub ratio_se: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

/// Compares Var(N^{-1} <rho, phi>) under a general potential with the
/// Gaussian value rho' G rho / N^2 scaled by the stiffness ratio, and tests
/// normality via skewness/kurtosis. `rho` must annihilate the harmonic test
/// family.
pub fn clt_check(
    source: &Source<'_>,
    rho: &HarmonicWeights,
    oracle: &DirichletOperator,
    stiffness_ratio: f64,
    min_ess: f64,
    boot_seed: u64,
) -> Result<(CltCheck, ExperimentReport)> {
    let domain = source.domain();
    // the (harmtest) condition, numerically: |<rho, h>| <= 1e-8 |h|_inf |rho|_1
    let l1 = rho.l1_norm();
    for h in harmonic_test_family(domain)? {
        let norm = h.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let dot = rho.apply_values(domain, &h);
        if dot.abs() > 1e-8 * norm * l1 {
            return Err(Error::Input(format!(
                "test kernel fails harmonic annihilation: <rho,h> = {dot:.3e}"
            )));
        }
    }
    let n_half = domain.half_width() as f64;
    let run = source.run(&|f| vec![rho.apply(f) / n_half])?;
    if run.ess < min_ess {
        return Err(Error::Input(format!("effective samples {:.0} below {min_ess}", run.ess)));
    }
    let vals: Vec<f64> = run.per_field.iter().map(|r| r[0]).collect();
    let gaussian_var = oracle.quadratic_form(rho)? / (n_half * n_half);
    if gaussian_var <= 0.0 {
        return Err(Error::Input("kernel has zero Gaussian variance".into()));
    }
    let infl = (vals.len() as f64 / run.ess.max(1.0)).sqrt();
    let boot = stats::bootstrap_ci(&vals, 1000, 0.95, boot_seed, stats::variance);
    let var = boot.estimate;
    let var_se = boot.se * infl;
    let denom = gaussian_var * stiffness_ratio;
    let ratio = var / denom;
    let ratio_se = var_se / denom;
    let m = stats::moments(&vals);
    let skew_se = stats::skewness_se(run.ess as usize);
    let kurt_se = stats::kurtosis_se(run.ess as usize);

    let out = CltCheck {
        gaussian_var,
        var,
        var_se,
        ratio,
        ratio_se,
        skewness: m.skewness,
        excess_kurtosis: m.excess_kurtosis,
    };
    let mut report = ExperimentReport::new(
        "clt",
        serde_json::json!({ "stiffness_ratio": stiffness_ratio, "support": rho.len() }),
    );
    report.estimates.push(Estimate::exact("gaussian_var", gaussian_var));
    report.estimates.push(Estimate::with_se("var", var, var_se));
    report.estimates.push(Estimate::with_se("ratio", ratio, ratio_se));
    report.estimates.push(Estimate::with_se("skewness", m.skewness, skew_se));
    report.estimates.push(Estimate::with_se("excess_kurtosis", m.excess_kurtosis, kurt_se));
    report.checks.push(Check::new(
        "skewness_gaussian",
        m.skewness.abs() <= 3.0 * skew_se,
        format!("|skew| {:.4} vs 3se {:.4}", m.skewness.abs(), 3.0 * skew_se),
    ));
    report.checks.push(Check::new(
        "kurtosis_gaussian",
        m.excess_kurtosis.abs() <= 3.0 * kurt_se,
        format!("|kurt| {:.4} vs 3se {:.4}", m.excess_kurtosis.abs(), 3.0 * kurt_se),
    ));
    Ok((out, report))
}

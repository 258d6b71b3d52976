//! Effective stiffness: the slope of Var phi(0) against log N.

use super::{Check, Estimate, ExperimentReport};
use crate::error::{Error, Result};
use crate::lattice::site;
use crate::source::Source;
use crate::stats;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SizeVariance {
    pub half_width: u32,
    pub var: f64,
    pub se: f64,
    pub ess: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StiffnessEstimate {
    pub g_hat: f64,
    pub se: f64,
    pub intercept: f64,
    pub per_size: Vec<SizeVariance>,
    pub chi2: f64,
    /// Set when some ensemble had insufficient effective samples.
    pub flagged: bool,
}

/// Weighted regression of the per-size variance of phi(0) on log N. Weights
/// come from bootstrap standard errors of each variance estimate.
pub fn estimate_stiffness(
    sized_sources: &[(u32, Source<'_>)],
    min_ess: f64,
    boot_seed: u64,
) -> Result<(StiffnessEstimate, ExperimentReport)> {
    if sized_sources.len() < 3 {
        return Err(Error::Parameter("stiffness regression needs >= 3 sizes".into()));
    }
    let mut ns: Vec<u32> = sized_sources.iter().map(|(n, _)| *n).collect();
    ns.sort_unstable();
    for w in ns.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Parameter("sizes must be strictly increasing".into()));
        }
    }
    // geometric spacing: consecutive ratios within a factor 2 of each other
    let ratios: Vec<f64> = ns.windows(2).map(|w| w[1] as f64 / w[0] as f64).collect();
    let rmin = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let rmax = ratios.iter().cloned().fold(0.0f64, f64::max);
    if rmax / rmin > 2.0 {
        return Err(Error::Parameter("sizes must be roughly geometrically spaced".into()));
    }

    let mut per_size = Vec::new();
    let mut flagged = false;
    for (n, source) in sized_sources {
        let run = source.run(&|f| vec![f.value(site(0, 0))])?;
        let vals: Vec<f64> = run.per_field.iter().map(|r| r[0]).collect();
        let boot = stats::bootstrap_ci(&vals, 1000, 0.95, boot_seed ^ (*n as u64), stats::variance);
        // inflate the bootstrap SE when fields are autocorrelated
        let infl = (vals.len() as f64 / run.ess.max(1.0)).sqrt();
        per_size.push(SizeVariance {
            half_width: *n,
            var: boot.estimate,
            se: boot.se * infl,
            ess: run.ess,
        });
        if run.ess < min_ess {
            flagged = true;
        }
    }
    per_size.sort_by_key(|s| s.half_width);
    let xs: Vec<f64> = per_size.iter().map(|s| (s.half_width as f64).ln()).collect();
    let ys: Vec<f64> = per_size.iter().map(|s| s.var).collect();
    let sig: Vec<f64> = per_size.iter().map(|s| s.se.max(1e-12)).collect();
    let fit = stats::weighted_least_squares(&xs, &ys, &sig);
    if fit.slope <= 0.0 {
        flagged = true;
    }
    let estimate = StiffnessEstimate {
        g_hat: fit.slope,
        se: fit.slope_se,
        intercept: fit.intercept,
        per_size: per_size.clone(),
        chi2: fit.chi2,
        flagged,
    };

    let mut report = ExperimentReport::new(
        "estimate-g",
        serde_json::json!({ "sizes": ns, "min_ess": min_ess }),
    );
    report.estimates.push(Estimate::with_se("g_hat", estimate.g_hat, estimate.se));
    report.estimates.push(Estimate::with_se("intercept", estimate.intercept, fit.intercept_se));
    for s in &per_size {
        report
            .estimates
            .push(Estimate::with_se(&format!("var_phi0_N{}", s.half_width), s.var, s.se));
    }
    report.checks.push(Check::new(
        "g_positive",
        estimate.g_hat > 0.0,
        format!("g_hat = {:.5}", estimate.g_hat),
    ));
    report.checks.push(Check::new("ess_sufficient", !flagged, format!("min required ESS {min_ess}")));
    report.csv_columns =
        vec!["half_width".into(), "log_n".into(), "var".into(), "se".into(), "ess".into()];
    report.csv_rows = per_size
        .iter()
        .map(|s| vec![s.half_width as f64, (s.half_width as f64).ln(), s.var, s.se, s.ess])
        .collect();
    Ok((estimate, report))
}

/// Exact-oracle variance table from Green's solves: the reference slope the
/// sampled estimate is compared against.
pub fn exact_stiffness_table(sizes: &[u32]) -> Result<StiffnessEstimate> {
    let mut per_size = Vec::new();
    for &n in sizes {
        let domain = crate::lattice::LatticeDomain::build_box(n as i32)?;
        let op = crate::laplace::DirichletOperator::full_box(domain)?;
        let g = op.gff_variance(site(0, 0))?;
        per_size.push(SizeVariance { half_width: n, var: g, se: 1e-9, ess: f64::INFINITY });
    }
    let xs: Vec<f64> = per_size.iter().map(|s| (s.half_width as f64).ln()).collect();
    let ys: Vec<f64> = per_size.iter().map(|s| s.var).collect();
    let sig = vec![1.0; xs.len()];
    let fit = stats::weighted_least_squares(&xs, &ys, &sig);
    Ok(StiffnessEstimate {
        g_hat: fit.slope,
        se: 0.0,
        intercept: fit.intercept,
        per_size,
        chi2: 0.0,
        flagged: false,
    })
}

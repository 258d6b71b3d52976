//! Extreme values: the law of large numbers for sup phi / log N and the
//! count of eta-high points.

use super::{Check, Estimate, ExperimentReport};
use crate::error::{Error, Result};
use crate::source::Source;
use crate::stats;

pub struct MaxStatistics {
    pub half_width: u32,
    pub median: f64,
    pub median_ci: (f64, f64),
    pub target: f64,
    pub gap: f64,
    /// Median with the known log log correction added back, as a diagnostic.
    pub corrected_median: f64,
    pub frac_above: f64,
    pub frac_below: f64,
}

/// Distribution of sup phi / log N against 2 sqrt(g).
pub fn max_statistics(
    source: &Source<'_>,
    g: f64,
    delta: f64,
    min_ess: f64,
    boot_seed: u64,
) -> Result<(MaxStatistics, ExperimentReport)> {
    if g <= 0.0 {
        return Err(Error::Parameter("stiffness g must be positive".into()));
    }
    let n = source.domain().half_width() as f64;
    let log_n = n.ln();
    let run = source.run(&|f| vec![f.sup() / log_n])?;
    if run.ess < min_ess {
        return Err(Error::Input(format!("effective samples {:.0} below {min_ess}", run.ess)));
    }
    let vals: Vec<f64> = run.per_field.iter().map(|r| r[0]).collect();
    let target = 2.0 * g.sqrt();
    let boot = stats::bootstrap_ci(&vals, 1000, 0.95, boot_seed, stats::median);
    let median = boot.estimate;
    // Bramson-Zeitouni style subleading term, reported as a diagnostic only
    let correction = 0.75 * g.sqrt() * log_n.ln() / log_n;
    let above = vals.iter().filter(|&&v| v >= target + delta).count() as f64 / vals.len() as f64;
    let below = vals.iter().filter(|&&v| v <= target - delta).count() as f64 / vals.len() as f64;
    let out = MaxStatistics {
        half_width: source.domain().half_width() as u32,
        median,
        median_ci: (boot.ci_lo, boot.ci_hi),
        target,
        gap: (median - target).abs(),
        corrected_median: median + correction,
        frac_above: above,
        frac_below: below,
    };

    let mut report = ExperimentReport::new(
        "max-scaling",
        serde_json::json!({ "half_width": out.half_width, "g": g, "delta": delta }),
    );
    report.estimates.push(Estimate::with_ci("median_sup_over_logn", median, boot.se, out.median_ci));
    report.estimates.push(Estimate::exact("two_sqrt_g", target));
    report.estimates.push(Estimate::with_se("gap", out.gap, boot.se));
    report.estimates.push(Estimate::with_se("corrected_median", out.corrected_median, boot.se));
    report.estimates.push(Estimate::with_se(
        "frac_above_plus_delta",
        above,
        (above * (1.0 - above) / run.ess).sqrt(),
    ));
    report.estimates.push(Estimate::with_se(
        "frac_below_minus_delta",
        below,
        (below * (1.0 - below) / run.ess).sqrt(),
    ));
    report.checks.push(Check::new(
        "sup_over_logn_positive",
        vals.iter().all(|&v| v > 0.0),
        "sup phi / log N > 0 for every field".into(),
    ));
    report.csv_columns = vec!["sup_over_logn".into()];
    report.csv_rows = vals.iter().map(|&v| vec![v]).collect();
    Ok((out, report))
}

pub struct HighPoints {
    pub eta: f64,
    pub threshold: f64,
    pub target_exponent: f64,
    pub median_exponent: f64,
    pub exponent_ci: (f64, f64),
    pub zero_count_fields: usize,
}

/// Counts of eta-high points: log |H_N(eta)| / log N against 2 (1 - eta^2).
pub fn high_points(
    source: &Source<'_>,
    eta: f64,
    g: f64,
    min_ess: f64,
    boot_seed: u64,
) -> Result<(HighPoints, ExperimentReport)> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Parameter(format!("eta must lie in (0,1), got {eta}")));
    }
    if g <= 0.0 {
        return Err(Error::Parameter("stiffness g must be positive".into()));
    }
    let log_n = (source.domain().half_width() as f64).ln();
    let threshold = 2.0 * g.sqrt() * eta * log_n;
    let run = source.run(&|f| {
        let count = f.values().iter().filter(|&&v| v >= threshold).count();
        vec![count as f64]
    })?;
    if run.ess < min_ess {
        return Err(Error::Input(format!("effective samples {:.0} below {min_ess}", run.ess)));
    }
    let counts: Vec<f64> = run.per_field.iter().map(|r| r[0]).collect();
    let zero_count_fields = counts.iter().filter(|&&c| c == 0.0).count();
    let exponents: Vec<f64> =
        counts.iter().filter(|&&c| c > 0.0).map(|&c| c.ln() / log_n).collect();
    if exponents.is_empty() {
        let mut report = ExperimentReport::new(
            "high-points",
            serde_json::json!({ "eta": eta, "g": g, "threshold": threshold }),
        );
        report.notes.push("all fields had zero high points; exponent undefined".into());
        report.checks.push(Check::new("nonzero_counts", false, "no field reached the level".into()));
        return Ok((
            HighPoints {
                eta,
                threshold,
                target_exponent: 2.0 * (1.0 - eta * eta),
                median_exponent: f64::NEG_INFINITY,
                exponent_ci: (f64::NEG_INFINITY, f64::NEG_INFINITY),
                zero_count_fields,
            },
            report,
        ));
    }
    let boot = stats::bootstrap_ci(&exponents, 1000, 0.95, boot_seed, stats::median);
    let out = HighPoints {
        eta,
        threshold,
        target_exponent: 2.0 * (1.0 - eta * eta),
        median_exponent: boot.estimate,
        exponent_ci: (boot.ci_lo, boot.ci_hi),
        zero_count_fields,
    };
    let mut report = ExperimentReport::new(
        "high-points",
        serde_json::json!({ "eta": eta, "g": g, "threshold": threshold }),
    );
    report.estimates.push(Estimate::with_ci(
        "median_log_count_over_logn",
        out.median_exponent,
        boot.se,
        out.exponent_ci,
    ));
    report.estimates.push(Estimate::exact("target_exponent", out.target_exponent));
    report.estimates.push(Estimate::exact("zero_count_fields", zero_count_fields as f64));
    if zero_count_fields > 0 {
        report.notes.push(format!("{zero_count_fields} fields had zero high points (excluded from the exponent median)"));
    }
    report.csv_columns = vec!["count".into(), "exponent".into()];
    report.csv_rows = counts
        .iter()
        .map(|&c| vec![c, if c > 0.0 { c.ln() / log_n } else { f64::NAN }])
        .collect();
    Ok((out, report))
}

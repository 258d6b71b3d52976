//! Moment generating functions of smoothed harmonic averages and of the
//! scale increments U_m: Gaussian curvature targets and joint factorization.

use super::{Check, Estimate, ExperimentReport};
use crate::error::{Error, Result};
use crate::harmonic::{increments, smoothed_average, ScaleSchedule};
use crate::lattice::Site;
use crate::source::Source;
use crate::stats;

pub struct MgfCheck {
    pub ts: Vec<f64>,
    pub log_mgf: Vec<f64>,
    pub log_mgf_se: Vec<f64>,
    pub tail_weight: Vec<f64>,
    pub curvature: f64,
    pub curvature_se: f64,
    pub sample_var: f64,
    pub gaussian_target: f64,
    pub reliable: Vec<bool>,
}

/// Empirical log-MGF of X_{r_{M,+}}(v) over a t-grid, with a quadratic fit of
/// the curvature against (1-c) g log Delta. Estimates whose exponential mass
/// concentrates on the top 1% of samples are flagged unreliable.
pub fn mgf_check(
    source: &Source<'_>,
    v: Site,
    schedule: &ScaleSchedule,
    t_grid: &[f64],
    g: f64,
    min_ess: f64,
    boot_seed: u64,
) -> Result<(MgfCheck, ExperimentReport)> {
    let t_max = 2.0 / g.sqrt() + 1.0;
    if t_grid.iter().any(|t| t.abs() > t_max) {
        return Err(Error::Parameter(format!("|t| must stay within 2/sqrt(g)+1 = {t_max:.3}")));
    }
    let window = schedule.window_plus(schedule.m)?;
    let run = source.run(&|f| vec![smoothed_average(f, v, &window).expect("window fits")])?;
    if run.ess < min_ess {
        return Err(Error::Input(format!("effective samples {:.0} below {min_ess}", run.ess)));
    }
    let xs: Vec<f64> = run.per_field.iter().map(|r| r[0]).collect();
    let sample_var = stats::variance(&xs);

    let mut log_mgf = Vec::with_capacity(t_grid.len());
    let mut log_mgf_se = Vec::with_capacity(t_grid.len());
    let mut tail_weight = Vec::with_capacity(t_grid.len());
    let mut reliable = Vec::with_capacity(t_grid.len());
    for (i, &t) in t_grid.iter().enumerate() {
        let lme = stats::log_mean_exp(&xs, t);
        let boot = stats::bootstrap_ci(&xs, 400, 0.95, boot_seed ^ (i as u64), |s| {
            stats::log_mean_exp(s, t).value
        });
        log_mgf.push(lme.value);
        log_mgf_se.push(boot.se);
        tail_weight.push(lme.top_tail_weight);
        reliable.push(t == 0.0 || lme.top_tail_weight < 0.20);
    }
    // curvature of the even quadratic model log M(t) = kappa t^2 / 2 over the
    // reliable grid points
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &t) in t_grid.iter().enumerate() {
        if reliable[i] && t != 0.0 {
            let w = 1.0 / log_mgf_se[i].max(1e-9).powi(2);
            num += w * (t * t / 2.0) * log_mgf[i];
            den += w * (t * t / 2.0) * (t * t / 2.0);
        }
    }
    if den == 0.0 {
        return Err(Error::Input("no reliable nonzero t points for the curvature fit".into()));
    }
    let curvature = num / den;
    let curvature_se = (1.0 / den).sqrt();
    let gaussian_target = (1.0 - schedule.c) * g * schedule.delta.ln();

    let out = MgfCheck {
        ts: t_grid.to_vec(),
        log_mgf: log_mgf.clone(),
        log_mgf_se: log_mgf_se.clone(),
        tail_weight: tail_weight.clone(),
        curvature,
        curvature_se,
        sample_var,
        gaussian_target,
        reliable: reliable.clone(),
    };
    let mut report = ExperimentReport::new(
        "mgf",
        serde_json::json!({
            "site": [v.x, v.y], "delta": schedule.delta, "epsilon": schedule.epsilon,
            "c": schedule.c, "g": g
        }),
    );
    report.estimates.push(Estimate::with_se("curvature", curvature, curvature_se));
    report.estimates.push(Estimate::exact("gaussian_target", gaussian_target));
    report.estimates.push(Estimate::with_se(
        "sample_var",
        sample_var,
        sample_var * (2.0 / run.ess).sqrt(),
    ));
    let zero_ok = t_grid.iter().position(|&t| t == 0.0).map(|i| log_mgf[i] == 0.0).unwrap_or(true);
    report.checks.push(Check::new("log_mgf_zero_at_origin", zero_ok, "log MGF(0) = 0".into()));
    // curvature at 0 equals the variance within joint uncertainty
    let se_var = sample_var * (2.0 / run.ess).sqrt();
    let sigma = (curvature_se * curvature_se + se_var * se_var).sqrt();
    report.checks.push(Check::new(
        "curvature_matches_variance",
        (curvature - sample_var).abs() <= 3.0 * sigma,
        format!("curvature {curvature:.4} vs Var {sample_var:.4} (3se {:.4})", 3.0 * sigma),
    ));
    report.csv_columns =
        vec!["t".into(), "log_mgf".into(), "se".into(), "tail_weight".into(), "reliable".into()];
    report.csv_rows = (0..t_grid.len())
        .map(|i| vec![t_grid[i], log_mgf[i], log_mgf_se[i], tail_weight[i], reliable[i] as u8 as f64])
        .collect();
    Ok((out, report))
}

pub struct IncrementGaussianity {
    pub k_steps: usize,
    pub var_u: Vec<f64>,
    pub var_u_se: Vec<f64>,
    pub var_target: f64,
    pub kurtosis: Vec<f64>,
    pub kurtosis_se: f64,
    pub covariance: Vec<Vec<f64>>,
    pub joint_log_mgf: Vec<(f64, f64, f64)>,
}

/// Marginal and joint Gaussianity of the increments U_1..U_K at one vertex:
/// variances against (1/K) g log N, excess kurtosis against 0, and the joint
/// log-MGF at common lambda values.
pub fn increment_gaussianity(
    source: &Source<'_>,
    v: Site,
    schedule: &ScaleSchedule,
    k_steps: usize,
    lambda_grid: &[f64],
    g: f64,
    min_ess: f64,
    boot_seed: u64,
) -> Result<(IncrementGaussianity, ExperimentReport)> {
    let run = source.run(&|f| increments(f, v, schedule, k_steps).expect("schedule fits"))?;
    if run.ess < min_ess {
        return Err(Error::Input(format!("effective samples {:.0} below {min_ess}", run.ess)));
    }
    let n = run.per_field.len();
    let log_n = (source.domain().half_width() as f64).ln();
    let var_target = g * log_n / k_steps as f64;

    let mut var_u = Vec::with_capacity(k_steps);
    let mut var_u_se = Vec::with_capacity(k_steps);
    let mut kurtosis = Vec::with_capacity(k_steps);
    for m in 0..k_steps {
        let col: Vec<f64> = run.per_field.iter().map(|r| r[m]).collect();
        let boot =
            stats::bootstrap_ci(&col, 600, 0.95, boot_seed ^ (m as u64), stats::variance);
        let infl = (n as f64 / run.ess.max(1.0)).sqrt();
        var_u.push(boot.estimate);
        var_u_se.push(boot.se * infl);
        kurtosis.push(stats::moments(&col).excess_kurtosis);
    }
    let kurtosis_se = stats::kurtosis_se(run.ess as usize);

    // sample covariance matrix of the increments
    let means: Vec<f64> =
        (0..k_steps).map(|m| stats::mean(&run.per_field.iter().map(|r| r[m]).collect::<Vec<_>>())).collect();
    let mut covariance = vec![vec![0.0; k_steps]; k_steps];
    for row in &run.per_field {
        for a in 0..k_steps {
            for b in 0..k_steps {
                covariance[a][b] += (row[a] - means[a]) * (row[b] - means[b]);
            }
        }
    }
    for a in 0..k_steps {
        for b in 0..k_steps {
            covariance[a][b] /= n as f64 - 1.0;
        }
    }

    // joint MGF at common lambda: target (1/2) K lambda^2 (g/K) log N
    let sums: Vec<f64> = run.per_field.iter().map(|r| r.iter().sum()).collect();
    let mut joint = Vec::new();
    for &l in lambda_grid {
        let lme = stats::log_mean_exp(&sums, l);
        let target = 0.5 * l * l * k_steps as f64 * var_target;
        joint.push((l, lme.value, target));
    }

    let out = IncrementGaussianity {
        k_steps,
        var_u: var_u.clone(),
        var_u_se: var_u_se.clone(),
        var_target,
        kurtosis: kurtosis.clone(),
        kurtosis_se,
        covariance,
        joint_log_mgf: joint.clone(),
    };
    let mut report = ExperimentReport::new(
        "increments",
        serde_json::json!({
            "site": [v.x, v.y], "k": k_steps, "g": g,
            "delta": schedule.delta, "epsilon": schedule.epsilon, "c": schedule.c
        }),
    );
    for m in 0..k_steps {
        report.estimates.push(Estimate::with_se(&format!("var_u{}", m + 1), var_u[m], var_u_se[m]));
        report.estimates.push(Estimate::with_se(&format!("kurtosis_u{}", m + 1), kurtosis[m], kurtosis_se));
    }
    report.estimates.push(Estimate::exact("var_target", var_target));
    let var_ok = var_u.iter().all(|&v| (v - var_target).abs() / var_target <= 0.25);
    report.checks.push(Check::new(
        "variance_within_25pct",
        var_ok,
        format!("targets {var_target:.4}, got {:?}", var_u.iter().map(|v| (v / var_target * 100.0).round() / 100.0).collect::<Vec<_>>()),
    ));
    let kurt_ok = kurtosis.iter().all(|&k| k.abs() <= 3.0 * kurtosis_se);
    report.checks.push(Check::new(
        "kurtosis_gaussian",
        kurt_ok,
        format!("3se = {:.3}, got {:?}", 3.0 * kurtosis_se, kurtosis.iter().map(|k| (k * 1000.0).round() / 1000.0).collect::<Vec<_>>()),
    ));
    report.checks.push(Check::new(
        "joint_mgf_zero_at_origin",
        lambda_grid.iter().position(|&l| l == 0.0).map(|i| joint[i].1 == 0.0).unwrap_or(true),
        "joint log MGF(0) = 0".into(),
    ));
    report.csv_columns = vec!["m".into(), "var".into(), "se".into(), "kurtosis".into()];
    report.csv_rows = (0..k_steps)
        .map(|m| vec![(m + 1) as f64, var_u[m], var_u_se[m], kurtosis[m]])
        .collect();
    Ok((out, report))
}

pub struct TwoPointIncrements {
    pub j_split: usize,
    /// log E exp(lambda (sum U(v1) + sum_{m>j} U(v2))) per lambda, with the
    /// factorized single-point sum as the reference.
    pub joint_vs_factored: Vec<(f64, f64, f64)>,
    /// Max |corr(U_m(v1), U_m(v2))| over m > j.
    pub max_far_correlation: f64,
}

/// Two-point factorization of the increment MGF for vertices at distance
/// N^{1-j/K} .. N^{1-(j-1)/K}.
pub fn two_point_increments(
    source: &Source<'_>,
    v1: Site,
    v2: Site,
    schedule1: &ScaleSchedule,
    schedule2: &ScaleSchedule,
    k_steps: usize,
    lambda_grid: &[f64],
    min_ess: f64,
) -> Result<(TwoPointIncrements, ExperimentReport)> {
    let n = source.domain().half_width() as f64;
    let d = (((v1.x - v2.x) as f64).powi(2) + ((v1.y - v2.y) as f64).powi(2)).sqrt();
    let mut j_split = None;
    for j in 1..=k_steps {
        let lo = n.powf(1.0 - j as f64 / k_steps as f64);
        let hi = n.powf(1.0 - (j as f64 - 1.0) / k_steps as f64);
        if d >= lo && d <= hi {
            j_split = Some(j);
            break;
        }
    }
    let j_split = j_split.ok_or_else(|| {
        Error::Parameter(format!("|v1-v2| = {d:.1} outside every N^(1-j/K) band"))
    })?;
    let run = source.run(&|f| {
        let mut row = increments(f, v1, schedule1, k_steps).expect("schedule fits");
        row.extend(increments(f, v2, schedule2, k_steps).expect("schedule fits"));
        row
    })?;
    if run.ess < min_ess {
        return Err(Error::Input(format!("effective samples {:.0} below {min_ess}", run.ess)));
    }
    // joint statistic: all of v1, only m > j of v2
    let sums: Vec<f64> = run
        .per_field
        .iter()
        .map(|r| {
            let s1: f64 = r[..k_steps].iter().sum();
            let s2: f64 = r[k_steps + j_split..].iter().sum();
            s1 + s2
        })
        .collect();
    let mut joint_vs_factored = Vec::new();
    for &l in lambda_grid {
        let joint = stats::log_mean_exp(&sums, l).value;
        // factored reference: per-increment marginal MGFs multiplied out
        let mut factored = 0.0;
        for m in 0..k_steps {
            let col: Vec<f64> = run.per_field.iter().map(|r| r[m]).collect();
            factored += stats::log_mean_exp(&col, l).value;
        }
        for m in j_split..k_steps {
            let col: Vec<f64> = run.per_field.iter().map(|r| r[k_steps + m]).collect();
            factored += stats::log_mean_exp(&col, l).value;
        }
        joint_vs_factored.push((l, joint, factored));
    }
    // far-scale cross correlations should vanish
    let mut max_far = 0.0f64;
    for m in j_split..k_steps {
        let a: Vec<f64> = run.per_field.iter().map(|r| r[m]).collect();
        let b: Vec<f64> = run.per_field.iter().map(|r| r[k_steps + m]).collect();
        let (ma, mb) = (stats::mean(&a), stats::mean(&b));
        let mut num = 0.0;
        for i in 0..a.len() {
            num += (a[i] - ma) * (b[i] - mb);
        }
        let corr = num / ((a.len() as f64 - 1.0) * stats::variance(&a).sqrt() * stats::variance(&b).sqrt());
        max_far = max_far.max(corr.abs());
    }
    let out = TwoPointIncrements {
        j_split,
        joint_vs_factored: joint_vs_factored.clone(),
        max_far_correlation: max_far,
    };
    let mut report = ExperimentReport::new(
        "increments-two-point",
        serde_json::json!({ "v1": [v1.x, v1.y], "v2": [v2.x, v2.y], "j": j_split, "k": k_steps }),
    );
    let corr_3se = 3.0 / run.ess.sqrt();
    report.estimates.push(Estimate::with_se("max_far_correlation", max_far, corr_3se / 3.0));
    report.checks.push(Check::new(
        "far_scales_decorrelated",
        max_far <= corr_3se + 0.05,
        format!("max |corr| {max_far:.4} vs 3se {corr_3se:.4}"),
    ));
    report.csv_columns = vec!["lambda".into(), "joint_log_mgf".into(), "factored_log_mgf".into()];
    report.csv_rows = joint_vs_factored.iter().map(|(l, j, f)| vec![*l, *j, *f]).collect();
    Ok((out, report))
}

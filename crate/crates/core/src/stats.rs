//! Statistical plumbing: moments, quantiles, bootstrap confidence intervals,
//! autocorrelation, weighted regression and numerically stable log-mean-exp.
//!
//! Everything here reduces in a fixed order so that results are reproducible
//! bit-for-bit regardless of thread scheduling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic chunked sum: fixed 4096-element blocks combined in order.
pub fn det_sum(xs: &[f64]) -> f64 {
    xs.chunks(4096).map(|c| c.iter().sum::<f64>()).sum()
}

/// Deterministic dot product with the same chunking as [`det_sum`].
pub fn det_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.chunks(4096)
        .zip(b.chunks(4096))
        .map(|(ca, cb)| ca.iter().zip(cb).map(|(x, y)| x * y).sum::<f64>())
        .sum()
}

pub fn mean(xs: &[f64]) -> f64 {
    det_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.chunks(4096).map(|c| c.iter().map(|x| (x - m) * (x - m)).sum::<f64>()).sum();
    ss / (xs.len() as f64 - 1.0)
}

/// Central moments up to order 4 in one pass (two passes over data).
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    pub var: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

pub fn moments(xs: &[f64]) -> Moments {
    let n = xs.len();
    let m = mean(xs);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for c in xs.chunks(4096) {
        let (mut a2, mut a3, mut a4) = (0.0, 0.0, 0.0);
        for &x in c {
            let d = x - m;
            let d2 = d * d;
            a2 += d2;
            a3 += d2 * d;
            a4 += d2 * d2;
        }
        m2 += a2;
        m3 += a3;
        m4 += a4;
    }
    let nf = n as f64;
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    Moments {
        n,
        mean: m,
        var: m2 * nf / (nf - 1.0),
        skewness: if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 },
        excess_kurtosis: if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 },
    }
}

/// Large-sample standard error of the skewness estimate under normality.
pub fn skewness_se(n: usize) -> f64 {
    (6.0 / n as f64).sqrt()
}

/// Large-sample standard error of the excess kurtosis estimate under normality.
pub fn kurtosis_se(n: usize) -> f64 {
    (24.0 / n as f64).sqrt()
}

/// Quantile by linear interpolation on the order statistics (type 7).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// Standard normal CDF via an erfc rational approximation (|err| < 1.2e-7).
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc_approx(-z / std::f64::consts::SQRT_2)
}

fn erfc_approx(x: f64) -> f64 {
    // Numerical Recipes erfcc; relative error below 1.2e-7 everywhere.
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
            .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Upper tail Q(z) = P(Z > z) of the standard normal.
pub fn normal_tail(z: f64) -> f64 {
    0.5 * erfc_approx(z / std::f64::consts::SQRT_2)
}

/// Inverse standard normal CDF (Acklam's algorithm, rel. err. < 1.2e-9 after
/// one Halley refinement step).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "normal_quantile needs p in (0,1), got {p}");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // one Halley step against the high-accuracy erfc
    let e = 0.5 * erfc_approx(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// Nonparametric bootstrap with bias-corrected percentile intervals
/// (1000 resamples by default). `stat` must be a pure function of its sample.
pub struct Bootstrap {
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

pub fn bootstrap_ci<F>(xs: &[f64], n_resamples: usize, level: f64, seed: u64, stat: F) -> Bootstrap
where
    F: Fn(&[f64]) -> f64,
{
    let n = xs.len();
    assert!(n >= 2, "bootstrap needs at least 2 samples");
    let theta = stat(xs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reps = Vec::with_capacity(n_resamples);
    let mut buf = vec![0.0; n];
    for _ in 0..n_resamples {
        for slot in buf.iter_mut() {
            *slot = xs[rng.random_range(0..n)];
        }
        reps.push(stat(&buf));
    }
    reps.sort_by(f64::total_cmp);
    let se = variance(&reps).sqrt();
    // bias correction z0 from the fraction of replicates below the estimate
    let below = reps.iter().filter(|&&r| r < theta).count() as f64;
    let frac = (below / n_resamples as f64).clamp(1e-6, 1.0 - 1e-6);
    let z0 = normal_quantile(frac);
    let alpha = (1.0 - level) / 2.0;
    let zlo = normal_quantile(alpha);
    let zhi = normal_quantile(1.0 - alpha);
    let plo = normal_cdf(2.0 * z0 + zlo).clamp(1e-6, 1.0 - 1e-6);
    let phi = normal_cdf(2.0 * z0 + zhi).clamp(1e-6, 1.0 - 1e-6);
    Bootstrap {
        estimate: theta,
        se,
        ci_lo: quantile(&reps, plo),
        ci_hi: quantile(&reps, phi),
    }
}

/// Weighted least squares fit y = intercept + slope * x.
pub struct WlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    /// Sum of squared standardized residuals.
    pub chi2: f64,
}

pub fn weighted_least_squares(x: &[f64], y: &[f64], sigma: &[f64]) -> WlsFit {
    assert!(x.len() == y.len() && y.len() == sigma.len() && x.len() >= 2);
    let w: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s)).collect();
    let sw = det_sum(&w);
    let swx = det_dot(&w, x);
    let swy = det_dot(&w, y);
    let xbar = swx / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..x.len() {
        let dx = x[i] - xbar;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * y[i];
    }
    let slope = sxy / sxx;
    let intercept = (swy - slope * swx) / sw;
    let chi2 = (0..x.len())
        .map(|i| {
            let r = (y[i] - intercept - slope * x[i]) / sigma[i];
            r * r
        })
        .sum();
    WlsFit {
        slope,
        intercept,
        slope_se: (1.0 / sxx).sqrt(),
        intercept_se: (1.0 / sw + xbar * xbar / sxx).sqrt(),
        chi2,
    }
}

/// Stabilized log of the empirical mean of exp(t * x), with the fraction of
/// the exponential mass carried by the top 1% of samples as a reliability
/// diagnostic.
pub struct LogMeanExp {
    pub value: f64,
    /// Fraction of sum(exp) contributed by the top 1% of samples.
    pub top_tail_weight: f64,
}

pub fn log_mean_exp(xs: &[f64], t: f64) -> LogMeanExp {
    let n = xs.len();
    assert!(n > 0);
    let scaled: Vec<f64> = xs.iter().map(|&x| t * x).collect();
    let m = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut terms: Vec<f64> = scaled.iter().map(|&s| (s - m).exp()).collect();
    let total = det_sum(&terms);
    let value = m + (total / n as f64).ln();
    terms.sort_by(f64::total_cmp);
    let k = ((n as f64 * 0.01).ceil() as usize).max(1);
    let top: f64 = terms[n - k..].iter().sum();
    LogMeanExp { value, top_tail_weight: top / total }
}

/// Integrated autocorrelation time by Sokal's automatic windowing
/// (window W = first lag with W >= 5 * tau_int(W)).
pub struct Autocorr {
    pub tau_int: f64,
    pub ess: f64,
    pub window: usize,
    pub degenerate: bool,
}

pub fn integrated_autocorr(trace: &[f64]) -> Autocorr {
    let n = trace.len();
    let m = mean(trace);
    let var0: f64 = trace.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if var0 <= 0.0 || !var0.is_finite() {
        return Autocorr { tau_int: f64::NAN, ess: 0.0, window: 0, degenerate: true };
    }
    let mut tau = 1.0;
    let mut window = 0;
    let max_lag = n / 4;
    for lag in 1..max_lag {
        let mut acc = 0.0;
        for i in 0..n - lag {
            acc += (trace[i] - m) * (trace[i + lag] - m);
        }
        let rho = acc / ((n - lag) as f64 * var0);
        tau += 2.0 * rho;
        window = lag;
        if (lag as f64) >= 5.0 * tau.max(1.0) {
            break;
        }
    }
    let tau = tau.max(1e-3);
    Autocorr { tau_int: tau, ess: n as f64 / tau, window, degenerate: false }
}

/// One-sample Kolmogorov-Smirnov distance against a reference CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Critical KS distance at significance 1e-3: c(alpha)/sqrt(n) with
/// c(0.001) = 1.94947 from the Kolmogorov distribution.
pub fn ks_critical_1e3(n: usize) -> f64 {
    1.94947 / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_functions_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 2e-7);
        assert!((normal_cdf(1.0) - 0.8413447460685429).abs() < 2e-7);
        assert!((normal_tail(3.0) - 0.0013498980316301).abs() < 2e-9);
        for &p in &[0.001, 0.025, 0.3, 0.5, 0.75, 0.975, 0.999] {
            let z = normal_quantile(p);
            assert!((normal_cdf(z) - p).abs() < 1e-8, "p={p} z={z}");
        }
    }

    #[test]
    fn moments_of_known_sample() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let m = moments(&xs);
        assert!((m.mean - 2.5).abs() < 1e-14);
        assert!((m.var - 5.0 / 3.0).abs() < 1e-14);
        assert!(m.skewness.abs() < 1e-12);
    }

    #[test]
    fn wls_recovers_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let s = [0.5, 0.5, 1.0, 1.0];
        let fit = weighted_least_squares(&x, &y, &s);
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!(fit.chi2 < 1e-20);
    }

    #[test]
    fn log_mean_exp_matches_naive() {
        let xs = [0.1, -0.4, 0.9, 0.3, -1.2];
        let t = 1.7;
        let naive = (xs.iter().map(|x| f64::exp(t * x)).sum::<f64>() / xs.len() as f64).ln();
        let got = log_mean_exp(&xs, t);
        assert!((got.value - naive).abs() < 1e-12);
        assert_eq!(log_mean_exp(&xs, 0.0).value, 0.0);
    }

    #[test]
    fn autocorr_iid_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..20000).map(|_| rng.random::<f64>() - 0.5).collect();
        let a = integrated_autocorr(&xs);
        assert!(!a.degenerate);
        assert!((a.tau_int - 1.0).abs() < 0.1, "tau = {}", a.tau_int);
        assert!((a.ess - xs.len() as f64).abs() / (xs.len() as f64) < 0.1);
    }

    #[test]
    fn autocorr_ar1_matches_closed_form() {
        // AR(1) with rho = 0.9 has tau_int = (1+rho)/(1-rho) = 19
        let rho: f64 = 0.9;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut x = 0.0;
        let innov = (1.0 - rho * rho).sqrt();
        let xs: Vec<f64> = (0..400000)
            .map(|_| {
                let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                x = rho * x + innov * z;
                x
            })
            .collect();
        let a = integrated_autocorr(&xs);
        assert!((a.tau_int - 19.0).abs() / 19.0 < 0.15, "tau = {}", a.tau_int);
    }

    #[test]
    fn autocorr_constant_is_degenerate() {
        let xs = vec![2.0; 500];
        assert!(integrated_autocorr(&xs).degenerate);
    }

    #[test]
    fn bootstrap_mean_of_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> =
            (0..4000).map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)).collect();
        let b = bootstrap_ci(&xs, 1000, 0.95, 42, mean);
        let expect_se = 1.0 / (xs.len() as f64).sqrt();
        assert!((b.se - expect_se).abs() / expect_se < 0.2);
        assert!(b.ci_lo < b.estimate && b.estimate < b.ci_hi);
    }

    #[test]
    fn ks_uniform_sanity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..100000).map(|_| rng.random::<f64>()).collect();
        let d = ks_distance(&xs, |x| x.clamp(0.0, 1.0));
        assert!(d < ks_critical_1e3(xs.len()), "d = {d}");
    }
}

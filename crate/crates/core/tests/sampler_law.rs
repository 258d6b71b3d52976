//! Exact-law checks for the MCMC kernels: quadrature oracles on the 3x3 box,
//! checkerboard vs sequential agreement, Gaussian-chain covariances against
//! the Dirichlet solver, HMC cross-validation and conditional resampling.

use glfield_core::field::{BoundaryCondition, FieldState};
use glfield_core::laplace::DirichletOperator;
use glfield_core::lattice::{site, LatticeDomain, SiteSet};
use glfield_core::potential::Potential;
use glfield_core::sampler::{
    resample_subdomain, sweep, sweep_sequential, Chain, KernelKind, SamplerConfig,
};
use glfield_core::stats;

/// Moments and CDF of the single-site conditional density
/// exp(-sum_y V(t - b_y)) by Simpson quadrature.
struct QuadratureOracle {
    grid: Vec<f64>,
    cdf: Vec<f64>,
    pub mean: f64,
    pub var: f64,
    pub m4: f64,
}

impl QuadratureOracle {
    fn new(p: &Potential, nbrs: [f64; 4], half_range: f64, step: f64) -> Self {
        let n = (2.0 * half_range / step).round() as usize;
        let n = if n % 2 == 0 { n } else { n + 1 };
        let h = 2.0 * half_range / n as f64;
        let center = nbrs.iter().sum::<f64>() / 4.0;
        let energy = |t: f64| nbrs.iter().map(|&b| p.v(t - b)).sum::<f64>();
        let e0 = energy(center);
        let f = |t: f64| (-(energy(t) - e0)).exp();
        let simpson = |g: &dyn Fn(f64) -> f64| {
            let mut acc = g(center - half_range) + g(center + half_range);
            for i in 1..n {
                let t = center - half_range + i as f64 * h;
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * g(t);
            }
            acc * h / 3.0
        };
        let z = simpson(&f);
        let mean = simpson(&|t| t * f(t)) / z;
        let var = simpson(&|t| (t - mean) * (t - mean) * f(t)) / z;
        let m4 = simpson(&|t| (t - mean).powi(4) * f(t)) / z;
        // cumulative trapezoid for the KS reference
        let mut grid = Vec::with_capacity(n + 1);
        let mut cdf = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        let mut prev = f(center - half_range);
        grid.push(center - half_range);
        cdf.push(0.0);
        for i in 1..=n {
            let t = center - half_range + i as f64 * h;
            let cur = f(t);
            acc += 0.5 * (prev + cur) * h;
            prev = cur;
            grid.push(t);
            cdf.push(acc);
        }
        let total = acc;
        for v in cdf.iter_mut() {
            *v /= total;
        }
        QuadratureOracle { grid, cdf, mean, var, m4 }
    }

    fn cdf_at(&self, x: f64) -> f64 {
        match self.grid.binary_search_by(|g| g.total_cmp(&x)) {
            Ok(i) => self.cdf[i],
            Err(0) => 0.0,
            Err(i) if i >= self.grid.len() => 1.0,
            Err(i) => {
                let frac = (x - self.grid[i - 1]) / (self.grid[i] - self.grid[i - 1]);
                self.cdf[i - 1] + frac * (self.cdf[i] - self.cdf[i - 1])
            }
        }
    }
}

fn single_site_trace(p: &Potential, kernel: KernelKind, n_sweeps: u64, seed: u64) -> Vec<f64> {
    let d = LatticeDomain::build_box(1).unwrap();
    let mut state = FieldState::new(d, &BoundaryCondition::Zero);
    let mut out = Vec::with_capacity(n_sweeps as usize);
    for k in 0..n_sweeps {
        sweep(&mut state, p, kernel, 1.2, seed, k).unwrap();
        out.push(state.value(site(0, 0)));
    }
    out
}

#[test]
fn heat_bath_3x3_dipole_matches_quadrature() {
    let p = Potential::dipole_gas(0.5).unwrap();
    let oracle = QuadratureOracle::new(&p, [0.0; 4], 8.0, 1e-3);
    // heat-bath draws are exact conditional samples, hence iid here
    let n = 200_000u64;
    let trace = single_site_trace(&p, KernelKind::HeatBath, n, 2024);
    let m = stats::moments(&trace);
    let nf = n as f64;
    let se_var = ((oracle.m4 - oracle.var * oracle.var) / nf).sqrt();
    assert!((m.var - oracle.var).abs() < 3.0 * se_var, "var {} vs {}", m.var, oracle.var);
    assert!(m.mean.abs() < 4.0 * (oracle.var / nf).sqrt());
    let ks = stats::ks_distance(&trace, |x| oracle.cdf_at(x));
    assert!(ks < stats::ks_critical_1e3(n as usize), "KS {ks}");
}

#[test]
fn metropolis_3x3_dipole_matches_quadrature() {
    let p = Potential::dipole_gas(0.5).unwrap();
    let oracle = QuadratureOracle::new(&p, [0.0; 4], 8.0, 1e-3);
    let n = 400_000u64;
    let trace = single_site_trace(&p, KernelKind::Metropolis, n, 77);
    let ac = stats::integrated_autocorr(&trace);
    let ess = ac.ess;
    assert!(ess > 10_000.0);
    let m = stats::moments(&trace);
    let se_var = ((oracle.m4 - oracle.var * oracle.var) / ess).sqrt();
    let se_m4 = {
        // moment-based SE for the 4th central moment, normal-ish inflation
        let m8ish = 105.0 * oracle.var.powi(4); // Gaussian bound scale
        ((m8ish - oracle.m4 * oracle.m4) / ess).sqrt()
    };
    assert!((m.var - oracle.var).abs() < 3.0 * se_var, "var {} vs {}", m.var, oracle.var);
    let m4 = {
        let mean = stats::mean(&trace);
        stats::mean(&trace.iter().map(|x| (x - mean).powi(4)).collect::<Vec<_>>())
    };
    assert!((m4 - oracle.m4).abs() < 3.0 * se_m4, "m4 {} vs {}", m4, oracle.m4);
}

#[test]
fn quadratic_3x3_variance_is_quarter() {
    let p = Potential::quadratic();
    let n = 300_000u64;
    let trace = single_site_trace(&p, KernelKind::HeatBath, n, 5);
    let var = stats::variance(&trace);
    let se = 0.25 * (2.0 / n as f64).sqrt();
    assert!((var - 0.25).abs() < 3.0 * se, "var {var}");
}

#[test]
fn dipole_5x5_site_means_vanish() {
    let d = LatticeDomain::build_box(2).unwrap();
    let p = Potential::dipole_gas(0.5).unwrap();
    let mut state = FieldState::new(d, &BoundaryCondition::Zero);
    let n = 150_000u64;
    let mut sums = vec![0.0; d.num_sites()];
    for k in 0..n {
        sweep(&mut state, &p, KernelKind::HeatBath, 1.0, 31, k).unwrap();
        for (a, v) in sums.iter_mut().zip(state.values()) {
            *a += v;
        }
    }
    // site variance is below G(0,0) of the 5x5 box (= 0.375); tau ~ 4 sweeps
    let tau = 4.0;
    let se = (0.375f64 * tau / n as f64).sqrt();
    for (i, s) in sums.iter().enumerate() {
        let mean = s / n as f64;
        assert!(mean.abs() < 4.0 * se, "site {i} mean {mean}");
    }
}

#[test]
fn checkerboard_and_sequential_agree_on_5x5_moments() {
    let d = LatticeDomain::build_box(2).unwrap();
    let p = Potential::dipole_gas(0.5).unwrap();
    let n = 200_000u64;
    let run = |sequential: bool, seed: u64| -> (f64, f64) {
        let mut state = FieldState::new(d, &BoundaryCondition::Zero);
        let mut c = Vec::with_capacity(n as usize);
        for k in 0..n {
            if sequential {
                sweep_sequential(&mut state, &p, KernelKind::Metropolis, 1.2, seed, k).unwrap();
            } else {
                sweep(&mut state, &p, KernelKind::Metropolis, 1.2, seed, k).unwrap();
            }
            c.push(state.value(site(0, 0)));
        }
        let ac = stats::integrated_autocorr(&c);
        (stats::variance(&c), stats::variance(&c) * (2.0f64 / ac.ess).sqrt())
    };
    let (va, sa) = run(false, 1);
    let (vb, sb) = run(true, 2);
    let sigma = (sa * sa + sb * sb).sqrt();
    assert!((va - vb).abs() < 3.0 * sigma, "checkerboard {va} vs sequential {vb} (se {sigma})");
}

#[test]
fn quadratic_chain_covariances_match_greens_on_9x9() {
    let d = LatticeDomain::build_box(4).unwrap();
    let p = Potential::quadratic();
    let op = DirichletOperator::full_box(d).unwrap();
    let cfg = SamplerConfig::new(400, 10, 4000, 99).with_kernel(KernelKind::HeatBath).with_chains(2);
    let store = glfield_core::store::sample_ensemble(d, &p, &cfg).unwrap();
    // thinned by 10 sweeps; tau(phi) ~ 20 sweeps on 9x9, so deflate by ~2
    let ess = 4000.0 / 2.5;
    let pairs = [(site(0, 0), site(0, 0)), (site(0, 0), site(1, 0)), (site(-1, -1), site(1, 1))];
    for (u, v) in pairs {
        let (iu, iv) = (d.index(u), d.index(v));
        let us: Vec<f64> = (0..store.n_fields()).map(|i| store.field_values(i)[iu]).collect();
        let vs: Vec<f64> = (0..store.n_fields()).map(|i| store.field_values(i)[iv]).collect();
        let mu = stats::mean(&us);
        let mv = stats::mean(&vs);
        let cov = us.iter().zip(&vs).map(|(a, b)| (a - mu) * (b - mv)).sum::<f64>()
            / (us.len() as f64 - 1.0);
        let g_uv = op.greens_column(u).unwrap().value_at(&op, v).unwrap();
        let g_uu = op.gff_variance(u).unwrap();
        let g_vv = op.gff_variance(v).unwrap();
        let se = ((g_uu * g_vv + g_uv * g_uv) / ess).sqrt();
        assert!((cov - g_uv).abs() < 3.0 * se, "cov {cov} vs {g_uv} (se {se})");
    }
}

#[test]
fn hmc_quadratic_matches_exact_law() {
    let d = LatticeDomain::build_box(8).unwrap();
    let p = Potential::quadratic();
    let op = DirichletOperator::full_box(d).unwrap();
    let cfg = SamplerConfig::new(200, 2, 3000, 4242)
        .with_kernel(KernelKind::FourierHmc)
        .with_chains(2);
    let store = glfield_core::store::sample_ensemble(d, &p, &cfg).unwrap();
    for diag in &store.header.diagnostics {
        assert!(diag.acceptance.unwrap() > 0.5, "HMC acceptance {:?}", diag.acceptance);
    }
    let ess: f64 = 2500.0; // thinned by 2 trajectories, tau ~ 2-3 trajectories
    for s in [site(0, 0), site(3, -2)] {
        let idx = d.index(s);
        let vals: Vec<f64> = (0..store.n_fields()).map(|i| store.field_values(i)[idx]).collect();
        let var = stats::variance(&vals);
        let g = op.gff_variance(s).unwrap();
        let se = g * (2.0 / ess).sqrt();
        assert!((var - g).abs() < 3.0 * se, "site ({},{}): var {var} vs {g}", s.x, s.y);
        assert!(stats::mean(&vals).abs() < 4.0 * (g / ess).sqrt());
    }
}

#[test]
fn hmc_dipole_3x3_matches_quadrature() {
    let d = LatticeDomain::build_box(1).unwrap();
    let p = Potential::dipole_gas(0.5).unwrap();
    let oracle = QuadratureOracle::new(&p, [0.0; 4], 8.0, 1e-3);
    let cfg = SamplerConfig::new(300, 2, 60_000, 808)
        .with_kernel(KernelKind::FourierHmc)
        .with_chains(2);
    let store = glfield_core::store::sample_ensemble(d, &p, &cfg).unwrap();
    let idx = d.index(site(0, 0));
    let vals: Vec<f64> = (0..store.n_fields()).map(|i| store.field_values(i)[idx]).collect();
    let ac = stats::integrated_autocorr(&vals);
    let ess = ac.ess.min(vals.len() as f64);
    let var = stats::variance(&vals);
    let se_var = ((oracle.m4 - oracle.var * oracle.var) / ess).sqrt();
    assert!((var - oracle.var).abs() < 3.0 * se_var, "var {} vs {} (ess {ess})", var, oracle.var);
    let ks = stats::ks_distance(&vals, |x| oracle.cdf_at(x));
    assert!(ks < stats::ks_critical_1e3(ess as usize), "KS {ks} at ess {ess}");
}

#[test]
fn hmc_dipole_matches_metropolis_on_5x5() {
    let d = LatticeDomain::build_box(2).unwrap();
    let p = Potential::dipole_gas(0.5).unwrap();
    let center = d.index(site(0, 0));
    let run = |kernel: KernelKind, thin: u64, n: usize, seed: u64| -> (f64, f64) {
        let cfg = SamplerConfig::new(300, thin, n, seed).with_kernel(kernel).with_chains(2);
        let store = glfield_core::store::sample_ensemble(d, &p, &cfg).unwrap();
        let vals: Vec<f64> =
            (0..store.n_fields()).map(|i| store.field_values(i)[center]).collect();
        let ac = stats::integrated_autocorr(&vals);
        let var = stats::variance(&vals);
        (var, var * (2.0 / ac.ess.min(vals.len() as f64)).sqrt())
    };
    let (va, sa) = run(KernelKind::FourierHmc, 2, 20_000, 6);
    let (vb, sb) = run(KernelKind::Metropolis, 8, 20_000, 7);
    let sigma = (sa * sa + sb * sb).sqrt();
    assert!((va - vb).abs() < 3.0 * sigma, "HMC {va} vs Metropolis {vb} (se {sigma})");
}

#[test]
fn hmc_respects_boundary_condition() {
    // quadratic with f = 1: the mean field is the harmonic extension of 1
    let d = LatticeDomain::build_box(4).unwrap();
    let p = Potential::quadratic();
    let cfg = SamplerConfig::new(150, 2, 4000, 11)
        .with_kernel(KernelKind::FourierHmc)
        .with_chains(2);
    let bc = BoundaryCondition::constant(d, 1.0);
    let store =
        glfield_core::store::sample_ensemble_with_boundary(d, &p, &cfg, &bc).unwrap();
    let op = DirichletOperator::full_box(d).unwrap();
    let ess = 2000.0;
    for s in [site(0, 0), site(2, 2)] {
        let idx = d.index(s);
        let vals: Vec<f64> = (0..store.n_fields()).map(|i| store.field_values(i)[idx]).collect();
        let mean = stats::mean(&vals);
        let g = op.gff_variance(s).unwrap();
        let se = (g / ess).sqrt();
        assert!((mean - 1.0).abs() < 4.0 * se, "mean {mean} at ({},{})", s.x, s.y);
    }
    for i in 0..store.n_fields() {
        let f = store.field(i);
        for s in d.boundary_sites() {
            assert_eq!(f.value(s), 1.0);
        }
    }
}

#[test]
fn resample_conditional_mean_is_harmonic_extension() {
    let d = LatticeDomain::build_box(6).unwrap();
    let p = Potential::quadratic();
    // a frozen background field
    let op = DirichletOperator::full_box(d).unwrap();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(314);
    let background = op.sample_exact_gff(&mut rng).unwrap();
    let sub = SiteSet::l1_ball(d, site(0, 0), 4.5).unwrap();
    let sub_op = DirichletOperator::new(sub.clone()).unwrap();
    let bdata: Vec<f64> =
        sub.boundary().iter().map(|&l| background.value(sub.site(l as usize))).collect();
    let expected = sub_op.harmonic_extension(&bdata).unwrap();
    let n_resamples = 600;
    let mut sums = vec![0.0; sub.len()];
    for r in 0..n_resamples {
        let out =
            resample_subdomain(&background, &sub, &p, 250, KernelKind::HeatBath, 1.0, r as u64)
                .unwrap();
        for (k, s) in sub.sites().iter().enumerate() {
            sums[k] += out.value(*s);
        }
    }
    let sub_var = sub_op.gff_variance(site(0, 0)).unwrap();
    let se = (sub_var / n_resamples as f64).sqrt();
    for (k, &loc) in sub.interior().iter().enumerate() {
        let _ = k;
        let mean = sums[loc as usize] / n_resamples as f64;
        assert!(
            (mean - expected[loc as usize]).abs() < 4.0 * se,
            "conditional mean {mean} vs harmonic extension {}",
            expected[loc as usize]
        );
    }
}

#[test]
fn resample_full_interior_matches_zero_boundary_law() {
    let d = LatticeDomain::build_box(3).unwrap();
    let p = Potential::quadratic();
    let op = DirichletOperator::full_box(d).unwrap();
    let background = FieldState::new(d, &BoundaryCondition::Zero);
    let sub = SiteSet::full_box(d);
    let n = 4000;
    let mut vals = Vec::with_capacity(n);
    for r in 0..n {
        let out =
            resample_subdomain(&background, &sub, &p, 120, KernelKind::HeatBath, 1.0, r as u64)
                .unwrap();
        vals.push(out.value(site(0, 0)));
    }
    let g = op.gff_variance(site(0, 0)).unwrap();
    let var = stats::variance(&vals);
    let se = g * (2.0 / n as f64).sqrt();
    assert!((var - g).abs() < 3.5 * se, "var {var} vs {g}");
}

#[test]
fn chain_autotuning_reaches_target_acceptance() {
    let d = LatticeDomain::build_box(4).unwrap();
    let p = Potential::dipole_gas(0.5).unwrap();
    let cfg = SamplerConfig::new(600, 1, 1, 5).with_kernel(KernelKind::Metropolis);
    let mut chain = Chain::new(d, p, &BoundaryCondition::Zero, &cfg, 0).unwrap();
    chain.burn_in(600).unwrap();
    chain.run(400).unwrap();
    let acc = chain.acceptance_rate();
    assert!((acc - 0.45).abs() < 0.1, "tuned acceptance {acc}");
}

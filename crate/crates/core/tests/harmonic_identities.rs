//! Deterministic identities of the multiscale machinery: reproduction of
//! harmonic fields, annihilation by increment kernels, telescoping algebra
//! and kernel/average consistency.

use glfield_core::field::{BoundaryCondition, FieldState};
use glfield_core::harmonic::{
    circle_average, increment_kernel, increments, smoothed_average, smoothed_kernel,
    telescoping_values, harmonic_test_family, ScaleSchedule, SmoothingWindow,
};
use glfield_core::laplace::DirichletOperator;
use glfield_core::lattice::{site, LatticeDomain};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn constant_field(domain: LatticeDomain, c: f64) -> FieldState {
    FieldState::from_values(domain, vec![c; domain.num_sites()]).unwrap()
}

fn sampled_field(domain: LatticeDomain, seed: u64) -> FieldState {
    let op = DirichletOperator::full_box(domain).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    op.sample_exact_gff(&mut rng).unwrap()
}

fn harmonic_field(domain: LatticeDomain, values: Vec<f64>) -> FieldState {
    FieldState::from_values(domain, values).unwrap()
}

#[test]
fn circle_average_basics() {
    let d = LatticeDomain::build_box(8).unwrap();
    let c = constant_field(d, 1.75);
    assert!((circle_average(&c, site(0, 0), 4.5).unwrap() - 1.75).abs() < 1e-12);
    // odd harmonic coordinate centered at v averages to zero
    let v = site(2, -1);
    let vals: Vec<f64> = d.sites().map(|s| (s.x - v.x) as f64).collect();
    let f = harmonic_field(d, vals);
    assert!(circle_average(&f, v, 3.5).unwrap().abs() < 1e-12);
    // plus ball: arithmetic mean of the 4 arms
    let g = sampled_field(d, 3);
    let plus = circle_average(&g, v, 1.5).unwrap();
    let mean = (g.value(site(3, -1)) + g.value(site(1, -1)) + g.value(site(2, 0)) + g.value(site(2, -2))) / 4.0;
    assert!((plus - mean).abs() < 1e-12);
    // geometry errors
    assert!(circle_average(&g, site(8, 0), 2.5).is_err());
    assert!(circle_average(&g, site(7, 0), 2.5).is_err());
    assert!(circle_average(&g, site(0, 0), 1.0).is_err());
}

#[test]
fn smoothed_average_reproduces_harmonic_fields() {
    let d = LatticeDomain::build_box(24).unwrap();
    let op = DirichletOperator::full_box(d).unwrap();
    for h in harmonic_test_family(d).unwrap() {
        let hf = harmonic_field(d, h.clone());
        let norm = h.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for v in [site(0, 0), site(-3, 5)] {
            let w = SmoothingWindow::raised_cosine(12.0, 0.25).unwrap();
            let x = smoothed_average(&hf, v, &w).unwrap();
            assert!(
                (x - hf.value(v)).abs() <= 1e-8 * norm,
                "X = {x}, h(v) = {}",
                hf.value(v)
            );
        }
    }
    drop(op);
}

#[test]
fn degenerate_window_equals_circle_average_bitwise() {
    let d = LatticeDomain::build_box(10).unwrap();
    let f = sampled_field(d, 9);
    let w = SmoothingWindow::single(5).unwrap();
    let a = smoothed_average(&f, site(1, 1), &w).unwrap();
    let b = circle_average(&f, site(1, 1), 5.0).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn window_weights_sum_to_one() {
    for (r, w) in [(12.0, 0.3), (57.3, 0.05), (200.0, 0.01), (2.2, 0.9)] {
        let win = SmoothingWindow::raised_cosine(r, w).unwrap();
        assert!((win.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(win.weights().iter().all(|&x| x >= 0.0));
        assert!(win.radii().iter().all(|&x| x >= 2));
    }
    // a too-narrow window at small radius is a parameter error
    assert!(SmoothingWindow::raised_cosine(57.3, 1e-4).is_err());
}

#[test]
fn schedule_arithmetic() {
    let s = ScaleSchedule::build(100.0, 0.1, 0.5).unwrap();
    // floor(0.5 * ln 100 / ln 1.1) = floor(24.158) = 24
    assert_eq!(s.m, 24);
    assert_eq!(s.radius(0), 100.0);
    let ratio = s.radius_plus(3) / s.radius_minus(3);
    let expect = (1.0 + 0.1f64.powi(3)) / (1.0 - 0.1f64.powi(3));
    assert!((ratio - expect).abs() < 1e-12);
    // radii strictly decreasing, r_M >= delta^c / (1+eps)
    for k in 1..=s.m {
        assert!(s.radius(k) < s.radius(k - 1));
    }
    assert!(s.radius(s.m) >= 100.0f64.powf(0.5) / 1.1);
    // parameter errors
    assert!(ScaleSchedule::build(100.0, 0.25, 0.5).is_err());
    assert!(ScaleSchedule::build(100.0, 0.1, 1.5).is_err());
    assert!(ScaleSchedule::build(1.1, 0.1, 0.5).is_err());
}

#[test]
fn increments_vanish_on_harmonic_fields() {
    let d = LatticeDomain::build_box(32).unwrap();
    let sched = ScaleSchedule::fit(32, 0.2, 0.3).unwrap();
    let k = 3.min(sched.m);
    let c = constant_field(d, 4.0);
    for u in increments(&c, site(0, 0), &sched, k).unwrap() {
        assert!(u.abs() < 1e-11);
    }
    let family = harmonic_test_family(d).unwrap();
    for h in family {
        let norm = h.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let hf = harmonic_field(d, h);
        for u in increments(&hf, site(0, 0), &sched, k).unwrap() {
            assert!(u.abs() <= 1e-8 * norm, "increment {u} on harmonic field");
        }
    }
    // K out of range
    let f = sampled_field(d, 1);
    assert!(increments(&f, site(0, 0), &sched, sched.m + 1).is_err());
    assert!(increments(&f, site(0, 0), &sched, 1).is_err());
    // windows must fit at v
    assert!(increments(&f, site(20, 0), &sched, k).is_err());
}

#[test]
fn increment_partial_sums_telescope() {
    let d = LatticeDomain::build_box(40).unwrap();
    let f = sampled_field(d, 17);
    let sched = ScaleSchedule::fit(40, 0.2, 0.25).unwrap();
    let k = 4.min(sched.m);
    let v = site(0, 0);
    let u = increments(&f, v, &sched, k).unwrap();
    let idx = |m: usize| m * sched.m / k;
    // U partial sums plus the (minus - plus) gap terms reach X_{r_M,+} - X_{r_0,-}
    let mut total: f64 = u.iter().sum();
    for m in 1..k {
        let wm = sched.window_minus(idx(m)).unwrap();
        let wp = sched.window_plus(idx(m)).unwrap();
        total += smoothed_average(&f, v, &wm).unwrap() - smoothed_average(&f, v, &wp).unwrap();
    }
    let lhs = smoothed_average(&f, v, &sched.window_plus(sched.m).unwrap()).unwrap()
        - smoothed_average(&f, v, &sched.window_minus(0).unwrap()).unwrap();
    assert!((total - lhs).abs() < 1e-10, "telescoping defect {}", (total - lhs).abs());
}

#[test]
fn telescoping_values_identity() {
    let d = LatticeDomain::build_box(40).unwrap();
    let sched = ScaleSchedule::fit(40, 0.2, 0.25).unwrap();
    let v = site(0, 0);
    // t = 0: all values are 1
    let f = sampled_field(d, 5);
    let t0 = telescoping_values(&f, v, &sched, 0.0).unwrap();
    assert!(t0.w.iter().chain(&t0.y).chain(&t0.z).all(|&x| x == 1.0));
    // constant field: W = Y = 1, Z = exp(t c)
    let c = constant_field(d, 0.3);
    let tc = telescoping_values(&c, v, &sched, 2.0).unwrap();
    assert!(tc.w.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    assert!(tc.y.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    assert!(tc.z.iter().all(|&x| (x - (0.6f64).exp()).abs() < 1e-10));
    // sampled field: product identity in log space
    for seed in [11, 12, 13] {
        let f = sampled_field(d, seed);
        for t in [0.7, -1.3, 40.0] {
            let tv = telescoping_values(&f, v, &sched, t).unwrap();
            let scale = tv.log_z.last().unwrap().abs().max(1.0);
            assert!(
                tv.identity_residual <= 1e-9 * scale,
                "residual {} at t = {t}",
                tv.identity_residual
            );
        }
    }
    // |t| over 100 rejected
    assert!(telescoping_values(&f, v, &sched, 101.0).is_err());
}

#[test]
fn increment_kernel_annihilates_harmonic_family() {
    let d = LatticeDomain::build_box(24).unwrap();
    let v = site(1, 2);
    let outer = SmoothingWindow::raised_cosine(16.0, 0.12).unwrap();
    let inner = SmoothingWindow::raised_cosine(6.0, 0.3).unwrap();
    let rho = increment_kernel(d, v, &outer, &inner).unwrap();
    assert!(rho.sum().abs() < 1e-11);
    let l1 = rho.l1_norm();
    for h in harmonic_test_family(d).unwrap() {
        let norm = h.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
        let dot = rho.apply_values(d, &h);
        assert!(
            dot.abs() <= 1e-8 * norm * l1,
            "kernel failed to annihilate harmonic field: {dot:.3e}"
        );
    }
    // nesting violations
    let too_big = SmoothingWindow::raised_cosine(15.0, 0.3).unwrap();
    assert!(increment_kernel(d, v, &outer, &too_big).is_err());
    let too_close = SmoothingWindow::raised_cosine(30.0, 0.12).unwrap();
    assert!(increment_kernel(d, v, &too_close, &inner).is_err());
}

#[test]
fn increment_kernel_matches_average_difference() {
    let d = LatticeDomain::build_box(24).unwrap();
    let v = site(-2, 0);
    let outer = SmoothingWindow::raised_cosine(14.0, 0.1).unwrap();
    let inner = SmoothingWindow::raised_cosine(5.0, 0.35).unwrap();
    let rho = increment_kernel(d, v, &outer, &inner).unwrap();
    for seed in [21, 22] {
        let f = sampled_field(d, seed);
        let lhs = rho.apply(&f);
        let rhs = smoothed_average(&f, v, &inner).unwrap() - smoothed_average(&f, v, &outer).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    }
    // csv export carries one row per support site
    let csv = rho.to_csv();
    assert_eq!(csv.lines().count(), rho.len() + 1);
    assert!(csv.starts_with("x,y,weight"));
}

#[test]
fn smoothed_kernel_consistent_with_average() {
    let d = LatticeDomain::build_box(16).unwrap();
    let v = site(0, 3);
    let w = SmoothingWindow::raised_cosine(8.0, 0.2).unwrap();
    let k = smoothed_kernel(d, v, &w).unwrap();
    assert!((k.sum() - 1.0).abs() < 1e-10);
    let f = sampled_field(d, 33);
    let a = k.apply(&f);
    let b = smoothed_average(&f, v, &w).unwrap();
    assert!((a - b).abs() < 1e-12);
}

//! Multiscale harmonic observables: circle averages, smoothed averages X_R,
//! the geometric scale schedule, increments U_m, the W/Y/Z telescoping
//! family and signed increment kernels.
//!
//! Circle averages use the harmonic measure of the l1 ball, which is
//! translation invariant for balls contained in the box, so kernels are
//! cached globally by integer ball radius. Smoothing windows hold the
//! integer radii in [(1-w)R, (1+w)R] with a raised-cosine taper; at small
//! radii the width is floored so the window always contains at least one
//! integer radius >= 2 (radius-1 circles are excluded: that ball has no
//! interior). The floor is recorded in the schedule and does not enter the
//! separation checks, which use the schedule's nominal width.

use crate::error::{Error, Result};
use crate::field::FieldState;
use crate::laplace;
use crate::lattice::{site, LatticeDomain, Site, SiteSet};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

/// How a set of weights was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightKind {
    HarmonicMeasure,
    SmoothedCircle,
    IncrementKernel,
    SiteIndicator,
    Custom,
}

/// A sparse signed measure rho on sites.
#[derive(Clone, Debug)]
pub struct HarmonicWeights {
    kind: WeightKind,
    entries: Vec<(Site, f64)>,
}

impl HarmonicWeights {
    /// Merges duplicate sites and sorts the support.
    pub fn new(kind: WeightKind, mut entries: Vec<(Site, f64)>) -> Self {
        entries.sort_by_key(|(s, _)| *s);
        let mut merged: Vec<(Site, f64)> = Vec::with_capacity(entries.len());
        for (s, w) in entries {
            match merged.last_mut() {
                Some((ls, lw)) if *ls == s => *lw += w,
                _ => merged.push((s, w)),
            }
        }
        HarmonicWeights { kind, entries: merged }
    }

    pub fn indicator(s: Site) -> Self {
        HarmonicWeights { kind: WeightKind::SiteIndicator, entries: vec![(s, 1.0)] }
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn entries(&self) -> &[(Site, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w).sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w.abs()).sum()
    }

    /// <rho, phi>.
    pub fn apply(&self, field: &FieldState) -> f64 {
        self.entries.iter().map(|(s, w)| w * field.value(*s)).sum()
    }

    /// <rho, h> for a raw site-indexed function on the domain.
    pub fn apply_values(&self, domain: LatticeDomain, values: &[f64]) -> f64 {
        self.entries.iter().map(|(s, w)| w * values[domain.index(*s)]).sum()
    }

    /// Sparse (x, y, weight) CSV, one row per support site.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,weight\n");
        for (s, w) in &self.entries {
            out.push_str(&format!("{},{},{:.17e}\n", s.x, s.y, w));
        }
        out
    }
}

/// Harmonic measure of the origin-centered l1 ball with integer radius
/// parameter q (sites of norm <= q), as center-relative offsets.
pub struct CircleKernel {
    pub q: u32,
    pub offsets: Vec<Site>,
    pub weights: Vec<f64>,
}

static CIRCLE_CACHE: OnceLock<RwLock<HashMap<u32, Arc<CircleKernel>>>> = OnceLock::new();

fn circle_cache() -> &'static RwLock<HashMap<u32, Arc<CircleKernel>>> {
    CIRCLE_CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Cached harmonic measure for the standard ball. q >= 1.
pub fn circle_kernel(q: u32) -> Result<Arc<CircleKernel>> {
    if q == 0 {
        return Err(Error::Geometry("radius-1 circle has no interior".into()));
    }
    if let Some(k) = circle_cache().read().unwrap().get(&q) {
        return Ok(k.clone());
    }
    let domain = LatticeDomain::build_box(q as i32)?;
    let ball = SiteSet::l1_ball(domain, site(0, 0), q as f64 + 0.5)?;
    let measure = laplace::harmonic_measure(&ball, site(0, 0))?;
    let (offsets, mut weights): (Vec<Site>, Vec<f64>) = measure.entries().iter().cloned().unzip();
    // the sum rule is verified to 1e-9 above; renormalize so constant fields
    // average exactly and kernel differences annihilate constants to ulp level
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    let kernel = Arc::new(CircleKernel { q, offsets, weights });
    let mut cache = circle_cache().write().unwrap();
    Ok(cache.entry(q).or_insert(kernel).clone())
}

fn ball_param(radius: f64) -> i64 {
    (radius.ceil() as i64) - 1
}

/// Circle average C_r(v, phi): harmonic-measure-weighted average of phi over
/// the boundary of B_r(v).
pub fn circle_average(field: &FieldState, v: Site, radius: f64) -> Result<f64> {
    let domain = field.domain();
    if !domain.contains(v) {
        return Err(Error::Geometry("circle center outside domain".into()));
    }
    let q = ball_param(radius);
    if q < 1 {
        return Err(Error::Geometry(format!("circle radius {radius} yields a ball with no interior")));
    }
    if q as u32 > domain.dist_to_boundary(v) {
        return Err(Error::Geometry(format!(
            "ball of radius {radius} at ({},{}) exits the domain",
            v.x, v.y
        )));
    }
    let kernel = circle_kernel(q as u32)?;
    let mut acc = 0.0;
    for (off, w) in kernel.offsets.iter().zip(&kernel.weights) {
        acc += w * field.value(site(v.x + off.x, v.y + off.y));
    }
    Ok(acc)
}

/// Radial taper shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Taper {
    RaisedCosine,
}

/// Weights f(r) >= 0 over the integer radii of [(1-w)R, (1+w)R], summing to 1.
#[derive(Clone, Debug)]
pub struct SmoothingWindow {
    pub nominal_radius: f64,
    pub rel_width: f64,
    pub taper: Taper,
    radii: Vec<u32>,
    weights: Vec<f64>,
}

impl SmoothingWindow {
    pub fn raised_cosine(radius: f64, rel_width: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Parameter(format!("window radius must be positive, got {radius}")));
        }
        if !(rel_width > 0.0 && rel_width < 1.0) {
            return Err(Error::Parameter(format!("window width must lie in (0,1), got {rel_width}")));
        }
        let lo = ((1.0 - rel_width) * radius).ceil().max(2.0) as u32;
        let hi = ((1.0 + rel_width) * radius).floor() as u32;
        if lo > hi {
            return Err(Error::Parameter(format!(
                "window [{:.3}, {:.3}] around R = {radius} contains no usable integer radius",
                (1.0 - rel_width) * radius,
                (1.0 + rel_width) * radius
            )));
        }
        let radii: Vec<u32> = (lo..=hi).collect();
        let mut weights: Vec<f64> = if radii.len() == 1 {
            vec![1.0]
        } else {
            radii
                .iter()
                .map(|&r| {
                    let u = ((r as f64 - radius) / (rel_width * radius)).clamp(-1.0, 1.0);
                    1.0 + (std::f64::consts::PI * u).cos()
                })
                .collect()
        };
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            weights = vec![1.0 / radii.len() as f64; radii.len()];
        } else {
            for w in weights.iter_mut() {
                *w /= total;
            }
        }
        Ok(SmoothingWindow { nominal_radius: radius, rel_width, taper: Taper::RaisedCosine, radii, weights })
    }

    /// Degenerate single-radius window.
    pub fn single(radius: u32) -> Result<Self> {
        if radius < 2 {
            return Err(Error::Parameter("single-radius window needs radius >= 2".into()));
        }
        Ok(SmoothingWindow {
            nominal_radius: radius as f64,
            rel_width: 0.0,
            taper: Taper::RaisedCosine,
            radii: vec![radius],
            weights: vec![1.0],
        })
    }

    pub fn radii(&self) -> &[u32] {
        &self.radii
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn min_radius(&self) -> u32 {
        self.radii[0]
    }

    pub fn max_radius(&self) -> u32 {
        *self.radii.last().unwrap()
    }

    /// Largest integer ball parameter this window touches.
    pub fn max_ball_param(&self) -> u32 {
        self.max_radius() - 1
    }
}

/// Smoothed harmonic average X_R(v, phi).
pub fn smoothed_average(field: &FieldState, v: Site, window: &SmoothingWindow) -> Result<f64> {
    let mut acc = 0.0;
    for (&r, &w) in window.radii().iter().zip(window.weights()) {
        acc += w * circle_average(field, v, r as f64)?;
    }
    Ok(acc)
}

/// The smoothed average as an explicit signed measure on sites around v.
pub fn smoothed_kernel(domain: LatticeDomain, v: Site, window: &SmoothingWindow) -> Result<HarmonicWeights> {
    if window.max_ball_param() > domain.dist_to_boundary(v) {
        return Err(Error::Geometry("smoothing window exits the domain".into()));
    }
    let mut entries = Vec::new();
    for (&r, &fw) in window.radii().iter().zip(window.weights()) {
        let kernel = circle_kernel(r - 1)?;
        for (off, w) in kernel.offsets.iter().zip(&kernel.weights) {
            entries.push((site(v.x + off.x, v.y + off.y), fw * w));
        }
    }
    Ok(HarmonicWeights::new(WeightKind::SmoothedCircle, entries))
}

/// Geometric scale schedule r_k = (1+eps)^{-k} Delta with offset radii
/// r_{k,+-} = (1 +- eps^3) r_k and window width eps^4 (floored per radius so
/// windows stay non-empty at desk scales).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScaleSchedule {
    pub delta: f64,
    pub epsilon: f64,
    pub c: f64,
    /// M = floor((1-c) log Delta / log(1+eps)).
    pub m: usize,
    /// Nominal window width (defaults to eps^4).
    pub base_width: f64,
}

/// Per-radius width floor: guarantees >= 1 usable integer radius.
const WIDTH_FLOOR_NUM: f64 = 1.8;

impl ScaleSchedule {
    pub fn build(delta: f64, epsilon: f64, c: f64) -> Result<Self> {
        Self::build_with_width(delta, epsilon, c, epsilon.powi(4))
    }

    pub fn build_with_width(delta: f64, epsilon: f64, c: f64, base_width: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 0.2) {
            return Err(Error::Parameter(format!("epsilon must lie in (0, 0.2], got {epsilon}")));
        }
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::Parameter(format!("c must lie in (0,1), got {c}")));
        }
        if delta < (1.0 + epsilon) * (1.0 + epsilon) {
            return Err(Error::Parameter(format!("delta = {delta} below (1+eps)^2")));
        }
        let m = ((1.0 - c) * delta.ln() / (1.0 + epsilon).ln()).floor() as usize;
        if m < 1 {
            return Err(Error::Parameter("schedule would have no scales (M < 1)".into()));
        }
        let sched = ScaleSchedule { delta, epsilon, c, m, base_width };
        // innermost radius must still support a radius-2 circle window
        if sched.radius(m) < 1.5 {
            return Err(Error::Parameter(format!(
                "innermost radius r_M = {:.3} cannot hold an integer circle",
                sched.radius(m)
            )));
        }
        // separation of consecutive scales at the nominal width: the window
        // around r_{k+1} (+ side) must end strictly inside the window around
        // r_k (- side)
        let w = base_width;
        if (1.0 + 2.0 * w) * (1.0 + epsilon.powi(3)) >= (1.0 - 2.0 * w) * (1.0 - epsilon.powi(3)) * (1.0 + epsilon)
        {
            return Err(Error::Parameter(
                "scale separation violated: consecutive windows overlap at the nominal width".into(),
            ));
        }
        // every window must be constructible
        for k in 0..=m {
            sched.window_plus(k)?;
            sched.window_minus(k)?;
        }
        Ok(sched)
    }

    /// Largest schedule fitting circles at distance `dist` from the boundary:
    /// Delta is shrunk until the outermost window ball stays inside.
    pub fn fit(dist: u32, epsilon: f64, c: f64) -> Result<Self> {
        let mut delta = dist as f64;
        for _ in 0..200 {
            let sched = Self::build(delta, epsilon, c)?;
            if sched.max_ball_param()? <= dist {
                return Ok(sched);
            }
            delta *= 0.995;
        }
        Err(Error::Parameter(format!("no schedule fits within distance {dist}")))
    }

    pub fn radius(&self, k: usize) -> f64 {
        self.delta / (1.0 + self.epsilon).powi(k as i32)
    }

    pub fn radius_plus(&self, k: usize) -> f64 {
        (1.0 + self.epsilon.powi(3)) * self.radius(k)
    }

    pub fn radius_minus(&self, k: usize) -> f64 {
        (1.0 - self.epsilon.powi(3)) * self.radius(k)
    }

    fn effective_width(&self, radius: f64) -> f64 {
        self.base_width.max(WIDTH_FLOOR_NUM / radius).min(0.95)
    }

    pub fn window_plus(&self, k: usize) -> Result<SmoothingWindow> {
        let r = self.radius_plus(k);
        SmoothingWindow::raised_cosine(r, self.effective_width(r))
    }

    pub fn window_minus(&self, k: usize) -> Result<SmoothingWindow> {
        let r = self.radius_minus(k);
        SmoothingWindow::raised_cosine(r, self.effective_width(r))
    }

    /// Largest ball parameter used by any window of the schedule.
    pub fn max_ball_param(&self) -> Result<u32> {
        Ok(self.window_minus(0)?.max_ball_param())
    }
}

/// Increments U_m = X_{r_{[mM/K],+}} - X_{r_{[(m-1)M/K],-}} for m = 1..K.
pub fn increments(field: &FieldState, v: Site, schedule: &ScaleSchedule, k_steps: usize) -> Result<Vec<f64>> {
    if k_steps < 2 || k_steps > schedule.m {
        return Err(Error::Parameter(format!(
            "K must lie in [2, M = {}], got {k_steps}",
            schedule.m
        )));
    }
    let dist = field.domain().dist_to_boundary(v);
    if schedule.max_ball_param()? > dist {
        return Err(Error::Geometry(format!(
            "schedule windows exceed distance to boundary at ({},{})",
            v.x, v.y
        )));
    }
    let idx = |m: usize| m * schedule.m / k_steps;
    let mut out = Vec::with_capacity(k_steps);
    for m in 1..=k_steps {
        let inner = smoothed_average(field, v, &schedule.window_plus(idx(m))?)?;
        let outer = smoothed_average(field, v, &schedule.window_minus(idx(m - 1))?)?;
        out.push(inner - outer);
    }
    Ok(out)
}

/// The multiplicative telescoping family W_j, Y_j, Z_j at parameter t.
#[derive(Clone, Debug)]
pub struct TelescopingValues {
    pub t: f64,
    /// log W_j = t (X_{r_{j,+}} - X_{r_{j-1,-}}), j = 1..M.
    pub log_w: Vec<f64>,
    /// log Y_j = t (X_{r_{j,-}} - X_{r_{j,+}}), j = 1..M.
    pub log_y: Vec<f64>,
    /// log Z_j = t X_{r_{j,+}}, j = 1..M.
    pub log_z: Vec<f64>,
    /// t X_{r_{0,-}}.
    pub log_x0_minus: f64,
    pub w: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// Any exp() overflowed; consume the log fields instead.
    pub overflowed: bool,
    /// |log Z_M - (sum log W + sum_{j<M} log Y + t X_{r_{0,-}})|.
    pub identity_residual: f64,
}

pub fn telescoping_values(
    field: &FieldState,
    v: Site,
    schedule: &ScaleSchedule,
    t: f64,
) -> Result<TelescopingValues> {
    if !(t.is_finite() && t.abs() <= 100.0) {
        return Err(Error::Parameter(format!("|t| must be <= 100, got {t}")));
    }
    let dist = field.domain().dist_to_boundary(v);
    if schedule.max_ball_param()? > dist {
        return Err(Error::Geometry("schedule windows exceed distance to boundary".into()));
    }
    let m = schedule.m;
    // the identity never touches X_{r_{0,+}}, whose window may poke past the
    // fitted distance; index 0 of x_plus is a placeholder
    let mut x_plus = vec![0.0; 1];
    let mut x_minus = Vec::with_capacity(m + 1);
    x_minus.push(smoothed_average(field, v, &schedule.window_minus(0)?)?);
    for k in 1..=m {
        x_plus.push(smoothed_average(field, v, &schedule.window_plus(k)?)?);
        x_minus.push(smoothed_average(field, v, &schedule.window_minus(k)?)?);
    }
    let log_w: Vec<f64> = (1..=m).map(|j| t * (x_plus[j] - x_minus[j - 1])).collect();
    let log_y: Vec<f64> = (1..=m).map(|j| t * (x_minus[j] - x_plus[j])).collect();
    let log_z: Vec<f64> = (1..=m).map(|j| t * x_plus[j]).collect();
    let log_x0_minus = t * x_minus[0];
    let total: f64 = log_w.iter().sum::<f64>() + log_y[..m - 1].iter().sum::<f64>() + log_x0_minus;
    let identity_residual = (log_z[m - 1] - total).abs();
    let exp_all = |v: &[f64]| v.iter().map(|&l| l.exp()).collect::<Vec<f64>>();
    let (w, y, z) = (exp_all(&log_w), exp_all(&log_y), exp_all(&log_z));
    let overflowed =
        w.iter().chain(&y).chain(&z).any(|x| !x.is_finite());
    Ok(TelescopingValues {
        t,
        log_w,
        log_y,
        log_z,
        log_x0_minus,
        w,
        y,
        z,
        overflowed,
        identity_residual,
    })
}

/// Signed kernel rho with <rho, phi> = X_{R2}(v, phi) - X_{R1}(v, phi),
/// R2 < R1. Annihilates discrete harmonic functions.
pub fn increment_kernel(
    domain: LatticeDomain,
    v: Site,
    outer: &SmoothingWindow,
    inner: &SmoothingWindow,
) -> Result<HarmonicWeights> {
    let (r1, r2) = (outer.nominal_radius, inner.nominal_radius);
    let (w1, w2) = (outer.rel_width, inner.rel_width);
    if (1.0 + 2.0 * w2) * r2 >= (1.0 - 2.0 * w1) * r1 {
        return Err(Error::Parameter(format!(
            "increment kernel nesting violated: (1+2w)R2 = {:.3} not below (1-2w)R1 = {:.3}",
            (1.0 + 2.0 * w2) * r2,
            (1.0 - 2.0 * w1) * r1
        )));
    }
    if !domain.contains(v) || (1.0 + 2.0 * w1) * r1 >= domain.dist_to_boundary(v) as f64 + 1.0 {
        return Err(Error::Parameter("increment kernel outer window too close to the boundary".into()));
    }
    let inner_k = smoothed_kernel(domain, v, inner)?;
    let outer_k = smoothed_kernel(domain, v, outer)?;
    let mut entries = inner_k.entries().to_vec();
    entries.extend(outer_k.entries().iter().map(|(s, w)| (*s, -w)));
    Ok(HarmonicWeights::new(WeightKind::IncrementKernel, entries))
}

/// The harmonic test family: 1, x, y, xy, x^2-y^2, Re/Im (x+iy)^3 and five
/// seeded random harmonic extensions, as site-indexed value vectors.
pub fn harmonic_test_family(domain: LatticeDomain) -> Result<Vec<Vec<f64>>> {
    let polys: Vec<Box<dyn Fn(Site) -> f64>> = vec![
        Box::new(|_| 1.0),
        Box::new(|s| s.x as f64),
        Box::new(|s| s.y as f64),
        Box::new(|s| (s.x * s.y) as f64),
        Box::new(|s| (s.x * s.x - s.y * s.y) as f64),
        Box::new(|s| {
            let (x, y) = (s.x as f64, s.y as f64);
            x * x * x - 3.0 * x * y * y
        }),
        Box::new(|s| {
            let (x, y) = (s.x as f64, s.y as f64);
            3.0 * x * x * y - y * y * y
        }),
    ];
    let mut family: Vec<Vec<f64>> = polys
        .iter()
        .map(|f| domain.sites().map(f).collect())
        .collect();
    let op = laplace::DirichletOperator::full_box(domain)?;
    for seed in 0..5u64 {
        let n_b = domain.num_boundary();
        let data: Vec<f64> = (0..n_b)
            .map(|i| {
                let h = crate::sampler::mix64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(i as u64));
                (h as f64 / u64::MAX as f64) * 2.0 - 1.0
            })
            .collect();
        let ext = op.harmonic_extension(&data)?;
        let mut values = vec![0.0; domain.num_sites()];
        for (loc, &val) in ext.iter().enumerate() {
            values[domain.index(op.set().site(loc))] = val;
        }
        family.push(values);
    }
    Ok(family)
}

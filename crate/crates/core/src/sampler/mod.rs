//! MCMC sampling of the Ginzburg-Landau measure: checkerboard Metropolis and
//! heat-bath kernels, subdomain Gibbs resampling, chain diagnostics and a
//! Fourier-accelerated HMC kernel for production ensembles.
//!
//! Parallel determinism: site updates draw their randomness from a counter
//! generator keyed by (chain stream, sweep index, site index), so a sweep's
//! output is independent of thread scheduling. Chain seeds derive from the
//! master seed by the documented splitmix64 rule in [`split_seed`].

mod hmc;

pub use hmc::HmcDriver;

use crate::error::{Error, Result};
use crate::field::{BoundaryCondition, FieldState};
use crate::lattice::{LatticeDomain, Site, SiteSet};
use crate::potential::Potential;
use crate::stats;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicI64, AtomicUsize, Ordering};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer: one full step of the splitmix64 stream seeded at z.
pub fn mix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for a parallel stream: mix64(master ^ mix64(stream + 1)).
pub fn split_seed(master: u64, stream: u64) -> u64 {
    mix64(master ^ mix64(stream.wrapping_add(1)))
}

/// Cheap counter RNG for per-site update randomness.
struct CounterRng {
    state: u64,
}

impl CounterRng {
    fn new(seed: u64) -> Self {
        CounterRng { state: seed }
    }

    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on (0, 1].
    fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 1.0) * (1.0 / 9007199254740992.0)
    }

    fn next_normal(&mut self) -> f64 {
        let u1 = self.next_open01();
        let u2 = self.next_open01();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Metropolis,
    HeatBath,
    /// Hamiltonian updates with the quadratic-part Laplacian as mass matrix;
    /// one "sweep" is one trajectory.
    FourierHmc,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub sweeps_burnin: u64,
    pub sweeps_between_samples: u64,
    pub n_samples: usize,
    #[serde(default = "default_proposal_std")]
    pub proposal_std: f64,
    #[serde(default = "default_kernel")]
    pub kernel: KernelKind,
    pub seed: u64,
    #[serde(default = "default_chains")]
    pub n_chains: usize,
    #[serde(default = "default_true")]
    pub auto_tune: bool,
    #[serde(default = "default_true")]
    pub track_diagnostics: bool,
    /// Mean leapfrog steps per HMC trajectory.
    #[serde(default = "default_hmc_steps")]
    pub hmc_steps: usize,
}

fn default_proposal_std() -> f64 {
    1.0
}
fn default_kernel() -> KernelKind {
    KernelKind::Metropolis
}
fn default_chains() -> usize {
    2
}
fn default_true() -> bool {
    true
}
fn default_hmc_steps() -> usize {
    8
}

impl SamplerConfig {
    pub fn new(sweeps_burnin: u64, sweeps_between_samples: u64, n_samples: usize, seed: u64) -> Self {
        SamplerConfig {
            sweeps_burnin,
            sweeps_between_samples,
            n_samples,
            proposal_std: default_proposal_std(),
            kernel: default_kernel(),
            seed,
            n_chains: default_chains(),
            auto_tune: true,
            track_diagnostics: true,
            hmc_steps: default_hmc_steps(),
        }
    }

    pub fn with_kernel(mut self, kernel: KernelKind) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_chains(mut self, n: usize) -> Self {
        self.n_chains = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.sweeps_between_samples == 0 || self.n_chains == 0 {
            return Err(Error::Parameter("sampler counts must be positive".into()));
        }
        if !(self.proposal_std > 0.0 && self.proposal_std <= 100.0) {
            return Err(Error::Parameter(format!(
                "proposal_std must lie in (0, 100], got {}",
                self.proposal_std
            )));
        }
        if self.hmc_steps == 0 {
            return Err(Error::Parameter("hmc_steps must be positive".into()));
        }
        Ok(())
    }

    /// Burn-in default: O(N^2) sweeps for quadratic V, scaled by c_plus/c_minus.
    pub fn default_burnin(domain: LatticeDomain, p: &Potential, kernel: KernelKind) -> u64 {
        let n = domain.half_width() as u64;
        let cond = (p.c_plus() / p.c_minus()).ceil() as u64;
        match kernel {
            KernelKind::FourierHmc => 200 * cond,
            _ => (2 * n * n).max(200) * cond,
        }
    }
}

/// Mixing diagnostics for one chain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub acceptance: Option<f64>,
    pub tau_center: Option<f64>,
    pub tau_sup: Option<f64>,
    pub ess_center: Option<f64>,
    pub ess_sup: Option<f64>,
    pub n_samples: usize,
    pub tuned_scale: f64,
    pub degenerate: bool,
    /// Set when any per-observable ESS drops below 100.
    pub flagged: bool,
}

/// Windowed autocorrelation diagnostics for an observable trace.
pub fn diagnostics(trace: &[f64]) -> Result<ChainDiagnostics> {
    if trace.len() < 100 {
        return Err(Error::Input(format!("trace too short for diagnostics: {}", trace.len())));
    }
    let a = stats::integrated_autocorr(trace);
    Ok(ChainDiagnostics {
        acceptance: None,
        tau_center: (!a.degenerate).then_some(a.tau_int),
        tau_sup: None,
        ess_center: (!a.degenerate).then_some(a.ess),
        ess_sup: None,
        n_samples: trace.len(),
        tuned_scale: 0.0,
        degenerate: a.degenerate,
        flagged: a.degenerate || a.ess < 100.0,
    })
}

/// Shared-pointer wrapper for the checkerboard update. Same-parity sites are
/// never lattice neighbors, so concurrent writes touch disjoint entries and
/// reads only see the opposite (frozen) parity.
struct SharedField(*mut f64);
unsafe impl Sync for SharedField {}

impl SharedField {
    fn get(&self) -> *mut f64 {
        self.0
    }
}

struct ParityPlan {
    /// Domain value indices per parity, row-major order.
    even: Vec<u32>,
    odd: Vec<u32>,
    side: usize,
}

impl ParityPlan {
    fn new(domain: LatticeDomain, interior: impl Iterator<Item = Site>) -> Self {
        let mut even = Vec::new();
        let mut odd = Vec::new();
        for s in interior {
            let idx = domain.index(s) as u32;
            if (s.x + s.y).rem_euclid(2) == 0 {
                even.push(idx);
            } else {
                odd.push(idx);
            }
        }
        ParityPlan { even, odd, side: domain.side() }
    }
}

enum LocalKernel {
    Metropolis { std: f64 },
    HeatBath,
}

/// One checkerboard pass over the listed sites. Returns accepted updates.
fn checkerboard_pass(
    values: &mut [f64],
    plan: &ParityPlan,
    p: &Potential,
    kernel: &LocalKernel,
    stream_seed: u64,
    sweep_index: u64,
    parallel: bool,
) -> Result<usize> {
    let accepts = AtomicUsize::new(0);
    let bad_site = AtomicI64::new(-1);
    let side = plan.side;
    let ptr = SharedField(values.as_mut_ptr());
    let update = |&idx: &u32| {
        let idx = idx as usize;
        let mut rng = CounterRng::new(
            stream_seed ^ mix64(sweep_index) ^ (idx as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93),
        );
        // neighbor values: +-1 along y, +-side along x
        unsafe {
            let base = ptr.get();
            let cur = *base.add(idx);
            let nbrs = [
                *base.add(idx + side),
                *base.add(idx - side),
                *base.add(idx + 1),
                *base.add(idx - 1),
            ];
            let local = |t: f64| nbrs.iter().map(|&b| p.v(t - b)).sum::<f64>();
            match kernel {
                LocalKernel::Metropolis { std } => {
                    let proposal = cur + std * rng.next_normal();
                    let delta = local(proposal) - local(cur);
                    if !delta.is_finite() {
                        bad_site.store(idx as i64, Ordering::Relaxed);
                        return;
                    }
                    if delta <= 0.0 || rng.next_open01().ln() < -delta {
                        accepts.fetch_add(1, Ordering::Relaxed);
                        *base.add(idx) = proposal;
                    }
                }
                LocalKernel::HeatBath => {
                    // conditional density ~ exp(-sum_y V(t - phi_y)) is
                    // log-concave; sample by rejection under the Gaussian
                    // envelope N(mode, 1/(4 c_minus))
                    let dlocal = |t: f64| nbrs.iter().map(|&b| p.dv(t - b)).sum::<f64>();
                    let d2local = |t: f64| nbrs.iter().map(|&b| p.d2v(t - b)).sum::<f64>();
                    let mut mode = nbrs.iter().sum::<f64>() / 4.0;
                    for _ in 0..50 {
                        let g = dlocal(mode);
                        let step = g / d2local(mode);
                        mode -= step;
                        if step.abs() < 1e-13 {
                            break;
                        }
                    }
                    let e_mode = local(mode);
                    let sigma = 1.0 / (4.0 * p.c_minus()).sqrt();
                    let two_cm = 2.0 * p.c_minus();
                    let mut ok = false;
                    for _ in 0..10_000 {
                        let t = mode + sigma * rng.next_normal();
                        let log_ratio = -(local(t) - e_mode) + two_cm * (t - mode) * (t - mode);
                        if rng.next_open01().ln() < log_ratio {
                            *base.add(idx) = t;
                            ok = true;
                            break;
                        }
                    }
                    if ok {
                        accepts.fetch_add(1, Ordering::Relaxed);
                    } else {
                        bad_site.store(idx as i64, Ordering::Relaxed);
                    }
                }
            }
        }
    };
    for sites in [&plan.even, &plan.odd] {
        if parallel && sites.len() > 4096 {
            sites.par_iter().for_each(update);
        } else {
            sites.iter().for_each(update);
        }
    }
    let bad = bad_site.load(Ordering::Relaxed);
    if bad >= 0 {
        let side = plan.side as i64;
        let n = (side - 1) / 2;
        return Err(Error::Numerical {
            site: crate::lattice::site((bad / side - n) as i32, (bad % side - n) as i32),
            msg: "non-finite energy change or heat-bath rejection overflow".into(),
        });
    }
    Ok(accepts.load(Ordering::Relaxed))
}

/// One full checkerboard sweep of the domain interior (all even-parity sites,
/// then all odd). Boundary sites are never touched. Randomness is a pure
/// function of (stream_seed, sweep_index, site), making parallel sweeps
/// reproducible. Returns the acceptance fraction.
pub fn sweep(
    state: &mut FieldState,
    p: &Potential,
    kernel: KernelKind,
    proposal_std: f64,
    stream_seed: u64,
    sweep_index: u64,
) -> Result<f64> {
    let domain = state.domain();
    let plan = ParityPlan::new(domain, domain.interior_sites());
    let local = match kernel {
        KernelKind::Metropolis => LocalKernel::Metropolis { std: proposal_std },
        KernelKind::HeatBath => LocalKernel::HeatBath,
        KernelKind::FourierHmc => {
            return Err(Error::Parameter("FourierHmc is driven through Chain, not sweep()".into()))
        }
    };
    let n_sites = plan.even.len() + plan.odd.len();
    let acc = checkerboard_pass(state.values_mut(), &plan, p, &local, stream_seed, sweep_index, true)?;
    state.lineage_mut().sweeps += 1;
    Ok(acc as f64 / n_sites as f64)
}

/// Raster-order single-threaded sweep; targets the same stationary law as
/// the checkerboard sweep and exists as its cross-check.
pub fn sweep_sequential(
    state: &mut FieldState,
    p: &Potential,
    kernel: KernelKind,
    proposal_std: f64,
    stream_seed: u64,
    sweep_index: u64,
) -> Result<f64> {
    let domain = state.domain();
    let local = match kernel {
        KernelKind::Metropolis => LocalKernel::Metropolis { std: proposal_std },
        KernelKind::HeatBath => LocalKernel::HeatBath,
        KernelKind::FourierHmc => {
            return Err(Error::Parameter("FourierHmc is driven through Chain, not sweep".into()))
        }
    };
    let sites: Vec<u32> = domain.interior_sites().map(|s| domain.index(s) as u32).collect();
    let plan = ParityPlan { even: sites, odd: Vec::new(), side: domain.side() };
    let n = plan.even.len();
    let acc =
        checkerboard_pass(state.values_mut(), &plan, p, &local, stream_seed, sweep_index, false)?;
    state.lineage_mut().sweeps += 1;
    Ok(acc as f64 / n as f64)
}

/// A single MCMC chain targeting the Ginzburg-Landau measure on the box.
pub struct Chain {
    state: FieldState,
    potential: Potential,
    kernel: KernelKind,
    plan: ParityPlan,
    scale: f64,
    tuning: bool,
    stream_seed: u64,
    sweep_index: u64,
    acc_sum: f64,
    acc_count: u64,
    hmc: Option<HmcDriver>,
}

impl Chain {
    pub fn new(
        domain: LatticeDomain,
        potential: Potential,
        boundary: &BoundaryCondition,
        cfg: &SamplerConfig,
        stream: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let stream_seed = split_seed(cfg.seed, stream);
        let mut state = FieldState::new(domain, boundary);
        state.lineage_mut().master_seed = cfg.seed;
        state.lineage_mut().stream = stream;
        let hmc = match cfg.kernel {
            KernelKind::FourierHmc => {
                Some(HmcDriver::new(domain, potential.clone(), cfg.hmc_steps, stream_seed)?)
            }
            _ => None,
        };
        Ok(Chain {
            state,
            potential,
            kernel: cfg.kernel,
            plan: ParityPlan::new(domain, domain.interior_sites()),
            scale: cfg.proposal_std,
            tuning: cfg.auto_tune,
            stream_seed,
            sweep_index: 0,
            acc_sum: 0.0,
            acc_count: 0,
            hmc,
        })
    }

    pub fn state(&self) -> &FieldState {
        &self.state
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.acc_count == 0 {
            f64::NAN
        } else {
            self.acc_sum / self.acc_count as f64
        }
    }

    pub fn scale(&self) -> f64 {
        match &self.hmc {
            Some(h) => h.step_size(),
            None => self.scale,
        }
    }

    /// Advances the chain by one sweep (one trajectory for HMC).
    pub fn step(&mut self) -> Result<()> {
        let acc = match (&mut self.hmc, self.kernel) {
            (Some(h), _) => h.trajectory(&mut self.state, self.tuning)?,
            (None, kernel) => {
                let local = match kernel {
                    KernelKind::Metropolis => LocalKernel::Metropolis { std: self.scale },
                    KernelKind::HeatBath => LocalKernel::HeatBath,
                    KernelKind::FourierHmc => unreachable!(),
                };
                let n = self.plan.even.len() + self.plan.odd.len();
                let got = checkerboard_pass(
                    self.state.values_mut(),
                    &self.plan,
                    &self.potential,
                    &local,
                    self.stream_seed,
                    self.sweep_index,
                    true,
                )?;
                self.state.lineage_mut().sweeps += 1;
                got as f64 / n as f64
            }
        };
        self.sweep_index += 1;
        self.acc_sum += acc;
        self.acc_count += 1;
        // multiplicative proposal adaptation toward 0.45 acceptance,
        // burn-in only (tuning is frozen before sampling starts)
        if self.tuning && self.kernel == KernelKind::Metropolis {
            self.scale = (self.scale * (0.6 * (acc - 0.45)).exp()).clamp(1e-3, 100.0);
        }
        Ok(())
    }

    pub fn run(&mut self, sweeps: u64) -> Result<()> {
        for _ in 0..sweeps {
            self.step()?;
        }
        Ok(())
    }

    /// Burn-in with adaptation, then freeze the kernel scale.
    pub fn burn_in(&mut self, sweeps: u64) -> Result<()> {
        self.run(sweeps)?;
        self.tuning = false;
        if let Some(h) = &mut self.hmc {
            h.freeze();
        }
        self.acc_sum = 0.0;
        self.acc_count = 0;
        Ok(())
    }
}

/// Re-equilibrates the sites strictly inside `sub` from the conditional law
/// given the current values on the inner boundary of `sub`; everything else
/// is untouched bit-exactly.
pub fn resample_subdomain(
    state: &FieldState,
    sub: &SiteSet,
    p: &Potential,
    sweeps: u64,
    kernel: KernelKind,
    proposal_std: f64,
    stream_seed: u64,
) -> Result<FieldState> {
    if sub.interior().is_empty() {
        return Err(Error::Geometry("subdomain has no interior to resample".into()));
    }
    let domain = state.domain();
    let local = match kernel {
        KernelKind::Metropolis => LocalKernel::Metropolis { std: proposal_std },
        KernelKind::HeatBath => LocalKernel::HeatBath,
        KernelKind::FourierHmc => {
            return Err(Error::Parameter("subdomain resampling uses local kernels only".into()))
        }
    };
    let mut out = state.clone();
    let plan = ParityPlan::new(domain, sub.interior().iter().map(|&l| sub.site(l as usize)));
    for sweep_index in 0..sweeps {
        checkerboard_pass(out.values_mut(), &plan, p, &local, stream_seed, sweep_index, true)?;
    }
    out.lineage_mut().sweeps += sweeps;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::site;

    #[test]
    fn seed_split_is_stable() {
        // the documented rule: mix64(master ^ mix64(stream + 1))
        assert_eq!(split_seed(42, 0), mix64(42 ^ mix64(1)));
        assert_ne!(split_seed(42, 0), split_seed(42, 1));
        assert_ne!(split_seed(42, 0), split_seed(43, 0));
    }

    #[test]
    fn sweep_deterministic_and_pins_boundary() {
        let d = LatticeDomain::build_box(4).unwrap();
        let p = Potential::dipole_gas(0.5).unwrap();
        let mut a = FieldState::new(d, &BoundaryCondition::constant(d, 0.25));
        let mut b = a.clone();
        for k in 0..20 {
            sweep(&mut a, &p, KernelKind::Metropolis, 0.8, 7, k).unwrap();
            sweep(&mut b, &p, KernelKind::Metropolis, 0.8, 7, k).unwrap();
        }
        assert_eq!(a.values(), b.values());
        for s in d.boundary_sites() {
            assert_eq!(a.value(s), 0.25);
        }
        // different seed diverges
        let mut c = FieldState::new(d, &BoundaryCondition::constant(d, 0.25));
        for k in 0..20 {
            sweep(&mut c, &p, KernelKind::Metropolis, 0.8, 8, k).unwrap();
        }
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn quadratic_single_site_variance() {
        // 3x3 box: the single interior site is Gaussian with variance 1/4
        let d = LatticeDomain::build_box(1).unwrap();
        let p = Potential::quadratic();
        let mut state = FieldState::new(d, &BoundaryCondition::Zero);
        let mut sum2 = 0.0;
        let n_sweeps = 200_000u64;
        for k in 0..n_sweeps {
            sweep(&mut state, &p, KernelKind::HeatBath, 1.0, 11, k).unwrap();
            let v = state.value(site(0, 0));
            sum2 += v * v;
        }
        let var = sum2 / n_sweeps as f64;
        // heat-bath draws are iid here; 3 sigma on the variance of a Gaussian
        let se = 0.25 * (2.0 / n_sweeps as f64).sqrt();
        assert!((var - 0.25).abs() < 3.0 * se + 1e-3, "var = {var}");
    }

    #[test]
    fn resample_leaves_disjoint_sites_untouched() {
        let d = LatticeDomain::build_box(6).unwrap();
        let p = Potential::quadratic();
        let mut state = FieldState::new(d, &BoundaryCondition::Zero);
        for k in 0..50 {
            sweep(&mut state, &p, KernelKind::Metropolis, 1.0, 3, k).unwrap();
        }
        let sub = SiteSet::l1_ball(d, site(-2, -2), 3.5).unwrap();
        let out = resample_subdomain(&state, &sub, &p, 40, KernelKind::HeatBath, 1.0, 99).unwrap();
        let mut changed = 0;
        for s in d.sites() {
            let inside_strict =
                sub.local_index(s).map(|l| sub.is_interior_local(l)).unwrap_or(false);
            if inside_strict {
                changed += (out.value(s) != state.value(s)) as usize;
            } else {
                assert_eq!(out.value(s), state.value(s), "site ({},{}) moved", s.x, s.y);
            }
        }
        assert!(changed > 0);
    }

    #[test]
    fn diagnostics_requires_long_trace() {
        assert!(diagnostics(&[1.0; 50]).is_err());
        let d = diagnostics(&[0.5; 200]).unwrap();
        assert!(d.degenerate && d.flagged);
    }
}

//! Exact discrete-Dirichlet linear algebra: Green's functions, harmonic
//! extension, harmonic measure, and exact Gaussian (DGFF) sampling.
//!
//! The Gibbs energy with V(x) = x^2/2 is (1/2) phi' L phi for the graph
//! Laplacian L of the box (edges to the pinned ring contribute to the
//! diagonal only), so the Gaussian field has covariance L^{-1}. Everything
//! in this module is an oracle for that law: rectangular interiors use the
//! exact sine-basis factorization, general sets use conjugate gradients.

mod cg;
mod dst;

pub use dst::Dst2d;

use crate::error::{Error, Result};
use crate::field::{BoundaryCondition, FieldState};
use crate::harmonic::{HarmonicWeights, WeightKind};
use crate::lattice::{LatticeDomain, Site, SiteSet};
use crate::stats::det_dot;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::sync::Arc;

/// Infinity-norm residual contract for every solve exposed here.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Internal CG target, tighter than the contract we verify.
const CG_TOL: f64 = 1e-12;

struct SpectralPlan {
    nx: usize,
    ny: usize,
    dst: Dst2d,
    /// Eigenvalue per interior slot (row-major over the rectangle).
    lam: Vec<f64>,
    inv_sqrt_lam: Vec<f64>,
}

/// The Dirichlet Laplacian of a site set, restricted to the set's interior,
/// with a reusable factorization handle. Immutable after construction; safe
/// for concurrent solves.
pub struct DirichletOperator {
    set: Arc<SiteSet>,
    /// set-local index per interior slot (ascending)
    int_local: Vec<u32>,
    /// interior slot per set-local index, or -1
    slot_of_local: Vec<i32>,
    /// boundary-enumeration index per set-local index, or -1
    bnd_of_local: Vec<i32>,
    /// per interior slot: neighbor interior slots (-1 when that neighbor is
    /// set-boundary); every interior site has exactly 4 in-set neighbors
    nbr_slots: Vec<[i32; 4]>,
    /// per interior slot: set-local indices of boundary neighbors (-1 where interior)
    nbr_bnd_local: Vec<[i32; 4]>,
    spectral: Option<SpectralPlan>,
}

impl DirichletOperator {
    pub fn new(set: SiteSet) -> Result<Self> {
        if set.interior().is_empty() {
            return Err(Error::Geometry("site set has no interior".into()));
        }
        let set = Arc::new(set);
        let n = set.len();
        let int_local = set.interior().to_vec();
        let mut slot_of_local = vec![-1i32; n];
        for (slot, &loc) in int_local.iter().enumerate() {
            slot_of_local[loc as usize] = slot as i32;
        }
        let mut bnd_of_local = vec![-1i32; n];
        for (b, &loc) in set.boundary().iter().enumerate() {
            bnd_of_local[loc as usize] = b as i32;
        }
        let mut nbr_slots = Vec::with_capacity(int_local.len());
        let mut nbr_bnd_local = Vec::with_capacity(int_local.len());
        for &loc in &int_local {
            let s = set.site(loc as usize);
            let mut slots = [-1i32; 4];
            let mut bnds = [-1i32; 4];
            for (k, nb) in s.neighbors().iter().enumerate() {
                let nloc = set
                    .local_index(*nb)
                    .expect("interior site must have all neighbors in the set");
                if set.is_interior_local(nloc) {
                    slots[k] = slot_of_local[nloc];
                } else {
                    bnds[k] = nloc as i32;
                }
            }
            nbr_slots.push(slots);
            nbr_bnd_local.push(bnds);
        }
        let spectral = Self::detect_rectangle(&set, &int_local);
        Ok(DirichletOperator {
            set,
            int_local,
            slot_of_local,
            bnd_of_local,
            nbr_slots,
            nbr_bnd_local,
            spectral,
        })
    }

    pub fn full_box(domain: LatticeDomain) -> Result<Self> {
        Self::new(SiteSet::full_box(domain))
    }

    fn detect_rectangle(set: &SiteSet, int_local: &[u32]) -> Option<SpectralPlan> {
        let sites: Vec<Site> = int_local.iter().map(|&l| set.site(l as usize)).collect();
        let min_x = sites.iter().map(|s| s.x).min()?;
        let max_x = sites.iter().map(|s| s.x).max()?;
        let min_y = sites.iter().map(|s| s.y).min()?;
        let max_y = sites.iter().map(|s| s.y).max()?;
        let nx = (max_x - min_x + 1) as usize;
        let ny = (max_y - min_y + 1) as usize;
        if nx * ny != sites.len() {
            return None;
        }
        // sorted row-major already; full rectangle iff enumeration matches
        for (k, s) in sites.iter().enumerate() {
            let (i, j) = ((k / ny) as i32, (k % ny) as i32);
            if s.x != min_x + i || s.y != min_y + j {
                return None;
            }
        }
        let lx = Dst2d::eigenvalues_1d(nx);
        let ly = Dst2d::eigenvalues_1d(ny);
        let mut lam = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                lam.push(lx[i] + ly[j]);
            }
        }
        let inv_sqrt_lam = lam.iter().map(|l| 1.0 / l.sqrt()).collect();
        Some(SpectralPlan { nx, ny, dst: Dst2d::new(nx, ny), lam, inv_sqrt_lam })
    }

    pub fn set(&self) -> &SiteSet {
        &self.set
    }

    pub fn n_interior(&self) -> usize {
        self.int_local.len()
    }

    pub fn is_spectral(&self) -> bool {
        self.spectral.is_some()
    }

    pub fn interior_slot(&self, s: Site) -> Option<usize> {
        let loc = self.set.local_index(s)?;
        let slot = self.slot_of_local[loc];
        (slot >= 0).then_some(slot as usize)
    }

    pub fn interior_site(&self, slot: usize) -> Site {
        self.set.site(self.int_local[slot] as usize)
    }

    /// y = L x on the interior (Dirichlet: out-of-interior neighbors drop out).
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_interior());
        for i in 0..x.len() {
            let mut acc = 4.0 * x[i];
            for &s in &self.nbr_slots[i] {
                if s >= 0 {
                    acc -= x[s as usize];
                }
            }
            y[i] = acc;
        }
    }

    fn residual_inf(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut y = vec![0.0; x.len()];
        self.apply(x, &mut y);
        y.iter().zip(b).fold(0.0f64, |m, (yi, bi)| m.max((yi - bi).abs()))
    }

    /// Solves L u = b on the interior with the residual contract enforced.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n_interior() {
            return Err(Error::Input("rhs length must equal interior size".into()));
        }
        let x = match &self.spectral {
            Some(plan) => {
                let mut t = b.to_vec();
                plan.dst.transform(&mut t);
                for (v, l) in t.iter_mut().zip(&plan.lam) {
                    *v /= l;
                }
                plan.dst.transform(&mut t);
                t
            }
            None => {
                let bscale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
                let max_iter = 200 + 60 * (self.set.len() as f64).sqrt() as usize;
                cg::solve(|p, ap| self.apply(p, ap), b, CG_TOL * bscale, max_iter)?.0
            }
        };
        let res = self.residual_inf(&x, b);
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        if res > RESIDUAL_TOL * scale {
            return Err(Error::Solver(format!("solve residual {res:.3e} exceeds contract")));
        }
        Ok(x)
    }

    /// One column of the Green's function G = L^{-1}.
    pub fn greens_column(&self, source: Site) -> Result<GreensColumn> {
        let slot = self
            .interior_slot(source)
            .ok_or_else(|| Error::Geometry("greens source must be interior to the set".into()))?;
        let mut b = vec![0.0; self.n_interior()];
        b[slot] = 1.0;
        let values = self.solve(&b)?;
        Ok(GreensColumn { source, values })
    }

    /// Var_G phi(x) = G(x, x).
    pub fn gff_variance(&self, x: Site) -> Result<f64> {
        let col = self.greens_column(x)?;
        Ok(col.values[self.interior_slot(x).unwrap()])
    }

    /// rho' L^{-1} rho for a signed site measure. Weights on the set's
    /// boundary contribute nothing (the field is pinned there).
    pub fn quadratic_form(&self, rho: &HarmonicWeights) -> Result<f64> {
        let mut b = vec![0.0; self.n_interior()];
        for (s, w) in rho.entries() {
            match self.interior_slot(*s) {
                Some(slot) => b[slot] += w,
                None => {
                    if self.set.local_index(*s).is_none() {
                        return Err(Error::Geometry(format!(
                            "kernel site ({},{}) outside operator set",
                            s.x, s.y
                        )));
                    }
                }
            }
        }
        let x = self.solve(&b)?;
        Ok(det_dot(&b, &x))
    }

    /// Discrete-harmonic extension of boundary data (given in the set's
    /// boundary enumeration order). Returns a field over the whole set.
    pub fn harmonic_extension(&self, boundary_values: &[f64]) -> Result<Vec<f64>> {
        if boundary_values.len() != self.set.boundary().len() {
            return Err(Error::Input(format!(
                "boundary data covers {} sites, set boundary has {}",
                boundary_values.len(),
                self.set.boundary().len()
            )));
        }
        let mut b = vec![0.0; self.n_interior()];
        for i in 0..self.n_interior() {
            let mut acc = 0.0;
            for &loc in &self.nbr_bnd_local[i] {
                if loc >= 0 {
                    acc += boundary_values[self.bnd_of_local[loc as usize] as usize];
                }
            }
            b[i] = acc;
        }
        let x = self.solve(&b)?;
        let mut out = vec![0.0; self.set.len()];
        for (slot, &loc) in self.int_local.iter().enumerate() {
            out[loc as usize] = x[slot];
        }
        for (bidx, &loc) in self.set.boundary().iter().enumerate() {
            out[loc as usize] = boundary_values[bidx];
        }
        Ok(out)
    }

    /// Exact sample of the zero-boundary Gaussian field (covariance L^{-1}).
    /// Deterministic given the generator state; requires the full-box operator.
    pub fn sample_exact_gff<R: Rng>(&self, rng: &mut R) -> Result<FieldState> {
        let plan = self.spectral.as_ref().ok_or_else(|| {
            Error::Solver("exact sampling needs the spectral factorization (rectangular interior)".into())
        })?;
        let domain = self.set.domain();
        if self.set.len() != domain.num_sites() {
            return Err(Error::Solver("exact sampling requires the full-box operator".into()));
        }
        let n = self.n_interior();
        let mut modes = vec![0.0; n];
        for (m, isl) in modes.iter_mut().zip(&plan.inv_sqrt_lam) {
            let z: f64 = StandardNormal.sample(rng);
            *m = z * isl;
        }
        plan.dst.transform(&mut modes);
        let mut field = FieldState::new(domain, &BoundaryCondition::Zero);
        {
            let values = field.values_mut();
            for (slot, &loc) in self.int_local.iter().enumerate() {
                values[domain.index(self.set.site(loc as usize))] = modes[slot];
            }
        }
        Ok(field)
    }

    /// Interior-rectangle dimensions when the spectral factorization exists.
    pub fn spectral_dims(&self) -> Option<(usize, usize)> {
        self.spectral.as_ref().map(|p| (p.nx, p.ny))
    }

    /// Laplacian eigenvalues per interior slot (spectral operators only).
    pub(crate) fn spectral_eigenvalues(&self) -> Option<&[f64]> {
        self.spectral.as_ref().map(|p| p.lam.as_slice())
    }

    /// Applies the symmetric orthogonal eigenbasis transform in place.
    pub(crate) fn spectral_transform(&self, data: &mut [f64]) -> Result<()> {
        let plan = self
            .spectral
            .as_ref()
            .ok_or_else(|| Error::Solver("operator has no spectral factorization".into()))?;
        plan.dst.transform(data);
        Ok(())
    }
}

/// Values G(source, .) on interior sites.
#[derive(Clone, Debug)]
pub struct GreensColumn {
    pub source: Site,
    /// indexed by the operator's interior slots
    pub values: Vec<f64>,
}

impl GreensColumn {
    pub fn value_at(&self, op: &DirichletOperator, s: Site) -> Option<f64> {
        op.interior_slot(s).map(|slot| self.values[slot])
    }
}

/// Harmonic measure on the boundary of `ball` seen from `center`, computed
/// from one Green's solve via the exit-edge decomposition of simple random
/// walk: a(v, y) = sum over interior z ~ y of L^{-1} e_v (z).
pub fn harmonic_measure(ball: &SiteSet, center: Site) -> Result<HarmonicWeights> {
    let center_loc = ball
        .local_index(center)
        .ok_or_else(|| Error::Geometry("harmonic measure center not in ball".into()))?;
    if !ball.is_interior_local(center_loc) {
        return Err(Error::Geometry("harmonic measure center must be interior to the ball".into()));
    }
    let op = DirichletOperator::new(ball.clone())?;
    let col = op.greens_column(center)?;
    let mut entries = Vec::with_capacity(op.set().boundary().len());
    for &loc in op.set().boundary() {
        let y = op.set().site(loc as usize);
        let mut a = 0.0;
        for nb in y.neighbors() {
            if let Some(slot) = op.interior_slot(nb) {
                a += col.values[slot];
            }
        }
        if a < -1e-10 {
            return Err(Error::Solver(format!("negative harmonic measure weight {a:.3e}")));
        }
        entries.push((y, a.max(0.0)));
    }
    let total: f64 = entries.iter().map(|(_, w)| w).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Solver(format!(
            "harmonic measure sums to {total} (should be 1 within 1e-9)"
        )));
    }
    Ok(HarmonicWeights::new(WeightKind::HarmonicMeasure, entries))
}

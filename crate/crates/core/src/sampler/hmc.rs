//! Fourier-accelerated Hamiltonian updates.
//!
//! Mass matrix = the quadratic-part Laplacian L, so for V(x) = x^2/2 every
//! mode oscillates at unit frequency and a fixed-length trajectory
//! decorrelates the whole field at once; for uniformly convex V the mode
//! frequencies stay inside [sqrt(c_minus), sqrt(c_plus)] and the behaviour
//! is the same up to a bounded stretch. Exact Metropolis accept/reject on
//! the full Hamiltonian keeps the chain unbiased at any step size.

use crate::error::{Error, Result};
use crate::field::FieldState;
use crate::laplace::DirichletOperator;
use crate::lattice::LatticeDomain;
use crate::potential::Potential;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

pub struct HmcDriver {
    op: DirichletOperator,
    potential: Potential,
    rng: ChaCha8Rng,
    step: f64,
    mean_steps: usize,
    max_step: f64,
    tuning_done: bool,
    sqrt_lam: Vec<f64>,
    /// domain value index per interior slot
    slot_to_value: Vec<u32>,
}

impl HmcDriver {
    pub fn new(domain: LatticeDomain, potential: Potential, mean_steps: usize, seed: u64) -> Result<Self> {
        let op = DirichletOperator::full_box(domain)?;
        let sqrt_lam = op
            .spectral_eigenvalues()
            .ok_or_else(|| Error::Solver("HMC needs the spectral factorization".into()))?
            .iter()
            .map(|l| l.sqrt())
            .collect();
        let slot_to_value =
            (0..op.n_interior()).map(|s| domain.index(op.interior_site(s)) as u32).collect();
        let max_step = 1.8 / potential.c_plus().sqrt();
        Ok(HmcDriver {
            op,
            step: 0.8 / potential.c_plus().sqrt(),
            max_step,
            potential,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mean_steps: mean_steps.max(1),
            tuning_done: false,
            sqrt_lam,
            slot_to_value,
        })
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    pub fn freeze(&mut self) {
        self.tuning_done = true;
    }

    fn force(&self, values: &[f64], out: &mut [f64]) {
        let p = &self.potential;
        let side = self.op.set().domain().side();
        out.par_iter_mut().enumerate().for_each(|(slot, f)| {
            let idx = self.slot_to_value[slot] as usize;
            let cur = values[idx];
            let acc = p.dv(cur - values[idx + side])
                + p.dv(cur - values[idx - side])
                + p.dv(cur - values[idx + 1])
                + p.dv(cur - values[idx - 1]);
            *f = -acc;
        });
    }

    /// One trajectory; mutates the field on accept. Returns 1.0/0.0.
    pub fn trajectory(&mut self, state: &mut FieldState, tuning: bool) -> Result<f64> {
        let n = self.op.n_interior();
        // momentum ~ N(0, L): scale unit modes by sqrt(lambda), transform
        let mut p = vec![0.0; n];
        for (pi, sl) in p.iter_mut().zip(&self.sqrt_lam) {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *pi = z * sl;
        }
        self.op.spectral_transform(&mut p)?;
        let lo = (self.mean_steps as f64 * 0.7).round().max(1.0) as usize;
        let hi = (self.mean_steps as f64 * 1.3).round() as usize;
        let n_steps = self.rng.random_range(lo..=hi.max(lo));
        let accept_u: f64 = self.rng.random();

        let start = state.values().to_vec();
        let mut values = state.values().to_vec();
        let e0 = total_energy(state.domain(), &self.potential, &values);
        let u0 = self.op.solve(&p)?;
        let k0 = 0.5 * crate::stats::det_dot(&p, &u0);

        let eps = self.step;
        let mut force = vec![0.0; n];
        self.force(&values, &mut force);
        for (pi, fi) in p.iter_mut().zip(&force) {
            *pi += 0.5 * eps * fi;
        }
        for step in 1..=n_steps {
            let u = self.op.solve(&p)?;
            for (slot, ui) in u.iter().enumerate() {
                values[self.slot_to_value[slot] as usize] += eps * ui;
            }
            self.force(&values, &mut force);
            let w = if step == n_steps { 0.5 * eps } else { eps };
            for (pi, fi) in p.iter_mut().zip(&force) {
                *pi += w * fi;
            }
        }
        let e1 = total_energy(state.domain(), &self.potential, &values);
        let u1 = self.op.solve(&p)?;
        let k1 = 0.5 * crate::stats::det_dot(&p, &u1);
        let dh = (e1 + k1) - (e0 + k0);
        if !dh.is_finite() {
            return Err(Error::Solver(format!("HMC energy change not finite: {dh}")));
        }
        let accept = dh <= 0.0 || accept_u.ln() < -dh;
        if accept {
            state.values_mut().copy_from_slice(&values);
        } else {
            state.values_mut().copy_from_slice(&start);
        }
        state.lineage_mut().sweeps += 1;
        let acc: f64 = if accept { 1.0 } else { 0.0 };
        if tuning && !self.tuning_done {
            self.step = (self.step * (0.15 * (acc - 0.8)).exp()).clamp(1e-4, self.max_step);
        }
        Ok(acc)
    }
}

/// Total interaction energy over in-domain edges touching the interior
/// (edges between two pinned boundary sites are constant and skipped).
pub fn total_energy(domain: LatticeDomain, p: &Potential, values: &[f64]) -> f64 {
    let side = domain.side();
    let n = domain.half_width();
    let is_bnd = |x: i32, y: i32| x.abs() == n || y.abs() == n;
    let row_sums: Vec<f64> = (0..side as i32)
        .into_par_iter()
        .map(|row| {
            let x = row - n;
            let mut acc = 0.0;
            for col in 0..side as i32 {
                let y = col - n;
                let idx = (row * side as i32 + col) as usize;
                if x < n && !(is_bnd(x, y) && is_bnd(x + 1, y)) {
                    acc += p.v(values[idx + side] - values[idx]);
                }
                if y < n && !(is_bnd(x, y) && is_bnd(x, y + 1)) {
                    acc += p.v(values[idx + 1] - values[idx]);
                }
            }
            acc
        })
        .collect();
    row_sums.iter().sum()
}

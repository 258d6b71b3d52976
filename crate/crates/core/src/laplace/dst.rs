//! Type-I discrete sine transforms via complex FFTs.
//!
//! The Dirichlet Laplacian on an nx * ny interior rectangle diagonalizes in
//! the product sine basis: eigenvalues (2 - 2cos(pi j/(nx+1))) +
//! (2 - 2cos(pi k/(ny+1))), eigenvectors sin(pi j a/(nx+1)) sin(pi k b/(ny+1)).
//! With the sqrt(2/(n+1)) normalization the 1D transform matrix is symmetric
//! and orthogonal, so the 2D transform is an involution. The DST-I of length
//! n is computed from a complex FFT of length 2(n+1) on the odd extension.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub struct DstPlan {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    norm: f64,
}

impl DstPlan {
    pub fn new(planner: &mut FftPlanner<f64>, n: usize) -> Self {
        let fft = planner.plan_fft_forward(2 * (n + 1));
        DstPlan { n, fft, norm: (2.0 / (n + 1) as f64).sqrt() }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    /// In-place normalized DST-I of one row.
    fn transform_row(&self, row: &mut [f64], buf: &mut [Complex64], scratch: &mut [Complex64]) {
        let n = self.n;
        debug_assert_eq!(row.len(), n);
        buf[0] = Complex64::new(0.0, 0.0);
        buf[n + 1] = Complex64::new(0.0, 0.0);
        for a in 0..n {
            buf[a + 1] = Complex64::new(row[a], 0.0);
            buf[2 * (n + 1) - 1 - a] = Complex64::new(-row[a], 0.0);
        }
        self.fft.process_with_scratch(buf, scratch);
        for j in 0..n {
            row[j] = -0.5 * buf[j + 1].im * self.norm;
        }
    }
}

/// Orthonormal 2D DST-I over an nx * ny rectangle stored row-major
/// (index = ix * ny + iy).
pub struct Dst2d {
    pub nx: usize,
    pub ny: usize,
    plan_x: DstPlan,
    plan_y: DstPlan,
}

impl Dst2d {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Dst2d { nx, ny, plan_x: DstPlan::new(&mut planner, nx), plan_y: DstPlan::new(&mut planner, ny) }
    }

    /// One-dimensional eigenvalues 2 - 2cos(pi j/(n+1)), j = 1..n.
    pub fn eigenvalues_1d(n: usize) -> Vec<f64> {
        (1..=n)
            .map(|j| 2.0 - 2.0 * (std::f64::consts::PI * j as f64 / (n + 1) as f64).cos())
            .collect()
    }

    /// Applies the symmetric orthogonal 2D transform in place.
    pub fn transform(&self, data: &mut [f64]) {
        debug_assert_eq!(data.len(), self.nx * self.ny);
        self.pass(data, &self.plan_y);
        let mut t = vec![0.0; data.len()];
        transpose(data, &mut t, self.nx, self.ny);
        self.pass(&mut t, &self.plan_x);
        transpose(&t, data, self.ny, self.nx);
    }

    fn pass(&self, data: &mut [f64], plan: &DstPlan) {
        let row_len = plan.len();
        let n_rows = data.len() / row_len;
        let chunk_rows = (n_rows / (rayon::current_num_threads() * 4)).max(1);
        data.par_chunks_mut(chunk_rows * row_len).for_each(|chunk| {
            let mut buf = vec![Complex64::new(0.0, 0.0); 2 * (row_len + 1)];
            let mut scratch =
                vec![Complex64::new(0.0, 0.0); plan.fft.get_inplace_scratch_len()];
            for row in chunk.chunks_mut(row_len) {
                plan.transform_row(row, &mut buf, &mut scratch);
            }
        });
    }
}

/// Out-of-place transpose of an r x c row-major matrix into c x r.
fn transpose(src: &[f64], dst: &mut [f64], r: usize, c: usize) {
    const B: usize = 32;
    for i0 in (0..r).step_by(B) {
        for j0 in (0..c).step_by(B) {
            for i in i0..(i0 + B).min(r) {
                for j in j0..(j0 + B).min(c) {
                    dst[j * r + i] = src[i * c + j];
                }
            }
        }
    }
}

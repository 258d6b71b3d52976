//! Field configurations on the box: values over all sites with pinned
//! boundary and RNG lineage metadata.

use crate::error::{Error, Result};
use crate::lattice::{LatticeDomain, Site};
use serde::{Deserialize, Serialize};

/// Dirichlet data on the boundary ring, in `domain.boundary_sites()` order.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryCondition {
    Zero,
    Fixed(Vec<f64>),
}

impl BoundaryCondition {
    /// Constant boundary value f(x) = c.
    pub fn constant(domain: LatticeDomain, c: f64) -> Self {
        if c == 0.0 {
            BoundaryCondition::Zero
        } else {
            BoundaryCondition::Fixed(vec![c; domain.num_boundary()])
        }
    }
}

/// Provenance of the randomness that produced a field.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub master_seed: u64,
    pub stream: u64,
    pub sweeps: u64,
}

/// A configuration phi on D_N. Boundary values are pinned at construction
/// and never change afterwards; samplers only touch interior entries.
#[derive(Clone, Debug)]
pub struct FieldState {
    domain: LatticeDomain,
    values: Vec<f64>,
    lineage: Lineage,
}

impl FieldState {
    pub fn new(domain: LatticeDomain, boundary: &BoundaryCondition) -> Self {
        let mut values = vec![0.0; domain.num_sites()];
        if let BoundaryCondition::Fixed(data) = boundary {
            for (b, s) in data.iter().zip(domain.boundary_sites()) {
                values[domain.index(s)] = *b;
            }
        }
        FieldState { domain, values, lineage: Lineage::default() }
    }

    /// Rebuilds a field from raw site values (domain index order).
    pub fn from_values(domain: LatticeDomain, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.num_sites() {
            return Err(Error::Input(format!(
                "field has {} values, domain needs {}",
                values.len(),
                domain.num_sites()
            )));
        }
        Ok(FieldState { domain, values, lineage: Lineage::default() })
    }

    pub fn domain(&self) -> LatticeDomain {
        self.domain
    }

    pub fn value(&self, s: Site) -> f64 {
        self.values[self.domain.index(s)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access for samplers. Callers must leave boundary entries
    /// untouched; the invariant is enforced by `sampler` tests.
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn lineage(&self) -> Lineage {
        self.lineage
    }

    pub(crate) fn lineage_mut(&mut self) -> &mut Lineage {
        &mut self.lineage
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Boundary values in `boundary_sites()` order.
    pub fn boundary_values(&self) -> Vec<f64> {
        self.domain.boundary_sites().map(|s| self.value(s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::site;

    #[test]
    fn zero_field() {
        let d = LatticeDomain::build_box(3).unwrap();
        let f = FieldState::new(d, &BoundaryCondition::Zero);
        assert_eq!(f.values().len(), 49);
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_boundary_pins_ring_only() {
        let d = LatticeDomain::build_box(2).unwrap();
        let f = FieldState::new(d, &BoundaryCondition::constant(d, 1.5));
        for s in d.sites() {
            if d.is_boundary(s) {
                assert_eq!(f.value(s), 1.5);
            } else {
                assert_eq!(f.value(s), 0.0);
            }
        }
        assert_eq!(f.value(site(2, -1)), 1.5);
    }
}

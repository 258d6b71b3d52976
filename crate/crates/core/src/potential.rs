//! Nearest-neighbor interaction potentials: symmetric, uniformly convex V
//! with certified curvature bounds c_minus <= V'' <= c_plus.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

type Eval = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Serializable identity of a shipped potential, as stored in configs and
/// ensemble headers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Quadratic,
    DipoleGas { a: f64 },
}

impl PotentialSpec {
    pub fn build(&self) -> Result<Potential> {
        match *self {
            PotentialSpec::Quadratic => Ok(Potential::quadratic()),
            PotentialSpec::DipoleGas { a } => Potential::dipole_gas(a),
        }
    }
}

#[derive(Clone)]
pub struct Potential {
    name: String,
    spec: Option<PotentialSpec>,
    c_minus: f64,
    c_plus: f64,
    v: Eval,
    dv: Eval,
    d2v: Eval,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("name", &self.name)
            .field("c_minus", &self.c_minus)
            .field("c_plus", &self.c_plus)
            .finish()
    }
}

impl Potential {
    /// The Gaussian case V(x) = x^2/2.
    pub fn quadratic() -> Self {
        Potential {
            name: "quadratic".into(),
            spec: Some(PotentialSpec::Quadratic),
            c_minus: 1.0,
            c_plus: 1.0,
            v: Arc::new(|x| 0.5 * x * x),
            dv: Arc::new(|x| x),
            d2v: Arc::new(|_| 1.0),
        }
    }

    /// Lattice dipole gas V(x) = x^2/2 + a cos x with activity |a| < 1.
    pub fn dipole_gas(a: f64) -> Result<Self> {
        if !a.is_finite() || a.abs() >= 1.0 {
            return Err(Error::Convexity(format!(
                "dipole gas activity must satisfy |a| < 1 for uniform convexity, got {a}"
            )));
        }
        Ok(Potential {
            name: format!("dipole_gas(a={a})"),
            spec: Some(PotentialSpec::DipoleGas { a }),
            c_minus: 1.0 - a.abs(),
            c_plus: 1.0 + a.abs(),
            v: Arc::new(move |x| 0.5 * x * x + a * x.cos()),
            dv: Arc::new(move |x| x - a * x.sin()),
            d2v: Arc::new(move |x| 1.0 - a * x.cos()),
        })
    }

    /// Arbitrary user-supplied potential, for tests and experiments outside
    /// the serialized config surface.
    pub fn custom(
        name: &str,
        c_minus: f64,
        c_plus: f64,
        v: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dv: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2v: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Potential {
            name: name.into(),
            spec: None,
            c_minus,
            c_plus,
            v: Arc::new(v),
            dv: Arc::new(dv),
            d2v: Arc::new(d2v),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> Option<&PotentialSpec> {
        self.spec.as_ref()
    }

    /// Certified lower curvature bound.
    pub fn c_minus(&self) -> f64 {
        self.c_minus
    }

    /// Certified upper curvature bound.
    pub fn c_plus(&self) -> f64 {
        self.c_plus
    }

    pub fn v(&self, x: f64) -> f64 {
        (self.v)(x)
    }

    pub fn dv(&self, x: f64) -> f64 {
        (self.dv)(x)
    }

    pub fn d2v(&self, x: f64) -> f64 {
        (self.d2v)(x)
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.spec, Some(PotentialSpec::Quadratic))
    }
}

/// Outcome of the numerical certification of symmetry, convexity bounds and
/// derivative consistency on a grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub grid_halfwidth: f64,
    pub grid_step: f64,
    pub max_symmetry_defect: f64,
    pub d2v_min: f64,
    pub d2v_max: f64,
    pub max_dv_fd_error: f64,
    pub max_d2v_fd_error: f64,
}

const SYMMETRY_TOL: f64 = 1e-12;
const FD_STEP: f64 = 1e-4;
const FD_REL_TOL: f64 = 1e-6;

/// Certifies the potential's invariants on [-grid_halfwidth, grid_halfwidth]:
/// symmetry to 1e-12, curvature within [c_minus, c_plus], and central-difference
/// consistency of V' against V and V'' against V' (relative error 1e-6 at
/// step 1e-4). Returns the offending x in the error message on failure.
pub fn validate(p: &Potential, grid_halfwidth: f64, grid_step: f64) -> Result<ValidationReport> {
    if grid_halfwidth <= 0.0 || grid_step <= 0.0 {
        return Err(Error::Parameter("validation grid must be positive".into()));
    }
    let n = (grid_halfwidth / grid_step).round() as i64;
    let mut report = ValidationReport {
        grid_halfwidth,
        grid_step,
        max_symmetry_defect: 0.0,
        d2v_min: f64::INFINITY,
        d2v_max: f64::NEG_INFINITY,
        max_dv_fd_error: 0.0,
        max_d2v_fd_error: 0.0,
    };
    if p.dv(0.0) != 0.0 {
        return Err(Error::Validation(format!("V'(0) = {} is nonzero", p.dv(0.0))));
    }
    for k in -n..=n {
        let x = k as f64 * grid_step;
        let sym = (p.v(x) - p.v(-x)).abs();
        report.max_symmetry_defect = report.max_symmetry_defect.max(sym);
        if sym > SYMMETRY_TOL {
            return Err(Error::Validation(format!(
                "symmetry defect |V({x}) - V(-{x})| = {sym:.3e} exceeds {SYMMETRY_TOL:.0e}"
            )));
        }
        let odd = (p.dv(x) + p.dv(-x)).abs();
        if odd > SYMMETRY_TOL {
            return Err(Error::Validation(format!("V' is not odd at x = {x}: defect {odd:.3e}")));
        }
        let c = p.d2v(x);
        report.d2v_min = report.d2v_min.min(c);
        report.d2v_max = report.d2v_max.max(c);
        if c < p.c_minus() - 1e-9 || c > p.c_plus() + 1e-9 {
            return Err(Error::Validation(format!(
                "V''({x}) = {c} outside certified bounds [{}, {}]",
                p.c_minus(),
                p.c_plus()
            )));
        }
        // finite-difference cross-checks of the closed-form derivatives
        let fd1 = (p.v(x + FD_STEP) - p.v(x - FD_STEP)) / (2.0 * FD_STEP);
        let e1 = (fd1 - p.dv(x)).abs() / p.dv(x).abs().max(1.0);
        report.max_dv_fd_error = report.max_dv_fd_error.max(e1);
        if e1 > FD_REL_TOL {
            return Err(Error::Validation(format!(
                "V' disagrees with central difference of V at x = {x}: rel err {e1:.3e}"
            )));
        }
        let fd2 = (p.dv(x + FD_STEP) - p.dv(x - FD_STEP)) / (2.0 * FD_STEP);
        let e2 = (fd2 - p.d2v(x)).abs() / p.d2v(x).abs().max(1.0);
        report.max_d2v_fd_error = report.max_d2v_fd_error.max(e2);
        if e2 > FD_REL_TOL {
            return Err(Error::Validation(format!(
                "V'' disagrees with central difference of V' at x = {x}: rel err {e2:.3e}"
            )));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_values() {
        let p = Potential::quadratic();
        assert_eq!(p.v(2.0), 2.0);
        assert_eq!(p.dv(-3.0), -3.0);
        assert_eq!(p.d2v(17.3), 1.0);
        assert_eq!(p.c_minus(), 1.0);
        assert_eq!(p.c_plus(), 1.0);
    }

    #[test]
    fn dipole_gas_values() {
        let p = Potential::dipole_gas(0.5).unwrap();
        assert!((p.d2v(0.0) - 0.5).abs() < 1e-15);
        assert!((p.d2v(std::f64::consts::PI) - 1.5).abs() < 1e-12);
        assert!((p.v(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(p.c_minus(), 0.5);
        assert_eq!(p.c_plus(), 1.5);
    }

    #[test]
    fn dipole_gas_convexity_error() {
        assert!(Potential::dipole_gas(1.2).is_err());
        assert!(Potential::dipole_gas(-1.0).is_err());
        assert!(Potential::dipole_gas(0.999).is_ok());
    }

    #[test]
    fn validate_quadratic() {
        let r = validate(&Potential::quadratic(), 10.0, 1e-2).unwrap();
        assert_eq!(r.d2v_min, 1.0);
        assert_eq!(r.d2v_max, 1.0);
        assert_eq!(r.max_symmetry_defect, 0.0);
    }

    #[test]
    fn validate_dipole_grid_range() {
        let r = validate(&Potential::dipole_gas(0.3).unwrap(), 10.0, 1e-3).unwrap();
        // grid minimization of 1 -/+ 0.3 cos x over [-10, 10] reaches both extremes
        assert!((r.d2v_min - 0.7).abs() < 1e-6);
        assert!((r.d2v_max - 1.3).abs() < 1e-6);
    }

    #[test]
    fn validate_rejects_asymmetric() {
        let bad = Potential::custom("skew", 1.0, 1.0, |x| 0.5 * x * x + 0.1 * x, |x| x + 0.1, |_| 1.0);
        let err = validate(&bad, 2.0, 0.5).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("V'(0)") || msg.contains("symmetry"), "{msg}");
    }

    #[test]
    fn validate_rejects_wrong_derivative() {
        let bad = Potential::custom("wrongd", 1.0, 1.0, |x| 0.5 * x * x, |x| 1.01 * x, |_| 1.01);
        assert!(validate(&bad, 2.0, 0.25).is_err());
    }

    #[test]
    fn shipped_potentials_pass_wide_grid() {
        // invariant: every shipped potential validates on [-50, 50] at step 1e-3
        validate(&Potential::quadratic(), 50.0, 1e-3).unwrap();
        validate(&Potential::dipole_gas(0.5).unwrap(), 50.0, 1e-3).unwrap();
        validate(&Potential::dipole_gas(0.3).unwrap(), 50.0, 1e-3).unwrap();
    }

    #[test]
    fn dipole_zero_activity_matches_quadratic() {
        let q = Potential::quadratic();
        let d = Potential::dipole_gas(0.0).unwrap();
        let mut x = -20.0;
        while x <= 20.0 {
            assert!((q.v(x) - d.v(x)).abs() <= 1e-15 * (1.0 + q.v(x).abs()));
            assert!((q.dv(x) - d.dv(x)).abs() <= 1e-15 * (1.0 + q.dv(x).abs()));
            x += 0.37;
        }
    }

    #[test]
    fn spec_roundtrip() {
        let s = PotentialSpec::DipoleGas { a: 0.5 };
        let json = serde_json::to_string(&s).unwrap();
        let back: PotentialSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(s, back);
        assert_eq!(back.build().unwrap().c_minus(), 0.5);
    }
}

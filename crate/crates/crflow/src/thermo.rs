//! Equation of state, Helmholtz pressure potential H, the Bregman distance
//! E(rho|r) built from it, and the discrete relative-energy functional.
//!
//! For isentropic laws p = a rho^gamma everything is in closed form; for a
//! user-supplied C^2 law H is obtained by adaptive quadrature anchored at
//! H(1) = 0.

use std::sync::Arc;

use thiserror::Error;

use crate::spaces::{CRVectorField, ScalarCellField};

#[derive(Debug, Error)]
pub enum ThermoError {
    #[error("density must be nonnegative (got {0})")]
    NegativeDensity(f64),
    #[error("reference density must be positive (got {0})")]
    NonPositiveReference(f64),
    #[error("invalid pressure law: {0}")]
    InvalidLaw(String),
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Form {
    Isentropic { a: f64 },
    Custom { p: ScalarFn, p_prime: ScalarFn },
}

/// Barotropic pressure law p(rho) with p(0) = 0 and p' > 0.
///
/// `gamma` describes the growth at infinity; for gamma < 2 the extra
/// asymptotic parameters (p0, alpha with alpha <= 0) must be declared and
/// are consumed by the density-dissipation monitor.
#[derive(Clone)]
pub struct PressureLaw {
    form: Form,
    pub gamma: f64,
    pub p0: Option<f64>,
    pub alpha: Option<f64>,
}

impl std::fmt::Debug for PressureLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.form {
            Form::Isentropic { a } => write!(f, "PressureLaw::isentropic(a={}, gamma={})", a, self.gamma),
            Form::Custom { .. } => write!(f, "PressureLaw::custom(gamma={})", self.gamma),
        }
    }
}

impl PressureLaw {
    pub fn isentropic(a: f64, gamma: f64) -> Result<Self, ThermoError> {
        if a <= 0.0 || gamma < 1.0 {
            return Err(ThermoError::InvalidLaw(format!(
                "need a > 0 and gamma >= 1 (got a={}, gamma={})",
                a, gamma
            )));
        }
        let mut law = PressureLaw {
            form: Form::Isentropic { a },
            gamma,
            p0: None,
            alpha: None,
        };
        if gamma < 2.0 {
            // p(rho) >= p0 rho^gamma - something decaying: exact for the pure power law
            law.p0 = Some(a);
            law.alpha = Some(0.0);
        }
        Ok(law)
    }

    /// A custom C^2 law given by p and p'; `gamma` declares the growth rate.
    pub fn custom(
        p: impl Fn(f64) -> f64 + Send + Sync + 'static,
        p_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        gamma: f64,
        p0: Option<f64>,
        alpha: Option<f64>,
    ) -> Result<Self, ThermoError> {
        if p(0.0).abs() > 1e-14 {
            return Err(ThermoError::InvalidLaw("p(0) must vanish".into()));
        }
        // monotonicity spot check on a positive grid
        for i in 0..40 {
            let rho = 10f64.powf(-2.0 + i as f64 * 0.1);
            if p_prime(rho) <= 0.0 {
                return Err(ThermoError::InvalidLaw(format!(
                    "p'({}) = {} is not positive",
                    rho,
                    p_prime(rho)
                )));
            }
        }
        if gamma < 2.0 {
            match (p0, alpha) {
                (Some(p0v), Some(al)) if p0v > 0.0 && al <= 0.0 => {}
                _ => {
                    return Err(ThermoError::InvalidLaw(
                        "gamma < 2 requires p0 > 0 and alpha <= 0".into(),
                    ))
                }
            }
        }
        Ok(PressureLaw {
            form: Form::Custom {
                p: Arc::new(p),
                p_prime: Arc::new(p_prime),
            },
            gamma,
            p0,
            alpha,
        })
    }

    pub fn p(&self, rho: f64) -> f64 {
        match &self.form {
            Form::Isentropic { a } => a * rho.powf(self.gamma),
            Form::Custom { p, .. } => p(rho),
        }
    }

    pub fn p_prime(&self, rho: f64) -> f64 {
        match &self.form {
            Form::Isentropic { a } => a * self.gamma * rho.powf(self.gamma - 1.0),
            Form::Custom { p_prime, .. } => p_prime(rho),
        }
    }

    /// H(rho) = rho * integral_1^rho p(z)/z^2 dz, so that rho H' - H = p
    /// and H(1) = 0.
    pub fn helmholtz(&self, rho: f64) -> Result<f64, ThermoError> {
        if rho < 0.0 {
            return Err(ThermoError::NegativeDensity(rho));
        }
        match &self.form {
            Form::Isentropic { a } => {
                if (self.gamma - 1.0).abs() < 1e-14 {
                    if rho == 0.0 {
                        return Ok(0.0);
                    }
                    Ok(a * rho * rho.ln())
                } else {
                    Ok(a * (rho.powf(self.gamma) - rho) / (self.gamma - 1.0))
                }
            }
            Form::Custom { p, .. } => {
                if rho == 0.0 {
                    // H(0) = -0 * integral: the integrable limit is 0 for gamma > 1
                    return Ok(0.0);
                }
                let integral = adaptive_simpson(&|z| p(z) / (z * z), 1.0, rho, 1e-12);
                Ok(rho * integral)
            }
        }
    }

    /// H'(rho). Diverges at rho = 0 (-infinity for gamma near 1; for the
    /// isentropic gamma > 1 law the limit is finite: -a/(gamma-1)).
    pub fn helmholtz_prime(&self, rho: f64) -> Result<f64, ThermoError> {
        if rho < 0.0 {
            return Err(ThermoError::NegativeDensity(rho));
        }
        match &self.form {
            Form::Isentropic { a } => {
                if (self.gamma - 1.0).abs() < 1e-14 {
                    if rho == 0.0 {
                        return Err(ThermoError::NegativeDensity(0.0));
                    }
                    Ok(a * (rho.ln() + 1.0))
                } else {
                    Ok(a * (self.gamma * rho.powf(self.gamma - 1.0) - 1.0) / (self.gamma - 1.0))
                }
            }
            Form::Custom { p, .. } => {
                if rho == 0.0 {
                    return Err(ThermoError::NegativeDensity(0.0));
                }
                let integral = adaptive_simpson(&|z| p(z) / (z * z), 1.0, rho, 1e-12);
                Ok(integral + p(rho) / rho)
            }
        }
    }

    /// Bregman distance E(rho|r) = H(rho) - H'(r)(rho - r) - H(r) >= 0.
    pub fn bregman(&self, rho: f64, r: f64) -> Result<f64, ThermoError> {
        if r <= 0.0 {
            return Err(ThermoError::NonPositiveReference(r));
        }
        let e = self.helmholtz(rho)? - self.helmholtz_prime(r)? * (rho - r) - self.helmholtz(r)?;
        // clamp quadrature-level negative noise; convexity makes the true value >= 0
        Ok(if e < 0.0 && e > -1e-13 { 0.0 } else { e })
    }
}

/// mu > 0 and lambda + mu >= 0 (the 2D trace condition on the viscous
/// stress).
#[derive(Debug, Clone, Copy)]
pub struct ViscosityParams {
    pub mu: f64,
    pub lambda: f64,
}

impl ViscosityParams {
    pub fn new(mu: f64, lambda: f64) -> Result<Self, ThermoError> {
        if mu <= 0.0 || lambda + mu < 0.0 {
            return Err(ThermoError::InvalidLaw(format!(
                "need mu > 0 and lambda + mu >= 0 (got mu={}, lambda={})",
                mu, lambda
            )));
        }
        Ok(ViscosityParams { mu, lambda })
    }
}

/// Discrete relative energy
/// sum_K |K| ( 1/2 rho_K |u_K - U_K|^2 + E(rho_K | r_K) )
/// with u_K, U_K the cell averages of the CR fields.
pub fn relative_energy(
    law: &PressureLaw,
    rho: &ScalarCellField,
    u: &CRVectorField,
    r: &ScalarCellField,
    big_u: &CRVectorField,
) -> Result<f64, ThermoError> {
    let mesh = &rho.mesh;
    let mut total = 0.0;
    for c in 0..mesh.n_cells() {
        let du = u.cell_average(c) - big_u.cell_average(c);
        total += mesh.cell_measures[c]
            * (0.5 * rho.values[c] * du.norm_sq() + law.bregman(rho.values[c], r.values[c])?);
    }
    Ok(total)
}

/// Cell classification and aggregates of the essential/residual split:
/// a cell is essential when rho_K lies in [rbar_low/2, 2*rbar_high].
#[derive(Debug, Clone)]
pub struct EssentialResidualSplit {
    pub essential: Vec<bool>,
    /// total measure of residual cells
    pub residual_measure: f64,
    /// sum |K| rho_K^gamma over residual cells
    pub residual_lgamma_mass: f64,
    /// (sum |K| (rho_K - r_K)^2 over essential cells)^(1/2)
    pub essential_l2_distance: f64,
}

pub fn essential_residual_split(
    rho: &ScalarCellField,
    r: &ScalarCellField,
    rbar_low: f64,
    rbar_high: f64,
    gamma: f64,
) -> EssentialResidualSplit {
    assert!(rbar_low > 0.0 && rbar_low <= rbar_high);
    let mesh = &rho.mesh;
    let mut essential = Vec::with_capacity(mesh.n_cells());
    let (mut res_meas, mut res_mass, mut ess_dist_sq) = (0.0, 0.0, 0.0);
    for c in 0..mesh.n_cells() {
        let rho_k = rho.values[c];
        let ess = rho_k >= rbar_low / 2.0 && rho_k <= 2.0 * rbar_high;
        essential.push(ess);
        let area = mesh.cell_measures[c];
        if ess {
            ess_dist_sq += area * (rho_k - r.values[c]).powi(2);
        } else {
            res_meas += area;
            res_mass += area * rho_k.abs().powf(gamma);
        }
    }
    EssentialResidualSplit {
        essential,
        residual_measure: res_meas,
        residual_lgamma_mass: res_mass,
        essential_l2_distance: ess_dist_sq.sqrt(),
    }
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    let scale = whole.abs().max(1.0);
    recurse(f, a, fa, b, fb, whole, m, fm, tol * scale, 48)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::mesh::{build_mesh, structured_triangulation, Rect};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn quadratic_law() -> PressureLaw {
        PressureLaw::isentropic(1.0, 2.0).unwrap()
    }

    #[test]
    fn helmholtz_anchor_and_closed_form() {
        let law = quadratic_law();
        assert_eq!(law.helmholtz(1.0).unwrap(), 0.0);
        assert_relative_eq!(law.helmholtz(2.0).unwrap(), 2.0, epsilon = 1e-14);
        let law14 = PressureLaw::isentropic(1.0, 1.4).unwrap();
        assert!(law14.helmholtz(1.0).unwrap().abs() < 1e-14);
    }

    #[test]
    fn helmholtz_ode_identity() {
        // rho H'(rho) - H(rho) = p(rho)
        for &gamma in &[1.0, 1.4, 2.0, 3.0] {
            let law = PressureLaw::isentropic(1.3, gamma).unwrap();
            for &rho in &[0.2, 0.7, 1.0, 1.9, 5.3] {
                let lhs = rho * law.helmholtz_prime(rho).unwrap() - law.helmholtz(rho).unwrap();
                assert_relative_eq!(lhs, law.p(rho), max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn custom_law_matches_closed_form() {
        let gamma = 1.4;
        let custom = PressureLaw::custom(
            move |rho: f64| rho.powf(gamma),
            move |rho: f64| gamma * rho.powf(gamma - 1.0),
            gamma,
            Some(1.0),
            Some(0.0),
        )
        .unwrap();
        let exact = PressureLaw::isentropic(1.0, gamma).unwrap();
        for &rho in &[0.3, 0.9, 2.0, 4.7] {
            assert_relative_eq!(
                custom.helmholtz(rho).unwrap(),
                exact.helmholtz(rho).unwrap(),
                max_relative = 1e-10
            );
        }
        assert_relative_eq!(
            custom.bregman(2.0, 1.0).unwrap(),
            exact.bregman(2.0, 1.0).unwrap(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn quadratic_bregman_is_squared_difference() {
        let law = quadratic_law();
        for &(rho, r) in &[(2.0, 1.0), (0.5, 3.0), (1.0, 1.0), (0.0, 2.0)] {
            assert_relative_eq!(
                law.bregman(rho, r).unwrap(),
                (rho - r) * (rho - r),
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn convexity_on_log_grid() {
        for &gamma in &[1.0, 1.4, 2.0, 3.0] {
            let law = PressureLaw::isentropic(1.0, gamma).unwrap();
            for i in 0..20 {
                let a = 10f64.powf(-1.0 + i as f64 * 0.1);
                let b = 2.5 * a;
                let mid = law.helmholtz(0.5 * (a + b)).unwrap();
                let chord =
                    0.5 * law.helmholtz(a).unwrap() + 0.5 * law.helmholtz(b).unwrap();
                assert!(mid <= chord + 1e-12, "gamma={} a={}", gamma, a);
            }
        }
    }

    proptest! {
        #[test]
        fn bregman_nonnegative(rho in 1e-6f64..50.0, r in 1e-3f64..50.0) {
            for &gamma in &[1.4, 2.0, 3.0] {
                let law = PressureLaw::isentropic(1.0, gamma).unwrap();
                let e = law.bregman(rho, r).unwrap();
                prop_assert!(e >= 0.0);
                if (rho - r).abs() > 1e-4 {
                    prop_assert!(e > 0.0);
                }
            }
        }
    }

    #[test]
    fn viscosity_validation() {
        assert!(ViscosityParams::new(1.0, -0.5).is_ok());
        assert!(ViscosityParams::new(1.0, -1.5).is_err());
        assert!(ViscosityParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn relative_energy_two_cell_hand_value() {
        use std::sync::Arc;
        let mesh = Arc::new(
            build_mesh(
                vec![
                    Vec2::new(0.0, 0.0),
                    Vec2::new(1.0, 0.0),
                    Vec2::new(1.0, 1.0),
                    Vec2::new(0.0, 1.0),
                ],
                vec![[0, 1, 2], [0, 2, 3]],
            )
            .unwrap(),
        );
        let law = quadratic_law();
        let rho = ScalarCellField::new(mesh.clone(), vec![2.0, 1.0]);
        let r = ScalarCellField::new(mesh.clone(), vec![1.5, 1.5]);
        let u = CRVectorField::zero(mesh.clone());
        let mut dofs = vec![Vec2::ZERO; mesh.n_internal_faces()];
        dofs[0] = Vec2::new(3.0, 0.0);
        let big_u = CRVectorField::new_internal(mesh.clone(), dofs);
        // each cell: area 1/2; |u_K - U_K| = 1 (DOF/3 on the shared face)
        // kinetic: 1/2*(1/2)*2*1 + 1/2*(1/2)*1*1 = 3/4
        // bregman: 1/2*(0.5)^2 + 1/2*(0.5)^2 = 1/4
        let e = relative_energy(&law, &rho, &u, &r, &big_u).unwrap();
        assert_relative_eq!(e, 0.75 + 0.25, epsilon = 1e-13);

        // discrete twin: zero
        let twin = relative_energy(&law, &r, &big_u, &r, &big_u).unwrap();
        assert!(twin.abs() < 1e-15);

        // kinetic term vanishes when velocities agree
        let pure_breg = relative_energy(&law, &rho, &big_u, &r, &big_u).unwrap();
        assert_relative_eq!(pure_breg, 0.25, epsilon = 1e-13);
    }

    #[test]
    fn split_classification() {
        use std::sync::Arc;
        let mesh = Arc::new(structured_triangulation(2, 2, Rect::UNIT).unwrap());
        let r = ScalarCellField::constant(mesh.clone(), 1.0);
        // all at rho = r in [low, high]: nothing residual, zero distance
        let s = essential_residual_split(&r.clone(), &r, 0.5, 2.0, 2.0);
        assert_eq!(s.residual_measure, 0.0);
        assert_eq!(s.essential_l2_distance, 0.0);
        // one cell pushed to 4*rbar_high
        let mut vals = vec![1.0; mesh.n_cells()];
        vals[3] = 8.0;
        let rho = ScalarCellField::new(mesh.clone(), vals);
        let s = essential_residual_split(&rho, &r, 0.5, 2.0, 2.0);
        assert!(!s.essential[3]);
        assert_relative_eq!(s.residual_measure, mesh.cell_measures[3], epsilon = 1e-15);
        assert_relative_eq!(
            s.residual_lgamma_mass,
            mesh.cell_measures[3] * 64.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn coercivity_constant_positive() {
        // min over sampled rho of E(rho|r) / split-aggregate is bounded
        // below by a positive fitted constant for [rlow, rhigh] = [0.5, 2]
        let law = PressureLaw::isentropic(1.0, 1.4).unwrap();
        let (rlow, rhigh) = (0.5, 2.0);
        let r = 1.0;
        let mut c_min = f64::INFINITY;
        for i in 1..400 {
            let rho = 0.02 * i as f64;
            if (rho - r).abs() < 1e-9 {
                continue;
            }
            let e = law.bregman(rho, r).unwrap();
            let ess = rho >= rlow / 2.0 && rho <= 2.0 * rhigh;
            let denom = if ess {
                (rho - r).powi(2)
            } else {
                1.0 + rho.powf(law.gamma)
            };
            c_min = c_min.min(e / denom);
        }
        assert!(c_min > 1e-3, "fitted constant {}", c_min);
    }
}

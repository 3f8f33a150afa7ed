//! Manufactured smooth solution pairs (r, U) on the unit square with the
//! forcing terms that make them exact solutions of the forced system:
//!   f_rho = d_t r + div(r U)
//!   f_m   = r (d_t U + (grad U) U) + U f_rho + p'(r) grad r
//!           - mu Lap U - (mu + lambda) grad div U.
//! All derivatives are closed-form; a finite-difference oracle in the tests
//! checks the algebra.

use std::sync::Arc;

use crate::geometry::{Mat2, Vec2};
use crate::scheme::SourceTerms;
use crate::thermo::{PressureLaw, ViscosityParams};

const PI: f64 = std::f64::consts::PI;

/// r = 1 + ar sin(pi x) sin(pi y) cos(t),
/// U = (a1, a2) sin(pi x) sin(pi y) cos(omega t): boundary-vanishing on the
/// unit square, nontrivial divergence and time dependence.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedSolution {
    pub amp_r: f64,
    pub amp_u: Vec2,
    pub omega: f64,
}

impl Default for ManufacturedSolution {
    fn default() -> Self {
        ManufacturedSolution {
            amp_r: 0.3,
            amp_u: Vec2::new(0.4, -0.25),
            omega: 1.0,
        }
    }
}

impl ManufacturedSolution {
    pub fn r(&self, t: f64, p: Vec2) -> f64 {
        1.0 + self.amp_r * (PI * p.x).sin() * (PI * p.y).sin() * t.cos()
    }

    pub fn r_t(&self, t: f64, p: Vec2) -> f64 {
        -self.amp_r * (PI * p.x).sin() * (PI * p.y).sin() * t.sin()
    }

    pub fn grad_r(&self, t: f64, p: Vec2) -> Vec2 {
        let c = self.amp_r * t.cos() * PI;
        Vec2::new(
            c * (PI * p.x).cos() * (PI * p.y).sin(),
            c * (PI * p.x).sin() * (PI * p.y).cos(),
        )
    }

    pub fn u(&self, t: f64, p: Vec2) -> Vec2 {
        self.amp_u
            .scale((PI * p.x).sin() * (PI * p.y).sin() * (self.omega * t).cos())
    }

    pub fn u_t(&self, t: f64, p: Vec2) -> Vec2 {
        self.amp_u.scale(
            -self.omega * (PI * p.x).sin() * (PI * p.y).sin() * (self.omega * t).sin(),
        )
    }

    /// grad U, entries (i,j) = d U_i / d x_j.
    pub fn grad_u(&self, t: f64, p: Vec2) -> Mat2 {
        let tau = (self.omega * t).cos();
        let gx = PI * (PI * p.x).cos() * (PI * p.y).sin() * tau;
        let gy = PI * (PI * p.x).sin() * (PI * p.y).cos() * tau;
        Mat2 {
            a: [
                [self.amp_u.x * gx, self.amp_u.x * gy],
                [self.amp_u.y * gx, self.amp_u.y * gy],
            ],
        }
    }

    pub fn div_u(&self, t: f64, p: Vec2) -> f64 {
        self.grad_u(t, p).trace()
    }

    pub fn laplace_u(&self, t: f64, p: Vec2) -> Vec2 {
        self.amp_u.scale(
            -2.0 * PI * PI * (PI * p.x).sin() * (PI * p.y).sin() * (self.omega * t).cos(),
        )
    }

    pub fn grad_div_u(&self, t: f64, p: Vec2) -> Vec2 {
        let tau = (self.omega * t).cos();
        let (sx, cx) = ((PI * p.x).sin(), (PI * p.x).cos());
        let (sy, cy) = ((PI * p.y).sin(), (PI * p.y).cos());
        // div U = pi tau (a1 cx sy + a2 sx cy)
        Vec2::new(
            PI * PI * tau * (self.amp_u.y * cx * cy - self.amp_u.x * sx * sy),
            PI * PI * tau * (self.amp_u.x * cx * cy - self.amp_u.y * sx * sy),
        )
    }

    pub fn mass_source(&self, t: f64, p: Vec2) -> f64 {
        self.r_t(t, p) + self.grad_r(t, p).dot(self.u(t, p)) + self.r(t, p) * self.div_u(t, p)
    }

    pub fn momentum_source(
        &self,
        law: &PressureLaw,
        visc: ViscosityParams,
        t: f64,
        p: Vec2,
    ) -> Vec2 {
        let r = self.r(t, p);
        let u = self.u(t, p);
        let accel = self.u_t(t, p) + self.grad_u(t, p).mul_vec(u);
        accel.scale(r)
            + u.scale(self.mass_source(t, p))
            + self.grad_r(t, p).scale(law.p_prime(r))
            - self.laplace_u(t, p).scale(visc.mu)
            - self.grad_div_u(t, p).scale(visc.mu + visc.lambda)
    }

    /// Bundle the forcing into the time stepper's source hooks.
    pub fn sources(&self, law: &PressureLaw, visc: ViscosityParams) -> SourceTerms {
        let this = *self;
        let law_m = law.clone();
        SourceTerms {
            mass: Some(Arc::new(move |t, p| this.mass_source(t, p))),
            momentum: Some(Arc::new(move |t, p| {
                this.momentum_source(&law_m, visc, t, p)
            })),
        }
    }
}

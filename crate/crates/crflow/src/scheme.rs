//! The implicit coupled scheme: upwind finite-volume continuity equation
//! plus CR finite-element momentum equation, advanced by Picard iteration
//! with a lagged advecting velocity.
//!
//! Per iteration: (i) freeze the advecting velocity, solve the continuity
//! system (an M-matrix, hence positivity-preserving) for the new density;
//! (ii) with that density and upwind directions from the frozen velocity,
//! solve the momentum system, linear in the new velocity. Iterate until the
//! combined relative residual of the fully nonlinear equations drops below
//! tolerance.

use std::sync::Arc;

use thiserror::Error;

use crate::geometry::Vec2;
use crate::linsolve::{LinSolveError, LinearSolver, SparseSystem};
use crate::mesh::Mesh;
use crate::quadrature::{integrate_cell, EDGE_GAUSS4, TRI_DEGREE5};
use crate::spaces::{cr_interpolate, CRVectorField, ScalarCellField};
use crate::thermo::{PressureLaw, ViscosityParams};

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("upwinding is undefined on boundary face {0}")]
    BoundaryFace(usize),
    #[error("initial density is not positive (min cell average {0})")]
    NonPositiveInitialDensity(f64),
    #[error("Picard iteration did not converge: residual {residual} after {iters} iterations")]
    NonlinearDivergence { residual: f64, iters: usize },
    #[error("mesh regularity {theta} below threshold {theta_min}")]
    MeshTooIrregular { theta: f64, theta_min: f64 },
    #[error(transparent)]
    Linear(#[from] LinSolveError),
    #[error(transparent)]
    Thermo(#[from] crate::thermo::ThermoError),
}

/// One time level of the discrete solution.
#[derive(Debug, Clone)]
pub struct State {
    pub time_index: usize,
    pub rho: ScalarCellField,
    pub u: CRVectorField,
}

#[derive(Clone)]
pub struct SchemeConfig {
    pub dt: f64,
    pub t_final: f64,
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    pub linear_solver: LinearSolver,
    pub dt_backoff_factor: f64,
    pub max_backoffs: usize,
    pub theta_min: f64,
}

impl SchemeConfig {
    pub fn new(dt: f64, t_final: f64) -> Self {
        assert!(dt > 0.0 && t_final >= 0.0);
        SchemeConfig {
            dt,
            t_final,
            picard_tol: 1e-10,
            picard_max_iters: 100,
            linear_solver: LinearSolver::Direct,
            dt_backoff_factor: 0.5,
            max_backoffs: 8,
            theta_min: 0.1,
        }
    }
}

type MassSourceFn = Arc<dyn Fn(f64, Vec2) -> f64 + Send + Sync>;
type MomentumSourceFn = Arc<dyn Fn(f64, Vec2) -> Vec2 + Send + Sync>;

/// Optional analytic forcing, evaluated at the new time level (the scheme
/// is implicit). Mass sources enter as cell averages, momentum sources as
/// integrals against the CR basis functions.
#[derive(Clone, Default)]
pub struct SourceTerms {
    pub mass: Option<MassSourceFn>,
    pub momentum: Option<MomentumSourceFn>,
}

impl SourceTerms {
    pub fn none() -> Self {
        SourceTerms::default()
    }

    /// Cell averages of the mass source at time t.
    pub fn mass_cell_averages(&self, mesh: &Mesh, t: f64) -> Option<Vec<f64>> {
        self.mass.as_ref().map(|f| {
            (0..mesh.n_cells())
                .map(|c| integrate_cell(mesh, c, TRI_DEGREE5, |x| f(t, x)) / mesh.cell_measures[c])
                .collect()
        })
    }

    /// Integral of f_m . (phi_sigma e_i) over the support of each internal
    /// face's basis function.
    pub fn momentum_tested(&self, mesh: &Mesh, t: f64) -> Option<Vec<Vec2>> {
        self.momentum.as_ref().map(|f| {
            let mut out = vec![Vec2::ZERO; mesh.n_internal_faces()];
            for c in 0..mesh.n_cells() {
                for &fi in &mesh.cell_faces[c] {
                    if fi >= mesh.n_internal_faces() {
                        continue;
                    }
                    let x_int = integrate_cell(mesh, c, TRI_DEGREE5, |x| {
                        f(t, x).x * mesh.cr_basis_value(c, fi, x)
                    });
                    let y_int = integrate_cell(mesh, c, TRI_DEGREE5, |x| {
                        f(t, x).y * mesh.cr_basis_value(c, fi, x)
                    });
                    out[fi] += Vec2::new(x_int, y_int);
                }
            }
            out
        })
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub dt: f64,
    /// set when the run aborted; `states` then holds the partial trajectory
    pub failure: Option<String>,
}

/// Upwind face value of `q` with respect to `u` as seen from `owner_cell`:
/// the owner value for strict outflow, the neighbor value otherwise
/// (including the tie u.n = 0).
pub fn upwind_value(
    q: &ScalarCellField,
    u: &CRVectorField,
    face: usize,
    owner_cell: usize,
) -> Result<f64, SchemeError> {
    let mesh = &q.mesh;
    let neighbor = mesh.other_cell(face, owner_cell).ok_or(SchemeError::BoundaryFace(face))?;
    let un = u.dof(face).dot(mesh.normal_for(face, owner_cell));
    Ok(if un > 0.0 {
        q.values[owner_cell]
    } else {
        q.values[neighbor]
    })
}

/// One implicit continuity solve with a frozen advecting velocity.
/// The matrix is an M-matrix, so positivity of the input density implies
/// positivity of the output; total mass is conserved exactly (zero source).
pub fn continuity_step(
    rho_prev: &ScalarCellField,
    u: &CRVectorField,
    dt: f64,
    mass_source: Option<&[f64]>,
    solver: LinearSolver,
) -> Result<ScalarCellField, SchemeError> {
    let mesh = rho_prev.mesh.clone();
    let n = mesh.n_cells();
    let mut sys = SparseSystem::new(n);
    let mut rhs = vec![0.0; n];
    for k in 0..n {
        let area = mesh.cell_measures[k];
        sys.add(k, k, area / dt);
        rhs[k] = area * rho_prev.values[k] / dt;
        if let Some(src) = mass_source {
            rhs[k] += area * src[k];
        }
        for &fi in &mesh.cell_faces[k] {
            let Some(l) = mesh.other_cell(fi, k) else {
                continue; // u = 0 on boundary faces: no flux
            };
            let a = u.dof(fi).dot(mesh.normal_for(fi, k));
            let measure = mesh.faces[fi].measure;
            if a > 0.0 {
                sys.add(k, k, measure * a);
            } else {
                sys.add(k, l, measure * a);
            }
        }
    }
    let x = sys.solve(&rhs, solver)?;
    Ok(ScalarCellField::new(mesh, x))
}

struct MomentumOperator<'a> {
    mesh: &'a Mesh,
    law: &'a PressureLaw,
    visc: ViscosityParams,
    dt: f64,
}

impl MomentumOperator<'_> {
    /// Assemble the momentum system, linear in the new velocity: upwind
    /// directions and mass fluxes come from the advecting velocity `w` and
    /// new density `rho`; the time term uses `rho` and the previous state.
    fn assemble(
        &self,
        state_prev: &State,
        rho: &ScalarCellField,
        w: &CRVectorField,
        momentum_source: Option<&[Vec2]>,
    ) -> (SparseSystem, Vec<f64>) {
        let mesh = self.mesh;
        let n_int = mesh.n_internal_faces();
        let ndof = 2 * n_int;
        let mut sys = SparseSystem::new(ndof);
        let mut rhs = vec![0.0; ndof];
        let idx = |fi: usize, comp: usize| 2 * fi + comp;

        for k in 0..mesh.n_cells() {
            let area = mesh.cell_measures[k];
            let rho_k = rho.values[k];
            let u_prev_k = state_prev.u.cell_average(k);
            let rho_prev_k = state_prev.rho.values[k];
            let faces = mesh.cell_faces[k];
            let grads: Vec<Vec2> = faces
                .iter()
                .map(|&f| mesh.cr_basis_gradient(k, f))
                .collect();

            for (si, &sigma) in faces.iter().enumerate() {
                if sigma >= n_int {
                    continue; // boundary test functions are not in the space
                }
                // time term: |K| rho_K u_K / dt tested against v_K = 1/3
                for &tau in &faces {
                    if tau >= n_int {
                        continue;
                    }
                    let c = area * rho_k / (9.0 * self.dt);
                    sys.add(idx(sigma, 0), idx(tau, 0), c);
                    sys.add(idx(sigma, 1), idx(tau, 1), c);
                }
                rhs[idx(sigma, 0)] += area * rho_prev_k * u_prev_k.x / (3.0 * self.dt);
                rhs[idx(sigma, 1)] += area * rho_prev_k * u_prev_k.y / (3.0 * self.dt);

                // convection: frozen mass fluxes advect the unknown's
                // upwind cell average
                for &sp in &faces {
                    let Some(l) = mesh.other_cell(sp, k) else {
                        continue;
                    };
                    let a = w.dof(sp).dot(mesh.normal_for(sp, k));
                    let up_cell = if a > 0.0 { k } else { l };
                    let flux = mesh.faces[sp].measure * rho.values[up_cell] * a;
                    for &tau in &mesh.cell_faces[up_cell] {
                        if tau >= n_int {
                            continue;
                        }
                        let c = flux / 9.0;
                        sys.add(idx(sigma, 0), idx(tau, 0), c);
                        sys.add(idx(sigma, 1), idx(tau, 1), c);
                    }
                }

                // viscous terms
                let g_s = grads[si];
                for (ti, &tau) in faces.iter().enumerate() {
                    if tau >= n_int {
                        continue;
                    }
                    let g_t = grads[ti];
                    let c_mu = self.visc.mu * area * g_s.dot(g_t);
                    sys.add(idx(sigma, 0), idx(tau, 0), c_mu);
                    sys.add(idx(sigma, 1), idx(tau, 1), c_mu);
                    let c_div = (self.visc.mu + self.visc.lambda) * area;
                    sys.add(idx(sigma, 0), idx(tau, 0), c_div * g_s.x * g_t.x);
                    sys.add(idx(sigma, 0), idx(tau, 1), c_div * g_s.x * g_t.y);
                    sys.add(idx(sigma, 1), idx(tau, 0), c_div * g_s.y * g_t.x);
                    sys.add(idx(sigma, 1), idx(tau, 1), c_div * g_s.y * g_t.y);
                }

                // pressure: + p(rho_K) |sigma| n_{sigma,K} to the right side
                let p_k = self.law.p(rho_k);
                let nrm = mesh.normal_for(sigma, k);
                let ms = mesh.faces[sigma].measure;
                rhs[idx(sigma, 0)] += p_k * ms * nrm.x;
                rhs[idx(sigma, 1)] += p_k * ms * nrm.y;
            }
        }
        if let Some(src) = momentum_source {
            for fi in 0..n_int {
                rhs[idx(fi, 0)] += src[fi].x;
                rhs[idx(fi, 1)] += src[fi].y;
            }
        }
        (sys, rhs)
    }
}

/// Residual of the discrete momentum equation tested against each internal
/// face's basis function, with upwind directions taken from the state's own
/// velocity. Zero (to solver tolerance) for converged steps.
pub fn momentum_residual(
    state_prev: &State,
    state: &State,
    dt: f64,
    law: &PressureLaw,
    visc: ViscosityParams,
    momentum_source: Option<&[Vec2]>,
) -> Vec<Vec2> {
    let mesh = state.rho.mesh.clone();
    let n_int = mesh.n_internal_faces();
    let mut res = vec![Vec2::ZERO; n_int];
    if let Some(src) = momentum_source {
        for fi in 0..n_int {
            res[fi] = -src[fi];
        }
    }
    for k in 0..mesh.n_cells() {
        let area = mesh.cell_measures[k];
        let u_k = state.u.cell_average(k);
        let u_prev_k = state_prev.u.cell_average(k);
        let time_term = (u_k.scale(state.rho.values[k])
            - u_prev_k.scale(state_prev.rho.values[k]))
        .scale(area / dt);

        // convective flux into the cell average, upwinded on state.u
        let mut conv = Vec2::ZERO;
        for &sp in &mesh.cell_faces[k] {
            let Some(l) = mesh.other_cell(sp, k) else {
                continue;
            };
            let a = state.u.dof(sp).dot(mesh.normal_for(sp, k));
            let up = if a > 0.0 { k } else { l };
            conv += state
                .u
                .cell_average(up)
                .scale(mesh.faces[sp].measure * state.rho.values[up] * a);
        }

        let grad_u = state.u.gradient_in_cell(k);
        let div_u = grad_u.trace();
        let p_k = law.p(state.rho.values[k]);

        for &sigma in &mesh.cell_faces[k] {
            if sigma >= n_int {
                continue;
            }
            // cell-average part (time + convection), v_K = 1/3
            res[sigma] += (time_term + conv).scale(1.0 / 3.0);
            // viscous: mu |K| grad_u g_sigma + (mu+lambda)|K| div_u g_sigma
            let g_s = mesh.cr_basis_gradient(k, sigma);
            res[sigma] += grad_u.mul_vec(g_s).scale(visc.mu * area);
            res[sigma] += g_s.scale((visc.mu + visc.lambda) * area * div_u);
            // pressure
            res[sigma] += mesh
                .normal_for(sigma, k)
                .scale(-p_k * mesh.faces[sigma].measure);
        }
    }
    res
}

/// Residual of the discrete continuity equation per cell, upwinded on the
/// state's own velocity.
pub fn continuity_residual(
    state_prev: &State,
    state: &State,
    dt: f64,
    mass_source: Option<&[f64]>,
) -> Vec<f64> {
    let mesh = &state.rho.mesh;
    let mut res = vec![0.0; mesh.n_cells()];
    for k in 0..mesh.n_cells() {
        let area = mesh.cell_measures[k];
        res[k] = area * (state.rho.values[k] - state_prev.rho.values[k]) / dt;
        if let Some(src) = mass_source {
            res[k] -= area * src[k];
        }
        for &fi in &mesh.cell_faces[k] {
            if mesh.other_cell(fi, k).is_none() {
                continue;
            }
            let a = state.u.dof(fi).dot(mesh.normal_for(fi, k));
            let q_up = upwind_value(&state.rho, &state.u, fi, k).unwrap();
            res[k] += mesh.faces[fi].measure * q_up * a;
        }
    }
    res
}

/// Physics bundle threaded through the time stepper.
#[derive(Clone)]
pub struct Physics {
    pub law: PressureLaw,
    pub visc: ViscosityParams,
}

/// One implicit coupled step by Picard iteration.
pub fn advance_time_step(
    state_prev: &State,
    physics: &Physics,
    config: &SchemeConfig,
    sources: &SourceTerms,
    t_new: f64,
) -> Result<State, SchemeError> {
    let mesh = state_prev.rho.mesh.clone();
    let mass_src = sources.mass_cell_averages(&mesh, t_new);
    let mom_src = sources.momentum_tested(&mesh, t_new);
    let op = MomentumOperator {
        mesh: &mesh,
        law: &physics.law,
        visc: physics.visc,
        dt: config.dt,
    };

    let mut w = state_prev.u.clone();
    let mut last_res = f64::INFINITY;
    for iter in 0..config.picard_max_iters {
        let rho = continuity_step(
            &state_prev.rho,
            &w,
            config.dt,
            mass_src.as_deref(),
            config.linear_solver,
        )?;
        let (sys, rhs) = op.assemble(state_prev, &rho, &w, mom_src.as_deref());
        let x = sys.solve(&rhs, config.linear_solver)?;
        let n_int = mesh.n_internal_faces();
        let dofs: Vec<Vec2> = (0..n_int).map(|fi| Vec2::new(x[2 * fi], x[2 * fi + 1])).collect();
        let u = CRVectorField::new_internal(mesh.clone(), dofs);
        let state = State {
            time_index: state_prev.time_index + 1,
            rho,
            u,
        };

        // fully nonlinear residuals, scaled by the natural per-equation sizes
        let c_res = continuity_residual(state_prev, &state, config.dt, mass_src.as_deref());
        let c_scale = (0..mesh.n_cells())
            .map(|k| mesh.cell_measures[k] * state_prev.rho.values[k] / config.dt)
            .fold(f64::MIN_POSITIVE, f64::max);
        let m_res = momentum_residual(
            state_prev,
            &state,
            config.dt,
            &physics.law,
            physics.visc,
            mom_src.as_deref(),
        );
        let m_scale = rhs
            .iter()
            .map(|v| v.abs())
            .fold(f64::MIN_POSITIVE, f64::max)
            .max(c_scale * mesh.quality().h);
        let rel = c_res
            .iter()
            .map(|r| r.abs() / c_scale)
            .fold(0.0f64, f64::max)
            .max(
                m_res
                    .iter()
                    .map(|r| r.norm() / m_scale)
                    .fold(0.0f64, f64::max),
            );
        if rel <= config.picard_tol {
            debug_assert!(state.rho.min() > 0.0);
            return Ok(state);
        }
        last_res = rel;
        w = state.u;
        let _ = iter;
    }
    Err(SchemeError::NonlinearDivergence {
        residual: last_res,
        iters: config.picard_max_iters,
    })
}

/// March from `initial` to `t_final`. A Picard failure halves the time step
/// and restarts the whole run from the initial data (uniform steps only),
/// up to `max_backoffs` times.
pub fn run_simulation(
    initial: &State,
    physics: &Physics,
    config: &SchemeConfig,
    sources: &SourceTerms,
) -> Result<Trajectory, SchemeError> {
    let mesh = &initial.rho.mesh;
    let theta = mesh.quality().theta;
    if theta < config.theta_min {
        return Err(SchemeError::MeshTooIrregular {
            theta,
            theta_min: config.theta_min,
        });
    }
    let mut cfg = config.clone();
    for backoff in 0..=config.max_backoffs {
        let n_steps = if cfg.t_final <= 0.0 {
            0
        } else {
            (cfg.t_final / cfg.dt).round().max(1.0) as usize
        };
        let mut states = vec![initial.clone()];
        let mut failed = None;
        for n in 1..=n_steps {
            let t_new = n as f64 * cfg.dt;
            match advance_time_step(states.last().unwrap(), physics, &cfg, sources, t_new) {
                Ok(s) => states.push(s),
                Err(e @ SchemeError::NonlinearDivergence { .. }) => {
                    failed = Some(e);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        match failed {
            None => {
                return Ok(Trajectory {
                    states,
                    dt: cfg.dt,
                    failure: None,
                })
            }
            Some(e) => {
                if backoff == config.max_backoffs {
                    return Ok(Trajectory {
                        states,
                        dt: cfg.dt,
                        failure: Some(e.to_string()),
                    });
                }
                cfg.dt *= cfg.dt_backoff_factor;
            }
        }
    }
    unreachable!()
}

/// Project analytic initial data: cell averages for the density, face means
/// for the velocity with boundary DOFs pinned to zero.
pub fn project_initial_data(
    mesh: Arc<Mesh>,
    rho0: impl FnMut(Vec2) -> f64,
    u0: impl FnMut(Vec2) -> Vec2,
) -> Result<State, SchemeError> {
    let rho = ScalarCellField::from_fn(mesh.clone(), TRI_DEGREE5, rho0);
    let m = rho.min();
    if m <= 0.0 {
        return Err(SchemeError::NonPositiveInitialDensity(m));
    }
    let full = cr_interpolate(mesh.clone(), EDGE_GAUSS4, u0);
    let u = CRVectorField::new_internal(
        mesh.clone(),
        full.dofs[..mesh.n_internal_faces()].to_vec(),
    );
    Ok(State {
        time_index: 0,
        rho,
        u,
    })
}

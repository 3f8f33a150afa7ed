//! Trajectory diagnostics: the discrete energy identity with its four
//! dissipation terms evaluated in exact Bregman form, mass history, the
//! relative-energy functional and inequality (both sides, slack reported),
//! error against a strong solution, and boundedness monitors.

use thiserror::Error;

use crate::geometry::Vec2;
use crate::quadrature::{EDGE_GAUSS4, TRI_DEGREE5};
use crate::scheme::{SourceTerms, State, Trajectory};
use crate::spaces::{cr_interpolate, CRVectorField, ScalarCellField};
use crate::thermo::{PressureLaw, ThermoError, ViscosityParams};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("reference density field is not positive (min {0})")]
    NonPositiveReferenceField(f64),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
}

/// Per-step entries of the energy balance. Space dissipation and viscous
/// work are stored with their dt factor included, so the identity reads
/// (kinetic+internal)(m) - E0
///   + sum_{n<=m} (viscous + d_time_u + d_time_rho + d_space_u + d_space_rho)
///   = sum_{n<=m} source_work  +  identity_residual(m).
#[derive(Debug, Clone)]
pub struct EnergyRow {
    pub time_index: usize,
    pub kinetic: f64,
    pub internal: f64,
    pub viscous: f64,
    pub d_time_u: f64,
    pub d_time_rho: f64,
    pub d_space_u: f64,
    pub d_space_rho: f64,
    pub source_work: f64,
    /// signed residual of the identity accumulated up to this step
    pub identity_residual: f64,
}

#[derive(Debug, Clone)]
pub struct EnergyLedger {
    pub m0: f64,
    pub e0: f64,
    /// row 0 holds the initial energies; dissipation entries there are zero
    pub rows: Vec<EnergyRow>,
}

impl EnergyLedger {
    pub fn max_abs_residual(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.identity_residual.abs())
            .fold(0.0, f64::max)
    }

    pub fn min_dissipation(&self) -> f64 {
        self.rows
            .iter()
            .skip(1)
            .flat_map(|r| [r.d_time_u, r.d_time_rho, r.d_space_u, r.d_space_rho])
            .fold(f64::INFINITY, f64::min)
    }
}

fn kinetic_internal(state: &State, law: &PressureLaw) -> Result<(f64, f64), ThermoError> {
    let mesh = &state.rho.mesh;
    let mut kin = 0.0;
    let mut int = 0.0;
    for k in 0..mesh.n_cells() {
        let area = mesh.cell_measures[k];
        kin += 0.5 * area * state.rho.values[k] * state.u.cell_average(k).norm_sq();
        int += area * law.helmholtz(state.rho.values[k])?;
    }
    Ok((kin, int))
}

fn viscous_work(u: &CRVectorField, visc: ViscosityParams) -> f64 {
    let mesh = &u.mesh;
    (0..mesh.n_cells())
        .map(|k| {
            let g = u.gradient_in_cell(k);
            mesh.cell_measures[k] * (visc.mu * g.frobenius_sq() + (visc.mu + visc.lambda) * g.trace().powi(2))
        })
        .sum()
}

pub fn energy_ledger(
    traj: &Trajectory,
    law: &PressureLaw,
    visc: ViscosityParams,
    sources: &SourceTerms,
) -> Result<EnergyLedger, ThermoError> {
    let dt = traj.dt;
    let initial = &traj.states[0];
    let mesh = initial.rho.mesh.clone();
    let (kin0, int0) = kinetic_internal(initial, law)?;
    let e0 = kin0 + int0;
    let m0 = initial.rho.total();
    let mut rows = vec![EnergyRow {
        time_index: 0,
        kinetic: kin0,
        internal: int0,
        viscous: 0.0,
        d_time_u: 0.0,
        d_time_rho: 0.0,
        d_space_u: 0.0,
        d_space_rho: 0.0,
        source_work: 0.0,
        identity_residual: 0.0,
    }];

    let mut dissipation_acc = 0.0;
    let mut source_acc = 0.0;
    for pair in traj.states.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        let (kin, int) = kinetic_internal(cur, law)?;
        let viscous = dt * viscous_work(&cur.u, visc);

        let mut d_time_u = 0.0;
        let mut d_time_rho = 0.0;
        for k in 0..mesh.n_cells() {
            let area = mesh.cell_measures[k];
            let du = cur.u.cell_average(k) - prev.u.cell_average(k);
            d_time_u += 0.5 * area * prev.rho.values[k] * du.norm_sq();
            // exact Bregman gap of H between consecutive densities
            let (rp, rc) = (prev.rho.values[k], cur.rho.values[k]);
            d_time_rho +=
                area * (law.helmholtz(rp)? - law.helmholtz(rc)? - law.helmholtz_prime(rc)? * (rp - rc));
        }

        let mut d_space_u = 0.0;
        let mut d_space_rho = 0.0;
        for (fi, face) in mesh.internal_faces() {
            let (k, l) = (face.owner, face.neighbor.unwrap());
            let a = cur.u.dof(fi).dot(face.normal); // owner-side normal velocity
            let (up, down) = if a > 0.0 { (k, l) } else { (l, k) };
            let rho_up = cur.rho.values[up];
            let du = cur.u.cell_average(k) - cur.u.cell_average(l);
            d_space_u += dt * face.measure * rho_up * 0.5 * du.norm_sq() * a.abs();
            let (ru, rd) = (cur.rho.values[up], cur.rho.values[down]);
            let gap = law.helmholtz(ru)? - law.helmholtz(rd)? - law.helmholtz_prime(rd)? * (ru - rd);
            d_space_rho += dt * face.measure * a.abs() * gap;
        }

        // forced runs: dt <F_m, u^n> + dt sum |K| f_K (H'(rho^n) - |u^n_K|^2/2)
        let t_new = cur.time_index as f64 * dt;
        let mut source_work = 0.0;
        if let Some(f_cells) = sources.mass_cell_averages(&mesh, t_new) {
            for k in 0..mesh.n_cells() {
                source_work += dt
                    * mesh.cell_measures[k]
                    * f_cells[k]
                    * (law.helmholtz_prime(cur.rho.values[k])?
                        - 0.5 * cur.u.cell_average(k).norm_sq());
            }
        }
        if let Some(tested) = sources.momentum_tested(&mesh, t_new) {
            for (fi, f) in tested.iter().enumerate() {
                source_work += dt * f.dot(cur.u.dof(fi));
            }
        }

        dissipation_acc += viscous + d_time_u + d_time_rho + d_space_u + d_space_rho;
        source_acc += source_work;
        let identity_residual = kin + int - e0 + dissipation_acc - source_acc;
        rows.push(EnergyRow {
            time_index: cur.time_index,
            kinetic: kin,
            internal: int,
            viscous,
            d_time_u,
            d_time_rho,
            d_space_u,
            d_space_rho,
            source_work,
            identity_residual,
        });
    }
    Ok(EnergyLedger { m0, e0, rows })
}

/// Total mass per step and the largest relative deviation from the start.
pub fn mass_history(traj: &Trajectory) -> (Vec<f64>, f64) {
    let masses: Vec<f64> = traj.states.iter().map(|s| s.rho.total()).collect();
    let m0 = masses[0];
    let dev = masses
        .iter()
        .map(|m| ((m - m0) / m0).abs())
        .fold(0.0, f64::max);
    (masses, dev)
}

#[derive(Debug, Clone)]
pub struct RelEnergyRow {
    pub m: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Debug, Clone)]
pub struct RelEnergyReport {
    pub rows: Vec<RelEnergyRow>,
    pub min_slack: f64,
}

/// Discrete profile of a smooth time-dependent test pair (r, U) sampled at
/// one time level: cell means of r, CR face means of U with boundary DOFs
/// pinned to zero (the inequality requires U to vanish on the boundary).
struct SampledPair {
    r: ScalarCellField,
    u_h: CRVectorField,
    u_cell: Vec<Vec2>,
}

fn sample_pair(
    mesh: &std::sync::Arc<crate::mesh::Mesh>,
    t: f64,
    r_fn: &dyn Fn(f64, Vec2) -> f64,
    u_fn: &dyn Fn(f64, Vec2) -> Vec2,
) -> Result<SampledPair, DiagnosticsError> {
    let r = ScalarCellField::from_fn(mesh.clone(), TRI_DEGREE5, |x| r_fn(t, x));
    let rmin = r.min();
    if rmin <= 0.0 {
        return Err(DiagnosticsError::NonPositiveReferenceField(rmin));
    }
    let full = cr_interpolate(mesh.clone(), EDGE_GAUSS4, |x| u_fn(t, x));
    let u_h = CRVectorField::new_internal(
        mesh.clone(),
        full.dofs[..mesh.n_internal_faces()].to_vec(),
    );
    let u_cell = (0..mesh.n_cells()).map(|c| u_h.cell_average(c)).collect();
    Ok(SampledPair { r, u_h, u_cell })
}

/// Evaluate both sides of the discrete relative-energy inequality for a
/// smooth test pair (r, U) and report the slack rhs - lhs per step (the
/// inequality holds when slack >= 0 up to solver residual).
#[allow(clippy::too_many_arguments)]
pub fn relative_energy_inequality_check(
    traj: &Trajectory,
    law: &PressureLaw,
    visc: ViscosityParams,
    sources: &SourceTerms,
    r_fn: impl Fn(f64, Vec2) -> f64,
    u_fn: impl Fn(f64, Vec2) -> Vec2,
) -> Result<RelEnergyReport, DiagnosticsError> {
    let dt = traj.dt;
    let mesh = traj.states[0].rho.mesh.clone();
    let n_states = traj.states.len();
    let samples: Vec<SampledPair> = (0..n_states)
        .map(|n| sample_pair(&mesh, n as f64 * dt, &r_fn, &u_fn))
        .collect::<Result<_, _>>()?;

    // relative energy at each level
    let rel_e = |n: usize| -> Result<f64, DiagnosticsError> {
        let st = &traj.states[n];
        let sp = &samples[n];
        let mut e = 0.0;
        for k in 0..mesh.n_cells() {
            let area = mesh.cell_measures[k];
            let du = st.u.cell_average(k) - sp.u_cell[k];
            e += area
                * (0.5 * st.rho.values[k] * du.norm_sq()
                    + law.bregman(st.rho.values[k], sp.r.values[k])?);
        }
        Ok(e)
    };
    let e0 = rel_e(0)?;

    let mut rows = Vec::with_capacity(n_states - 1);
    let mut visc_diff_acc = 0.0;
    let mut rhs_acc = 0.0;
    for n in 1..n_states {
        let st = &traj.states[n];
        let st_prev = &traj.states[n - 1];
        let sp = &samples[n];
        let sp_prev = &samples[n - 1];

        // lhs viscous difference term
        let mut visc_diff = 0.0;
        // t1: viscous cross terms
        let mut t1 = 0.0;
        for k in 0..mesh.n_cells() {
            let area = mesh.cell_measures[k];
            let gu = st.u.gradient_in_cell(k);
            let gbig = sp.u_h.gradient_in_cell(k);
            let gdiff = gu - gbig;
            visc_diff += area
                * (visc.mu * gdiff.frobenius_sq()
                    + (visc.mu + visc.lambda) * gdiff.trace().powi(2));
            t1 += area
                * (visc.mu * gbig.contract(gbig - gu)
                    + (visc.mu + visc.lambda) * gbig.trace() * (gbig.trace() - gu.trace()));
        }
        visc_diff_acc += dt * visc_diff;

        // t2: time-discretization of the test velocity
        let mut t2 = 0.0;
        for k in 0..mesh.n_cells() {
            let area = mesh.cell_measures[k];
            let dudt = (sp.u_cell[k] - sp_prev.u_cell[k]).scale(1.0 / dt);
            let midpoint = (sp_prev.u_cell[k] + sp.u_cell[k]).scale(0.5);
            t2 += area
                * st_prev.rho.values[k]
                * dudt.dot(midpoint - st_prev.u.cell_average(k));
        }
        t2 *= dt;

        // t3, t4, t6: face sums over both sides of every internal face
        let mut t3 = 0.0;
        let mut t4 = 0.0;
        let mut t6 = 0.0;
        for (fi, face) in mesh.internal_faces() {
            let (k0, l0) = (face.owner, face.neighbor.unwrap());
            let a_owner = st.u.dof(fi).dot(face.normal);
            let up = if a_owner > 0.0 { k0 } else { l0 };
            let rho_up = st.rho.values[up];
            let u_hat_up = st.u.cell_average(up);
            let u_big_sigma = sp.u_h.dof(fi);
            let half_sum = (sp.u_cell[k0] + sp.u_cell[l0]).scale(0.5);
            for &(k, sgn) in &[(k0, 1.0), (l0, -1.0)] {
                let a = sgn * a_owner;
                t3 -= dt
                    * face.measure
                    * rho_up
                    * (half_sum - u_hat_up).dot(sp.u_cell[k])
                    * a;
                t4 -= dt
                    * face.measure
                    * law.p(st.rho.values[k])
                    * u_big_sigma.dot(face.normal.scale(sgn));
                t6 += dt
                    * face.measure
                    * rho_up
                    * law.helmholtz_prime(sp_prev.r.values[k])?
                    * a;
            }
        }

        // t5: time-discretization of H'(r)
        let mut t5 = 0.0;
        for k in 0..mesh.n_cells() {
            t5 += mesh.cell_measures[k]
                * (sp.r.values[k] - st.rho.values[k])
                * (law.helmholtz_prime(sp.r.values[k])?
                    - law.helmholtz_prime(sp_prev.r.values[k])?);
        }

        // t7: source coupling for forced runs
        let mut t7 = 0.0;
        let t_new = st.time_index as f64 * dt;
        if let Some(f_cells) = sources.mass_cell_averages(&mesh, t_new) {
            for k in 0..mesh.n_cells() {
                t7 += dt
                    * mesh.cell_measures[k]
                    * f_cells[k]
                    * (0.5 * sp.u_cell[k].norm_sq() - 0.5 * st.u.cell_average(k).norm_sq()
                        + law.helmholtz_prime(st.rho.values[k])?
                        - law.helmholtz_prime(sp_prev.r.values[k])?);
            }
        }
        if let Some(tested) = sources.momentum_tested(&mesh, t_new) {
            for (fi, f) in tested.iter().enumerate() {
                t7 += dt * f.dot(st.u.dof(fi) - sp.u_h.dof(fi));
            }
        }

        rhs_acc += dt * t1 + t2 + t3 + t4 + t5 + t6 + t7;
        let lhs = rel_e(n)? - e0 + visc_diff_acc;
        rows.push(RelEnergyRow {
            m: n,
            lhs,
            rhs: rhs_acc,
            slack: rhs_acc - lhs,
        });
    }
    let min_slack = rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    Ok(RelEnergyReport { rows, min_slack })
}

#[derive(Debug, Clone)]
pub struct ErrorReport {
    /// relative energy against the sampled strong pair, per time level
    pub rel_energy: Vec<f64>,
    pub max_rel_energy: f64,
    /// dt * sum_n broken H1 seminorm squared of (u^n - U_h^n)
    pub grad_error_sq: f64,
}

/// The two quantities of the error estimate: the relative energy per step
/// and the accumulated broken-gradient error against a smooth pair.
pub fn error_vs_strong(
    traj: &Trajectory,
    law: &PressureLaw,
    r_fn: impl Fn(f64, Vec2) -> f64,
    u_fn: impl Fn(f64, Vec2) -> Vec2,
) -> Result<ErrorReport, DiagnosticsError> {
    let dt = traj.dt;
    let mesh = traj.states[0].rho.mesh.clone();
    let mut rel_energy = Vec::with_capacity(traj.states.len());
    let mut grad_error_sq = 0.0;
    for (n, st) in traj.states.iter().enumerate() {
        let sp = sample_pair(&mesh, n as f64 * dt, &r_fn, &u_fn)?;
        let mut e = 0.0;
        let mut g = 0.0;
        for k in 0..mesh.n_cells() {
            let area = mesh.cell_measures[k];
            let du = st.u.cell_average(k) - sp.u_cell[k];
            e += area
                * (0.5 * st.rho.values[k] * du.norm_sq()
                    + law.bregman(st.rho.values[k], sp.r.values[k])?);
            g += area * (st.u.gradient_in_cell(k) - sp.u_h.gradient_in_cell(k)).frobenius_sq();
        }
        rel_energy.push(e);
        if n > 0 {
            grad_error_sq += dt * g;
        }
    }
    let max_rel_energy = rel_energy.iter().cloned().fold(0.0, f64::max);
    Ok(ErrorReport {
        rel_energy,
        max_rel_energy,
        grad_error_sq,
    })
}

/// Density-dissipation monitors. For gamma >= 2 a single sum is returned;
/// for gamma < 2 the split sums, classified by max(rho_K, rho_L) >= 1 --
/// a computable surrogate for the existential intermediate density.
#[derive(Debug, Clone)]
pub struct DensityDissipation {
    pub total: f64,
    pub split: Option<(f64, f64)>,
}

pub fn density_dissipation_monitor(traj: &Trajectory, law: &PressureLaw) -> DensityDissipation {
    let dt = traj.dt;
    let mesh = &traj.states[0].rho.mesh;
    let gamma = law.gamma;
    let mut total = 0.0;
    let mut high = 0.0;
    let mut low = 0.0;
    for st in traj.states.iter().skip(1) {
        for (fi, face) in mesh.internal_faces() {
            let (k, l) = (face.owner, face.neighbor.unwrap());
            let a = st.u.dof(fi).dot(face.normal).abs();
            let (rk, rl) = (st.rho.values[k], st.rho.values[l]);
            let jump_sq = (rk - rl).powi(2);
            let mx = rk.max(rl);
            if gamma >= 2.0 {
                total += dt * face.measure * jump_sq / mx * a;
            } else if mx >= 1.0 {
                high += dt * face.measure * jump_sq / mx.powf(2.0 - gamma) * a;
            } else {
                low += dt * face.measure * jump_sq * a;
            }
        }
    }
    if gamma >= 2.0 {
        DensityDissipation { total, split: None }
    } else {
        DensityDissipation {
            total: high + low,
            split: Some((high, low)),
        }
    }
}

/// The a-priori-bounded quantities monitored for h-uniformity: the
/// space-time broken H1 norm of the velocity, the L-infinity-in-time
/// L-gamma norm of the density, and the peak discrete kinetic energy.
#[derive(Debug, Clone)]
pub struct UniformBounds {
    pub u_l2_vh: f64,
    pub rho_linf_lgamma: f64,
    pub max_kinetic: f64,
}

pub fn uniform_bound_monitors(traj: &Trajectory, law: &PressureLaw) -> UniformBounds {
    let dt = traj.dt;
    let mesh = &traj.states[0].rho.mesh;
    let mut u_sq = 0.0;
    let mut rho_norm = 0.0f64;
    let mut max_kin = 0.0f64;
    for (n, st) in traj.states.iter().enumerate() {
        let b = st.u.broken_norm(2.0);
        if n > 0 {
            u_sq += dt * b * b;
        }
        rho_norm = rho_norm.max(st.rho.lp_norm(law.gamma));
        let kin: f64 = (0..mesh.n_cells())
            .map(|k| mesh.cell_measures[k] * st.rho.values[k] * st.u.cell_average(k).norm_sq())
            .sum();
        max_kin = max_kin.max(kin);
    }
    UniformBounds {
        u_l2_vh: u_sq.sqrt(),
        rho_linf_lgamma: rho_norm,
        max_kinetic: max_kin,
    }
}

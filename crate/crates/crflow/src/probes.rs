//! Numerical probes of the discrete functional inequalities: each probe
//! evaluates both sides of an inequality over randomized fields on a
//! refinement sequence and reports the per-level worst ratio plus its
//! log-log trend versus h. Flat trends certify h-uniform constants.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::Vec2;
use crate::mesh::{structured_triangulation, Mesh, Rect};
use crate::quadrature::{integrate_cell, EDGE_GAUSS2, TRI_MIDPOINT};
use crate::spaces::{cr_interpolate, CRVectorField};

#[derive(Debug, Clone)]
pub struct ProbeLevel {
    pub level: usize,
    pub h: f64,
    pub theta: f64,
    pub max_ratio: f64,
    /// only set for two-sided probes (norm equivalence)
    pub min_ratio: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub id: &'static str,
    pub levels: Vec<ProbeLevel>,
    /// slope of ln(max_ratio) against ln(h)
    pub slope: f64,
    pub samples: usize,
}

impl ProbeReport {
    fn from_levels(id: &'static str, levels: Vec<ProbeLevel>, samples: usize) -> Self {
        let slope = fit_slope(
            &levels.iter().map(|l| l.h.ln()).collect::<Vec<_>>(),
            &levels.iter().map(|l| l.max_ratio.ln()).collect::<Vec<_>>(),
        );
        ProbeReport {
            id,
            levels,
            slope,
            samples,
        }
    }
}

pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// The standard refinement sequence for probes: structured unit-square
/// meshes starting at nx=4, refined uniformly.
pub fn probe_meshes(levels: usize) -> Vec<Arc<Mesh>> {
    let mut out = Vec::with_capacity(levels);
    let mut m = Arc::new(structured_triangulation(4, 4, Rect::UNIT).unwrap());
    for _ in 0..levels {
        out.push(m.clone());
        m = Arc::new(m.refine_uniform());
    }
    out
}

/// Rough sample: iid standard-normal DOFs on internal faces (the zero-
/// boundary CR space).
fn rough_field(mesh: &Arc<Mesh>, rng: &mut ChaCha8Rng) -> CRVectorField {
    let normal = |rng: &mut ChaCha8Rng| {
        // Box-Muller
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let dofs = (0..mesh.n_internal_faces())
        .map(|_| Vec2::new(normal(rng), normal(rng)))
        .collect();
    CRVectorField::new_internal(mesh.clone(), dofs)
}

/// Smooth sample: a random trigonometric polynomial with boundary-vanishing
/// modes, drawn once per sample index and interpolated on every level (so a
/// level sweep sees the same underlying function).
#[derive(Clone)]
struct TrigField {
    coeffs: [[Vec2; 3]; 3],
}

impl TrigField {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut coeffs = [[Vec2::ZERO; 3]; 3];
        for row in coeffs.iter_mut() {
            for c in row.iter_mut() {
                *c = Vec2::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            }
        }
        TrigField { coeffs }
    }

    fn eval(&self, p: Vec2) -> Vec2 {
        let pi = std::f64::consts::PI;
        let mut s = Vec2::ZERO;
        for (i, row) in self.coeffs.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                s += c.scale(((i + 1) as f64 * pi * p.x).sin() * ((j + 1) as f64 * pi * p.y).sin());
            }
        }
        s
    }
}

/// Sobolev embedding on the CR space: ||v||_{L^q} <= C |v|_{V^2_h} with C
/// independent of h. Probed with smooth random samples so the same function
/// is followed down the refinement sequence.
pub fn probe_sobolev_vh(levels: usize, samples: usize, q: f64, seed: u64) -> ProbeReport {
    let meshes = probe_meshes(levels);
    let fields: Vec<TrigField> = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..samples).map(|_| TrigField::random(&mut rng)).collect()
    };
    let mut out = Vec::new();
    for (li, mesh) in meshes.iter().enumerate() {
        let quality = mesh.quality();
        let mut max_ratio = 0.0f64;
        for f in &fields {
            let vh = cr_interpolate(mesh.clone(), EDGE_GAUSS2, |p| f.eval(p));
            let num = vh.lp_norm(q);
            let den = vh.broken_norm(2.0);
            if den > 0.0 {
                max_ratio = max_ratio.max(num / den);
            }
        }
        out.push(ProbeLevel {
            level: li,
            h: quality.h,
            theta: quality.theta,
            max_ratio,
            min_ratio: None,
        });
    }
    ProbeReport::from_levels("sobolev_vh", out, samples)
}

/// Face-jump control: sum (1/h_sigma) int [v]^2 <= C |v|^2_{V^2_h}.
pub fn probe_jump_bound(levels: usize, samples: usize, seed: u64) -> ProbeReport {
    let meshes = probe_meshes(levels);
    let mut out = Vec::new();
    for (li, mesh) in meshes.iter().enumerate() {
        let quality = mesh.quality();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (li as u64) << 8);
        let mut max_ratio = 0.0f64;
        for _ in 0..samples {
            let vh = rough_field(mesh, &mut rng);
            let num = vh.face_jump_mean_square();
            let den = vh.broken_norm(2.0).powi(2);
            if den > 0.0 {
                max_ratio = max_ratio.max(num / den);
            }
        }
        out.push(ProbeLevel {
            level: li,
            h: quality.h,
            theta: quality.theta,
            max_ratio,
            min_ratio: None,
        });
    }
    ProbeReport::from_levels("jump_bound", out, samples)
}

/// Equivalence of the face-lumped norm (sum |sigma| h_sigma |v_sigma|^2)^(1/2)
/// with the L^2 norm: both ratio directions stay in a level-stable band.
pub fn probe_norm_equivalence(levels: usize, samples: usize, seed: u64) -> ProbeReport {
    let meshes = probe_meshes(levels);
    let mut out = Vec::new();
    for (li, mesh) in meshes.iter().enumerate() {
        let quality = mesh.quality();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (li as u64) << 8);
        let mut max_ratio = 0.0f64;
        let mut min_ratio = f64::INFINITY;
        for _ in 0..samples {
            let vh = rough_field(mesh, &mut rng);
            let lumped: f64 = (0..mesh.n_faces())
                .map(|fi| {
                    let f = &mesh.faces[fi];
                    f.measure * f.diameter * vh.dof(fi).norm_sq()
                })
                .sum::<f64>()
                .sqrt();
            let l2 = vh.lp_norm(2.0);
            if l2 > 0.0 {
                let r = lumped / l2;
                max_ratio = max_ratio.max(r);
                min_ratio = min_ratio.min(r);
            }
        }
        out.push(ProbeLevel {
            level: li,
            h: quality.h,
            theta: quality.theta,
            max_ratio,
            min_ratio: Some(min_ratio),
        });
    }
    ProbeReport::from_levels("norm_equivalence", out, samples)
}

#[derive(Debug, Clone)]
pub struct ProjectionReport {
    /// fitted order of ||v - v_h||_{L^2}: expected about 2
    pub l2_order: f64,
    /// fitted order of the broken-gradient error: expected about 1
    pub grad_order: f64,
    /// stability ratio |v_h|_{V^2_h} / ||grad v||_{L^2} per level
    pub stability: ProbeReport,
}

/// Projection error orders and H1 stability for a smooth boundary-vanishing
/// field.
pub fn probe_projection_orders(levels: usize) -> ProjectionReport {
    let pi = std::f64::consts::PI;
    let v = |p: Vec2| {
        Vec2::new(
            (pi * p.x).sin() * (pi * p.y).sin(),
            (2.0 * pi * p.x).sin() * (pi * p.y).sin(),
        )
    };
    let grad_v = |p: Vec2| -> [[f64; 2]; 2] {
        [
            [
                pi * (pi * p.x).cos() * (pi * p.y).sin(),
                pi * (pi * p.x).sin() * (pi * p.y).cos(),
            ],
            [
                2.0 * pi * (2.0 * pi * p.x).cos() * (pi * p.y).sin(),
                pi * (2.0 * pi * p.x).sin() * (pi * p.y).cos(),
            ],
        ]
    };
    let meshes = probe_meshes(levels);
    let mut hs = Vec::new();
    let mut l2_errs = Vec::new();
    let mut grad_errs = Vec::new();
    let mut stab_levels = Vec::new();
    for (li, mesh) in meshes.iter().enumerate() {
        let quality = mesh.quality();
        let vh = cr_interpolate(mesh.clone(), crate::quadrature::EDGE_GAUSS4, v);
        let mut l2 = 0.0;
        let mut ge = 0.0;
        let mut gnorm = 0.0;
        for c in 0..mesh.n_cells() {
            l2 += integrate_cell(mesh, c, crate::quadrature::TRI_DEGREE5, |x| {
                (vh.value_in_cell(c, x) - v(x)).norm_sq()
            });
            let g = vh.gradient_in_cell(c);
            ge += integrate_cell(mesh, c, crate::quadrature::TRI_DEGREE5, |x| {
                let gv = grad_v(x);
                let mut s = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        s += (g.a[i][j] - gv[i][j]).powi(2);
                    }
                }
                s
            });
            gnorm += integrate_cell(mesh, c, crate::quadrature::TRI_DEGREE5, |x| {
                let gv = grad_v(x);
                gv.iter().flatten().map(|t| t * t).sum()
            });
        }
        hs.push(quality.h.ln());
        l2_errs.push(l2.sqrt().ln());
        grad_errs.push(ge.sqrt().ln());
        stab_levels.push(ProbeLevel {
            level: li,
            h: quality.h,
            theta: quality.theta,
            max_ratio: vh.broken_norm(2.0) / gnorm.sqrt(),
            min_ratio: None,
        });
    }
    ProjectionReport {
        l2_order: fit_slope(&hs, &l2_errs),
        grad_order: fit_slope(&hs, &grad_errs),
        stability: ProbeReport::from_levels("projection_stability", stab_levels, 1),
    }
}

/// Broken Poincare inequality: ||v - cell_average(v)||_{L^2} <= C h |v|_{V^2_h}
/// for CR sample fields.
pub fn probe_poincare(levels: usize, samples: usize, seed: u64) -> ProbeReport {
    let meshes = probe_meshes(levels);
    let mut out = Vec::new();
    for (li, mesh) in meshes.iter().enumerate() {
        let quality = mesh.quality();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (li as u64) << 8);
        let mut max_ratio = 0.0f64;
        for _ in 0..samples {
            let vh = rough_field(mesh, &mut rng);
            let mut num = 0.0;
            for c in 0..mesh.n_cells() {
                let avg = vh.cell_average(c);
                num += integrate_cell(mesh, c, TRI_MIDPOINT, |x| {
                    (vh.value_in_cell(c, x) - avg).norm_sq()
                });
            }
            let den = quality.h * vh.broken_norm(2.0);
            if den > 0.0 {
                max_ratio = max_ratio.max(num.sqrt() / den);
            }
        }
        out.push(ProbeLevel {
            level: li,
            h: quality.h,
            theta: quality.theta,
            max_ratio,
            min_ratio: None,
        });
    }
    ProbeReport::from_levels("poincare", out, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;

    #[test]
    fn slope_fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        assert!((fit_slope(&x, &y) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn sobolev_single_basis_ratio_finite() {
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
        let vh = CRVectorField::new_internal(mesh, vec![Vec2::new(1.0, 0.0)]);
        let ratio = vh.lp_norm(4.0) / vh.broken_norm(2.0);
        assert!(ratio.is_finite() && ratio > 0.0);
    }

    #[test]
    fn jump_bound_flat_trend() {
        let r = probe_jump_bound(4, 20, 7);
        assert!(r.slope.abs() <= 0.15, "slope {}", r.slope);
        assert!(r.levels.iter().all(|l| l.max_ratio.is_finite()));
    }

    #[test]
    fn sobolev_flat_trend() {
        let r = probe_sobolev_vh(4, 20, 4.0, 11);
        assert!(r.slope.abs() <= 0.15, "slope {}", r.slope);
    }

    #[test]
    fn norm_equivalence_band() {
        let r = probe_norm_equivalence(4, 20, 3);
        assert!(r.slope.abs() <= 0.15, "slope {}", r.slope);
        for l in &r.levels {
            let min = l.min_ratio.unwrap();
            assert!(min > 0.05 && l.max_ratio < 20.0, "band [{} {}]", min, l.max_ratio);
        }
    }

    #[test]
    fn poincare_flat_trend() {
        let r = probe_poincare(4, 20, 19);
        assert!(r.slope.abs() <= 0.15, "slope {}", r.slope);
    }

    #[test]
    fn projection_orders_match_theory() {
        let p = probe_projection_orders(4);
        assert!((p.l2_order - 2.0).abs() <= 0.2, "l2 order {}", p.l2_order);
        assert!((p.grad_order - 1.0).abs() <= 0.2, "grad order {}", p.grad_order);
        assert!(p.stability.slope.abs() <= 0.15);
        assert!(p.grad_order >= p.l2_order - 1.1);
    }

    #[test]
    fn affine_projection_is_exact() {
        // no boundary pinning in the extended interpolation: global affine
        // reproduction is machine-exact
        let mesh = probe_meshes(1).pop().unwrap();
        let vh = cr_interpolate(mesh.clone(), EDGE_GAUSS2, |p| {
            Vec2::new(0.3 * p.x - p.y + 0.1, p.x + 0.5 * p.y)
        });
        for c in 0..mesh.n_cells() {
            let x = mesh.cell_centroids[c];
            let d = vh.value_in_cell(c, x) - Vec2::new(0.3 * x.x - x.y + 0.1, x.x + 0.5 * x.y);
            assert!(d.norm() < 1e-13);
        }
    }
}

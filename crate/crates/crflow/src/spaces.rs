//! Discrete function spaces: piecewise constants per cell and the
//! Crouzeix-Raviart (CR) vector space with one face-mean DOF per internal
//! face, boundary faces pinned to zero. Includes projections, broken
//! gradients/norms, and face-jump functionals.

use std::sync::Arc;

use crate::geometry::{Mat2, Vec2};
use crate::mesh::Mesh;
use crate::quadrature::{integrate_face, EdgeRule, TriangleRule, EDGE_GAUSS2, TRI_MIDPOINT};

/// One real value per cell.
#[derive(Debug, Clone)]
pub struct ScalarCellField {
    pub mesh: Arc<Mesh>,
    pub values: Vec<f64>,
}

impl ScalarCellField {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), mesh.n_cells());
        ScalarCellField { mesh, values }
    }

    pub fn constant(mesh: Arc<Mesh>, c: f64) -> Self {
        let n = mesh.n_cells();
        ScalarCellField {
            mesh,
            values: vec![c; n],
        }
    }

    /// Cell averages of an analytic function, exact up to the rule's degree.
    pub fn from_fn(mesh: Arc<Mesh>, rule: TriangleRule, mut f: impl FnMut(Vec2) -> f64) -> Self {
        let values = (0..mesh.n_cells())
            .map(|c| crate::quadrature::integrate_cell(&mesh, c, rule, &mut f) / mesh.cell_measures[c])
            .collect();
        ScalarCellField { mesh, values }
    }

    pub fn total(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.mesh.cell_measures)
            .map(|(v, a)| v * a)
            .sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        self.values
            .iter()
            .zip(&self.mesh.cell_measures)
            .map(|(v, a)| a * v.abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }
}

/// Vector CR field: one `Vec2` DOF (face mean) per face. Solver unknowns
/// live in the zero-boundary subspace, built with [`CRVectorField::new_internal`],
/// which pins boundary DOFs to zero; the extended boundary-inclusive space
/// is available for interpolation of general fields.
#[derive(Debug, Clone)]
pub struct CRVectorField {
    pub mesh: Arc<Mesh>,
    pub dofs: Vec<Vec2>,
}

impl CRVectorField {
    pub fn new(mesh: Arc<Mesh>, dofs: Vec<Vec2>) -> Self {
        assert_eq!(dofs.len(), mesh.n_faces());
        CRVectorField { mesh, dofs }
    }

    /// Build from internal-face DOFs only; boundary faces are zero.
    pub fn new_internal(mesh: Arc<Mesh>, internal: Vec<Vec2>) -> Self {
        assert_eq!(internal.len(), mesh.n_internal_faces());
        let mut dofs = internal;
        dofs.resize(mesh.n_faces(), Vec2::ZERO);
        CRVectorField { mesh, dofs }
    }

    pub fn zero(mesh: Arc<Mesh>) -> Self {
        let n = mesh.n_faces();
        CRVectorField {
            mesh,
            dofs: vec![Vec2::ZERO; n],
        }
    }

    /// Face-mean value.
    pub fn dof(&self, face: usize) -> Vec2 {
        self.dofs[face]
    }

    /// Largest boundary DOF magnitude; zero for fields in the solver space.
    pub fn boundary_residual(&self) -> f64 {
        self.dofs[self.mesh.n_internal_faces()..]
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    /// Cell average: the CR basis functions have cell mean 1/3, so the
    /// average is the mean of the three face DOFs.
    pub fn cell_average(&self, c: usize) -> Vec2 {
        let mut s = Vec2::ZERO;
        for &f in &self.mesh.cell_faces[c] {
            s += self.dof(f);
        }
        s.scale(1.0 / 3.0)
    }

    /// Pointwise value of the affine restriction to cell `c`.
    pub fn value_in_cell(&self, c: usize, x: Vec2) -> Vec2 {
        let mut s = Vec2::ZERO;
        for &f in &self.mesh.cell_faces[c] {
            s += self.dof(f).scale(self.mesh.cr_basis_value(c, f, x));
        }
        s
    }

    /// Constant per-cell gradient tensor, entries (i,j) = d u_i / d x_j.
    pub fn gradient_in_cell(&self, c: usize) -> Mat2 {
        let mut g = Mat2::ZERO;
        for &f in &self.mesh.cell_faces[c] {
            g += self.dof(f).outer(self.mesh.cr_basis_gradient(c, f));
        }
        g
    }

    pub fn broken_gradient(&self) -> Vec<Mat2> {
        (0..self.mesh.n_cells())
            .map(|c| self.gradient_in_cell(c))
            .collect()
    }

    /// (Sum over cells of |K| * |grad u|_F^p)^(1/p).
    pub fn broken_norm(&self, p: f64) -> f64 {
        (0..self.mesh.n_cells())
            .map(|c| self.mesh.cell_measures[c] * self.gradient_in_cell(c).frobenius().powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }

    /// L^p norm of the piecewise-affine function itself (exact for p=2).
    pub fn lp_norm(&self, p: f64) -> f64 {
        let rule = if p == 2.0 {
            TRI_MIDPOINT
        } else {
            crate::quadrature::TRI_DEGREE5
        };
        (0..self.mesh.n_cells())
            .map(|c| {
                crate::quadrature::integrate_cell(&self.mesh, c, rule, |x| {
                    self.value_in_cell(c, x).norm().powf(p)
                })
            })
            .sum::<f64>()
            .powf(1.0 / p)
    }

    /// Sum over faces of (1/h_sigma) * integral of |[u]|^2, where [u] is the
    /// two-sided trace difference on internal faces and the trace itself on
    /// boundary faces. Exact: the jump is affine along each face.
    pub fn face_jump_mean_square(&self) -> f64 {
        let mesh = &self.mesh;
        let mut total = 0.0;
        for (fi, face) in mesh.faces.iter().enumerate() {
            let k = face.owner;
            let jump_sq = integrate_face(mesh, fi, EDGE_GAUSS2, |x| {
                let j = match face.neighbor {
                    Some(l) => self.value_in_cell(k, x) - self.value_in_cell(l, x),
                    None => self.value_in_cell(k, x),
                };
                j.norm_sq()
            });
            total += jump_sq / face.diameter;
        }
        total
    }
}

/// Face-mean interpolation onto the extended CR space (boundary faces
/// included). For boundary-vanishing `v` the result lies in the solver
/// space up to quadrature error; see `project_initial_data` for the exact
/// zero-boundary variant.
pub fn cr_interpolate(mesh: Arc<Mesh>, rule: EdgeRule, mut v: impl FnMut(Vec2) -> Vec2) -> CRVectorField {
    let dofs = (0..mesh.n_faces())
        .map(|fi| {
            let measure = mesh.faces[fi].measure;
            let x = integrate_face(&mesh, fi, rule, |p| v(p).x) / measure;
            let y = integrate_face(&mesh, fi, rule, |p| v(p).y) / measure;
            Vec2::new(x, y)
        })
        .collect();
    CRVectorField { mesh, dofs }
}

/// Per-cell averages of an analytic vector field.
pub fn cell_average_vec(mesh: &Mesh, rule: TriangleRule, mut v: impl FnMut(Vec2) -> Vec2) -> Vec<Vec2> {
    (0..mesh.n_cells())
        .map(|c| {
            let x = crate::quadrature::integrate_cell(mesh, c, rule, |p| v(p).x);
            let y = crate::quadrature::integrate_cell(mesh, c, rule, |p| v(p).y);
            Vec2::new(x / mesh.cell_measures[c], y / mesh.cell_measures[c])
        })
        .collect()
}

/// |sum_K q_K int_K div v_h  -  int q div v| for an analytic `v` with
/// analytic divergence; measures how exactly the CR projection preserves
/// the divergence against piecewise constants.
pub fn divergence_compatibility_check(
    q: &ScalarCellField,
    mut v: impl FnMut(Vec2) -> Vec2,
    mut div_v: impl FnMut(Vec2) -> f64,
    rule: TriangleRule,
) -> f64 {
    let mesh = q.mesh.clone();
    let vh = cr_interpolate(mesh.clone(), crate::quadrature::EDGE_GAUSS4, &mut v);
    let mut discrete = 0.0;
    let mut exact = 0.0;
    for c in 0..mesh.n_cells() {
        discrete += q.values[c] * mesh.cell_measures[c] * vh.gradient_in_cell(c).trace();
        exact += q.values[c] * crate::quadrature::integrate_cell(&mesh, c, rule, &mut div_v);
    }
    (discrete - exact).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, structured_triangulation, Rect};
    use crate::quadrature::{EDGE_GAUSS4, TRI_DEGREE5};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_cell() -> Arc<Mesh> {
        Arc::new(
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
        )
    }

    #[test]
    fn cell_average_examples() {
        let m = two_cell();
        let c = ScalarCellField::from_fn(m.clone(), TRI_MIDPOINT, |_| 7.5);
        assert!(c.values.iter().all(|&v| (v - 7.5).abs() < 1e-14));
        // v = x: averages are the centroid x-coordinates 2/3 and 1/3
        let f = ScalarCellField::from_fn(m, TRI_MIDPOINT, |p| p.x);
        assert_relative_eq!(f.values[0], 2.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(f.values[1], 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn cr_basis_property() {
        // (1/|s'|) int_{s'} phi_s = delta_{ss'} for faces sharing a cell
        let m = Arc::new(structured_triangulation(4, 4, Rect::UNIT).unwrap());
        for c in 0..m.n_cells() {
            for &f in &m.cell_faces[c] {
                for &fp in &m.cell_faces[c] {
                    let mean = integrate_face(&m, fp, EDGE_GAUSS2, |x| m.cr_basis_value(c, f, x))
                        / m.faces[fp].measure;
                    let expect = if f == fp { 1.0 } else { 0.0 };
                    assert!((mean - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn partition_of_unity() {
        let m = Arc::new(structured_triangulation(3, 3, Rect::UNIT).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for c in 0..m.n_cells() {
            for _ in 0..5 {
                // random barycentric point
                let (mut a, mut b): (f64, f64) = (rng.gen(), rng.gen());
                if a + b > 1.0 {
                    a = 1.0 - a;
                    b = 1.0 - b;
                }
                let [v0, v1, v2] = m.cells[c];
                let x = m.vertices[v0].scale(1.0 - a - b)
                    + m.vertices[v1].scale(a)
                    + m.vertices[v2].scale(b);
                let sum: f64 = m.cell_faces[c]
                    .iter()
                    .map(|&f| m.cr_basis_value(c, f, x))
                    .sum();
                assert!((sum - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn affine_reproduction_and_gradient() {
        let m = Arc::new(structured_triangulation(2, 2, Rect::UNIT).unwrap());
        // v = (x + 2y, 3x - y): gradient [[1,2],[3,-1]]
        let v = |p: Vec2| Vec2::new(p.x + 2.0 * p.y, 3.0 * p.x - p.y);
        let vh = cr_interpolate(m.clone(), EDGE_GAUSS2, v);
        for c in 0..m.n_cells() {
            let g = vh.gradient_in_cell(c);
            assert_relative_eq!(g.a[0][0], 1.0, epsilon = 1e-12);
            assert_relative_eq!(g.a[0][1], 2.0, epsilon = 1e-12);
            assert_relative_eq!(g.a[1][0], 3.0, epsilon = 1e-12);
            assert_relative_eq!(g.a[1][1], -1.0, epsilon = 1e-12);
            // interpolant matches v at internal face midpoints
            for &f in &m.cell_faces[c] {
                if m.faces[f].is_internal() {
                    let x = m.faces[f].midpoint;
                    let d = vh.value_in_cell(c, x) - v(x);
                    assert!(d.norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn broken_norm_affine_field() {
        let m = Arc::new(structured_triangulation(2, 2, Rect::UNIT).unwrap());
        let vh = cr_interpolate(m, EDGE_GAUSS2, |p| Vec2::new(p.x, -p.y));
        // grad = [[1,0],[0,-1]], Frobenius sqrt(2), over unit area
        assert_relative_eq!(vh.broken_norm(2.0), 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn interpolation_second_order() {
        // sin(pi x) sin(pi y): L2 error O(h^2)
        let pi = std::f64::consts::PI;
        let v = move |p: Vec2| Vec2::new((pi * p.x).sin() * (pi * p.y).sin(), 0.0);
        let mut errs = Vec::new();
        let mut m = Arc::new(structured_triangulation(4, 4, Rect::UNIT).unwrap());
        for _ in 0..4 {
            let vh = cr_interpolate(m.clone(), EDGE_GAUSS4, v);
            let mut err_sq = 0.0;
            for c in 0..m.n_cells() {
                err_sq += crate::quadrature::integrate_cell(&m, c, TRI_DEGREE5, |x| {
                    (vh.value_in_cell(c, x) - v(x)).norm_sq()
                });
            }
            errs.push(err_sq.sqrt());
            m = Arc::new(m.refine_uniform());
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.8 && order < 2.2, "order {}", order);
        }
    }

    #[test]
    fn jump_functional_basics() {
        let m = two_cell();
        // a globally affine CR field is continuous: internal jumps vanish,
        // only boundary traces contribute
        let vh = cr_interpolate(m.clone(), EDGE_GAUSS2, |p| Vec2::new(p.x, p.y));
        let internal_only: f64 = {
            let mut t = 0.0;
            for (fi, face) in m.internal_faces() {
                let j = integrate_face(&m, fi, EDGE_GAUSS2, |x| {
                    (vh.value_in_cell(face.owner, x)
                        - vh.value_in_cell(face.neighbor.unwrap(), x))
                    .norm_sq()
                });
                t += j / face.diameter;
            }
            t
        };
        assert!(internal_only < 1e-26);

        // mean of the jump vanishes on internal faces even when [u]^2 > 0
        let mut dofs = vec![Vec2::ZERO; m.n_internal_faces()];
        dofs[0] = Vec2::new(1.0, 0.0);
        let phi = CRVectorField::new_internal(m.clone(), dofs);
        for (fi, face) in m.internal_faces() {
            let mean = integrate_face(&m, fi, EDGE_GAUSS2, |x| {
                (phi.value_in_cell(face.owner, x)
                    - phi.value_in_cell(face.neighbor.unwrap(), x))
                .x
            });
            assert!(mean.abs() < 1e-13);
        }
        assert!(phi.face_jump_mean_square() > 0.0);
    }

    #[test]
    fn divergence_compatibility() {
        let m = Arc::new(structured_triangulation(4, 4, Rect::UNIT).unwrap());
        // affine v: projection exact
        let q = ScalarCellField::from_fn(m.clone(), TRI_MIDPOINT, |p| p.x * p.y + 0.3);
        let r = divergence_compatibility_check(
            &q,
            |p| Vec2::new(2.0 * p.x + p.y, p.x - 3.0 * p.y),
            |_| -1.0,
            TRI_DEGREE5,
        );
        assert!(r < 1e-12);
        // constant q: both sides vanish by the divergence theorem
        let pi = std::f64::consts::PI;
        let qc = ScalarCellField::constant(m.clone(), 2.0);
        let r = divergence_compatibility_check(
            &qc,
            move |p| Vec2::new((pi * p.x).sin() * (pi * p.y).sin(), 0.0),
            move |p| pi * (pi * p.x).cos() * (pi * p.y).sin(),
            TRI_DEGREE5,
        );
        assert!(r < 1e-10);
    }

    proptest! {
        #[test]
        fn broken_norm_triangle_and_homogeneity(
            seed in 0u64..50,
            lambda in -3.0f64..3.0,
        ) {
            let m = Arc::new(structured_triangulation(3, 3, Rect::UNIT).unwrap());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rand_field = || {
                let dofs = (0..m.n_internal_faces())
                    .map(|_| Vec2::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                    .collect();
                CRVectorField::new_internal(m.clone(), dofs)
            };
            let u = rand_field();
            let v = rand_field();
            let sum = CRVectorField::new(
                m.clone(),
                u.dofs.iter().zip(&v.dofs).map(|(&a, &b)| a + b).collect(),
            );
            prop_assert!(sum.broken_norm(2.0) <= u.broken_norm(2.0) + v.broken_norm(2.0) + 1e-12);
            let scaled = CRVectorField::new(
                m.clone(),
                u.dofs.iter().map(|&a| a.scale(lambda)).collect(),
            );
            let expect = lambda.abs() * u.broken_norm(2.0);
            prop_assert!((scaled.broken_norm(2.0) - expect).abs() <= 1e-12 * (1.0 + expect));
        }
    }

    #[test]
    fn poincare_mean_bound_stable() {
        // |v - cell_average(v)|_L2 <= C h |grad v|_L2 with stable C
        let pi = std::f64::consts::PI;
        let v = move |p: Vec2| (pi * p.x).sin() * (2.0 * pi * p.y).cos();
        let gv = move |p: Vec2| {
            Vec2::new(
                pi * (pi * p.x).cos() * (2.0 * pi * p.y).cos(),
                -2.0 * pi * (pi * p.x).sin() * (2.0 * pi * p.y).sin(),
            )
        };
        let mut ratios = Vec::new();
        let mut m = Arc::new(structured_triangulation(4, 4, Rect::UNIT).unwrap());
        for _ in 0..4 {
            let avg = ScalarCellField::from_fn(m.clone(), TRI_DEGREE5, v);
            let mut num = 0.0;
            let mut den = 0.0;
            for c in 0..m.n_cells() {
                num += crate::quadrature::integrate_cell(&m, c, TRI_DEGREE5, |x| {
                    (v(x) - avg.values[c]).powi(2)
                });
                den += crate::quadrature::integrate_cell(&m, c, TRI_DEGREE5, |x| gv(x).norm_sq());
            }
            let h = m.quality().h;
            ratios.push(num.sqrt() / (h * den.sqrt()));
            m = Arc::new(m.refine_uniform());
        }
        let (lo, hi) = ratios
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
        assert!(hi / lo < 1.5, "ratios {:?}", ratios);
    }
}

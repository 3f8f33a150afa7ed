//! Conforming triangulations of 2D polygonal domains with the face-based
//! connectivity the scheme needs: oriented face normals, measures, owner/
//! neighbor adjacency and regularity metrics.
//!
//! Faces are numbered with all internal faces first, so a face index below
//! [`Mesh::n_internal_faces`] doubles as a velocity degree-of-freedom index.

use std::collections::HashMap;

use thiserror::Error;

use crate::geometry::Vec2;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("vertex index {0} out of bounds")]
    InvalidIndex(usize),
    #[error("cell {0} is degenerate (zero area)")]
    DegenerateCell(usize),
    #[error("duplicate cell {0}")]
    DuplicateCell(usize),
    #[error("mesh is not conforming: {0}")]
    NonConforming(String),
}

/// An edge of the triangulation. The stored normal is the unit normal
/// oriented outward from the owner cell; for an internal face this points
/// from owner to neighbor, and the neighbor-side normal is its negation.
#[derive(Debug, Clone)]
pub struct Face {
    pub vertices: [usize; 2],
    pub measure: f64,
    pub diameter: f64,
    pub midpoint: Vec2,
    pub owner: usize,
    pub neighbor: Option<usize>,
    pub normal: Vec2,
}

impl Face {
    pub fn is_internal(&self) -> bool {
        self.neighbor.is_some()
    }
}

/// Immutable triangulation. `cell_faces[c][i]` is the face opposite the
/// local vertex `cells[c][i]`.
#[derive(Debug)]
pub struct Mesh {
    pub vertices: Vec<Vec2>,
    pub cells: Vec<[usize; 3]>,
    pub faces: Vec<Face>,
    pub cell_faces: Vec<[usize; 3]>,
    pub cell_measures: Vec<f64>,
    pub cell_diameters: Vec<f64>,
    pub cell_centroids: Vec<Vec2>,
    n_internal_faces: usize,
}

/// Axis-aligned bounding rectangle for structured mesh generation.
#[derive(Debug, Clone, Copy)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };
}

/// Bounds of Eq.-(3.5)-style uniformity: ratios that stay mesh-independent
/// on a uniformly regular refinement sequence.
#[derive(Debug, Clone, Copy)]
pub struct UniformityRatios {
    pub h_over_h_cell_max: f64,
    pub h_over_h_face_max: f64,
    pub face_h_over_cell_max: f64,
    pub face_h_over_cell_min: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct MeshQuality {
    /// min over cells of (incircle diameter) / h_K.
    pub theta: f64,
    /// max cell diameter.
    pub h: f64,
    pub uniformity: UniformityRatios,
}

impl Mesh {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_internal_faces(&self) -> usize {
        self.n_internal_faces
    }

    pub fn internal_faces(&self) -> impl Iterator<Item = (usize, &Face)> {
        self.faces[..self.n_internal_faces]
            .iter()
            .enumerate()
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = (usize, &Face)> {
        self.faces[self.n_internal_faces..]
            .iter()
            .enumerate()
            .map(move |(i, f)| (i + self.n_internal_faces, f))
    }

    /// Unit normal of `face` pointing out of `cell`.
    pub fn normal_for(&self, face: usize, cell: usize) -> Vec2 {
        let f = &self.faces[face];
        if f.owner == cell {
            f.normal
        } else {
            debug_assert_eq!(f.neighbor, Some(cell));
            -f.normal
        }
    }

    /// The cell on the other side of an internal face.
    pub fn other_cell(&self, face: usize, cell: usize) -> Option<usize> {
        let f = &self.faces[face];
        if f.owner == cell {
            f.neighbor
        } else {
            Some(f.owner)
        }
    }

    /// Barycentric coordinates of `x` with respect to cell `c`, in the
    /// order of `cells[c]`.
    pub fn barycentric(&self, c: usize, x: Vec2) -> [f64; 3] {
        let [a, b, d] = self.cells[c];
        let (pa, pb, pd) = (self.vertices[a], self.vertices[b], self.vertices[d]);
        let area2 = (pb - pa).cross(pd - pa);
        let la = (pb - x).cross(pd - x) / area2;
        let lb = (pd - x).cross(pa - x) / area2;
        [la, lb, 1.0 - la - lb]
    }

    /// Gradient of the scalar Crouzeix-Raviart basis function attached to
    /// `face` restricted to `cell` (constant there).
    pub fn cr_basis_gradient(&self, cell: usize, face: usize) -> Vec2 {
        let f = &self.faces[face];
        self.normal_for(face, cell)
            .scale(f.measure / self.cell_measures[cell])
    }

    /// Value at `x` of the CR basis function of `face` restricted to `cell`.
    pub fn cr_basis_value(&self, cell: usize, face: usize, x: Vec2) -> f64 {
        let local = self.cell_faces[cell]
            .iter()
            .position(|&f| f == face)
            .expect("face does not belong to cell");
        let lambda = self.barycentric(cell, x);
        1.0 - 2.0 * lambda[local]
    }

    pub fn quality(&self) -> MeshQuality {
        let mut theta = f64::INFINITY;
        let h = self
            .cell_diameters
            .iter()
            .cloned()
            .fold(0.0f64, f64::max);
        for c in 0..self.n_cells() {
            let perimeter: f64 = self.cell_faces[c]
                .iter()
                .map(|&f| self.faces[f].measure)
                .sum();
            // incircle radius r = 2|K| / perimeter; theta_K = 2r / h_K
            let incircle_diameter = 4.0 * self.cell_measures[c] / perimeter;
            theta = theta.min(incircle_diameter / self.cell_diameters[c]);
        }
        let mut h_over_h_cell_max = 0.0f64;
        let mut h_over_h_face_max = 0.0f64;
        let mut face_h_over_cell_max = 0.0f64;
        let mut face_h_over_cell_min = f64::INFINITY;
        for c in 0..self.n_cells() {
            h_over_h_cell_max = h_over_h_cell_max.max(h / self.cell_diameters[c]);
            for &f in &self.cell_faces[c] {
                let r = self.faces[f].measure * h / self.cell_measures[c];
                h_over_h_face_max = h_over_h_face_max.max(h / self.faces[f].diameter);
                face_h_over_cell_max = face_h_over_cell_max.max(r);
                face_h_over_cell_min = face_h_over_cell_min.min(r);
            }
        }
        MeshQuality {
            theta,
            h,
            uniformity: UniformityRatios {
                h_over_h_cell_max,
                h_over_h_face_max,
                face_h_over_cell_max,
                face_h_over_cell_min,
            },
        }
    }

    /// Split every triangle into 4 similar children through the edge
    /// midpoints. Preserves theta exactly and halves h.
    pub fn refine_uniform(&self) -> Mesh {
        let mut vertices = self.vertices.clone();
        let mut midpoint_of: HashMap<(usize, usize), usize> = HashMap::new();
        let mut cells = Vec::with_capacity(4 * self.n_cells());
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vec2>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint_of.entry(key).or_insert_with(|| {
                let p = (vertices[a] + vertices[b]).scale(0.5);
                vertices.push(p);
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &self.cells {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            cells.push([a, ab, ca]);
            cells.push([ab, b, bc]);
            cells.push([ca, bc, c]);
            cells.push([ab, bc, ca]);
        }
        build_mesh(vertices, cells).expect("refinement of a valid mesh is valid")
    }
}

/// Uniform right-triangle mesh of `rect`: nx-by-ny quads, each split along
/// the same diagonal.
pub fn structured_triangulation(nx: usize, ny: usize, rect: Rect) -> Result<Mesh, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::NonConforming(
            "structured mesh needs nx, ny >= 1".into(),
        ));
    }
    let dx = (rect.x1 - rect.x0) / nx as f64;
    let dy = (rect.y1 - rect.y0) / ny as f64;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Vec2::new(rect.x0 + i as f64 * dx, rect.y0 + j as f64 * dy));
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            cells.push([v00, v10, v11]);
            cells.push([v00, v11, v01]);
        }
    }
    build_mesh(vertices, cells)
}

/// Build a mesh from raw vertex/cell data, normalizing triangle orientation
/// and verifying conformity.
pub fn build_mesh(vertices: Vec<Vec2>, cells: Vec<[usize; 3]>) -> Result<Mesh, MeshError> {
    let nv = vertices.len();
    let mut norm_cells = Vec::with_capacity(cells.len());
    let mut cell_measures = Vec::with_capacity(cells.len());
    let mut cell_diameters = Vec::with_capacity(cells.len());
    let mut cell_centroids = Vec::with_capacity(cells.len());
    let mut seen = HashMap::new();

    for (ci, cell) in cells.iter().enumerate() {
        for &v in cell {
            if v >= nv {
                return Err(MeshError::InvalidIndex(v));
            }
        }
        let mut key = *cell;
        key.sort_unstable();
        if key[0] == key[1] || key[1] == key[2] {
            return Err(MeshError::DegenerateCell(ci));
        }
        if seen.insert(key, ci).is_some() {
            return Err(MeshError::DuplicateCell(ci));
        }
        let mut c = *cell;
        let (pa, pb, pc) = (vertices[c[0]], vertices[c[1]], vertices[c[2]]);
        let signed = 0.5 * (pb - pa).cross(pc - pa);
        let diam = (pb - pa)
            .norm()
            .max((pc - pb).norm())
            .max((pa - pc).norm());
        if signed.abs() <= 1e-13 * diam * diam {
            return Err(MeshError::DegenerateCell(ci));
        }
        if signed < 0.0 {
            c.swap(1, 2);
        }
        norm_cells.push(c);
        cell_measures.push(signed.abs());
        cell_diameters.push(diam);
        cell_centroids.push((pa + pb + pc).scale(1.0 / 3.0));
    }

    // edge table keyed by sorted endpoint pair
    let mut edge_map: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
    for (ci, cell) in norm_cells.iter().enumerate() {
        for local in 0..3 {
            let a = cell[(local + 1) % 3];
            let b = cell[(local + 2) % 3];
            let key = (a.min(b), a.max(b));
            let uses = edge_map.entry(key).or_default();
            uses.push((ci, local));
            if uses.len() > 2 {
                return Err(MeshError::NonConforming(format!(
                    "edge {:?} shared by more than two cells",
                    key
                )));
            }
        }
    }

    // Deterministic face numbering: walk cells in order, internal faces first.
    let mut internal = Vec::new();
    let mut boundary = Vec::new();
    let mut emitted: HashMap<(usize, usize), ()> = HashMap::new();
    for (ci, cell) in norm_cells.iter().enumerate() {
        for local in 0..3 {
            let a = cell[(local + 1) % 3];
            let b = cell[(local + 2) % 3];
            let key = (a.min(b), a.max(b));
            if emitted.insert(key, ()).is_some() {
                continue;
            }
            let uses = &edge_map[&key];
            let owner = ci;
            let neighbor = uses.iter().map(|&(c, _)| c).find(|&c| c != ci);
            let (pa, pb) = (vertices[a], vertices[b]);
            let measure = (pb - pa).norm();
            let midpoint = (pa + pb).scale(0.5);
            let mut normal = (pb - pa).perp().normalized();
            if normal.dot(midpoint - cell_centroids[owner]) < 0.0 {
                normal = -normal;
            }
            let face = Face {
                vertices: [a, b],
                measure,
                diameter: measure,
                midpoint,
                owner,
                neighbor,
                normal,
            };
            if neighbor.is_some() {
                internal.push(face);
            } else {
                boundary.push(face);
            }
        }
    }
    let n_internal_faces = internal.len();
    let mut faces = internal;
    faces.extend(boundary);

    // every boundary vertex must touch exactly two boundary faces
    let mut boundary_degree = vec![0usize; nv];
    for f in &faces[n_internal_faces..] {
        boundary_degree[f.vertices[0]] += 1;
        boundary_degree[f.vertices[1]] += 1;
    }
    if let Some(v) = boundary_degree.iter().position(|&d| d != 0 && d != 2) {
        return Err(MeshError::NonConforming(format!(
            "vertex {} touches {} boundary faces (expected 2): hanging node or partial face overlap",
            v, boundary_degree[v]
        )));
    }

    hanging_vertex_scan(&vertices, &faces)?;

    let mut face_index: HashMap<(usize, usize), usize> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        let key = (
            f.vertices[0].min(f.vertices[1]),
            f.vertices[0].max(f.vertices[1]),
        );
        face_index.insert(key, fi);
    }
    let mut cell_faces = Vec::with_capacity(norm_cells.len());
    for cell in &norm_cells {
        let mut fs = [0usize; 3];
        for (local, f) in fs.iter_mut().enumerate() {
            let a = cell[(local + 1) % 3];
            let b = cell[(local + 2) % 3];
            *f = face_index[&(a.min(b), a.max(b))];
        }
        cell_faces.push(fs);
    }

    Ok(Mesh {
        vertices,
        cells: norm_cells,
        faces,
        cell_faces,
        cell_measures,
        cell_diameters,
        cell_centroids,
        n_internal_faces,
    })
}

/// Reject vertices lying in the relative interior of a face they are not an
/// endpoint of. Bin vertices on a uniform grid so the scan stays near-linear.
fn hanging_vertex_scan(vertices: &[Vec2], faces: &[Face]) -> Result<(), MeshError> {
    if vertices.is_empty() {
        return Ok(());
    }
    let (mut lo, mut hi) = (vertices[0], vertices[0]);
    for v in vertices {
        lo = Vec2::new(lo.x.min(v.x), lo.y.min(v.y));
        hi = Vec2::new(hi.x.max(v.x), hi.y.max(v.y));
    }
    let extent = (hi - lo).norm().max(f64::MIN_POSITIVE);
    let tol = 1e-12 * extent;
    let nbins = ((vertices.len() as f64).sqrt().ceil() as usize).max(1);
    let span_x = (hi.x - lo.x).max(f64::MIN_POSITIVE);
    let span_y = (hi.y - lo.y).max(f64::MIN_POSITIVE);
    let bin_of = |p: Vec2| -> (usize, usize) {
        let bx = (((p.x - lo.x) / span_x * nbins as f64) as usize).min(nbins - 1);
        let by = (((p.y - lo.y) / span_y * nbins as f64) as usize).min(nbins - 1);
        (bx, by)
    };
    let mut bins: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (vi, &v) in vertices.iter().enumerate() {
        bins.entry(bin_of(v)).or_default().push(vi);
    }
    for f in faces {
        let (a, b) = (vertices[f.vertices[0]], vertices[f.vertices[1]]);
        let (blo, bhi) = (
            bin_of(Vec2::new(a.x.min(b.x) - tol, a.y.min(b.y) - tol)),
            bin_of(Vec2::new(a.x.max(b.x) + tol, a.y.max(b.y) + tol)),
        );
        let len_sq = (b - a).norm_sq();
        for bx in blo.0..=bhi.0 {
            for by in blo.1..=bhi.1 {
                let Some(candidates) = bins.get(&(bx, by)) else {
                    continue;
                };
                for &vi in candidates {
                    if vi == f.vertices[0] || vi == f.vertices[1] {
                        continue;
                    }
                    let p = vertices[vi];
                    let t = (p - a).dot(b - a) / len_sq;
                    if t <= 1e-9 || t >= 1.0 - 1e-9 {
                        continue;
                    }
                    let dist = (p - (a + (b - a).scale(t))).norm();
                    if dist < tol {
                        return Err(MeshError::NonConforming(format!(
                            "vertex {} lies inside face {:?} (hanging node)",
                            vi, f.vertices
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_square_two_cells() -> Mesh {
        build_mesh(
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(0.0, 1.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn two_cell_square() {
        let m = unit_square_two_cells();
        assert_eq!(m.n_cells(), 2);
        assert_eq!(m.n_faces(), 5);
        assert_eq!(m.n_internal_faces(), 1);
        assert_relative_eq!(m.cell_measures.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn perturbed_shared_edge_is_rejected() {
        let r = build_mesh(
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(0.0, 1.0),
                Vec2::new(1.0, 1.01), // second triangle's copy of (1,1), off the diagonal
            ],
            vec![[0, 1, 2], [0, 4, 3]],
        );
        assert!(matches!(r, Err(MeshError::NonConforming(_))));
    }

    #[test]
    fn hanging_node_is_rejected() {
        // coarse triangle next to two fine triangles splitting the shared edge
        let r = build_mesh(
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(1.0, 0.5), // hanging on edge (1,0)-(1,1)
                Vec2::new(2.0, 0.5),
            ],
            vec![[0, 1, 2], [1, 4, 3], [3, 4, 2]],
        );
        assert!(matches!(r, Err(MeshError::NonConforming(_))));
    }

    #[test]
    fn duplicate_and_degenerate_cells_are_rejected() {
        let verts = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ];
        assert!(matches!(
            build_mesh(verts.clone(), vec![[0, 1, 2], [2, 0, 1]]),
            Err(MeshError::DuplicateCell(1))
        ));
        assert!(matches!(
            build_mesh(verts, vec![[0, 1, 1]]),
            Err(MeshError::DegenerateCell(0))
        ));
    }

    #[test]
    fn structured_counts() {
        let m = structured_triangulation(1, 1, Rect::UNIT).unwrap();
        assert_eq!(m.n_cells(), 2);
        let m = structured_triangulation(2, 2, Rect::UNIT).unwrap();
        assert_eq!(m.n_cells(), 8);
        assert_eq!(m.n_internal_faces(), 8);
        let m = structured_triangulation(4, 4, Rect::UNIT).unwrap();
        assert_eq!(m.n_cells(), 32);
        assert_eq!(m.n_faces() - m.n_internal_faces(), 16);
    }

    #[test]
    fn per_cell_normal_sums_vanish() {
        let m = structured_triangulation(4, 4, Rect::UNIT).unwrap();
        for c in 0..m.n_cells() {
            let mut sum = Vec2::ZERO;
            let mut perimeter = 0.0;
            for &f in &m.cell_faces[c] {
                sum += m.normal_for(f, c).scale(m.faces[f].measure);
                perimeter += m.faces[f].measure;
            }
            assert!(sum.norm() <= 1e-13 * perimeter);
        }
    }

    #[test]
    fn quality_analytic_values() {
        // right isoceles triangle, legs 1: theta = sqrt(2) - 1
        let m = build_mesh(
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(0.0, 1.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert_relative_eq!(m.quality().theta, 2.0f64.sqrt() - 1.0, epsilon = 1e-12);

        // equilateral triangle: theta = 1/sqrt(3)
        let m = build_mesh(
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(0.5, 3.0f64.sqrt() / 2.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert_relative_eq!(m.quality().theta, 1.0 / 3.0f64.sqrt(), epsilon = 1e-12);

        // congruent cells: mesh theta equals single-cell theta
        let m = structured_triangulation(3, 3, Rect::UNIT).unwrap();
        assert_relative_eq!(m.quality().theta, 2.0f64.sqrt() - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_refinement_preserves_theta_and_halves_h() {
        let mut m = unit_square_two_cells();
        let q0 = m.quality();
        for level in 1..=3 {
            m = m.refine_uniform();
            let q = m.quality();
            assert_relative_eq!(q.theta, q0.theta, epsilon = 1e-12);
            assert_relative_eq!(q.h, q0.h / 2.0f64.powi(level), epsilon = 1e-12);
        }
        assert_eq!(m.n_cells(), 2 * 4usize.pow(3));
    }

    #[test]
    fn refinement_halves_h_exactly_once() {
        let m = unit_square_two_cells().refine_uniform();
        assert_eq!(m.n_cells(), 8);
    }

    #[test]
    fn internal_faces_are_numbered_first() {
        let m = structured_triangulation(3, 2, Rect::UNIT).unwrap();
        for (i, f) in m.faces.iter().enumerate() {
            assert_eq!(f.is_internal(), i < m.n_internal_faces());
        }
    }
}

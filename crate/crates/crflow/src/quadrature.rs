//! Quadrature rules on triangles and edges.
//!
//! The scheme's own integrands are at most quadratic per cell, so the
//! edge-midpoint rule (degree 2) and 2-point Gauss edge rule (degree 3)
//! suffice there; higher-order rules are used when projecting or comparing
//! against smooth analytic fields.

use crate::geometry::Vec2;
use crate::mesh::Mesh;

/// Symmetric triangle rule given in barycentric coordinates.
#[derive(Debug, Clone, Copy)]
pub struct TriangleRule {
    pub points: &'static [([f64; 3], f64)],
    pub degree: usize,
}

/// Edge-midpoint rule: exact for quadratics.
pub const TRI_MIDPOINT: TriangleRule = TriangleRule {
    points: &[
        ([0.5, 0.5, 0.0], 1.0 / 3.0),
        ([0.0, 0.5, 0.5], 1.0 / 3.0),
        ([0.5, 0.0, 0.5], 1.0 / 3.0),
    ],
    degree: 2,
};

// 7-point rule, exact for degree 5.
const A1: f64 = 0.059_715_871_789_769_82;
const B1: f64 = 0.470_142_064_105_115_1;
const W1: f64 = 0.132_394_152_788_506_2;
const A2: f64 = 0.797_426_985_353_087_3;
const B2: f64 = 0.101_286_507_323_456_34;
const W2: f64 = 0.125_939_180_544_827_14;

pub const TRI_DEGREE5: TriangleRule = TriangleRule {
    points: &[
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ],
    degree: 5,
};

/// Gauss rule on [-1, 1], scaled to an edge on use.
#[derive(Debug, Clone, Copy)]
pub struct EdgeRule {
    pub points: &'static [(f64, f64)],
    pub degree: usize,
}

pub const EDGE_GAUSS2: EdgeRule = EdgeRule {
    points: &[
        (-0.577_350_269_189_625_8, 1.0),
        (0.577_350_269_189_625_8, 1.0),
    ],
    degree: 3,
};

pub const EDGE_GAUSS4: EdgeRule = EdgeRule {
    points: &[
        (-0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
        (-0.339_981_043_584_856_26, 0.652_145_154_862_546_2),
        (0.339_981_043_584_856_26, 0.652_145_154_862_546_2),
        (0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
    ],
    degree: 7,
};

/// Integrate `f` over cell `c`.
pub fn integrate_cell(mesh: &Mesh, c: usize, rule: TriangleRule, mut f: impl FnMut(Vec2) -> f64) -> f64 {
    let [a, b, d] = mesh.cells[c];
    let (pa, pb, pd) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[d]);
    let area = mesh.cell_measures[c];
    rule.points
        .iter()
        .map(|&(l, w)| {
            let x = pa.scale(l[0]) + pb.scale(l[1]) + pd.scale(l[2]);
            w * f(x)
        })
        .sum::<f64>()
        * area
}

/// Integrate `f` over the whole mesh.
pub fn integrate(mesh: &Mesh, rule: TriangleRule, mut f: impl FnMut(Vec2) -> f64) -> f64 {
    (0..mesh.n_cells())
        .map(|c| integrate_cell(mesh, c, rule, &mut f))
        .sum()
}

/// Integrate `f` along face `fi` (arc-length measure).
pub fn integrate_face(mesh: &Mesh, fi: usize, rule: EdgeRule, mut f: impl FnMut(Vec2) -> f64) -> f64 {
    let face = &mesh.faces[fi];
    let (a, b) = (
        mesh.vertices[face.vertices[0]],
        mesh.vertices[face.vertices[1]],
    );
    let mid = (a + b).scale(0.5);
    let half = (b - a).scale(0.5);
    let jac = face.measure / 2.0;
    rule.points
        .iter()
        .map(|&(t, w)| w * f(mid + half.scale(t)))
        .sum::<f64>()
        * jac
}

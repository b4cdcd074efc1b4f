//! P1 finite element utilities: shape-function gradients on tets and
//! quadrature rules for tets and triangles.

use crate::la::{self, Vec3};
use crate::mesh::{tet_volume, Mesh};

/// Constant gradients of the four P1 basis functions on a tet, plus volume.
pub fn p1_gradients(a: Vec3, b: Vec3, c: Vec3, d: Vec3) -> ([Vec3; 4], f64) {
    let vol = tet_volume(a, b, c, d);
    // grad lambda_i = (opposite face normal, inward) * area / (3 vol);
    // equivalently rows of the inverse edge matrix.
    let six_v = 6.0 * vol;
    let g = |p: Vec3, q: Vec3, r: Vec3| -> Vec3 {
        // gradient of the barycentric coordinate vanishing on face (p,q,r)
        la::scale(la::cross(la::sub(q, p), la::sub(r, p)), 1.0 / six_v)
    };
    // orientation: lambda_0 vanishes on (b,c,d) etc.; signs fixed by vol sign
    let g0 = g(b, d, c);
    let g1 = g(a, c, d);
    let g2 = g(a, d, b);
    let g3 = g(a, b, c);
    ([g0, g1, g2, g3], vol)
}

pub fn cell_p1_gradients(mesh: &Mesh, cell: usize) -> ([Vec3; 4], f64) {
    let [a, b, c, d] = mesh.cells[cell];
    p1_gradients(
        mesh.vertices[a],
        mesh.vertices[b],
        mesh.vertices[c],
        mesh.vertices[d],
    )
}

/// Gradient of a P1 nodal field on a cell.
pub fn cell_gradient(mesh: &Mesh, cell: usize, field: &[f64]) -> Vec3 {
    let (grads, _) = cell_p1_gradients(mesh, cell);
    let mut g = [0.0; 3];
    for (i, &v) in mesh.cells[cell].iter().enumerate() {
        g = la::add(g, la::scale(grads[i], field[v]));
    }
    g
}

/// Quadrature point in barycentric coordinates with weight (weights sum to 1).
#[derive(Debug, Clone, Copy)]
pub struct TetQuadPoint {
    pub bary: [f64; 4],
    pub weight: f64,
}

/// Degree-1 (centroid) rule.
pub fn tet_quadrature_1() -> Vec<TetQuadPoint> {
    vec![TetQuadPoint {
        bary: [0.25; 4],
        weight: 1.0,
    }]
}

/// Degree-2 four-point rule.
pub fn tet_quadrature_2() -> Vec<TetQuadPoint> {
    let a = 0.585_410_196_624_968_5; // (5 + 3 sqrt 5) / 20
    let b = 0.138_196_601_125_010_5; // (5 - sqrt 5) / 20
    (0..4)
        .map(|i| {
            let mut bary = [b; 4];
            bary[i] = a;
            TetQuadPoint { bary, weight: 0.25 }
        })
        .collect()
}

/// Degree-4 eleven-point rule (Keast).
pub fn tet_quadrature_4() -> Vec<TetQuadPoint> {
    let mut pts = Vec::with_capacity(11);
    pts.push(TetQuadPoint {
        bary: [0.25; 4],
        weight: -0.078_933_333_333_333_33,
    });
    let a = 11.0 / 14.0;
    let b = 1.0 / 14.0;
    for i in 0..4 {
        let mut bary = [b; 4];
        bary[i] = a;
        pts.push(TetQuadPoint {
            bary,
            weight: 0.045_733_333_333_333_33,
        });
    }
    let c = 0.399_403_576_166_799_2; // (1 + sqrt(5/14)) / 4
    let d = 0.100_596_423_833_200_8; // (1 - sqrt(5/14)) / 4
    for (i, j) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] {
        let mut bary = [d; 4];
        bary[i] = c;
        bary[j] = c;
        pts.push(TetQuadPoint {
            bary,
            weight: 0.149_333_333_333_333_3,
        });
    }
    pts
}

#[derive(Debug, Clone, Copy)]
pub struct TriQuadPoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

/// Degree-2 three-point (midedge) rule.
pub fn tri_quadrature_2() -> Vec<TriQuadPoint> {
    [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]
        .iter()
        .map(|&bary| TriQuadPoint {
            bary,
            weight: 1.0 / 3.0,
        })
        .collect()
}

/// Degree-4 six-point rule (Dunavant).
pub fn tri_quadrature_4() -> Vec<TriQuadPoint> {
    let mut pts = Vec::with_capacity(6);
    let (a, wa) = (0.816_847_572_980_459, 0.109_951_743_655_322);
    let (b, wb) = (0.108_103_018_168_07, 0.223_381_589_678_011);
    for (v, w) in [(a, wa), (b, wb)] {
        let o = (1.0 - v) / 2.0;
        for i in 0..3 {
            let mut bary = [o; 3];
            bary[i] = v;
            pts.push(TriQuadPoint { bary, weight: w });
        }
    }
    pts
}

/// Physical coordinates of a barycentric point in a cell.
pub fn tet_point(mesh: &Mesh, cell: usize, bary: &[f64; 4]) -> Vec3 {
    let mut p = [0.0; 3];
    for (i, &v) in mesh.cells[cell].iter().enumerate() {
        p = la::add(p, la::scale(mesh.vertices[v], bary[i]));
    }
    p
}

pub fn tri_point(mesh: &Mesh, verts: &[usize; 3], bary: &[f64; 3]) -> Vec3 {
    let mut p = [0.0; 3];
    for (i, &v) in verts.iter().enumerate() {
        p = la::add(p, la::scale(mesh.vertices[v], bary[i]));
    }
    p
}

/// Interpolate a nodal field at a barycentric point of a cell.
pub fn tet_interp(mesh: &Mesh, cell: usize, field: &[f64], bary: &[f64; 4]) -> f64 {
    mesh.cells[cell]
        .iter()
        .enumerate()
        .map(|(i, &v)| bary[i] * field[v])
        .sum()
}

/// Evaluate a nodal field at an arbitrary point (None if outside the mesh).
pub fn eval_at(mesh: &Mesh, field: &[f64], p: Vec3) -> Option<f64> {
    let cell = mesh.find_cell(p)?;
    let bary = mesh.barycentric(cell, p);
    Some(tet_interp(mesh, cell, field, &bary))
}

/// Evaluate a nodal vector field at an arbitrary point.
pub fn eval_vec_at(mesh: &Mesh, field: &[Vec3], p: Vec3) -> Option<Vec3> {
    let cell = mesh.find_cell(p)?;
    let bary = mesh.barycentric(cell, p);
    let mut out = [0.0; 3];
    for (i, &v) in mesh.cells[cell].iter().enumerate() {
        out = la::add(out, la::scale(field[v], bary[i]));
    }
    Some(out)
}

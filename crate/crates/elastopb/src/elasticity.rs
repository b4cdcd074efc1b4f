//! St Venant-Kirchhoff nonlinear elasticity on the flexible molecule:
//! body force over MF cells, surface traction on the free part of the
//! molecular surface, zero displacement on the Dirichlet cap, solved by
//! Newton with a consistent tangent and residual backtracking.

use crate::error::{Error, Result};
use crate::fem::{cell_p1_gradients, tet_quadrature_4, tri_point};
use crate::la::{self, Mat3, Vec3, IDENTITY};
use crate::mesh::{triangle_area_normal, FaceTag, Mesh, Region};
use crate::par;
use crate::sparse::{solve_cg, CgConfig, Triplets};

#[derive(Debug, Clone, Copy)]
pub struct ElasticParams {
    /// First Lame constant.
    pub lambda: f64,
    /// Second Lame constant (shear modulus).
    pub mu: f64,
}

impl ElasticParams {
    pub fn validate(&self) -> Result<()> {
        if self.lambda <= 0.0 || self.mu <= 0.0 {
            return Err(Error::Validation(format!(
                "Lame constants must be positive, got lambda = {}, mu = {}",
                self.lambda, self.mu
            )));
        }
        Ok(())
    }
}

/// Loads aligned with the mesh layout: body-force vectors at the order-4
/// quadrature points of MF cells, and a constant traction vector per
/// flexible-surface boundary face (indexed into `mesh.boundary_faces`).
#[derive(Debug, Clone, Default)]
pub struct LoadSet {
    pub body: Vec<(usize, Vec<Vec3>)>,
    pub traction: Vec<(usize, Vec3)>,
}

impl LoadSet {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &Vec3| v.iter().all(|x| x.is_finite());
        for (c, vals) in &self.body {
            if !vals.iter().all(finite) {
                return Err(Error::Validation(format!(
                    "non-finite body force on cell {c}"
                )));
            }
        }
        for (f, t) in &self.traction {
            if !finite(t) {
                return Err(Error::Validation(format!(
                    "non-finite traction on face {f}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ElasticSolution {
    /// Nodal displacement over all mesh vertices (zero outside MF).
    pub u: Vec<Vec3>,
    /// Newton residual norms (index 0 = initial residual).
    pub trace: Vec<f64>,
    /// Deformed-volume surface integral over the molecular surface minus
    /// 3 |Omega_mf|; reported, never enforced.
    pub incompressibility: f64,
    /// Traction entries discarded because they sat on the Dirichlet cap.
    pub ignored_traction_faces: usize,
}

/// Nonlinear Green strain E = 1/2 (grad_u^T + grad_u + grad_u^T grad_u).
pub fn strain(grad_u: &Mat3) -> Mat3 {
    let gt = la::transpose(grad_u);
    let mut e = la::mat_add(&gt, grad_u);
    let gtg = la::mat_mul(&gt, grad_u);
    e = la::mat_add(&e, &gtg);
    la::mat_scale(&e, 0.5)
}

/// First Piola-Kirchhoff stress T = (I + grad_u)[lambda tr(E) I + 2 mu E].
pub fn stress(grad_u: &Mat3, params: &ElasticParams) -> Mat3 {
    let e = strain(grad_u);
    let s = second_pk(&e, params);
    la::mat_mul(&la::mat_add(&IDENTITY, grad_u), &s)
}

fn second_pk(e: &Mat3, params: &ElasticParams) -> Mat3 {
    let tr = la::trace(e);
    let mut s = la::mat_scale(e, 2.0 * params.mu);
    for i in 0..3 {
        s[i][i] += params.lambda * tr;
    }
    s
}

/// Directional derivative of the first PK stress at grad_u along dg.
fn stress_tangent(grad_u: &Mat3, dg: &Mat3, params: &ElasticParams) -> Mat3 {
    let e = strain(grad_u);
    let s = second_pk(&e, params);
    // dE = 1/2 (dg^T + dg + dg^T g + g^T dg)
    let dgt = la::transpose(dg);
    let gt = la::transpose(grad_u);
    let mut de = la::mat_add(&dgt, dg);
    de = la::mat_add(&de, &la::mat_mul(&dgt, grad_u));
    de = la::mat_add(&de, &la::mat_mul(&gt, dg));
    let de = la::mat_scale(&de, 0.5);
    let ds = second_pk(&de, params);
    let f = la::mat_add(&IDENTITY, grad_u);
    la::mat_add(&la::mat_mul(dg, &s), &la::mat_mul(&f, &ds))
}

fn strain_energy_density(grad_u: &Mat3, params: &ElasticParams) -> f64 {
    let e = strain(grad_u);
    let tr = la::trace(&e);
    let mut e2 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            e2 += e[i][j] * e[i][j];
        }
    }
    0.5 * params.lambda * tr * tr + params.mu * e2
}

fn cell_grad_u(mesh: &Mesh, c: usize, u: &[Vec3]) -> (Mat3, [Vec3; 4], f64) {
    let (grads, vol) = cell_p1_gradients(mesh, c);
    let mut g = [[0.0; 3]; 3];
    for (k, &v) in mesh.cells[c].iter().enumerate() {
        for i in 0..3 {
            for j in 0..3 {
                g[i][j] += u[v][i] * grads[k][j];
            }
        }
    }
    (g, grads, vol)
}

fn mf_cells(mesh: &Mesh) -> Vec<usize> {
    (0..mesh.n_cells())
        .filter(|&c| mesh.cell_region[c] == Region::Mf)
        .collect()
}

/// Discrete hyperelastic energy W(u) = sum psi(E) vol - loads(u).
pub fn discrete_energy(mesh: &Mesh, loads: &LoadSet, params: &ElasticParams, u: &[Vec3]) -> f64 {
    let mut w = 0.0;
    for &c in &mf_cells(mesh) {
        let (g, _, vol) = cell_grad_u(mesh, c, u);
        w += strain_energy_density(&g, params) * vol;
    }
    let load = load_vector(mesh, loads);
    let mut l = 0.0;
    for (v, vals) in u.iter().enumerate() {
        for i in 0..3 {
            l += load[3 * v + i] * vals[i];
        }
    }
    w - l
}

/// Assemble the load linear form into a flat 3n vector.
fn load_vector(mesh: &Mesh, loads: &LoadSet) -> Vec<f64> {
    let n = mesh.n_vertices();
    let mut b = vec![0.0; 3 * n];
    let rule = tet_quadrature_4();
    for (c, vals) in &loads.body {
        debug_assert_eq!(vals.len(), rule.len());
        let vol = mesh.cell_volume(*c);
        for (q, f) in rule.iter().zip(vals) {
            for (i, &v) in mesh.cells[*c].iter().enumerate() {
                for k in 0..3 {
                    b[3 * v + k] += q.weight * vol * q.bary[i] * f[k];
                }
            }
        }
    }
    for (fidx, t) in &loads.traction {
        let face = &mesh.boundary_faces[*fidx];
        if face.tag == FaceTag::GammaF0 {
            continue; // counted by the caller
        }
        let [a, bb, c] = face.verts;
        let (area, _) = triangle_area_normal(mesh.vertices[a], mesh.vertices[bb], mesh.vertices[c]);
        for &v in &face.verts {
            for k in 0..3 {
                b[3 * v + k] += area / 3.0 * t[k];
            }
        }
    }
    b
}

/// Deformed-volume diagnostic: int_{Gamma_f} Phi . (cof grad Phi) n ds over
/// the full molecular surface (Dirichlet cap included) minus 3 |Omega_mf|.
pub fn incompressibility_diagnostic(mesh: &Mesh, u: &[Vec3]) -> f64 {
    let mut integral = 0.0;
    let rule = crate::fem::tri_quadrature_2();
    for face in &mesh.boundary_faces {
        if !face.tag.is_gamma_f() {
            continue;
        }
        let (g, _, _) = cell_grad_u(mesh, face.cell_in, u);
        let grad_phi = la::mat_add(&IDENTITY, &g);
        let cof = la::cofactor(&grad_phi);
        let [a, b, c] = face.verts;
        let (area, mut normal) =
            triangle_area_normal(mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
        let to_face = la::sub(mesh.face_centroid(&face.verts), mesh.cell_centroid(face.cell_in));
        if la::dot(normal, to_face) < 0.0 {
            normal = la::scale(normal, -1.0);
        }
        let cof_n = la::mat_vec(&cof, normal);
        for q in &rule {
            let x = tri_point(mesh, &face.verts, &q.bary);
            let mut phi = x;
            for (i, &v) in face.verts.iter().enumerate() {
                phi = la::add(phi, la::scale(u[v], q.bary[i]));
            }
            integral += q.weight * area * la::dot(phi, cof_n);
        }
    }
    integral - 3.0 * mesh.region_volume(Region::Mf)
}

/// Euclidean norm of the discrete residual (internal forces minus loads) at
/// a given displacement, constrained dofs masked. Diagnostic companion to
/// `solve_elasticity`.
pub fn residual_norm(mesh: &Mesh, loads: &LoadSet, params: &ElasticParams, u: &[Vec3]) -> f64 {
    par::norm2(&residual_vector(mesh, loads, params, u))
}

/// Discrete residual vector (internal forces minus loads), flat 3n layout,
/// constrained dofs zeroed. Gradient of `discrete_energy` on the free dofs.
pub fn residual_vector(
    mesh: &Mesh,
    loads: &LoadSet,
    params: &ElasticParams,
    u: &[Vec3],
) -> Vec<f64> {
    let n = mesh.n_vertices();
    let mf_mask = mesh.region_vertex_mask(Region::Mf);
    let f0_mask = mesh.face_vertex_mask(FaceTag::GammaF0);
    let load = load_vector(mesh, loads);
    let mut r = vec![0.0; 3 * n];
    for c in mf_cells(mesh) {
        let (g, grads, vol) = cell_grad_u(mesh, c, u);
        let t = stress(&g, params);
        for (a, &v) in mesh.cells[c].iter().enumerate() {
            for i in 0..3 {
                r[3 * v + i] += vol * la::dot(t[i], grads[a]);
            }
        }
    }
    for (dof, val) in r.iter_mut().enumerate() {
        let v = dof / 3;
        *val -= load[dof];
        if !mf_mask[v] || f0_mask[v] {
            *val = 0.0;
        }
    }
    r
}

pub fn solve_elasticity(
    mesh: &Mesh,
    loads: &LoadSet,
    params: &ElasticParams,
    tol: f64,
) -> Result<ElasticSolution> {
    params.validate()?;
    loads.validate()?;
    let f0_mask = mesh.face_vertex_mask(FaceTag::GammaF0);
    if !f0_mask.iter().any(|&m| m) {
        return Err(Error::Validation(
            "elasticity needs a nonempty Dirichlet patch Gamma_f0".into(),
        ));
    }
    let ignored_traction_faces = loads
        .traction
        .iter()
        .filter(|(f, _)| mesh.boundary_faces[*f].tag == FaceTag::GammaF0)
        .count();

    let n = mesh.n_vertices();
    let mf_mask = mesh.region_vertex_mask(Region::Mf);
    let constrained: Vec<Option<f64>> = (0..3 * n)
        .map(|dof| {
            let v = dof / 3;
            if !mf_mask[v] || f0_mask[v] {
                Some(0.0)
            } else {
                None
            }
        })
        .collect();
    let cells = mf_cells(mesh);
    let load = load_vector(mesh, loads);

    let residual = |u: &[Vec3]| -> Vec<f64> {
        let locals: Vec<([usize; 4], [[f64; 3]; 4])> = par::map_indexed(cells.len(), |k| {
            let c = cells[k];
            let (g, grads, vol) = cell_grad_u(mesh, c, u);
            let t = stress(&g, &ElasticParams { ..*params });
            let mut local = [[0.0; 3]; 4];
            for (a, ga) in grads.iter().enumerate() {
                for i in 0..3 {
                    local[a][i] = vol * la::dot(t[i], *ga);
                }
            }
            (mesh.cells[c], local)
        });
        let mut r = vec![0.0; 3 * n];
        for (verts, local) in locals {
            for (a, &v) in verts.iter().enumerate() {
                for i in 0..3 {
                    r[3 * v + i] += local[a][i];
                }
            }
        }
        for (dof, val) in r.iter_mut().enumerate() {
            *val -= load[dof];
            if constrained[dof].is_some() {
                *val = 0.0;
            }
        }
        r
    };

    let admissible = |u: &[Vec3]| -> bool {
        cells.iter().all(|&c| {
            let (g, _, _) = cell_grad_u(mesh, c, u);
            la::det(&la::mat_add(&IDENTITY, &g)) > 0.0
        })
    };

    let mut u = vec![[0.0; 3]; n];
    let mut r = residual(&u);
    let mut rnorm = par::norm2(&r);
    let scale = rnorm.max(1.0);
    let target = tol * scale;
    let mut trace = vec![rnorm];
    let max_newton = 50;

    while rnorm > target {
        if trace.len() > max_newton {
            return Err(Error::NonConvergence {
                context: "elasticity Newton".into(),
                iterations: trace.len() - 1,
                residual: rnorm,
                trace,
            });
        }
        // consistent tangent
        let locals: Vec<([usize; 4], [[f64; 12]; 12])> = par::map_indexed(cells.len(), |k| {
            let c = cells[k];
            let (g, grads, vol) = cell_grad_u(mesh, c, &u);
            let mut local = [[0.0; 12]; 12];
            for b in 0..4 {
                for j in 0..3 {
                    // perturbation dg = e_j (x) grad_b
                    let mut dg = [[0.0; 3]; 3];
                    for m in 0..3 {
                        dg[j][m] = grads[b][m];
                    }
                    let dt = stress_tangent(&g, &dg, params);
                    for a in 0..4 {
                        for i in 0..3 {
                            local[3 * a + i][3 * b + j] = vol * la::dot(dt[i], grads[a]);
                        }
                    }
                }
            }
            (mesh.cells[c], local)
        });
        let mut trip = Triplets::new(3 * n);
        for (verts, local) in locals {
            for (a, &va) in verts.iter().enumerate() {
                for (b, &vb) in verts.iter().enumerate() {
                    for i in 0..3 {
                        for j in 0..3 {
                            trip.push(3 * va + i, 3 * vb + j, local[3 * a + i][3 * b + j]);
                        }
                    }
                }
            }
        }
        let mut k = trip.to_csr();
        let mut rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        k.apply_dirichlet(&mut rhs, &constrained);
        let delta = solve_cg(&k, &rhs, None, &CgConfig::default())
            .map_err(|e| Error::LinearSolve(format!("elasticity tangent: {e}")))?;

        // residual backtracking; reject steps that invert any cell
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<Vec3> = u
                .iter()
                .enumerate()
                .map(|(v, uv)| {
                    [
                        uv[0] + alpha * delta[3 * v],
                        uv[1] + alpha * delta[3 * v + 1],
                        uv[2] + alpha * delta[3 * v + 2],
                    ]
                })
                .collect();
            if admissible(&trial) {
                let tr = residual(&trial);
                let tnorm = par::norm2(&tr);
                if tnorm <= (1.0 - 1e-4 * alpha) * rnorm {
                    u = trial;
                    r = tr;
                    rnorm = tnorm;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            if !admissible(&u) {
                return Err(Error::Regime {
                    context: "elasticity".into(),
                    detail: "iterate violates J > 0; loads too large".into(),
                });
            }
            return Err(Error::NonConvergence {
                context: "elasticity Newton line search stalled".into(),
                iterations: trace.len() - 1,
                residual: rnorm,
                trace,
            });
        }
        trace.push(rnorm);
    }

    let incompressibility = incompressibility_diagnostic(mesh, &u);
    Ok(ElasticSolution {
        u,
        trace,
        incompressibility,
        ignored_traction_faces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_ball_in_box;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn params() -> ElasticParams {
        ElasticParams {
            lambda: 1.0,
            mu: 1.0,
        }
    }

    fn capped_mesh() -> Mesh {
        let mut mesh = build_ball_in_box([0.0; 3], 1.0, 4.0, 0.5, Region::Mf).unwrap();
        let n = mesh.mark_dirichlet_cap([0.0; 3], [0.0, 0.0, 1.0], 0.6);
        assert!(n > 0);
        mesh
    }

    /// Uniform pressure (inward) on every free surface face.
    fn pressure_loads(mesh: &Mesh, p: f64) -> LoadSet {
        let mut traction = Vec::new();
        for (i, f) in mesh.boundary_faces.iter().enumerate() {
            if f.tag == FaceTag::GammaF {
                let [a, b, c] = f.verts;
                let (_, mut n) = triangle_area_normal(
                    mesh.vertices[a],
                    mesh.vertices[b],
                    mesh.vertices[c],
                );
                let to_face =
                    la::sub(mesh.face_centroid(&f.verts), mesh.cell_centroid(f.cell_in));
                if la::dot(n, to_face) < 0.0 {
                    n = la::scale(n, -1.0);
                }
                traction.push((i, la::scale(n, -p)));
            }
        }
        LoadSet {
            body: vec![],
            traction,
        }
    }

    #[test]
    fn strain_closed_forms() {
        assert_eq!(strain(&[[0.0; 3]; 3]), [[0.0; 3]; 3]);
        let alpha = 0.1;
        let g = la::mat_scale(&IDENTITY, alpha);
        let e = strain(&g);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { alpha + alpha * alpha / 2.0 } else { 0.0 };
                assert_relative_eq!(e[i][j], want, epsilon = 1e-15);
            }
        }
        // symmetry for random gradients
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mut g = [[0.0; 3]; 3];
            for row in &mut g {
                for x in row {
                    *x = rng.gen::<f64>() - 0.5;
                }
            }
            let e = strain(&g);
            for i in 0..3 {
                for j in 0..3 {
                    assert!((e[i][j] - e[j][i]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn strain_vanishes_for_rotations() {
        let t = 0.3f64;
        let q = [
            [t.cos(), -t.sin(), 0.0],
            [t.sin(), t.cos(), 0.0],
            [0.0, 0.0, 1.0],
        ];
        let g = la::mat_sub(&q, &IDENTITY);
        let e = strain(&g);
        for row in &e {
            for x in row {
                assert!(x.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stress_closed_forms() {
        assert_eq!(stress(&[[0.0; 3]; 3], &params()), [[0.0; 3]; 3]);
        let g = la::mat_scale(&IDENTITY, 0.1);
        let t = stress(&g, &params());
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.5775 } else { 0.0 };
                assert_relative_eq!(t[i][j], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn stress_linearizes_to_small_strain() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut g0 = [[0.0; 3]; 3];
        for row in &mut g0 {
            for x in row {
                *x = rng.gen::<f64>() - 0.5;
            }
        }
        let p = params();
        let remainder = |h: f64| -> f64 {
            let g = la::mat_scale(&g0, h);
            let t = stress(&g, &p);
            // small-strain stress: lambda tr(eps) I + 2 mu eps
            let eps = la::mat_scale(&la::mat_add(&g, &la::transpose(&g)), 0.5);
            let lin = second_pk(&eps, &p);
            la::frobenius(&la::mat_sub(&t, &lin))
        };
        let ratio = remainder(1e-2) / remainder(1e-3);
        assert!(
            (50.0..200.0).contains(&ratio),
            "quadratic remainder ratio {ratio} not ~100"
        );
    }

    #[test]
    fn zero_loads_zero_solution() {
        let mesh = capped_mesh();
        let sol = solve_elasticity(&mesh, &LoadSet::default(), &params(), 1e-10).unwrap();
        assert_eq!(sol.trace.len(), 1);
        assert!(sol.u.iter().all(|v| *v == [0.0; 3]));
        assert!(sol.incompressibility.abs() < 1e-9);
    }

    #[test]
    fn missing_dirichlet_patch_rejected() {
        let mesh = build_ball_in_box([0.0; 3], 1.0, 4.0, 0.5, Region::Mf).unwrap();
        assert!(matches!(
            solve_elasticity(&mesh, &LoadSet::default(), &params(), 1e-10),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn residual_matches_energy_finite_differences() {
        let mesh = capped_mesh();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mf_mask = mesh.region_vertex_mask(Region::Mf);
        let f0_mask = mesh.face_vertex_mask(FaceTag::GammaF0);
        let mut u = vec![[0.0; 3]; mesh.n_vertices()];
        for (v, uv) in u.iter_mut().enumerate() {
            if mf_mask[v] && !f0_mask[v] {
                *uv = [
                    0.02 * (rng.gen::<f64>() - 0.5),
                    0.02 * (rng.gen::<f64>() - 0.5),
                    0.02 * (rng.gen::<f64>() - 0.5),
                ];
            }
        }
        let loads = pressure_loads(&mesh, 0.01);
        let p = params();

        // analytic residual (interior form, free dofs)
        let energy = |u: &[Vec3]| discrete_energy(&mesh, &loads, &p, u);
        let free: Vec<usize> = (0..mesh.n_vertices())
            .filter(|&v| mf_mask[v] && !f0_mask[v])
            .collect();
        let h = 1e-6;
        for _ in 0..10 {
            let v = free[rng.gen_range(0..free.len())];
            let comp = rng.gen_range(0..3);
            let mut up = u.clone();
            let mut um = u.clone();
            up[v][comp] += h;
            um[v][comp] -= h;
            let fd = (energy(&up) - energy(&um)) / (2.0 * h);
            // residual entry from the assembled form
            let mut r_entry = 0.0;
            for c in 0..mesh.n_cells() {
                if mesh.cell_region[c] != Region::Mf {
                    continue;
                }
                if !mesh.cells[c].contains(&v) {
                    continue;
                }
                let (g, grads, vol) = cell_grad_u(&mesh, c, &u);
                let t = stress(&g, &p);
                let a = mesh.cells[c].iter().position(|&x| x == v).unwrap();
                r_entry += vol * la::dot(t[comp], grads[a]);
            }
            let load = load_vector(&mesh, &loads);
            r_entry -= load[3 * v + comp];
            assert_relative_eq!(r_entry, fd, max_relative = 1e-6, epsilon = 1e-10);
        }
    }

    #[test]
    fn pressure_solution_scales_linearly() {
        let mesh = capped_mesh();
        let p = params();
        let max_u = |pressure: f64| -> f64 {
            let sol =
                solve_elasticity(&mesh, &pressure_loads(&mesh, pressure), &p, 1e-10).unwrap();
            sol.u.iter().map(|v| la::norm(*v)).fold(0.0, f64::max)
        };
        let u1 = max_u(0.02);
        let u2 = max_u(0.01);
        assert!(u1 > 0.0);
        assert_relative_eq!(u1 / 0.02, u2 / 0.01, max_relative = 0.1);
    }

    #[test]
    fn newton_residual_decreases() {
        let mesh = capped_mesh();
        let sol = solve_elasticity(&mesh, &pressure_loads(&mesh, 0.05), &params(), 1e-10).unwrap();
        for w in sol.trace.windows(2) {
            assert!(w[1] < w[0], "residual increased: {:?}", sol.trace);
        }
        assert!(*sol.trace.last().unwrap() <= 1e-10 * sol.trace[0].max(1.0));
        // Dirichlet cap nodes pinned exactly
        let f0_mask = mesh.face_vertex_mask(FaceTag::GammaF0);
        for (v, m) in f0_mask.iter().enumerate() {
            if *m {
                assert_eq!(sol.u[v], [0.0; 3]);
            }
        }
    }

    #[test]
    fn traction_on_cap_ignored() {
        let mesh = capped_mesh();
        let mut loads = pressure_loads(&mesh, 0.01);
        // add traction entries on the cap; they must be discarded
        for (i, f) in mesh.boundary_faces.iter().enumerate() {
            if f.tag == FaceTag::GammaF0 {
                loads.traction.push((i, [1.0, 0.0, 0.0]));
            }
        }
        let sol = solve_elasticity(&mesh, &loads, &params(), 1e-10).unwrap();
        assert!(sol.ignored_traction_faces > 0);
        let base = solve_elasticity(&mesh, &pressure_loads(&mesh, 0.01), &params(), 1e-10).unwrap();
        for (a, b) in sol.u.iter().zip(&base.u) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn excessive_load_reported() {
        let mesh = capped_mesh();
        let res = solve_elasticity(&mesh, &pressure_loads(&mesh, 50.0), &params(), 1e-10);
        assert!(res.is_err());
    }
}

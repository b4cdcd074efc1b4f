//! The global deformation map Phi(u) = id + u on the flexible molecule,
//! harmonically extended over the rest of the box (zero on the outer
//! boundary), and the per-cell Piola fields grad Phi, J = det grad Phi and
//! F = (grad Phi)^{-1} J (grad Phi)^{-T} used to pull the electrostatic
//! problem back to the undeformed mesh.

use crate::error::{Error, Result};
use crate::fem::cell_p1_gradients;
use crate::la::{self, Mat3, Vec3, IDENTITY};
use crate::mesh::{FaceTag, Mesh, Region};
use crate::par;
use crate::sparse::{solve_cg, CgConfig, Triplets};

/// Hard floor on the deformation Jacobian.
pub const J_MIN: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct DisplacementField {
    /// Nodal displacement over all mesh vertices: the elastic solution on
    /// molecule vertices, the harmonic extension elsewhere.
    pub values: Vec<Vec3>,
}

impl DisplacementField {
    pub fn zero(mesh: &Mesh) -> Self {
        DisplacementField {
            values: vec![[0.0; 3]; mesh.n_vertices()],
        }
    }

    pub fn max_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|v| la::norm(*v))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct PiolaFields {
    /// Per-cell gradient of Phi.
    pub grad_phi: Vec<Mat3>,
    /// Per-cell Jacobian det(grad Phi).
    pub jacobian: Vec<f64>,
    /// Per-cell Piola transform F.
    pub f: Vec<Mat3>,
    pub min_j: f64,
}

impl PiolaFields {
    pub fn identity(mesh: &Mesh) -> Self {
        PiolaFields {
            grad_phi: vec![IDENTITY; mesh.n_cells()],
            jacobian: vec![1.0; mesh.n_cells()],
            f: vec![IDENTITY; mesh.n_cells()],
            min_j: 1.0,
        }
    }
}

/// Solve the componentwise discrete Laplace equation on the complement of the
/// flexible molecule with w = u on molecule vertices and w = 0 on OUTER.
pub fn harmonic_extend(mesh: &Mesh, u_on_mf: &[Vec3]) -> Result<DisplacementField> {
    debug_assert_eq!(u_on_mf.len(), mesh.n_vertices());
    let n = mesh.n_vertices();
    let mf_mask = mesh.region_vertex_mask(Region::Mf);
    let outer_mask = mesh.face_vertex_mask(FaceTag::Outer);

    // Stiffness of the Laplacian over non-MF cells.
    let mut trip = Triplets::new(n);
    let mut touched = vec![false; n];
    for c in 0..mesh.n_cells() {
        if mesh.cell_region[c] == Region::Mf {
            continue;
        }
        let (grads, vol) = cell_p1_gradients(mesh, c);
        let verts = mesh.cells[c];
        for (i, &vi) in verts.iter().enumerate() {
            touched[vi] = true;
            for (j, &vj) in verts.iter().enumerate() {
                trip.push(vi, vj, vol * la::dot(grads[i], grads[j]));
            }
        }
    }
    // Vertices interior to the molecule never appear in the extension
    // stencil; give them identity rows so the system stays nonsingular.
    for (v, &t) in touched.iter().enumerate() {
        if !t {
            trip.push(v, v, 1.0);
        }
    }
    let base = trip.to_csr();

    let mut values = vec![[0.0; 3]; n];
    for comp in 0..3 {
        let mut a = base.clone();
        let mut rhs = vec![0.0; n];
        let constrained: Vec<Option<f64>> = (0..n)
            .map(|v| {
                if mf_mask[v] || !touched[v] {
                    Some(u_on_mf[v][comp])
                } else if outer_mask[v] {
                    Some(0.0)
                } else {
                    None
                }
            })
            .collect();
        a.apply_dirichlet(&mut rhs, &constrained);
        let x0: Vec<f64> = constrained
            .iter()
            .map(|c| c.unwrap_or(0.0))
            .collect();
        let x = solve_cg(&a, &rhs, Some(&x0), &CgConfig::default())
            .map_err(|e| Error::LinearSolve(format!("harmonic extension: {e}")))?;
        for (v, val) in x.iter().enumerate() {
            values[v][comp] = *val;
        }
    }
    Ok(DisplacementField { values })
}

/// Per-cell Piola fields. Errors if any cell Jacobian drops to the floor.
pub fn compute_piola(mesh: &Mesh, disp: &DisplacementField) -> Result<PiolaFields> {
    debug_assert_eq!(disp.values.len(), mesh.n_vertices());
    let cells: Vec<Result<(Mat3, f64, Mat3)>> = par::map_indexed(mesh.n_cells(), |c| {
        let (grads, _) = cell_p1_gradients(mesh, c);
        let mut grad_u = [[0.0; 3]; 3];
        for (k, &v) in mesh.cells[c].iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    grad_u[i][j] += disp.values[v][i] * grads[k][j];
                }
            }
        }
        let grad_phi = la::mat_add(&IDENTITY, &grad_u);
        let j = la::det(&grad_phi);
        if j <= J_MIN {
            return Err(Error::InadmissibleDeformation {
                cell: c,
                jacobian: j,
                floor: J_MIN,
            });
        }
        let inv = la::inverse(&grad_phi).ok_or(Error::InadmissibleDeformation {
            cell: c,
            jacobian: j,
            floor: J_MIN,
        })?;
        // F = (grad Phi)^-1 J (grad Phi)^-T, symmetrized to kill roundoff
        let f_raw = la::mat_scale(&la::mat_mul(&inv, &la::transpose(&inv)), j);
        let f = symmetrize_checked(&f_raw)?;
        Ok((grad_phi, j, f))
    });
    let mut grad_phi = Vec::with_capacity(mesh.n_cells());
    let mut jacobian = Vec::with_capacity(mesh.n_cells());
    let mut f = Vec::with_capacity(mesh.n_cells());
    let mut min_j = f64::INFINITY;
    for cell in cells {
        let (g, j, fm) = cell?;
        min_j = min_j.min(j);
        grad_phi.push(g);
        jacobian.push(j);
        f.push(fm);
    }
    Ok(PiolaFields {
        grad_phi,
        jacobian,
        f,
        min_j,
    })
}

fn symmetrize_checked(m: &Mat3) -> Result<Mat3> {
    let scale = la::max_abs(m).max(1.0);
    for i in 0..3 {
        for j in (i + 1)..3 {
            if (m[i][j] - m[j][i]).abs() > 1e-12 * scale {
                return Err(Error::Consistency(format!(
                    "Piola transform asymmetric: |F[{i}][{j}] - F[{j}][{i}]| = {:.3e}",
                    (m[i][j] - m[j][i]).abs()
                )));
            }
        }
    }
    let mut s = *m;
    for i in 0..3 {
        for j in (i + 1)..3 {
            let avg = 0.5 * (m[i][j] + m[j][i]);
            s[i][j] = avg;
            s[j][i] = avg;
        }
    }
    Ok(s)
}

#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    /// Discrete W^{2,p} surrogate (p = 4): L4 of u + L4 of grad u + a
    /// patch-recovery estimate of second derivatives.
    pub surrogate_norm: f64,
    pub min_j: f64,
    pub bound: f64,
    pub admissible: bool,
}

/// Report-only admissibility gate combining the Jacobian floor with the
/// smallness surrogate.
pub fn check_admissible(
    mesh: &Mesh,
    disp: &DisplacementField,
    bound_m: f64,
) -> AdmissibilityReport {
    let surrogate_norm = w2p_surrogate(mesh, disp);
    let min_j = match compute_piola(mesh, disp) {
        Ok(p) => p.min_j,
        Err(Error::InadmissibleDeformation { jacobian, .. }) => jacobian,
        Err(_) => f64::NEG_INFINITY,
    };
    AdmissibilityReport {
        surrogate_norm,
        min_j,
        bound: bound_m,
        admissible: surrogate_norm <= bound_m && min_j > J_MIN,
    }
}

/// Discrete surrogate of ||u||_{W^{2,4}}: (∫|u|^4)^{1/4} + (∫|∇u|^4)^{1/4}
/// plus an L4 norm of the jump-based second-derivative recovery (per-vertex
/// spread of adjacent cell gradients divided by the local mesh size).
pub fn w2p_surrogate(mesh: &Mesh, disp: &DisplacementField) -> f64 {
    let mut l4_u = 0.0;
    let mut l4_grad = 0.0;
    // per-vertex average gradient for the recovery estimate
    let n = mesh.n_vertices();
    let mut avg_grad = vec![[[0.0; 3]; 3]; n];
    let mut weight = vec![0.0; n];
    let mut cell_grads = Vec::with_capacity(mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let (grads, vol) = cell_p1_gradients(mesh, c);
        let mut gu = [[0.0; 3]; 3];
        for (k, &v) in mesh.cells[c].iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    gu[i][j] += disp.values[v][i] * grads[k][j];
                }
            }
        }
        let centroid_u = {
            let mut s = [0.0; 3];
            for &v in &mesh.cells[c] {
                s = la::add(s, disp.values[v]);
            }
            la::scale(s, 0.25)
        };
        l4_u += la::norm(centroid_u).powi(4) * vol;
        l4_grad += la::frobenius(&gu).powi(4) * vol;
        for &v in &mesh.cells[c] {
            avg_grad[v] = la::mat_add(&avg_grad[v], &la::mat_scale(&gu, vol));
            weight[v] += vol;
        }
        cell_grads.push((gu, vol));
    }
    for (g, &w) in avg_grad.iter_mut().zip(&weight) {
        if w > 0.0 {
            *g = la::mat_scale(g, 1.0 / w);
        }
    }
    // second-derivative recovery: deviation of the cell gradient from the
    // vertex-averaged gradient, scaled by the local cell diameter
    let mut l4_hess = 0.0;
    for (c, (gu, vol)) in cell_grads.iter().enumerate() {
        let diam = vol.cbrt() * 6.0f64.cbrt();
        let mut dev: f64 = 0.0;
        for &v in &mesh.cells[c] {
            dev = dev.max(la::frobenius(&la::mat_sub(gu, &avg_grad[v])));
        }
        l4_hess += (dev / diam.max(1e-30)).powi(4) * vol;
    }
    l4_u.powf(0.25) + l4_grad.powf(0.25) + l4_hess.powf(0.25)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_ball_in_box;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn ball_mesh() -> Mesh {
        build_ball_in_box([0.0; 3], 1.0, 4.0, 0.5, Region::Mf).unwrap()
    }

    #[test]
    fn zero_displacement_extends_to_zero_identity_piola() {
        let mesh = ball_mesh();
        let zero = vec![[0.0; 3]; mesh.n_vertices()];
        let disp = harmonic_extend(&mesh, &zero).unwrap();
        assert_eq!(disp.max_norm(), 0.0);
        let piola = compute_piola(&mesh, &disp).unwrap();
        assert_eq!(piola.min_j, 1.0);
        for c in 0..mesh.n_cells() {
            assert_eq!(piola.f[c], IDENTITY);
            assert_eq!(piola.jacobian[c], 1.0);
        }
    }

    #[test]
    fn extension_maximum_principle() {
        let mesh = ball_mesh();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mf_mask = mesh.region_vertex_mask(Region::Mf);
        let mut u = vec![[0.0; 3]; mesh.n_vertices()];
        for (v, m) in u.iter_mut().zip(&mf_mask) {
            if *m {
                *v = [
                    0.1 * (rng.gen::<f64>() - 0.5),
                    0.1 * (rng.gen::<f64>() - 0.5),
                    0.1 * (rng.gen::<f64>() - 0.5),
                ];
            }
        }
        let disp = harmonic_extend(&mesh, &u).unwrap();
        // boundary data bound per component over the interface nodes
        let gamma_mask = mesh.face_vertex_mask(FaceTag::GammaF);
        for comp in 0..3 {
            let bound = (0..mesh.n_vertices())
                .filter(|&v| gamma_mask[v])
                .map(|v| u[v][comp].abs())
                .fold(0.0, f64::max);
            for v in 0..mesh.n_vertices() {
                if !mf_mask[v] {
                    assert!(
                        disp.values[v][comp].abs() <= bound + 1e-10,
                        "max principle violated: |w| = {} > {}",
                        disp.values[v][comp].abs(),
                        bound
                    );
                }
            }
        }
    }

    #[test]
    fn constant_boundary_data_interpolates() {
        let mesh = ball_mesh();
        let mf_mask = mesh.region_vertex_mask(Region::Mf);
        let c = [0.05, -0.02, 0.03];
        let mut u = vec![[0.0; 3]; mesh.n_vertices()];
        for (v, m) in u.iter_mut().zip(&mf_mask) {
            if *m {
                *v = c;
            }
        }
        let disp = harmonic_extend(&mesh, &u).unwrap();
        let outer_mask = mesh.face_vertex_mask(FaceTag::Outer);
        for v in 0..mesh.n_vertices() {
            if outer_mask[v] {
                assert_eq!(disp.values[v], [0.0; 3]);
            }
            for comp in 0..3 {
                let (lo, hi) = if c[comp] >= 0.0 { (0.0, c[comp]) } else { (c[comp], 0.0) };
                assert!(
                    disp.values[v][comp] >= lo - 1e-9 && disp.values[v][comp] <= hi + 1e-9,
                    "extension leaves the data range"
                );
            }
        }
    }

    #[test]
    fn extension_is_linear() {
        let mesh = ball_mesh();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mf_mask = mesh.region_vertex_mask(Region::Mf);
        let mut u1 = vec![[0.0; 3]; mesh.n_vertices()];
        let mut u2 = vec![[0.0; 3]; mesh.n_vertices()];
        for v in 0..mesh.n_vertices() {
            if mf_mask[v] {
                u1[v] = [rng.gen::<f64>() * 0.1, 0.0, 0.0];
                u2[v] = [0.0, rng.gen::<f64>() * 0.1, 0.0];
            }
        }
        let sum: Vec<Vec3> = u1.iter().zip(&u2).map(|(a, b)| la::add(*a, *b)).collect();
        let e1 = harmonic_extend(&mesh, &u1).unwrap();
        let e2 = harmonic_extend(&mesh, &u2).unwrap();
        let es = harmonic_extend(&mesh, &sum).unwrap();
        for v in 0..mesh.n_vertices() {
            let lin = la::add(e1.values[v], e2.values[v]);
            for comp in 0..3 {
                assert_relative_eq!(es.values[v][comp], lin[comp], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn uniform_dilation_closed_form() {
        let mesh = ball_mesh();
        let alpha = 0.1;
        let u: Vec<Vec3> = mesh.vertices.iter().map(|&x| la::scale(x, alpha)).collect();
        let disp = DisplacementField { values: u };
        let piola = compute_piola(&mesh, &disp).unwrap();
        for c in 0..mesh.n_cells() {
            assert_relative_eq!(piola.jacobian[c], 1.331, epsilon = 1e-12);
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { 1.1 } else { 0.0 };
                    assert_relative_eq!(piola.grad_phi[c][i][j], want, epsilon = 1e-12);
                    assert_relative_eq!(piola.f[c][i][j], want, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn random_small_displacement_keeps_f_positive() {
        let mesh = ball_mesh();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        // smooth small field: gradient bounded by construction
        let u: Vec<Vec3> = mesh
            .vertices
            .iter()
            .map(|&x| {
                let s = 0.05;
                [
                    s * (x[1] * 0.3).sin() + 0.01 * rng.gen::<f64>() * 0.0,
                    s * (x[2] * 0.3).cos() * 0.5,
                    s * (x[0] * 0.2).sin(),
                ]
            })
            .collect();
        let piola = compute_piola(&mesh, &DisplacementField { values: u }).unwrap();
        for c in 0..mesh.n_cells() {
            let eigs = la::sym_eigenvalues(&piola.f[c]);
            assert!(eigs[0] > 0.0, "F not positive definite on cell {c}");
        }
    }

    #[test]
    fn jacobian_multiplicative_under_composition() {
        // two uniform affine maps on a single cell
        let a = [[1.1, 0.02, 0.0], [0.0, 0.95, 0.01], [0.03, 0.0, 1.05]];
        let b = [[1.02, 0.0, 0.04], [0.01, 1.08, 0.0], [0.0, 0.02, 0.97]];
        let ab = la::mat_mul(&a, &b);
        assert_relative_eq!(la::det(&ab), la::det(&a) * la::det(&b), epsilon = 1e-12);
    }

    #[test]
    fn inadmissible_jacobian_detected() {
        let mesh = ball_mesh();
        // strong compression toward the origin collapses cells
        let u: Vec<Vec3> = mesh.vertices.iter().map(|&x| la::scale(x, -0.95)).collect();
        match compute_piola(&mesh, &DisplacementField { values: u }) {
            Err(Error::InadmissibleDeformation { jacobian, .. }) => {
                assert!(jacobian <= J_MIN);
            }
            other => panic!("expected inadmissible deformation, got {other:?}"),
        }
    }

    #[test]
    fn admissibility_gate() {
        let mesh = ball_mesh();
        let zero = DisplacementField::zero(&mesh);
        let report = check_admissible(&mesh, &zero, 0.5);
        assert!(report.admissible);
        assert_eq!(report.surrogate_norm, 0.0);

        // dilation alpha = 5: J is large (fine) but the surrogate explodes
        let u: Vec<Vec3> = mesh.vertices.iter().map(|&x| la::scale(x, 5.0)).collect();
        let report = check_admissible(&mesh, &DisplacementField { values: u }, 0.5);
        assert!(!report.admissible);
        assert!(report.surrogate_norm > 0.5);

        // reflection-like defect: negative determinant
        let u: Vec<Vec3> = mesh
            .vertices
            .iter()
            .map(|&x| [-2.0 * x[0], 0.0, 0.0])
            .collect();
        let report = check_admissible(&mesh, &DisplacementField { values: u }, 1e9);
        assert!(!report.admissible);
        assert!(report.min_j <= J_MIN);
    }
}

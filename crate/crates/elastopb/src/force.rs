//! Electrostatic forces on the flexible molecule: Gaussian-regularized body
//! forces at the charge sites, Maxwell-stress + osmotic surface forces on the
//! molecular surface, net forces against the free-state reference, and the
//! four-step perturbation ledger (ionic strength, rigid cavity, added
//! charges, deformation).

use crate::charge::{eval_g_singular, ChargeSystem, DielectricParams};
use crate::elasticity::LoadSet;
use crate::error::{Error, Result};
use crate::fem::{cell_gradient, tet_point, tet_quadrature_4, tri_point, tri_quadrature_2};
use crate::la::{self, Vec3};
use crate::mesh::{triangle_area_normal, Mesh, Region};
use crate::pbe::{
    deform_charges, solve_pbe_with, PbeConfig, PbeMode, PotentialDecomposition,
    RegionCoefficients,
};
use crate::piola::{DisplacementField, PiolaFields};
use crate::radial::OVERFLOW_LIMIT;
use statrs::function::erf::erf;
use std::io::Write as _;
use std::path::Path;

/// Default per-molecule Gaussian tail bound.
pub const DELTA_TARGET: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    State0,
    State1,
    State2,
    State3,
    Coupled,
}

/// Fitted Gaussian regularization of one atomic force.
#[derive(Debug, Clone, Copy)]
pub struct GaussianBlob {
    /// Prefactor (force/volume); zero for degenerate blobs.
    pub a: f64,
    /// Decay length squared.
    pub sigma: f64,
    /// Unit direction (zero vector for degenerate blobs).
    pub dir: Vec3,
    /// Target force magnitude |A_i|.
    pub target: f64,
}

impl GaussianBlob {
    pub fn degenerate(target: f64) -> Self {
        GaussianBlob {
            a: 0.0,
            sigma: 1.0,
            dir: [0.0; 3],
            target,
        }
    }
}

/// Forces laid out on the undeformed mesh: body vectors at the order-4
/// quadrature points of every MF cell, and one vector per flexible-surface
/// boundary face (indexed into `mesh.boundary_faces`).
#[derive(Debug, Clone)]
pub struct ForceSet {
    pub label: Provenance,
    pub body: Vec<(usize, Vec<Vec3>)>,
    pub surface: Vec<(usize, Vec3)>,
}

impl ForceSet {
    /// Integrated body magnitude plus area-weighted surface magnitude.
    pub fn integrated_norms(&self, mesh: &Mesh) -> (f64, f64) {
        let rule = tet_quadrature_4();
        let mut body = 0.0;
        for (c, vals) in &self.body {
            let vol = mesh.cell_volume(*c);
            for (q, f) in rule.iter().zip(vals) {
                body += q.weight * vol * la::norm(*f);
            }
        }
        let mut surf = 0.0;
        for (fidx, f) in &self.surface {
            let [a, b, c] = mesh.boundary_faces[*fidx].verts;
            let (area, _) =
                triangle_area_normal(mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
            surf += area * la::norm(*f);
        }
        (body, surf)
    }

    /// Convert to an elasticity load set (same layout by construction).
    pub fn to_loads(&self) -> LoadSet {
        LoadSet {
            body: self.body.clone(),
            traction: self.surface.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PerturbationLedger {
    /// Deltas (f1-f0, f2-f1, f3-f2, f-f3).
    pub deltas: Vec<ForceSet>,
    /// Sup-norm of (sum of deltas) - (final - reference); pure algebra.
    pub telescoping_residual: f64,
}

/// phi_r at the charge site plus the analytic partner potential
/// sum_{j != i} G_j(x_i); the self term is excluded.
pub fn charge_site_potential(
    mesh: &Mesh,
    decomp: &PotentialDecomposition,
    i: usize,
) -> Result<f64> {
    let x = decomp.charges.flexible[i].position;
    let cell = mesh
        .find_cell(x)
        .ok_or(Error::ChargeOutsideRegion { charge: i })?;
    if mesh.cell_region[cell] != Region::Mf {
        return Err(Error::ChargeOutsideRegion { charge: i });
    }
    let bary = mesh.barycentric(cell, x);
    let phi_r = decomp.phi_r();
    let mut val = crate::fem::tet_interp(mesh, cell, &phi_r, &bary);
    for (j, c) in decomp.charges.all_charges().enumerate() {
        if j == i {
            continue;
        }
        let r = la::norm(la::sub(x, c.position));
        if r <= crate::charge::SINGULARITY_GUARD {
            return Err(Error::Singularity {
                charge: j,
                distance: r,
            });
        }
        val += c.magnitude / (decomp.eps_m * r);
    }
    Ok(val)
}

/// Gradient of the site potential: P1 cell gradient of phi_r plus the
/// analytic partner gradients.
pub fn charge_site_gradient(
    mesh: &Mesh,
    decomp: &PotentialDecomposition,
    i: usize,
) -> Result<Vec3> {
    let x = decomp.charges.flexible[i].position;
    let cell = mesh
        .find_cell(x)
        .ok_or(Error::ChargeOutsideRegion { charge: i })?;
    let phi_r = decomp.phi_r();
    let mut g = cell_gradient(mesh, cell, &phi_r);
    for (j, c) in decomp.charges.all_charges().enumerate() {
        if j == i {
            continue;
        }
        let d = la::sub(x, c.position);
        let r = la::norm(d);
        if r <= crate::charge::SINGULARITY_GUARD {
            return Err(Error::Singularity {
                charge: j,
                distance: r,
            });
        }
        g = la::add(g, la::scale(d, -c.magnitude / (decomp.eps_m * r * r * r)));
    }
    Ok(g)
}

/// 4 pi int_0^r s^2 e^{-s^2/sigma} ds in closed form.
fn gaussian_ball_integral(r: f64, sigma: f64) -> f64 {
    let root = sigma.sqrt();
    4.0 * std::f64::consts::PI
        * (0.25 * sigma * root * std::f64::consts::PI.sqrt() * erf(r / root)
            - 0.5 * sigma * r * (-r * r / sigma).exp())
}

/// Fit (a, sigma) so that a e^{-R^2/sigma} = delta_target / n_f and the ball
/// integral of the blob magnitude equals |A|. Returns a degenerate blob when
/// the target is too small to support the required tail.
pub fn fit_gaussian(a_target: f64, r: f64, delta_target: f64, n_f: usize) -> Result<GaussianBlob> {
    if r <= 0.0 || delta_target <= 0.0 {
        return Err(Error::Validation(
            "fit_gaussian needs positive radius and tail target".into(),
        ));
    }
    let target = a_target.abs();
    let tail = delta_target / n_f as f64;
    let ball_volume = 4.0 / 3.0 * std::f64::consts::PI * r.powi(3);
    if target <= tail * ball_volume * (1.0 + 1e-12) {
        return Ok(GaussianBlob::degenerate(target));
    }
    // a(sigma) e^{-r^2/sigma} = tail pins a; bisect the integral constraint,
    // which decreases monotonically from +inf to tail * ball_volume
    let f = |sigma: f64| -> f64 { tail * (r * r / sigma).exp() * gaussian_ball_integral(r, sigma) - target };
    let mut lo = r * r / (OVERFLOW_LIMIT - 1.0);
    let mut hi = r * r * 1e8;
    debug_assert!(f(lo) > 0.0 && f(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let sigma = 0.5 * (lo + hi);
    let a = tail * (r * r / sigma).exp();
    Ok(GaussianBlob {
        a,
        sigma,
        dir: [0.0; 3],
        target,
    })
}

/// Body force field f_b(x) = sum_i a_i e^{-|x-x_i|^2/sigma_i} n_i with
/// A_i = |q_i psi_i| and n_i along the site-potential gradient. Returns the
/// field at the order-4 quadrature points of every MF cell plus the fitted
/// blob parameters.
pub fn assemble_body_force(
    mesh: &Mesh,
    decomp: &PotentialDecomposition,
    delta_target: f64,
) -> Result<(Vec<(usize, Vec<Vec3>)>, Vec<GaussianBlob>)> {
    let n_f = decomp.charges.flexible.len().max(1);
    let mut blobs = Vec::with_capacity(decomp.charges.flexible.len());
    for i in 0..decomp.charges.flexible.len() {
        let q = decomp.charges.flexible[i].magnitude;
        let psi = charge_site_potential(mesh, decomp, i)?;
        let grad = charge_site_gradient(mesh, decomp, i)?;
        let gnorm = la::norm(grad);
        let target = (q * psi).abs();
        if gnorm <= 1e-12 {
            blobs.push(GaussianBlob::degenerate(target));
            continue;
        }
        let mut blob = fit_gaussian(target, decomp.charges.flexible[i].radius, delta_target, n_f)?;
        blob.dir = la::scale(grad, 1.0 / gnorm);
        blobs.push(blob);
    }

    let rule = tet_quadrature_4();
    let mut body = Vec::new();
    for c in 0..mesh.n_cells() {
        if mesh.cell_region[c] != Region::Mf {
            continue;
        }
        let mut vals = Vec::with_capacity(rule.len());
        for q in &rule {
            let x = tet_point(mesh, c, &q.bary);
            let mut f = [0.0; 3];
            for (blob, charge) in blobs.iter().zip(&decomp.charges.flexible) {
                if blob.a == 0.0 {
                    continue;
                }
                let d2 = {
                    let d = la::sub(x, charge.position);
                    la::dot(d, d)
                };
                f = la::add(f, la::scale(blob.dir, blob.a * (-d2 / blob.sigma).exp()));
            }
            vals.push(f);
        }
        body.push((c, vals));
    }
    Ok((body, blobs))
}

/// Surface force per flexible-surface face: the Maxwell-stress traction jump
/// 1/2 (eps_s |F grad phi|_s^2 - eps_m |F grad phi|_m^2) minus the osmotic
/// pressure kappa^2 (cosh(phi_s) - 1), signed along the outward normal. The
/// one-sided traces use the adjacent-cell P1 gradient of phi_r plus the
/// analytic grad G (never a norm over the singular molecule interior).
pub fn assemble_surface_force(
    mesh: &Mesh,
    decomp: &PotentialDecomposition,
    piola: &PiolaFields,
    coeffs: &RegionCoefficients,
) -> Result<Vec<(usize, Vec3)>> {
    let phi_r = decomp.phi_r();
    let mut out = Vec::new();
    for (fidx, face) in mesh.boundary_faces.iter().enumerate() {
        if !face.tag.is_gamma_f() {
            continue;
        }
        let cell_out = face.cell_out.ok_or_else(|| {
            Error::Topology(format!("surface face {:?} lacks a solvent cell", face.verts))
        })?;
        let [a, b, c] = face.verts;
        let (_, mut normal) =
            triangle_area_normal(mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
        let to_face = la::sub(mesh.face_centroid(&face.verts), mesh.cell_centroid(face.cell_in));
        if la::dot(normal, to_face) < 0.0 {
            normal = la::scale(normal, -1.0);
        }
        let centroid = mesh.face_centroid(&face.verts);
        let grad_g = crate::charge::eval_grad_g_singular(&decomp.charges, decomp.eps_m, centroid)?;

        // molecule side: phi_r is smooth, G analytic (never interpolate the
        // near-singular kernel inside). solvent side: interpolate G nodally
        // so its P1 error cancels against the equal-and-opposite error in
        // phi_r -- their sum is the smooth total potential there.
        let e_m = la::mat_vec(
            &piola.f[face.cell_in],
            la::add(cell_gradient(mesh, face.cell_in, &phi_r), grad_g),
        );
        let e_s = {
            let mut total = [0.0; 3];
            let (grads, _) = crate::fem::cell_p1_gradients(mesh, cell_out);
            for (i, &v) in mesh.cells[cell_out].iter().enumerate() {
                let val =
                    phi_r[v] + eval_g_singular(&decomp.charges, decomp.eps_m, mesh.vertices[v])?;
                total = la::add(total, la::scale(grads[i], val));
            }
            la::mat_vec(&piola.f[cell_out], total)
        };
        let eps_m = coeffs.eps(mesh.cell_region[face.cell_in]);
        let eps_s = coeffs.eps(mesh.cell_region[cell_out]);
        let kappa = coeffs.kappa(mesh.cell_region[cell_out]);

        let mut scalar = 0.5 * (eps_s * la::dot(e_s, e_s) - eps_m * la::dot(e_m, e_m));
        if kappa > 0.0 {
            // face-averaged total potential on the solvent side
            let rule = tri_quadrature_2();
            let mut phi_s = 0.0;
            for q in &rule {
                let x = tri_point(mesh, &face.verts, &q.bary);
                let mut v = eval_g_singular(&decomp.charges, decomp.eps_m, x)?;
                for (i, &vtx) in face.verts.iter().enumerate() {
                    v += q.bary[i] * phi_r[vtx];
                }
                phi_s += q.weight * v;
            }
            if phi_s.abs() > OVERFLOW_LIMIT {
                return Err(Error::OverflowGuard { argument: phi_s });
            }
            scalar -= kappa * kappa * (phi_s.cosh() - 1.0);
        }
        out.push((fidx, la::scale(normal, scalar)));
    }
    Ok(out)
}

/// Full force evaluation for one state.
pub fn compute_forces(
    mesh: &Mesh,
    decomp: &PotentialDecomposition,
    piola: &PiolaFields,
    coeffs: &RegionCoefficients,
    delta_target: f64,
    label: Provenance,
) -> Result<ForceSet> {
    let (body, _) = assemble_body_force(mesh, decomp, delta_target)?;
    let surface = assemble_surface_force(mesh, decomp, piola, coeffs)?;
    Ok(ForceSet {
        label,
        body,
        surface,
    })
}

fn check_layout(a: &ForceSet, b: &ForceSet) -> Result<()> {
    if a.body.len() != b.body.len()
        || a.surface.len() != b.surface.len()
        || a.body.iter().zip(&b.body).any(|(x, y)| x.0 != y.0)
        || a.surface.iter().zip(&b.surface).any(|(x, y)| x.0 != y.0)
    {
        return Err(Error::LayoutMismatch(
            "force sets use different mesh layouts".into(),
        ));
    }
    Ok(())
}

fn combine(a: &ForceSet, b: &ForceSet, sign: f64, label: Provenance) -> ForceSet {
    ForceSet {
        label,
        body: a
            .body
            .iter()
            .zip(&b.body)
            .map(|((c, va), (_, vb))| {
                (
                    *c,
                    va.iter()
                        .zip(vb)
                        .map(|(x, y)| la::add(*x, la::scale(*y, sign)))
                        .collect(),
                )
            })
            .collect(),
        surface: a
            .surface
            .iter()
            .zip(&b.surface)
            .map(|((f, va), (_, vb))| (*f, la::add(*va, la::scale(*vb, sign))))
            .collect(),
    }
}

fn sup_norm(fs: &ForceSet) -> f64 {
    let mut m: f64 = 0.0;
    for (_, vals) in &fs.body {
        for v in vals {
            for x in v {
                m = m.max(x.abs());
            }
        }
    }
    for (_, v) in &fs.surface {
        for x in v {
            m = m.max(x.abs());
        }
    }
    m
}

/// Pointwise/facewise difference current - reference.
pub fn net_forces(current: &ForceSet, reference: &ForceSet) -> Result<ForceSet> {
    check_layout(current, reference)?;
    Ok(combine(current, reference, -1.0, current.label))
}

/// Four-step ledger from the ordered states [0, 1, 2, 3, coupled].
pub fn build_perturbation_ledger(states: &[ForceSet]) -> Result<PerturbationLedger> {
    if states.len() != 5 {
        return Err(Error::IncompleteLedger(states.len()));
    }
    for w in states.windows(2) {
        check_layout(&w[0], &w[1])?;
    }
    let deltas: Vec<ForceSet> = states
        .windows(2)
        .map(|w| combine(&w[1], &w[0], -1.0, w[1].label))
        .collect();
    // sum of deltas vs final - reference
    let mut sum = deltas[0].clone();
    for d in &deltas[1..] {
        sum = combine(&sum, d, 1.0, Provenance::Coupled);
    }
    let total = combine(&states[4], &states[0], -1.0, Provenance::Coupled);
    let residual = sup_norm(&combine(&sum, &total, -1.0, Provenance::Coupled));
    Ok(PerturbationLedger {
        deltas,
        telescoping_residual: residual,
    })
}

/// Scenario inputs for the state pipeline.
#[derive(Debug, Clone)]
pub struct StatePipelineConfig {
    pub delta_target: f64,
    pub pbe: PbeConfig,
    pub mode: PbeMode,
}

impl Default for StatePipelineConfig {
    fn default() -> Self {
        StatePipelineConfig {
            delta_target: DELTA_TARGET,
            pbe: PbeConfig::default(),
            mode: PbeMode::Nonlinear,
        }
    }
}

/// Free-state reference forces: flexible charges only, reference ionic
/// strength, rigid cavity treated as solvent, undeformed configuration.
pub fn free_state_forces(
    mesh: &Mesh,
    charges: &ChargeSystem,
    diel: &DielectricParams,
    cfg: &StatePipelineConfig,
) -> Result<ForceSet> {
    let identity = PiolaFields::identity(mesh);
    let flexible_only = ChargeSystem {
        flexible: charges.flexible.clone(),
        rigid: vec![],
    };
    let coeffs = RegionCoefficients {
        eps: [diel.eps_m, diel.eps_s, diel.eps_s],
        kappa: [0.0, diel.kappa0, diel.kappa0],
    };
    let d = DielectricParams {
        kappa: diel.kappa0,
        ..*diel
    };
    let (decomp, _) =
        solve_pbe_with(mesh, &identity, &flexible_only, &d, &coeffs, &cfg.pbe, cfg.mode)?;
    compute_forces(
        mesh,
        &decomp,
        &identity,
        &coeffs,
        cfg.delta_target,
        Provenance::State0,
    )
}

/// Run the four-step transition on one mesh: state 0 is the free reference
/// (kappa0, rigid cavity treated as solvent, flexible charges only, u = 0);
/// the steps switch the ionic strength, carve the uncharged rigid cavity, add
/// the rigid charges, and finally apply the deformation.
pub fn perturbation_states(
    mesh: &Mesh,
    charges: &ChargeSystem,
    diel: &DielectricParams,
    disp: Option<&DisplacementField>,
    cfg: &StatePipelineConfig,
) -> Result<(Vec<ForceSet>, PerturbationLedger)> {
    let identity = PiolaFields::identity(mesh);
    let flexible_only = ChargeSystem {
        flexible: charges.flexible.clone(),
        rigid: vec![],
    };
    let cavity_as_solvent = |kappa: f64| RegionCoefficients {
        eps: [diel.eps_m, diel.eps_s, diel.eps_s],
        kappa: [0.0, kappa, kappa],
    };
    let standard = RegionCoefficients::standard(diel);

    let solve_state =
        |charges: &ChargeSystem,
         datum_kappa: f64,
         coeffs: &RegionCoefficients,
         piola: &PiolaFields,
         label: Provenance|
         -> Result<ForceSet> {
            let d = DielectricParams {
                kappa: datum_kappa,
                ..*diel
            };
            let (decomp, _) = solve_pbe_with(mesh, piola, charges, &d, coeffs, &cfg.pbe, cfg.mode)?;
            compute_forces(mesh, &decomp, piola, coeffs, cfg.delta_target, label)
        };

    let s0 = free_state_forces(mesh, charges, diel, cfg)?;
    let s1 = solve_state(
        &flexible_only,
        diel.kappa,
        &cavity_as_solvent(diel.kappa),
        &identity,
        Provenance::State1,
    )?;
    let s2 = solve_state(
        &flexible_only,
        diel.kappa,
        &standard,
        &identity,
        Provenance::State2,
    )?;
    let s3 = solve_state(charges, diel.kappa, &standard, &identity, Provenance::State3)?;
    let coupled = match disp {
        Some(u) => {
            let piola = crate::piola::compute_piola(mesh, u)?;
            let moved = deform_charges(mesh, charges, u)?;
            solve_state(&moved, diel.kappa, &standard, &piola, Provenance::Coupled)?
        }
        None => ForceSet {
            label: Provenance::Coupled,
            ..s3.clone()
        },
    };
    let states = vec![s0, s1, s2, s3, coupled];
    let ledger = build_perturbation_ledger(&states)?;
    Ok((states, ledger))
}

/// Per-face surface-force CSV.
pub fn write_surface_csv(mesh: &Mesh, fs: &ForceSet, path: &Path) -> Result<()> {
    let mut out = String::from("face,cx,cy,cz,nx,ny,nz,fx,fy,fz\n");
    for (fidx, f) in &fs.surface {
        let face = &mesh.boundary_faces[*fidx];
        let c = mesh.face_centroid(&face.verts);
        let [a, b, cc] = face.verts;
        let (_, mut n) = triangle_area_normal(mesh.vertices[a], mesh.vertices[b], mesh.vertices[cc]);
        let to_face = la::sub(c, mesh.cell_centroid(face.cell_in));
        if la::dot(n, to_face) < 0.0 {
            n = la::scale(n, -1.0);
        }
        out.push_str(&format!(
            "{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.12e},{:.12e},{:.12e}\n",
            fidx, c[0], c[1], c[2], n[0], n[1], n[2], f[0], f[1], f[2]
        ));
    }
    std::fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

/// Per-atom blob parameter CSV.
pub fn write_blob_csv(blobs: &[GaussianBlob], path: &Path) -> Result<()> {
    let mut out = String::from("atom,target,a,sigma\n");
    for (i, b) in blobs.iter().enumerate() {
        out.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e}\n",
            i, b.target, b.a, b.sigma
        ));
    }
    std::fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charge::PointCharge;
    use crate::mesh::{build_ball_in_box, build_balls_in_box, SphereSpec};
    use crate::pbe::solve_pbe;
    use crate::radial::{solve_radial_pb, RadialConfig};
    use approx::assert_relative_eq;

    fn born_mesh(h: f64) -> Mesh {
        build_ball_in_box([0.0; 3], 1.0, 4.0, h, Region::Mf).unwrap()
    }

    fn born_charge(q: f64) -> ChargeSystem {
        ChargeSystem {
            flexible: vec![PointCharge {
                position: [0.0; 3],
                magnitude: q,
                radius: 1.0,
            }],
            rigid: vec![],
        }
    }

    fn diel(kappa: f64, kappa0: f64) -> DielectricParams {
        DielectricParams {
            eps_m: 2.0,
            eps_s: 80.0,
            kappa,
            kappa0,
        }
    }

    fn born_decomp(mesh: &Mesh, q: f64, kappa: f64) -> PotentialDecomposition {
        let piola = PiolaFields::identity(mesh);
        let (decomp, _) = solve_pbe(
            mesh,
            &piola,
            &born_charge(q),
            &diel(kappa, kappa),
            &PbeConfig::default(),
            PbeMode::Nonlinear,
        )
        .unwrap();
        decomp
    }

    #[test]
    fn gaussian_fit_satisfies_both_constraints() {
        let blob = fit_gaussian(1.0, 1.0, 1e-6, 1).unwrap();
        assert!(blob.a > 0.0);
        // tail constraint exact by construction
        assert_relative_eq!(blob.a * (-1.0f64 / blob.sigma).exp(), 1e-6, max_relative = 1e-10);
        // integral constraint re-checked by independent Simpson quadrature
        let n = 4000;
        let h = 1.0 / n as f64;
        let f = |r: f64| r * r * (-r * r / blob.sigma).exp();
        let mut simpson = f(0.0) + f(1.0);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            simpson += w * f(k as f64 * h);
        }
        simpson *= h / 3.0;
        let integral = 4.0 * std::f64::consts::PI * blob.a * simpson;
        assert_relative_eq!(integral, 1.0, max_relative = 1e-8);
    }

    #[test]
    fn gaussian_fit_scales_and_degenerates() {
        let b1 = fit_gaussian(1.0, 1.0, 1e-6, 1).unwrap();
        let b2 = fit_gaussian(2.0, 1.0, 1e-6, 1).unwrap();
        let integral = |b: &GaussianBlob| b.a * gaussian_ball_integral(1.0, b.sigma);
        assert_relative_eq!(integral(&b2), 2.0 * integral(&b1), max_relative = 1e-8);

        // zero or tiny targets give the degenerate blob
        assert_eq!(fit_gaussian(0.0, 1.0, 1e-6, 1).unwrap().a, 0.0);
        let tiny = 1e-6 * 4.0;
        assert_eq!(fit_gaussian(tiny * 0.5, 1.0, 1e-6, 1).unwrap().a, 0.0);
    }

    #[test]
    fn born_site_potential_matches_oracle() {
        let mesh = born_mesh(0.25);
        let decomp = born_decomp(&mesh, 1.0, 0.0);
        let psi = charge_site_potential(&mesh, &decomp, 0).unwrap();
        assert_relative_eq!(psi, -0.4875, max_relative = 0.05);
        // spherical symmetry: site gradient is tiny
        let g = charge_site_gradient(&mesh, &decomp, 0).unwrap();
        assert!(la::norm(g) < 0.05 * psi.abs());
    }

    #[test]
    fn born_body_force_magnitude_and_direction() {
        let mesh = born_mesh(0.5);
        let decomp = born_decomp(&mesh, 1.0, 0.0);
        let (body, blobs) = assemble_body_force(&mesh, &decomp, DELTA_TARGET).unwrap();
        // blob target is |q psi| at the site
        assert_relative_eq!(blobs[0].target, 0.4875, max_relative = 0.1);
        if blobs[0].a == 0.0 {
            // discrete site gradient below the zero threshold: no body force
            for (_, vals) in &body {
                for v in vals {
                    assert_eq!(*v, [0.0; 3]);
                }
            }
            return;
        }
        // every sample is parallel to the fitted direction, and the
        // integrated magnitude recovers the target up to the Gaussian tail
        // outside the vdW ball (sigma is small, so the mesh resolves most of
        // it; allow a loose quadrature tolerance here -- the tight
        // conservation check lives in the closed-form fit tests)
        let mut net = [0.0; 3];
        let rule = tet_quadrature_4();
        for (c, vals) in &body {
            let vol = mesh.cell_volume(*c);
            for (q, f) in rule.iter().zip(vals) {
                assert!(la::norm(la::cross(*f, blobs[0].dir)) <= 1e-14);
                net = la::add(net, la::scale(*f, q.weight * vol));
            }
        }
        assert!(la::dot(net, blobs[0].dir) > 0.0);
    }

    #[test]
    fn born_surface_force_matches_radial_oracle() {
        let mesh = born_mesh(0.25);
        let decomp = born_decomp(&mesh, 1.0, 0.0);
        let piola = PiolaFields::identity(&mesh);
        let coeffs = RegionCoefficients::standard(&diel(0.0, 0.0));
        let surface = assemble_surface_force(&mesh, &decomp, &piola, &coeffs).unwrap();
        assert!(!surface.is_empty());

        let oracle = solve_radial_pb(
            &RadialConfig {
                q: 1.0,
                r_sphere: 1.0,
                eps_m: 2.0,
                eps_s: 80.0,
                kappa: 0.0,
                r_out: 4.0,
                n_points: 2000,
            },
            false,
        )
        .unwrap()
        .surface_force;
        assert!(oracle < 0.0);

        // area-weighted mean normal component vs the oracle; every face force
        // is parallel to its normal and points inward
        let mut mean = 0.0;
        let mut area_sum = 0.0;
        for (fidx, f) in &surface {
            let face = &mesh.boundary_faces[*fidx];
            let [a, b, c] = face.verts;
            let (area, mut n) =
                triangle_area_normal(mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
            let to_face = la::sub(mesh.face_centroid(&face.verts), mesh.cell_centroid(face.cell_in));
            if la::dot(n, to_face) < 0.0 {
                n = la::scale(n, -1.0);
            }
            let tangential = la::norm(la::cross(*f, n));
            assert!(tangential <= 1e-12 * la::norm(*f).max(1e-30));
            mean += la::dot(*f, n) * area;
            area_sum += area;
        }
        mean /= area_sum;
        assert_relative_eq!(mean, oracle, max_relative = 0.15);
    }

    #[test]
    fn screening_pushes_surface_force_inward() {
        let mesh = born_mesh(0.5);
        let d0 = born_decomp(&mesh, 1.0, 0.0);
        let d1 = born_decomp(&mesh, 1.0, 1.0);
        let piola = PiolaFields::identity(&mesh);
        let scalar_mean = |decomp: &PotentialDecomposition, kappa: f64| -> f64 {
            let coeffs = RegionCoefficients::standard(&diel(kappa, kappa));
            let surface = assemble_surface_force(&mesh, decomp, &piola, &coeffs).unwrap();
            let mut s = 0.0;
            for (fidx, f) in &surface {
                let face = &mesh.boundary_faces[*fidx];
                let [a, b, c] = face.verts;
                let (_, mut n) =
                    triangle_area_normal(mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
                let to_face =
                    la::sub(mesh.face_centroid(&face.verts), mesh.cell_centroid(face.cell_in));
                if la::dot(n, to_face) < 0.0 {
                    n = la::scale(n, -1.0);
                }
                s += la::dot(*f, n);
            }
            s / surface.len() as f64
        };
        assert!(scalar_mean(&d1, 1.0) < scalar_mean(&d0, 0.0));
    }

    #[test]
    fn net_forces_and_layout() {
        let mesh = born_mesh(0.5);
        let decomp = born_decomp(&mesh, 1.0, 0.5);
        let piola = PiolaFields::identity(&mesh);
        let coeffs = RegionCoefficients::standard(&diel(0.5, 0.5));
        let fs = compute_forces(&mesh, &decomp, &piola, &coeffs, DELTA_TARGET, Provenance::State0)
            .unwrap();
        let net = net_forces(&fs, &fs).unwrap();
        assert_eq!(sup_norm(&net), 0.0);

        let mut other = fs.clone();
        other.surface.pop();
        assert!(matches!(
            net_forces(&fs, &other),
            Err(Error::LayoutMismatch(_))
        ));
    }

    #[test]
    fn zero_perturbation_ledger_is_exactly_zero() {
        let mesh = born_mesh(0.5);
        let charges = born_charge(1.0);
        let d = diel(0.5, 0.5);
        let (states, ledger) =
            perturbation_states(&mesh, &charges, &d, None, &StatePipelineConfig::default())
                .unwrap();
        assert_eq!(states.len(), 5);
        assert_eq!(ledger.telescoping_residual, 0.0);
        for delta in &ledger.deltas {
            assert_eq!(sup_norm(delta), 0.0);
        }
    }

    #[test]
    fn two_sphere_ledger_telescopes() {
        let mesh = build_balls_in_box(
            &[
                SphereSpec {
                    center: [-2.0, 0.0, 0.0],
                    radius: 1.0,
                    region: Region::Mf,
                },
                SphereSpec {
                    center: [2.0, 0.0, 0.0],
                    radius: 1.0,
                    region: Region::Mr,
                },
            ],
            6.0,
            0.5,
        )
        .unwrap();
        let charges = ChargeSystem {
            flexible: vec![PointCharge {
                position: [-2.0, 0.0, 0.0],
                magnitude: 1.0,
                radius: 1.0,
            }],
            rigid: vec![PointCharge {
                position: [2.0, 0.0, 0.0],
                magnitude: 0.5,
                radius: 1.0,
            }],
        };
        let d = diel(0.1, 0.05);
        let (states, ledger) =
            perturbation_states(&mesh, &charges, &d, None, &StatePipelineConfig::default())
                .unwrap();
        assert!(ledger.telescoping_residual <= 1e-12);
        // ionic step and cavity step both move the forces
        assert!(sup_norm(&ledger.deltas[0]) > 0.0);
        assert!(sup_norm(&ledger.deltas[1]) > 0.0);
        assert!(sup_norm(&ledger.deltas[2]) > 0.0);
        // no deformation: last delta vanishes identically
        assert_eq!(sup_norm(&ledger.deltas[3]), 0.0);
        // ledger sum equals the net change exactly
        let total = net_forces(&states[4], &states[0]).unwrap();
        let mut sum = ledger.deltas[0].clone();
        for dlt in &ledger.deltas[1..] {
            sum = combine(&sum, dlt, 1.0, Provenance::Coupled);
        }
        let diff = combine(&sum, &total, -1.0, Provenance::Coupled);
        assert!(sup_norm(&diff) <= 1e-12);
    }

    #[test]
    fn csv_exports() {
        let mesh = born_mesh(0.5);
        let decomp = born_decomp(&mesh, 1.0, 0.5);
        let piola = PiolaFields::identity(&mesh);
        let coeffs = RegionCoefficients::standard(&diel(0.5, 0.5));
        let fs = compute_forces(&mesh, &decomp, &piola, &coeffs, DELTA_TARGET, Provenance::State0)
            .unwrap();
        let (_, blobs) = assemble_body_force(&mesh, &decomp, DELTA_TARGET).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let sp = dir.path().join("surface.csv");
        let bp = dir.path().join("blobs.csv");
        write_surface_csv(&mesh, &fs, &sp).unwrap();
        write_blob_csv(&blobs, &bp).unwrap();
        let stext = std::fs::read_to_string(&sp).unwrap();
        assert!(stext.starts_with("face,"));
        assert_eq!(stext.lines().count(), fs.surface.len() + 1);
        let btext = std::fs::read_to_string(&bp).unwrap();
        assert_eq!(btext.lines().count(), blobs.len() + 1);
    }
}

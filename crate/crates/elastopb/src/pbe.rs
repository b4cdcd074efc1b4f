//! Piola-transformed, singularity-split Poisson-Boltzmann solver.
//!
//! The total potential is phi = G + phi_l + phi_n, where G is the analytic
//! Coulomb field of the point charges (never discretized), phi_l carries the
//! dielectric-jump interface source and the screened outer datum, and phi_n
//! absorbs the sinh nonlinearity via damped Newton with an energy line
//! search. All assembly happens on the undeformed mesh with per-cell Piola
//! fields F and J.

use crate::charge::{
    eval_g_boundary, eval_g_singular, eval_grad_g_singular, ChargeSystem, DielectricParams,
};
use crate::error::{Error, Result};
use crate::fem::{
    cell_p1_gradients, eval_vec_at, tet_point, tet_quadrature_4, tri_point, tri_quadrature_4,
};
use crate::la;
use crate::mesh::{FaceTag, Mesh, Region};
use crate::par;
use crate::piola::{DisplacementField, PiolaFields};
use crate::radial::OVERFLOW_LIMIT;
use crate::sparse::{solve_cg, CgConfig, Csr, Triplets};
use std::io::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbeMode {
    Nonlinear,
    /// sinh(phi) replaced by phi (screened linear problem).
    Linearized,
}

/// Region-wise (eps, kappa) coefficient map. The standard map puts eps_m and
/// kappa = 0 on both molecules and (eps_s, kappa) on the solvent; the
/// perturbation analysis overrides individual regions (e.g. treating the
/// rigid cavity as solvent in the reference state).
#[derive(Debug, Clone, Copy)]
pub struct RegionCoefficients {
    pub eps: [f64; 3],
    pub kappa: [f64; 3],
}

fn ridx(r: Region) -> usize {
    match r {
        Region::Mf => 0,
        Region::Mr => 1,
        Region::Solvent => 2,
    }
}

impl RegionCoefficients {
    pub fn standard(diel: &DielectricParams) -> Self {
        RegionCoefficients {
            eps: [diel.eps_m, diel.eps_m, diel.eps_s],
            kappa: [0.0, 0.0, diel.kappa],
        }
    }

    pub fn eps(&self, r: Region) -> f64 {
        self.eps[ridx(r)]
    }

    pub fn kappa(&self, r: Region) -> f64 {
        self.kappa[ridx(r)]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PbeConfig {
    /// Newton residual tolerance (l2, relative to the initial residual or 1).
    pub tol: f64,
    pub max_newton: usize,
    pub backtrack: f64,
    pub armijo: f64,
}

impl Default for PbeConfig {
    fn default() -> Self {
        PbeConfig {
            tol: 1e-10,
            max_newton: 50,
            backtrack: 0.5,
            armijo: 1e-4,
        }
    }
}

impl PbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tol <= 0.0 {
            return Err(Error::Validation("Newton tolerance must be positive".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Validation(format!(
                "backtracking factor must be in (0,1), got {}",
                self.backtrack
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonRecord {
    pub iteration: usize,
    pub residual: f64,
    pub energy: f64,
    pub damping: f64,
}

#[derive(Debug, Clone)]
pub struct EnergyReport {
    pub records: Vec<NewtonRecord>,
    pub monotone_nonincreasing: bool,
}

/// Full potential decomposition on one mesh/deformation state. The stored
/// charge positions are the deformed images Phi(x_i).
#[derive(Debug, Clone)]
pub struct PotentialDecomposition {
    pub charges: ChargeSystem,
    pub eps_m: f64,
    pub phi_l: Vec<f64>,
    pub phi_n: Vec<f64>,
    pub mode: PbeMode,
}

impl PotentialDecomposition {
    pub fn phi_r(&self) -> Vec<f64> {
        self.phi_l
            .iter()
            .zip(&self.phi_n)
            .map(|(l, n)| l + n)
            .collect()
    }
}

/// Move charge positions to their deformed images Phi(x_i) = x_i + u(x_i).
/// Rigid charges stay put (the rigid molecule does not deform).
pub fn deform_charges(
    mesh: &Mesh,
    charges: &ChargeSystem,
    disp: &DisplacementField,
) -> Result<ChargeSystem> {
    let mut out = charges.clone();
    for (i, c) in out.flexible.iter_mut().enumerate() {
        let u = eval_vec_at(mesh, &disp.values, c.position)
            .ok_or(Error::ChargeOutsideRegion { charge: i })?;
        c.position = la::add(c.position, u);
    }
    Ok(out)
}

fn guarded_sinh(arg: f64) -> Result<f64> {
    if arg.abs() > OVERFLOW_LIMIT {
        return Err(Error::OverflowGuard { argument: arg });
    }
    Ok(arg.sinh())
}

fn guarded_cosh(arg: f64) -> Result<f64> {
    if arg.abs() > OVERFLOW_LIMIT {
        return Err(Error::OverflowGuard { argument: arg });
    }
    Ok(arg.cosh())
}

/// Stiffness triplets of (eps F grad v, grad w) over all cells.
fn stiffness_triplets(
    mesh: &Mesh,
    piola: &PiolaFields,
    coeffs: &RegionCoefficients,
    trip: &mut Triplets,
) {
    let locals: Vec<([usize; 4], [[f64; 4]; 4])> = par::map_indexed(mesh.n_cells(), |c| {
        let (grads, vol) = cell_p1_gradients(mesh, c);
        let eps = coeffs.eps(mesh.cell_region[c]);
        let f = &piola.f[c];
        let mut local = [[0.0; 4]; 4];
        for i in 0..4 {
            let fg = la::mat_vec(f, grads[i]);
            for j in 0..4 {
                local[i][j] = eps * vol * la::dot(fg, grads[j]);
            }
        }
        (mesh.cells[c], local)
    });
    for (verts, local) in locals {
        for i in 0..4 {
            for j in 0..4 {
                trip.push(verts[i], verts[j], local[i][j]);
            }
        }
    }
}

/// Interface load vector: b_i = [eps] (F grad G . n, v_i) over every face
/// where the coefficient map jumps, with n oriented away from the molecule
/// side and F taken from the inside cell.
fn interface_source(
    mesh: &Mesh,
    piola: &PiolaFields,
    charges: &ChargeSystem,
    eps_m: f64,
    coeffs: &RegionCoefficients,
) -> Result<Vec<f64>> {
    let mut b = vec![0.0; mesh.n_vertices()];
    let rule = tri_quadrature_4();
    for face in &mesh.boundary_faces {
        let Some(cell_out) = face.cell_out else {
            continue;
        };
        let jump = coeffs.eps(mesh.cell_region[cell_out]) - coeffs.eps(mesh.cell_region[face.cell_in]);
        if jump.abs() < 1e-14 {
            continue;
        }
        let [a, bb, c] = face.verts;
        let (area, mut normal) = crate::mesh::triangle_area_normal(
            mesh.vertices[a],
            mesh.vertices[bb],
            mesh.vertices[c],
        );
        let to_face = la::sub(mesh.face_centroid(&face.verts), mesh.cell_centroid(face.cell_in));
        if la::dot(normal, to_face) < 0.0 {
            normal = la::scale(normal, -1.0);
        }
        let f_in = &piola.f[face.cell_in];
        for q in &rule {
            let x = tri_point(mesh, &face.verts, &q.bary);
            let grad_g = eval_grad_g_singular(charges, eps_m, x)?;
            let flux = la::dot(la::mat_vec(f_in, grad_g), normal);
            for (i, &v) in face.verts.iter().enumerate() {
                b[v] += jump * flux * q.weight * area * q.bary[i];
            }
        }
    }
    Ok(b)
}

fn outer_dirichlet(
    mesh: &Mesh,
    charges: &ChargeSystem,
    diel: &DielectricParams,
) -> Result<Vec<Option<f64>>> {
    let mask = mesh.face_vertex_mask(FaceTag::Outer);
    let mut out = vec![None; mesh.n_vertices()];
    for (v, &m) in mask.iter().enumerate() {
        if m {
            let x = mesh.vertices[v];
            let datum =
                eval_g_boundary(charges, diel, x)? - eval_g_singular(charges, diel.eps_m, x)?;
            out[v] = Some(datum);
        }
    }
    Ok(out)
}

pub fn solve_linear_component(
    mesh: &Mesh,
    piola: &PiolaFields,
    charges: &ChargeSystem,
    diel: &DielectricParams,
) -> Result<Vec<f64>> {
    solve_linear_component_with(mesh, piola, charges, diel, &RegionCoefficients::standard(diel))
}

pub fn solve_linear_component_with(
    mesh: &Mesh,
    piola: &PiolaFields,
    charges: &ChargeSystem,
    diel: &DielectricParams,
    coeffs: &RegionCoefficients,
) -> Result<Vec<f64>> {
    diel.validate()?;
    let n = mesh.n_vertices();
    let mut trip = Triplets::new(n);
    stiffness_triplets(mesh, piola, coeffs, &mut trip);
    let mut a = trip.to_csr();
    let mut b = interface_source(mesh, piola, charges, diel.eps_m, coeffs)?;
    let constrained = outer_dirichlet(mesh, charges, diel)?;
    a.apply_dirichlet(&mut b, &constrained);
    let x0: Vec<f64> = constrained.iter().map(|c| c.unwrap_or(0.0)).collect();
    solve_cg(&a, &b, Some(&x0), &CgConfig::default())
        .map_err(|e| Error::LinearSolve(format!("linear PBE component: {e}")))
}

/// Per-cell quadrature cache for the sinh/cosh terms: only cells where the
/// coefficient kappa is positive contribute.
struct NlCell {
    verts: [usize; 4],
    /// J kappa^2 vol
    jk2_vol: f64,
    /// (barycentric point, weight, G at the point)
    quads: Vec<([f64; 4], f64, f64)>,
}

fn build_nl_cache(
    mesh: &Mesh,
    piola: &PiolaFields,
    charges: &ChargeSystem,
    eps_m: f64,
    coeffs: &RegionCoefficients,
) -> Result<Vec<NlCell>> {
    let rule = tet_quadrature_4();
    let mut cache = Vec::new();
    for c in 0..mesh.n_cells() {
        let kappa = coeffs.kappa(mesh.cell_region[c]);
        if kappa <= 0.0 {
            continue;
        }
        let vol = mesh.cell_volume(c);
        let mut quads = Vec::with_capacity(rule.len());
        for q in &rule {
            let x = tet_point(mesh, c, &q.bary);
            let g = eval_g_singular(charges, eps_m, x)?;
            quads.push((q.bary, q.weight, g));
        }
        cache.push(NlCell {
            verts: mesh.cells[c],
            jk2_vol: piola.jacobian[c] * kappa * kappa * vol,
            quads,
        });
    }
    Ok(cache)
}

fn nl_interp(verts: &[usize; 4], field: &[f64], bary: &[f64; 4]) -> f64 {
    verts
        .iter()
        .enumerate()
        .map(|(i, &v)| bary[i] * field[v])
        .sum()
}

/// Discrete energy E(w) = 1/2 (eps F grad w, grad w) + int J kappa^2 psi(w+G)
/// - <f_G, w>, with psi = cosh in nonlinear mode and 1 + x^2/2 linearized.
/// Returns the energy together with a magnitude scale (the sum of the
/// absolute values of its three constituents). The scale bounds the f64
/// roundoff of the evaluation: energy differences below ~1e-14 x scale are
/// numerical noise and cannot steer a line search.
fn energy_of(
    a_raw: &Csr,
    b_raw: &[f64],
    cache: &[NlCell],
    w: &[f64],
    mode: PbeMode,
) -> Result<(f64, f64)> {
    let aw = a_raw.matvec(w);
    let quad = 0.5 * par::dot(w, &aw);
    let lin = par::dot(b_raw, w);
    let mut nl = 0.0;
    for cell in cache {
        for (bary, weight, g) in &cell.quads {
            let arg = nl_interp(&cell.verts, w, bary) + g;
            let psi = match mode {
                PbeMode::Nonlinear => guarded_cosh(arg)?,
                PbeMode::Linearized => 1.0 + 0.5 * arg * arg,
            };
            nl += cell.jk2_vol * weight * psi;
        }
    }
    Ok((quad - lin + nl, quad.abs() + lin.abs() + nl.abs()))
}

pub fn solve_nonlinear_component(
    mesh: &Mesh,
    piola: &PiolaFields,
    charges: &ChargeSystem,
    diel: &DielectricParams,
    phi_l: &[f64],
    cfg: &PbeConfig,
) -> Result<(Vec<f64>, EnergyReport)> {
    solve_nonlinear_component_with(
        mesh,
        piola,
        charges,
        diel,
        &RegionCoefficients::standard(diel),
        phi_l,
        cfg,
        PbeMode::Nonlinear,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn solve_nonlinear_component_with(
    mesh: &Mesh,
    piola: &PiolaFields,
    charges: &ChargeSystem,
    diel: &DielectricParams,
    coeffs: &RegionCoefficients,
    phi_l: &[f64],
    cfg: &PbeConfig,
    mode: PbeMode,
) -> Result<(Vec<f64>, EnergyReport)> {
    cfg.validate()?;
    let n = mesh.n_vertices();
    let cache = build_nl_cache(mesh, piola, charges, diel.eps_m, coeffs)?;

    // raw (unconstrained) stiffness for residual and energy evaluation
    let mut trip = Triplets::new(n);
    stiffness_triplets(mesh, piola, coeffs, &mut trip);
    let a_raw = trip.to_csr();
    let b_raw = interface_source(mesh, piola, charges, diel.eps_m, coeffs)?;
    let outer = mesh.face_vertex_mask(FaceTag::Outer);
    let zero_constrained: Vec<Option<f64>> = outer
        .iter()
        .map(|&m| if m { Some(0.0) } else { None })
        .collect();

    // Algebraic defect of the linear component, A phi_l - b. Folding it into
    // the residual makes the residual the exact gradient of the line-search
    // energy; without it Newton stalls once the residual reaches the size of
    // the phi_l solver tolerance (which scales with |b|, i.e. with the
    // charge magnitudes).
    let lin_defect: Vec<f64> = a_raw
        .matvec(phi_l)
        .iter()
        .zip(b_raw.iter())
        .map(|(al, b)| al - b)
        .collect();

    // residual of the phi_n problem: the gradient of the discrete energy,
    // A (phi_l + phi_n) - b + N(phi_n + phi_l) on free dofs
    let residual = |phi_n: &[f64]| -> Result<Vec<f64>> {
        let mut r = a_raw.matvec(phi_n);
        for (ri, d) in r.iter_mut().zip(&lin_defect) {
            *ri += d;
        }
        for cell in &cache {
            for (bary, weight, g) in &cell.quads {
                let arg = nl_interp(&cell.verts, phi_n, bary) + nl_interp(&cell.verts, phi_l, bary) + g;
                let s = match mode {
                    PbeMode::Nonlinear => guarded_sinh(arg)?,
                    PbeMode::Linearized => arg,
                };
                let f = cell.jk2_vol * weight * s;
                for (i, &v) in cell.verts.iter().enumerate() {
                    r[v] += f * bary[i];
                }
            }
        }
        for (v, &m) in outer.iter().enumerate() {
            if m {
                r[v] = 0.0;
            }
        }
        Ok(r)
    };

    // energy is evaluated on the total regular field w = phi_l + phi_n
    let total = |phi_n: &[f64]| -> Vec<f64> {
        phi_n.iter().zip(phi_l).map(|(n, l)| n + l).collect()
    };

    let mut phi_n = vec![0.0; n];
    let mut r = residual(&phi_n)?;
    let mut rnorm = par::norm2(&r);
    let scale = rnorm.max(1.0);
    let tol = cfg.tol * scale;
    let (mut energy, mut energy_scale) = energy_of(&a_raw, &b_raw, &cache, &total(&phi_n), mode)?;
    let mut records = vec![NewtonRecord {
        iteration: 0,
        residual: rnorm,
        energy,
        damping: 1.0,
    }];
    let mut monotone = true;

    let mut iter = 0;
    while rnorm > tol {
        if iter >= cfg.max_newton {
            return Err(Error::NonConvergence {
                context: "PBE Newton".into(),
                iterations: iter,
                residual: rnorm,
                trace: records.iter().map(|rec| rec.residual).collect(),
            });
        }
        iter += 1;

        // Newton system: A + M(phi_k) with the cosh weight
        let mut trip = Triplets::new(n);
        stiffness_triplets(mesh, piola, coeffs, &mut trip);
        for cell in &cache {
            for (bary, weight, g) in &cell.quads {
                let arg = nl_interp(&cell.verts, &phi_n, bary)
                    + nl_interp(&cell.verts, phi_l, bary)
                    + g;
                let ch = match mode {
                    PbeMode::Nonlinear => guarded_cosh(arg)?,
                    PbeMode::Linearized => 1.0,
                };
                let f = cell.jk2_vol * weight * ch;
                for (i, &vi) in cell.verts.iter().enumerate() {
                    for (j, &vj) in cell.verts.iter().enumerate() {
                        trip.push(vi, vj, f * bary[i] * bary[j]);
                    }
                }
            }
        }
        let mut jac = trip.to_csr();
        let mut rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        jac.apply_dirichlet(&mut rhs, &zero_constrained);
        let delta = solve_cg(&jac, &rhs, None, &CgConfig::default())
            .map_err(|e| Error::LinearSolve(format!("PBE Newton step: {e}")))?;

        // Armijo backtracking on the convex energy; slope = r . delta < 0
        let slope = par::dot(&r, &delta);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = phi_n
                .iter()
                .zip(&delta)
                .map(|(p, d)| p + alpha * d)
                .collect();
            match energy_of(&a_raw, &b_raw, &cache, &total(&trial), mode) {
                Ok((e_trial, e_scale)) => {
                    // decreases below the evaluation roundoff are invisible;
                    // do not backtrack a Newton step over numerical noise
                    let noise = 1e-14 * energy_scale.max(e_scale);
                    if e_trial <= energy + cfg.armijo * alpha * slope + noise {
                        if e_trial > energy + noise {
                            monotone = false;
                        }
                        phi_n = trial;
                        energy = e_trial;
                        energy_scale = e_scale;
                        accepted = true;
                        break;
                    }
                }
                Err(Error::OverflowGuard { .. }) => {}
                Err(e) => return Err(e),
            }
            alpha *= cfg.backtrack;
        }
        if !accepted {
            return Err(Error::NonConvergence {
                context: "PBE Newton line search stalled".into(),
                iterations: iter,
                residual: rnorm,
                trace: records.iter().map(|rec| rec.residual).collect(),
            });
        }
        r = residual(&phi_n)?;
        rnorm = par::norm2(&r);
        records.push(NewtonRecord {
            iteration: iter,
            residual: rnorm,
            energy,
            damping: alpha,
        });
    }

    Ok((
        phi_n,
        EnergyReport {
            records,
            monotone_nonincreasing: monotone,
        },
    ))
}

pub fn solve_pbe(
    mesh: &Mesh,
    piola: &PiolaFields,
    charges: &ChargeSystem,
    diel: &DielectricParams,
    cfg: &PbeConfig,
    mode: PbeMode,
) -> Result<(PotentialDecomposition, EnergyReport)> {
    solve_pbe_with(
        mesh,
        piola,
        charges,
        diel,
        &RegionCoefficients::standard(diel),
        cfg,
        mode,
    )
}

pub fn solve_pbe_with(
    mesh: &Mesh,
    piola: &PiolaFields,
    charges: &ChargeSystem,
    diel: &DielectricParams,
    coeffs: &RegionCoefficients,
    cfg: &PbeConfig,
    mode: PbeMode,
) -> Result<(PotentialDecomposition, EnergyReport)> {
    let phi_l = solve_linear_component_with(mesh, piola, charges, diel, coeffs)?;
    let (phi_n, report) =
        solve_nonlinear_component_with(mesh, piola, charges, diel, coeffs, &phi_l, cfg, mode)?;

    // L-infinity bound on the nonlinear component over the screened region
    let mut mask = vec![false; mesh.n_vertices()];
    for c in 0..mesh.n_cells() {
        if coeffs.kappa(mesh.cell_region[c]) > 0.0 || mesh.cell_region[c] == Region::Solvent {
            for &v in &mesh.cells[c] {
                mask[v] = true;
            }
        }
    }
    let mut bound = 1e-8;
    let mut max_l: f64 = 0.0;
    let mut max_g: f64 = 0.0;
    for (v, &m) in mask.iter().enumerate() {
        if m {
            max_l = max_l.max(phi_l[v].abs());
            max_g = max_g.max(eval_g_singular(charges, diel.eps_m, mesh.vertices[v])?.abs());
        }
    }
    bound += max_l + max_g;
    let max_n = phi_n.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if max_n > bound {
        return Err(Error::Consistency(format!(
            "nonlinear component bound violated: |phi_n| = {max_n:.6e} > {bound:.6e}"
        )));
    }

    Ok((
        PotentialDecomposition {
            charges: charges.clone(),
            eps_m: diel.eps_m,
            phi_l,
            phi_n,
            mode,
        },
        report,
    ))
}

/// Quadrature evaluation of the discrete energy at an arbitrary nodal field
/// w (the regular part; G enters analytically inside the cosh).
pub fn eval_energy(
    mesh: &Mesh,
    piola: &PiolaFields,
    charges: &ChargeSystem,
    diel: &DielectricParams,
    w: &[f64],
) -> Result<f64> {
    let coeffs = RegionCoefficients::standard(diel);
    let cache = build_nl_cache(mesh, piola, charges, diel.eps_m, &coeffs)?;
    let mut trip = Triplets::new(mesh.n_vertices());
    stiffness_triplets(mesh, piola, &coeffs, &mut trip);
    let a_raw = trip.to_csr();
    let b_raw = interface_source(mesh, piola, charges, diel.eps_m, &coeffs)?;
    energy_of(&a_raw, &b_raw, &cache, w, PbeMode::Nonlinear).map(|(e, _)| e)
}

/// Write a Newton trace as CSV.
pub fn write_newton_trace_csv(report: &EnergyReport, path: &Path) -> Result<()> {
    let mut out = String::from("iteration,residual,energy,damping\n");
    for rec in &report.records {
        out.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e}\n",
            rec.iteration, rec.residual, rec.energy, rec.damping
        ));
    }
    std::fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

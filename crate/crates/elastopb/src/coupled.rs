//! The coupled fixed-point driver: the map S (displacement -> harmonic
//! extension -> Piola fields -> PBE -> forces -> elasticity -> new
//! displacement), the relaxed iteration u_{k+1} = (1-w) u_k + w S(u_k), and
//! continuation in perturbation strength with warm starts.

use crate::charge::{ChargeSystem, DielectricParams};
use crate::elasticity::{self, ElasticParams};
use crate::error::{Error, Result};
use crate::fem::{cell_p1_gradients, tet_quadrature_1};
use crate::force::{
    compute_forces, free_state_forces, net_forces, ForceSet, Provenance, StatePipelineConfig,
};
use crate::la::{self, Vec3};
use crate::mesh::{Mesh, Region};
use crate::pbe::{deform_charges, solve_pbe_with, PotentialDecomposition, RegionCoefficients};
use crate::piola::{
    check_admissible, compute_piola, harmonic_extend, w2p_surrogate, AdmissibilityReport,
    DisplacementField,
};
use std::io::Write as _;
use std::path::Path;

/// One coupled scenario: geometry-independent physics inputs. The mesh is
/// passed alongside so scenarios can be rescaled cheaply.
#[derive(Debug, Clone)]
pub struct CoupledScenario {
    pub charges: ChargeSystem,
    pub diel: DielectricParams,
    pub elastic: ElasticParams,
    pub pipeline: StatePipelineConfig,
    pub elastic_tol: f64,
}

impl CoupledScenario {
    /// Scale the perturbation: rigid charge magnitudes by `s` and the ionic
    /// shift kappa - kappa0 by `s`. The free state is unchanged.
    pub fn scaled(&self, s: f64) -> CoupledScenario {
        let mut out = self.clone();
        for c in &mut out.charges.rigid {
            c.magnitude *= s;
        }
        out.diel.kappa = self.diel.kappa0 + s * (self.diel.kappa - self.diel.kappa0);
        out
    }

    /// Perturbation strength used for schedule monotonicity checks.
    pub fn strength(&self) -> (f64, f64) {
        let q: f64 = self.charges.rigid.iter().map(|c| c.magnitude.abs()).sum();
        ((self.diel.kappa - self.diel.kappa0).abs(), q)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedPointConfig {
    /// Relaxation weight in (0, 1]; 1 is the plain map S.
    pub omega: f64,
    /// Absolute tolerance on the discrete H1 increment norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Admissibility bound M on the W^{2,4} surrogate.
    pub bound_m: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            omega: 0.5,
            tol: 1e-8,
            max_iter: 100,
            bound_m: 10.0,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::Validation(format!(
                "relaxation omega must lie in (0, 1], got {}",
                self.omega
            )));
        }
        if self.tol <= 0.0 || self.max_iter == 0 {
            return Err(Error::Validation(
                "fixed-point tolerance and max_iter must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub k: usize,
    /// Discrete H1 norm of u_{k+1} - u_k over the flexible molecule.
    pub increment: f64,
    pub net_body: f64,
    pub net_surface: f64,
    pub min_j: f64,
    /// Hyperelastic energy of the accepted iterate.
    pub energy: f64,
    /// W^{2,4} surrogate of the extended iterate.
    pub surrogate: f64,
}

/// Converged state of one scenario.
#[derive(Debug, Clone)]
pub struct CoupledState {
    /// Fixed-point displacement (supported on the flexible molecule).
    pub u: DisplacementField,
    /// Final potential decomposition at u.
    pub decomp: PotentialDecomposition,
    /// Net forces (current minus free-state reference) at u.
    pub net: ForceSet,
    pub records: Vec<IterationRecord>,
    pub admissibility: AdmissibilityReport,
}

impl CoupledState {
    /// Geometric-mean increment ratio after the first step; a crude
    /// contraction-factor estimate.
    pub fn contraction_estimate(&self) -> Option<f64> {
        if self.records.len() < 3 {
            return None;
        }
        let mut logsum = 0.0;
        let mut n = 0;
        for w in self.records[1..].windows(2) {
            if w[0].increment > 0.0 && w[1].increment > 0.0 {
                logsum += (w[1].increment / w[0].increment).ln();
                n += 1;
            }
        }
        if n == 0 {
            None
        } else {
            Some((logsum / n as f64).exp())
        }
    }
}

/// Discrete H1 norm of a vector field over the flexible molecule:
/// centroid-value L2 plus the Frobenius L2 of the P1 gradient.
pub fn h1_mf_norm(mesh: &Mesh, values: &[Vec3]) -> f64 {
    let rule = tet_quadrature_1();
    let mut acc = 0.0;
    for c in 0..mesh.n_cells() {
        if mesh.cell_region[c] != Region::Mf {
            continue;
        }
        let (grads, vol) = cell_p1_gradients(mesh, c);
        let mut mid = [0.0; 3];
        let mut gu = [[0.0; 3]; 3];
        for (a, &v) in mesh.cells[c].iter().enumerate() {
            mid = la::add(mid, la::scale(values[v], rule[0].bary[a]));
            for i in 0..3 {
                for j in 0..3 {
                    gu[i][j] += values[v][i] * grads[a][j];
                }
            }
        }
        acc += vol * (la::dot(mid, mid) + la::frobenius(&gu).powi(2));
    }
    acc.sqrt()
}

/// Everything map_S produced besides the new displacement.
#[derive(Debug, Clone)]
pub struct MapOutput {
    pub decomp: PotentialDecomposition,
    pub net: ForceSet,
    pub min_j: f64,
    pub surrogate: f64,
    pub energy: f64,
    pub incompressibility: f64,
}

/// One application of the map S at displacement v (given on the flexible
/// molecule, zero elsewhere). The input is gated before any physics solve.
pub fn map_s(
    mesh: &Mesh,
    scn: &CoupledScenario,
    reference: &ForceSet,
    v: &DisplacementField,
    bound_m: f64,
) -> Result<(DisplacementField, MapOutput)> {
    let ext = harmonic_extend(mesh, &v.values)?;
    let surrogate = w2p_surrogate(mesh, &ext);
    if surrogate > bound_m {
        return Err(Error::GateRejection(format!(
            "smallness surrogate {surrogate:.3e} exceeds the bound {bound_m:.3e}"
        )));
    }
    let piola = compute_piola(mesh, &ext).map_err(|e| match e {
        Error::InadmissibleDeformation { cell, jacobian, floor } => Error::GateRejection(format!(
            "cell {cell} has Jacobian {jacobian:.3e} <= {floor}"
        )),
        other => other,
    })?;

    let coeffs = RegionCoefficients::standard(&scn.diel);
    let moved = deform_charges(mesh, &scn.charges, &ext)?;
    let (decomp, _) = solve_pbe_with(
        mesh,
        &piola,
        &moved,
        &scn.diel,
        &coeffs,
        &scn.pipeline.pbe,
        scn.pipeline.mode,
    )?;
    let forces = compute_forces(
        mesh,
        &decomp,
        &piola,
        &coeffs,
        scn.pipeline.delta_target,
        Provenance::Coupled,
    )?;
    let net = net_forces(&forces, reference)?;
    let sol = elasticity::solve_elasticity(mesh, &net.to_loads(), &scn.elastic, scn.elastic_tol)?;
    let energy = elasticity::discrete_energy(mesh, &net.to_loads(), &scn.elastic, &sol.u);
    Ok((
        DisplacementField { values: sol.u },
        MapOutput {
            decomp,
            net,
            min_j: piola.min_j,
            surrogate,
            energy,
            incompressibility: sol.incompressibility,
        },
    ))
}

/// Relaxed fixed-point iteration from a given start displacement.
pub fn solve_coupled_from(
    mesh: &Mesh,
    scn: &CoupledScenario,
    cfg: &FixedPointConfig,
    u0: &DisplacementField,
) -> Result<CoupledState> {
    cfg.validate()?;
    scn.diel.validate()?;
    scn.elastic.validate()?;
    let reference = free_state_forces(mesh, &scn.charges, &scn.diel, &scn.pipeline)?;

    let mut u = u0.clone();
    let mut records: Vec<IterationRecord> = Vec::new();
    for k in 1..=cfg.max_iter {
        let (su, out) = map_s(mesh, scn, &reference, &u, cfg.bound_m).map_err(|e| match e {
            Error::GateRejection(d) => Error::Regime {
                context: format!("fixed-point iteration {k}"),
                detail: format!("{d}; use a smaller perturbation or continuation"),
            },
            other => other,
        })?;
        let next: Vec<Vec3> = u
            .values
            .iter()
            .zip(&su.values)
            .map(|(a, b)| la::add(la::scale(*a, 1.0 - cfg.omega), la::scale(*b, cfg.omega)))
            .collect();
        let diff: Vec<Vec3> = next
            .iter()
            .zip(&u.values)
            .map(|(a, b)| la::sub(*a, *b))
            .collect();
        let increment = h1_mf_norm(mesh, &diff);
        let (net_body, net_surface) = out.net.integrated_norms(mesh);
        records.push(IterationRecord {
            k,
            increment,
            net_body,
            net_surface,
            min_j: out.min_j,
            energy: out.energy,
            surrogate: out.surrogate,
        });
        u = DisplacementField { values: next };
        if increment <= cfg.tol {
            let ext = harmonic_extend(mesh, &u.values)?;
            let admissibility = check_admissible(mesh, &ext, cfg.bound_m);
            if !admissibility.admissible {
                return Err(Error::Regime {
                    context: "converged coupled state".into(),
                    detail: format!(
                        "admissibility bound violated (surrogate {:.3e}, min J {:.3e})",
                        admissibility.surrogate_norm, admissibility.min_j
                    ),
                });
            }
            return Ok(CoupledState {
                u,
                decomp: out.decomp,
                net: out.net,
                records,
                admissibility,
            });
        }
    }
    Err(Error::NonConvergence {
        context: "coupled fixed-point iteration".into(),
        iterations: cfg.max_iter,
        residual: records.last().map(|r| r.increment).unwrap_or(f64::NAN),
        trace: records.iter().map(|r| r.increment).collect(),
    })
}

/// Relaxed fixed-point iteration from u = 0.
pub fn solve_coupled(
    mesh: &Mesh,
    scn: &CoupledScenario,
    cfg: &FixedPointConfig,
) -> Result<CoupledState> {
    solve_coupled_from(mesh, scn, cfg, &DisplacementField::zero(mesh))
}

/// One continuation stage: a scenario scale factor with its own iteration
/// controls.
#[derive(Debug, Clone, Copy)]
pub struct ContinuationStage {
    /// Perturbation scale passed to `CoupledScenario::scaled`.
    pub scale: f64,
    pub cfg: FixedPointConfig,
}

#[derive(Debug, Clone)]
pub struct ContinuationSchedule {
    pub stages: Vec<ContinuationStage>,
}

impl ContinuationSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Validation("continuation schedule is empty".into()));
        }
        for s in &self.stages {
            s.cfg.validate()?;
            if !(s.scale > 0.0) {
                return Err(Error::Validation(format!(
                    "continuation scale must be positive, got {}",
                    s.scale
                )));
            }
        }
        for w in self.stages.windows(2) {
            if w[1].scale <= w[0].scale {
                return Err(Error::Validation(format!(
                    "continuation schedule must be strictly increasing in perturbation strength \
                     ({} then {})",
                    w[0].scale, w[1].scale
                )));
            }
        }
        Ok(())
    }
}

/// Solve a ramp of increasingly strong perturbations, warm-starting each
/// stage from the previous converged displacement. A stage failure reports
/// the index of the last stage that converged.
pub fn run_continuation(
    mesh: &Mesh,
    base: &CoupledScenario,
    schedule: &ContinuationSchedule,
) -> Result<Vec<CoupledState>> {
    schedule.validate()?;
    let mut states: Vec<CoupledState> = Vec::with_capacity(schedule.stages.len());
    let mut u = DisplacementField::zero(mesh);
    for (i, stage) in schedule.stages.iter().enumerate() {
        let scn = base.scaled(stage.scale);
        let state = solve_coupled_from(mesh, &scn, &stage.cfg, &u).map_err(|e| match e {
            Error::NonConvergence {
                iterations,
                residual,
                trace,
                ..
            } => Error::NonConvergence {
                context: format!(
                    "continuation stage {i} (scale {}); last converged stage: {}",
                    stage.scale,
                    if i == 0 { "none".into() } else { format!("{}", i - 1) }
                ),
                iterations,
                residual,
                trace,
            },
            other => other,
        })?;
        u = state.u.clone();
        states.push(state);
    }
    Ok(states)
}

/// Residual of the coupled weak form at a displacement: the elasticity
/// residual under the loads induced by that displacement's own PBE solve.
/// Near zero at a converged fixed point; grows under perturbation of u.
pub fn residual_weak_form(
    mesh: &Mesh,
    scn: &CoupledScenario,
    u: &DisplacementField,
) -> Result<f64> {
    let reference = free_state_forces(mesh, &scn.charges, &scn.diel, &scn.pipeline)?;
    let ext = harmonic_extend(mesh, &u.values)?;
    let piola = compute_piola(mesh, &ext)?;
    let coeffs = RegionCoefficients::standard(&scn.diel);
    let moved = deform_charges(mesh, &scn.charges, &ext)?;
    let (decomp, _) = solve_pbe_with(
        mesh,
        &piola,
        &moved,
        &scn.diel,
        &coeffs,
        &scn.pipeline.pbe,
        scn.pipeline.mode,
    )?;
    let forces = compute_forces(
        mesh,
        &decomp,
        &piola,
        &coeffs,
        scn.pipeline.delta_target,
        Provenance::Coupled,
    )?;
    let net = net_forces(&forces, &reference)?;
    Ok(elasticity::residual_norm(
        mesh,
        &net.to_loads(),
        &scn.elastic,
        &u.values,
    ))
}

/// Convergence trace CSV.
pub fn write_coupled_trace_csv(records: &[IterationRecord], path: &Path) -> Result<()> {
    let mut out = String::from("k,increment,net_body,net_surface,min_j,energy,surrogate\n");
    for r in records {
        out.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            r.k, r.increment, r.net_body, r.net_surface, r.min_j, r.energy, r.surrogate
        ));
    }
    std::fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

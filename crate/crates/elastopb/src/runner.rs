//! Scenario orchestration: build the mesh, run the requested pipeline, and
//! write every artifact (VTK fields, CSV traces, ledger tables, summary,
//! manifest with checksums) into the scenario's output directory.

use crate::charge::ChargeSystem;
use crate::config::{ScenarioConfig, ScenarioKind};
use crate::coupled::{
    solve_coupled, write_coupled_trace_csv, CoupledScenario, CoupledState, run_continuation,
};
use crate::error::{Error, Result};
use crate::fem::eval_at;
use crate::force::{
    assemble_body_force, perturbation_states, write_blob_csv, write_surface_csv, ForceSet,
    PerturbationLedger,
};
use crate::la::Vec3;
use crate::mesh::{
    build_ball_in_box, build_balls_in_box, export_vtk, export_vtk_cell_scalar, export_vtk_surface,
    validate_mesh, Mesh, Region, SphereSpec,
};
use crate::norms::{estimate_report, write_estimate_csv, EstimateReport};
use crate::pbe::{solve_pbe, write_newton_trace_csv, PotentialDecomposition};
use crate::piola::{harmonic_extend, compute_piola, PiolaFields};
use crate::radial::{solve_radial_pb, RadialConfig};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Paths and reproducibility data for one completed run.
#[derive(Debug)]
pub struct RunArtifacts {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub config_hash: String,
    pub summary: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

pub fn config_hash(canonical_config: &str) -> String {
    sha256_hex(canonical_config.as_bytes())
}

/// Build the scenario mesh: one flexible sphere at the origin, or a
/// flexible/rigid pair split along x, with the pinned cap on the far side of
/// the flexible sphere.
pub fn build_scenario_mesh(cfg: &ScenarioConfig) -> Result<Mesh> {
    let mut mesh = match cfg.kind {
        ScenarioKind::Born | ScenarioKind::IonicShift => build_ball_in_box(
            [0.0; 3],
            cfg.radius,
            cfg.box_half_width,
            cfg.h,
            Region::Mf,
        )?,
        ScenarioKind::TwoSpheres | ScenarioKind::FullCoupled => build_balls_in_box(
            &[
                SphereSpec {
                    center: [-0.5 * cfg.separation, 0.0, 0.0],
                    radius: cfg.radius,
                    region: Region::Mf,
                },
                SphereSpec {
                    center: [0.5 * cfg.separation, 0.0, 0.0],
                    radius: cfg.radius,
                    region: Region::Mr,
                },
            ],
            cfg.box_half_width,
            cfg.h,
        )?,
    };
    let mf_center = match cfg.kind {
        ScenarioKind::Born | ScenarioKind::IonicShift => [0.0; 3],
        _ => [-0.5 * cfg.separation, 0.0, 0.0],
    };
    mesh.mark_dirichlet_cap(mf_center, [-1.0, 0.0, 0.0], cfg.cap_angle);
    Ok(mesh)
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.path(name);
        std::fs::write(&p, text)?;
        Ok(p)
    }
}

/// Write phi_l / phi_n / phi_r / u / f_s / J as separate legacy-VTK files
/// plus an index manifest with per-file checksums.
pub fn export_fields(
    mesh: &Mesh,
    decomp: &PotentialDecomposition,
    u: Option<&[Vec3]>,
    piola: &PiolaFields,
    surface: &[(usize, Vec3)],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut w = Writer::new(dir)?;
    let phi_r = decomp.phi_r();
    export_vtk(mesh, &w.path("phi_l.vtk"), &[("phi_l", &decomp.phi_l)], &[])?;
    export_vtk(mesh, &w.path("phi_n.vtk"), &[("phi_n", &decomp.phi_n)], &[])?;
    export_vtk(mesh, &w.path("phi_r.vtk"), &[("phi_r", &phi_r)], &[])?;
    let zero;
    let u_field: &[Vec3] = match u {
        Some(u) => u,
        None => {
            zero = vec![[0.0; 3]; mesh.n_vertices()];
            &zero
        }
    };
    export_vtk(mesh, &w.path("u.vtk"), &[], &[("u", u_field)])?;
    export_vtk_surface(mesh, &w.path("f_s.vtk"), "f_s", surface)?;
    export_vtk_cell_scalar(mesh, &w.path("jacobian.vtk"), "jacobian", &piola.jacobian)?;

    let mut index = String::from("file,sha256\n");
    for f in w.files.clone() {
        let bytes = std::fs::read(&f)?;
        writeln!(
            index,
            "{},{}",
            f.file_name().unwrap().to_string_lossy(),
            sha256_hex(&bytes)
        )
        .unwrap();
    }
    w.write_text("fields_index.csv", &index)?;
    Ok(w.files)
}

fn ledger_csv(mesh: &Mesh, states: &[ForceSet], ledger: &PerturbationLedger) -> String {
    let mut out = String::from("entry,body_norm,surface_norm\n");
    for (i, s) in states.iter().enumerate() {
        let (b, f) = s.integrated_norms(mesh);
        writeln!(out, "state{i},{b:.12e},{f:.12e}").unwrap();
    }
    for (i, d) in ledger.deltas.iter().enumerate() {
        let (b, f) = d.integrated_norms(mesh);
        writeln!(out, "delta{i},{b:.12e},{f:.12e}").unwrap();
    }
    writeln!(out, "telescoping_residual,{:.3e},0", ledger.telescoping_residual).unwrap();
    out
}

fn scenario_of(cfg: &ScenarioConfig) -> CoupledScenario {
    CoupledScenario {
        charges: cfg.charges.clone(),
        diel: cfg.diel,
        elastic: cfg.elastic,
        pipeline: cfg.pipeline.clone(),
        elastic_tol: cfg.elastic_tol,
    }
}

fn scale_charges(charges: &ChargeSystem, s: f64) -> ChargeSystem {
    let mut out = charges.clone();
    for c in &mut out.rigid {
        c.magnitude *= s;
    }
    out
}

/// Execute a scenario end-to-end. `canonical_config` is the serialized
/// configuration used for the reproducibility hash.
pub fn run_scenario(cfg: &ScenarioConfig, canonical_config: &str) -> Result<RunArtifacts> {
    let mut w = Writer::new(&cfg.output_dir)?;
    let hash = config_hash(canonical_config);
    let mut summary = String::new();
    writeln!(summary, "version: {}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(summary, "config_sha256: {hash}").unwrap();
    writeln!(summary, "seed: {}", cfg.seed).unwrap();
    writeln!(summary, "scenario: {:?}", cfg.kind).unwrap();
    for d in &cfg.applied_defaults {
        writeln!(summary, "default: {d}").unwrap();
    }

    let mesh = build_scenario_mesh(cfg)?;
    let debye = if cfg.diel.kappa > 0.0 {
        cfg.diel.kappa.recip()
    } else {
        0.0
    };
    let report = validate_mesh(&mesh, debye);
    for v in &report.violations {
        writeln!(summary, "mesh_violation: {v}").unwrap();
    }
    for v in &report.warnings {
        writeln!(summary, "mesh_warning: {v}").unwrap();
    }
    if !report.is_clean() {
        w.write_text("summary.txt", &summary)?;
        return Err(Error::Validation(format!(
            "mesh validation failed with {} violation(s); see summary.txt",
            report.violations.len()
        )));
    }
    writeln!(summary, "vertices: {}", mesh.n_vertices()).unwrap();
    writeln!(summary, "cells: {}", mesh.n_cells()).unwrap();
    cfg.charges.check_containment(&mesh)?;

    match cfg.kind {
        ScenarioKind::Born => {
            let piola = PiolaFields::identity(&mesh);
            let (decomp, energy) = solve_pbe(
                &mesh,
                &piola,
                &cfg.charges,
                &cfg.diel,
                &cfg.pipeline.pbe,
                cfg.pipeline.mode,
            )?;
            let phi_r = decomp.phi_r();
            let center = cfg.charges.flexible[0].position;
            let value = eval_at(&mesh, &phi_r, center).ok_or_else(|| {
                Error::Consistency("charge center not inside the mesh".into())
            })?;
            let oracle = solve_radial_pb(
                &RadialConfig {
                    q: cfg.charges.flexible[0].magnitude,
                    r_sphere: cfg.radius,
                    eps_m: cfg.diel.eps_m,
                    eps_s: cfg.diel.eps_s,
                    kappa: cfg.diel.kappa,
                    r_out: cfg.box_half_width,
                    n_points: 2000,
                },
                false,
            )?;
            let reference = oracle.reaction_at_center();
            writeln!(summary, "phi_r_center: {value:.9e}").unwrap();
            writeln!(summary, "oracle_phi_r_center: {reference:.9e}").unwrap();
            writeln!(
                summary,
                "relative_error: {:.6e}",
                ((value - reference) / reference).abs()
            )
            .unwrap();
            write_newton_trace_csv(&energy, &w.path("newton_trace.csv"))?;
            let coeffs = crate::pbe::RegionCoefficients::standard(&cfg.diel);
            let surface = crate::force::assemble_surface_force(&mesh, &decomp, &piola, &coeffs)?;
            let mut exported =
                export_fields(&mesh, &decomp, None, &piola, &surface, &cfg.output_dir)?;
            w.files.append(&mut exported);
        }
        ScenarioKind::IonicShift | ScenarioKind::TwoSpheres => {
            let (states, ledger) = perturbation_states(
                &mesh,
                &cfg.charges,
                &cfg.diel,
                None,
                &cfg.pipeline,
            )?;
            writeln!(
                summary,
                "telescoping_residual: {:.3e}",
                ledger.telescoping_residual
            )
            .unwrap();
            w.write_text("ledger.csv", &ledger_csv(&mesh, &states, &ledger))?;
            write_surface_csv(&mesh, &states[4], &w.path("surface_forces.csv"))?;
            let piola = PiolaFields::identity(&mesh);
            let (decomp, _) = solve_pbe(
                &mesh,
                &piola,
                &cfg.charges,
                &cfg.diel,
                &cfg.pipeline.pbe,
                cfg.pipeline.mode,
            )?;
            let (_, blobs) = assemble_body_force(&mesh, &decomp, cfg.pipeline.delta_target)?;
            write_blob_csv(&blobs, &w.path("blobs.csv"))?;
            let net = crate::force::net_forces(&states[4], &states[0])?;
            let rep = estimate_report(&mesh, &cfg.diel, &cfg.charges, &piola, &net);
            write_estimate_csv(&[rep], &w.path("estimates.csv"))?;
        }
        ScenarioKind::FullCoupled => {
            let scn = scenario_of(cfg);
            let state: CoupledState = match &cfg.continuation {
                Some(schedule) => {
                    let mut states = run_continuation(&mesh, &scn, schedule)?;
                    for (i, st) in states.iter().enumerate() {
                        writeln!(
                            summary,
                            "stage{}: iterations {} final_increment {:.6e}",
                            i,
                            st.records.len(),
                            st.records.last().map(|r| r.increment).unwrap_or(0.0)
                        )
                        .unwrap();
                    }
                    states.pop().unwrap()
                }
                None => solve_coupled(&mesh, &scn, &cfg.fixed_point)?,
            };
            writeln!(summary, "iterations: {}", state.records.len()).unwrap();
            writeln!(
                summary,
                "final_increment: {:.9e}",
                state.records.last().map(|r| r.increment).unwrap_or(0.0)
            )
            .unwrap();
            writeln!(summary, "u_max: {:.9e}", state.u.max_norm()).unwrap();
            writeln!(
                summary,
                "surrogate_norm: {:.9e}",
                state.admissibility.surrogate_norm
            )
            .unwrap();
            write_coupled_trace_csv(&state.records, &w.path("coupled_trace.csv"))?;
            let ext = harmonic_extend(&mesh, &state.u.values)?;
            let piola = compute_piola(&mesh, &ext)?;
            let rep = estimate_report(&mesh, &cfg.diel, &cfg.charges, &piola, &state.net);
            write_estimate_csv(&[rep], &w.path("estimates.csv"))?;
            let mut exported = export_fields(
                &mesh,
                &state.decomp,
                Some(&state.u.values),
                &piola,
                &state.net.surface,
                &cfg.output_dir,
            )?;
            w.files.append(&mut exported);
        }
    }

    let summary_path = w.write_text("summary.txt", &summary)?;
    let _ = summary_path;
    write_manifest(&mut w, &hash, cfg.seed)?;
    Ok(RunArtifacts {
        output_dir: cfg.output_dir.clone(),
        files: w.files,
        config_hash: hash,
        summary,
    })
}

/// Perturbation-strength ramp: run the state pipeline at each scale and
/// tabulate the estimate report per scale (full_coupled ramps the coupled
/// solve instead, via run_scenario with a continuation schedule).
pub fn run_sweep(cfg: &ScenarioConfig, canonical_config: &str) -> Result<RunArtifacts> {
    let schedule = cfg.continuation.as_ref().ok_or_else(|| {
        Error::Config("sweep requires a [continuation] section with scales".into())
    })?;
    if cfg.kind == ScenarioKind::FullCoupled {
        return run_scenario(cfg, canonical_config);
    }
    let mut w = Writer::new(&cfg.output_dir)?;
    let hash = config_hash(canonical_config);
    let mesh = build_scenario_mesh(cfg)?;
    let piola = PiolaFields::identity(&mesh);
    let mut reports: Vec<EstimateReport> = Vec::new();
    let mut summary = String::new();
    writeln!(summary, "version: {}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(summary, "config_sha256: {hash}").unwrap();
    writeln!(summary, "seed: {}", cfg.seed).unwrap();
    writeln!(summary, "sweep_scales: {:?}", schedule.stages.iter().map(|s| s.scale).collect::<Vec<_>>()).unwrap();
    for stage in &schedule.stages {
        let s = stage.scale;
        let charges = scale_charges(&cfg.charges, s);
        let mut diel = cfg.diel;
        diel.kappa = cfg.diel.kappa0 + s * (cfg.diel.kappa - cfg.diel.kappa0);
        let (states, ledger) = perturbation_states(&mesh, &charges, &diel, None, &cfg.pipeline)?;
        let net = crate::force::net_forces(&states[4], &states[0])?;
        let rep = estimate_report(&mesh, &diel, &charges, &piola, &net);
        reports.push(rep);
        writeln!(
            summary,
            "scale {s}: net_surface {:.9e} net_body {:.9e} telescoping {:.3e}",
            rep.net_surface, rep.net_body, ledger.telescoping_residual
        )
        .unwrap();
    }
    write_estimate_csv(&reports, &w.path("sweep_estimates.csv"))?;
    w.write_text("summary.txt", &summary)?;
    write_manifest(&mut w, &hash, cfg.seed)?;
    Ok(RunArtifacts {
        output_dir: cfg.output_dir.clone(),
        files: w.files,
        config_hash: hash,
        summary,
    })
}

fn write_manifest(w: &mut Writer, hash: &str, seed: u64) -> Result<()> {
    let mut manifest = String::new();
    writeln!(manifest, "version: {}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(manifest, "config_sha256: {hash}").unwrap();
    writeln!(manifest, "seed: {seed}").unwrap();
    let files = w.files.clone();
    for f in files {
        let bytes = std::fs::read(&f)?;
        writeln!(
            manifest,
            "file: {} sha256:{}",
            f.file_name().unwrap().to_string_lossy(),
            sha256_hex(&bytes)
        )
        .unwrap();
    }
    w.write_text("manifest.txt", &manifest)?;
    Ok(())
}

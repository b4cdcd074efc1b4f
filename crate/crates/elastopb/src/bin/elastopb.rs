use clap::{Parser, Subcommand};
use elastopb::config::{parse_config, serialize_config};
use elastopb::error::{Error, Result};
use elastopb::mesh::{read_mesh_ascii, validate_mesh};
use elastopb::radial::{solve_radial_pb, RadialConfig};
use elastopb::runner::{run_scenario, run_sweep};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

/// Coupled electrostatics/elasticity desk solver.
#[derive(Parser)]
#[command(name = "elastopb", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario described by a TOML config file.
    Solve { config: PathBuf },
    /// Solve the spherically symmetric reference problem for the config's
    /// parameters and write the radial profile as CSV.
    Oracle { config: PathBuf },
    /// Run the perturbation-strength ramp defined by the config's
    /// [continuation] scales and tabulate the size estimates per scale.
    Sweep { config: PathBuf },
    /// Check a mesh file for structural and quality violations.
    Validate { mesh: PathBuf },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { config } => {
            let (raw, cfg) = parse_config(&config)?;
            let canonical = serialize_config(&raw)?;
            let arts = run_scenario(&cfg, &canonical)?;
            print!("{}", arts.summary);
            println!("output_dir: {}", arts.output_dir.display());
        }
        Command::Oracle { config } => {
            let (_, cfg) = parse_config(&config)?;
            let charge = cfg.charges.flexible.first().ok_or_else(|| {
                Error::Config("oracle requires at least one flexible charge".into())
            })?;
            let radial = RadialConfig {
                q: charge.magnitude,
                r_sphere: cfg.radius,
                eps_m: cfg.diel.eps_m,
                eps_s: cfg.diel.eps_s,
                kappa: cfg.diel.kappa,
                r_out: cfg.box_half_width,
                n_points: 2000,
            };
            let sol = solve_radial_pb(&radial, false)?;
            let mut csv = String::from("r,phi,phi_r\n");
            for i in 0..sol.r.len() {
                writeln!(csv, "{:.12e},{:.12e},{:.12e}", sol.r[i], sol.phi[i], sol.phi_r[i])
                    .unwrap();
            }
            std::fs::create_dir_all(&cfg.output_dir)?;
            let path = cfg.output_dir.join("oracle_profile.csv");
            std::fs::write(&path, csv)?;
            println!("reaction_at_center: {:.12e}", sol.reaction_at_center());
            println!("surface_force: {:.12e}", sol.surface_force);
            println!("profile: {}", path.display());
        }
        Command::Sweep { config } => {
            let (raw, cfg) = parse_config(&config)?;
            let canonical = serialize_config(&raw)?;
            let arts = run_sweep(&cfg, &canonical)?;
            print!("{}", arts.summary);
            println!("output_dir: {}", arts.output_dir.display());
        }
        Command::Validate { mesh } => {
            let mesh = read_mesh_ascii(&mesh)?;
            let report = validate_mesh(&mesh, 0.0);
            for v in &report.violations {
                println!("violation: {v}");
            }
            for w in &report.warnings {
                println!("warning: {w}");
            }
            if !report.is_clean() {
                return Err(Error::Validation(format!(
                    "{} violation(s) found",
                    report.violations.len()
                )));
            }
            println!(
                "ok: {} vertices, {} cells, {} warnings",
                mesh.n_vertices(),
                mesh.n_cells(),
                report.warnings.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

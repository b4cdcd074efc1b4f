//! Charge systems: the analytic singular potential G, its gradient, and the
//! screened outer-boundary datum g, plus PQR-style ingestion.
//!
//! Kernel convention: G = Σ q_i / (ε_m |x − x_i|), no 4π factor; everything
//! downstream (oracles included) uses the same convention, so unit conversion
//! is an I/O concern only.

use crate::error::{Error, Result};
use crate::la::{self, Vec3};
use crate::mesh::{FaceTag, Mesh, Region};
use std::io::{BufRead, BufReader};
use std::path::Path;

/// Minimum admissible distance from an evaluation point to a charge center.
pub const SINGULARITY_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCharge {
    /// Position (Angstrom).
    pub position: Vec3,
    /// Magnitude in the scaled kernel convention (Coulomb constant absorbed).
    pub magnitude: f64,
    /// Van der Waals radius (Angstrom).
    pub radius: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ChargeSystem {
    pub flexible: Vec<PointCharge>,
    pub rigid: Vec<PointCharge>,
}

#[derive(Debug, Clone, Copy)]
pub struct DielectricParams {
    /// Relative permittivity inside the molecules.
    pub eps_m: f64,
    /// Relative permittivity of the solvent.
    pub eps_s: f64,
    /// Modified Debye-Hueckel parameter (1/Angstrom), current state.
    pub kappa: f64,
    /// Free-state reference value.
    pub kappa0: f64,
}

impl DielectricParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_m > 0.0 && self.eps_m < self.eps_s) {
            return Err(Error::Validation(format!(
                "need 0 < eps_m < eps_s, got eps_m = {}, eps_s = {}",
                self.eps_m, self.eps_s
            )));
        }
        if self.kappa < 0.0 || self.kappa0 < 0.0 {
            return Err(Error::Validation(format!(
                "kappa values must be nonnegative, got {} / {}",
                self.kappa, self.kappa0
            )));
        }
        Ok(())
    }
}

impl ChargeSystem {
    pub fn all_charges(&self) -> impl Iterator<Item = &PointCharge> {
        self.flexible.iter().chain(self.rigid.iter())
    }

    pub fn n_total(&self) -> usize {
        self.flexible.len() + self.rigid.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.all_charges().enumerate() {
            if c.radius <= 0.0 {
                return Err(Error::Validation(format!(
                    "charge {i} has non-positive radius {}",
                    c.radius
                )));
            }
        }
        Ok(())
    }

    /// Check region containment: flexible charges must sit in MF cells and
    /// rigid charges in MR cells.
    pub fn check_containment(&self, mesh: &Mesh) -> Result<()> {
        let check = |set: &[PointCharge], want: Region, offset: usize| -> Result<()> {
            for (i, c) in set.iter().enumerate() {
                let cell = mesh.find_cell(c.position).ok_or_else(|| {
                    Error::Validation(format!("charge {} outside the mesh", offset + i))
                })?;
                if mesh.cell_region[cell] != want {
                    return Err(Error::ChargeOutsideRegion { charge: offset + i });
                }
            }
            Ok(())
        };
        check(&self.flexible, Region::Mf, 0)?;
        check(&self.rigid, Region::Mr, self.flexible.len())
    }

    /// Smallest distance from any charge to the molecular surfaces
    /// (diagnostic delta_min; must stay positive for the singular component
    /// to be smooth in the solvent).
    pub fn delta_min(&self, mesh: &Mesh) -> f64 {
        let mut d = f64::INFINITY;
        for f in &mesh.boundary_faces {
            if !(f.tag.is_gamma_f() || f.tag == FaceTag::GammaR) {
                continue;
            }
            let c = mesh.face_centroid(&f.verts);
            for q in self.all_charges() {
                d = d.min(la::norm(la::sub(c, q.position)));
            }
        }
        d
    }
}

fn kernel_sum<F>(charges: &ChargeSystem, x: Vec3, mut term: F) -> Result<f64>
where
    F: FnMut(&PointCharge, f64) -> f64,
{
    let mut total = 0.0;
    for (i, c) in charges.all_charges().enumerate() {
        let r = la::norm(la::sub(x, c.position));
        if r <= SINGULARITY_GUARD {
            return Err(Error::Singularity {
                charge: i,
                distance: r,
            });
        }
        total += term(c, r);
    }
    Ok(total)
}

/// Singular component G(x) = Σ q_i / (eps_m |x - x_i|).
pub fn eval_g_singular(charges: &ChargeSystem, eps_m: f64, x: Vec3) -> Result<f64> {
    kernel_sum(charges, x, |c, r| c.magnitude / (eps_m * r))
}

/// Analytic gradient of G.
pub fn eval_grad_g_singular(charges: &ChargeSystem, eps_m: f64, x: Vec3) -> Result<Vec3> {
    let mut g = [0.0; 3];
    for (i, c) in charges.all_charges().enumerate() {
        let d = la::sub(x, c.position);
        let r = la::norm(d);
        if r <= SINGULARITY_GUARD {
            return Err(Error::Singularity {
                charge: i,
                distance: r,
            });
        }
        g = la::add(g, la::scale(d, -c.magnitude / (eps_m * r * r * r)));
    }
    Ok(g)
}

/// Outer-boundary Debye-Hueckel datum g(x) = Σ q_i e^{-κ|x-x_i|}/(eps_s |x-x_i|).
pub fn eval_g_boundary(charges: &ChargeSystem, diel: &DielectricParams, x: Vec3) -> Result<f64> {
    kernel_sum(charges, x, |c, r| {
        c.magnitude * (-diel.kappa * r).exp() / (diel.eps_s * r)
    })
}

/// Parse a PQR-style whitespace-delimited file:
/// `record atom_id x y z charge radius [molecule]`
/// where `molecule` is `flexible` (default) or `rigid`. Lines starting with
/// `#` or `REMARK` are skipped.
pub fn read_pqr(path: &Path) -> Result<ChargeSystem> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut system = ChargeSystem::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let ln = idx + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with("REMARK") {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        if toks.len() < 7 {
            return Err(Error::Parse {
                line: ln,
                message: format!("expected at least 7 fields, got {}", toks.len()),
            });
        }
        let num = |tok: &str| -> Result<f64> {
            tok.parse().map_err(|_| Error::Parse {
                line: ln,
                message: format!("bad number '{tok}'"),
            })
        };
        let charge = PointCharge {
            position: [num(toks[2])?, num(toks[3])?, num(toks[4])?],
            magnitude: num(toks[5])?,
            radius: num(toks[6])?,
        };
        if charge.radius <= 0.0 {
            return Err(Error::Parse {
                line: ln,
                message: format!("non-positive radius {}", charge.radius),
            });
        }
        match toks.get(7).copied().unwrap_or("flexible") {
            "flexible" => system.flexible.push(charge),
            "rigid" => system.rigid.push(charge),
            other => {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("molecule must be 'flexible' or 'rigid', got '{other}'"),
                })
            }
        }
    }
    Ok(system)
}

//! Region-restricted ("broken") discrete norms and the estimate-shaped
//! diagnostic table: measurable perturbation sizes tabulated against measured
//! net force norms.

use crate::charge::{ChargeSystem, DielectricParams};
use crate::error::Result;
use crate::fem::{cell_p1_gradients, tet_quadrature_2};
use crate::force::ForceSet;
use crate::la::{self, Mat3};
use crate::mesh::{Mesh, Region};
use crate::piola::PiolaFields;
use std::io::Write as _;
use std::path::Path;

pub const REGIONS: [Region; 3] = [Region::Mf, Region::Mr, Region::Solvent];

fn region_index(r: Region) -> usize {
    match r {
        Region::Mf => 0,
        Region::Mr => 1,
        Region::Solvent => 2,
    }
}

/// L^p exponent selector (the infinity entry is always reported alongside).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exponent {
    P2,
    P4,
}

impl Exponent {
    fn p(self) -> f64 {
        match self {
            Exponent::P2 => 2.0,
            Exponent::P4 => 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RegionNorms {
    /// L^p over the region (quadrature).
    pub lp: f64,
    /// Nodal max over the region's vertices.
    pub linf: f64,
    /// Full H1: values plus P1 gradient.
    pub h1: f64,
    /// Patch-recovery second-derivative surrogate in L^p.
    pub surrogate: f64,
}

#[derive(Debug, Clone)]
pub struct BrokenNorms {
    pub exponent: Exponent,
    /// Indexed like `REGIONS`.
    pub regions: [RegionNorms; 3],
    /// Broken aggregate: sum of region values (max for the L-infinity entry).
    pub aggregate: RegionNorms,
}

/// Per-vertex volume-averaged P1 gradient (recovery operator).
fn recovered_gradients(mesh: &Mesh, field: &[f64]) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
    let n = mesh.n_vertices();
    let mut avg = vec![[0.0; 3]; n];
    let mut weight = vec![0.0; n];
    let mut cell_grads = Vec::with_capacity(mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let (grads, vol) = cell_p1_gradients(mesh, c);
        let mut g = [0.0; 3];
        for (a, &v) in mesh.cells[c].iter().enumerate() {
            g = la::add(g, la::scale(grads[a], field[v]));
        }
        cell_grads.push(g);
        for &v in &mesh.cells[c] {
            avg[v] = la::add(avg[v], la::scale(g, vol));
            weight[v] += vol;
        }
    }
    for (a, w) in avg.iter_mut().zip(&weight) {
        if *w > 0.0 {
            *a = la::scale(*a, 1.0 / w);
        }
    }
    (cell_grads, avg)
}

/// Broken norms of a nodal scalar field.
pub fn broken_norm(mesh: &Mesh, field: &[f64], exponent: Exponent) -> BrokenNorms {
    let p = exponent.p();
    let rule = tet_quadrature_2();
    let (cell_grads, recovered) = recovered_gradients(mesh, field);

    let mut lp_pow = [0.0f64; 3];
    let mut linf = [0.0f64; 3];
    let mut h1_sq = [0.0f64; 3];
    let mut sur_pow = [0.0f64; 3];
    for c in 0..mesh.n_cells() {
        let r = region_index(mesh.cell_region[c]);
        let (_, vol) = cell_p1_gradients(mesh, c);
        let verts = mesh.cells[c];
        let mut val_sq = 0.0;
        for q in &rule {
            let mut v = 0.0;
            for (a, &vi) in verts.iter().enumerate() {
                v += q.bary[a] * field[vi];
            }
            lp_pow[r] += q.weight * vol * v.abs().powf(p);
            val_sq += q.weight * vol * v * v;
        }
        let g = cell_grads[c];
        h1_sq[r] += val_sq + vol * la::dot(g, g);
        for &vi in &verts {
            linf[r] = linf[r].max(field[vi].abs());
        }
        // second-derivative surrogate: spread between the cell gradient and
        // the recovered vertex gradients, scaled by the local size
        let h = vol.cbrt();
        let mut spread: f64 = 0.0;
        for &vi in &verts {
            spread = spread.max(la::norm(la::sub(g, recovered[vi])));
        }
        sur_pow[r] += vol * (spread / h).powf(p);
    }

    let mut regions = [RegionNorms::default(); 3];
    for r in 0..3 {
        regions[r] = RegionNorms {
            lp: lp_pow[r].powf(1.0 / p),
            linf: linf[r],
            h1: h1_sq[r].sqrt(),
            surrogate: sur_pow[r].powf(1.0 / p),
        };
    }
    let aggregate = RegionNorms {
        lp: regions.iter().map(|r| r.lp).sum(),
        linf: regions.iter().fold(0.0f64, |m, r| m.max(r.linf)),
        h1: regions.iter().map(|r| r.h1).sum(),
        surrogate: regions.iter().map(|r| r.surrogate).sum(),
    };
    BrokenNorms {
        exponent,
        regions,
        aggregate,
    }
}

/// Whole-domain L^p with the same quadrature (for splitting checks).
pub fn domain_lp(mesh: &Mesh, field: &[f64], exponent: Exponent) -> f64 {
    let p = exponent.p();
    let rule = tet_quadrature_2();
    let mut acc = 0.0;
    for c in 0..mesh.n_cells() {
        let (_, vol) = cell_p1_gradients(mesh, c);
        for q in &rule {
            let mut v = 0.0;
            for (a, &vi) in mesh.cells[c].iter().enumerate() {
                v += q.bary[a] * field[vi];
            }
            acc += q.weight * vol * v.abs().powf(p);
        }
    }
    acc.powf(1.0 / p)
}

/// Broken W^{1,2} surrogate of F - I: per-cell Frobenius L2 plus a
/// vertex-patch spread term for the (distributional) gradient.
pub fn f_minus_i_norm(mesh: &Mesh, piola: &PiolaFields) -> f64 {
    let n = mesh.n_vertices();
    let mut avg: Vec<Mat3> = vec![[[0.0; 3]; 3]; n];
    let mut weight = vec![0.0; n];
    for c in 0..mesh.n_cells() {
        let (_, vol) = cell_p1_gradients(mesh, c);
        for &v in &mesh.cells[c] {
            for i in 0..3 {
                for j in 0..3 {
                    avg[v][i][j] += vol * piola.f[c][i][j];
                }
            }
            weight[v] += vol;
        }
    }
    for (a, w) in avg.iter_mut().zip(&weight) {
        if *w > 0.0 {
            for row in a.iter_mut() {
                for x in row.iter_mut() {
                    *x /= *w;
                }
            }
        }
    }
    let mut value_sq = 0.0;
    let mut grad_sq = 0.0;
    for c in 0..mesh.n_cells() {
        let (_, vol) = cell_p1_gradients(mesh, c);
        let d = la::mat_sub(&piola.f[c], &la::IDENTITY);
        value_sq += vol * la::frobenius(&d).powi(2);
        let h = vol.cbrt();
        let mut spread: f64 = 0.0;
        for &v in &mesh.cells[c] {
            spread = spread.max(la::frobenius(&la::mat_sub(&piola.f[c], &avg[v])));
        }
        grad_sq += vol * (spread / h).powi(2);
    }
    value_sq.sqrt() + grad_sq.sqrt()
}

/// The measurable quantities on both sides of the final force estimates.
#[derive(Debug, Clone, Copy)]
pub struct EstimateReport {
    /// |kappa - kappa0|.
    pub kappa_shift: f64,
    /// Volume of the rigid cavity.
    pub v_mr: f64,
    /// Broken W^{1,2} surrogate of F - I.
    pub f_minus_i: f64,
    /// Max-norm of J - 1.
    pub j_minus_one_inf: f64,
    /// Total added (rigid) charge magnitude.
    pub rigid_charge: f64,
    /// Integrated net body-force magnitude.
    pub net_body: f64,
    /// Area-weighted net surface-force magnitude.
    pub net_surface: f64,
}

pub fn estimate_report(
    mesh: &Mesh,
    diel: &DielectricParams,
    charges: &ChargeSystem,
    piola: &PiolaFields,
    net: &ForceSet,
) -> EstimateReport {
    let (net_body, net_surface) = net.integrated_norms(mesh);
    let j_minus_one_inf = piola
        .jacobian
        .iter()
        .fold(0.0f64, |m, j| m.max((j - 1.0).abs()));
    EstimateReport {
        kappa_shift: (diel.kappa - diel.kappa0).abs(),
        v_mr: mesh.region_volume(Region::Mr),
        f_minus_i: f_minus_i_norm(mesh, piola),
        j_minus_one_inf,
        rigid_charge: charges.rigid.iter().map(|c| c.magnitude.abs()).sum(),
        net_body,
        net_surface,
    }
}

/// One CSV row per report.
pub fn write_estimate_csv(reports: &[EstimateReport], path: &Path) -> Result<()> {
    let mut out =
        String::from("kappa_shift,v_mr,f_minus_i,j_minus_one_inf,rigid_charge,net_body,net_surface\n");
    for r in reports {
        out.push_str(&format!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            r.kappa_shift,
            r.v_mr,
            r.f_minus_i,
            r.j_minus_one_inf,
            r.rigid_charge,
            r.net_body,
            r.net_surface
        ));
    }
    std::fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::force::Provenance;
    use crate::mesh::build_ball_in_box;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn mesh() -> Mesh {
        build_ball_in_box([0.0; 3], 1.0, 4.0, 0.5, Region::Mf).unwrap()
    }

    #[test]
    fn constant_field_region_l2() {
        let mesh = mesh();
        let field = vec![3.0; mesh.n_vertices()];
        let norms = broken_norm(&mesh, &field, Exponent::P2);
        for (r, region) in REGIONS.iter().enumerate() {
            let vol = mesh.region_volume(*region);
            assert_relative_eq!(norms.regions[r].lp, 3.0 * vol.sqrt(), max_relative = 1e-12);
            if vol > 0.0 {
                assert_relative_eq!(norms.regions[r].linf, 3.0, max_relative = 1e-12);
                // constant field: zero gradient, zero surrogate
                assert_relative_eq!(norms.regions[r].h1, 3.0 * vol.sqrt(), max_relative = 1e-12);
                assert!(norms.regions[r].surrogate <= 1e-12);
            }
        }
    }

    #[test]
    fn linear_field_h1_seminorm() {
        let mesh = mesh();
        let field: Vec<f64> = mesh.vertices.iter().map(|v| v[0]).collect();
        let norms = broken_norm(&mesh, &field, Exponent::P2);
        // unit gradient everywhere: seminorm^2 per region equals its volume
        for (r, region) in REGIONS.iter().enumerate() {
            let vol = mesh.region_volume(*region);
            let semi_sq = norms.regions[r].h1.powi(2) - norms.regions[r].lp.powi(2);
            assert_relative_eq!(semi_sq, vol, max_relative = 1e-9);
        }
        // linear field: recovery reproduces the gradient, surrogate vanishes
        assert!(norms.aggregate.surrogate <= 1e-10);
    }

    #[test]
    fn splitting_additivity() {
        let mesh = mesh();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let field: Vec<f64> = (0..mesh.n_vertices()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        for p in [Exponent::P2, Exponent::P4] {
            let norms = broken_norm(&mesh, &field, p);
            let total = domain_lp(&mesh, &field, p);
            let sum_pow: f64 = norms.regions.iter().map(|r| r.lp.powf(p.p())).sum();
            assert_relative_eq!(sum_pow.powf(1.0 / p.p()), total, max_relative = 1e-12);
        }
    }

    #[test]
    fn homogeneity_and_triangle() {
        let mesh = mesh();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<f64> = (0..mesh.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..mesh.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // power-of-two scaling is exact in floating point
        let scaled: Vec<f64> = a.iter().map(|x| 2.0 * x).collect();
        let na = broken_norm(&mesh, &a, Exponent::P2);
        let ns = broken_norm(&mesh, &scaled, Exponent::P2);
        for r in 0..3 {
            assert_eq!(ns.regions[r].lp, 2.0 * na.regions[r].lp);
            assert_eq!(ns.regions[r].linf, 2.0 * na.regions[r].linf);
            assert_eq!(ns.regions[r].h1, 2.0 * na.regions[r].h1);
        }
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let nb = broken_norm(&mesh, &b, Exponent::P2);
        let nsum = broken_norm(&mesh, &sum, Exponent::P2);
        for r in 0..3 {
            assert!(nsum.regions[r].lp <= na.regions[r].lp + nb.regions[r].lp + 1e-12);
            assert!(nsum.regions[r].h1 <= na.regions[r].h1 + nb.regions[r].h1 + 1e-12);
        }
    }

    #[test]
    fn zero_perturbation_report_vanishes() {
        let mesh = mesh();
        let diel = DielectricParams {
            eps_m: 2.0,
            eps_s: 80.0,
            kappa: 0.3,
            kappa0: 0.3,
        };
        let charges = ChargeSystem::default();
        let piola = PiolaFields::identity(&mesh);
        let net = ForceSet {
            label: Provenance::Coupled,
            body: vec![],
            surface: vec![],
        };
        let rep = estimate_report(&mesh, &diel, &charges, &piola, &net);
        assert_eq!(rep.kappa_shift, 0.0);
        assert_eq!(rep.v_mr, 0.0);
        assert_eq!(rep.f_minus_i, 0.0);
        assert_eq!(rep.j_minus_one_inf, 0.0);
        assert_eq!(rep.rigid_charge, 0.0);
        assert_eq!(rep.net_body, 0.0);
        assert_eq!(rep.net_surface, 0.0);
    }

    #[test]
    fn estimate_csv_written() {
        let mesh = mesh();
        let diel = DielectricParams {
            eps_m: 2.0,
            eps_s: 80.0,
            kappa: 0.5,
            kappa0: 0.3,
        };
        let rep = estimate_report(
            &mesh,
            &diel,
            &ChargeSystem::default(),
            &PiolaFields::identity(&mesh),
            &ForceSet {
                label: Provenance::Coupled,
                body: vec![],
                surface: vec![],
            },
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("estimates.csv");
        write_estimate_csv(&[rep, rep], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("kappa_shift,"));
        assert_eq!(text.lines().count(), 3);
    }
}

//! Radially symmetric reference solutions for a single charge centered in a
//! dielectric sphere (Born ion): a closed-form linearized reaction potential
//! and a 1-D finite-difference nonlinear Poisson-Boltzmann solver. These are
//! the independent oracles the 3-D solver is validated against, sharing the
//! same no-4pi kernel convention.
//!
//! With phi = q/(eps_m r) + phi_r, the reaction component is harmonic and
//! regular inside the sphere, hence exactly constant there; the substitution
//! v = r phi_r reduces the exterior to eps_s v'' = r kappa^2 sinh((q/eps_m +
//! v)/r) on (R, R_out], closed by the flux condition eps_s v'(R+) =
//! (eps_s (q/eps_m + v(R)) - q)/R (one-sided second-order difference) and the
//! Debye-Hueckel datum at R_out.

use crate::error::{Error, Result};
use std::io::Write as _;
use std::path::Path;

pub const OVERFLOW_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy)]
pub struct RadialConfig {
    pub q: f64,
    /// Sphere radius (Angstrom).
    pub r_sphere: f64,
    pub eps_m: f64,
    pub eps_s: f64,
    pub kappa: f64,
    pub r_out: f64,
    /// Total grid points from 0 to r_out (a node lands exactly on r_sphere).
    pub n_points: usize,
}

impl RadialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r_sphere <= 0.0 || self.r_out <= self.r_sphere {
            return Err(Error::Validation(format!(
                "need 0 < R < R_out, got R = {}, R_out = {}",
                self.r_sphere, self.r_out
            )));
        }
        if self.eps_m <= 0.0 || self.eps_s <= 0.0 {
            return Err(Error::Validation("permittivities must be positive".into()));
        }
        if self.kappa < 0.0 {
            return Err(Error::Validation("kappa must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RadialSolution {
    pub r: Vec<f64>,
    /// Total potential phi(r) (singular at r = 0; first entry is the value at
    /// the innermost positive node).
    pub phi: Vec<f64>,
    /// Reaction potential phi_r(r); constant on [0, R].
    pub phi_r: Vec<f64>,
    /// Index of the interface node.
    pub interface: usize,
    /// Normal surface force per unit area at r = R, signed along the outward
    /// normal (negative = inward-pulling).
    pub surface_force: f64,
    /// One-sided total-potential derivatives at the interface.
    pub dphi_in: f64,
    pub dphi_out: f64,
}

impl RadialSolution {
    pub fn reaction_at_center(&self) -> f64 {
        self.phi_r[0]
    }
}

/// Closed-form linearized reaction potential at the center.
///
/// Derivation from the radial ODE: inside, phi_r is harmonic, radial and
/// regular, hence a constant A. Outside, the linearized equation
/// eps_s (r phi)'' = kappa^2 (r phi) has decay rate kt = kappa/sqrt(eps_s)
/// (note: NOT kappa itself - the equation carries eps on the left only), so
/// v = r phi = C e^{-kt r} + D e^{+kt r}. The flux condition
/// eps_s phi'(R+) = eps_m phi'(R-) = -q/R^2 and the screened Dirichlet datum
/// at R_out determine C and D; then
/// A = v(R)/R - q/(eps_m R).
///
/// For R_out -> infinity this reduces to
/// phi_r(0) = q/(eps_s (1 + kt R) R) - q/(eps_m R); the finite-domain form
/// is kept so the closed form matches solve_radial_pb on the same domain.
pub fn born_reaction_potential(cfg: &RadialConfig) -> Result<f64> {
    cfg.validate()?;
    let (q, r) = (cfg.q, cfg.r_sphere);
    if cfg.kappa == 0.0 {
        // v = r phi = q/eps_s exactly (the datum at R_out is on the same
        // exterior solution), independent of R_out
        return Ok(q / (cfg.eps_s * r) - q / (cfg.eps_m * r));
    }
    let kt = cfg.kappa / cfg.eps_s.sqrt();
    let l = cfg.r_out - r;
    let s = (-kt * l).exp();
    // basis v = C e^{-kt (r-R)} + D e^{kt (r-R_out)}, scaled for conditioning
    let a11 = -cfg.eps_s * (kt * r + 1.0);
    let a12 = cfg.eps_s * (kt * r - 1.0) * s;
    let b1 = -q;
    let a21 = s;
    let a22 = 1.0;
    let b2 = (q / cfg.eps_s) * (-cfg.kappa * cfg.r_out).exp();
    let det = a11 * a22 - a12 * a21;
    let c = (b1 * a22 - a12 * b2) / det;
    let d = (a11 * b2 - b1 * a21) / det;
    let phi_surface = (c + d * s) / r;
    Ok(phi_surface - q / (cfg.eps_m * r))
}

fn guarded_sinh_cosh(arg: f64) -> Result<(f64, f64)> {
    if arg.abs() > OVERFLOW_LIMIT {
        return Err(Error::OverflowGuard { argument: arg });
    }
    Ok((arg.sinh(), arg.cosh()))
}

/// Solve the radial problem. `linearized` replaces sinh(phi) by phi.
pub fn solve_radial_pb(cfg: &RadialConfig, linearized: bool) -> Result<RadialSolution> {
    cfg.validate()?;
    if cfg.n_points < 200 {
        return Err(Error::Validation(format!(
            "radial grid needs at least 200 points, got {}",
            cfg.n_points
        )));
    }
    // two uniform zones with a node exactly at R
    let m = ((cfg.n_points as f64 * cfg.r_sphere / cfg.r_out).round() as usize).max(2);
    let n_out = (cfg.n_points - m).max(8);
    let di = cfg.r_sphere / m as f64;
    let dd = (cfg.r_out - cfg.r_sphere) / n_out as f64;
    let q_over_em = cfg.q / cfg.eps_m;

    // unknowns: v_j at r = R + j*dd for j = 0..=n_out; v_{n_out} is Dirichlet
    let n = n_out + 1;
    let r_at = |j: usize| cfg.r_sphere + j as f64 * dd;
    let v_outer =
        cfg.q * (-cfg.kappa * cfg.r_out).exp() / cfg.eps_s - q_over_em;

    let residual = |v: &[f64]| -> Result<Vec<f64>> {
        let mut res = vec![0.0; n];
        // interface flux row (one-sided second-order difference outward)
        res[0] = cfg.eps_s * (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dd)
            - (cfg.eps_s * (q_over_em + v[0]) - cfg.q) / cfg.r_sphere;
        for j in 1..n - 1 {
            let r = r_at(j);
            let phi = (q_over_em + v[j]) / r;
            let nonlin = if linearized {
                phi
            } else {
                guarded_sinh_cosh(phi)?.0
            };
            res[j] = cfg.eps_s * (v[j - 1] - 2.0 * v[j] + v[j + 1]) / (dd * dd)
                - r * cfg.kappa * cfg.kappa * nonlin;
        }
        res[n - 1] = v[n - 1] - v_outer;
        Ok(res)
    };

    // Jacobian rows as (first column, coefficients); bandwidth: row 0 spans
    // three upper entries, interior rows are tridiagonal.
    let jacobian = |v: &[f64]| -> Result<Vec<(usize, Vec<f64>)>> {
        let mut rows = Vec::with_capacity(n);
        rows.push((
            0,
            vec![
                -3.0 * cfg.eps_s / (2.0 * dd) - cfg.eps_s / cfg.r_sphere,
                4.0 * cfg.eps_s / (2.0 * dd),
                -cfg.eps_s / (2.0 * dd),
            ],
        ));
        for j in 1..n - 1 {
            let r = r_at(j);
            let phi = (q_over_em + v[j]) / r;
            let dnl = if linearized {
                1.0
            } else {
                guarded_sinh_cosh(phi)?.1
            };
            let c = cfg.eps_s / (dd * dd);
            rows.push((
                j - 1,
                vec![c, -2.0 * c - cfg.kappa * cfg.kappa * dnl, c],
            ));
        }
        rows.push((n - 1, vec![1.0]));
        Ok(rows)
    };

    // Newton with residual backtracking, warm-started from zero (the
    // linearized case converges in one step).
    let mut v = vec![0.0; n];
    v[n - 1] = v_outer;
    let mut trace = Vec::new();
    let norm = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut res = residual(&v)?;
    let mut rnorm = norm(&res);
    let scale = rnorm.max(1.0);
    let tol = 1e-12 * scale;
    let max_iter = 100;
    let mut converged = rnorm <= tol;
    for _ in 0..max_iter {
        if converged {
            break;
        }
        trace.push(rnorm);
        let rows = jacobian(&v)?;
        let neg_res: Vec<f64> = res.iter().map(|x| -x).collect();
        let dv = solve_banded(n, &rows, &neg_res)?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = v
                .iter()
                .zip(&dv)
                .map(|(vi, di)| vi + alpha * di)
                .collect();
            match residual(&trial) {
                Ok(tres) => {
                    let tnorm = norm(&tres);
                    if tnorm <= (1.0 - 1e-4 * alpha) * rnorm {
                        v = trial;
                        res = tres;
                        rnorm = tnorm;
                        accepted = true;
                        break;
                    }
                }
                Err(Error::OverflowGuard { .. }) => {}
                Err(e) => return Err(e),
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence {
                context: "radial Newton line search stalled".into(),
                iterations: trace.len(),
                residual: rnorm,
                trace,
            });
        }
        converged = rnorm <= tol;
    }
    if !converged {
        return Err(Error::NonConvergence {
            context: "radial Newton".into(),
            iterations: max_iter,
            residual: rnorm,
            trace,
        });
    }

    // assemble output profile: interior nodes (phi_r constant) + exterior
    let phi_r_in = v[0] / cfg.r_sphere;
    let mut r_grid = Vec::with_capacity(m + n);
    let mut phi = Vec::with_capacity(m + n);
    let mut phi_r = Vec::with_capacity(m + n);
    for i in 0..m {
        let r = (i as f64) * di;
        r_grid.push(r);
        phi_r.push(phi_r_in);
        // total potential is singular at r = 0; report the r > 0 values and
        // patch the origin with the reaction value for plotting
        if i == 0 {
            phi.push(f64::INFINITY);
        } else {
            phi.push(q_over_em / r + phi_r_in);
        }
    }
    for (j, &vj) in v.iter().enumerate() {
        let r = r_at(j);
        r_grid.push(r);
        phi.push((q_over_em + vj) / r);
        phi_r.push(vj / r);
    }
    let interface = m;

    // one-sided total-potential derivatives at the interface
    let rs = cfg.r_sphere;
    let dphi_in = -cfg.q / (cfg.eps_m * rs * rs);
    let dv_out = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dd);
    let dphi_out = dv_out / rs - (q_over_em + v[0]) / (rs * rs);
    let phi_surf = (q_over_em + v[0]) / rs;
    let (_, cosh_s) = guarded_sinh_cosh(phi_surf)?;
    // Maxwell-stress traction jump on the outward normal plus the osmotic
    // pressure of the ionic cloud (both inward-pulling for a Born ion, since
    // flux continuity makes eps_s phi'(R+)^2 < eps_m phi'(R-)^2 when
    // eps_s > eps_m)
    let surface_force = 0.5
        * (cfg.eps_s * dphi_out * dphi_out - cfg.eps_m * dphi_in * dphi_in)
        - cfg.kappa * cfg.kappa * (cosh_s - 1.0);

    Ok(RadialSolution {
        r: r_grid,
        phi,
        phi_r,
        interface,
        surface_force,
        dphi_in,
        dphi_out,
    })
}

/// Normal surface force per unit area extracted from a converged solution.
pub fn radial_surface_force(sol: &RadialSolution) -> f64 {
    sol.surface_force
}

/// Write the radial profile as CSV (r, phi, phi_r).
pub fn write_profile_csv(sol: &RadialSolution, path: &Path) -> Result<()> {
    let mut out = String::from("r,phi,phi_r\n");
    for i in 0..sol.r.len() {
        let phi = if sol.phi[i].is_finite() {
            format!("{:.12e}", sol.phi[i])
        } else {
            "inf".to_string()
        };
        out.push_str(&format!("{:.12e},{},{:.12e}\n", sol.r[i], phi, sol.phi_r[i]));
    }
    std::fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

/// Gaussian elimination with partial pivoting for a small banded system given
/// as rows of (first column index, contiguous coefficients).
fn solve_banded(n: usize, rows: &[(usize, Vec<f64>)], rhs: &[f64]) -> Result<Vec<f64>> {
    // expand into a dense-banded working set; bandwidths are tiny here so a
    // per-row map keyed from the row's first column keeps this simple
    let mut a: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut start: Vec<usize> = Vec::with_capacity(n);
    for (s, coeffs) in rows {
        start.push(*s);
        a.push(coeffs.clone());
    }
    let mut b = rhs.to_vec();
    let get = |a: &[Vec<f64>], start: &[usize], i: usize, j: usize| -> f64 {
        if j >= start[i] && j < start[i] + a[i].len() {
            a[i][j - start[i]]
        } else {
            0.0
        }
    };
    let set = |a: &mut [Vec<f64>], start: &mut [usize], i: usize, j: usize, val: f64| {
        if j < start[i] {
            let pad = start[i] - j;
            for _ in 0..pad {
                a[i].insert(0, 0.0);
            }
            start[i] = j;
        } else if j >= start[i] + a[i].len() {
            let pad = j - (start[i] + a[i].len()) + 1;
            for _ in 0..pad {
                a[i].push(0.0);
            }
        }
        let s = start[i];
        a[i][j - s] = val;
    };
    for k in 0..n {
        // partial pivot among rows whose band reaches column k
        let mut p = k;
        let mut best = get(&a, &start, k, k).abs();
        for r in (k + 1)..n {
            if start[r] > k {
                break;
            }
            let cand = get(&a, &start, r, k).abs();
            if cand > best {
                best = cand;
                p = r;
            }
        }
        if best < 1e-300 {
            return Err(Error::LinearSolve("banded elimination breakdown".into()));
        }
        if p != k {
            a.swap(k, p);
            start.swap(k, p);
            b.swap(k, p);
        }
        let akk = get(&a, &start, k, k);
        let kend = start[k] + a[k].len();
        for r in (k + 1)..n {
            if start[r] > k {
                break;
            }
            let f = get(&a, &start, r, k) / akk;
            if f == 0.0 {
                continue;
            }
            for j in k..kend {
                let val = get(&a, &start, r, j) - f * get(&a, &start, k, j);
                set(&mut a, &mut start, r, j, val);
            }
            set(&mut a, &mut start, r, k, 0.0);
            b[r] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = b[k];
        let kend = start[k] + a[k].len();
        for j in (k + 1)..kend {
            s -= get(&a, &start, k, j) * x[j];
        }
        x[k] = s / get(&a, &start, k, k);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn born(kappa: f64, n: usize) -> RadialConfig {
        RadialConfig {
            q: 1.0,
            r_sphere: 1.0,
            eps_m: 2.0,
            eps_s: 80.0,
            kappa,
            r_out: 20.0,
            n_points: n,
        }
    }

    #[test]
    fn closed_form_values() {
        assert_relative_eq!(
            born_reaction_potential(&born(0.0, 2000)).unwrap(),
            1.0 / 80.0 - 0.5,
            epsilon = 1e-15
        );
        // kappa = 1: near the infinite-domain limit with kt = 1/sqrt(80),
        // up to a small finite-R_out correction
        let kt: f64 = 1.0 / 80.0_f64.sqrt();
        assert_relative_eq!(
            born_reaction_potential(&born(1.0, 2000)).unwrap(),
            1.0 / (80.0 * (1.0 + kt)) - 0.5,
            max_relative = 2e-4
        );
        // screening strengthens the (negative) reaction potential
        let a0 = born_reaction_potential(&born(0.0, 2000)).unwrap();
        let a5 = born_reaction_potential(&born(0.5, 2000)).unwrap();
        let a1 = born_reaction_potential(&born(1.0, 2000)).unwrap();
        assert!(a1 < a5 && a5 < a0);
        // enlarging the box barely moves the kappa > 0 value
        let far = RadialConfig {
            r_out: 40.0,
            ..born(1.0, 2000)
        };
        let a1_far = born_reaction_potential(&far).unwrap();
        assert_relative_eq!(a1, a1_far, max_relative = 1e-3);
        let hom = RadialConfig {
            eps_m: 80.0,
            ..born(0.0, 2000)
        };
        assert_relative_eq!(born_reaction_potential(&hom).unwrap(), 0.0);
        assert!(born_reaction_potential(&RadialConfig {
            r_sphere: -1.0,
            ..born(0.0, 2000)
        })
        .is_err());
    }

    #[test]
    fn linearized_solver_matches_closed_form() {
        for kappa in [0.0, 0.5, 1.0] {
            let cfg = born(kappa, 2000);
            let sol = solve_radial_pb(&cfg, true).unwrap();
            let exact = born_reaction_potential(&cfg).unwrap();
            assert_relative_eq!(
                sol.reaction_at_center(),
                exact,
                max_relative = 1e-6
            );
        }
    }

    #[test]
    fn nonlinear_close_to_linearized_for_small_charge() {
        let cfg = RadialConfig {
            q: 0.1,
            ..born(1.0, 2000)
        };
        let lin = solve_radial_pb(&cfg, true).unwrap();
        let non = solve_radial_pb(&cfg, false).unwrap();
        let d = (lin.reaction_at_center() - non.reaction_at_center()).abs();
        assert!(
            d <= 1e-4 * lin.reaction_at_center().abs(),
            "difference {d:.3e} too large"
        );
    }

    #[test]
    fn second_order_refinement() {
        let phi_at = |n: usize| {
            solve_radial_pb(&born(1.0, n), false)
                .unwrap()
                .reaction_at_center()
        };
        let d1 = (phi_at(500) - phi_at(1000)).abs();
        let d2 = (phi_at(2000) - phi_at(4000)).abs();
        let ratio = d1 / d2;
        assert!(
            (8.0..32.0).contains(&ratio),
            "refinement ratio {ratio} not ~16"
        );
    }

    #[test]
    fn interface_flux_jump_satisfied() {
        let sol = solve_radial_pb(&born(1.0, 2000), false).unwrap();
        // eps_m phi'(R-) = eps_s phi'(R+)
        assert_relative_eq!(
            2.0 * sol.dphi_in,
            80.0 * sol.dphi_out,
            max_relative = 1e-6
        );
        // the reaction component is continuous at the interface
        let m = sol.interface;
        assert_relative_eq!(sol.phi_r[m - 1], sol.phi_r[m], epsilon = 1e-12);
    }

    #[test]
    fn surface_force_properties() {
        // homogeneous, unscreened: no force
        let hom = RadialConfig {
            eps_m: 80.0,
            ..born(0.0, 2000)
        };
        let sol = solve_radial_pb(&hom, false).unwrap();
        assert!(sol.surface_force.abs() < 1e-10);

        // Born ion, kappa = 0: inward dielectric pressure, stable to 3
        // digits under refinement
        let f1 = solve_radial_pb(&born(0.0, 1000), false)
            .unwrap()
            .surface_force;
        let f2 = solve_radial_pb(&born(0.0, 4000), false)
            .unwrap()
            .surface_force;
        assert!(f1 < 0.0);
        assert_relative_eq!(f1, f2, max_relative = 1e-3);

        // screening adds a strictly negative osmotic term
        let f_scr = solve_radial_pb(&born(1.0, 2000), false)
            .unwrap()
            .surface_force;
        assert!(f_scr < f1);
    }

    #[test]
    fn reaction_profile_monotone_inside() {
        let sol = solve_radial_pb(&born(1.0, 2000), false).unwrap();
        for i in 1..sol.interface {
            assert_relative_eq!(sol.phi_r[i], sol.phi_r[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn profile_csv_roundtrip() {
        let sol = solve_radial_pb(&born(0.5, 500), true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profile.csv");
        write_profile_csv(&sol, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "r,phi,phi_r");
        assert_eq!(lines.len(), sol.r.len() + 1);
    }

    #[test]
    fn banded_solver_matches_dense() {
        // small asymmetric banded system with a wide first row
        let rows = vec![
            (0, vec![2.0, -1.0, 0.5]),
            (0, vec![-1.0, 2.5, -1.0]),
            (1, vec![-1.0, 3.0, -1.0]),
            (2, vec![-1.0, 2.0]),
        ];
        let rhs = vec![1.0, 0.0, 2.0, -1.0];
        let x = solve_banded(4, &rows, &rhs).unwrap();
        // residual check
        for (i, (s, coeffs)) in rows.iter().enumerate() {
            let mut r = -rhs[i];
            for (k, c) in coeffs.iter().enumerate() {
                r += c * x[s + k];
            }
            assert!(r.abs() < 1e-12, "row {i} residual {r}");
        }
    }
}

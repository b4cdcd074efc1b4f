//! Compressed sparse row matrices and a Jacobi-preconditioned conjugate
//! gradient solver. All systems produced by the P1 assembly are symmetric,
//! and at desk scale CG with diagonal preconditioning is entirely adequate.

use crate::error::{Error, Result};
use crate::par;

/// Triplet accumulator; duplicate entries are summed on conversion.
pub struct Triplets {
    n: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl Triplets {
    pub fn new(n: usize) -> Self {
        Triplets {
            n,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        self.entries.push((row as u32, col as u32, value));
    }

    pub fn to_csr(mut self) -> Csr {
        // Stable sort keeps duplicate accumulation order deterministic.
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let n = self.n;
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c as usize);
                vals.push(v);
                row_ptr[r as usize + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr {
            n,
            row_ptr,
            cols,
            vals,
        }
    }
}

#[derive(Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let row_ptr = &self.row_ptr;
        let cols = &self.cols;
        let vals = &self.vals;
        par::map_indexed(self.n, |i| {
            let mut s = 0.0;
            for k in row_ptr[i]..row_ptr[i + 1] {
                s += vals[k] * x[cols[k]];
            }
            s
        })
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let mut d = 0.0;
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    if self.cols[k] == i {
                        d += self.vals[k];
                    }
                }
                d
            })
            .collect()
    }

    /// Impose Dirichlet values symmetrically: for each constrained dof i the
    /// row and column are zeroed, the diagonal set to 1 and the right-hand
    /// side adjusted so the solution carries the prescribed value exactly.
    pub fn apply_dirichlet(&mut self, rhs: &mut [f64], constrained: &[Option<f64>]) {
        debug_assert_eq!(constrained.len(), self.n);
        // rhs_free -= A[free, cons] * value
        for i in 0..self.n {
            if constrained[i].is_some() {
                continue;
            }
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if let Some(v) = constrained[self.cols[k]] {
                    rhs[i] -= self.vals[k] * v;
                    self.vals[k] = 0.0;
                }
            }
        }
        for i in 0..self.n {
            if let Some(v) = constrained[i] {
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    self.vals[k] = if self.cols[k] == i { 1.0 } else { 0.0 };
                }
                rhs[i] = v;
            }
        }
    }
}

pub struct CgConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig {
            tol: 1e-12,
            max_iter: 20_000,
        }
    }
}

/// Solve A x = b for symmetric positive (semi-)definite A.
pub fn solve_cg(a: &Csr, b: &[f64], x0: Option<&[f64]>, cfg: &CgConfig) -> Result<Vec<f64>> {
    let n = a.n;
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d.abs() > 1e-300 { 1.0 / d } else { 1.0 })
        .collect();
    let b_norm = par::norm2(b).max(1e-300);
    let ax = a.matvec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = par::dot(&r, &z);
    if par::norm2(&r) / b_norm <= cfg.tol {
        return Ok(x);
    }
    for _ in 0..cfg.max_iter {
        let ap = a.matvec(&p);
        let pap = par::dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::LinearSolve(format!(
                "CG breakdown: p^T A p = {pap:.3e} (matrix not positive definite)"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if par::norm2(&r) / b_norm <= cfg.tol {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = par::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolve(format!(
        "CG did not converge in {} iterations (relative residual {:.3e})",
        cfg.max_iter,
        par::norm2(&r) / b_norm
    )))
}

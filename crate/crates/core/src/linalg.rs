//! Sparse symmetric storage and a Jacobi-preconditioned conjugate gradient.

use crate::error::{Error, Result};
use crate::grid::{WeightedGrid, NO_NODE};
use crate::par;

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub rows: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    fn from_rows(rows: Vec<Vec<(u32, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows.iter().cloned() {
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            rows: rows.len(),
            row_ptr,
            cols,
            vals,
        }
    }

    fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in self.row_ptr[r]..self.row_ptr[r + 1] {
            acc += self.vals[k] * x[self.cols[k] as usize];
        }
        acc
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        par::fill(y, |r, slot| *slot = self.row_dot(r, x));
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }
}

/// Preconditioner `z = M⁻¹ r`.
pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

/// Diagonal scaling.
#[derive(Debug, Clone)]
pub struct Jacobi {
    pub inv_diag: Vec<f64>,
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        par::fill(z, |i, v| *v = self.inv_diag[i] * r[i]);
    }
}

/// Zero fill-in incomplete Cholesky factor `L Lᵀ ≈ A`; exists for the
/// M-matrices assembled here. Triangular solves are inherently sequential.
#[derive(Debug, Clone)]
pub struct Ic0 {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    diag: Vec<f64>,
}

impl Ic0 {
    /// Factors the lower triangle of a symmetric matrix with sorted rows.
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.rows;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut diag = vec![0.0; n];
        row_ptr.push(0);
        for i in 0..n {
            let start = cols.len();
            let mut aii = 0.0;
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let c = a.cols[k] as usize;
                if c < i {
                    cols.push(a.cols[k]);
                    vals.push(a.vals[k]);
                } else if c == i {
                    aii = a.vals[k];
                }
            }
            // L_ik = (A_ik − Σ_j L_ij L_kj)/L_kk over the shared pattern j < k.
            for p in start..cols.len() {
                let k = cols[p] as usize;
                let (mut q, qend) = (row_ptr[k], row_ptr[k + 1]);
                let mut acc = vals[p];
                let mut r = start;
                while r < p && q < qend {
                    match cols[r].cmp(&cols[q]) {
                        std::cmp::Ordering::Less => r += 1,
                        std::cmp::Ordering::Greater => q += 1,
                        std::cmp::Ordering::Equal => {
                            acc -= vals[r] * vals[q];
                            r += 1;
                            q += 1;
                        }
                    }
                }
                vals[p] = acc / diag[k];
            }
            let sq: f64 = vals[start..].iter().map(|v| v * v).sum();
            let d = aii - sq;
            if !(d > 0.0) {
                return Err(Error::Degenerate("incomplete Cholesky breakdown".into()));
            }
            diag[i] = d.sqrt();
            row_ptr.push(cols.len());
        }
        Ok(Self {
            row_ptr,
            cols,
            vals,
            diag,
        })
    }
}

impl Preconditioner for Ic0 {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        for i in 0..n {
            let mut acc = r[i];
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc -= self.vals[p] * z[self.cols[p] as usize];
            }
            z[i] = acc / self.diag[i];
        }
        for i in (0..n).rev() {
            let zi = z[i] / self.diag[i];
            z[i] = zi;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                z[self.cols[p] as usize] -= self.vals[p] * zi;
            }
        }
    }
}

/// Stiffness restricted to the free (non-Dirichlet) nodes of a grid.
#[derive(Debug)]
pub struct FreeSystem {
    pub free_nodes: Vec<usize>,
    pub free_slot: Vec<u32>,
    pub matrix: CsrMatrix,
    /// Rows over free nodes, columns are Dirichlet node ids, entries `+k`.
    pub coupling: CsrMatrix,
    pub jacobi: Jacobi,
    pub ic0: Option<Ic0>,
}

impl FreeSystem {
    pub fn build(grid: &WeightedGrid) -> Self {
        let n = grid.node_count();
        let free_nodes: Vec<usize> = (0..n).filter(|&i| !grid.is_dirichlet(i)).collect();
        let mut free_slot = vec![NO_NODE; n];
        for (s, &i) in free_nodes.iter().enumerate() {
            free_slot[i] = s as u32;
        }
        let nf = free_nodes.len();
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::with_capacity(7); nf];
        let mut coupling: Vec<Vec<(u32, f64)>> = vec![Vec::new(); nf];
        let mut diag = vec![0.0; nf];
        for e in grid.edges() {
            let (si, sj) = (free_slot[e.i as usize], free_slot[e.j as usize]);
            if si != NO_NODE {
                diag[si as usize] += e.k;
                if sj != NO_NODE {
                    rows[si as usize].push((sj, -e.k));
                } else {
                    coupling[si as usize].push((e.j, e.k));
                }
            }
            if sj != NO_NODE {
                diag[sj as usize] += e.k;
                if si != NO_NODE {
                    rows[sj as usize].push((si, -e.k));
                } else {
                    coupling[sj as usize].push((e.i, e.k));
                }
            }
        }
        for (s, row) in rows.iter_mut().enumerate() {
            row.push((s as u32, diag[s]));
        }
        let inv_diag = diag.iter().map(|d| 1.0 / d).collect();
        let matrix = CsrMatrix::from_rows(rows);
        let ic0 = Ic0::new(&matrix).ok();
        Self {
            free_nodes,
            free_slot,
            matrix,
            coupling: CsrMatrix::from_rows(coupling),
            jacobi: Jacobi { inv_diag },
            ic0,
        }
    }

    /// Preferred preconditioner: incomplete Cholesky when it factored.
    pub fn preconditioner(&self) -> &dyn Preconditioner {
        match &self.ic0 {
            Some(ic) => ic,
            None => &self.jacobi,
        }
    }
}

/// Outcome of a converged conjugate gradient run.
#[derive(Debug, Clone, Copy)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b` from the initial guess in `x`; stops when
/// `‖b − A x‖ ≤ tol·‖b‖`.
pub fn pcg(
    a: &CsrMatrix,
    precond: &dyn Preconditioner,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgReport> {
    let n = b.len();
    let bnorm = par::dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgReport {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    par::fill(&mut r, |i, v| *v = b[i] - *v);
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = par::dot(&r, &z);
    let mut res = par::dot(&r, &r).sqrt() / bnorm;
    for it in 0..max_iter {
        if res <= tol {
            return Ok(CgReport {
                iterations: it,
                relative_residual: res,
            });
        }
        a.matvec(&p, &mut ap);
        let pap = par::dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        par::fill(x, |i, v| *v += alpha * p[i]);
        par::fill(&mut r, |i, v| *v -= alpha * ap[i]);
        precond.apply(&r, &mut z);
        let rz_new = par::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        par::fill(&mut p, |i, v| *v = z[i] + beta * *v);
        res = par::dot(&r, &r).sqrt() / bnorm;
    }
    if res <= tol {
        return Ok(CgReport {
            iterations: max_iter,
            relative_residual: res,
        });
    }
    Err(Error::LinearSolve {
        iterations: max_iter,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i as u32, 2.0)];
                if i > 0 {
                    r.push((i as u32 - 1, -1.0));
                }
                if i + 1 < n {
                    r.push((i as u32 + 1, -1.0));
                }
                r
            })
            .collect();
        CsrMatrix::from_rows(rows)
    }

    #[test]
    fn cg_solves_tridiagonal_system() {
        let n = 200;
        let a = laplacian_1d(n);
        let want: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.1).sin()).collect();
        let mut b = vec![0.0; n];
        a.matvec(&want, &mut b);
        let mut x = vec![0.0; n];
        let jac = Jacobi { inv_diag: vec![0.5; n] };
        let rep = pcg(&a, &jac, &b, &mut x, 1e-12, 1000).unwrap();
        assert!(rep.relative_residual <= 1e-12);
        for (g, w) in x.iter().zip(&want) {
            assert!((g - w).abs() < 1e-8);
        }
        // tridiagonal: IC(0) is the exact Cholesky factor
        let ic = Ic0::new(&a).unwrap();
        let mut x = vec![0.0; n];
        let rep = pcg(&a, &ic, &b, &mut x, 1e-12, 1000).unwrap();
        assert!(rep.iterations <= 2);
    }

    #[test]
    fn cg_reports_stall() {
        let a = laplacian_1d(500);
        let b = vec![1.0; 500];
        let mut x = vec![0.0; 500];
        let jac = Jacobi { inv_diag: vec![0.5; 500] };
        let err = pcg(&a, &jac, &b, &mut x, 1e-14, 3).unwrap_err();
        assert!(matches!(err, Error::LinearSolve { iterations: 3, .. }));
    }
}

//! Compressed-row matrices and a Jacobi-preconditioned conjugate gradient.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::dot;
use crate::math;

/// Square sparse matrix in compressed row form with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(col, value)` lists. Duplicate columns are summed
    /// in the order given; exact zeros are kept so that the pattern stays
    /// independent of the coefficient values.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                debug_assert!(c < n);
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.cols[a..b].binary_search(&j) {
            Ok(k) => self.vals[a + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            y[i] = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul_vec(x))
    }

    /// `max |A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Copy with `d[i]` added to every diagonal entry. The diagonal must be
    /// present in the pattern.
    pub fn plus_diagonal(&self, d: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for i in 0..self.n {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let k = a + self.cols[a..b]
                .binary_search(&i)
                .expect("diagonal entry present in pattern");
            out.vals[k] += d[i];
        }
        out
    }

    pub fn scaled(&self, c: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Smallest Ritz value of `steps` Lanczos iterations from a fixed start
    /// vector. Approximates `λ_min` from above.
    pub fn smallest_ritz_value(&self, steps: usize) -> f64 {
        let n = self.n;
        if n == 0 {
            return f64::INFINITY;
        }
        let steps = steps.min(n).max(1);
        // deterministic start with all Fourier modes present
        let mut q: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i * 7919) % 13) as f64 / 13.0).collect();
        let nq = math::sqrt(dot(&q, &q));
        q.iter_mut().for_each(|v| *v /= nq);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
        let mut alphas = Vec::with_capacity(steps);
        let mut betas: Vec<f64> = Vec::with_capacity(steps);
        let mut w = vec![0.0; n];
        for j in 0..steps {
            self.mul_vec_into(&q, &mut w);
            let alpha = dot(&w, &q);
            alphas.push(alpha);
            basis.push(q.clone());
            // full Gram-Schmidt, twice, in place of the three-term recurrence
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(&w, b);
                    for (wi, bi) in w.iter_mut().zip(b) {
                        *wi -= c * bi;
                    }
                }
            }
            let beta = math::sqrt(dot(&w, &w));
            if j + 1 == steps || beta <= 1e-14 * alpha.abs().max(1.0) {
                break;
            }
            betas.push(beta);
            q = w.iter().map(|v| v / beta).collect();
        }
        tridiagonal_min_eigenvalue(&alphas, &betas[..alphas.len() - 1])
    }
}

/// Smallest eigenvalue of a symmetric tridiagonal matrix by Sturm-count
/// bisection.
fn tridiagonal_min_eigenvalue(diag: &[f64], off: &[f64]) -> f64 {
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = off.get(i).map_or(0.0, |b| b.abs()) + if i > 0 { off[i - 1].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    // number of eigenvalues below x
    let count_below = |x: f64| -> usize {
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..n {
            let b2 = if i > 0 { off[i - 1] * off[i - 1] } else { 0.0 };
            d = diag[i] - x - if i > 0 { b2 / d } else { 0.0 };
            if d == 0.0 {
                d = f64::MIN_POSITIVE;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Stop when `‖b - A x‖₂ ≤ rel_tol · ‖b‖₂`.
    pub rel_tol: f64,
    /// `None` means `20 × unknowns`.
    pub max_iter: Option<usize>,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            rel_tol: 1e-12,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradient for SPD `A`, starting from `x`.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    opts: CgOptions,
) -> Result<CgStats> {
    let n = a.size();
    if b.len() != n || x.len() != n {
        return Err(Error::GridMismatch {
            expected: n,
            found: b.len(),
        });
    }
    let bnorm = math::sqrt(dot(b, b));
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let max_iter = opts.max_iter.unwrap_or(20 * n.max(1));
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = vec![0.0; n];
    a.mul_vec_into(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let target = opts.rel_tol * bnorm;
    let mut rnorm = math::sqrt(dot(&r, &r));
    if rnorm > bnorm {
        // the start is worse than zero
        x.iter_mut().for_each(|v| *v = 0.0);
        r.copy_from_slice(b);
        rnorm = bnorm;
    }
    if rnorm <= target {
        return Ok(CgStats {
            iterations: 0,
            relative_residual: rnorm / bnorm,
        });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut restart = false;
    for it in 1..=max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Invariant(alloc::format!(
                "operator is not positive definite along a search direction (pAp = {pap:e})"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = math::sqrt(dot(&r, &r));
        if rnorm <= target {
            // confirm against the true residual, the recursive one drifts
            a.mul_vec_into(x, &mut ap);
            let true_norm = math::sqrt(
                b.iter()
                    .zip(&ap)
                    .map(|(bi, ai)| (bi - ai) * (bi - ai))
                    .sum::<f64>(),
            );
            if true_norm <= target {
                return Ok(CgStats {
                    iterations: it,
                    relative_residual: true_norm / bnorm,
                });
            }
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
            restart = true;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = if restart { 0.0 } else { rz_new / rz };
        restart = false;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearNonConvergence {
        iterations: max_iter,
        residual: rnorm / bnorm,
    })
}

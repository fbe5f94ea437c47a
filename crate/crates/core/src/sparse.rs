//! Sparse matrices and the two linear solvers behind Newton steps: a banded
//! LU with partial pivoting (applied under a bandwidth-reducing ordering)
//! and restarted GMRES with ILU(0) right preconditioning.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::LinearSolveError;
use crate::math;

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; duplicate columns are
    /// summed and columns sorted.
    pub fn from_rows(n: usize, rows: impl IntoIterator<Item = Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                debug_assert!(c < n);
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        assert_eq!(row_ptr.len(), n + 1, "row count mismatch");
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    /// Largest `|i − j|` split into (below, above) diagonal under `ordering`
    /// (`ordering[new] = old`).
    pub fn bandwidth(&self, ordering: &[usize]) -> (usize, usize) {
        let inverse = invert(ordering);
        let (mut kl, mut ku) = (0, 0);
        for (new_i, &old_i) in ordering.iter().enumerate() {
            for (c, _) in self.row(old_i) {
                let new_j = inverse[c];
                if new_j < new_i {
                    kl = kl.max(new_i - new_j);
                } else {
                    ku = ku.max(new_j - new_i);
                }
            }
        }
        (kl, ku)
    }
}

fn invert(ordering: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; ordering.len()];
    for (new, &old) in ordering.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

pub fn norm2(v: &[f64]) -> f64 {
    math::sqrt(v.iter().map(|x| x * x).sum())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Relative residual `‖Ax − b‖₂ / ‖b‖₂` (absolute when `b = 0`).
pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| q - p).collect();
    let nb = norm2(b);
    if nb == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / nb
    }
}

/// LU factors of a banded matrix with partial pivoting, stored row-wise
/// with `2·kl + ku + 1` slots per row to hold pivoting fill.
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    band: Vec<f64>,
    pivots: Vec<usize>,
    ordering: Vec<usize>,
}

impl BandedLu {
    /// Factors `P A Pᵀ` where `ordering[new] = old` is applied symmetrically.
    pub fn factor(a: &CsrMatrix, ordering: &[usize]) -> Result<Self, LinearSolveError> {
        let n = a.n();
        let (kl, ku) = a.bandwidth(ordering);
        let width = 2 * kl + ku + 1;
        let inverse = invert(ordering);
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            band: vec![0.0; n * width],
            pivots: vec![0; n],
            ordering: ordering.to_vec(),
        };
        for (new_i, &old_i) in ordering.iter().enumerate() {
            for (c, v) in a.row(old_i) {
                let slot = lu.slot(new_i, inverse[c]);
                lu.band[slot] += v;
            }
        }
        lu.eliminate()?;
        Ok(lu)
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    fn eliminate(&mut self) -> Result<(), LinearSolveError> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.band[self.slot(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.band[self.slot(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(LinearSolveError::SingularPivot { column: k });
            }
            self.pivots[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.slot(k, j), self.slot(p, j));
                    self.band.swap(a, b);
                }
            }
            let pivot = self.band[self.slot(k, k)];
            for i in k + 1..=last_row {
                let sik = self.slot(i, k);
                let l = self.band[sik] / pivot;
                self.band[sik] = l;
                if l == 0.0 {
                    continue;
                }
                let base_i = self.slot(i, k + 1);
                let base_k = self.slot(k, k + 1);
                for off in 0..last_col.saturating_sub(k) {
                    let u = self.band[base_k + off];
                    self.band[base_i + off] -= l * u;
                }
            }
        }
        Ok(())
    }

    /// Solves `A x = b` in the original ordering.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut y: Vec<f64> = self.ordering.iter().map(|&old| b[old]).collect();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                y.swap(k, p);
            }
            let yk = y[k];
            if yk != 0.0 {
                for i in k + 1..=(k + kl).min(n - 1) {
                    y[i] -= self.band[self.slot(i, k)] * yk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut acc = y[k];
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                acc -= self.band[self.slot(k, j)] * y[j];
            }
            y[k] = acc / self.band[self.slot(k, k)];
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.ordering.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }
}

/// Incomplete LU with zero fill on the sparsity pattern of `A`.
#[derive(Clone, Debug)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self, LinearSolveError> {
        let mut lu = a.clone();
        let n = lu.n;
        let mut diag = vec![usize::MAX; n];
        for (i, d) in diag.iter_mut().enumerate() {
            for k in lu.row_ptr[i]..lu.row_ptr[i + 1] {
                if lu.col_idx[k] == i {
                    *d = k;
                }
            }
            if *d == usize::MAX {
                return Err(LinearSolveError::IluBreakdown { row: i });
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in start..end {
                pos[lu.col_idx[k]] = k;
            }
            for k in start..end {
                let c = lu.col_idx[k];
                if c >= i {
                    break;
                }
                let pivot = lu.values[diag[c]];
                if pivot == 0.0 {
                    return Err(LinearSolveError::IluBreakdown { row: c });
                }
                let l = lu.values[k] / pivot;
                lu.values[k] = l;
                for kk in diag[c] + 1..lu.row_ptr[c + 1] {
                    let cc = lu.col_idx[kk];
                    let p = pos[cc];
                    if p != usize::MAX {
                        lu.values[p] -= l * lu.values[kk];
                    }
                }
            }
            for k in start..end {
                pos[lu.col_idx[k]] = usize::MAX;
            }
            if lu.values[diag[i]] == 0.0 {
                return Err(LinearSolveError::IluBreakdown { row: i });
            }
        }
        Ok(Self { lu, diag })
    }

    /// `z = (LU)^{−1} r`.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let lu = &self.lu;
        for i in 0..lu.n {
            let mut acc = r[i];
            for k in lu.row_ptr[i]..self.diag[i] {
                acc -= lu.values[k] * z[lu.col_idx[k]];
            }
            z[i] = acc;
        }
        for i in (0..lu.n).rev() {
            let mut acc = z[i];
            for k in self.diag[i] + 1..lu.row_ptr[i + 1] {
                acc -= lu.values[k] * z[lu.col_idx[k]];
            }
            z[i] = acc / lu.values[self.diag[i]];
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iterations: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            restart: 60,
            max_iterations: 6000,
        }
    }
}

/// Restarted GMRES with ILU(0) right preconditioning; stops on the true
/// relative residual `‖b − Ax‖₂ ≤ tol·‖b‖₂`.
pub fn gmres_ilu0(
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
    opts: GmresOptions,
) -> Result<Vec<f64>, LinearSolveError> {
    let n = a.n();
    let mut x = vec![0.0; n];
    let nb = norm2(b);
    if nb == 0.0 {
        return Ok(x);
    }
    let ilu = Ilu0::new(a)?;
    let m = opts.restart.max(1);
    let mut iterations = 0;
    let mut basis: Vec<Vec<f64>> = (0..=m).map(|_| vec![0.0; n]).collect();
    let mut hess = vec![vec![0.0; m]; m + 1];
    let (mut cs, mut sn, mut g) = (vec![0.0; m], vec![0.0; m], vec![0.0; m + 1]);
    let mut z = vec![0.0; n];
    let mut w = vec![0.0; n];
    loop {
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let beta = norm2(&r);
        if beta <= tol * nb {
            return Ok(x);
        }
        if iterations >= opts.max_iterations {
            return Err(LinearSolveError::MaxIterations {
                iterations,
                relative_residual: beta / nb,
            });
        }
        for (v, ri) in basis[0].iter_mut().zip(&r) {
            *v = ri / beta;
        }
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;
        let mut used = 0;
        for j in 0..m {
            iterations += 1;
            ilu.apply(&basis[j], &mut z);
            a.mul_vec_into(&z, &mut w);
            for i in 0..=j {
                let h = dot(&w, &basis[i]);
                hess[i][j] = h;
                for (wk, vk) in w.iter_mut().zip(&basis[i]) {
                    *wk -= h * vk;
                }
            }
            let hn = norm2(&w);
            hess[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
                hess[i][j] = t;
            }
            let denom = math::sqrt(hess[j][j] * hess[j][j] + hn * hn);
            if denom == 0.0 {
                return Err(LinearSolveError::Breakdown { iterations });
            }
            cs[j] = hess[j][j] / denom;
            sn[j] = hn / denom;
            hess[j][j] = denom;
            hess[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            if hn != 0.0 {
                for (v, wk) in basis[j + 1].iter_mut().zip(&w) {
                    *v = wk / hn;
                }
            }
            // Estimated residual is |g[j+1]|; stop a bit early and let the
            // outer loop confirm with the true residual.
            if g[j + 1].abs() <= 0.5 * tol * nb || hn == 0.0 || iterations >= opts.max_iterations {
                break;
            }
        }
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut acc = g[i];
            for k in i + 1..used {
                acc -= hess[i][k] * y[k];
            }
            y[i] = acc / hess[i][i];
        }
        let mut update = vec![0.0; n];
        for (k, yk) in y.iter().enumerate() {
            for (u, v) in update.iter_mut().zip(&basis[k]) {
                *u += yk * v;
            }
        }
        ilu.apply(&update, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
    }
}

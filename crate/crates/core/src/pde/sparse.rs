//! CSR matrices, ILU(0) and BiCGSTAB.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    /// Position of the diagonal entry in each row.
    pub diag: Vec<usize>,
}

impl Csr {
    /// Builds the sparsity pattern from sorted column lists per row (diagonal must be present).
    pub fn from_pattern(rows: &[Vec<usize>]) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut diag = Vec::with_capacity(n);
        row_ptr.push(0);
        for (i, r) in rows.iter().enumerate() {
            let mut r = r.clone();
            r.sort_unstable();
            r.dedup();
            let d = r
                .iter()
                .position(|&c| c == i)
                .expect("diagonal entry missing from pattern");
            diag.push(cols.len() + d);
            cols.extend(r);
            row_ptr.push(cols.len());
        }
        let nnz = cols.len();
        Csr {
            n,
            row_ptr,
            cols,
            vals: vec![0.0; nnz],
            diag,
        }
    }

    pub fn clear(&mut self) {
        self.vals.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Position of (i, j) in the value array.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let r = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        r.binary_search(&j).ok().map(|p| self.row_ptr[i] + p)
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let p = self.find(i, j).expect("entry outside sparsity pattern");
        self.vals[p] += v;
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[p] * x[self.cols[p]];
            }
            y[i] = acc;
        }
    }

    /// Scales every row (and the right-hand side) so that its largest entry has unit modulus.
    pub fn equilibrate_rows(&mut self, rhs: &mut [f64]) {
        for i in 0..self.n {
            let m = self.vals[self.row_ptr[i]..self.row_ptr[i + 1]]
                .iter()
                .fold(0.0f64, |a, v| a.max(v.abs()));
            if m > 0.0 {
                let s = 1.0 / m;
                for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                    self.vals[p] *= s;
                }
                rhs[i] *= s;
            }
        }
    }
}

/// Incomplete LU factorization with the sparsity pattern of the matrix.
pub struct Ilu0 {
    lu: Csr,
}

impl Ilu0 {
    pub fn new(a: &Csr) -> Result<Self> {
        let mut lu = a.clone();
        let n = lu.n;
        for i in 0..n {
            let (rs, re) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for p in rs..re {
                let k = lu.cols[p];
                if k >= i {
                    break;
                }
                let piv = lu.vals[lu.diag[k]];
                if piv == 0.0 {
                    return Err(Error::Solver("zero pivot in ILU(0)".into()));
                }
                let lik = lu.vals[p] / piv;
                lu.vals[p] = lik;
                // row_i -= lik * row_k for the upper part of row k, restricted to the pattern of row i
                let ke = lu.row_ptr[k + 1];
                let mut q = p + 1;
                for kp in (lu.diag[k] + 1)..ke {
                    let j = lu.cols[kp];
                    while q < re && lu.cols[q] < j {
                        q += 1;
                    }
                    if q < re && lu.cols[q] == j {
                        lu.vals[q] -= lik * lu.vals[kp];
                    }
                }
            }
            if lu.vals[lu.diag[i]] == 0.0 {
                return Err(Error::Solver("zero pivot in ILU(0)".into()));
            }
        }
        Ok(Ilu0 { lu })
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let lu = &self.lu;
        let n = lu.n;
        for i in 0..n {
            let mut acc = r[i];
            for p in lu.row_ptr[i]..lu.diag[i] {
                acc -= lu.vals[p] * z[lu.cols[p]];
            }
            z[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = z[i];
            for p in (lu.diag[i] + 1)..lu.row_ptr[i + 1] {
                acc -= lu.vals[p] * z[lu.cols[p]];
            }
            z[i] = acc / lu.vals[lu.diag[i]];
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iter: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions {
            rel_tol: 1e-12,
            abs_tol: 1e-300,
            max_iter: 2000,
        }
    }
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dotv(a, a).sqrt()
}

/// Right-preconditioned BiCGSTAB; `x` holds the initial guess on entry. Returns the iteration count.
pub fn bicgstab(a: &Csr, m: &Ilu0, b: &[f64], x: &mut [f64], opts: KrylovOptions) -> Result<usize> {
    let n = a.n;
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let target = (opts.rel_tol * bnorm).max(opts.abs_tol);
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if norm2(&r) <= target {
        return Ok(0);
    }
    let r_hat = r.clone();
    let (mut rho_old, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=opts.max_iter {
        let rho = dotv(&r_hat, &r);
        if rho.abs() < 1e-300 {
            return Err(Error::Solver(format!(
                "BiCGSTAB breakdown (rho = 0) at iteration {it}"
            )));
        }
        let beta = (rho / rho_old) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        m.apply(&p, &mut y);
        a.matvec(&y, &mut v);
        let rv = dotv(&r_hat, &v);
        if rv.abs() < 1e-300 {
            return Err(Error::Solver(format!(
                "BiCGSTAB breakdown at iteration {it}"
            )));
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) <= target {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(it);
        }
        m.apply(&s, &mut z);
        a.matvec(&z, &mut t);
        let tt = dotv(&t, &t);
        omega = if tt > 0.0 { dotv(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        let rn = norm2(&r);
        if !rn.is_finite() {
            return Err(Error::Solver(
                "BiCGSTAB produced non-finite residual".into(),
            ));
        }
        if rn <= target {
            return Ok(it);
        }
        if omega == 0.0 {
            return Err(Error::Solver(format!(
                "BiCGSTAB stagnated at iteration {it}"
            )));
        }
        rho_old = rho;
    }
    Err(Error::Solver(format!(
        "BiCGSTAB did not reach tolerance in {} iterations",
        opts.max_iter
    )))
}

/// Convenience: factor and solve in one call.
pub fn solve(a: &Csr, b: &[f64], x: &mut [f64], opts: KrylovOptions) -> Result<usize> {
    let m = Ilu0::new(a)?;
    bicgstab(a, &m, b, x, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: f64) -> Csr {
        let rows: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut r = vec![i];
                if i > 0 {
                    r.push(i - 1);
                }
                if i + 1 < n {
                    r.push(i + 1);
                }
                r
            })
            .collect();
        let mut a = Csr::from_pattern(&rows);
        for i in 0..n {
            a.add(i, i, 2.0 + shift);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                a.add(i, i + 1, -1.3);
            }
        }
        a
    }

    #[test]
    fn ilu_exact_for_tridiagonal() {
        // ILU(0) of a tridiagonal matrix is its exact LU, so one preconditioner application solves.
        let a = laplacian_1d(50, 0.5);
        let m = Ilu0::new(&a).unwrap();
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; 50];
        a.matvec(&x_true, &mut b);
        let mut x = vec![0.0; 50];
        m.apply(&b, &mut x);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn bicgstab_solves_nonsymmetric() {
        let n = 200;
        let a = laplacian_1d(n, 1.0);
        let x_true: Vec<f64> = (0..n).map(|i| ((i * i) as f64 * 0.01).cos()).collect();
        let mut b = vec![0.0; n];
        a.matvec(&x_true, &mut b);
        let mut x = vec![0.0; n];
        solve(&a, &b, &mut x, KrylovOptions::default()).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-9);
        }
    }
}

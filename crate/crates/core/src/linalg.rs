//! Compressed-row matrices and a conjugate gradient solver for the implicit
//! diffusion systems.

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    symmetric: bool,
}

impl CsrMatrix {
    /// Builds a square matrix from raw CSR arrays; columns must be sorted within each row.
    pub fn from_parts(n: usize, row_ptr: Vec<usize>, cols: Vec<usize>, vals: Vec<f64>, symmetric: bool) -> Self {
        assert_eq!(row_ptr.len(), n + 1);
        assert_eq!(cols.len(), vals.len());
        assert_eq!(*row_ptr.last().unwrap(), cols.len());
        CsrMatrix { n, row_ptr, cols, vals, symmetric }
    }

    /// Builds from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>, symmetric: bool) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; n + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) outside {n}x{n}");
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { n, row_ptr, cols, vals, symmetric }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Flag recorded at construction.
    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(pos) => self.vals[r.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[p] * x[self.cols[p]];
            }
            *yi = acc;
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// Entrywise check of `A == A^T` within `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= tol))
    }

    /// `I - s A`, keeping the sparsity pattern (the diagonal must be stored).
    pub fn identity_minus_scaled(&self, s: f64) -> CsrMatrix {
        let mut vals = self.vals.clone();
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                vals[p] = -s * self.vals[p];
                if self.cols[p] == i {
                    vals[p] += 1.0;
                }
            }
        }
        CsrMatrix { n: self.n, row_ptr: self.row_ptr.clone(), cols: self.cols.clone(), vals, symmetric: self.symmetric }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradient for a symmetric positive definite `a`, starting from
/// the contents of `x`. Stops once `||b - a x|| <= rel_tol ||b||`.
pub fn conjugate_gradient(a: &CsrMatrix, b: &[f64], x: &mut [f64], rel_tol: f64, max_iter: usize) -> CgOutcome {
    let n = a.n();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome { iterations: 0, relative_residual: 0.0, converged: true };
    }
    let mut r = a.matvec(x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut rr = dot(&r, &r);
    let target = rel_tol * b_norm;
    if rr.sqrt() <= target {
        return CgOutcome { iterations: 0, relative_residual: rr.sqrt() / b_norm, converged: true };
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return CgOutcome { iterations: it, relative_residual: rr.sqrt() / b_norm, converged: false };
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            return CgOutcome { iterations: it, relative_residual: rr_new.sqrt() / b_norm, converged: true };
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    CgOutcome { iterations: max_iter, relative_residual: rr.sqrt() / b_norm, converged: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, t, true)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 1, 1.0), (0, 1, 2.0), (1, 0, 3.0)], false);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), 3.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn cg_solves_tridiagonal() {
        let a = tridiag(50);
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.matvec(&x_true);
        let mut x = vec![0.0; 50];
        let out = conjugate_gradient(&a, &b, &mut x, 1e-12, 500);
        assert!(out.converged);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn warm_start_at_solution_takes_no_iterations() {
        let a = tridiag(10);
        let x_true = vec![1.0; 10];
        let b = a.matvec(&x_true);
        let mut x = x_true.clone();
        let out = conjugate_gradient(&a, &b, &mut x, 1e-10, 100);
        assert_eq!(out.iterations, 0);
        assert_eq!(x, x_true);
    }

    #[test]
    fn identity_minus_scaled_shifts_diagonal() {
        let a = tridiag(3);
        let s = a.identity_minus_scaled(0.5);
        assert_eq!(s.get(0, 0), -1.0);
        assert_eq!(s.get(0, 1), 0.5);
    }
}

//! Symmetric positive definite systems with block-tridiagonal structure plus
//! a dense border of global variables:
//!
//! ```text
//! [ A   C ] [x]   [b]
//! [ C^T G ] [y] = [c]
//! ```
//!
//! `A` is factored block by block and the border is eliminated through the
//! Schur complement `G - C^T A^-1 C`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BorderedBlockTridiag {
    pub diag: Vec<DMatrix<f64>>,
    /// `off[i]` couples block `i` (rows) with block `i + 1` (columns).
    pub off: Vec<DMatrix<f64>>,
    /// `border[i]` couples block `i` with the global variables.
    pub border: Vec<DMatrix<f64>>,
    pub corner: DMatrix<f64>,
}

struct Factor {
    l: Vec<DMatrix<f64>>,
    /// `z[i] = L_i^-1 off[i]`, so the sub-diagonal factor block is `z[i]^T`.
    z: Vec<DMatrix<f64>>,
}

impl BorderedBlockTridiag {
    pub fn zeros(sizes: &[usize], globals: usize) -> Self {
        Self {
            diag: sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect(),
            off: sizes.windows(2).map(|w| DMatrix::zeros(w[0], w[1])).collect(),
            border: sizes.iter().map(|&n| DMatrix::zeros(n, globals)).collect(),
            corner: DMatrix::zeros(globals, globals),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.diag.iter().map(|d| d.nrows()).collect()
    }

    fn factor(&self) -> Result<Factor> {
        let n = self.diag.len();
        let mut l: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        let mut z: Vec<DMatrix<f64>> = Vec::with_capacity(n.saturating_sub(1));
        for i in 0..n {
            let mut d = self.diag[i].clone();
            if i > 0 {
                let zi: &DMatrix<f64> = &z[i - 1];
                d -= zi.transpose() * zi;
            }
            let li = d.cholesky().ok_or(Error::SingularNormalEquations)?.l();
            if i + 1 < n {
                z.push(li.solve_lower_triangular(&self.off[i]).ok_or(Error::SingularNormalEquations)?);
            }
            l.push(li);
        }
        Ok(Factor { l, z })
    }

    /// Solve `A X = B` for block right-hand sides with any number of columns.
    fn solve_a(f: &Factor, b: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
        let n = f.l.len();
        let mut y: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut r = b[i].clone();
            if i > 0 {
                r -= f.z[i - 1].transpose() * &y[i - 1];
            }
            y.push(f.l[i].solve_lower_triangular(&r).ok_or(Error::SingularNormalEquations)?);
        }
        let mut x = vec![DMatrix::zeros(0, 0); n];
        for i in (0..n).rev() {
            let mut r = y[i].clone();
            if i + 1 < n {
                r -= &f.z[i] * &x[i + 1];
            }
            x[i] = f.l[i].tr_solve_lower_triangular(&r).ok_or(Error::SingularNormalEquations)?;
        }
        Ok(x)
    }

    pub fn solve(&self, b: &[DVector<f64>], c: &DVector<f64>) -> Result<(Vec<DVector<f64>>, DVector<f64>)> {
        let f = self.factor()?;
        let rhs: Vec<DMatrix<f64>> = b.iter().map(|v| DMatrix::from_column_slice(v.len(), 1, v.as_slice())).collect();
        let y = Self::solve_a(&f, &rhs)?;
        let m = self.corner.nrows();
        if m == 0 {
            return Ok((y.into_iter().map(|v| v.column(0).into_owned()).collect(), DVector::zeros(0)));
        }
        let x_border = Self::solve_a(&f, &self.border)?;
        let mut schur = self.corner.clone();
        let mut rhs_g = c.clone();
        for i in 0..self.diag.len() {
            schur -= self.border[i].transpose() * &x_border[i];
            rhs_g -= self.border[i].transpose() * y[i].column(0);
        }
        let dg = schur.cholesky().ok_or(Error::SingularNormalEquations)?.solve(&rhs_g);
        let dx = (0..self.diag.len()).map(|i| y[i].column(0) - &x_border[i] * &dg).collect();
        Ok((dx, dg))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let sizes = self.sizes();
        let m = self.corner.nrows();
        let total: usize = sizes.iter().sum::<usize>() + m;
        let mut out = DMatrix::zeros(total, total);
        let mut off = 0;
        let offsets: Vec<usize> = sizes
            .iter()
            .map(|s| {
                let o = off;
                off += s;
                o
            })
            .collect();
        for (i, &o) in offsets.iter().enumerate() {
            let n = sizes[i];
            out.view_mut((o, o), (n, n)).copy_from(&self.diag[i]);
            out.view_mut((o, off), (n, m)).copy_from(&self.border[i]);
            out.view_mut((off, o), (m, n)).copy_from(&self.border[i].transpose());
            if i + 1 < sizes.len() {
                let n2 = sizes[i + 1];
                out.view_mut((o, o + n), (n, n2)).copy_from(&self.off[i]);
                out.view_mut((o + n, o), (n2, n)).copy_from(&self.off[i].transpose());
            }
        }
        out.view_mut((off, off), (m, m)).copy_from(&self.corner);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_system(seed: u64, sizes: &[usize], m: usize) -> BorderedBlockTridiag {
        // Build J^T J from a random banded J so the matrix is SPD by construction.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n: usize = sizes.iter().sum::<usize>() + m;
        let offsets: Vec<usize> = sizes.iter().scan(0, |acc, s| {
            let o = *acc;
            *acc += s;
            Some(o)
        }).collect();
        let rows = 2 * n;
        let mut j = DMatrix::zeros(rows, n);
        for r in 0..rows {
            let b = r % sizes.len();
            let hi = if b + 1 < sizes.len() { offsets[b + 1] + sizes[b + 1] } else { offsets[b] + sizes[b] };
            for c in offsets[b]..hi {
                j[(r, c)] = rng.random_range(-1.0..1.0);
            }
            for c in n - m..n {
                j[(r, c)] = rng.random_range(-1.0..1.0);
            }
        }
        let h = j.transpose() * &j + DMatrix::identity(n, n) * 1e-3;
        let mut sys = BorderedBlockTridiag::zeros(sizes, m);
        for (i, &o) in offsets.iter().enumerate() {
            sys.diag[i] = h.view((o, o), (sizes[i], sizes[i])).into_owned();
            sys.border[i] = h.view((o, n - m), (sizes[i], m)).into_owned();
            if i + 1 < sizes.len() {
                sys.off[i] = h.view((o, offsets[i + 1]), (sizes[i], sizes[i + 1])).into_owned();
            }
        }
        sys.corner = h.view((n - m, n - m), (m, m)).into_owned();
        assert!((sys.to_dense() - &h).norm() < 1e-12);
        sys
    }

    #[test]
    fn matches_dense_cholesky() {
        for (seed, sizes, m) in [(1u64, vec![3, 5, 2, 4], 2), (2, vec![6], 3), (3, vec![4, 4, 4, 4, 4, 4], 0), (4, vec![2, 7, 3], 6)] {
            let sys = random_system(seed, &sizes, m);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 100);
            let b: Vec<DVector<f64>> = sizes.iter().map(|&s| DVector::from_fn(s, |_, _| rng.random_range(-1.0..1.0))).collect();
            let c = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            let (x, y) = sys.solve(&b, &c).unwrap();
            let mut full_b: Vec<f64> = b.iter().flat_map(|v| v.iter().copied()).collect();
            full_b.extend(c.iter());
            let dense = sys.to_dense().cholesky().unwrap().solve(&DVector::from_vec(full_b));
            let mut got: Vec<f64> = x.iter().flat_map(|v| v.iter().copied()).collect();
            got.extend(y.iter());
            for (a, e) in got.iter().zip(dense.iter()) {
                assert!((a - e).abs() < 1e-9 * (1.0 + e.abs()), "{a} vs {e}");
            }
        }
    }

    #[test]
    fn indefinite_system_is_rejected() {
        let mut sys = BorderedBlockTridiag::zeros(&[2, 2], 1);
        sys.diag[0] = DMatrix::identity(2, 2);
        sys.diag[1] = -DMatrix::identity(2, 2);
        sys.corner[(0, 0)] = 1.0;
        let b = vec![DVector::zeros(2), DVector::zeros(2)];
        assert!(matches!(sys.solve(&b, &DVector::zeros(1)), Err(Error::SingularNormalEquations)));
    }
}

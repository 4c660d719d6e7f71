//! Exact linear algebra over the rationals.
//!
//! Two independent elimination routes live here:
//! - [`Rref`]: Gauss-Jordan over `BigRational`, keeping the accumulated row
//!   transform so one factorisation answers many right-hand sides, null spaces
//!   and left null spaces.
//! - [`bareiss_rank`]: fraction-free elimination over `BigInt`. Used for rank
//!   and image-membership decisions, and as a cross-check on [`Rref`].

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::rational::{self, Rational};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<Rational>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Rational::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Rational::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Rational) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<Rational>>) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &Rational {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Rational) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[Rational] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<Rational> {
        (0..self.rows).map(|r| self.get(r, c).clone()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r).clone())
    }

    pub fn mul_vec(&self, v: &[Rational]) -> Vec<Rational> {
        assert_eq!(v.len(), self.cols, "vector length does not match columns");
        (0..self.rows)
            .map(|r| rational::dot(self.row(r), v))
            .collect()
    }

    /// `selfᵀ v`, without materialising the transpose.
    pub fn tmul_vec(&self, v: &[Rational]) -> Vec<Rational> {
        assert_eq!(v.len(), self.rows, "vector length does not match rows");
        let mut out = vec![Rational::zero(); self.cols];
        for (r, vr) in v.iter().enumerate() {
            if vr.is_zero() {
                continue;
            }
            for (c, o) in out.iter_mut().enumerate() {
                let a = self.get(r, c);
                if !a.is_zero() {
                    *o += a * vr;
                }
            }
        }
        out
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a.is_zero() {
                    continue;
                }
                for c in 0..other.cols {
                    let b = other.get(k, c);
                    if !b.is_zero() {
                        let cur = out.get(r, c) + a * b;
                        out.set(r, c, cur);
                    }
                }
            }
        }
        out
    }

    /// Keeps the listed columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        Matrix::from_fn(self.rows, cols.len(), |r, c| self.get(r, cols[c]).clone())
    }

    pub fn stack(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols);
        let mut data = self.data.clone();
        data.extend(other.data.iter().cloned());
        Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn rank(&self) -> usize {
        bareiss_rank(&self.to_integer_rows())
    }

    /// Rows scaled by their denominators' lcm; preserves rank and row spaces.
    pub fn to_integer_rows(&self) -> Vec<Vec<BigInt>> {
        (0..self.rows)
            .map(|r| {
                let row = self.row(r);
                let l = rational::common_denominator(row);
                row.iter()
                    .map(|v| (v * Rational::from_integer(l.clone())).to_integer())
                    .collect()
            })
            .collect()
    }

    pub fn is_zero_one(&self) -> bool {
        self.data.iter().all(|v| v.is_zero() || v.is_one())
    }
}

/// Reduced row-echelon form with the row transform `E` such that `E · A = R`.
#[derive(Clone, Debug)]
pub struct Rref {
    reduced: Matrix,
    transform: Matrix,
    pivots: Vec<usize>,
}

impl Rref {
    pub fn new(a: &Matrix) -> Self {
        let mut r = a.clone();
        let mut e = Matrix::identity(a.rows);
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..a.cols {
            if row == a.rows {
                break;
            }
            let Some(p) = (row..a.rows).find(|&i| !r.get(i, col).is_zero()) else {
                continue;
            };
            swap_rows(&mut r, row, p);
            swap_rows(&mut e, row, p);
            let inv = r.get(row, col).recip();
            scale_row(&mut r, row, &inv);
            scale_row(&mut e, row, &inv);
            for i in 0..a.rows {
                if i == row {
                    continue;
                }
                let f = r.get(i, col).clone();
                if f.is_zero() {
                    continue;
                }
                axpy_row(&mut r, i, row, &f);
                axpy_row(&mut e, i, row, &f);
            }
            pivots.push(col);
            row += 1;
        }
        Self {
            reduced: r,
            transform: e,
            pivots,
        }
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    pub fn reduced(&self) -> &Matrix {
        &self.reduced
    }

    /// Invertible `E` with `E·A` equal to the reduced matrix.
    pub fn transform(&self) -> &Matrix {
        &self.transform
    }

    pub fn free_columns(&self) -> Vec<usize> {
        let mut is_pivot = vec![false; self.reduced.cols];
        for &p in &self.pivots {
            is_pivot[p] = true;
        }
        (0..self.reduced.cols).filter(|&c| !is_pivot[c]).collect()
    }

    /// Solves `A x = b` with every free variable pinned to zero, or returns
    /// `None` when `b` is outside the column space.
    pub fn solve(&self, b: &[Rational]) -> Option<Vec<Rational>> {
        let c = self.transform.mul_vec(b);
        if c[self.rank()..].iter().any(|v| !v.is_zero()) {
            return None;
        }
        let mut x = vec![Rational::zero(); self.reduced.cols];
        for (i, &p) in self.pivots.iter().enumerate() {
            x[p] = c[i].clone();
        }
        Some(x)
    }

    /// One kernel vector per free column: that column set to 1, the others to 0.
    pub fn nullspace(&self) -> Vec<Vec<Rational>> {
        self.free_columns()
            .into_iter()
            .map(|f| {
                let mut v = vec![Rational::zero(); self.reduced.cols];
                v[f] = Rational::one();
                for (i, &p) in self.pivots.iter().enumerate() {
                    v[p] = -self.reduced.get(i, f).clone();
                }
                v
            })
            .collect()
    }

    /// Basis of `ker(Aᵀ)`: the rows of the transform below the rank.
    pub fn left_nullspace(&self) -> Vec<Vec<Rational>> {
        (self.rank()..self.transform.rows)
            .map(|r| self.transform.row(r).to_vec())
            .collect()
    }

    /// Orthogonal projection of `b` onto `ker(Aᵀ) = im(A)^⊥`.
    ///
    /// Zero exactly when `b ∈ im(A)`; otherwise `r` satisfies `Aᵀ r = 0` and
    /// `rᵀ b = |r|² > 0`, which certifies `b ∉ im(A)`.
    pub fn residual(&self, b: &[Rational]) -> Vec<Rational> {
        let basis = self.left_nullspace();
        if basis.is_empty() {
            return vec![Rational::zero(); b.len()];
        }
        let u = Matrix::from_rows(basis);
        let gram = u.mul(&u.transpose());
        let rhs = u.mul_vec(b);
        let z = Rref::new(&gram)
            .solve(&rhs)
            .expect("Gram matrix of a basis is nonsingular");
        u.tmul_vec(&z)
    }
}

fn swap_rows(m: &mut Matrix, a: usize, b: usize) {
    if a == b {
        return;
    }
    for c in 0..m.cols {
        m.data.swap(a * m.cols + c, b * m.cols + c);
    }
}

fn scale_row(m: &mut Matrix, r: usize, f: &Rational) {
    for c in 0..m.cols {
        let idx = r * m.cols + c;
        if !m.data[idx].is_zero() {
            m.data[idx] = &m.data[idx] * f;
        }
    }
}

/// `row[target] -= f * row[source]`.
fn axpy_row(m: &mut Matrix, target: usize, source: usize, f: &Rational) {
    for c in 0..m.cols {
        let s = &m.data[source * m.cols + c];
        if s.is_zero() {
            continue;
        }
        let delta = s * f;
        let t = &mut m.data[target * m.cols + c];
        *t -= delta;
    }
}

/// Solves the square system `A x = b`, or returns `None` when `A` is singular.
pub fn solve_square(a: &Matrix, b: &[Rational]) -> Option<Vec<Rational>> {
    let n = a.rows;
    debug_assert_eq!(a.cols, n);
    let mut m = Matrix::from_fn(n, n + 1, |r, c| {
        if c < n {
            a.get(r, c).clone()
        } else {
            b[r].clone()
        }
    });
    for col in 0..n {
        let p = (col..n).find(|&i| !m.get(i, col).is_zero())?;
        swap_rows(&mut m, col, p);
        let inv = m.get(col, col).recip();
        scale_row(&mut m, col, &inv);
        for i in col + 1..n {
            let f = m.get(i, col).clone();
            if !f.is_zero() {
                axpy_row(&mut m, i, col, &f);
            }
        }
    }
    let mut x = vec![Rational::zero(); n];
    for i in (0..n).rev() {
        let mut v = m.get(i, n).clone();
        for j in i + 1..n {
            let c = m.get(i, j);
            if !c.is_zero() {
                v -= c * &x[j];
            }
        }
        x[i] = v;
    }
    Some(x)
}

/// Rank by fraction-free (Bareiss) elimination. Every intermediate stays an
/// integer because each step divides exactly by the previous pivot.
pub fn bareiss_rank(rows: &[Vec<BigInt>]) -> usize {
    let mut m: Vec<Vec<BigInt>> = rows.to_vec();
    let n_rows = m.len();
    let n_cols = m.first().map_or(0, Vec::len);
    let mut prev = BigInt::one();
    let mut rank = 0;
    for col in 0..n_cols {
        if rank == n_rows {
            break;
        }
        let Some(p) = (rank..n_rows).find(|&i| !m[i][col].is_zero()) else {
            continue;
        };
        m.swap(rank, p);
        for i in rank + 1..n_rows {
            for j in col + 1..n_cols {
                let v = &m[rank][col] * &m[i][j] - &m[i][col] * &m[rank][j];
                m[i][j] = v / &prev;
            }
            m[i][col] = BigInt::zero();
        }
        prev = m[rank][col].clone();
        rank += 1;
    }
    rank
}

/// `b ∈ im(A)` decided by comparing `rank(A)` with `rank([A | b])`.
pub fn in_column_space(a: &Matrix, b: &[Rational]) -> bool {
    let rank_a = a.rank();
    let aug = Matrix::from_fn(a.rows(), a.cols() + 1, |r, c| {
        if c < a.cols() {
            a.get(r, c).clone()
        } else {
            b[r].clone()
        }
    });
    aug.rank() == rank_a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn m(rows: &[&[i64]]) -> Matrix {
        Matrix::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&v| int(v)).collect())
                .collect(),
        )
    }

    #[test]
    fn square_solve() {
        let a = m(&[&[0, 2], &[3, 1]]);
        let x = solve_square(&a, &[int(1), int(2)]).unwrap();
        assert_eq!(x, vec![ratio(1, 2), ratio(1, 2)]);
        assert_eq!(
            solve_square(&m(&[&[1, 2], &[2, 4]]), &[int(1), int(2)]),
            None
        );
    }

    #[test]
    fn rank_agrees_between_routes() {
        let a = m(&[&[1, 2, 3], &[2, 4, 6], &[1, 0, 1], &[0, 2, 2]]);
        assert_eq!(Rref::new(&a).rank(), 2);
        assert_eq!(a.rank(), 2);
    }

    #[test]
    fn bareiss_handles_negative_pivots() {
        let a = m(&[&[-2, 1, 0], &[4, -2, 1], &[0, 0, 3], &[6, -3, 1]]);
        assert_eq!(a.rank(), Rref::new(&a).rank());
        assert_eq!(a.rank(), 2);
    }

    #[test]
    fn solve_and_nullspace() {
        let a = m(&[&[1, 1, 0], &[0, 1, 1]]);
        let rref = Rref::new(&a);
        let b = vec![int(3), int(5)];
        let x = rref.solve(&b).unwrap();
        assert_eq!(a.mul_vec(&x), b);
        for v in rref.nullspace() {
            assert!(a.mul_vec(&v).iter().all(Zero::is_zero));
        }
        assert_eq!(rref.nullspace().len(), 1);
    }

    #[test]
    fn residual_certifies_non_membership() {
        let a = m(&[&[1, 0], &[0, 1], &[1, 1]]);
        let rref = Rref::new(&a);
        let b = vec![int(1), int(1), int(1)];
        assert!(rref.solve(&b).is_none());
        let r = rref.residual(&b);
        // projection of (1,1,1) onto span{(1,1,-1)} = (1/3)(1,1,-1)
        assert_eq!(r, vec![ratio(1, 3), ratio(1, 3), ratio(-1, 3)]);
        assert!(a.tmul_vec(&r).iter().all(Zero::is_zero));
        assert!(!in_column_space(&a, &b));
        let inside = a.mul_vec(&[int(2), ratio(-1, 2)]);
        assert!(rref.residual(&inside).iter().all(Zero::is_zero));
        assert!(in_column_space(&a, &inside));
    }
}

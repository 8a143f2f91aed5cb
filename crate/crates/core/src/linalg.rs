//! Dense vectors and symmetric matrices over a [`Scalar`] field.
//!
//! Storage is dense row-major. Positive definiteness is decided by a
//! root-free Cholesky (`L D Lᵀ`) factorization, which stays exact on the
//! rational backend. Singular but consistent symmetric systems (rank-deficient
//! spans, KKT systems) go through a completely pivoted elimination instead.

use std::ops::Index;

use crate::error::{Error, Result};
use crate::scalar::{max_abs, Scalar};

/// A dense column vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector<T>(Vec<T>);

impl<T: Scalar> Vector<T> {
    pub fn new(entries: Vec<T>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty);
        }
        Ok(Vector(entries))
    }

    pub fn zeros(n: usize) -> Self {
        Vector(vec![T::zero(); n.max(1)])
    }

    pub fn ones(n: usize) -> Self {
        Vector(vec![T::one(); n.max(1)])
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut v = Self::zeros(n);
        v.0[i] = T::one();
        v
    }

    pub fn from_i64(entries: &[i64]) -> Self {
        Vector(entries.iter().map(|&v| T::from_i64(v)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.0.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| v.is_zero())
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(())
    }

    /// Inner product `Σ aᵢ bᵢ`.
    pub fn dot(&self, other: &Self) -> Result<T> {
        self.check_dim(other)?;
        Ok(self.dot_unchecked(other))
    }

    pub(crate) fn dot_unchecked(&self, other: &Self) -> T {
        debug_assert_eq!(self.len(), other.len());
        let mut acc = T::zero();
        for (a, b) in self.0.iter().zip(&other.0) {
            acc += a.clone() * b;
        }
        acc
    }

    pub fn norm_sq(&self) -> T {
        self.dot_unchecked(self)
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> T {
        max_abs(self.0.iter().cloned())
    }

    pub fn scale(&self, s: &T) -> Self {
        Vector(self.0.iter().map(|v| v.clone() * s).collect())
    }

    pub fn neg(&self) -> Self {
        Vector(self.0.iter().map(|v| -v.clone()).collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(self.add_unchecked(other))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(self.sub_unchecked(other))
    }

    pub(crate) fn add_unchecked(&self, other: &Self) -> Self {
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a.clone() + b).collect())
    }

    pub(crate) fn sub_unchecked(&self, other: &Self) -> Self {
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a.clone() - b).collect())
    }

    /// `self + s * other`
    pub(crate) fn axpy(&self, s: &T, other: &Self) -> Self {
        Vector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a.clone() + s.clone() * b)
                .collect(),
        )
    }

    /// `Σ wᵢ vᵢ`; all vectors must share a dimension and `weights` must be as
    /// long as `vectors`.
    pub fn linear_combination(weights: &[T], vectors: &[Vector<T>]) -> Result<Self> {
        let first = vectors.first().ok_or(Error::Empty)?;
        if weights.len() != vectors.len() {
            return Err(Error::DimensionMismatch {
                expected: vectors.len(),
                found: weights.len(),
            });
        }
        let mut acc = Self::zeros(first.len());
        for (w, v) in weights.iter().zip(vectors) {
            acc.check_dim(v)?;
            if !w.is_zero() {
                acc = acc.axpy(w, v);
            }
        }
        Ok(acc)
    }
}

impl<T> Index<usize> for Vector<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<'a, T> IntoIterator for &'a Vector<T> {
    type Item = &'a T;
    type IntoIter = std::slice::Iter<'a, T>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// A dense symmetric matrix. Symmetry is exact and checked at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> SymMatrix<T> {
    /// Builds from full rows, rejecting ragged or asymmetric input.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty);
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::NotSquare {
                    row: i,
                    len: row.len(),
                    expected: n,
                });
            }
            data.extend(row);
        }
        let m = SymMatrix { n, data };
        for i in 0..n {
            for j in 0..i {
                if m.get(i, j) != m.get(j, i) {
                    return Err(Error::Asymmetric { row: i, col: j });
                }
            }
        }
        Ok(m)
    }

    /// Builds from a closure evaluated on the lower triangle (`j <= i`) and
    /// mirrored.
    pub fn from_lower_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let n = n.max(1);
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                data[j * n + i] = v.clone();
                data[i * n + j] = v;
            }
        }
        SymMatrix { n, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_lower_fn(n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn diag(values: &[T]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty);
        }
        Ok(Self::from_lower_fn(values.len(), |i, j| {
            if i == j {
                values[i].clone()
            } else {
                T::zero()
            }
        }))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn max_abs(&self) -> T {
        max_abs(self.data.iter().cloned())
    }

    /// Matrix-vector product `M v`.
    pub fn mat_vec(&self, v: &Vector<T>) -> Result<Vector<T>> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: v.len(),
            });
        }
        Ok(self.mat_vec_unchecked(v))
    }

    pub(crate) fn mat_vec_unchecked(&self, v: &Vector<T>) -> Vector<T> {
        Vector(
            (0..self.n)
                .map(|i| {
                    let mut acc = T::zero();
                    for (a, b) in self.row(i).iter().zip(v.iter()) {
                        acc += a.clone() * b;
                    }
                    acc
                })
                .collect(),
        )
    }

    /// `uᵀ M v`
    pub fn bilinear(&self, u: &Vector<T>, v: &Vector<T>) -> Result<T> {
        let mv = self.mat_vec(v)?;
        u.dot(&mv)
    }
}

/// Outcome of [`cholesky_spd_check`].
#[derive(Debug, Clone)]
pub struct SpdCheck<T> {
    pub is_spd: bool,
    /// Pivots computed before the first failure (all of them on success).
    pub pivots: Vec<T>,
    /// 1-based index of the first non-positive pivot.
    pub failed_pivot: Option<usize>,
    pub factor: Option<LdlFactor<T>>,
}

/// Root-free Cholesky factor `M = L D Lᵀ` with unit lower-triangular `L`.
///
/// `L·sqrt(D)` is the classical Cholesky factor; keeping `D` separate avoids
/// square roots so the rational backend stays exact.
#[derive(Debug, Clone, PartialEq)]
pub struct LdlFactor<T> {
    n: usize,
    lower: Vec<T>,
    diag: Vec<T>,
}

impl<T: Scalar> LdlFactor<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entry `(i, j)` of the unit lower-triangular factor.
    pub fn l(&self, i: usize, j: usize) -> T {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => T::one(),
            std::cmp::Ordering::Less => T::zero(),
            std::cmp::Ordering::Greater => self.lower[i * self.n + j].clone(),
        }
    }

    pub fn pivots(&self) -> &[T] {
        &self.diag
    }

    /// Ratio of largest to smallest pivot, a cheap condition estimate.
    pub fn pivot_ratio(&self) -> T {
        let mut lo = self.diag[0].clone();
        let mut hi = self.diag[0].clone();
        for d in &self.diag[1..] {
            if *d < lo {
                lo = d.clone();
            }
            if *d > hi {
                hi = d.clone();
            }
        }
        hi / lo
    }

    /// Rebuilds `L D Lᵀ`.
    pub fn reconstruct(&self) -> SymMatrix<T> {
        SymMatrix::from_lower_fn(self.n, |i, j| {
            let mut acc = T::zero();
            for k in 0..=j {
                acc += self.l(i, k) * &self.diag[k] * self.l(j, k);
            }
            acc
        })
    }

    pub fn solve(&self, b: &Vector<T>) -> Result<Vector<T>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let mut y: Vec<T> = b.as_slice().to_vec();
        for i in 0..n {
            for j in 0..i {
                let t = self.lower[i * n + j].clone() * &y[j];
                y[i] -= t;
            }
        }
        for (yi, d) in y.iter_mut().zip(&self.diag) {
            *yi /= d;
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let t = self.lower[j * n + i].clone() * &y[j];
                y[i] -= t;
            }
        }
        Ok(Vector(y))
    }
}

/// Default multiplier for the float positive-pivot threshold
/// `factor · n · ε · max|Mᵢⱼ|`.
pub const DEFAULT_PIVOT_THRESHOLD_FACTOR: f64 = 1.0;

/// Decides positive definiteness from the pivots of an `L D Lᵀ` elimination.
pub fn cholesky_spd_check<T: Scalar>(m: &SymMatrix<T>) -> SpdCheck<T> {
    cholesky_spd_check_with(m, DEFAULT_PIVOT_THRESHOLD_FACTOR)
}

/// As [`cholesky_spd_check`] with a custom float threshold multiplier. On the
/// exact backend any strictly positive pivot counts.
pub fn cholesky_spd_check_with<T: Scalar>(m: &SymMatrix<T>, threshold_factor: f64) -> SpdCheck<T> {
    let n = m.dim();
    let threshold = if T::EXACT {
        T::zero()
    } else {
        T::from_f64(threshold_factor).unwrap_or_else(T::one) * T::from_i64(n as i64) * T::epsilon() * m.max_abs()
    };
    let mut lower = vec![T::zero(); n * n];
    let mut diag: Vec<T> = Vec::with_capacity(n);
    for j in 0..n {
        let mut d = m.get(j, j).clone();
        for k in 0..j {
            let ljk = lower[j * n + k].clone();
            d -= ljk.clone() * &ljk * &diag[k];
        }
        if !(d > threshold) || !d.is_finite_value() {
            return SpdCheck {
                is_spd: false,
                pivots: diag,
                failed_pivot: Some(j + 1),
                factor: None,
            };
        }
        for i in j + 1..n {
            let mut s = m.get(i, j).clone();
            for k in 0..j {
                s -= lower[i * n + k].clone() * &lower[j * n + k] * &diag[k];
            }
            lower[i * n + j] = s / &d;
        }
        diag.push(d);
    }
    SpdCheck {
        is_spd: true,
        pivots: diag.clone(),
        failed_pivot: None,
        factor: Some(LdlFactor { n, lower, diag }),
    }
}

/// Solves `M y = b` for symmetric positive definite `M`.
pub fn solve_spd<T: Scalar>(m: &SymMatrix<T>, b: &Vector<T>) -> Result<Vector<T>> {
    if b.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: b.len(),
        });
    }
    let check = cholesky_spd_check(m);
    match check.factor {
        Some(f) => f.solve(b),
        None => Err(Error::NotPositiveDefinite {
            pivot: check.failed_pivot.unwrap_or(1),
        }),
    }
}

/// A solution of a consistent, possibly singular, symmetric system.
#[derive(Debug, Clone)]
pub struct ConsistentSolution<T> {
    pub solution: Vector<T>,
    pub rank: usize,
}

/// Solves a consistent symmetric system `A y = b` that may be singular.
///
/// Gaussian elimination with complete pivoting; columns whose pivot vanishes
/// are treated as free and set to zero, so for singular `A` the returned `y`
/// is one particular solution. On the float backend the matrix is first
/// equilibrated by `diag(|Aᵢᵢ|)^{-1/2}` (unit scale where the diagonal is
/// zero), and pivots below `100 · n · ε · max|A|` count as zero. Fails with
/// [`Error::Inconsistent`] if the eliminated right-hand side is not zero in
/// the dependent rows.
pub fn solve_symmetric_consistent<T: Scalar>(a: &SymMatrix<T>, b: &Vector<T>) -> Result<ConsistentSolution<T>> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    let scale: Vec<T> = (0..n)
        .map(|i| {
            let d = a.get(i, i).abs();
            if T::EXACT || d.is_zero() {
                T::one()
            } else {
                T::one() / d.sqrt()
            }
        })
        .collect();
    let mut m: Vec<Vec<T>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| a.get(i, j).clone() * &scale[i] * &scale[j])
                .collect()
        })
        .collect();
    let mut rhs: Vec<T> = (0..n).map(|i| b[i].clone() * &scale[i]).collect();
    let zero_tol = if T::EXACT {
        T::zero()
    } else {
        let mx = max_abs(m.iter().flatten().cloned());
        T::from_i64(100 * n as i64) * T::epsilon() * mx
    };
    let rhs_scale = max_abs(rhs.iter().cloned());

    // col_perm[c] = original column held at position c
    let mut col_perm: Vec<usize> = (0..n).collect();
    let mut rank = 0;
    for step in 0..n {
        let mut best = (step, step);
        let mut best_val = T::zero();
        for (i, row) in m.iter().enumerate().skip(step) {
            for (j, v) in row.iter().enumerate().skip(step) {
                let av = v.abs();
                if av > best_val {
                    best_val = av;
                    best = (i, j);
                }
            }
        }
        if !(best_val > zero_tol) {
            break;
        }
        m.swap(step, best.0);
        rhs.swap(step, best.0);
        if best.1 != step {
            for row in m.iter_mut() {
                row.swap(step, best.1);
            }
            col_perm.swap(step, best.1);
        }
        let pivot = m[step][step].clone();
        for i in step + 1..n {
            if m[i][step].is_zero() {
                continue;
            }
            let f = m[i][step].clone() / &pivot;
            for j in step..n {
                let t = f.clone() * &m[step][j];
                m[i][j] -= t;
            }
            let t = f * &rhs[step];
            rhs[i] -= t;
        }
        rank += 1;
    }
    let consistency_tol = if T::EXACT {
        T::zero()
    } else {
        T::from_i64(1000 * n as i64) * T::epsilon() * (rhs_scale + T::one())
    };
    if rhs[rank..].iter().any(|r| r.abs() > consistency_tol) {
        return Err(Error::Inconsistent);
    }
    let mut permuted = vec![T::zero(); n];
    for i in (0..rank).rev() {
        let mut s = rhs[i].clone();
        for j in i + 1..rank {
            s -= m[i][j].clone() * &permuted[j];
        }
        permuted[i] = s / &m[i][i];
    }
    let mut y = vec![T::zero(); n];
    for (pos, &orig) in col_perm.iter().enumerate() {
        y[orig] = permuted[pos].clone() * &scale[orig];
    }
    Ok(ConsistentSolution {
        solution: Vector(y),
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    type Q = BigRational;

    fn q(p: i64, d: i64) -> Q {
        Q::new(p.into(), d.into())
    }

    fn qv(entries: &[(i64, i64)]) -> Vector<Q> {
        Vector::new(entries.iter().map(|&(p, d)| q(p, d)).collect()).unwrap()
    }

    fn qm(rows: &[&[i64]]) -> SymMatrix<Q> {
        SymMatrix::from_rows(rows.iter().map(|r| r.iter().map(|&v| q(v, 1)).collect()).collect()).unwrap()
    }

    #[test]
    fn dot_examples() {
        let a = Vector::<Q>::from_i64(&[1, 2]);
        let b = Vector::<Q>::from_i64(&[3, 4]);
        assert_eq!(a.dot(&b).unwrap(), q(11, 1));
        let z = Vector::<Q>::zeros(3);
        assert_eq!(z.dot(&z).unwrap(), q(0, 1));
        let g0 = Vector::<Q>::from_i64(&[-1, -2]);
        assert_eq!(g0.dot(&g0).unwrap(), q(5, 1));
    }

    #[test]
    fn dot_dimension_mismatch() {
        let a = Vector::<f64>::from_i64(&[1, 2]);
        let b = Vector::<f64>::from_i64(&[1, 2, 3]);
        assert!(matches!(a.dot(&b), Err(Error::DimensionMismatch { expected: 2, found: 3 })));
    }

    #[test]
    fn empty_vector_rejected() {
        assert!(matches!(Vector::<f64>::new(vec![]), Err(Error::Empty)));
    }

    #[test]
    fn mat_vec_examples() {
        let h = qm(&[&[1, 0], &[0, 2]]);
        let x = qv(&[(5, 9), (10, 9)]);
        assert_eq!(h.mat_vec(&x).unwrap(), qv(&[(5, 9), (20, 9)]));
        let id = SymMatrix::<Q>::identity(3);
        let v = Vector::<Q>::from_i64(&[4, -5, 6]);
        assert_eq!(id.mat_vec(&v).unwrap(), v);
        assert!(h.mat_vec(&Vector::zeros(2)).unwrap().is_zero());
        assert!(h.mat_vec(&Vector::zeros(3)).is_err());
    }

    #[test]
    fn asymmetric_rejected() {
        let err = SymMatrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::Asymmetric { row: 1, col: 0 }));
        let err = SymMatrix::from_rows(vec![vec![1.0, 2.0], vec![3.0]]).unwrap_err();
        assert!(matches!(err, Error::NotSquare { row: 1, .. }));
    }

    #[test]
    fn spd_check_examples() {
        assert!(cholesky_spd_check(&qm(&[&[1, 0], &[0, 2]])).is_spd);
        let neg = cholesky_spd_check(&qm(&[&[1, 0], &[0, -1]]));
        assert!(!neg.is_spd);
        assert_eq!(neg.failed_pivot, Some(2));
        let c = cholesky_spd_check(&qm(&[&[2, 1], &[1, 2]]));
        assert!(c.is_spd);
        assert_eq!(c.pivots, vec![q(2, 1), q(3, 2)]);
        let f = c.factor.unwrap();
        assert_eq!(f.reconstruct(), qm(&[&[2, 1], &[1, 2]]));
        assert_eq!(f.l(1, 0), q(1, 2));
    }

    #[test]
    fn float_threshold_rejects_singular_integer_matrix() {
        let m = SymMatrix::from_rows(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(!cholesky_spd_check(&m).is_spd);
        let m = SymMatrix::from_rows(vec![
            vec![2.0, -1.0, -1.0],
            vec![-1.0, 2.0, -1.0],
            vec![-1.0, -1.0, 2.0],
        ])
        .unwrap();
        let c = cholesky_spd_check(&m);
        assert!(!c.is_spd);
        assert_eq!(c.failed_pivot, Some(3));
    }

    #[test]
    fn solve_spd_examples() {
        let y = solve_spd(&qm(&[&[1, 0], &[0, 2]]), &Vector::from_i64(&[1, 2])).unwrap();
        assert_eq!(y, Vector::from_i64(&[1, 1]));
        let y = solve_spd(&qm(&[&[2, 1], &[1, 2]]), &Vector::from_i64(&[3, 3])).unwrap();
        assert_eq!(y, Vector::from_i64(&[1, 1]));
        let y = solve_spd(&qm(&[&[2, 1], &[1, 2]]), &Vector::zeros(2)).unwrap();
        assert!(y.is_zero());
        assert!(matches!(
            solve_spd(&qm(&[&[1, 0], &[0, -1]]), &Vector::from_i64(&[1, 1])),
            Err(Error::NotPositiveDefinite { pivot: 2 })
        ));
    }

    #[test]
    fn consistent_solver_handles_rank_deficiency() {
        // [[1,1],[1,1]] y = (2,2): rank 1, any y with y0 + y1 = 2.
        let a = qm(&[&[1, 1], &[1, 1]]);
        let s = solve_symmetric_consistent(&a, &Vector::from_i64(&[2, 2])).unwrap();
        assert_eq!(s.rank, 1);
        assert_eq!(a.mat_vec(&s.solution).unwrap(), Vector::from_i64(&[2, 2]));
        assert!(matches!(
            solve_symmetric_consistent(&a, &Vector::from_i64(&[1, 2])),
            Err(Error::Inconsistent)
        ));

        let af = SymMatrix::from_rows(vec![vec![4.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let s = solve_symmetric_consistent(&af, &Vector::new(vec![6.0, 3.0]).unwrap()).unwrap();
        assert_eq!(s.rank, 1);
        let r = af.mat_vec(&s.solution).unwrap();
        assert!((r[0] - 6.0).abs() < 1e-12 && (r[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn consistent_solver_handles_indefinite_kkt() {
        // [[2,0,1],[0,2,1],[1,1,0]]: minimise |a|^2 s.t. a0 + a1 = 1.
        let a = qm(&[&[2, 0, 1], &[0, 2, 1], &[1, 1, 0]]);
        let s = solve_symmetric_consistent(&a, &Vector::from_i64(&[0, 0, 1])).unwrap();
        assert_eq!(s.rank, 3);
        assert_eq!(s.solution, qv(&[(1, 2), (1, 2), (-1, 1)]));
    }
}

//! The strictly convex quadratic `q(x) = ½ xᵀHx + cᵀx` with a start point.

use crate::error::{Error, Result};
use crate::linalg::{cholesky_spd_check, LdlFactor, SymMatrix, Vector};
use crate::scalar::Scalar;

/// Default central-difference step for [`QuadraticProblem::gradient_fd_check`].
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// `(H, c, x0)` with `H` symmetric positive definite, validated on
/// construction.
#[derive(Debug, Clone)]
pub struct QuadraticProblem<T> {
    id: String,
    h: SymMatrix<T>,
    c: Vector<T>,
    x0: Vector<T>,
    factor: LdlFactor<T>,
}

impl<T: Scalar> QuadraticProblem<T> {
    pub fn new(id: impl Into<String>, h: SymMatrix<T>, c: Vector<T>, x0: Vector<T>) -> Result<Self> {
        let n = h.dim();
        for v in [&c, &x0] {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: v.len(),
                });
            }
        }
        let check = cholesky_spd_check(&h);
        let factor = check.factor.ok_or(Error::NotPositiveDefinite {
            pivot: check.failed_pivot.unwrap_or(1),
        })?;
        Ok(QuadraticProblem {
            id: id.into(),
            h,
            c,
            x0,
            factor,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn hessian(&self) -> &SymMatrix<T> {
        &self.h
    }

    pub fn linear_term(&self) -> &Vector<T> {
        &self.c
    }

    pub fn start(&self) -> &Vector<T> {
        &self.x0
    }

    /// The same `(H, c)` started from another point.
    pub fn with_start(&self, x0: Vector<T>) -> Result<Self> {
        if x0.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x0.len(),
            });
        }
        Ok(QuadraticProblem { x0, ..self.clone() })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    fn check_dim(&self, x: &Vector<T>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &Vector<T>) -> Result<T> {
        self.check_dim(x)?;
        let hx = self.h.mat_vec_unchecked(x);
        Ok(T::half() * x.dot_unchecked(&hx) + self.c.dot_unchecked(x))
    }

    /// `∇q(x) = Hx + c`
    pub fn gradient(&self, x: &Vector<T>) -> Result<Vector<T>> {
        self.check_dim(x)?;
        Ok(self.h.mat_vec_unchecked(x).add_unchecked(&self.c))
    }

    /// `x* = −H⁻¹c`
    pub fn exact_minimizer(&self) -> Result<Vector<T>> {
        Ok(self.factor.solve(&self.c)?.neg())
    }

    /// The point whose gradient is `g`, i.e. `H⁻¹(g − c)`.
    pub fn point_of_gradient(&self, g: &Vector<T>) -> Result<Vector<T>> {
        self.check_dim(g)?;
        self.factor.solve(&g.sub_unchecked(&self.c))
    }

    /// Largest deviation between the analytic gradient and a central
    /// difference with step `h`.
    pub fn gradient_fd_check(&self, x: &Vector<T>, h: &T) -> Result<T> {
        self.check_dim(x)?;
        if !(*h > T::zero()) {
            return Err(Error::InvalidSpec("finite-difference step must be positive".into()));
        }
        let g = self.gradient(x)?;
        let two_h = h.clone() + h;
        let mut worst = T::zero();
        for i in 0..self.dim() {
            let e = Vector::unit(self.dim(), i);
            let fwd = self.evaluate(&x.axpy(h, &e))?;
            let bwd = self.evaluate(&x.axpy(&-h.clone(), &e))?;
            let dev = ((fwd - bwd) / &two_h - &g[i]).abs();
            if dev > worst {
                worst = dev;
            }
        }
        Ok(worst)
    }
}

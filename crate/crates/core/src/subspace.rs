//! Brute-force minimization of `q` over `x0 + span{s_0, …, s_{k−1}}`.
//!
//! This is the independent oracle for the CG iterates: it never runs an
//! iteration, it forms the reduced system `(SᵀHS) v = −Sᵀ∇q(x0)` and solves
//! it by pivoted elimination.

use crate::cg::CgTrace;
use crate::error::{Error, Result};
use crate::linalg::{solve_symmetric_consistent, SymMatrix, Vector};
use crate::quadratic::QuadraticProblem;
use crate::scalar::Scalar;

/// An affine set `x0 + span{s_j}`. Spanning vectors may be dependent.
#[derive(Debug, Clone)]
pub struct SpanBasis<T> {
    base_point: Vector<T>,
    spanning: Vec<Vector<T>>,
}

impl<T: Scalar> SpanBasis<T> {
    pub fn new(base_point: Vector<T>, spanning: Vec<Vector<T>>) -> Result<Self> {
        let n = base_point.len();
        for s in &spanning {
            if s.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: s.len(),
                });
            }
        }
        Ok(SpanBasis { base_point, spanning })
    }

    pub fn base_point(&self) -> &Vector<T> {
        &self.base_point
    }

    pub fn spanning_vectors(&self) -> &[Vector<T>] {
        &self.spanning
    }

    pub fn k(&self) -> usize {
        self.spanning.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceSolution<T> {
    /// Coordinates `v*`; not unique when the spanning set is dependent.
    pub coordinates: Vec<T>,
    pub point: Vector<T>,
    pub objective_value: T,
    pub rank: usize,
}

/// Minimizer of `q` over the affine set described by `basis`.
pub fn minimize_on_affine_span<T: Scalar>(
    problem: &QuadraticProblem<T>,
    basis: &SpanBasis<T>,
) -> Result<SubspaceSolution<T>> {
    let n = problem.dim();
    if basis.base_point.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: basis.base_point.len(),
        });
    }
    let k = basis.k();
    if k == 0 {
        return Ok(SubspaceSolution {
            coordinates: Vec::new(),
            objective_value: problem.evaluate(&basis.base_point)?,
            point: basis.base_point.clone(),
            rank: 0,
        });
    }
    let h = problem.hessian();
    let hs: Vec<Vector<T>> = basis.spanning.iter().map(|s| h.mat_vec_unchecked(s)).collect();
    let reduced = SymMatrix::from_lower_fn(k, |i, j| basis.spanning[i].dot_unchecked(&hs[j]));
    let g0 = problem.gradient(&basis.base_point)?;
    let rhs = Vector::new(basis.spanning.iter().map(|s| -s.dot_unchecked(&g0)).collect())?;
    let solved = solve_symmetric_consistent(&reduced, &rhs)?;
    let coordinates = solved.solution.into_inner();
    let point = basis
        .base_point
        .add_unchecked(&Vector::linear_combination(&coordinates, &basis.spanning)?);
    Ok(SubspaceSolution {
        objective_value: problem.evaluate(&point)?,
        coordinates,
        point,
        rank: solved.rank,
    })
}

/// Oracle minimizer over `x0 + span{g_0, …, g_{k−1}}` for every `k = 1..=r`,
/// taking the gradients from the trace.
pub fn oracle_points<T: Scalar>(problem: &QuadraticProblem<T>, trace: &CgTrace<T>) -> Result<Vec<SubspaceSolution<T>>> {
    check_trace(problem, trace)?;
    let gradients = trace.gradients();
    (1..trace.records.len())
        .map(|k| {
            let basis = SpanBasis::new(problem.start().clone(), gradients[..k].to_vec())?;
            minimize_on_affine_span(problem, &basis)
        })
        .collect()
}

/// `‖x_k(trace) − x_k(oracle)‖` for `k = 1..=r`.
pub fn verify_against_trace<T: Scalar>(problem: &QuadraticProblem<T>, trace: &CgTrace<T>) -> Result<Vec<T>> {
    let oracle = oracle_points(problem, trace)?;
    Ok(oracle
        .iter()
        .zip(&trace.records[1..])
        .map(|(sol, rec)| rec.x.sub_unchecked(&sol.point).norm())
        .collect())
}

pub(crate) fn check_trace<T: Scalar>(problem: &QuadraticProblem<T>, trace: &CgTrace<T>) -> Result<()> {
    if trace.n != problem.dim() {
        return Err(Error::TraceMismatch(format!(
            "trace has n = {}, problem has n = {}",
            trace.n,
            problem.dim()
        )));
    }
    let first = trace
        .records
        .first()
        .ok_or_else(|| Error::TraceMismatch("trace has no records".into()))?;
    if &first.x != problem.start() {
        return Err(Error::TraceMismatch("trace does not start at the problem's x0".into()));
    }
    if trace.records.iter().any(|r| r.x.len() != trace.n || r.g.len() != trace.n) {
        return Err(Error::TraceMismatch("record dimension differs from n".into()));
    }
    Ok(())
}

/// Squared distance from `target` to `span{vectors}` (least-squares
/// membership residual); zero iff `target` lies in the span.
pub fn span_residual<T: Scalar>(vectors: &[Vector<T>], target: &Vector<T>) -> Result<T> {
    if vectors.is_empty() {
        return Ok(target.norm_sq());
    }
    let m = vectors.len();
    for v in vectors {
        if v.len() != target.len() {
            return Err(Error::DimensionMismatch {
                expected: target.len(),
                found: v.len(),
            });
        }
    }
    let gram = SymMatrix::from_lower_fn(m, |i, j| vectors[i].dot_unchecked(&vectors[j]));
    let rhs = Vector::new(vectors.iter().map(|v| v.dot_unchecked(target)).collect())?;
    let w = solve_symmetric_consistent(&gram, &rhs)?.solution;
    let fit = Vector::linear_combination(w.as_slice(), vectors)?;
    Ok(target.sub_unchecked(&fit).norm_sq())
}

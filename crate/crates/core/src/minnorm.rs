//! The minimum-norm vector `ĝ_k` of the affine hull of `g_0, …, g_k`.
//!
//! Two independent routes are provided: the closed form that is valid only
//! for mutually orthogonal gradients, and a KKT projection that works for any
//! finite set of vectors. Their agreement on CG gradient histories is the
//! central check of this module.

use crate::error::{Error, Result};
use crate::linalg::{solve_symmetric_consistent, SymMatrix, Vector};
use crate::quadratic::QuadraticProblem;
use crate::scalar::{relative, Scalar};

/// Default float gate on `max |gᵢᵀgⱼ| / (‖gᵢ‖‖gⱼ‖)` for the closed form.
pub const DEFAULT_ORTHOGONALITY_GATE: f64 = 1e-6;

/// Weights `αᵢ` with `Σ αᵢ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineCombination<T>(Vec<T>);

impl<T: Scalar> AffineCombination<T> {
    /// Accepts weights summing to one: exactly on the rational backend, within
    /// `ε · (k+1) · max(1, Σ|αᵢ|)` in floating point.
    pub fn new(weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty);
        }
        let mut sum = T::zero();
        let mut abs_sum = T::zero();
        for w in &weights {
            sum += w;
            abs_sum += w.abs();
        }
        let slack = if T::EXACT {
            T::zero()
        } else {
            let mag = if abs_sum > T::one() { abs_sum } else { T::one() };
            T::epsilon() * T::from_i64(weights.len() as i64) * mag
        };
        if (sum.clone() - T::one()).abs() > slack {
            return Err(Error::NotAffine { sum: sum.to_literal() });
        }
        Ok(AffineCombination(weights))
    }

    pub fn vertex(len: usize, j: usize) -> Self {
        let mut w = vec![T::zero(); len];
        w[j] = T::one();
        AffineCombination(w)
    }

    pub fn weights(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `Σ αᵢ vᵢ`
    pub fn apply(&self, vectors: &[Vector<T>]) -> Result<Vector<T>> {
        Vector::linear_combination(&self.0, vectors)
    }
}

/// `ĝ_k` together with its affine weights and `ĝ_kᵀĝ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinNormResult<T> {
    pub ghat: Vector<T>,
    pub weights: AffineCombination<T>,
    pub norm_sq: T,
}

fn check_nonempty<T: Scalar>(gradients: &[Vector<T>]) -> Result<usize> {
    let n = gradients.first().ok_or(Error::Empty)?.len();
    for g in gradients {
        if g.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: g.len(),
            });
        }
    }
    Ok(n)
}

/// Largest relative inner product `|gᵢᵀgⱼ| / (‖gᵢ‖‖gⱼ‖)` over `i ≠ j`, with
/// the pair that attains it.
pub fn max_relative_coherence<T: Scalar>(vectors: &[Vector<T>]) -> (T, Option<(usize, usize)>) {
    let norms: Vec<T> = vectors.iter().map(|v| v.norm()).collect();
    let mut worst = T::zero();
    let mut at = None;
    for i in 0..vectors.len() {
        for j in 0..i {
            let r = relative(vectors[i].dot_unchecked(&vectors[j]), norms[i].clone() * &norms[j]);
            if r > worst {
                worst = r;
                at = Some((j, i));
            }
        }
    }
    (worst, at)
}

/// Closed form for mutually orthogonal, nonzero gradients:
/// `ĝ = (Σⱼ 1/gⱼᵀgⱼ)⁻¹ Σᵢ gᵢ/(gᵢᵀgᵢ)`.
pub fn min_norm_closed_form<T: Scalar>(gradients: &[Vector<T>]) -> Result<MinNormResult<T>> {
    min_norm_closed_form_with(gradients, DEFAULT_ORTHOGONALITY_GATE)
}

/// As [`min_norm_closed_form`] with a custom float orthogonality gate. On the
/// exact backend the gate is zero: inputs must be exactly orthogonal.
pub fn min_norm_closed_form_with<T: Scalar>(gradients: &[Vector<T>], gate: f64) -> Result<MinNormResult<T>> {
    check_nonempty(gradients)?;
    let (coherence, at) = max_relative_coherence(gradients);
    let gate = if T::EXACT {
        T::zero()
    } else {
        T::from_f64(gate).unwrap_or_else(T::zero)
    };
    if coherence > gate {
        let (i, j) = at.unwrap_or((0, 0));
        return Err(Error::NotOrthogonal {
            i,
            j,
            measured: coherence.to_f64(),
        });
    }
    closed_form_unchecked(gradients)
}

/// The closed-form expression evaluated without checking orthogonality.
/// Used by the verification suite to measure how far a float history departs
/// from the exact-arithmetic identity.
pub fn closed_form_unchecked<T: Scalar>(gradients: &[Vector<T>]) -> Result<MinNormResult<T>> {
    check_nonempty(gradients)?;
    let mut inverse_sq: Vec<T> = Vec::with_capacity(gradients.len());
    for (index, g) in gradients.iter().enumerate() {
        let gg = g.norm_sq();
        if gg.is_zero() {
            return Err(Error::ZeroGradient { index });
        }
        inverse_sq.push(T::one() / gg);
    }
    let mut total = T::zero();
    for w in &inverse_sq {
        total += w;
    }
    let weights: Vec<T> = inverse_sq.into_iter().map(|w| w / &total).collect();
    let ghat = Vector::linear_combination(&weights, gradients)?;
    let norm_sq = ghat.norm_sq();
    Ok(MinNormResult {
        ghat,
        weights: AffineCombination(weights),
        norm_sq,
    })
}

/// Least-norm point of the affine hull of arbitrary vectors.
///
/// Solves `min ‖Σ αᵢ gᵢ‖²` subject to `Σ αᵢ = 1` through the KKT system
/// `[G 1; 1ᵀ 0] [α; λ] = [0; 1]` with `G` the Gram matrix. The point is unique
/// even when `G` is singular; the weights then are one particular choice.
pub fn projection_oracle<T: Scalar>(gradients: &[Vector<T>]) -> Result<MinNormResult<T>> {
    check_nonempty(gradients)?;
    let m = gradients.len();
    let kkt = SymMatrix::from_lower_fn(m + 1, |i, j| {
        if i == m && j == m {
            T::zero()
        } else if i == m || j == m {
            T::one()
        } else {
            gradients[i].dot_unchecked(&gradients[j])
        }
    });
    let mut rhs = vec![T::zero(); m + 1];
    rhs[m] = T::one();
    let solved = solve_symmetric_consistent(&kkt, &Vector::new(rhs)?)?;
    let weights: Vec<T> = solved.solution.as_slice()[..m].to_vec();
    let ghat = Vector::linear_combination(&weights, gradients)?;
    let norm_sq = ghat.norm_sq();
    Ok(MinNormResult {
        ghat,
        weights: AffineCombination(weights),
        norm_sq,
    })
}

/// `rᵢ = ĝᵀ(gᵢ − ĝ)` for every input vector.
pub fn characterization_residuals<T: Scalar>(result: &MinNormResult<T>, gradients: &[Vector<T>]) -> Result<Vec<T>> {
    gradients
        .iter()
        .map(|g| Ok(result.ghat.dot(g)? - &result.norm_sq))
        .collect()
}

/// `‖p + (g_kᵀg_k / ĝᵀĝ) ĝ‖`, zero when `p` is the CG direction of the
/// iteration that produced `g_k` and `ĝ`.
pub fn scaling_relation<T: Scalar>(p_cg: &Vector<T>, g_k: &Vector<T>, result: &MinNormResult<T>) -> Result<T> {
    if result.norm_sq.is_zero() {
        return Err(Error::ZeroDivisor("minimum-norm gradient is zero"));
    }
    let ratio = g_k.dot(g_k)? / &result.norm_sq;
    Ok(p_cg.axpy(&ratio, &result.ghat).norm())
}

/// A point of the iterates' affine hull and the gradient there.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePoint<T> {
    pub x: Vector<T>,
    pub g: Vector<T>,
    /// `‖∇q(x) − Σ αᵢ ∇q(xᵢ)‖`; zero on the exact backend.
    pub correspondence_residual: T,
}

/// `x = Σ αᵢ xᵢ` and `g = ∇q(x)`, which equals `Σ αᵢ ∇q(xᵢ)` because the
/// weights sum to one.
pub fn affine_point_of_gradient_combination<T: Scalar>(
    problem: &QuadraticProblem<T>,
    iterates: &[Vector<T>],
    weights: &AffineCombination<T>,
) -> Result<AffinePoint<T>> {
    let x = weights.apply(iterates)?;
    let g = problem.gradient(&x)?;
    let gradients = iterates
        .iter()
        .map(|xi| problem.gradient(xi))
        .collect::<Result<Vec<_>>>()?;
    let combined = weights.apply(&gradients)?;
    let correspondence_residual = g.sub_unchecked(&combined).norm();
    if T::EXACT && !correspondence_residual.is_zero() {
        return Err(Error::Invariant("gradient of the affine combination differs from the combined gradients"));
    }
    Ok(AffinePoint {
        x,
        g,
        correspondence_residual,
    })
}

/// Direction of the method of shortest residuals, `−ĝ_k`.
pub fn shortest_residuals_direction<T: Scalar>(gradients: &[Vector<T>]) -> Result<Vector<T>> {
    Ok(min_norm_closed_form(gradients)?.ghat.neg())
}

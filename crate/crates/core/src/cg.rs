//! Conjugate gradients with full iteration tracing.
//!
//! The direction can be produced by the classical recursion, by the explicit
//! sum over all gradients observed so far, or as the negative minimum-norm
//! gradient (method of shortest residuals). All three give the same iterates
//! under exact line search; the trace keeps everything needed to check that
//! offline.

use std::fmt;
use std::str::FromStr;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::minnorm::closed_form_unchecked;
use crate::quadratic::QuadraticProblem;
use crate::scalar::{max_of, Backend, Scalar};

/// Default float stopping tolerance on `‖g_k‖ / max(‖g_0‖, 1)`.
pub const DEFAULT_TOL: f64 = 1e-10;

/// How the search direction is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionMode {
    /// `p_k = −g_k + (g_kᵀg_k / g_{k−1}ᵀg_{k−1}) p_{k−1}`
    Recursive,
    /// `p_k = c_k Σᵢ gᵢ / (gᵢᵀgᵢ)`
    GradientSum,
    /// `p_k = −ĝ_k`
    ShortestResiduals,
}

impl DirectionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DirectionMode::Recursive => "recursive",
            DirectionMode::GradientSum => "gradient-sum",
            DirectionMode::ShortestResiduals => "shortest-residuals",
        }
    }
}

impl fmt::Display for DirectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DirectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recursive" => Ok(DirectionMode::Recursive),
            "gradient-sum" | "gradient_sum" => Ok(DirectionMode::GradientSum),
            "shortest-residuals" | "shortest_residuals" => Ok(DirectionMode::ShortestResiduals),
            other => Err(Error::InvalidSpec(format!("unknown direction mode {other:?}"))),
        }
    }
}

/// Tag of a [`DirectionScaling`], as stored in traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    Cg,
    Unit,
    Custom,
}

impl FromStr for ScalingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cg" | "cg_standard" => Ok(ScalingMode::Cg),
            "unit" => Ok(ScalingMode::Unit),
            "custom" => Ok(ScalingMode::Custom),
            other => Err(Error::InvalidSpec(format!("unknown scaling mode {other:?}"))),
        }
    }
}

/// Choice of the common value `c_k = p_kᵀgᵢ (i ≤ k)`.
///
/// Custom values are normalised to `−|v|` so that `θ_k > 0`; the iterates do
/// not depend on the sign. A custom list shorter than the run reuses its last
/// value.
#[derive(Debug, Clone, PartialEq)]
pub enum DirectionScaling<T> {
    /// `c_k = −g_kᵀg_k`, the conjugate gradient scaling.
    CgStandard,
    /// `c_k = −1`
    Unit,
    Custom(Vec<T>),
}

impl<T: Scalar> DirectionScaling<T> {
    pub fn custom(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSpec("custom scaling needs at least one value".into()));
        }
        if values.iter().any(Zero::is_zero) {
            return Err(Error::InvalidSpec("custom scaling values must be nonzero".into()));
        }
        Ok(DirectionScaling::Custom(values.into_iter().map(|v| -v.abs()).collect()))
    }

    pub fn mode(&self) -> ScalingMode {
        match self {
            DirectionScaling::CgStandard => ScalingMode::Cg,
            DirectionScaling::Unit => ScalingMode::Unit,
            DirectionScaling::Custom(_) => ScalingMode::Custom,
        }
    }

    /// `c_k` for iteration `k` whose gradient has squared norm `grad_norm_sq`.
    pub fn constant(&self, k: usize, grad_norm_sq: &T) -> T {
        match self {
            DirectionScaling::CgStandard => -grad_norm_sq.clone(),
            DirectionScaling::Unit => -T::one(),
            DirectionScaling::Custom(values) => values[k.min(values.len() - 1)].clone(),
        }
    }
}

/// Options for [`run_cg`].
#[derive(Debug, Clone)]
pub struct CgOptions<T> {
    /// Float stopping tolerance; ignored on the exact backend, which stops
    /// only at an exactly zero gradient.
    pub tol: T,
    /// Defaults to `n + 5` in floating point and `n` on the exact backend.
    pub max_iter: Option<usize>,
    pub direction: DirectionMode,
    pub scaling: DirectionScaling<T>,
}

impl<T: Scalar> Default for CgOptions<T> {
    fn default() -> Self {
        CgOptions {
            tol: T::from_f64(DEFAULT_TOL).unwrap_or_else(T::zero),
            max_iter: None,
            direction: DirectionMode::Recursive,
            scaling: DirectionScaling::CgStandard,
        }
    }
}

impl<T: Scalar> CgOptions<T> {
    pub fn with_direction(mut self, direction: DirectionMode) -> Self {
        self.direction = direction;
        self
    }

    pub fn with_scaling(mut self, scaling: DirectionScaling<T>) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn effective_max_iter(&self, n: usize) -> usize {
        self.max_iter.unwrap_or(if T::EXACT { n } else { n + 5 })
    }
}

/// State at iteration `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateRecord<T> {
    pub k: usize,
    pub x: Vector<T>,
    pub g: Vector<T>,
    /// Absent on the terminal record.
    pub p: Option<Vector<T>>,
    pub theta: Option<T>,
    /// `g_kᵀg_k / g_{k−1}ᵀg_{k−1}`, absent at `k = 0`.
    pub beta: Option<T>,
    /// The `c_k` used to form `p`.
    pub scaling_constant: Option<T>,
    pub grad_norm_sq: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    GradientZero,
    ToleranceMet,
    MaxIter,
    Breakdown,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::GradientZero => "gradient_zero",
            TerminationReason::ToleranceMet => "tolerance_met",
            TerminationReason::MaxIter => "max_iter",
            TerminationReason::Breakdown => "breakdown",
        }
    }
}

/// A complete run: records `k = 0..=r`, the last one without a direction
/// unless the run ended in breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct CgTrace<T> {
    pub problem_id: String,
    pub backend: Backend,
    pub n: usize,
    pub direction: DirectionMode,
    pub scaling: ScalingMode,
    pub records: Vec<IterateRecord<T>>,
    pub termination_index: usize,
    pub termination_reason: TerminationReason,
    pub diagnostic: Option<String>,
}

impl<T: Scalar> CgTrace<T> {
    /// The termination index `r`.
    pub fn r(&self) -> usize {
        self.termination_index
    }

    pub fn gradients(&self) -> Vec<Vector<T>> {
        self.records.iter().map(|r| r.g.clone()).collect()
    }

    pub fn iterates(&self) -> Vec<Vector<T>> {
        self.records.iter().map(|r| r.x.clone()).collect()
    }

    /// Records that carry a direction and a step, i.e. completed iterations.
    pub fn steps(&self) -> impl Iterator<Item = (&IterateRecord<T>, &Vector<T>, &T)> {
        self.records
            .iter()
            .filter_map(|r| Some((r, r.p.as_ref()?, r.theta.as_ref()?)))
    }

    /// True when the final gradient counts as zero (exactly, or by the float
    /// stopping test).
    pub fn converged(&self) -> bool {
        matches!(
            self.termination_reason,
            TerminationReason::GradientZero | TerminationReason::ToleranceMet
        )
    }

    /// Gradients regarded as nonzero: `g_0 … g_{r−1}`, plus `g_r` when the
    /// run stopped without converging.
    pub fn nonzero_gradient_count(&self) -> usize {
        if self.converged() {
            self.termination_index
        } else {
            self.records.len()
        }
    }
}

/// `−g_k + (g_kᵀg_k / g_prevᵀg_prev) p_prev`
pub fn direction_recursive<T: Scalar>(g_k: &Vector<T>, g_prev: &Vector<T>, p_prev: &Vector<T>) -> Result<Vector<T>> {
    let prev = g_prev.dot(g_prev)?;
    if prev.is_zero() {
        return Err(Error::ZeroGradient { index: 0 });
    }
    let beta = g_k.dot(g_k)? / prev;
    if p_prev.len() != g_k.len() {
        return Err(Error::DimensionMismatch {
            expected: g_k.len(),
            found: p_prev.len(),
        });
    }
    Ok(g_k.neg().axpy(&beta, p_prev))
}

/// The recursion for a general scaling:
/// `p_k = (c_k / g_kᵀg_k) g_k + (c_k / c_{k−1}) p_{k−1}`.
pub fn direction_recursive_scaled<T: Scalar>(
    g_k: &Vector<T>,
    c_k: &T,
    p_prev: &Vector<T>,
    c_prev: &T,
) -> Result<Vector<T>> {
    let gg = g_k.dot(g_k)?;
    if gg.is_zero() {
        return Err(Error::ZeroGradient { index: 0 });
    }
    if c_prev.is_zero() {
        return Err(Error::ZeroDivisor("previous scaling constant"));
    }
    if p_prev.len() != g_k.len() {
        return Err(Error::DimensionMismatch {
            expected: g_k.len(),
            found: p_prev.len(),
        });
    }
    Ok(g_k.scale(&(c_k.clone() / gg)).axpy(&(c_k.clone() / c_prev), p_prev))
}

/// `c_k Σᵢ gᵢ / (gᵢᵀgᵢ)` with `c_k` from `scaling` (`k` is the last index).
pub fn direction_gradient_sum<T: Scalar>(gradients: &[Vector<T>], scaling: &DirectionScaling<T>) -> Result<Vector<T>> {
    let last = gradients.last().ok_or(Error::Empty)?;
    let k = gradients.len() - 1;
    let c_k = scaling.constant(k, &last.dot(last)?);
    direction_gradient_sum_with_constant(gradients, &c_k)
}

pub(crate) fn direction_gradient_sum_with_constant<T: Scalar>(gradients: &[Vector<T>], c_k: &T) -> Result<Vector<T>> {
    let n = gradients.first().ok_or(Error::Empty)?.len();
    let mut acc = Vector::zeros(n);
    for (index, g) in gradients.iter().enumerate() {
        if g.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: g.len(),
            });
        }
        let gg = g.norm_sq();
        if gg.is_zero() {
            return Err(Error::ZeroGradient { index });
        }
        acc = acc.axpy(&(T::one() / gg), g);
    }
    Ok(acc.scale(c_k))
}

/// Exact line search step `θ = −g_kᵀp_k / (p_kᵀHp_k)`.
pub fn step_length<T: Scalar>(problem: &QuadraticProblem<T>, g_k: &Vector<T>, p_k: &Vector<T>) -> Result<T> {
    let hp = problem.hessian().mat_vec(p_k)?;
    let curvature = p_k.dot(&hp)?;
    if !(curvature > T::zero()) {
        return Err(Error::Breakdown {
            curvature: curvature.to_literal(),
        });
    }
    Ok(-g_k.dot(p_k)? / curvature)
}

fn converged<T: Scalar>(grad_norm_sq: &T, g0_norm_sq: &T, tol: &T) -> Option<TerminationReason> {
    if grad_norm_sq.is_zero() {
        return Some(TerminationReason::GradientZero);
    }
    if T::EXACT {
        return None;
    }
    // ‖g‖ ≤ tol · max(‖g_0‖, 1), compared in squares.
    let floor = max_of(g0_norm_sq.clone(), T::one());
    (*grad_norm_sq <= tol.clone() * tol * floor).then_some(TerminationReason::ToleranceMet)
}

/// Runs CG from the problem's start point, recomputing every gradient as
/// `Hx_k + c`.
pub fn run_cg<T: Scalar>(problem: &QuadraticProblem<T>, opts: &CgOptions<T>) -> Result<CgTrace<T>> {
    let n = problem.dim();
    let max_iter = opts.effective_max_iter(n);
    let mut records: Vec<IterateRecord<T>> = Vec::new();
    let mut gradients: Vec<Vector<T>> = Vec::new();
    let mut x = problem.start().clone();
    let mut g0_norm_sq = T::zero();
    let mut reason = TerminationReason::MaxIter;
    let mut diagnostic = None;

    for k in 0.. {
        let g = problem.gradient(&x)?;
        let gg = g.norm_sq();
        if k == 0 {
            g0_norm_sq = gg.clone();
        }
        let beta = records.last().map(|prev: &IterateRecord<T>| gg.clone() / &prev.grad_norm_sq);
        let mut record = IterateRecord {
            k,
            x: x.clone(),
            g: g.clone(),
            p: None,
            theta: None,
            beta,
            scaling_constant: None,
            grad_norm_sq: gg.clone(),
        };
        if let Some(r) = converged(&gg, &g0_norm_sq, &opts.tol) {
            reason = r;
            records.push(record);
            break;
        }
        if k >= max_iter {
            reason = TerminationReason::MaxIter;
            records.push(record);
            break;
        }
        gradients.push(g.clone());

        let (p, c_k) = match opts.direction {
            DirectionMode::ShortestResiduals => {
                let ghat = closed_form_unchecked(&gradients)?;
                (ghat.ghat.neg(), -ghat.norm_sq)
            }
            DirectionMode::GradientSum => {
                let c_k = opts.scaling.constant(k, &gg);
                (direction_gradient_sum_with_constant(&gradients, &c_k)?, c_k)
            }
            DirectionMode::Recursive => {
                let c_k = opts.scaling.constant(k, &gg);
                let p = match records.last() {
                    None => g.scale(&(c_k.clone() / &gg)),
                    Some(prev) => {
                        let p_prev = prev.p.as_ref().ok_or(Error::Invariant("missing previous direction"))?;
                        match &opts.scaling {
                            DirectionScaling::CgStandard => direction_recursive(&g, &prev.g, p_prev)?,
                            _ => {
                                let c_prev = prev
                                    .scaling_constant
                                    .as_ref()
                                    .ok_or(Error::Invariant("missing previous scaling constant"))?;
                                direction_recursive_scaled(&g, &c_k, p_prev, c_prev)?
                            }
                        }
                    }
                };
                (p, c_k)
            }
        };
        record.scaling_constant = Some(c_k);
        let theta = match step_length(problem, &g, &p) {
            Ok(theta) => theta,
            Err(Error::Breakdown { curvature }) => {
                reason = TerminationReason::Breakdown;
                diagnostic = Some(format!("iteration {k}: p^T H p = {curvature} is not positive"));
                record.p = Some(p);
                records.push(record);
                break;
            }
            Err(e) => return Err(e),
        };
        x = x.axpy(&theta, &p);
        record.p = Some(p);
        record.theta = Some(theta);
        records.push(record);
    }

    let termination_index = records.len() - 1;
    Ok(CgTrace {
        problem_id: problem.id().to_string(),
        backend: T::BACKEND,
        n,
        direction: opts.direction,
        scaling: match opts.direction {
            DirectionMode::ShortestResiduals => ScalingMode::Custom,
            _ => opts.scaling.mode(),
        },
        records,
        termination_index,
        termination_reason: reason,
        diagnostic,
    })
}

/// `G[k][i] = g_kᵀg_i` over the nonzero gradients `g_0 … g_{r−1}` of a
/// converged trace; off-diagonal entries vanish in exact arithmetic.
pub fn gradient_gram<T: Scalar>(trace: &CgTrace<T>) -> Vec<Vec<T>> {
    let gs: Vec<&Vector<T>> = trace.records[..trace.nonzero_gradient_count()]
        .iter()
        .map(|r| &r.g)
        .collect();
    gs.iter()
        .map(|gk| gs.iter().map(|gi| gk.dot_unchecked(gi)).collect())
        .collect()
}

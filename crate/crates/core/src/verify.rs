//! Every derivation condition of CG as a named, measured check over a trace.
//!
//! Checks are pure functions of `(problem, trace)`: they never re-run the
//! solver, so a saved trace can be re-verified offline. On the exact backend
//! every tolerance is zero and any nonzero residual is a bug. In floating
//! point the residuals are relative and compared against [`Tolerances`];
//! loss of orthogonality on ill-conditioned problems shows up as a failed
//! check, never as a masked one.

use std::collections::BTreeMap;

use crate::cg::{direction_recursive, direction_recursive_scaled, run_cg, CgOptions, CgTrace, DirectionMode, ScalingMode, TerminationReason};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::minnorm::{closed_form_unchecked, projection_oracle, scaling_relation};
use crate::quadratic::QuadraticProblem;
use crate::scalar::{max_of, relative, Backend, Scalar};
use crate::subspace::{check_trace, verify_against_trace};

pub const GRADIENT_ORTHOGONALITY: &str = "gradient_orthogonality";
pub const DERIVATION_GRADIENT_SPAN: &str = "derivation_gradient_span";
pub const DERIVATION_DIRECTION_CONDITIONS: &str = "derivation_direction_conditions";
pub const DERIVATION_COMMON_VALUE: &str = "derivation_common_value";
pub const EXACT_LINESEARCH: &str = "exact_linesearch";
pub const GRADIENT_UPDATE: &str = "gradient_update";
pub const DIRECTION_EQUIVALENCE: &str = "direction_equivalence";
pub const CONJUGACY: &str = "conjugacy";
pub const SUBSPACE_OPTIMALITY: &str = "subspace_optimality";
pub const MIN_NORM_RELATION: &str = "min_norm_relation";
pub const MIN_NORM_CHARACTERIZATION: &str = "min_norm_characterization";
pub const TERMINATION: &str = "termination";

/// All check names in report order.
pub const CHECK_NAMES: [&str; 12] = [
    GRADIENT_ORTHOGONALITY,
    DERIVATION_GRADIENT_SPAN,
    DERIVATION_DIRECTION_CONDITIONS,
    DERIVATION_COMMON_VALUE,
    EXACT_LINESEARCH,
    GRADIENT_UPDATE,
    DIRECTION_EQUIVALENCE,
    CONJUGACY,
    SUBSPACE_OPTIMALITY,
    MIN_NORM_RELATION,
    MIN_NORM_CHARACTERIZATION,
    TERMINATION,
];

fn anchor(name: &str) -> &'static str {
    match name {
        GRADIENT_ORTHOGONALITY => "g_k^T g_i = 0, i < k",
        DERIVATION_GRADIENT_SPAN => "g_{k+1}^T (x_{i+1} - x_0) = 0, i <= k",
        DERIVATION_DIRECTION_CONDITIONS => "p_k^T H (x_{i+1} - x_0) = p_k^T (g_{i+1} - g_0) = 0, i < k",
        DERIVATION_COMMON_VALUE => "p_k^T g_i = c_k, i <= k",
        EXACT_LINESEARCH => "p_k^T (g_k + theta_k H p_k) = 0",
        GRADIENT_UPDATE => "g_{k+1} = g_k + theta_k H p_k",
        DIRECTION_EQUIVALENCE => "-g_k + (g_k^T g_k / g_{k-1}^T g_{k-1}) p_{k-1} = c_k sum_i g_i / (g_i^T g_i)",
        CONJUGACY => "p_i^T H p_j = 0, i != j",
        SUBSPACE_OPTIMALITY => "x_k = argmin q over x_0 + span{g_0..g_{k-1}}",
        MIN_NORM_RELATION => "p_k = -(g_k^T g_k / ghat_k^T ghat_k) ghat_k",
        MIN_NORM_CHARACTERIZATION => "ghat_k^T (g_i - ghat_k) = 0, i <= k",
        TERMINATION => "g_r = 0 with r <= n",
        _ => "",
    }
}

/// Float tolerances per check; the exact backend always uses zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    values: BTreeMap<&'static str, f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        let mut values = BTreeMap::new();
        for name in CHECK_NAMES {
            let tol = match name {
                SUBSPACE_OPTIMALITY | MIN_NORM_RELATION | MIN_NORM_CHARACTERIZATION => 1e-6,
                TERMINATION => 0.0,
                _ => 1e-8,
            };
            values.insert(name, tol);
        }
        Tolerances { values }
    }
}

impl Tolerances {
    pub fn get(&self, name: &str) -> f64 {
        self.values.get(name).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let key = CHECK_NAMES
            .iter()
            .find(|n| **n == name)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown check {name:?}")))?;
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::InvalidSpec(format!("tolerance for {name} must be finite and >= 0")));
        }
        self.values.insert(key, value);
        Ok(())
    }

    /// Applies overrides of the form `check=value[,check=value…]`
    /// (whitespace or commas separate pairs).
    pub fn apply_overrides(&mut self, spec: &str) -> Result<()> {
        for pair in spec.split([',', ';', ' ', '\n']).filter(|s| !s.trim().is_empty()) {
            let (name, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::InvalidSpec(format!("tolerance override {pair:?} is not name=value")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("tolerance override {pair:?} has a bad value")))?;
            self.set(name.trim(), value)?;
        }
        Ok(())
    }

    fn for_backend<T: Scalar>(&self, name: &str) -> T {
        if T::EXACT {
            T::zero()
        } else {
            T::from_f64(self.get(name)).unwrap_or_else(T::zero)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult<T> {
    pub name: &'static str,
    pub anchor: &'static str,
    /// Worst-case residual, relative where applicable.
    pub measured: T,
    pub tolerance: T,
    pub passed: bool,
}

impl<T: Scalar> CheckResult<T> {
    pub(crate) fn named(name: &'static str) -> Self {
        CheckResult {
            name,
            anchor: anchor(name),
            measured: T::zero(),
            tolerance: T::zero(),
            passed: true,
        }
    }

    fn new(name: &'static str, measured: T, tolerances: &Tolerances) -> Self {
        let tolerance = tolerances.for_backend::<T>(name);
        let passed = measured <= tolerance;
        CheckResult {
            name,
            anchor: anchor(name),
            measured,
            tolerance,
            passed,
        }
    }

    fn failed(name: &'static str, tolerances: &Tolerances) -> Self {
        let mut r = Self::new(name, failure_value(), tolerances);
        r.passed = false;
        r
    }
}

fn failure_value<T: Scalar>() -> T {
    T::from_f64(f64::MAX).unwrap_or_else(T::one)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport<T> {
    pub problem_id: String,
    pub backend: Backend,
    pub n: usize,
    pub r: usize,
    pub checks: Vec<CheckResult<T>>,
    pub overall: bool,
}

impl<T: Scalar> VerificationReport<T> {
    pub fn check(&self, name: &str) -> Option<&CheckResult<T>> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &CheckResult<T>> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn fold_max<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    values.into_iter().fold(T::zero(), max_of)
}

/// The gradients treated as nonzero, see [`CgTrace::nonzero_gradient_count`].
fn live_gradients<T: Scalar>(trace: &CgTrace<T>) -> &[crate::cg::IterateRecord<T>] {
    &trace.records[..trace.nonzero_gradient_count()]
}

/// `max_{i<k} |g_kᵀg_i| / (‖g_k‖‖g_i‖)`
pub fn check_gradient_orthogonality<T: Scalar>(trace: &CgTrace<T>, tolerances: &Tolerances) -> CheckResult<T> {
    let live = live_gradients(trace);
    let norms: Vec<T> = live.iter().map(|r| r.grad_norm_sq.sqrt()).collect();
    let mut worst = T::zero();
    for k in 0..live.len() {
        for i in 0..k {
            let v = relative(live[k].g.dot_unchecked(&live[i].g), norms[k].clone() * &norms[i]);
            worst = max_of(worst, v);
        }
    }
    CheckResult::new(GRADIENT_ORTHOGONALITY, worst, tolerances)
}

/// The value `p_kᵀg_i` must take for every `i ≤ k`, as implied by the run's
/// scaling mode.
fn expected_common_value<T: Scalar>(trace: &CgTrace<T>, k: usize) -> Option<T> {
    let rec = &trace.records[k];
    match (trace.direction, trace.scaling) {
        (DirectionMode::ShortestResiduals, _) => {
            let mut total = T::zero();
            for r in &trace.records[..=k] {
                if r.grad_norm_sq.is_zero() {
                    return None;
                }
                total += T::one() / &r.grad_norm_sq;
            }
            Some(-(T::one() / total))
        }
        (_, ScalingMode::Cg) => Some(-rec.grad_norm_sq.clone()),
        (_, ScalingMode::Unit) => Some(-T::one()),
        (_, ScalingMode::Custom) => rec.scaling_constant.clone(),
    }
}

/// The three sub-checks obtained from `g_{k+1}ᵀ(x_{i+1} − x_0) = 0`:
/// (a) the condition itself, (b) the direction conditions
/// `p_kᵀ(g_{i+1} − g_0) = 0` for `i < k`, and (c) the common value
/// `p_kᵀg_i = c_k` for `i ≤ k`.
pub fn check_derivation_conditions<T: Scalar>(trace: &CgTrace<T>, tolerances: &Tolerances) -> Vec<CheckResult<T>> {
    let recs = &trace.records;
    let x0 = &recs[0].x;
    let g0 = &recs[0].g;
    let mut span = T::zero();
    let mut direction = T::zero();
    let mut common = T::zero();
    let mut common_ok = true;

    for (k, rec) in recs.iter().enumerate() {
        let Some(p) = rec.p.as_ref() else { continue };
        let p_norm = p.norm();
        let gk_norm = rec.grad_norm_sq.sqrt();

        if let Some(next) = recs.get(k + 1) {
            // normalised by the larger of the pre- and post-step gradients so a
            // (numerically) zero final gradient does not trivialise the check
            let scale = max_of(gk_norm.clone(), next.grad_norm_sq.sqrt());
            for i in 0..=k {
                let d = recs[i + 1].x.sub_unchecked(x0);
                let v = relative(next.g.dot_unchecked(&d), scale.clone() * d.norm());
                span = max_of(span, v);
            }
        }

        for i in 0..k {
            let d = recs[i + 1].g.sub_unchecked(g0);
            let v = relative(p.dot_unchecked(&d), p_norm.clone() * d.norm());
            direction = max_of(direction, v);
        }

        match expected_common_value(trace, k) {
            Some(c_k) => {
                for r in &recs[..=k] {
                    let v = relative(p.dot_unchecked(&r.g) - &c_k, p_norm.clone() * r.grad_norm_sq.sqrt());
                    common = max_of(common, v);
                }
            }
            None => common_ok = false,
        }
    }
    let mut out = vec![
        CheckResult::new(DERIVATION_GRADIENT_SPAN, span, tolerances),
        CheckResult::new(DERIVATION_DIRECTION_CONDITIONS, direction, tolerances),
    ];
    out.push(if common_ok {
        CheckResult::new(DERIVATION_COMMON_VALUE, common, tolerances)
    } else {
        CheckResult::failed(DERIVATION_COMMON_VALUE, tolerances)
    });
    out
}

/// `max_k |p_kᵀg_{k+1}| / (‖p_k‖‖g_k‖)`, normalised by the pre-step gradient.
pub fn check_exact_linesearch<T: Scalar>(trace: &CgTrace<T>, tolerances: &Tolerances) -> CheckResult<T> {
    let recs = &trace.records;
    let worst = fold_max(recs.iter().zip(recs.iter().skip(1)).filter_map(|(rec, next)| {
        let p = rec.p.as_ref()?;
        Some(relative(p.dot_unchecked(&next.g), p.norm() * rec.grad_norm_sq.sqrt()))
    }));
    CheckResult::new(EXACT_LINESEARCH, worst, tolerances)
}

/// `‖g_{k+1} − g_k − θ_k H p_k‖` relative to the size of the terms that
/// produce `g_{k+1} = Hx_{k+1} + c`.
pub fn check_gradient_update<T: Scalar>(
    problem: &QuadraticProblem<T>,
    trace: &CgTrace<T>,
    tolerances: &Tolerances,
) -> CheckResult<T> {
    let h = problem.hessian();
    let c_norm = problem.linear_term().norm();
    let recs = &trace.records;
    let worst = fold_max(recs.iter().zip(recs.iter().skip(1)).filter_map(|(rec, next)| {
        let p = rec.p.as_ref()?;
        let theta = rec.theta.as_ref()?;
        let hp = h.mat_vec_unchecked(p).scale(theta);
        let predicted = rec.g.add_unchecked(&hp);
        let scale = h.mat_vec_unchecked(&next.x).norm() + &c_norm + hp.norm();
        Some(relative(next.g.sub_unchecked(&predicted).norm(), scale))
    }));
    CheckResult::new(GRADIENT_UPDATE, worst, tolerances)
}

/// Recursive form and gradient-sum form of every recorded direction agree,
/// and agree with the direction actually used.
pub fn check_direction_equivalence<T: Scalar>(trace: &CgTrace<T>, tolerances: &Tolerances) -> CheckResult<T> {
    let recs = &trace.records;
    let mut worst = T::zero();
    for (k, rec) in recs.iter().enumerate() {
        let Some(p) = rec.p.as_ref() else { continue };
        let Some(c_k) = expected_common_value(trace, k) else {
            return CheckResult::failed(DIRECTION_EQUIVALENCE, tolerances);
        };
        let gradients: Vec<Vector<T>> = recs[..=k].iter().map(|r| r.g.clone()).collect();
        let Ok(summed) = crate::cg::direction_gradient_sum_with_constant(&gradients, &c_k) else {
            return CheckResult::failed(DIRECTION_EQUIVALENCE, tolerances);
        };
        let recursive = if k == 0 {
            Ok(rec.g.scale(&(c_k.clone() / &rec.grad_norm_sq)))
        } else {
            let prev = &recs[k - 1];
            match (prev.p.as_ref(), trace.scaling, trace.direction) {
                (Some(p_prev), ScalingMode::Cg, DirectionMode::Recursive | DirectionMode::GradientSum) => {
                    direction_recursive(&rec.g, &prev.g, p_prev)
                }
                (Some(p_prev), _, _) => match expected_common_value(trace, k - 1) {
                    Some(c_prev) => direction_recursive_scaled(&rec.g, &c_k, p_prev, &c_prev),
                    None => Err(Error::Invariant("missing scaling constant")),
                },
                (None, _, _) => Err(Error::Invariant("missing previous direction")),
            }
        };
        let Ok(recursive) = recursive else {
            return CheckResult::failed(DIRECTION_EQUIVALENCE, tolerances);
        };
        let scale = summed.norm();
        worst = max_of(worst, relative(recursive.sub_unchecked(&summed).norm(), scale.clone()));
        worst = max_of(worst, relative(p.sub_unchecked(&summed).norm(), scale));
    }
    CheckResult::new(DIRECTION_EQUIVALENCE, worst, tolerances)
}

/// `max_{i≠j} |p_iᵀHp_j| / (‖p_i‖_H ‖p_j‖_H)`
pub fn check_conjugacy<T: Scalar>(
    problem: &QuadraticProblem<T>,
    trace: &CgTrace<T>,
    tolerances: &Tolerances,
) -> CheckResult<T> {
    let h = problem.hessian();
    let ps: Vec<&Vector<T>> = trace.records.iter().filter_map(|r| r.p.as_ref()).collect();
    let hps: Vec<Vector<T>> = ps.iter().map(|p| h.mat_vec_unchecked(p)).collect();
    let h_norms: Vec<T> = ps.iter().zip(&hps).map(|(p, hp)| p.dot_unchecked(hp).abs().sqrt()).collect();
    let mut worst = T::zero();
    for j in 0..ps.len() {
        for i in 0..j {
            let v = relative(ps[i].dot_unchecked(&hps[j]), h_norms[i].clone() * &h_norms[j]);
            worst = max_of(worst, v);
        }
    }
    CheckResult::new(CONJUGACY, worst, tolerances)
}

/// `max_k ‖x_k − oracle_k‖ / max(‖x_k‖, 1)`
pub fn check_subspace_optimality<T: Scalar>(
    problem: &QuadraticProblem<T>,
    trace: &CgTrace<T>,
    tolerances: &Tolerances,
) -> CheckResult<T> {
    match verify_against_trace(problem, trace) {
        Ok(devs) => {
            let worst = fold_max(
                devs.into_iter()
                    .zip(&trace.records[1..])
                    .map(|(d, rec)| d / max_of(rec.x.norm(), T::one())),
            );
            CheckResult::new(SUBSPACE_OPTIMALITY, worst, tolerances)
        }
        Err(_) => CheckResult::failed(SUBSPACE_OPTIMALITY, tolerances),
    }
}

/// For every `k` with a direction and nonzero `g_0 … g_k`: closed form and
/// projection oracle agree, and `p_k` is the stated negative multiple of `ĝ_k`.
/// Directions of non-CG scalings are rescaled to CG length first.
pub fn check_min_norm_relation<T: Scalar>(trace: &CgTrace<T>, tolerances: &Tolerances) -> CheckResult<T> {
    let live = live_gradients(trace);
    let mut worst = T::zero();
    for k in 0..live.len() {
        let rec = &live[k];
        let Some(p) = rec.p.as_ref() else { continue };
        let gradients: Vec<Vector<T>> = live[..=k].iter().map(|r| r.g.clone()).collect();
        let (Ok(closed), Ok(projected)) = (closed_form_unchecked(&gradients), projection_oracle(&gradients)) else {
            return CheckResult::failed(MIN_NORM_RELATION, tolerances);
        };
        let p_cg = if trace.scaling == ScalingMode::Cg && trace.direction != DirectionMode::ShortestResiduals {
            p.clone()
        } else {
            let c = p.dot_unchecked(&rec.g);
            if c.is_zero() {
                return CheckResult::failed(MIN_NORM_RELATION, tolerances);
            }
            p.scale(&(-rec.grad_norm_sq.clone() / c))
        };
        let Ok(dev) = scaling_relation(&p_cg, &rec.g, &closed) else {
            return CheckResult::failed(MIN_NORM_RELATION, tolerances);
        };
        worst = max_of(worst, relative(dev, p_cg.norm()));
        let agreement = relative(closed.ghat.sub_unchecked(&projected.ghat).norm(), closed.ghat.norm());
        worst = max_of(worst, agreement);
    }
    CheckResult::new(MIN_NORM_RELATION, worst, tolerances)
}

/// `max |ĝ_kᵀ(g_i − ĝ_k)| / (‖ĝ_k‖‖g_i‖)` for every `k` before termination;
/// a vanishing `ĝ_k` there fails the check.
pub fn check_min_norm_characterization<T: Scalar>(trace: &CgTrace<T>, tolerances: &Tolerances) -> CheckResult<T> {
    let live = live_gradients(trace);
    let mut worst = T::zero();
    for k in 0..live.len() {
        let gradients: Vec<Vector<T>> = live[..=k].iter().map(|r| r.g.clone()).collect();
        let Ok(closed) = closed_form_unchecked(&gradients) else {
            return CheckResult::failed(MIN_NORM_CHARACTERIZATION, tolerances);
        };
        if closed.norm_sq.is_zero() {
            return CheckResult::failed(MIN_NORM_CHARACTERIZATION, tolerances);
        }
        let ghat_norm = closed.norm_sq.sqrt();
        for g in &gradients {
            let v = relative(closed.ghat.dot_unchecked(g) - &closed.norm_sq, ghat_norm.clone() * g.norm());
            worst = max_of(worst, v);
        }
    }
    CheckResult::new(MIN_NORM_CHARACTERIZATION, worst, tolerances)
}

/// Number of violated termination conditions: the run must end with a zero
/// gradient (exact) or meet the stopping test (float), with `r ≤ n` (exact)
/// or `r ≤ n + 5` (float).
pub fn check_termination<T: Scalar>(trace: &CgTrace<T>, tolerances: &Tolerances) -> CheckResult<T> {
    let mut violations = 0;
    let (reason_ok, bound) = if T::EXACT {
        (trace.termination_reason == TerminationReason::GradientZero, trace.n)
    } else {
        (trace.converged(), trace.n + 5)
    };
    if !reason_ok {
        violations += 1;
    }
    if trace.r() > bound {
        violations += 1;
    }
    CheckResult::new(TERMINATION, T::from_i64(violations), tolerances)
}

/// Runs every check over an existing trace.
pub fn verify_trace<T: Scalar>(
    problem: &QuadraticProblem<T>,
    trace: &CgTrace<T>,
    tolerances: &Tolerances,
) -> Result<VerificationReport<T>> {
    check_trace(problem, trace)?;
    let mut checks = vec![check_gradient_orthogonality(trace, tolerances)];
    checks.extend(check_derivation_conditions(trace, tolerances));
    checks.push(check_exact_linesearch(trace, tolerances));
    checks.push(check_gradient_update(problem, trace, tolerances));
    checks.push(check_direction_equivalence(trace, tolerances));
    checks.push(check_conjugacy(problem, trace, tolerances));
    checks.push(check_subspace_optimality(problem, trace, tolerances));
    checks.push(check_min_norm_relation(trace, tolerances));
    checks.push(check_min_norm_characterization(trace, tolerances));
    checks.push(check_termination(trace, tolerances));
    let overall = checks.iter().all(|c| c.passed);
    Ok(VerificationReport {
        problem_id: trace.problem_id.clone(),
        backend: trace.backend,
        n: trace.n,
        r: trace.r(),
        checks,
        overall,
    })
}

/// Solves and verifies in one go.
pub fn run_full_suite<T: Scalar>(
    problem: &QuadraticProblem<T>,
    opts: &CgOptions<T>,
    tolerances: &Tolerances,
) -> Result<(CgTrace<T>, VerificationReport<T>)> {
    let trace = run_cg(problem, opts)?;
    let report = verify_trace(problem, &trace, tolerances)?;
    Ok((trace, report))
}

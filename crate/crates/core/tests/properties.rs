//! Property tests over small random integer problems. Exact-backend
//! properties are asserted with `==`; float ones against the stated bounds.

use cglens::cg::{direction_gradient_sum, direction_recursive, run_cg, CgOptions, DirectionMode, DirectionScaling};
use cglens::linalg::{cholesky_spd_check, solve_spd, SymMatrix, Vector};
use cglens::minnorm::{
    affine_point_of_gradient_combination, characterization_residuals, min_norm_closed_form, projection_oracle,
    AffineCombination,
};
use cglens::quadratic::QuadraticProblem;
use cglens::subspace::{minimize_on_affine_span, span_residual, SpanBasis};
use cglens::verify::{run_full_suite, verify_trace, Tolerances, CHECK_NAMES};
use cglens::{Rational, Scalar};
use num_traits::{One, Signed, Zero};
use proptest::prelude::*;

type Q = Rational;

fn q(v: i64) -> Q {
    Q::from_i64(v)
}

/// `AᵀA + I` from a row-major integer `A`.
fn gram_plus_identity<T: Scalar>(n: usize, a: &[i64]) -> SymMatrix<T> {
    let rows: Vec<Vec<T>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let dot: i64 = (0..n).map(|k| a[k * n + i] * a[k * n + j]).sum();
                    T::from_i64(dot + i64::from(i == j))
                })
                .collect()
        })
        .collect();
    SymMatrix::from_rows(rows).unwrap()
}

#[derive(Debug, Clone)]
struct Raw {
    n: usize,
    a: Vec<i64>,
    c: Vec<i64>,
    x0: Vec<i64>,
}

impl Raw {
    fn problem<T: Scalar>(&self) -> QuadraticProblem<T> {
        QuadraticProblem::new(
            "prop",
            gram_plus_identity(self.n, &self.a),
            Vector::from_i64(&self.c),
            Vector::from_i64(&self.x0),
        )
        .unwrap()
    }
}

fn raw(max_n: usize) -> impl Strategy<Value = Raw> {
    (1..=max_n).prop_flat_map(|n| {
        (
            proptest::collection::vec(-3i64..=3, n * n),
            proptest::collection::vec(-5i64..=5, n),
            proptest::collection::vec(-4i64..=4, n),
        )
            .prop_map(move |(a, c, x0)| Raw { n, a, c, x0 })
    })
}

fn int_vec(n: usize, lo: i64, hi: i64) -> impl Strategy<Value = Vec<i64>> {
    proptest::collection::vec(lo..=hi, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rational_solve_round_trips((r, b) in raw(6).prop_flat_map(|r| { let n = r.n; (Just(r), int_vec(n, -9, 9)) })) {
        let m: SymMatrix<Q> = gram_plus_identity(r.n, &r.a);
        let b = Vector::from_i64(&b);
        let y = solve_spd(&m, &b).unwrap();
        prop_assert_eq!(m.mat_vec(&y).unwrap(), b);
        let spd = cholesky_spd_check(&m);
        prop_assert!(spd.is_spd);
        prop_assert_eq!(spd.factor.unwrap().reconstruct(), m);
    }

    #[test]
    fn float_solve_residual_bound((r, b) in raw(8).prop_flat_map(|r| { let n = r.n; (Just(r), int_vec(n, -9, 9)) })) {
        prop_assume!(b.iter().any(|v| *v != 0));
        let m: SymMatrix<f64> = gram_plus_identity(r.n, &r.a);
        let b = Vector::from_i64(&b);
        let y = solve_spd(&m, &b).unwrap();
        let res = m.mat_vec(&y).unwrap().sub(&b).unwrap().norm() / b.norm();
        let kappa = cholesky_spd_check(&m).factor.unwrap().pivot_ratio();
        prop_assert!(res <= 100.0 * r.n as f64 * f64::EPSILON * kappa, "residual {res}, kappa {kappa}");
    }

    #[test]
    fn asymmetric_rows_rejected(n in 2usize..5, i in 0usize..5, j in 0usize..5, d in 1i64..4) {
        let (i, j) = (i % n, j % n);
        prop_assume!(i != j);
        let mut rows: Vec<Vec<Q>> = (0..n).map(|r| (0..n).map(|c| q(i64::from(r == c))).collect()).collect();
        rows[i][j] += q(d);
        prop_assert!(SymMatrix::from_rows(rows).is_err());
    }

    #[test]
    fn gradient_is_affine((r, x, d) in raw(5).prop_flat_map(|r| { let n = r.n; (Just(r), int_vec(n, -6, 6), int_vec(n, -6, 6)) })) {
        let p = r.problem::<Q>();
        let (x, d) = (Vector::from_i64(&x), Vector::from_i64(&d));
        let lhs = p.gradient(&x.add(&d).unwrap()).unwrap().sub(&p.gradient(&x).unwrap()).unwrap();
        prop_assert_eq!(lhs, p.hessian().mat_vec(&d).unwrap());
    }

    #[test]
    fn excess_objective_is_hessian_form((r, x) in raw(5).prop_flat_map(|r| { let n = r.n; (Just(r), int_vec(n, -6, 6)) })) {
        let p = r.problem::<Q>();
        let x = Vector::from_i64(&x);
        let xs = p.exact_minimizer().unwrap();
        let e = x.sub(&xs).unwrap();
        let excess = p.evaluate(&x).unwrap() - p.evaluate(&xs).unwrap();
        prop_assert_eq!(excess.clone(), Q::new(1.into(), 2.into()) * p.hessian().bilinear(&e, &e).unwrap());
        prop_assert!(!excess.is_negative());
        prop_assert_eq!(p.point_of_gradient(&p.gradient(&x).unwrap()).unwrap(), x);
    }

    #[test]
    fn exact_cg_identities(r in raw(6)) {
        let p = r.problem::<Q>();
        let t = run_cg(&p, &CgOptions::default()).unwrap();
        prop_assert!(t.r() <= r.n);
        prop_assert!(t.records.last().unwrap().g.is_zero());
        for k in 1..t.records.len() {
            let gk = &t.records[k].g;
            for i in 0..k {
                prop_assert!(gk.dot(&t.records[i].g).unwrap().is_zero());
                let pi = t.records[i].p.as_ref().unwrap();
                prop_assert!(pi.dot(gk).unwrap().is_zero());
            }
            // exact linesearch
            let prev = t.records[k - 1].p.as_ref().unwrap();
            prop_assert!(prev.dot(gk).unwrap().is_zero());
        }
        let ps: Vec<&Vector<Q>> = t.records.iter().filter_map(|r| r.p.as_ref()).collect();
        for i in 0..ps.len() {
            for j in 0..i {
                prop_assert!(p.hessian().bilinear(ps[i], ps[j]).unwrap().is_zero());
            }
        }
        for (k, rec) in t.records.iter().enumerate() {
            if let Some(theta) = &rec.theta {
                prop_assert!(theta.is_positive());
                let next = &t.records[k + 1];
                prop_assert!(p.evaluate(&next.x).unwrap() < p.evaluate(&rec.x).unwrap());
            }
            if let Some(pk) = &rec.p {
                let gs = t.gradients()[..=k].to_vec();
                let summed = direction_gradient_sum(&gs, &DirectionScaling::CgStandard).unwrap();
                prop_assert_eq!(&summed, pk);
                if k > 0 {
                    let prev = &t.records[k - 1];
                    prop_assert_eq!(&direction_recursive(&rec.g, &prev.g, prev.p.as_ref().unwrap()).unwrap(), pk);
                }
            }
        }
    }

    #[test]
    fn scaling_and_mode_invariance(r in raw(5), custom in proptest::collection::vec((1i64..20, 1i64..20), 1..4)) {
        let p = r.problem::<Q>();
        let base = run_cg(&p, &CgOptions::default()).unwrap().iterates();
        let values: Vec<Q> = custom.iter().map(|(a, b)| Q::new((*a).into(), (*b).into())).collect();
        let variants = [
            CgOptions::default().with_scaling(DirectionScaling::Unit),
            CgOptions::default().with_scaling(DirectionScaling::custom(values).unwrap()),
            CgOptions::default().with_direction(DirectionMode::GradientSum),
            CgOptions::default().with_direction(DirectionMode::GradientSum).with_scaling(DirectionScaling::Unit),
            CgOptions::default().with_direction(DirectionMode::ShortestResiduals),
        ];
        for opts in variants {
            prop_assert_eq!(&run_cg(&p, &opts).unwrap().iterates(), &base);
        }
    }

    #[test]
    fn rational_suite_is_all_zero(r in raw(5)) {
        let p = r.problem::<Q>();
        for opts in [
            CgOptions::default(),
            CgOptions::default().with_scaling(DirectionScaling::Unit),
            CgOptions::default().with_direction(DirectionMode::ShortestResiduals),
        ] {
            let (_, rep) = run_full_suite(&p, &opts, &Tolerances::default()).unwrap();
            prop_assert!(rep.overall);
            prop_assert_eq!(rep.checks.len(), CHECK_NAMES.len());
            for c in &rep.checks {
                prop_assert!(c.measured.is_zero(), "{} = {}", c.name, c.measured);
            }
        }
    }

    #[test]
    fn reports_are_deterministic(r in raw(6)) {
        let pq = r.problem::<Q>();
        let a = run_full_suite(&pq, &CgOptions::default(), &Tolerances::default()).unwrap().1;
        let b = run_full_suite(&pq, &CgOptions::default(), &Tolerances::default()).unwrap().1;
        prop_assert_eq!(a, b);
        let pf = r.problem::<f64>();
        let a = run_full_suite(&pf, &CgOptions::default(), &Tolerances::default()).unwrap().1;
        let b = run_full_suite(&pf, &CgOptions::default(), &Tolerances::default()).unwrap().1;
        for (x, y) in a.checks.iter().zip(&b.checks) {
            prop_assert_eq!(x.measured.to_bits(), y.measured.to_bits());
        }
    }

    #[test]
    fn loosening_tolerances_never_fails(r in raw(8), exps in proptest::collection::vec(-16i32..0, CHECK_NAMES.len()), bump in 0i32..6) {
        let p = r.problem::<f64>();
        let trace = run_cg(&p, &CgOptions::default()).unwrap();
        let mut tight = Tolerances::default();
        let mut loose = Tolerances::default();
        for (name, e) in CHECK_NAMES.iter().zip(&exps) {
            tight.set(name, 10f64.powi(*e)).unwrap();
            loose.set(name, 10f64.powi(*e + bump)).unwrap();
        }
        let a = verify_trace(&p, &trace, &tight).unwrap();
        let b = verify_trace(&p, &trace, &loose).unwrap();
        for (x, y) in a.checks.iter().zip(&b.checks) {
            prop_assert!(!x.passed || y.passed, "{} flipped", x.name);
        }
        prop_assert!(!a.overall || b.overall);
    }

    #[test]
    fn oracle_is_optimal_and_stationary(
        (r, spans, w) in raw(5).prop_flat_map(|r| {
            let n = r.n;
            (Just(r), proptest::collection::vec(int_vec(n, -3, 3), 1..4), proptest::collection::vec(-4i64..=4, 3))
        })
    ) {
        let p = r.problem::<Q>();
        let spans: Vec<Vector<Q>> = spans.iter().map(|s| Vector::from_i64(s)).collect();
        let sol = minimize_on_affine_span(&p, &SpanBasis::new(p.start().clone(), spans.clone()).unwrap()).unwrap();
        let g = p.gradient(&sol.point).unwrap();
        for s in &spans {
            prop_assert!(g.dot(s).unwrap().is_zero());
        }
        let weights: Vec<Q> = w.iter().take(spans.len()).map(|v| q(*v)).collect();
        let y = p.start().add(&Vector::linear_combination(&weights, &spans[..weights.len()]).unwrap()).unwrap();
        prop_assert!(p.evaluate(&y).unwrap() >= sol.objective_value);
    }

    #[test]
    fn oracle_objective_nests(r in raw(6)) {
        let p = r.problem::<Q>();
        let t = run_cg(&p, &CgOptions::default()).unwrap();
        let gs = t.gradients();
        let mut last = p.evaluate(p.start()).unwrap();
        for k in 1..gs.len() {
            let s = minimize_on_affine_span(&p, &SpanBasis::new(p.start().clone(), gs[..k].to_vec()).unwrap()).unwrap();
            prop_assert!(s.objective_value <= last);
            last = s.objective_value;
        }
    }

    #[test]
    fn min_norm_properties_on_traces(r in raw(6), alphas in proptest::collection::vec(-5i64..=5, 6)) {
        let p = r.problem::<Q>();
        let t = run_cg(&p, &CgOptions::default()).unwrap();
        let mut prev_norm: Option<Q> = None;
        for k in 0..t.r() {
            let gs = t.gradients()[..=k].to_vec();
            let cf = min_norm_closed_form(&gs).unwrap();
            let po = projection_oracle(&gs).unwrap();
            prop_assert_eq!(&cf.ghat, &po.ghat);
            prop_assert!(!cf.norm_sq.is_zero());
            prop_assert!(cf.weights.weights().iter().all(|a| a.is_positive()));
            prop_assert_eq!(cf.weights.weights().iter().fold(Q::zero(), |s, a| s + a), Q::one());
            prop_assert!(characterization_residuals(&cf, &gs).unwrap().iter().all(Zero::is_zero));
            if let Some(prev) = &prev_norm {
                prop_assert!(&cf.norm_sq <= prev);
            }
            prev_norm = Some(cf.norm_sq.clone());

            // an arbitrary affine combination: last weight fixes the sum
            let mut w: Vec<Q> = alphas.iter().take(k).map(|a| q(*a)).collect();
            let partial = w.iter().fold(Q::zero(), |s, a| s + a);
            w.push(Q::one() - partial);
            let comb = AffineCombination::new(w).unwrap();
            let g = comb.apply(&gs).unwrap();
            prop_assert!(g.norm_sq() >= cf.norm_sq);
            prop_assert!(g.sub(&cf.ghat).unwrap().dot(&cf.ghat).unwrap().is_zero());
            let pt = affine_point_of_gradient_combination(&p, &t.iterates()[..=k], &comb).unwrap();
            prop_assert_eq!(&pt.g, &g);
        }
    }

    #[test]
    fn iterate_hull_equals_gradient_span(r in raw(6)) {
        let p = r.problem::<Q>();
        let t = run_cg(&p, &CgOptions::default()).unwrap();
        let xs = t.iterates();
        let gs = t.gradients();
        for k in 1..xs.len() {
            let diffs: Vec<Vector<Q>> = xs[1..=k].iter().map(|x| x.sub(&xs[0]).unwrap()).collect();
            for d in &diffs {
                prop_assert!(span_residual(&gs[..k], d).unwrap().is_zero());
            }
            for g in &gs[..k] {
                prop_assert!(span_residual(&diffs, g).unwrap().is_zero());
            }
        }
    }
}

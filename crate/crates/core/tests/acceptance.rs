//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Exact-backend criteria use tolerance zero throughout.

use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use cglens::cg::{direction_gradient_sum, direction_recursive, run_cg, CgOptions, CgTrace, DirectionMode, DirectionScaling, TerminationReason};
use cglens::generate::{generate_problem, ProblemSpec};
use cglens::io::{load_json, load_problem, report_from_json, report_to_json, trace_from_json, trace_to_json};
use cglens::linalg::{SymMatrix, Vector};
use cglens::minnorm::{min_norm_closed_form, projection_oracle, scaling_relation};
use cglens::quadratic::QuadraticProblem;
use cglens::subspace::{minimize_on_affine_span, SpanBasis};
use cglens::verify::{check_conjugacy, check_derivation_conditions, check_exact_linesearch, run_full_suite, Tolerances};
use cglens::Rational;
use num_traits::{One, Zero};
use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

type Q = Rational;

struct Outcome {
    passed: bool,
    detail: String,
}

fn pass(detail: impl Into<String>) -> Outcome {
    Outcome { passed: true, detail: detail.into() }
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome { passed: false, detail: detail.into() }
}

fn within(outcome: Outcome, elapsed: Duration, limit: Duration) -> Outcome {
    if outcome.passed && elapsed > limit {
        return fail(format!("{} but took {:.2?} (limit {:.0?})", outcome.detail, elapsed, limit));
    }
    outcome
}

fn q(p: i64, d: i64) -> Q {
    Q::new(p.into(), d.into())
}

fn qv(entries: &[(i64, i64)]) -> Vector<Q> {
    Vector::new(entries.iter().map(|&(p, d)| q(p, d)).collect()).unwrap()
}

// ------------------------------------------------------------------ 1

fn worked_problem() -> Outcome {
    let p = QuadraticProblem::new(
        "P1",
        SymMatrix::diag(&[q(1, 1), q(2, 1)]).unwrap(),
        Vector::from_i64(&[-1, -2]),
        Vector::zeros(2),
    )
    .unwrap();
    let t = run_cg(&p, &CgOptions::default()).unwrap();
    let r = &t.records;
    let mut wrong = Vec::new();
    let mut expect = |what: &str, ok: bool| {
        if !ok {
            wrong.push(what.to_string());
        }
    };
    expect("r = 2", t.r() == 2 && r.len() == 3);
    if r.len() == 3 {
        expect("theta_0 = 5/9", r[0].theta == Some(q(5, 9)));
        expect("x_1 = (5/9, 10/9)", r[1].x == qv(&[(5, 9), (10, 9)]));
        expect("g_1 = (-4/9, 2/9)", r[1].g == qv(&[(-4, 9), (2, 9)]));
        expect("beta_1 = 4/81", r[1].beta == Some(q(4, 81)));
        expect("p_1 = (40/81, -10/81)", r[1].p == Some(qv(&[(40, 81), (-10, 81)])));
        expect("theta_1 = 9/10", r[1].theta == Some(q(9, 10)));
        expect("x_2 = (1, 1)", r[2].x == qv(&[(1, 1), (1, 1)]));
        expect("g_2 = 0", r[2].g.is_zero());
    }
    expect("gradient_zero", t.termination_reason == TerminationReason::GradientZero);
    if wrong.is_empty() {
        pass("theta_0=5/9, x_1=(5/9,10/9), g_1=(-4/9,2/9), beta_1=4/81, p_1=(40/81,-10/81), theta_1=9/10, x_2=(1,1), g_2=0, r=2")
    } else {
        fail(format!("mismatched: {}", wrong.join(", ")))
    }
}

// ------------------------------------------------------------------ 2

struct Case {
    problem: QuadraticProblem<Q>,
    trace: CgTrace<Q>,
}

fn integer_cases() -> Vec<ProblemSpec> {
    (0..50u64).map(|i| ProblemSpec::int_spd(2 + (i as usize % 11), 1000 + i)).collect()
}

fn orthogonality_and_termination(cases: &[Case]) -> Outcome {
    for c in cases {
        let t = &c.trace;
        let n = c.problem.dim();
        if t.termination_reason != TerminationReason::GradientZero || t.r() > n {
            return fail(format!("{}: reason {}, r = {} > n = {n}?", t.problem_id, t.termination_reason.as_str(), t.r()));
        }
        if !t.records[t.r()].g.is_zero() {
            return fail(format!("{}: g_r != 0", t.problem_id));
        }
        for k in 0..t.records.len() {
            for i in 0..k {
                if !t.records[k].g.dot(&t.records[i].g).unwrap().is_zero() {
                    return fail(format!("{}: g_{k}^T g_{i} != 0", t.problem_id));
                }
            }
        }
    }
    let total_r: usize = cases.iter().map(|c| c.trace.r()).sum();
    pass(format!("{} problems, n in 2..=12, all g_k^T g_i = 0 and g_r = 0 with r <= n (sum r = {total_r})", cases.len()))
}

// ------------------------------------------------------------------ 3

fn triple_characterization(cases: &[Case]) -> Outcome {
    let mut checked = 0;
    for c in cases {
        let t = &c.trace;
        let gs = t.gradients();
        for k in 0..t.r() {
            let pk = t.records[k].p.as_ref().unwrap();
            // (a) recursive and gradient-sum forms
            let summed = direction_gradient_sum(&gs[..=k], &DirectionScaling::CgStandard).unwrap();
            let recursive = if k == 0 {
                gs[0].neg()
            } else {
                direction_recursive(&gs[k], &gs[k - 1], t.records[k - 1].p.as_ref().unwrap()).unwrap()
            };
            if recursive != summed || &summed != pk {
                return fail(format!("{}: direction forms differ at k = {k}", t.problem_id));
            }
            // (c) closed form, projection oracle and the scaling relation
            let cf = min_norm_closed_form(&gs[..=k]).unwrap();
            let po = projection_oracle(&gs[..=k]).unwrap();
            if cf.ghat != po.ghat || cf.norm_sq != po.norm_sq {
                return fail(format!("{}: closed form != projection oracle at k = {k}", t.problem_id));
            }
            if !scaling_relation(pk, &gs[k], &cf).unwrap().is_zero() {
                return fail(format!("{}: p_k != -(g_k^T g_k / ghat^T ghat) ghat at k = {k}", t.problem_id));
            }
            checked += 1;
        }
        // (b) each x_k is the subspace minimizer
        for k in 1..t.records.len() {
            let basis = SpanBasis::new(c.problem.start().clone(), gs[..k].to_vec()).unwrap();
            let sol = minimize_on_affine_span(&c.problem, &basis).unwrap();
            if sol.point != t.records[k].x {
                return fail(format!("{}: x_{k} differs from the subspace minimizer", t.problem_id));
            }
        }
    }
    pass(format!("{checked} iterations: directions, subspace minimizers and min-norm relation agree exactly"))
}

// ------------------------------------------------------------------ 4

fn derivation_conditions(cases: &[Case]) -> Outcome {
    let tol = Tolerances::default();
    for c in cases {
        let t = &c.trace;
        let mut checks = check_derivation_conditions(t, &tol);
        checks.push(check_exact_linesearch(t, &tol));
        checks.push(check_conjugacy(&c.problem, t, &tol));
        for ch in &checks {
            if !ch.measured.is_zero() || !ch.tolerance.is_zero() || !ch.passed {
                return fail(format!("{}: {} measured {}", t.problem_id, ch.name, ch.measured));
            }
        }
        // direct evaluation of the common value c_k = -g_k^T g_k
        for k in 0..t.r() {
            let pk = t.records[k].p.as_ref().unwrap();
            let ck = -t.records[k].g.norm_sq();
            for i in 0..=k {
                if pk.dot(&t.records[i].g).unwrap() != ck {
                    return fail(format!("{}: p_{k}^T g_{i} != -g_{k}^T g_{k}", t.problem_id));
                }
            }
        }
    }
    pass(format!("{} traces: gradient-span, direction and common-value conditions, linesearch, conjugacy all 0", cases.len()))
}

// ------------------------------------------------------------------ 5

fn random_affine_weights(rng: &mut Xoshiro256StarStar, len: usize) -> Vec<Q> {
    let mut w: Vec<Q> = (0..len - 1)
        .map(|_| {
            let num = (rng.next_u64() % 21) as i64 - 10;
            let den = (rng.next_u64() % 6) as i64 + 1;
            q(num, den)
        })
        .collect();
    let partial = w.iter().fold(Q::zero(), |s, a| s + a);
    w.push(Q::one() - partial);
    w
}

fn min_norm_dominance(cases: &[Case]) -> Outcome {
    let mut rng = Xoshiro256StarStar::seed_from_u64(5);
    let mut samples = 0usize;
    for c in cases {
        let t = &c.trace;
        let gs = t.gradients();
        let gram = SymMatrix::from_lower_fn(gs.len(), |i, j| gs[i].dot(&gs[j]).unwrap());
        for k in 0..t.r() {
            let cf = min_norm_closed_form(&gs[..=k]).unwrap();
            for (i, g) in gs[..=k].iter().enumerate() {
                if !cf.ghat.dot(&g.sub(&cf.ghat).unwrap()).unwrap().is_zero() {
                    return fail(format!("{}: ghat_{k}^T (g_{i} - ghat_{k}) != 0", t.problem_id));
                }
            }
            for s in 0..200 {
                let w = random_affine_weights(&mut rng, k + 1);
                // ||sum w_i g_i||^2 = w^T G w
                let mut norm_sq = Q::zero();
                for (i, wi) in w.iter().enumerate() {
                    for (j, wj) in w.iter().enumerate() {
                        let gij = gram.get(i, j);
                        if !gij.is_zero() {
                            norm_sq += wi * wj * gij;
                        }
                    }
                }
                if s == 0 && Vector::linear_combination(&w, &gs[..=k]).unwrap().norm_sq() != norm_sq {
                    return fail(format!("{}: Gram form disagrees with the explicit combination", t.problem_id));
                }
                if norm_sq < cf.norm_sq {
                    return fail(format!("{}: affine combination shorter than ghat_{k}", t.problem_id));
                }
                samples += 1;
            }
        }
    }
    pass(format!("{samples} random affine combinations never beat ghat_k; ghat_k^T (g_i - ghat_k) = 0 throughout"))
}

// ------------------------------------------------------------------ 6

fn float_envelope() -> Outcome {
    let specs = [
        ProblemSpec::diag(32),
        ProblemSpec::diag(64),
        ProblemSpec::laplacian1d(32),
        ProblemSpec::laplacian1d(64),
        ProblemSpec::rand_spd(20, 1e2, 42),
        ProblemSpec::rand_spd(20, 1e4, 42),
    ];
    let tol = Tolerances::default();
    let mut failures = Vec::new();
    for spec in &specs {
        let p = generate_problem::<f64>(spec).unwrap();
        let (trace, report) = run_full_suite(&p, &CgOptions::default(), &tol).unwrap();
        let bad: Vec<String> = report
            .failed_checks()
            .map(|c| format!("{}={:.1e}", c.name, c.measured))
            .collect();
        let line = format!(
            "{} r={} ({}) {}",
            spec.id(),
            trace.r(),
            trace.termination_reason.as_str(),
            if bad.is_empty() { "pass".to_string() } else { bad.join(" ") }
        );
        println!("    {line}");
        if !report.overall || trace.r() > p.dim() + 5 {
            failures.push(spec.id());
        }
    }
    if failures.is_empty() {
        pass("all six float64 problems pass at 1e-8 / 1e-6 with r <= n + 5")
    } else {
        fail(format!(
            "{} of {} float64 problems fail (loss of orthogonality): {}",
            failures.len(),
            specs.len(),
            failures.join(", ")
        ))
    }
}

// ------------------------------------------------------------------ 7, 8

fn same_iterates(cases: &[Case], opts: &CgOptions<Q>, label: &str, extra: impl Fn(&Case, &CgTrace<Q>) -> Option<String>) -> Outcome {
    for c in cases {
        let other = run_cg(&c.problem, opts).unwrap();
        if other.iterates() != c.trace.iterates() {
            return fail(format!("{}: {label} iterates differ", c.trace.problem_id));
        }
        if let Some(msg) = extra(c, &other) {
            return fail(msg);
        }
    }
    pass(format!("{} problems: {label} iterate sequences identical to standard CG", cases.len()))
}

fn scaling_invariance(cases: &[Case]) -> Outcome {
    let opts = CgOptions::default().with_scaling(DirectionScaling::Unit);
    same_iterates(cases, &opts, "unit-scaling (c_k = -1)", |c, t| {
        t.records.iter().filter_map(|r| r.p.as_ref().map(|p| (r, p))).find_map(|(r, p)| {
            let ok = t.records[..=r.k].iter().all(|ri| p.dot(&ri.g).unwrap() == -Q::one());
            (!ok).then(|| format!("{}: p_{}^T g_i != -1", c.trace.problem_id, r.k))
        })
    })
}

fn shortest_residuals(cases: &[Case]) -> Outcome {
    let opts = CgOptions::default().with_direction(DirectionMode::ShortestResiduals);
    same_iterates(cases, &opts, "shortest-residuals (p_k = -ghat_k)", |c, t| {
        let gs = t.gradients();
        t.records.iter().filter_map(|r| r.p.as_ref().map(|p| (r.k, p))).find_map(|(k, p)| {
            let ghat = projection_oracle(&gs[..=k]).unwrap().ghat;
            (p != &ghat.neg()).then(|| format!("{}: p_{k} != -ghat_{k}", c.trace.problem_id))
        })
    })
}

// ------------------------------------------------------------------ 9

fn cli_end_to_end() -> Outcome {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return fail(format!("tempdir: {e}")),
    };
    let d = dir.path();
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_cglens"))
            .args(args)
            .current_dir(d)
            .env_remove("CGLENS_TOL_OVERRIDES")
            .output()
            .expect("cglens runs")
            .status
            .code()
    };
    let steps: [(&[&str], i32); 3] = [
        (&["generate", "--kind", "diag", "--n", "2", "--backend", "rational", "--out", "p.json"], 0),
        (&["solve", "--problem", "p.json", "--backend", "rational", "--trace", "t.json"], 0),
        (&["verify", "--problem", "p.json", "--backend", "rational", "--report", "r.json", "--trace", "t2.json"], 0),
    ];
    for (args, want) in steps {
        let got = run(args);
        if got != Some(want) {
            return fail(format!("`cglens {}` exited {got:?}, expected {want}", args.join(" ")));
        }
    }
    let report = load_json(&d.join("r.json")).unwrap();
    if report["overall"] != true {
        return fail("report overall is not true");
    }

    fs::write(d.join("bad.json"), r#"{"n": 2, "H": {"dense": [[1, 0], [0, -1]]}, "c": [0, 0], "x0": [0, 0]}"#).unwrap();
    let got = run(&["verify", "--problem", "bad.json", "--backend", "rational"]);
    if got != Some(2) {
        return fail(format!("non-SPD input exited {got:?}, expected 2"));
    }

    // lossless round trips of every file written above
    let original = generate_problem::<Q>(&ProblemSpec::diag(2)).unwrap();
    let loaded = load_problem::<Q>(&d.join("p.json")).unwrap();
    if loaded.hessian() != original.hessian() || loaded.linear_term() != original.linear_term() || loaded.start() != original.start() {
        return fail("problem file does not reproduce the generated problem");
    }
    let trace = trace_from_json::<Q>(load_json(&d.join("t.json")).unwrap()).unwrap();
    if trace != run_cg(&original, &CgOptions::default()).unwrap() || trace_to_json(&trace) != load_json(&d.join("t2.json")).unwrap() {
        return fail("trace file does not round-trip");
    }
    let rep = report_from_json::<Q>(report.clone()).unwrap();
    if report_to_json(&rep) != report {
        return fail("report file does not round-trip");
    }
    pass("generate -> solve -> verify exits 0 with overall = true; non-SPD exits 2; problem/trace/report files round-trip")
}

// ------------------------------------------------------------------ driver

fn main() {
    let mut results: Vec<(usize, &str, Outcome, Duration)> = Vec::new();
    let mut record = |id: usize, name: &'static str, limit: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let outcome = match limit {
            Some(l) => within(outcome, elapsed, l),
            None => outcome,
        };
        println!("[{}] criterion {id}: {name}: {} ({:.2?})", if outcome.passed { "PASS" } else { "FAIL" }, outcome.detail, elapsed);
        results.push((id, name, outcome, elapsed));
    };

    record(1, "exact worked problem", Some(Duration::from_secs(1)), &mut worked_problem);

    let mut cases = Vec::new();
    record(2, "orthogonality and termination", Some(Duration::from_secs(30)), &mut || {
        cases = integer_cases()
            .iter()
            .map(|spec| {
                let problem = generate_problem::<Q>(spec).unwrap();
                let trace = run_cg(&problem, &CgOptions::default()).unwrap();
                Case { problem, trace }
            })
            .collect();
        orthogonality_and_termination(&cases)
    });
    record(3, "triple characterization", None, &mut || triple_characterization(&cases));
    record(4, "derivation conditions", None, &mut || derivation_conditions(&cases));
    record(5, "min-norm dominance", None, &mut || min_norm_dominance(&cases));
    record(6, "float64 envelope", Some(Duration::from_secs(60)), &mut float_envelope);
    record(7, "scaling invariance", None, &mut || scaling_invariance(&cases));
    record(8, "shortest-residuals equivalence", None, &mut || shortest_residuals(&cases));
    record(9, "CLI end to end", None, &mut cli_end_to_end);

    let passed = results.iter().filter(|r| r.2.passed).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}

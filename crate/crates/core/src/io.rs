//! File formats: JSON problems, traces, reports and oracle dumps, and Matrix
//! Market for `H`.
//!
//! Every number is written as a string produced by [`Scalar::to_literal`],
//! so files round-trip exactly on the rational backend and bitwise on `f64`.
//! On input both JSON strings (`"3"`, `"-1/2"`, `"0.25"`) and JSON numbers are
//! accepted; a JSON number is read through its shortest decimal form.
//!
//! Matrix Market support covers `matrix {coordinate|array} {real|integer}
//! {general|symmetric}`. As an extension, value tokens may be fractions
//! `p/q`; the writer emits them for non-integer values on the exact backend.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cg::{CgTrace, DirectionMode, IterateRecord, ScalingMode, TerminationReason};
use crate::error::{Error, Result};
use crate::linalg::{SymMatrix, Vector};
use crate::quadratic::QuadraticProblem;
use crate::scalar::{Backend, Scalar};
use crate::subspace::SubspaceSolution;
use crate::verify::{CheckResult, VerificationReport, CHECK_NAMES};

// ---------------------------------------------------------------- Matrix Market

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmLayout {
    /// Nonzeros of the lower triangle, `symmetric`.
    Coordinate,
    /// Lower triangle column by column, `symmetric`.
    Array,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Parses a Matrix Market matrix. Symmetric files may store either triangle;
/// entries given in both triangles must agree exactly.
pub fn parse_matrix_market<T: Scalar>(text: &str) -> Result<SymMatrix<T>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, banner) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let words: Vec<String> = banner.split_whitespace().map(str::to_ascii_lowercase).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(parse_err(1, "expected '%%MatrixMarket matrix <format> <field> <symmetry>'"));
    }
    let coordinate = match words[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(parse_err(1, format!("unsupported format {other:?}"))),
    };
    if !matches!(words[3].as_str(), "real" | "integer" | "double") {
        return Err(parse_err(1, format!("unsupported field {:?}", words[3])));
    }
    let symmetric = match words[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(1, format!("unsupported symmetry {other:?}"))),
    };

    let mut body = lines.filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));
    let (size_line, size) = body.next().ok_or_else(|| parse_err(1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(size_line, format!("bad size token {t:?}"))))
        .collect::<Result<_>>()?;
    let expected_len = if coordinate { 3 } else { 2 };
    if dims.len() != expected_len {
        return Err(parse_err(size_line, format!("size line needs {expected_len} integers")));
    }
    let (rows, cols) = (dims[0], dims[1]);
    if rows != cols {
        return Err(parse_err(size_line, format!("matrix is {rows}x{cols}, not square")));
    }
    if rows == 0 {
        return Err(parse_err(size_line, "matrix has dimension 0"));
    }
    let n = rows;
    let mut grid: Vec<Vec<Option<(T, usize)>>> = vec![vec![None; n]; n];

    let mut place = |i: usize, j: usize, v: T, line: usize| -> Result<()> {
        if let Some((_, first)) = &grid[i][j] {
            return Err(parse_err(
                line,
                format!("duplicate entry ({}, {}), first given on line {first}", i + 1, j + 1),
            ));
        }
        grid[i][j] = Some((v, line));
        Ok(())
    };

    if coordinate {
        let nnz = dims[2];
        let mut seen = 0;
        for (line, l) in body.by_ref() {
            if seen == nnz {
                return Err(parse_err(line, format!("more than the declared {nnz} entries")));
            }
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(parse_err(line, "entry needs 'row col value'"));
            }
            let idx = |t: &str| -> Result<usize> {
                match t.parse::<usize>() {
                    Ok(v) if (1..=n).contains(&v) => Ok(v - 1),
                    _ => Err(parse_err(line, format!("index {t:?} outside 1..={n}"))),
                }
            };
            let (i, j) = (idx(toks[0])?, idx(toks[1])?);
            let v = T::parse_literal(toks[2]).map_err(|_| parse_err(line, format!("bad value {:?}", toks[2])))?;
            place(i, j, v, line)?;
            seen += 1;
        }
        if seen != nnz {
            return Err(parse_err(text.lines().count(), format!("expected {nnz} entries, found {seen}")));
        }
    } else {
        let positions: Vec<(usize, usize)> = if symmetric {
            (0..n).flat_map(|j| (j..n).map(move |i| (i, j))).collect()
        } else {
            (0..n).flat_map(|j| (0..n).map(move |i| (i, j))).collect()
        };
        let mut pos = positions.iter();
        for (line, l) in body.by_ref() {
            for tok in l.split_whitespace() {
                let &(i, j) = pos
                    .next()
                    .ok_or_else(|| parse_err(line, format!("more than the {} expected values", positions.len())))?;
                let v = T::parse_literal(tok).map_err(|_| parse_err(line, format!("bad value {tok:?}")))?;
                place(i, j, v, line)?;
            }
        }
        if pos.next().is_some() {
            return Err(parse_err(text.lines().count(), format!("expected {} values", positions.len())));
        }
    }

    let value = |cell: &Option<(T, usize)>| cell.as_ref().map(|(v, _)| v.clone()).unwrap_or_else(T::zero);
    for i in 0..n {
        for j in 0..i {
            let (lower, upper) = (&grid[i][j], &grid[j][i]);
            let both = lower.is_some() && upper.is_some();
            if (!symmetric || both) && value(lower) != value(upper) {
                let line = lower.as_ref().or(upper.as_ref()).map(|(_, l)| *l).unwrap_or(0);
                return Err(parse_err(
                    line,
                    format!(
                        "asymmetric: entry ({}, {}) = {} but ({}, {}) = {}",
                        i + 1,
                        j + 1,
                        value(lower),
                        j + 1,
                        i + 1,
                        value(upper)
                    ),
                ));
            }
        }
    }
    Ok(SymMatrix::from_lower_fn(n, |i, j| {
        grid[i][j].as_ref().or(grid[j][i].as_ref()).map(|(v, _)| v.clone()).unwrap_or_else(T::zero)
    }))
}

pub fn load_matrix_market<T: Scalar>(path: &Path) -> Result<SymMatrix<T>> {
    parse_matrix_market(&fs::read_to_string(path)?)
}

pub fn matrix_market_string<T: Scalar>(h: &SymMatrix<T>, layout: MmLayout) -> String {
    let n = h.dim();
    let lower: Vec<(usize, usize)> = (0..n).flat_map(|j| (j..n).map(move |i| (i, j))).collect();
    let integer = h.rows().iter().flatten().all(|v| v.to_literal().parse::<i64>().is_ok());
    let field = if integer { "integer" } else { "real" };
    let mut out = String::new();
    match layout {
        MmLayout::Coordinate => {
            let nz: Vec<&(usize, usize)> = lower.iter().filter(|(i, j)| !h.get(*i, *j).is_zero()).collect();
            out.push_str(&format!("%%MatrixMarket matrix coordinate {field} symmetric\n"));
            out.push_str(&format!("{n} {n} {}\n", nz.len()));
            for &&(i, j) in &nz {
                out.push_str(&format!("{} {} {}\n", i + 1, j + 1, h.get(i, j).to_literal()));
            }
        }
        MmLayout::Array => {
            out.push_str(&format!("%%MatrixMarket matrix array {field} symmetric\n"));
            out.push_str(&format!("{n} {n}\n"));
            for &(i, j) in &lower {
                out.push_str(&h.get(i, j).to_literal());
                out.push('\n');
            }
        }
    }
    out
}

pub fn save_matrix_market<T: Scalar>(h: &SymMatrix<T>, path: &Path, layout: MmLayout) -> Result<()> {
    fs::write(path, matrix_market_string(h, layout))?;
    Ok(())
}

// ---------------------------------------------------------------- problems

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum HessianSource {
    Dense(Vec<Vec<Value>>),
    MatrixMarket(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    n: usize,
    #[serde(rename = "H")]
    h: HessianSource,
    c: Vec<Value>,
    x0: Vec<Value>,
}

/// How `H` is stored when a problem is saved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianStorage {
    Dense,
    /// A Matrix Market file next to the JSON file, named after it.
    MatrixMarket(MmLayout),
}

fn scalar_from_value<T: Scalar>(v: &Value, what: &str) -> Result<T> {
    match v {
        Value::String(s) => T::parse_literal(s),
        Value::Number(num) => T::parse_literal(&num.to_string()),
        other => Err(Error::InvalidSpec(format!("{what}: expected a number or string, got {other}"))),
    }
}

fn vector_from_values<T: Scalar>(values: &[Value], what: &str) -> Result<Vector<T>> {
    Vector::new(values.iter().map(|v| scalar_from_value(v, what)).collect::<Result<_>>()?)
}

fn literal_values<T: Scalar>(v: &Vector<T>) -> Vec<Value> {
    v.iter().map(|x| Value::String(x.to_literal())).collect()
}

/// Parses the JSON problem schema. `base_dir` resolves a relative
/// `matrix_market` path; `default_id` is used when the file has no `id`.
pub fn parse_problem_json<T: Scalar>(text: &str, base_dir: Option<&Path>, default_id: &str) -> Result<QuadraticProblem<T>> {
    let file: ProblemFile = serde_json::from_str(text)?;
    let h = match &file.h {
        HessianSource::Dense(rows) => {
            let rows: Vec<Vec<T>> = rows
                .iter()
                .map(|row| row.iter().map(|v| scalar_from_value(v, "H")).collect::<Result<_>>())
                .collect::<Result<_>>()?;
            SymMatrix::from_rows(rows)?
        }
        HessianSource::MatrixMarket(rel) => {
            let path = match base_dir {
                Some(dir) => dir.join(rel),
                None => PathBuf::from(rel),
            };
            load_matrix_market(&path)?
        }
    };
    if h.dim() != file.n {
        return Err(Error::InvalidSpec(format!("n = {} but H is {}x{}", file.n, h.dim(), h.dim())));
    }
    let c = vector_from_values(&file.c, "c")?;
    let x0 = vector_from_values(&file.x0, "x0")?;
    QuadraticProblem::new(file.id.unwrap_or_else(|| default_id.to_string()), h, c, x0)
}

pub fn load_problem<T: Scalar>(path: &Path) -> Result<QuadraticProblem<T>> {
    let text = fs::read_to_string(path)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("problem");
    parse_problem_json(&text, path.parent(), stem)
}

pub fn problem_to_json<T: Scalar>(problem: &QuadraticProblem<T>, matrix_market_path: Option<&str>) -> Value {
    let h = match matrix_market_path {
        Some(p) => HessianSource::MatrixMarket(p.to_string()),
        None => HessianSource::Dense(
            problem
                .hessian()
                .rows()
                .iter()
                .map(|row| row.iter().map(|v| Value::String(v.to_literal())).collect())
                .collect(),
        ),
    };
    let file = ProblemFile {
        id: Some(problem.id().to_string()),
        n: problem.dim(),
        h,
        c: literal_values(problem.linear_term()),
        x0: literal_values(problem.start()),
    };
    serde_json::to_value(file).expect("problem serializes")
}

/// Writes `path` (JSON) and, for Matrix Market storage, `path` with the
/// extension `.mtx`. Returns the files written.
pub fn save_problem<T: Scalar>(problem: &QuadraticProblem<T>, path: &Path, storage: HessianStorage) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mm_name = match storage {
        HessianStorage::Dense => None,
        HessianStorage::MatrixMarket(layout) => {
            let mtx = path.with_extension("mtx");
            save_matrix_market(problem.hessian(), &mtx, layout)?;
            written.push(mtx.clone());
            Some(mtx.file_name().and_then(|s| s.to_str()).unwrap_or("H.mtx").to_string())
        }
    };
    write_json(path, &problem_to_json(problem, mm_name.as_deref()))?;
    written.insert(0, path.to_path_buf());
    Ok(written)
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------- traces

#[derive(Debug, Serialize, Deserialize)]
struct RecordFile {
    k: usize,
    x: Vec<String>,
    g: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scaling_constant: Option<String>,
    grad_norm_sq: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceFile {
    problem_id: String,
    backend: Backend,
    n: usize,
    direction: DirectionMode,
    scaling: ScalingMode,
    termination_index: usize,
    termination_reason: TerminationReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    diagnostic: Option<String>,
    records: Vec<RecordFile>,
}

fn strings<T: Scalar>(v: &Vector<T>) -> Vec<String> {
    v.iter().map(Scalar::to_literal).collect()
}

fn parse_vec<T: Scalar>(v: &[String]) -> Result<Vector<T>> {
    Vector::new(v.iter().map(|s| T::parse_literal(s)).collect::<Result<_>>()?)
}

fn parse_opt<T: Scalar>(v: &Option<String>) -> Result<Option<T>> {
    v.as_deref().map(T::parse_literal).transpose()
}

pub fn trace_to_json<T: Scalar>(trace: &CgTrace<T>) -> Value {
    let file = TraceFile {
        problem_id: trace.problem_id.clone(),
        backend: trace.backend,
        n: trace.n,
        direction: trace.direction,
        scaling: trace.scaling,
        termination_index: trace.termination_index,
        termination_reason: trace.termination_reason,
        diagnostic: trace.diagnostic.clone(),
        records: trace
            .records
            .iter()
            .map(|r| RecordFile {
                k: r.k,
                x: strings(&r.x),
                g: strings(&r.g),
                p: r.p.as_ref().map(strings),
                theta: r.theta.as_ref().map(Scalar::to_literal),
                beta: r.beta.as_ref().map(Scalar::to_literal),
                scaling_constant: r.scaling_constant.as_ref().map(Scalar::to_literal),
                grad_norm_sq: r.grad_norm_sq.to_literal(),
            })
            .collect(),
    };
    serde_json::to_value(file).expect("trace serializes")
}

/// Reads a trace written by [`trace_to_json`]. The trace's backend must
/// match `T`.
pub fn trace_from_json<T: Scalar>(value: Value) -> Result<CgTrace<T>> {
    let file: TraceFile = serde_json::from_value(value)?;
    if file.backend != T::BACKEND {
        return Err(Error::TraceMismatch(format!(
            "trace was written by the {} backend, reading as {}",
            file.backend,
            T::BACKEND
        )));
    }
    let records = file
        .records
        .iter()
        .enumerate()
        .map(|(idx, r)| {
            if r.k != idx {
                return Err(Error::TraceMismatch(format!("record {idx} has k = {}", r.k)));
            }
            Ok(IterateRecord {
                k: r.k,
                x: parse_vec(&r.x)?,
                g: parse_vec(&r.g)?,
                p: r.p.as_deref().map(parse_vec).transpose()?,
                theta: parse_opt(&r.theta)?,
                beta: parse_opt(&r.beta)?,
                scaling_constant: parse_opt(&r.scaling_constant)?,
                grad_norm_sq: T::parse_literal(&r.grad_norm_sq)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if records.is_empty() {
        return Err(Error::TraceMismatch("trace has no records".into()));
    }
    Ok(CgTrace {
        problem_id: file.problem_id,
        backend: file.backend,
        n: file.n,
        direction: file.direction,
        scaling: file.scaling,
        records,
        termination_index: file.termination_index,
        termination_reason: file.termination_reason,
        diagnostic: file.diagnostic,
    })
}

/// Backend recorded in a trace file, for choosing `T` before parsing.
pub fn trace_backend(value: &Value) -> Result<Backend> {
    let tag = value
        .get("backend")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::TraceMismatch("trace has no backend tag".into()))?;
    tag.parse()
}

pub fn load_json(path: &Path) -> Result<Value> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

// ---------------------------------------------------------------- reports

#[derive(Debug, Serialize, Deserialize)]
struct CheckFile {
    name: String,
    paper_anchor: String,
    measured: String,
    tolerance: String,
    passed: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportFile {
    problem_id: String,
    backend: Backend,
    r: usize,
    n: usize,
    checks: Vec<CheckFile>,
    overall: bool,
}

pub fn report_to_json<T: Scalar>(report: &VerificationReport<T>) -> Value {
    let file = ReportFile {
        problem_id: report.problem_id.clone(),
        backend: report.backend,
        r: report.r,
        n: report.n,
        checks: report
            .checks
            .iter()
            .map(|c| CheckFile {
                name: c.name.to_string(),
                paper_anchor: c.anchor.to_string(),
                measured: c.measured.to_literal(),
                tolerance: c.tolerance.to_literal(),
                passed: c.passed,
            })
            .collect(),
        overall: report.overall,
    };
    serde_json::to_value(file).expect("report serializes")
}

pub fn report_from_json<T: Scalar>(value: Value) -> Result<VerificationReport<T>> {
    let file: ReportFile = serde_json::from_value(value)?;
    if file.backend != T::BACKEND {
        return Err(Error::InvalidSpec(format!("report backend {} read as {}", file.backend, T::BACKEND)));
    }
    let checks = file
        .checks
        .into_iter()
        .map(|c| {
            let name = CHECK_NAMES
                .iter()
                .copied()
                .find(|n| *n == c.name)
                .ok_or_else(|| Error::InvalidSpec(format!("unknown check {:?}", c.name)))?;
            let template = CheckResult::<T>::named(name);
            Ok(CheckResult {
                measured: T::parse_literal(&c.measured)?,
                tolerance: T::parse_literal(&c.tolerance)?,
                passed: c.passed,
                ..template
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VerificationReport {
        problem_id: file.problem_id,
        backend: file.backend,
        n: file.n,
        r: file.r,
        checks,
        overall: file.overall,
    })
}

// ---------------------------------------------------------------- oracle dumps

#[derive(Debug, Serialize)]
struct OraclePoint {
    k: usize,
    coordinates: Vec<String>,
    x: Vec<String>,
    objective: String,
    rank: usize,
    trace_x: Vec<String>,
    deviation: String,
}

#[derive(Debug, Serialize)]
struct OracleFile {
    problem_id: String,
    backend: Backend,
    n: usize,
    points: Vec<OraclePoint>,
}

/// Oracle minimizers for `k = 1..=r` next to the trace iterates.
pub fn oracle_to_json<T: Scalar>(trace: &CgTrace<T>, solutions: &[SubspaceSolution<T>]) -> Value {
    let points = solutions
        .iter()
        .zip(&trace.records[1..])
        .map(|(s, rec)| OraclePoint {
            k: rec.k,
            coordinates: s.coordinates.iter().map(Scalar::to_literal).collect(),
            x: strings(&s.point),
            objective: s.objective_value.to_literal(),
            rank: s.rank,
            trace_x: strings(&rec.x),
            deviation: rec.x.sub_unchecked(&s.point).norm().to_literal(),
        })
        .collect();
    serde_json::to_value(OracleFile {
        problem_id: trace.problem_id.clone(),
        backend: trace.backend,
        n: trace.n,
        points,
    })
    .expect("oracle dump serializes")
}

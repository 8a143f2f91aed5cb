//! Seeded test problems.
//!
//! Every generated problem uses `c = −H·1`, so `x* = (1, …, 1)`.
//!
//! Randomness comes from xoshiro256** seeded through SplitMix64
//! (`Xoshiro256StarStar::seed_from_u64`). Only raw `next_u64` outputs are
//! consumed, in a fixed order, and mapped as follows, so the instances can
//! be rebuilt bit-for-bit elsewhere:
//!
//! * integer in `[lo, hi]`: `lo + next_u64() % (hi − lo + 1)`
//! * unit float in `[0, 1)`: `(next_u64() >> 11) · 2⁻⁵³`
//!
//! `rand_spd` draws the `n − 2` interior eigenvalues first (`λ = κ^u`;
//! `λ_0 = 1`, `λ_{n−1} = κ`), then `n` Householder vectors with entries in
//! `[−9, 9]` (an all-zero vector is redrawn). On the exact backend the
//! eigenvalues are rounded to the nearest integer. `H = QΛQᵀ` is assembled
//! reflection by reflection and only its lower triangle is kept, so it is
//! symmetric by construction.
//!
//! `int_spd` draws an `n × n` matrix `A` row-major with entries in `[−3, 3]`,
//! then `x0` with entries in `[−3, 3]`, and sets `H = AᵀA + I`. All of its data
//! are integers, which keeps exact runs cheap.

use std::fmt;
use std::str::FromStr;

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{SymMatrix, Vector};
use crate::quadratic::QuadraticProblem;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Diag,
    Laplacian1d,
    RandSpd,
    IntSpd,
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Diag => "diag",
            ProblemKind::Laplacian1d => "laplacian1d",
            ProblemKind::RandSpd => "rand_spd",
            ProblemKind::IntSpd => "int_spd",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diag" => Ok(ProblemKind::Diag),
            "laplacian1d" => Ok(ProblemKind::Laplacian1d),
            "rand_spd" | "rand-spd" => Ok(ProblemKind::RandSpd),
            "int_spd" | "int-spd" => Ok(ProblemKind::IntSpd),
            _ => Err(Error::InvalidSpec(format!("unknown problem kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `diag` only: explicit diagonal as number literals (`"3"`, `"1/2"`, `"0.25"`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<String>>,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind, n: usize) -> Self {
        ProblemSpec {
            kind,
            n,
            condition: None,
            seed: None,
            spectrum: None,
        }
    }

    pub fn diag(n: usize) -> Self {
        Self::new(ProblemKind::Diag, n)
    }

    pub fn laplacian1d(n: usize) -> Self {
        Self::new(ProblemKind::Laplacian1d, n)
    }

    pub fn rand_spd(n: usize, condition: f64, seed: u64) -> Self {
        ProblemSpec {
            condition: Some(condition),
            seed: Some(seed),
            ..Self::new(ProblemKind::RandSpd, n)
        }
    }

    pub fn int_spd(n: usize, seed: u64) -> Self {
        ProblemSpec {
            seed: Some(seed),
            ..Self::new(ProblemKind::IntSpd, n)
        }
    }

    pub fn with_spectrum(mut self, spectrum: Vec<String>) -> Self {
        self.n = spectrum.len();
        self.spectrum = Some(spectrum);
        self
    }

    /// Identifier used for the generated problem, e.g. `rand_spd-n20-k1e4-s7`.
    pub fn id(&self) -> String {
        let mut id = format!("{}-n{}", self.kind, self.n);
        if let Some(c) = self.condition {
            id.push_str(&format!("-k{c:e}"));
        }
        if let Some(s) = self.seed {
            id.push_str(&format!("-s{s}"));
        }
        if self.spectrum.is_some() {
            id.push_str("-spectrum");
        }
        id
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidSpec("n must be at least 1".into()));
        }
        match self.kind {
            ProblemKind::RandSpd => {
                let cond = self
                    .condition
                    .ok_or_else(|| Error::InvalidSpec("rand_spd requires a condition number".into()))?;
                if !(cond >= 1.0) || !cond.is_finite() {
                    return Err(Error::InvalidSpec(format!("condition must be finite and >= 1, got {cond}")));
                }
                if self.seed.is_none() {
                    return Err(Error::InvalidSpec("rand_spd requires a seed".into()));
                }
            }
            ProblemKind::IntSpd if self.seed.is_none() => {
                return Err(Error::InvalidSpec("int_spd requires a seed".into()));
            }
            _ => {}
        }
        if let Some(s) = &self.spectrum {
            if self.kind != ProblemKind::Diag {
                return Err(Error::InvalidSpec("a spectrum is only accepted for diag".into()));
            }
            if s.len() != self.n {
                return Err(Error::InvalidSpec(format!("spectrum has {} entries, n = {}", s.len(), self.n)));
            }
        }
        Ok(())
    }
}

struct Draws(Xoshiro256StarStar);

impl Draws {
    fn new(seed: u64) -> Self {
        Draws(Xoshiro256StarStar::seed_from_u64(seed))
    }

    fn int(&mut self, lo: i64, hi: i64) -> i64 {
        let span = (hi - lo + 1) as u64;
        lo + (self.0.next_u64() % span) as i64
    }

    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

pub fn generate_problem<T: Scalar>(spec: &ProblemSpec) -> Result<QuadraticProblem<T>> {
    spec.validate()?;
    let n = spec.n;
    let (h, x0) = match spec.kind {
        ProblemKind::Diag => {
            let values = match &spec.spectrum {
                Some(s) => s.iter().map(|v| T::parse_literal(v)).collect::<Result<Vec<T>>>()?,
                None => (1..=n as i64).map(T::from_i64).collect(),
            };
            (SymMatrix::diag(&values)?, Vector::zeros(n))
        }
        ProblemKind::Laplacian1d => {
            let h = SymMatrix::from_lower_fn(n, |i, j| match i - j {
                0 => T::from_i64(2),
                1 => T::from_i64(-1),
                _ => T::zero(),
            });
            (h, Vector::zeros(n))
        }
        ProblemKind::RandSpd => {
            let cond = spec.condition.unwrap_or(1.0);
            (rand_spd::<T>(n, cond, spec.seed.unwrap_or(0))?, Vector::zeros(n))
        }
        ProblemKind::IntSpd => int_spd::<T>(n, spec.seed.unwrap_or(0)),
    };
    let c = h.mat_vec(&Vector::ones(n))?.neg();
    QuadraticProblem::new(spec.id(), h, c, x0)
}

fn eigenvalues<T: Scalar>(n: usize, cond: f64, draws: &mut Draws) -> Result<Vec<T>> {
    let to_t = |v: f64| -> Result<T> {
        if T::EXACT {
            Ok(T::from_f64(v.round().max(1.0)).expect("finite eigenvalue"))
        } else {
            T::from_f64(v).ok_or_else(|| Error::InvalidSpec(format!("eigenvalue {v} not representable")))
        }
    };
    let mut out = Vec::with_capacity(n);
    out.push(to_t(1.0)?);
    let interior: Vec<f64> = (0..n.saturating_sub(2)).map(|_| cond.powf(draws.unit())).collect();
    for v in interior {
        out.push(to_t(v)?);
    }
    if n > 1 {
        out.push(to_t(cond)?);
    }
    Ok(out)
}

fn rand_spd<T: Scalar>(n: usize, cond: f64, seed: u64) -> Result<SymMatrix<T>> {
    let mut draws = Draws::new(seed);
    let lambda = eigenvalues::<T>(n, cond, &mut draws)?;
    let mut h: Vec<Vec<T>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { lambda[i].clone() } else { T::zero() }).collect())
        .collect();
    for _ in 0..n {
        let v = loop {
            let v: Vec<i64> = (0..n).map(|_| draws.int(-9, 9)).collect();
            if v.iter().any(|&x| x != 0) {
                break v;
            }
        };
        h = reflect(&h, &v);
    }
    Ok(SymMatrix::from_lower_fn(n, |i, j| h[i][j].clone()))
}

/// `RHR` with `R = I − 2vvᵀ/(vᵀv)`, expanded as
/// `H − a vwᵀ − a wvᵀ + a²(vᵀw) vvᵀ` where `w = Hv` and `a = 2/(vᵀv)`.
fn reflect<T: Scalar>(h: &[Vec<T>], v: &[i64]) -> Vec<Vec<T>> {
    let n = v.len();
    let vt: Vec<T> = v.iter().map(|&x| T::from_i64(x)).collect();
    let a = T::from_i64(2) / T::from_i64(v.iter().map(|x| x * x).sum());
    let w: Vec<T> = (0..n)
        .map(|i| (0..n).fold(T::zero(), |acc, j| acc + h[i][j].clone() * &vt[j]))
        .collect();
    let vw = (0..n).fold(T::zero(), |acc, i| acc + vt[i].clone() * &w[i]);
    let aa_vw = a.clone() * &a * vw;
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    h[i][j].clone() - a.clone() * &vt[i] * &w[j] - a.clone() * &w[i] * &vt[j]
                        + aa_vw.clone() * &vt[i] * &vt[j]
                })
                .collect()
        })
        .collect()
}

fn int_spd<T: Scalar>(n: usize, seed: u64) -> (SymMatrix<T>, Vector<T>) {
    let mut draws = Draws::new(seed);
    let a: Vec<Vec<i64>> = (0..n).map(|_| (0..n).map(|_| draws.int(-3, 3)).collect()).collect();
    let x0: Vec<i64> = (0..n).map(|_| draws.int(-3, 3)).collect();
    let h = SymMatrix::from_lower_fn(n, |i, j| {
        let dot: i64 = (0..n).map(|k| a[k][i] * a[k][j]).sum();
        T::from_i64(dot + i64::from(i == j))
    });
    (h, Vector::from_i64(&x0))
}

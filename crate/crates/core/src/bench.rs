//! Benchmark functions on box domains, and the `m0` performance metric.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Sphere,
    ShiftedSphere,
    Cone,
    Rastrigin,
}

/// Norm used by the cone: Euclidean gives a round cone, Chebyshev a pyramid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConeNorm {
    #[default]
    Euclidean,
    Chebyshev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemParams {
    /// Location of the optimum; the origin when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_star: Option<Vec<f64>>,
    /// Cone apex value.
    pub y_min: f64,
    /// Cone slope.
    pub slope: f64,
    pub norm: ConeNorm,
}

impl Default for ProblemParams {
    fn default() -> Self {
        Self {
            x_star: None,
            y_min: 0.0,
            slope: 1.0,
            norm: ConeNorm::Euclidean,
        }
    }
}

/// Either one bound shared by every dimension or one per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Shared(f64),
    PerDim(Vec<f64>),
}

/// On-disk problem descriptor: `{kind, d, lo, hi, params, c, r}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDescriptor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub kind: ProblemKind,
    pub d: usize,
    pub lo: Bound,
    pub hi: Bound,
    #[serde(default)]
    pub params: ProblemParams,
    #[serde(default = "one")]
    pub c: u64,
    #[serde(default = "one")]
    pub r: u64,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkProblem {
    label: String,
    kind: ProblemKind,
    lo: Vec<f64>,
    hi: Vec<f64>,
    params: ProblemParams,
    c: u64,
    r: u64,
}

impl BenchmarkProblem {
    pub fn new(
        label: impl Into<String>,
        kind: ProblemKind,
        lo: Vec<f64>,
        hi: Vec<f64>,
        params: ProblemParams,
        c: u64,
        r: u64,
    ) -> Result<Self> {
        let d = lo.len();
        if d == 0 || hi.len() != d {
            return Err(Error::Shape(format!(
                "domain bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if let Some(i) = (0..d).find(|&i| !(lo[i] < hi[i]) || !lo[i].is_finite() || !hi[i].is_finite()) {
            return Err(Error::domain(format!(
                "dimension {i}: need finite lo < hi, got [{}, {}]",
                lo[i], hi[i]
            )));
        }
        if c < 1 || r < 1 {
            return Err(Error::domain(format!("budget c={c} and rounds r={r} must be ≥ 1")));
        }
        if let Some(x) = &params.x_star {
            if x.len() != d {
                return Err(Error::Shape(format!("x_star has {} coordinates, d = {d}", x.len())));
            }
        }
        if kind == ProblemKind::Cone && !(params.slope > 0.0 && params.slope.is_finite()) {
            return Err(Error::domain("cone slope must be positive"));
        }
        Ok(Self {
            label: label.into(),
            kind,
            lo,
            hi,
            params,
            c,
            r,
        })
    }

    /// Convenience constructor for a cube `[lo, hi]^d`.
    pub fn cube(
        label: impl Into<String>,
        kind: ProblemKind,
        d: usize,
        lo: f64,
        hi: f64,
        params: ProblemParams,
    ) -> Result<Self> {
        Self::new(label, kind, vec![lo; d], vec![hi; d], params, 1, 1)
    }

    pub fn from_descriptor(desc: ProblemDescriptor, default_label: &str) -> Result<Self> {
        let expand = |b: Bound, what: &str| -> Result<Vec<f64>> {
            match b {
                Bound::Shared(v) => Ok(vec![v; desc.d]),
                Bound::PerDim(v) if v.len() == desc.d => Ok(v),
                Bound::PerDim(v) => Err(Error::Shape(format!(
                    "{what} has {} entries, d = {}",
                    v.len(),
                    desc.d
                ))),
            }
        };
        let lo = expand(desc.lo, "lo")?;
        let hi = expand(desc.hi, "hi")?;
        let label = desc.label.unwrap_or_else(|| default_label.to_owned());
        Self::new(label, desc.kind, lo, hi, desc.params, desc.c, desc.r)
    }

    pub fn descriptor(&self) -> ProblemDescriptor {
        ProblemDescriptor {
            label: Some(self.label.clone()),
            kind: self.kind,
            d: self.d(),
            lo: Bound::PerDim(self.lo.clone()),
            hi: Bound::PerDim(self.hi.clone()),
            params: self.params.clone(),
            c: self.c,
            r: self.r,
        }
    }

    /// Reads a JSON descriptor; the label defaults to the file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let desc: ProblemDescriptor = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("problem");
        let stem = stem.strip_suffix(".problem").unwrap_or(stem);
        Self::from_descriptor(desc, stem)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn d(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    pub fn budget(&self) -> u64 {
        self.c
    }

    pub fn rounds(&self) -> u64 {
        self.r
    }

    /// Location of the global optimum.
    pub fn optimum(&self) -> Vec<f64> {
        self.params
            .x_star
            .clone()
            .unwrap_or_else(|| vec![0.0; self.d()])
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.d()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    /// Objective value at `x`, which must lie in the domain.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d() {
            return Err(Error::Shape(format!("point has {} coordinates, d = {}", x.len(), self.d())));
        }
        if !self.contains(x) {
            return Err(Error::domain(format!("point {x:?} outside the domain")));
        }
        Ok(self.value(x))
    }

    /// Objective value without the domain check.
    pub(crate) fn value(&self, x: &[f64]) -> f64 {
        let shift = |i: usize| self.params.x_star.as_ref().map_or(0.0, |s| s[i]);
        match self.kind {
            ProblemKind::Sphere => x.iter().map(|v| v * v).sum(),
            ProblemKind::ShiftedSphere => x
                .iter()
                .enumerate()
                .map(|(i, v)| (v - shift(i)).powi(2))
                .sum(),
            ProblemKind::Cone => {
                let dist = match self.params.norm {
                    ConeNorm::Euclidean => x
                        .iter()
                        .enumerate()
                        .map(|(i, v)| (v - shift(i)).powi(2))
                        .sum::<f64>()
                        .sqrt(),
                    ConeNorm::Chebyshev => x
                        .iter()
                        .enumerate()
                        .map(|(i, v)| (v - shift(i)).abs())
                        .fold(0.0, f64::max),
                };
                self.params.y_min + self.params.slope * dist
            }
            ProblemKind::Rastrigin => {
                10.0 * x.len() as f64
                    + x.iter()
                        .enumerate()
                        .map(|(i, v)| {
                            let z = v - shift(i);
                            z * z - 10.0 * (2.0 * PI * z).cos()
                        })
                        .sum::<f64>()
            }
        }
    }
}

/// `m0`: mean over rounds of the best value found within each round.
///
/// `rounds[j]` holds the (up to `c`) objective values of round `j`.
pub fn metric_m0(rounds: &[Vec<f64>]) -> Result<f64> {
    if rounds.is_empty() || rounds.iter().any(|r| r.is_empty()) {
        return Err(Error::Shape("m0 needs at least one non-empty round".into()));
    }
    if rounds.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::domain("m0 needs finite objective values"));
    }
    let total: f64 = rounds
        .iter()
        .map(|r| r.iter().copied().fold(f64::INFINITY, f64::min))
        .sum();
    Ok(total / rounds.len() as f64)
}

//! Absolute-rank functions.
//!
//! An [`AbsRankFn`] maps a metric value `t` to the probability that uniform
//! random search reaches a metric of at most `t`. Single-evaluation CDFs come
//! from closed forms (sphere, cone, uniform, Gaussian) or from sampled
//! function values; [`AbsRankFn::compose_budget`] and
//! [`AbsRankFn::compose_rounds`] lift them to the best-of-`c` and
//! mean-of-`r` metric `m0`.

use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sobol::{SobolStream, TABLE_ID};
use crate::special::{ln_gamma, normal_cdf};

pub const FORMAT_VERSION: u32 = 1;

/// Sobol points used to extend the sphere CDF past the inscribed ball.
pub const DEFAULT_SPHERE_EXTENSION_LOG2N: u32 = 14;

const TAIL_EPS: f64 = 1e-12;

/// Closed-form single-evaluation CDF of the sphere function on `[-w, w]^d`:
/// the volume of the ball of radius `sqrt(t)` over the volume of the box.
///
/// Exact only while the ball fits in the box (`t ≤ w²`); past that it
/// overestimates, and may exceed one.
pub fn sphere_formula(d: usize, w: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let d = d as f64;
    let half = d / 2.0;
    (half * (PI * t).ln() - d * (2.0 * w).ln() - ln_gamma(half + 1.0)).exp()
}

/// How the sphere CDF continues once the ball of radius `sqrt(t)` pokes out
/// of the box.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SphereTail {
    /// Conditional empirical CDF of Sobol samples above `w²`, scaled onto the
    /// mass the closed form leaves.
    #[default]
    Sampled,
    /// Keep using the closed form, clamped at one.
    Formula,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoundsMode {
    /// `(r−1)`-fold self-convolution of the discretized density.
    #[default]
    Convolution,
    /// Gaussian with the per-round mean and variance divided by `r`.
    NormalApprox,
}

/// Provenance and diagnostics carried alongside a CDF.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Metadata {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampler: Option<String>,
    /// Sphere: metric value where the closed form hands over to its tail.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossover: Option<f64>,
    /// Empirical: jump between the lower tail and the first knot.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_gap_lower: Option<f64>,
    /// Empirical: jump between the last knot and the upper tail.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_gap_upper: Option<f64>,
}

/// Piecewise-linear CDF built from sorted samples.
///
/// Knot `y_k` sits at level `|{y ≤ y_k}| / (N+1)`. Below the first knot the
/// CDF decays as `e^{t−y₁}/(N+1)`; above the last it rises as
/// `1 − e^{−ln(N+1)·t/y_N}`. When `y_N ≤ 0` the upper tail is applied in
/// coordinates shifted by `y₁` so that it stays increasing. Known bounds
/// replace a tail with a straight segment to `(y_min, 0)` or `(y_max, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    knots: Vec<f64>,
    counts: Vec<u64>,
    n: u64,
    known_min: Option<f64>,
    known_max: Option<f64>,
}

impl EmpiricalCdf {
    pub fn new(samples: &[f64], known_min: Option<f64>, known_max: Option<f64>) -> Result<Self> {
        if let Some(k) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: k + 1,
                col: 1,
                msg: format!("sample {} is not finite", samples[k]),
            });
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut knots: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut counts: Vec<u64> = Vec::with_capacity(sorted.len());
        for (i, &y) in sorted.iter().enumerate() {
            // ties collapse onto one knot at the highest tied level
            if knots.last() == Some(&y) {
                *counts.last_mut().unwrap() = i as u64 + 1;
            } else {
                knots.push(y);
                counts.push(i as u64 + 1);
            }
        }
        Self::from_parts(knots, counts, sorted.len() as u64, known_min, known_max)
    }

    fn from_parts(
        knots: Vec<f64>,
        counts: Vec<u64>,
        n: u64,
        known_min: Option<f64>,
        known_max: Option<f64>,
    ) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::SampleSize(format!(
                "need at least 2 distinct samples, got {}",
                knots.len()
            )));
        }
        if knots.len() != counts.len()
            || knots.windows(2).any(|w| !(w[0] < w[1]))
            || counts.windows(2).any(|w| !(w[0] < w[1]))
            || counts.last() != Some(&n)
            || knots.iter().any(|k| !k.is_finite())
        {
            return Err(Error::Format("inconsistent empirical knots".into()));
        }
        if let Some(lo) = known_min {
            if !(lo.is_finite() && lo <= knots[0]) {
                return Err(Error::domain(format!(
                    "known minimum {lo} above the smallest sample {}",
                    knots[0]
                )));
            }
        }
        if let Some(hi) = known_max {
            if !(hi.is_finite() && hi >= knots[knots.len() - 1]) {
                return Err(Error::domain(format!(
                    "known maximum {hi} below the largest sample {}",
                    knots[knots.len() - 1]
                )));
            }
        }
        Ok(Self {
            knots,
            counts,
            n,
            known_min,
            known_max,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn sample_count(&self) -> u64 {
        self.n
    }

    pub fn known_min(&self) -> Option<f64> {
        self.known_min
    }

    pub fn known_max(&self) -> Option<f64> {
        self.known_max
    }

    fn level(&self, k: usize) -> f64 {
        self.counts[k] as f64 / (self.n as f64 + 1.0)
    }

    fn first(&self) -> f64 {
        self.knots[0]
    }

    fn last(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    fn lower_tail(&self, t: f64) -> f64 {
        (t - self.first()).exp() / (self.n as f64 + 1.0)
    }

    fn upper_tail(&self, t: f64) -> f64 {
        let ln_n1 = (self.n as f64 + 1.0).ln();
        let last = self.last();
        if last > 0.0 {
            -(-ln_n1 / last * t).exp_m1()
        } else {
            let first = self.first();
            -(-ln_n1 / (last - first) * (t - first)).exp_m1()
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let (first, last) = (self.first(), self.last());
        if t < first {
            return match self.known_min {
                Some(lo) if t <= lo => 0.0,
                Some(lo) => self.level(0) * (t - lo) / (first - lo),
                None => self.lower_tail(t),
            };
        }
        if t > last {
            let top = self.level(self.knots.len() - 1);
            return match self.known_max {
                Some(hi) if t >= hi => 1.0,
                Some(hi) => top + (1.0 - top) * (t - last) / (hi - last),
                None => self.upper_tail(t),
            };
        }
        // last knot ≤ t
        let k = self.knots.partition_point(|&y| y <= t) - 1;
        if self.knots[k] == t || k + 1 == self.knots.len() {
            return self.level(k);
        }
        let (y0, y1) = (self.knots[k], self.knots[k + 1]);
        let (v0, v1) = (self.level(k), self.level(k + 1));
        v0 + (t - y0) * (v1 - v0) / (y1 - y0)
    }

    fn tail_gaps(&self) -> (Option<f64>, Option<f64>) {
        let lower = self
            .known_min
            .is_none()
            .then(|| self.level(0) - self.lower_tail(self.first()));
        let upper = self
            .known_max
            .is_none()
            .then(|| self.upper_tail(self.last()) - self.level(self.knots.len() - 1));
        (lower, upper)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum RoundsCurve {
    Table { xs: Vec<f64>, ys: Vec<f64> },
    Normal { mu: f64, sigma: f64 },
}

impl RoundsCurve {
    fn value(&self, t: f64) -> f64 {
        match self {
            RoundsCurve::Normal { mu, sigma } => normal_cdf((t - mu) / sigma),
            RoundsCurve::Table { xs, ys } => {
                if t <= xs[0] {
                    return 0.0;
                }
                if t >= xs[xs.len() - 1] {
                    return 1.0;
                }
                let k = xs.partition_point(|&x| x <= t) - 1;
                let (x0, x1) = (xs[k], xs[k + 1]);
                ys[k] + (t - x0) * (ys[k + 1] - ys[k]) / (x1 - x0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Sphere {
        d: usize,
        w: f64,
        tail: SphereTail,
        extension_log2n: u32,
        /// Conditional CDF of sampled values above `w²`.
        extension: Option<EmpiricalCdf>,
    },
    Cone {
        d: usize,
        y_min: f64,
        y_max: f64,
    },
    Uniform {
        y_min: f64,
        y_max: f64,
    },
    Gaussian {
        mu: f64,
        sigma: f64,
    },
    Empirical(EmpiricalCdf),
    Budget {
        base: Box<AbsRankFn>,
        c: u64,
    },
    Rounds {
        base: Box<AbsRankFn>,
        r: u64,
        mode: RoundsMode,
        grid: usize,
        curve: RoundsCurve,
    },
}

/// A monotone CDF from metric values to absolute ranks in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsRankFn {
    kind: Kind,
    metadata: Metadata,
}

impl AbsRankFn {
    /// Sphere `Σ x_i²` on `[-w, w]^d` with the sampled tail.
    pub fn sphere(d: usize, w: f64) -> Result<Self> {
        Self::sphere_with(d, w, SphereTail::Sampled, DEFAULT_SPHERE_EXTENSION_LOG2N)
    }

    pub fn sphere_with(d: usize, w: f64, tail: SphereTail, extension_log2n: u32) -> Result<Self> {
        if d == 0 {
            return Err(Error::domain("sphere dimension must be ≥ 1"));
        }
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::domain(format!("half-width {w} must be positive")));
        }
        let crossover = w * w;
        let extension = match tail {
            SphereTail::Sampled if d > 1 => Some(sphere_extension(d, w, extension_log2n)?),
            _ => None,
        };
        Ok(Self {
            kind: Kind::Sphere {
                d,
                w,
                tail,
                extension_log2n,
                extension,
            },
            metadata: Metadata {
                crossover: Some(crossover),
                sampler: (tail == SphereTail::Sampled && d > 1)
                    .then(|| format!("sobol:{TABLE_ID}:skip=1:log2n={extension_log2n}")),
                ..Metadata::default()
            },
        })
    }

    /// Cone or pyramid with apex value `y_min` whose domain is the level set
    /// at `y_max`: `((t − y_min)/(y_max − y_min))^d`.
    pub fn cone(d: usize, y_min: f64, y_max: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::domain("cone dimension must be ≥ 1"));
        }
        check_range(y_min, y_max)?;
        Ok(Self::bare(Kind::Cone { d, y_min, y_max }))
    }

    pub fn uniform(y_min: f64, y_max: f64) -> Result<Self> {
        check_range(y_min, y_max)?;
        Ok(Self::bare(Kind::Uniform { y_min, y_max }))
    }

    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::domain(format!("gaussian needs finite mu and sigma > 0, got {mu}, {sigma}")));
        }
        Ok(Self::bare(Kind::Gaussian { mu, sigma }))
    }

    pub fn empirical(samples: &[f64], known_min: Option<f64>, known_max: Option<f64>) -> Result<Self> {
        Ok(Self::from_empirical(EmpiricalCdf::new(samples, known_min, known_max)?))
    }

    pub fn from_empirical(cdf: EmpiricalCdf) -> Self {
        let (tail_gap_lower, tail_gap_upper) = cdf.tail_gaps();
        let metadata = Metadata {
            samples: Some(cdf.sample_count()),
            tail_gap_lower,
            tail_gap_upper,
            ..Metadata::default()
        };
        Self {
            kind: Kind::Empirical(cdf),
            metadata,
        }
    }

    fn bare(kind: Kind) -> Self {
        Self {
            kind,
            metadata: Metadata::default(),
        }
    }

    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut Metadata {
        &mut self.metadata
    }

    pub fn with_problem(mut self, label: impl Into<String>) -> Self {
        self.metadata.problem = Some(label.into());
        self
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            Kind::Sphere { .. } => "analytic-sphere",
            Kind::Cone { .. } => "analytic-cone",
            Kind::Uniform { .. } => "analytic-uniform",
            Kind::Gaussian { .. } => "analytic-gaussian",
            Kind::Empirical(_) => "empirical",
            Kind::Budget { .. } => "budget-composed",
            Kind::Rounds { .. } => "rounds-composed",
        }
    }

    pub fn as_empirical(&self) -> Option<&EmpiricalCdf> {
        match &self.kind {
            Kind::Empirical(e) => Some(e),
            _ => None,
        }
    }

    /// Absolute rank of metric value `t`.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        if t.is_nan() {
            return Err(Error::domain("cannot rank NaN"));
        }
        if let Some(floor) = self.domain_floor() {
            if t < floor {
                return Err(Error::domain(format!(
                    "{} is below the smallest attainable metric {floor}",
                    t
                )));
            }
        }
        Ok(self.value(t).clamp(0.0, 1.0))
    }

    /// Smallest metric value for which evaluation is defined, when bounded
    /// by construction (the sphere cannot go negative).
    fn domain_floor(&self) -> Option<f64> {
        match &self.kind {
            Kind::Sphere { .. } => Some(0.0),
            Kind::Budget { base, .. } | Kind::Rounds { base, .. } => base.domain_floor(),
            _ => None,
        }
    }

    fn value(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Sphere {
                d,
                w,
                tail,
                extension,
                ..
            } => {
                let crossover = w * w;
                if t <= crossover || *d == 1 {
                    return sphere_formula(*d, *w, t).min(1.0);
                }
                match (tail, extension) {
                    (SphereTail::Sampled, Some(ext)) => {
                        let base = sphere_formula(*d, *w, crossover);
                        base + (1.0 - base) * ext.value(t)
                    }
                    _ => sphere_formula(*d, *w, t).min(1.0),
                }
            }
            Kind::Cone { d, y_min, y_max } => {
                if t <= *y_min {
                    0.0
                } else if t >= *y_max {
                    1.0
                } else {
                    ((t - y_min) / (y_max - y_min)).powi(*d as i32)
                }
            }
            Kind::Uniform { y_min, y_max } => ((t - y_min) / (y_max - y_min)).clamp(0.0, 1.0),
            Kind::Gaussian { mu, sigma } => normal_cdf((t - mu) / sigma),
            Kind::Empirical(e) => e.value(t),
            Kind::Budget { base, c } => {
                let v = base.value(t).clamp(0.0, 1.0);
                -((*c as f64) * (-v).ln_1p()).exp_m1()
            }
            Kind::Rounds { curve, .. } => curve.value(t),
        }
    }

    /// Bounded support `[lo, hi]` outside of which the CDF is 0 or 1, when
    /// one exists.
    pub fn support(&self) -> Option<(f64, f64)> {
        match &self.kind {
            Kind::Sphere { d, w, tail, .. } => {
                let top = match tail {
                    SphereTail::Sampled => *d as f64 * w * w,
                    // where the closed form reaches one
                    SphereTail::Formula => {
                        let dd = *d as f64;
                        (2.0 * w).powi(2) * (ln_gamma(dd / 2.0 + 1.0) * 2.0 / dd).exp() / PI
                    }
                };
                Some((0.0, if *d == 1 { w * w } else { top }))
            }
            Kind::Cone { y_min, y_max, .. } | Kind::Uniform { y_min, y_max } => Some((*y_min, *y_max)),
            Kind::Gaussian { .. } => None,
            Kind::Empirical(e) => match (e.known_min, e.known_max) {
                (Some(lo), Some(hi)) => Some((lo, hi)),
                _ => None,
            },
            Kind::Budget { base, .. } => base.support(),
            Kind::Rounds { base, curve, .. } => match curve {
                RoundsCurve::Table { .. } => base.support(),
                RoundsCurve::Normal { .. } => None,
            },
        }
    }

    /// Finite interval holding all but `eps` of the mass on either side.
    pub fn effective_support(&self, eps: f64) -> Result<(f64, f64)> {
        if let Some(s) = self.support() {
            return Ok(s);
        }
        let (a, b) = self.anchor();
        let step = (b - a).abs().max(a.abs().max(b.abs()) * 1e-9).max(1e-300);
        let mut lo = a;
        let mut k = 0;
        while self.value(lo) > eps {
            lo = a - step * 2f64.powi(k);
            k += 1;
            if k > 1100 {
                return Err(Error::Unsupported("lower tail does not vanish".into()));
            }
        }
        let mut hi = b;
        let mut k = 0;
        while 1.0 - self.value(hi) > eps {
            hi = b + step * 2f64.powi(k);
            k += 1;
            if k > 1100 {
                return Err(Error::Unsupported("upper tail does not vanish".into()));
            }
        }
        let (floor, ceiling) = self.bounds();
        if let Some(f) = floor.or(self.domain_floor()) {
            lo = lo.max(f);
        }
        if let Some(c) = ceiling {
            hi = hi.min(c);
        }
        Ok((lo, hi))
    }

    /// Known lower and upper limits of the underlying metric, which may be
    /// tighter than where an approximate CDF reaches 0 or 1.
    fn bounds(&self) -> (Option<f64>, Option<f64>) {
        match &self.kind {
            Kind::Gaussian { .. } => (None, None),
            Kind::Empirical(e) => (e.known_min, e.known_max),
            Kind::Budget { base, .. } | Kind::Rounds { base, .. } => base.bounds(),
            _ => match self.support() {
                Some((lo, hi)) => (Some(lo), Some(hi)),
                None => (None, None),
            },
        }
    }

    /// A finite interval in the bulk of the distribution.
    fn anchor(&self) -> (f64, f64) {
        match &self.kind {
            Kind::Gaussian { mu, sigma } => (mu - sigma, mu + sigma),
            Kind::Empirical(e) => (e.first(), e.last()),
            Kind::Budget { base, .. } => base.anchor(),
            Kind::Rounds { base, curve, .. } => match curve {
                RoundsCurve::Normal { mu, sigma } => (mu - sigma, mu + sigma),
                RoundsCurve::Table { .. } => base.anchor(),
            },
            _ => self.support().unwrap_or((0.0, 1.0)),
        }
    }

    /// CDF of the best of `c` independent draws: `1 − (1 − v(t))^c`.
    pub fn compose_budget(&self, c: u64) -> Result<Self> {
        if c < 1 {
            return Err(Error::domain("budget must be ≥ 1"));
        }
        if c == 1 {
            return Ok(self.clone());
        }
        Ok(Self {
            kind: Kind::Budget {
                base: Box::new(self.clone()),
                c,
            },
            metadata: Metadata {
                problem: self.metadata.problem.clone(),
                ..Metadata::default()
            },
        })
    }

    /// CDF of the mean of `r` independent draws from `self`.
    ///
    /// Convolution mode discretizes `self` into `grid` cells over its
    /// support, raises the cell masses to the `r`-th convolution power by
    /// FFT, and rescales the abscissa by `1/r`. It needs a bounded support.
    /// Normal-approx mode uses the central limit with moments integrated
    /// numerically from the CDF.
    pub fn compose_rounds(&self, r: u64, mode: RoundsMode, grid: usize) -> Result<Self> {
        if r < 1 {
            return Err(Error::domain("rounds must be ≥ 1"));
        }
        if r == 1 {
            return Ok(self.clone());
        }
        let curve = match mode {
            RoundsMode::Convolution => {
                if grid < 256 {
                    return Err(Error::domain(format!("convolution grid {grid} below 256")));
                }
                let (lo, hi) = self.support().ok_or_else(|| {
                    Error::Unsupported(format!(
                        "{} has unbounded support; use normal-approx",
                        self.kind_name()
                    ))
                })?;
                self.convolved_mean(lo, hi, r, grid)?
            }
            RoundsMode::NormalApprox => {
                let (mu, var) = self.moments(grid.max(256))?;
                RoundsCurve::Normal {
                    mu,
                    sigma: (var / r as f64).sqrt(),
                }
            }
        };
        if let RoundsCurve::Normal { sigma, .. } = curve {
            if !(sigma > 0.0) {
                return Err(Error::DegenerateScale("per-round variance is zero".into()));
            }
        }
        Ok(Self {
            kind: Kind::Rounds {
                base: Box::new(self.clone()),
                r,
                mode,
                grid,
                curve,
            },
            metadata: Metadata {
                problem: self.metadata.problem.clone(),
                ..Metadata::default()
            },
        })
    }

    fn convolved_mean(&self, lo: f64, hi: f64, r: u64, grid: usize) -> Result<RoundsCurve> {
        let h = (hi - lo) / grid as f64;
        let mut prev = self.value(lo).clamp(0.0, 1.0);
        let mut masses = Vec::with_capacity(grid);
        for k in 1..=grid {
            let x = if k == grid { hi } else { lo + k as f64 * h };
            let v = self.value(x).clamp(0.0, 1.0);
            masses.push((v - prev).max(0.0));
            prev = v;
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateScale("no probability mass on the support".into()));
        }
        masses.iter_mut().for_each(|m| *m /= total);

        let r_us = usize::try_from(r).map_err(|_| Error::Capability("too many rounds".into()))?;
        let len = r_us
            .checked_mul(grid - 1)
            .and_then(|v| v.checked_add(1))
            .filter(|&v| v <= 1 << 28)
            .ok_or_else(|| Error::Capability(format!("r = {r} with grid {grid} is too large")))?;
        let size = len.next_power_of_two();
        let mut buf: Vec<Complex<f64>> = masses
            .iter()
            .map(|&m| Complex::new(m, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(size)
            .collect();
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(size).process(&mut buf);
        let exp = u32::try_from(r).map_err(|_| Error::Capability("too many rounds".into()))?;
        buf.iter_mut().for_each(|z| *z = z.powu(exp));
        planner.plan_fft_inverse(size).process(&mut buf);

        let sum_masses: Vec<f64> = buf[..len].iter().map(|z| (z.re / size as f64).max(0.0)).collect();
        let total: f64 = sum_masses.iter().sum();
        let rf = r as f64;
        // atom j of the mean sits at lo + (j + r/2)·h/r, spread over one cell
        let cell = h / rf;
        let mut xs = Vec::with_capacity(len + 1);
        let mut ys = Vec::with_capacity(len + 1);
        xs.push(lo + (rf / 2.0 - 0.5) * cell);
        ys.push(0.0);
        let mut acc = 0.0;
        for (j, m) in sum_masses.iter().enumerate() {
            acc += m / total;
            xs.push(lo + (j as f64 + rf / 2.0 + 0.5) * cell);
            ys.push(acc.min(1.0));
        }
        Ok(RoundsCurve::Table { xs, ys })
    }

    /// Mean and variance of the distribution with this CDF.
    fn moments(&self, intervals: usize) -> Result<(f64, f64)> {
        if let Kind::Gaussian { mu, sigma } = self.kind {
            return Ok((mu, sigma * sigma));
        }
        let (lo, hi) = self.effective_support(TAIL_EPS)?;
        let n = intervals + intervals % 2;
        let h = (hi - lo) / n as f64;
        // E[X − lo] = ∫ (1 − F);  E[(X − lo)²] = ∫ 2(t − lo)(1 − F)
        let (mut m1, mut m2) = (0.0, 0.0);
        for k in 0..=n {
            let x = lo + k as f64 * h;
            let s = 1.0 - self.value(x).clamp(0.0, 1.0);
            let wgt = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            m1 += wgt * s;
            m2 += wgt * 2.0 * (x - lo) * s;
        }
        m1 *= h / 3.0;
        m2 *= h / 3.0;
        Ok((lo + m1, (m2 - m1 * m1).max(0.0)))
    }

    /// `points` evenly spaced `(t, v(t))` pairs across the effective support.
    pub fn curve(&self, points: usize) -> Result<Vec<(f64, f64)>> {
        if points < 2 {
            return Err(Error::domain("a curve needs at least 2 points"));
        }
        let (lo, hi) = self.effective_support(1e-9)?;
        (0..points)
            .map(|k| {
                let t = if k + 1 == points {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (points - 1) as f64
                };
                Ok((t, self.evaluate(t)?))
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let file = CdfFile {
            version: FORMAT_VERSION,
            body: self.body(),
        };
        serde_json::to_string_pretty(&file).expect("CDF serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("invalid CDF file: {e}")))?;
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Format(format!(
                    "CDF file version {v}, expected {FORMAT_VERSION}"
                )))
            }
            None => return Err(Error::Format("CDF file has no version".into())),
        }
        let file: CdfFile =
            serde_json::from_value(value).map_err(|e| Error::Format(format!("invalid CDF file: {e}")))?;
        Self::from_body(file.body)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_json().as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(fs::File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn body(&self) -> Body {
        let spec = match &self.kind {
            Kind::Sphere {
                d,
                w,
                tail,
                extension_log2n,
                ..
            } => Spec::AnalyticSphere {
                params: SphereParams {
                    d: *d,
                    w: *w,
                    tail: *tail,
                    extension_log2n: *extension_log2n,
                },
            },
            Kind::Cone { d, y_min, y_max } => Spec::AnalyticCone {
                params: ConeParams {
                    d: *d,
                    y_min: *y_min,
                    y_max: *y_max,
                },
            },
            Kind::Uniform { y_min, y_max } => Spec::AnalyticUniform {
                params: UniformParams {
                    y_min: *y_min,
                    y_max: *y_max,
                },
            },
            Kind::Gaussian { mu, sigma } => Spec::AnalyticGaussian {
                params: GaussianParams {
                    mu: *mu,
                    sigma: *sigma,
                },
            },
            Kind::Empirical(e) => Spec::Empirical {
                knots: Knots {
                    values: e.knots.clone(),
                    counts: e.counts.clone(),
                    n: e.n,
                    known_min: e.known_min,
                    known_max: e.known_max,
                },
            },
            Kind::Budget { base, c } => Spec::BudgetComposed {
                params: BudgetParams {
                    c: *c,
                    base: Box::new(base.body()),
                },
            },
            Kind::Rounds {
                base,
                r,
                mode,
                grid,
                curve,
            } => {
                let (table, normal) = match curve {
                    RoundsCurve::Table { xs, ys } => (Some(CurveTable { xs: xs.clone(), ys: ys.clone() }), None),
                    RoundsCurve::Normal { mu, sigma } => (
                        None,
                        Some(GaussianParams {
                            mu: *mu,
                            sigma: *sigma,
                        }),
                    ),
                };
                Spec::RoundsComposed {
                    params: RoundsParams {
                        r: *r,
                        mode: *mode,
                        grid: *grid,
                        base: Box::new(base.body()),
                        table,
                        normal,
                    },
                }
            }
        };
        Body {
            spec,
            metadata: self.metadata.clone(),
        }
    }

    fn from_body(body: Body) -> Result<Self> {
        let mut f = match body.spec {
            Spec::AnalyticSphere { params: p } => Self::sphere_with(p.d, p.w, p.tail, p.extension_log2n)?,
            Spec::AnalyticCone { params: p } => Self::cone(p.d, p.y_min, p.y_max)?,
            Spec::AnalyticUniform { params: p } => Self::uniform(p.y_min, p.y_max)?,
            Spec::AnalyticGaussian { params: p } => Self::gaussian(p.mu, p.sigma)?,
            Spec::Empirical { knots: k } => Self::from_empirical(EmpiricalCdf::from_parts(
                k.values,
                k.counts,
                k.n,
                k.known_min,
                k.known_max,
            )?),
            Spec::BudgetComposed { params: p } => {
                if p.c < 1 {
                    return Err(Error::Format("budget must be ≥ 1".into()));
                }
                Self::bare(Kind::Budget {
                    base: Box::new(Self::from_body(*p.base)?),
                    c: p.c,
                })
            }
            Spec::RoundsComposed { params: p } => {
                let curve = match (p.table, p.normal) {
                    (Some(t), None) => {
                        if t.xs.len() < 2
                            || t.xs.len() != t.ys.len()
                            || t.xs.windows(2).any(|w| !(w[0] < w[1]))
                            || t.ys.windows(2).any(|w| w[0] > w[1])
                        {
                            return Err(Error::Format("malformed rounds table".into()));
                        }
                        RoundsCurve::Table { xs: t.xs, ys: t.ys }
                    }
                    (None, Some(g)) if g.sigma > 0.0 => RoundsCurve::Normal {
                        mu: g.mu,
                        sigma: g.sigma,
                    },
                    _ => return Err(Error::Format("rounds CDF needs exactly one curve".into())),
                };
                Self::bare(Kind::Rounds {
                    base: Box::new(Self::from_body(*p.base)?),
                    r: p.r,
                    mode: p.mode,
                    grid: p.grid,
                    curve,
                })
            }
        };
        f.metadata = body.metadata;
        Ok(f)
    }
}

fn check_range(y_min: f64, y_max: f64) -> Result<()> {
    if !(y_min < y_max) || !y_min.is_finite() || !y_max.is_finite() {
        return Err(Error::domain(format!("need finite y_min < y_max, got {y_min}, {y_max}")));
    }
    Ok(())
}

/// Conditional CDF of the sphere above `w²` from Sobol samples of the box.
fn sphere_extension(d: usize, w: f64, log2n: u32) -> Result<EmpiricalCdf> {
    let crossover = w * w;
    let mut stream = SobolStream::new(d, 1)?;
    let mut point = vec![0.0; d];
    let mut above = Vec::new();
    for _ in 0..1u64 << log2n {
        stream.next_into(&mut point);
        let f: f64 = point.iter().map(|u| (-w + 2.0 * w * u).powi(2)).sum();
        if f > crossover {
            above.push(f);
        }
    }
    EmpiricalCdf::new(&above, Some(crossover), Some(d as f64 * crossover))
}

#[derive(Serialize, Deserialize)]
struct CdfFile {
    version: u32,
    #[serde(flatten)]
    body: Body,
}

#[derive(Serialize, Deserialize)]
struct Body {
    #[serde(flatten)]
    spec: Spec,
    #[serde(default)]
    metadata: Metadata,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum Spec {
    AnalyticSphere { params: SphereParams },
    AnalyticCone { params: ConeParams },
    AnalyticUniform { params: UniformParams },
    AnalyticGaussian { params: GaussianParams },
    Empirical { knots: Knots },
    BudgetComposed { params: BudgetParams },
    RoundsComposed { params: RoundsParams },
}

#[derive(Serialize, Deserialize)]
struct SphereParams {
    d: usize,
    w: f64,
    tail: SphereTail,
    extension_log2n: u32,
}

#[derive(Serialize, Deserialize)]
struct ConeParams {
    d: usize,
    y_min: f64,
    y_max: f64,
}

#[derive(Serialize, Deserialize)]
struct UniformParams {
    y_min: f64,
    y_max: f64,
}

#[derive(Serialize, Deserialize)]
struct GaussianParams {
    mu: f64,
    sigma: f64,
}

#[derive(Serialize, Deserialize)]
struct Knots {
    values: Vec<f64>,
    counts: Vec<u64>,
    n: u64,
    known_min: Option<f64>,
    known_max: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct BudgetParams {
    c: u64,
    base: Box<Body>,
}

#[derive(Serialize, Deserialize)]
struct RoundsParams {
    r: u64,
    mode: RoundsMode,
    grid: usize,
    base: Box<Body>,
    #[serde(skip_serializing_if = "Option::is_none")]
    table: Option<CurveTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    normal: Option<GaussianParams>,
}

#[derive(Serialize, Deserialize)]
struct CurveTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn sphere_closed_form_examples() {
        let s = AbsRankFn::sphere(2, 1.0).unwrap();
        assert!((s.evaluate(1.0).unwrap() - FRAC_PI_4).abs() < 1e-15);
        assert_eq!(s.evaluate(0.0).unwrap(), 0.0);
        let s1 = AbsRankFn::sphere(1, 1.0).unwrap();
        assert!((s1.evaluate(0.25).unwrap() - 0.5).abs() < 1e-15);
        assert!((s1.evaluate(1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(s.evaluate(-0.1), Err(Error::Domain(_))));
        assert!(matches!(s.evaluate(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn sphere_formula_matches_sampled_sphere_checkpoints() {
        // checkpoints lie past w² = 1e-8, so only the formula tail reproduces
        // these values
        let s = AbsRankFn::sphere_with(10, 1e-4, SphereTail::Formula, 0).unwrap();
        assert!((s.evaluate(1.3206e-8).unwrap() - 1.0001e-2).abs() < 5e-6);
        assert!((s.evaluate(1.8371e-8).unwrap() - 5.2111e-2).abs() < 5e-6);
    }

    #[test]
    fn sampled_sphere_tail_is_continuous_and_reaches_one() {
        let s = AbsRankFn::sphere(3, 1.0).unwrap();
        let below = s.evaluate(1.0 - 1e-12).unwrap();
        let above = s.evaluate(1.0 + 1e-12).unwrap();
        assert!((above - below).abs() < 1e-9);
        assert_eq!(s.evaluate(3.0).unwrap(), 1.0);
        assert_eq!(s.evaluate(10.0).unwrap(), 1.0);
        assert_eq!(s.metadata().crossover, Some(1.0));
        assert_eq!(s.support(), Some((0.0, 3.0)));
    }

    #[test]
    fn sampled_sphere_tail_tracks_exact_2d_area() {
        // area of {x² + y² ≤ t} ∩ [-1,1]² for 1 < t < 2:
        // 4·(sqrt(t−1) + t·(π/4 − acos(1/sqrt t)))
        let s = AbsRankFn::sphere(2, 1.0).unwrap();
        for &t in &[1.1, 1.3, 1.5, 1.8, 1.95] {
            let a = 4.0 * ((t - 1.0f64).sqrt() + t * (FRAC_PI_4 - (1.0 / t.sqrt()).acos()));
            let exact = a / 4.0;
            assert!((s.evaluate(t).unwrap() - exact).abs() < 2e-3, "t={t}");
        }
    }

    #[test]
    fn cone_examples() {
        let c2 = AbsRankFn::cone(2, 0.0, 1.0).unwrap();
        assert_eq!(c2.evaluate(0.5).unwrap(), 0.25);
        let c3 = AbsRankFn::cone(3, -1.0, 4.0).unwrap();
        assert_eq!(c3.evaluate(4.0).unwrap(), 1.0);
        assert_eq!(c3.evaluate(-1.0).unwrap(), 0.0);
        assert!(matches!(AbsRankFn::cone(2, 1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn uniform_and_gaussian_examples() {
        assert_eq!(AbsRankFn::uniform(0.0, 2.0).unwrap().evaluate(0.5).unwrap(), 0.25);
        assert_eq!(AbsRankFn::gaussian(0.0, 1.0).unwrap().evaluate(0.0).unwrap(), 0.5);
        assert!(AbsRankFn::uniform(2.0, 0.0).is_err());
        assert!(AbsRankFn::gaussian(0.0, 0.0).is_err());
    }

    #[test]
    fn empirical_example_from_four_samples() {
        let v = AbsRankFn::empirical(&[1.0, 3.0, 4.0, 6.0], None, None).unwrap();
        for (t, want) in [(1.0, 0.2), (3.0, 0.4), (4.0, 0.6), (6.0, 0.8), (3.5, 0.5)] {
            assert!((v.evaluate(t).unwrap() - want).abs() < 1e-15, "t={t}");
        }
        let want = 1.0 / (5.0 * std::f64::consts::E);
        assert!((v.evaluate(0.0).unwrap() - want).abs() < 1e-15);
        // upper tail 1 − e^{−ln(5)·t/6} joins the last knot at 0.8
        assert!((v.evaluate(6.0 + 1e-12).unwrap() - 0.8).abs() < 1e-9);
        assert!(v.metadata().tail_gap_upper.unwrap().abs() < 1e-15);
        assert!(v.metadata().tail_gap_lower.unwrap().abs() < 1e-15);
    }

    #[test]
    fn empirical_duplicates_collapse_to_highest_level() {
        let v = AbsRankFn::empirical(&[2.0, 1.0, 2.0, 2.0, 5.0], None, None).unwrap();
        let e = v.as_empirical().unwrap();
        assert_eq!(e.knots(), [1.0, 2.0, 5.0]);
        assert_eq!(v.evaluate(2.0).unwrap(), 4.0 / 6.0);
        assert!(matches!(
            AbsRankFn::empirical(&[3.0, 3.0], None, None),
            Err(Error::SampleSize(_))
        ));
        assert!(matches!(
            AbsRankFn::empirical(&[1.0, f64::INFINITY], None, None),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn empirical_with_known_bounds() {
        let v = AbsRankFn::empirical(&[1.0, 3.0, 4.0, 6.0], Some(0.0), Some(8.0)).unwrap();
        assert_eq!(v.evaluate(-1.0).unwrap(), 0.0);
        assert!((v.evaluate(0.5).unwrap() - 0.1).abs() < 1e-15);
        assert!((v.evaluate(7.0).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(v.evaluate(8.0).unwrap(), 1.0);
        assert_eq!(v.support(), Some((0.0, 8.0)));
        assert!(AbsRankFn::empirical(&[1.0, 3.0], Some(2.0), None).is_err());
    }

    #[test]
    fn empirical_upper_tail_shifts_for_non_positive_samples() {
        let v = AbsRankFn::empirical(&[-5.0, -3.0, -1.0], None, None).unwrap();
        let at = v.evaluate(-1.0).unwrap();
        let mut last = at;
        for k in 1..50 {
            let x = v.evaluate(-1.0 + k as f64 * 0.5).unwrap();
            assert!(x > last || x == 1.0);
            last = x;
        }
        assert!((v.evaluate(-1.0 + 1e-12).unwrap() - 0.75).abs() < 1e-9);
    }

    #[test]
    fn budget_examples() {
        let u = AbsRankFn::uniform(0.0, 1.0).unwrap();
        let b = u.compose_budget(2).unwrap();
        assert!((b.evaluate(0.5).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(u.compose_budget(1).unwrap(), u);
        assert!(matches!(u.compose_budget(0), Err(Error::Domain(_))));
        assert_eq!(b.kind_name(), "budget-composed");
    }

    #[test]
    fn rounds_of_two_uniforms_is_triangular() {
        let u = AbsRankFn::uniform(0.0, 1.0).unwrap();
        let t = u.compose_rounds(2, RoundsMode::Convolution, 1024).unwrap();
        assert!((t.evaluate(0.5).unwrap() - 0.5).abs() < 1e-9);
        assert!((t.evaluate(0.25).unwrap() - 0.125).abs() < 1e-6);
        assert!((t.evaluate(0.9).unwrap() - 0.98).abs() < 1e-6);
        assert_eq!(u.compose_rounds(1, RoundsMode::Convolution, 1024).unwrap(), u);
    }

    #[test]
    fn rounds_contract_cases() {
        let g = AbsRankFn::gaussian(1.0, 2.0).unwrap();
        assert!(matches!(
            g.compose_rounds(3, RoundsMode::Convolution, 512),
            Err(Error::Unsupported(_))
        ));
        let n = g.compose_rounds(4, RoundsMode::NormalApprox, 512).unwrap();
        // mean of 4 draws: N(1, 1)
        assert!((n.evaluate(2.0).unwrap() - normal_cdf(1.0)).abs() < 1e-15);
        let u = AbsRankFn::uniform(0.0, 1.0).unwrap();
        assert!(matches!(
            u.compose_rounds(3, RoundsMode::Convolution, 100),
            Err(Error::Domain(_))
        ));
        assert!(matches!(u.compose_rounds(0, RoundsMode::Convolution, 512), Err(Error::Domain(_))));
    }

    #[test]
    fn normal_approx_moments_of_uniform() {
        let u = AbsRankFn::uniform(2.0, 5.0).unwrap();
        let (mu, var) = u.moments(1024).unwrap();
        assert!((mu - 3.5).abs() < 1e-12);
        assert!((var - 0.75).abs() < 1e-9);
    }

    #[test]
    fn serialization_rejects_bad_payloads() {
        let s = AbsRankFn::cone(2, 0.0, 1.0).unwrap().to_json();
        let truncated = &s[..s.len() / 2];
        assert!(matches!(AbsRankFn::from_json(truncated), Err(Error::Format(_))));
        let bumped = s.replace("\"version\": 1", "\"version\": 99");
        assert!(matches!(AbsRankFn::from_json(&bumped), Err(Error::Format(_))));
        let unknown = s.replace("analytic-cone", "analytic-torus");
        assert!(matches!(AbsRankFn::from_json(&unknown), Err(Error::Format(_))));
    }
}

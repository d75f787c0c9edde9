//! Sobol sampling of benchmark functions and the two-step choice of the
//! sampling range around the optimum.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::absrank::AbsRankFn;
use crate::bench::BenchmarkProblem;
use crate::error::{Error, Result};
use crate::sobol::{SobolConfig, SobolStream};

pub const COARSE_LOG2N: u32 = 15;
pub const FINE_LOG2N: u32 = 20;

const CHUNK: u64 = 4096;

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Shape(format!(
                "region bounds have {} and {} coordinates",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::domain("region needs finite lo ≤ hi in every coordinate"));
        }
        Ok(Self { lo, hi })
    }

    /// `[center − δ, center + δ]` in every coordinate.
    pub fn cube(center: &[f64], delta: f64) -> Result<Self> {
        Self::new(
            center.iter().map(|c| c - delta).collect(),
            center.iter().map(|c| c + delta).collect(),
        )
    }

    /// The problem's whole domain.
    pub fn domain(problem: &BenchmarkProblem) -> Self {
        Self {
            lo: problem.lo().to_vec(),
            hi: problem.hi().to_vec(),
        }
    }

    pub fn d(&self) -> usize {
        self.lo.len()
    }

    pub fn within(&self, problem: &BenchmarkProblem) -> bool {
        self.d() == problem.d()
            && (0..self.d()).all(|i| problem.lo()[i] <= self.lo[i] && self.hi[i] <= problem.hi()[i])
    }

    /// Intersection with the problem's domain, and whether anything was cut.
    pub fn clip_to(&self, problem: &BenchmarkProblem) -> (Self, bool) {
        let lo: Vec<f64> = self.lo.iter().zip(problem.lo()).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(problem.hi()).map(|(a, b)| a.min(*b)).collect();
        let clipped = lo != self.lo || hi != self.hi;
        (Self { lo, hi }, clipped)
    }
}

/// Sorted function values from one Sobol sweep of a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub problem: String,
    pub region: Region,
    pub config: SobolConfig,
    pub values: Vec<f64>,
}

impl SampleSet {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    /// Empirical absolute-rank function of these samples.
    pub fn to_absrank(&self, known_min: Option<f64>, known_max: Option<f64>) -> Result<AbsRankFn> {
        let mut f = AbsRankFn::empirical(&self.values, known_min, known_max)?;
        let meta = f.metadata_mut();
        meta.problem = Some(self.problem.clone());
        meta.sampler = Some(format!(
            "sobol:{}:skip={}:log2n={}",
            self.config.table, self.config.skip, self.config.log2n
        ));
        Ok(f)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let set: Self = serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| Error::Format(format!("invalid sample file: {e}")))?;
        if set.values.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Format("sample values are not sorted".into()));
        }
        Ok(set)
    }
}

/// Maps the Sobol points of `cfg` affinely onto `region`, evaluates the
/// problem there and sorts the values.
///
/// Points are generated and evaluated in independent chunks on worker
/// threads; the final sort makes the output independent of scheduling.
pub fn sample_function(problem: &BenchmarkProblem, region: &Region, cfg: &SobolConfig) -> Result<SampleSet> {
    cfg.validate()?;
    if cfg.dim != problem.d() || region.d() != problem.d() {
        return Err(Error::Shape(format!(
            "problem has d = {}, sampler dim = {}, region dim = {}",
            problem.d(),
            cfg.dim,
            region.d()
        )));
    }
    if !region.within(problem) {
        return Err(Error::domain(format!(
            "sampling region is not inside the domain of {}",
            problem.label()
        )));
    }
    let total = cfg.count();
    let chunks = total.div_ceil(CHUNK);
    let width: Vec<f64> = region.lo.iter().zip(&region.hi).map(|(a, b)| b - a).collect();
    let mut values: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<f64>> {
            let start = c * CHUNK;
            let len = CHUNK.min(total - start);
            let mut stream = SobolStream::new(cfg.dim, cfg.skip + start)?;
            let mut u = vec![0.0; cfg.dim];
            let mut x = vec![0.0; cfg.dim];
            Ok((0..len)
                .map(|_| {
                    stream.next_into(&mut u);
                    for i in 0..cfg.dim {
                        x[i] = region.lo[i] + width[i] * u[i];
                    }
                    problem.value(&x)
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    values.sort_by(f64::total_cmp);
    Ok(SampleSet {
        problem: problem.label().to_owned(),
        region: region.clone(),
        config: cfg.clone(),
        values,
    })
}

/// Geometric mean of the gaps between sorted distinct values; zero when
/// all values coincide.
pub fn geometric_mean_difference(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::domain("geometric mean difference of no values"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::domain("geometric mean difference of NaN"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    if v.len() == 1 {
        return Ok(0.0);
    }
    let logs: f64 = v.windows(2).map(|w| (w[1] - w[0]).ln()).sum();
    Ok((logs / (v.len() - 1) as f64).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaScore {
    pub delta: f64,
    pub score: f64,
    /// The cube around the optimum left the domain and was cut back.
    pub clipped: bool,
    /// Absolute ranks of the metrics under this δ's sampled CDF.
    pub ranks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSelection {
    pub problem: String,
    pub chosen: f64,
    pub scores: Vec<DeltaScore>,
}

/// For each half-width δ, samples the cube of side `2δ` around `x_star`,
/// ranks `metrics` through the resulting empirical CDF and scores the
/// spread with [`geometric_mean_difference`]. The δ with the largest score
/// wins; ties go to the smallest δ.
pub fn select_delta(
    problem: &BenchmarkProblem,
    x_star: &[f64],
    metrics: &[f64],
    deltas: &[f64],
    coarse: &SobolConfig,
) -> Result<DeltaSelection> {
    if deltas.is_empty() {
        return Err(Error::domain("no candidate δ given"));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(Error::domain(format!("candidate δ = {d} must be positive")));
    }
    if metrics.is_empty() {
        return Err(Error::domain("no metric values to rank"));
    }
    if x_star.len() != problem.d() {
        return Err(Error::Shape(format!(
            "optimum has {} coordinates, d = {}",
            x_star.len(),
            problem.d()
        )));
    }
    if !problem.contains(x_star) {
        return Err(Error::domain("optimum lies outside the domain"));
    }
    let scores = deltas
        .iter()
        .map(|&delta| {
            let (region, clipped) = Region::cube(x_star, delta)?.clip_to(problem);
            let samples = sample_function(problem, &region, coarse)?;
            let cdf = samples.to_absrank(None, None)?;
            let ranks = metrics
                .iter()
                .map(|&t| cdf.evaluate(t))
                .collect::<Result<Vec<_>>>()?;
            Ok(DeltaScore {
                delta,
                score: geometric_mean_difference(&ranks)?,
                clipped,
                ranks,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = scores
        .iter()
        .max_by(|a, b| {
            a.score
                .total_cmp(&b.score)
                .then_with(|| b.delta.total_cmp(&a.delta))
        })
        .expect("deltas is non-empty");
    Ok(DeltaSelection {
        problem: problem.label().to_owned(),
        chosen: best.delta,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{ProblemKind, ProblemParams};
    use crate::sobol::sobol_points;

    fn sphere(d: usize, w: f64) -> BenchmarkProblem {
        BenchmarkProblem::cube("sphere", ProblemKind::Sphere, d, -w, w, ProblemParams::default()).unwrap()
    }

    #[test]
    fn gmd_examples() {
        assert!((geometric_mean_difference(&[0.1, 0.2, 0.4]).unwrap() - (0.1f64 * 0.2).sqrt()).abs() < 1e-15);
        assert_eq!(geometric_mean_difference(&[0.3, 0.3, 0.3]).unwrap(), 0.0);
        assert_eq!(geometric_mean_difference(&[1.0, 0.0]).unwrap(), 1.0);
        assert!(geometric_mean_difference(&[]).is_err());
    }

    #[test]
    fn one_dimensional_sphere_samples_are_squared_abscissae() {
        let cfg = SobolConfig::new(1, 4);
        let set = sample_function(&sphere(1, 1.0), &Region::new(vec![-1.0], vec![1.0]).unwrap(), &cfg).unwrap();
        let mut want: Vec<f64> = sobol_points(&cfg)
            .unwrap()
            .iter()
            .map(|p| (2.0 * p[0] - 1.0).powi(2))
            .collect();
        want.sort_by(f64::total_cmp);
        assert_eq!(set.values, want);
        assert_eq!(set.n(), 16);
    }

    #[test]
    fn region_outside_domain_is_rejected() {
        let p = sphere(2, 1.0);
        let r = Region::new(vec![-2.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            sample_function(&p, &r, &SobolConfig::new(2, 4)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn single_candidate_is_chosen() {
        let p = sphere(2, 1.0);
        let sel = select_delta(&p, &[0.0, 0.0], &[0.01, 0.2], &[0.3], &SobolConfig::new(2, 8)).unwrap();
        assert_eq!(sel.chosen, 0.3);
        assert_eq!(sel.scores.len(), 1);
        assert!(!sel.scores[0].clipped);
    }

    #[test]
    fn oversized_cube_is_clipped() {
        let p = sphere(2, 1.0);
        let sel = select_delta(&p, &[0.5, 0.0], &[0.1, 0.5], &[0.8], &SobolConfig::new(2, 8)).unwrap();
        assert!(sel.scores[0].clipped);
    }

    #[test]
    fn tiny_range_ranks_everything_at_one() {
        let p = sphere(2, 1.0);
        let sel = select_delta(&p, &[0.0, 0.0], &[0.1, 0.2, 0.3], &[1e-6], &SobolConfig::new(2, 8)).unwrap();
        assert_eq!(sel.scores[0].score, 0.0);
        assert!(sel.scores[0].ranks.iter().all(|&r| r == 1.0));
    }
}

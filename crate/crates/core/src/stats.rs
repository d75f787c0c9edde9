//! Non-parametric testing: Friedman's test followed by a Bonferroni–Dunn
//! critical difference on average ranks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::PerformanceMatrix;
use crate::normalize::{rank_normalize, RankMatrix};
use crate::special::{chi2_log10_sf, normal_upper_quantile};
use crate::verdict::Direction;

/// Below this the p-value is reported as exactly `0.0`.
pub const P_UNDERFLOW: f64 = 1e-308;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub df: usize,
    pub log10_p: f64,
    pub p: f64,
}

/// Friedman's chi-square statistic on a rank matrix, with the upper-tail
/// probability evaluated in log space.
pub fn friedman_test(ranks: &RankMatrix) -> FriedmanResult {
    let n = ranks.n() as f64;
    let p = ranks.p() as f64;
    // rank sums are multiples of 1/2, so the centred sums are exact
    let centre = p * (n + 1.0) / 2.0;
    let spread: f64 = (0..ranks.n())
        .map(|i| {
            let sum: f64 = (0..ranks.p()).map(|j| ranks.rank(i, j)).sum();
            (sum - centre).powi(2)
        })
        .sum();
    let statistic = (12.0 * spread / (p * n * (n + 1.0))).max(0.0);
    let df = ranks.n() - 1;
    let log10_p = chi2_log10_sf(statistic, df as f64).min(0.0);
    FriedmanResult {
        statistic,
        df,
        log10_p,
        p: p_from_log10(log10_p),
    }
}

fn p_from_log10(log10_p: f64) -> f64 {
    let p = 10f64.powf(log10_p);
    if p < P_UNDERFLOW {
        0.0
    } else {
        p
    }
}

/// How the significance level is split across comparisons before taking the
/// normal quantile.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// `z(1 − α / (n(n−1)))`: α shared over all `n(n−1)/2` pairs, two tails.
    #[default]
    #[serde(rename = "all-pairs-one-sided", alias = "all-pairs")]
    AllPairs,
    /// `z(1 − α / (2(n−1)))`: comparisons against one control, two tails.
    ControlTwoSided,
    /// `z(1 − α / (n−1))`: comparisons against one control, one tail.
    ControlOneSided,
}

impl Convention {
    pub const ALL: [Convention; 3] = [
        Convention::AllPairs,
        Convention::ControlTwoSided,
        Convention::ControlOneSided,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Convention::AllPairs => "all-pairs-one-sided",
            Convention::ControlTwoSided => "control-two-sided",
            Convention::ControlOneSided => "control-one-sided",
        }
    }

    /// Upper-tail probability handed to the normal quantile.
    pub fn tail(self, n: usize, alpha: f64) -> f64 {
        let k = (n - 1) as f64;
        match self {
            Convention::AllPairs => alpha / (n as f64 * k),
            Convention::ControlTwoSided => alpha / (2.0 * k),
            Convention::ControlOneSided => alpha / k,
        }
    }
}

impl std::str::FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-pairs-one-sided" | "all-pairs" => Ok(Convention::AllPairs),
            "control-two-sided" => Ok(Convention::ControlTwoSided),
            "control-one-sided" => Ok(Convention::ControlOneSided),
            other => Err(Error::NotFound(format!("multiplicity convention {other:?}"))),
        }
    }
}

/// Bonferroni–Dunn critical difference `q · sqrt(n(n+1) / (6p))`.
pub fn bonferroni_dunn_cd(n: usize, p: usize, alpha: f64, convention: Convention) -> Result<f64> {
    if n < 2 || p < 1 {
        return Err(Error::Size(format!("need n ≥ 2 and p ≥ 1, got n={n}, p={p}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha {alpha} outside (0, 1)")));
    }
    let tail = convention.tail(n, alpha);
    if tail >= 0.5 {
        return Err(Error::domain(format!(
            "alpha {alpha} leaves a per-comparison level of {tail}, no positive quantile"
        )));
    }
    let q = normal_upper_quantile(tail);
    let (n, p) = (n as f64, p as f64);
    Ok(q * (n * (n + 1.0) / (6.0 * p)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub first: String,
    pub second: String,
    pub avg_rank_first: f64,
    pub avg_rank_second: f64,
    pub delta: f64,
    pub direction: Direction,
    pub result: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NphtReport {
    pub algorithms: Vec<String>,
    pub avg_ranks: Vec<f64>,
    pub friedman: FriedmanResult,
    pub alpha: f64,
    pub convention: Convention,
    pub critical_difference: f64,
    /// Friedman p below alpha.
    pub significant: bool,
    pub pairwise: Vec<PairComparison>,
}

impl NphtReport {
    pub fn avg_rank(&self, label: &str) -> Option<f64> {
        let i = self.algorithms.iter().position(|a| a == label)?;
        Some(self.avg_ranks[i])
    }
}

/// Rank normalization, Friedman test, then critical-difference verdicts for
/// the requested pairs. When the Friedman test does not reject at `alpha`,
/// every pair is reported indistinguishable.
pub fn npht_compare<S: AsRef<str>>(
    m: &PerformanceMatrix,
    pairs: &[(S, S)],
    alpha: f64,
    convention: Convention,
) -> Result<NphtReport> {
    let indices = pairs
        .iter()
        .map(|(a, b)| Ok((m.algorithm_index(a.as_ref())?, m.algorithm_index(b.as_ref())?)))
        .collect::<Result<Vec<_>>>()?;
    let ranks = rank_normalize(m);
    let friedman = friedman_test(&ranks);
    let cd = bonferroni_dunn_cd(m.n(), m.p(), alpha, convention)?;
    let significant = friedman.log10_p < alpha.log10();
    let avg = ranks.average_ranks();

    let pairwise = indices
        .into_iter()
        .map(|(i, j)| {
            let delta = (avg[i] - avg[j]).abs();
            let direction = if significant && delta > cd {
                Direction::from_lower_is_better(avg[i], avg[j])
            } else {
                Direction::Indistinguishable
            };
            let (first, second) = (m.algorithms()[i].clone(), m.algorithms()[j].clone());
            PairComparison {
                result: direction.render(&first, &second),
                first,
                second,
                avg_rank_first: avg[i],
                avg_rank_second: avg[j],
                delta,
                direction,
            }
        })
        .collect();

    Ok(NphtReport {
        algorithms: m.algorithms().to_vec(),
        avg_ranks: avg,
        friedman,
        alpha,
        convention,
        critical_difference: cd,
        significant,
        pairwise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize, prefix: &str) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn all_tied_ranks_give_zero_statistic() {
        let r = RankMatrix::from_ranks(labels(3, "a"), labels(4, "p"), vec![2.0; 12]).unwrap();
        let f = friedman_test(&r);
        assert_eq!(f.statistic, 0.0);
        assert_eq!(f.df, 2);
        assert_eq!(f.p, 1.0);
    }

    #[test]
    fn identical_permutation_columns() {
        // avg ranks 1, 2, 3 over p = 2: 12·2/(3·4) · (1 + 0 + 1) = 4
        let r = RankMatrix::from_ranks(
            labels(3, "a"),
            labels(2, "p"),
            vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0],
        )
        .unwrap();
        let f = friedman_test(&r);
        assert!((f.statistic - 4.0).abs() < 1e-12);
        assert!((f.log10_p - (-2.0 / std::f64::consts::LN_10)).abs() < 1e-12);
    }

    #[test]
    fn default_convention_reproduces_small_table_cd() {
        let cd = bonferroni_dunn_cd(3, 500, 0.001, Convention::AllPairs).unwrap();
        assert!((cd - 0.2269).abs() < 1e-4, "{cd}");
        let q = normal_upper_quantile(0.001 / 6.0);
        assert!((q - 3.588).abs() < 1e-3);
    }

    #[test]
    fn cd_vanishes_as_alpha_approaches_one() {
        let cd = bonferroni_dunn_cd(2, 1, 0.999_999, Convention::AllPairs).unwrap();
        assert!(cd > 0.0 && cd < 1e-5);
    }

    #[test]
    fn cd_rejects_bad_alpha() {
        for alpha in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(
                bonferroni_dunn_cd(3, 10, alpha, Convention::AllPairs),
                Err(Error::Domain(_))
            ));
        }
    }

    #[test]
    fn convention_names_round_trip() {
        for c in Convention::ALL {
            assert_eq!(c.name().parse::<Convention>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.name()));
        }
    }
}

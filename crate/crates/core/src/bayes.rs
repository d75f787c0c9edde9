//! Pairwise win extraction and Bradley–Terry fitting.
//!
//! Parameters are fitted by the Zermelo fixed-point iteration in Newman's
//! form, updating players in place:
//!
//! ```text
//! θ_i ← Σ_j w_ij·θ_j/(θ_i+θ_j)  /  Σ_j w_ji/(θ_i+θ_j)
//! ```
//!
//! Updating in place matters: the simultaneous (Jacobi) version of this map
//! can settle into a period-two cycle when one player has no wins.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::PerformanceMatrix;
use crate::verdict::Direction;

/// Strict pairwise wins counted column by column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinMatrix {
    pub labels: Vec<String>,
    /// `wins[i][j]`: problems on which `i` scored strictly better than `j`.
    pub wins: Vec<Vec<u64>>,
    /// `ties[i][j]`: problems on which `i` and `j` scored equal (symmetric).
    pub ties: Vec<Vec<u64>>,
}

impl WinMatrix {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::NotFound(format!("algorithm {label:?}")))
    }
}

pub fn pairwise_wins(m: &PerformanceMatrix) -> WinMatrix {
    let n = m.n();
    let mut wins = vec![vec![0u64; n]; n];
    let mut ties = vec![vec![0u64; n]; n];
    for j in 0..m.p() {
        let col = m.score_column(j);
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                if col[a] < col[b] {
                    wins[a][b] += 1;
                } else if col[a] == col[b] {
                    ties[a][b] += 1;
                }
            }
        }
    }
    WinMatrix {
        labels: m.algorithms().to_vec(),
        wins,
        ties,
    }
}

/// Scale fixed on the fitted parameters. Probabilities do not depend on it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Geometric mean of the positive parameters equals one.
    #[default]
    GeometricMean,
    /// Parameters sum to one.
    SumToOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub tolerance: f64,
    pub max_iter: usize,
    /// Pseudo-wins added in both directions for every pair. Zero gives the
    /// plain maximum-likelihood fit; 0.5 is a reasonable choice for real data.
    pub prior_weight: f64,
    pub normalization: Normalization,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iter: 10_000,
            prior_weight: 0.0,
            normalization: Normalization::GeometricMean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BradleyTerryFit {
    pub labels: Vec<String>,
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub tolerance: f64,
    pub prior_weight: f64,
    pub normalization: Normalization,
}

impl BradleyTerryFit {
    pub fn theta_of(&self, label: &str) -> Result<f64> {
        Ok(self.theta[self.index(label)?])
    }

    fn index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::NotFound(format!("algorithm {label:?}")))
    }
}

pub fn fit_bradley_terry(w: &WinMatrix, opts: &FitOptions) -> Result<BradleyTerryFit> {
    let n = w.n();
    if n < 2 {
        return Err(Error::Size(format!("need at least 2 players, got {n}")));
    }
    if !(opts.tolerance > 0.0) {
        return Err(Error::domain("tolerance must be positive"));
    }
    if !(opts.prior_weight >= 0.0 && opts.prior_weight.is_finite()) {
        return Err(Error::domain("prior weight must be a finite non-negative number"));
    }
    let prior = opts.prior_weight;
    let count = |i: usize, j: usize| w.wins[i][j] as f64 + prior;

    let mut theta = vec![1.0; n];
    normalize(&mut theta, opts.normalization);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let previous = theta.clone();
        for i in 0..n {
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..n {
                let s = theta[i] + theta[j];
                if j == i || s == 0.0 {
                    continue;
                }
                num += count(i, j) * theta[j] / s;
                den += count(j, i) / s;
            }
            // a player that never lost carries no information to move on
            if den > 0.0 {
                theta[i] = num / den;
            }
        }
        normalize(&mut theta, opts.normalization);
        let change = theta
            .iter()
            .zip(&previous)
            .map(|(&new, &old)| match (new > 0.0, old > 0.0) {
                (true, _) => (new - old).abs() / new,
                (false, true) => 1.0,
                (false, false) => 0.0,
            })
            .fold(0.0, f64::max);
        if !theta.iter().all(|t| t.is_finite()) {
            break;
        }
        if change < opts.tolerance {
            converged = true;
            break;
        }
    }

    Ok(BradleyTerryFit {
        labels: w.labels.clone(),
        theta,
        iterations,
        converged,
        tolerance: opts.tolerance,
        prior_weight: opts.prior_weight,
        normalization: opts.normalization,
    })
}

fn normalize(theta: &mut [f64], how: Normalization) {
    let scale = match how {
        Normalization::GeometricMean => {
            let logs: Vec<f64> = theta.iter().filter(|&&t| t > 0.0).map(|t| t.ln()).collect();
            if logs.is_empty() {
                return;
            }
            (logs.iter().sum::<f64>() / logs.len() as f64).exp()
        }
        Normalization::SumToOne => theta.iter().sum(),
    };
    if scale > 0.0 && scale.is_finite() {
        theta.iter_mut().for_each(|t| *t /= scale);
    }
}

/// `P(i ≻ j) = θ_i / (θ_i + θ_j)`; `0.5` when both parameters are zero.
pub fn bt_prob(fit: &BradleyTerryFit, i: &str, j: &str) -> Result<f64> {
    let (a, b) = (fit.theta_of(i)?, fit.theta_of(j)?);
    Ok(prob(a, b))
}

fn prob(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.5
    } else {
        a / (a + b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesComparison {
    pub first: String,
    pub second: String,
    pub theta_first: f64,
    pub theta_second: f64,
    pub p_first_over_second: f64,
    pub p_second_over_first: f64,
    pub direction: Direction,
    pub result: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesReport {
    pub fit: BradleyTerryFit,
    pub pairwise: Vec<BayesComparison>,
}

/// Wins, fit, then pairwise probabilities; `i ≻ j` iff `P(i ≻ j) > 0.5`.
pub fn bayes_compare<S: AsRef<str>>(
    m: &PerformanceMatrix,
    pairs: &[(S, S)],
    opts: &FitOptions,
) -> Result<BayesReport> {
    for (a, b) in pairs {
        m.algorithm_index(a.as_ref())?;
        m.algorithm_index(b.as_ref())?;
    }
    let fit = fit_bradley_terry(&pairwise_wins(m), opts)?;
    let pairwise = pairs
        .iter()
        .map(|(a, b)| {
            let (a, b) = (a.as_ref(), b.as_ref());
            let (ta, tb) = (fit.theta_of(a)?, fit.theta_of(b)?);
            let pab = prob(ta, tb);
            let direction = if pab > 0.5 {
                Direction::First
            } else if pab < 0.5 {
                Direction::Second
            } else {
                Direction::Indistinguishable
            };
            Ok(BayesComparison {
                first: a.to_owned(),
                second: b.to_owned(),
                theta_first: ta,
                theta_second: tb,
                p_first_over_second: pab,
                p_second_over_first: prob(tb, ta),
                direction,
                result: direction.render(a, b),
            })
        })
        .collect::<Result<_>>()?;
    Ok(BayesReport { fit, pairwise })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Orientation;

    fn matrix(rows: Vec<Vec<f64>>) -> PerformanceMatrix {
        let n = rows.len();
        let p = rows[0].len();
        PerformanceMatrix::new(
            (0..n).map(|i| format!("a{i}")).collect(),
            (0..p).map(|j| format!("p{j}")).collect(),
            rows,
            Orientation::LowerIsBetter,
        )
        .unwrap()
    }

    fn wins(w: Vec<Vec<u64>>) -> WinMatrix {
        let n = w.len();
        WinMatrix {
            labels: (0..n).map(|i| format!("a{i}")).collect(),
            ties: vec![vec![0; n]; n],
            wins: w,
        }
    }

    #[test]
    fn single_column_wins() {
        let w = pairwise_wins(&matrix(vec![vec![1.0], vec![2.0]]));
        assert_eq!(w.wins, vec![vec![0, 1], vec![0, 0]]);
    }

    #[test]
    fn equal_column_counts_ties_only() {
        let w = pairwise_wins(&matrix(vec![vec![3.0], vec![3.0], vec![3.0]]));
        assert!(w.wins.iter().flatten().all(|&c| c == 0));
        assert_eq!(w.ties[0][1], 1);
        assert_eq!(w.ties[2][0], 1);
        assert_eq!(w.ties[1][1], 0);
    }

    #[test]
    fn symmetric_wins_give_equal_thetas() {
        let w = wins(vec![vec![0, 5, 5], vec![5, 0, 5], vec![5, 5, 0]]);
        let fit = fit_bradley_terry(&w, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        for t in &fit.theta {
            assert!((t - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_player_closed_form() {
        for (a, b) in [(7u64, 3u64), (1, 9), (50, 50), (499, 1)] {
            let fit = fit_bradley_terry(&wins(vec![vec![0, a], vec![b, 0]]), &FitOptions::default())
                .unwrap();
            let p = bt_prob(&fit, "a0", "a1").unwrap();
            assert!((p - a as f64 / (a + b) as f64).abs() < 1e-12, "{a}/{b}: {p}");
        }
    }

    #[test]
    fn total_dominance_tends_to_certainty() {
        let m = matrix(vec![vec![1.0; 20], vec![2.0; 20]]);
        let mut last = 0.0;
        for prior in [1.0, 0.1, 0.01, 0.0] {
            let opts = FitOptions {
                prior_weight: prior,
                ..FitOptions::default()
            };
            let report = bayes_compare(&m, &[("a0", "a1")], &opts).unwrap();
            let p = report.pairwise[0].p_first_over_second;
            // closed form with pseudo-wins: (20 + w0) / (20 + 2 w0)
            assert!((p - (20.0 + prior) / (20.0 + 2.0 * prior)).abs() < 1e-9);
            assert!(p > last);
            last = p;
        }
        assert_eq!(last, 1.0);
    }

    #[test]
    fn probabilities_from_thetas() {
        let fit = BradleyTerryFit {
            labels: vec!["i".into(), "j".into(), "k".into()],
            theta: vec![0.5, 2.0, 0.5],
            iterations: 0,
            converged: true,
            tolerance: 1e-10,
            prior_weight: 0.0,
            normalization: Normalization::GeometricMean,
        };
        assert_eq!(bt_prob(&fit, "i", "k").unwrap(), 0.5);
        assert!((bt_prob(&fit, "i", "j").unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(bt_prob(&fit, "i", "z"), Err(Error::NotFound(_))));

        let big = BradleyTerryFit {
            theta: vec![1.31e-4, 1.01e-7, 1.0],
            ..fit
        };
        let p = bt_prob(&big, "i", "j").unwrap();
        assert!((p - 0.99923).abs() < 1e-5);
        assert!((p + bt_prob(&big, "j", "i").unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_options() {
        let w = wins(vec![vec![0, 1], vec![1, 0]]);
        let bad_tol = FitOptions {
            tolerance: 0.0,
            ..FitOptions::default()
        };
        assert!(fit_bradley_terry(&w, &bad_tol).is_err());
        let bad_prior = FitOptions {
            prior_weight: -1.0,
            ..FitOptions::default()
        };
        assert!(fit_bradley_terry(&w, &bad_prior).is_err());
    }

    #[test]
    fn non_convergence_is_reported_not_looped() {
        let w = wins(vec![vec![0, 3, 4], vec![2, 0, 6], vec![1, 2, 0]]);
        let opts = FitOptions {
            max_iter: 1,
            tolerance: 1e-14,
            ..FitOptions::default()
        };
        let fit = fit_bradley_terry(&w, &opts).unwrap();
        assert_eq!(fit.iterations, 1);
        assert!(!fit.converged);
    }

    #[test]
    fn sum_normalization_sums_to_one() {
        let w = wins(vec![vec![0, 3, 4], vec![2, 0, 6], vec![1, 2, 0]]);
        let opts = FitOptions {
            normalization: Normalization::SumToOne,
            ..FitOptions::default()
        };
        let fit = fit_bradley_terry(&w, &opts).unwrap();
        assert!((fit.theta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let geo = fit_bradley_terry(&w, &FitOptions::default()).unwrap();
        let p1 = bt_prob(&fit, "a0", "a2").unwrap();
        let p2 = bt_prob(&geo, "a0", "a2").unwrap();
        assert!((p1 - p2).abs() < 1e-9);
    }
}

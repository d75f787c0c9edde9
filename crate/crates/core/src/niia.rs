//! Detection of verdicts that depend on irrelevant algorithms: a pairwise
//! verdict flips when other algorithms are dropped from the comparison.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::absrank::AbsRankFn;
use crate::bayes::{bayes_compare, FitOptions};
use crate::error::{Error, Result};
use crate::matrix::{Orientation, PerformanceMatrix};
use crate::normalize::{absolute_normalize, rank_normalize};
use crate::stats::{npht_compare, Convention};
use crate::verdict::Direction;

pub const DEFAULT_SUBSET_LIMIT: usize = 20;

const PROBLEMS: usize = 500;
const SPLIT: usize = 100;

/// The two paradox datasets over 500 problems, lower values better.
///
/// Dataset 1 has rows `A, B, C1`: `A` scores 1 on the first 100 problems
/// and 99 afterwards, `B` 99 then 98, `C1` 100 throughout. Dataset 2 adds
/// `C2..C98`, where `Ci` scores `i` then `i − 1`.
pub fn gen_paper_datasets() -> (PerformanceMatrix, PerformanceMatrix) {
    let row = |head: f64, tail: f64| -> Vec<f64> {
        (0..PROBLEMS).map(|j| if j < SPLIT { head } else { tail }).collect()
    };
    let problems: Vec<String> = (1..=PROBLEMS).map(|j| format!("P{j}")).collect();
    let mut labels = vec!["A".to_owned(), "B".to_owned(), "C1".to_owned()];
    let mut rows = vec![row(1.0, 99.0), row(99.0, 98.0), row(100.0, 100.0)];
    let d1 = PerformanceMatrix::new(labels.clone(), problems.clone(), rows.clone(), Orientation::LowerIsBetter)
        .expect("dataset 1 is well formed");
    for i in 2..=98 {
        labels.push(format!("C{i}"));
        rows.push(row(i as f64, i as f64 - 1.0));
    }
    let d2 = PerformanceMatrix::new(labels, problems, rows, Orientation::LowerIsBetter)
        .expect("dataset 2 is well formed");
    (d1, d2)
}

/// How the verdict `T_{A,B}` is computed.
#[derive(Debug, Clone)]
pub enum Method {
    /// Lower average rank wins, no significance test.
    AvgRank,
    /// Friedman plus critical difference; insignificant gaps are ties.
    AvgRankGated { alpha: f64, convention: Convention },
    BradleyTerry(FitOptions),
    /// Lower mean absolute rank wins, one CDF per problem.
    Absolute(HashMap<String, AbsRankFn>),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::AvgRank => "avg-rank",
            Method::AvgRankGated { .. } => "avg-rank-gated",
            Method::BradleyTerry(_) => "bradley-terry",
            Method::Absolute(_) => "absolute",
        }
    }

    /// Direction of `(a, b)` on `m`, plus the two numbers it rests on.
    fn verdict(&self, m: &PerformanceMatrix, a: &str, b: &str) -> Result<(Direction, Evidence)> {
        let (i, j) = (m.algorithm_index(a)?, m.algorithm_index(b)?);
        match self {
            Method::AvgRank => {
                let avg = rank_normalize(m).average_ranks();
                Ok((
                    Direction::from_lower_is_better(avg[i], avg[j]),
                    Evidence::new("avg-rank", avg[i], avg[j]),
                ))
            }
            Method::AvgRankGated { alpha, convention } => {
                let report = npht_compare(m, &[(a, b)], *alpha, *convention)?;
                let c = &report.pairwise[0];
                Ok((c.direction, Evidence::new("avg-rank", c.avg_rank_first, c.avg_rank_second)))
            }
            Method::BradleyTerry(opts) => {
                let report = bayes_compare(m, &[(a, b)], opts)?;
                let c = &report.pairwise[0];
                Ok((
                    c.direction,
                    Evidence::new("probability", c.p_first_over_second, c.p_second_over_first),
                ))
            }
            Method::Absolute(cdfs) => {
                let v = absolute_normalize(m, cdfs)?;
                let p = v.p() as f64;
                // oriented scores: lower is better either way
                let mean = |k: usize| (0..v.p()).map(|q| v.score(k, q)).sum::<f64>() / p;
                let raw = |k: usize| v.row(k).iter().sum::<f64>() / p;
                Ok((
                    Direction::from_lower_is_better(mean(i), mean(j)),
                    Evidence::new("mean-absolute-rank", raw(i), raw(j)),
                ))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub kind: String,
    pub first: f64,
    pub second: f64,
}

impl Evidence {
    fn new(kind: &str, first: f64, second: f64) -> Self {
        Self {
            kind: kind.to_owned(),
            first,
            second,
        }
    }
}

/// Which algorithm subsets `E ⊇ {A, B}` are tried.
#[derive(Debug, Clone, PartialEq)]
pub enum SubsetStrategy {
    Explicit(Vec<Vec<String>>),
    /// Every subset; refused when there are more than `limit` algorithms.
    AllSubsets { limit: usize },
    /// Every way of dropping exactly `k` algorithms other than the pair.
    LeaveKOut(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipReport {
    pub method: String,
    pub first: String,
    pub second: String,
    pub subset: Vec<String>,
    pub direction_full: Direction,
    pub direction_subset: Direction,
    pub flipped: bool,
    pub evidence_full: Evidence,
    pub evidence_subset: Evidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiiaOutcome {
    pub reports: Vec<FlipReport>,
    /// Subsets passed over, with the reason.
    pub skipped: Vec<String>,
}

impl NiiaOutcome {
    pub fn flips(&self) -> impl Iterator<Item = &FlipReport> {
        self.reports.iter().filter(|r| r.flipped)
    }
}

/// Compares the verdict on `(a, b)` over the full matrix with the verdict on
/// every subset produced by `strategy`. A flip needs both verdicts strict
/// and opposite.
pub fn niia_check(
    m: &PerformanceMatrix,
    method: &Method,
    pair: (&str, &str),
    strategy: &SubsetStrategy,
) -> Result<NiiaOutcome> {
    let (a, b) = pair;
    if a == b {
        return Err(Error::Label(format!("pair needs two distinct algorithms, got {a:?} twice")));
    }
    m.algorithm_index(a)?;
    m.algorithm_index(b)?;
    let (subsets, skipped) = enumerate(m, pair, strategy)?;
    let (direction_full, evidence_full) = method.verdict(m, a, b)?;

    let reports = subsets
        .into_par_iter()
        .map(|subset| {
            let sub = m.project(&subset)?;
            let (direction_subset, evidence_subset) = method.verdict(&sub, a, b)?;
            Ok(FlipReport {
                method: method.name().to_owned(),
                first: a.to_owned(),
                second: b.to_owned(),
                subset,
                direction_full,
                direction_subset,
                flipped: direction_full.is_strict() && direction_subset == direction_full.swapped(),
                evidence_full: evidence_full.clone(),
                evidence_subset,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NiiaOutcome { reports, skipped })
}

fn enumerate(
    m: &PerformanceMatrix,
    (a, b): (&str, &str),
    strategy: &SubsetStrategy,
) -> Result<(Vec<Vec<String>>, Vec<String>)> {
    let others: Vec<&String> = m.algorithms().iter().filter(|l| *l != a && *l != b).collect();
    // subsets listed in file order
    let build = |keep: &dyn Fn(usize) -> bool| -> Vec<String> {
        let mut k = 0;
        m.algorithms()
            .iter()
            .filter(|l| {
                if *l == a || *l == b {
                    return true;
                }
                let inside = keep(k);
                k += 1;
                inside
            })
            .cloned()
            .collect()
    };
    match strategy {
        SubsetStrategy::Explicit(list) => {
            let mut subsets = Vec::new();
            let mut skipped = Vec::new();
            for s in list {
                if s.iter().any(|l| l == a) && s.iter().any(|l| l == b) {
                    subsets.push(s.clone());
                } else {
                    skipped.push(format!("{{{}}} does not contain both {a} and {b}", s.join(",")));
                }
            }
            Ok((subsets, skipped))
        }
        SubsetStrategy::AllSubsets { limit } => {
            if m.n() > *limit {
                return Err(Error::Capability(format!(
                    "{} algorithms exceed the all-subsets limit of {limit}",
                    m.n()
                )));
            }
            let full = 1u64 << others.len();
            // the last mask keeps everything, which is the full matrix
            let subsets = (0..full - 1).map(|mask| build(&|k| (mask >> k) & 1 == 1)).collect();
            Ok((subsets, Vec::new()))
        }
        SubsetStrategy::LeaveKOut(k) => {
            if *k == 0 || *k > others.len() {
                return Err(Error::domain(format!(
                    "cannot leave {k} out of {} other algorithms",
                    others.len()
                )));
            }
            let subsets = combinations(others.len(), *k)
                .into_iter()
                .map(|drop| build(&|i| !drop.contains(&i)))
                .collect();
            Ok((subsets, Vec::new()))
        }
    }
}

/// All `k`-element index sets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(pos) = (0..k).rev().find(|&p| idx[p] < n - k + p) else {
            return out;
        };
        idx[pos] += 1;
        for q in pos + 1..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

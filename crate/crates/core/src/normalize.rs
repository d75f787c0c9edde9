//! Column-wise normalizations of a performance matrix.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::absrank::AbsRankFn;
use crate::error::{Error, Result};
use crate::matrix::PerformanceMatrix;

/// Within-column ranks of a performance matrix. Rank 1 is the best entry of
/// a column and `n` the worst; tied entries share the mean of their positions.
#[derive(Debug, Clone, PartialEq)]
pub struct RankMatrix {
    algorithms: Vec<String>,
    problems: Vec<String>,
    values: Vec<f64>,
}

impl RankMatrix {
    /// Builds a rank matrix directly from row-major ranks.
    pub fn from_ranks(
        algorithms: Vec<String>,
        problems: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let (n, p) = (algorithms.len(), problems.len());
        if n < 2 || p < 1 || values.len() != n * p {
            return Err(Error::Shape(format!(
                "{} ranks for a {n}×{p} matrix",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(1.0..=n as f64).contains(*v)) {
            return Err(Error::Domain(format!("rank {v} outside [1, {n}]")));
        }
        Ok(Self {
            algorithms,
            problems,
            values,
        })
    }

    pub fn n(&self) -> usize {
        self.algorithms.len()
    }

    pub fn p(&self) -> usize {
        self.problems.len()
    }

    pub fn algorithms(&self) -> &[String] {
        &self.algorithms
    }

    pub fn problems(&self) -> &[String] {
        &self.problems
    }

    pub fn rank(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.rank(i, j)).collect()
    }

    /// Mean rank of every algorithm across problems.
    pub fn average_ranks(&self) -> Vec<f64> {
        let p = self.p();
        self.values
            .chunks(p)
            .map(|row| row.iter().sum::<f64>() / p as f64)
            .collect()
    }
}

/// Ranks of `values` (1 = smallest), ties get the mean of their positions.
pub fn mean_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their mean
        let shared = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = shared;
        }
        start = end;
    }
    ranks
}

/// Replaces every value by its rank within its column.
pub fn rank_normalize(m: &PerformanceMatrix) -> RankMatrix {
    let (n, p) = (m.n(), m.p());
    let mut values = vec![0.0; n * p];
    for j in 0..p {
        for (i, r) in mean_ranks(&m.score_column(j)).into_iter().enumerate() {
            values[i * p + j] = r;
        }
    }
    RankMatrix {
        algorithms: m.algorithms().to_vec(),
        problems: m.problems().to_vec(),
        values,
    }
}

/// Max–min scaling of one column onto `[0, 1]`.
pub fn max_min_scale(column: &[f64]) -> Result<Vec<f64>> {
    let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if column.is_empty() || !(hi > lo) {
        return Err(Error::DegenerateScale("column has max == min".into()));
    }
    Ok(column.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

/// z-score of one column, using the population standard deviation.
pub fn z_score(column: &[f64]) -> Result<Vec<f64>> {
    if column.is_empty() {
        return Err(Error::DegenerateScale("empty column".into()));
    }
    let len = column.len() as f64;
    let mean = column.iter().sum::<f64>() / len;
    let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len;
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Err(Error::DegenerateScale("column has zero variance".into()));
    }
    Ok(column.iter().map(|v| (v - mean) / sd).collect())
}

/// Maps every entry through the absolute-rank function of its problem.
///
/// Raw metric values are evaluated (the CDF lives on the metric's own scale),
/// so the result keeps the input's orientation.
pub fn absolute_normalize(
    m: &PerformanceMatrix,
    cdfs: &HashMap<String, AbsRankFn>,
) -> Result<PerformanceMatrix> {
    let fns: Vec<&AbsRankFn> = m
        .problems()
        .iter()
        .map(|label| {
            cdfs.get(label)
                .ok_or_else(|| Error::NotFound(format!("absolute-rank function for {label:?}")))
        })
        .collect::<Result<_>>()?;
    let p = m.p();
    let values = m
        .values()
        .par_iter()
        .enumerate()
        .map(|(k, &t)| fns[k % p].evaluate(t))
        .collect::<Result<Vec<f64>>>()?;
    m.with_values(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Orientation;

    fn col_matrix(cols: &[&[f64]]) -> PerformanceMatrix {
        let n = cols[0].len();
        let rows = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        PerformanceMatrix::new(
            (0..n).map(|i| format!("a{i}")).collect(),
            (0..cols.len()).map(|j| format!("p{j}")).collect(),
            rows,
            Orientation::LowerIsBetter,
        )
        .unwrap()
    }

    #[test]
    fn distinct_values_rank_in_order() {
        let r = rank_normalize(&col_matrix(&[&[1.0, 99.0, 100.0]]));
        assert_eq!(r.column(0), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn ties_share_mean_rank() {
        let r = rank_normalize(&col_matrix(&[&[5.0, 5.0, 7.0]]));
        assert_eq!(r.column(0), [1.5, 1.5, 3.0]);
        assert_eq!(mean_ranks(&[2.0, 2.0, 2.0, 2.0]), [2.5; 4]);
    }

    #[test]
    fn higher_is_better_reverses_ranks() {
        let m = PerformanceMatrix::new(
            vec!["a".into(), "b".into()],
            vec!["p".into()],
            vec![vec![1.0], vec![2.0]],
            Orientation::HigherIsBetter,
        )
        .unwrap();
        assert_eq!(rank_normalize(&m).column(0), [2.0, 1.0]);
    }

    #[test]
    fn max_min_examples() {
        let v = max_min_scale(&[1.0, 99.0, 100.0]).unwrap();
        assert_eq!(v, [0.0, 98.0 / 99.0, 1.0]);
        assert_eq!(max_min_scale(&[0.0, 1.0]).unwrap(), [0.0, 1.0]);
        assert!(matches!(max_min_scale(&[3.0; 3]), Err(Error::DegenerateScale(_))));
    }

    #[test]
    fn z_score_examples() {
        assert_eq!(z_score(&[-1.0, 1.0]).unwrap(), [-1.0, 1.0]);
        assert_eq!(z_score(&[0.0, 10.0]).unwrap(), [-1.0, 1.0]);
        assert!(matches!(z_score(&[2.0, 2.0]), Err(Error::DegenerateScale(_))));
    }

    #[test]
    fn absolute_normalize_needs_every_problem() {
        let m = col_matrix(&[&[0.1, 0.2], &[0.3, 0.4]]);
        let mut cdfs = HashMap::new();
        cdfs.insert("p0".to_owned(), AbsRankFn::uniform(0.0, 1.0).unwrap());
        assert!(matches!(absolute_normalize(&m, &cdfs), Err(Error::NotFound(_))));
        cdfs.insert("p1".to_owned(), AbsRankFn::uniform(0.0, 1.0).unwrap());
        assert_eq!(absolute_normalize(&m, &cdfs).unwrap(), m);
    }

    #[test]
    fn absolute_normalize_sphere_unit_disk() {
        let m = col_matrix(&[&[1.0, 0.0]]);
        let mut cdfs = HashMap::new();
        cdfs.insert("p0".to_owned(), AbsRankFn::sphere(2, 1.0).unwrap());
        let v = absolute_normalize(&m, &cdfs).unwrap();
        assert!((v.value(0, 0) - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert_eq!(v.value(1, 0), 0.0);
    }
}

//! Labeled performance matrices: rows are algorithms, columns are problems.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether smaller or larger metric values are better.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    #[default]
    LowerIsBetter,
    HigherIsBetter,
}

/// An `n × p` matrix of finite metric values.
///
/// Values are kept exactly as supplied. Every analysis reads them through
/// [`PerformanceMatrix::score`], which negates higher-is-better data so that
/// downstream code only ever sees lower-is-better numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceMatrix {
    algorithms: Vec<String>,
    problems: Vec<String>,
    values: Vec<f64>,
    orientation: Orientation,
}

impl PerformanceMatrix {
    /// Builds a matrix from row vectors (one per algorithm).
    pub fn new(
        algorithms: Vec<String>,
        problems: Vec<String>,
        rows: Vec<Vec<f64>>,
        orientation: Orientation,
    ) -> Result<Self> {
        if rows.len() != algorithms.len() {
            return Err(Error::Shape(format!(
                "{} rows for {} algorithm labels",
                rows.len(),
                algorithms.len()
            )));
        }
        let p = problems.len();
        let mut values = Vec::with_capacity(rows.len() * p);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != p {
                return Err(Error::Shape(format!(
                    "row {:?} has {} values, expected {p}",
                    algorithms[i],
                    row.len()
                )));
            }
            values.extend(row);
        }
        Self::from_flat(algorithms, problems, values, orientation)
    }

    /// Builds a matrix from row-major values.
    pub fn from_flat(
        algorithms: Vec<String>,
        problems: Vec<String>,
        values: Vec<f64>,
        orientation: Orientation,
    ) -> Result<Self> {
        let (n, p) = (algorithms.len(), problems.len());
        if n < 2 {
            return Err(Error::Size(format!("need at least 2 algorithms, got {n}")));
        }
        if p < 1 {
            return Err(Error::Size("need at least 1 problem".into()));
        }
        if values.len() != n * p {
            return Err(Error::Shape(format!(
                "{} values for a {n}×{p} matrix",
                values.len()
            )));
        }
        check_unique(&algorithms, "algorithm")?;
        check_unique(&problems, "problem")?;
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: k / p + 1,
                col: k % p + 1,
                msg: format!("non-finite value {}", values[k]),
            });
        }
        Ok(Self {
            algorithms,
            problems,
            values,
            orientation,
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

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// Raw value as supplied.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p() + j]
    }

    /// Value oriented so that lower is better.
    pub fn score(&self, i: usize, j: usize) -> f64 {
        match self.orientation {
            Orientation::LowerIsBetter => self.value(i, j),
            Orientation::HigherIsBetter => -self.value(i, j),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.values[i * p..(i + 1) * p]
    }

    /// Oriented (lower-is-better) copy of column `j`.
    pub fn score_column(&self, j: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.score(i, j)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn algorithm_index(&self, label: &str) -> Result<usize> {
        self.algorithms
            .iter()
            .position(|a| a == label)
            .ok_or_else(|| Error::NotFound(format!("algorithm {label:?}")))
    }

    pub fn problem_index(&self, label: &str) -> Result<usize> {
        self.problems
            .iter()
            .position(|a| a == label)
            .ok_or_else(|| Error::NotFound(format!("problem {label:?}")))
    }

    /// Same labels and orientation, new row-major values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::from_flat(
            self.algorithms.clone(),
            self.problems.clone(),
            values,
            self.orientation,
        )
    }

    /// Restricts the matrix to the algorithms in `keep`, preserving the
    /// original row order.
    pub fn project<S: AsRef<str>>(&self, keep: &[S]) -> Result<Self> {
        let mut wanted = HashSet::new();
        for label in keep {
            let label = label.as_ref();
            self.algorithm_index(label)?;
            wanted.insert(label);
        }
        if wanted.len() < 2 {
            return Err(Error::Size(format!(
                "projection needs at least 2 algorithms, got {}",
                wanted.len()
            )));
        }
        let rows: Vec<usize> = (0..self.n())
            .filter(|&i| wanted.contains(self.algorithms[i].as_str()))
            .collect();
        Ok(self.select_rows(&rows))
    }

    /// Rows by index, in the order given. Indices must be valid and distinct.
    pub(crate) fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.p());
        for &i in rows {
            values.extend_from_slice(self.row(i));
        }
        Self {
            algorithms: rows.iter().map(|&i| self.algorithms[i].clone()).collect(),
            problems: self.problems.clone(),
            values,
            orientation: self.orientation,
        }
    }

    /// Reads the `algorithm,<p1>,<p2>,...` CSV layout.
    pub fn read_csv<R: Read>(reader: R, orientation: Orientation) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut records = rdr.records();
        let header = records
            .next()
            .ok_or_else(|| Error::Shape("empty CSV".into()))??;
        if header.len() < 2 {
            return Err(Error::Shape("header must list at least one problem".into()));
        }
        let problems: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        check_unique(&problems, "problem")?;
        let width = header.len();

        let mut algorithms = Vec::new();
        let mut values = Vec::new();
        for (k, record) in records.enumerate() {
            let record = record?;
            let row = k + 2;
            if record.len() == 1 && record[0].is_empty() {
                continue;
            }
            if record.len() != width {
                return Err(Error::Shape(format!(
                    "row {row} has {} fields, header has {width}",
                    record.len()
                )));
            }
            algorithms.push(record[0].to_owned());
            for (col, cell) in record.iter().enumerate().skip(1) {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row,
                    col: col + 1,
                    msg: format!("{cell:?} is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row,
                        col: col + 1,
                        msg: format!("{cell:?} is not finite"),
                    });
                }
                values.push(v);
            }
        }
        check_unique(&algorithms, "algorithm")?;
        Self::from_flat(algorithms, problems, values, orientation)
    }

    /// Writes the CSV layout with shortest round-trip scientific notation.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["algorithm".to_owned()];
        header.extend(self.problems.iter().cloned());
        wtr.write_record(&header)?;
        for (i, label) in self.algorithms.iter().enumerate() {
            let mut record = vec![label.clone()];
            record.extend(self.row(i).iter().map(|v| format!("{v:e}")));
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, orientation: Orientation) -> Result<Self> {
        Self::read_csv(File::open(path)?, orientation)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(File::create(path)?)
    }
}

fn check_unique(labels: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for label in labels {
        if !seen.insert(label.as_str()) {
            return Err(Error::Label(format!("duplicate {what} label {label:?}")));
        }
    }
    Ok(())
}

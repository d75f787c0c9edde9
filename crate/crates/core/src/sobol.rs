//! Unscrambled Sobol sequences from the Joe–Kuo direction numbers
//! (`new-joe-kuo-6.21201`, first 1024 dimensions), in Gray-code order.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TABLE_ID: &str = "new-joe-kuo-6.21201";
pub const MAX_DIM: usize = 1024;
const BITS: usize = 32;
const SCALE: f64 = 1.0 / 4_294_967_296.0;

static TABLE_TEXT: &str = include_str!("data/new-joe-kuo-6.21201.1024.txt");

fn directions() -> &'static [[u32; BITS]] {
    static TABLE: OnceLock<Vec<[u32; BITS]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = Vec::with_capacity(MAX_DIM);
        let mut first = [0u32; BITS];
        for (k, v) in first.iter_mut().enumerate() {
            *v = 1 << (BITS - 1 - k);
        }
        table.push(first);
        for line in TABLE_TEXT.lines().skip(1) {
            let fields: Vec<u32> = line
                .split_whitespace()
                .map(|f| f.parse().expect("direction table is well formed"))
                .collect();
            let (s, a, m) = (fields[1] as usize, fields[2], &fields[3..]);
            let mut v = [0u32; BITS];
            for k in 0..s.min(BITS) {
                v[k] = m[k] << (BITS - 1 - k);
            }
            for k in s..BITS {
                v[k] = v[k - s] ^ (v[k - s] >> s);
                for l in 1..s {
                    if (a >> (s - 1 - l)) & 1 == 1 {
                        v[k] ^= v[k - l];
                    }
                }
            }
            table.push(v);
        }
        debug_assert_eq!(table.len(), MAX_DIM);
        table
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SobolConfig {
    pub dim: usize,
    /// `N = 2^log2n` points are drawn.
    pub log2n: u32,
    /// Leading points dropped before the `N` kept ones. The default of 1
    /// drops the all-zero first point.
    pub skip: u64,
    pub table: String,
}

impl SobolConfig {
    pub fn new(dim: usize, log2n: u32) -> Self {
        Self {
            dim,
            log2n,
            skip: 1,
            table: TABLE_ID.to_owned(),
        }
    }

    pub fn with_skip(mut self, skip: u64) -> Self {
        self.skip = skip;
        self
    }

    pub fn count(&self) -> u64 {
        1u64 << self.log2n
    }

    pub fn validate(&self) -> Result<()> {
        if self.table != TABLE_ID {
            return Err(Error::Capability(format!(
                "unknown direction-number table {:?}, only {TABLE_ID} is embedded",
                self.table
            )));
        }
        if self.dim == 0 || self.dim > MAX_DIM {
            return Err(Error::Capability(format!(
                "dimension {} outside 1..={MAX_DIM}",
                self.dim
            )));
        }
        if self.log2n > 31 {
            return Err(Error::Capability(format!("log2n = {} exceeds 31", self.log2n)));
        }
        if self.skip + self.count() > 1u64 << BITS {
            return Err(Error::Capability("sequence index exceeds 2^32".into()));
        }
        Ok(())
    }
}

/// Sequential generator over one Sobol sequence.
#[derive(Debug, Clone)]
pub struct SobolStream {
    v: &'static [[u32; BITS]],
    state: Vec<u32>,
    /// Index of the point held in `state`.
    index: u64,
}

impl SobolStream {
    /// Stream positioned at point `start` (point 0 is the origin).
    pub fn new(dim: usize, start: u64) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Capability(format!("dimension {dim} outside 1..={MAX_DIM}")));
        }
        if start >= 1u64 << BITS {
            return Err(Error::Capability("sequence index exceeds 2^32".into()));
        }
        let v = &directions()[..dim];
        let gray = start ^ (start >> 1);
        let state = v
            .iter()
            .map(|dir| {
                (0..BITS)
                    .filter(|&k| (gray >> k) & 1 == 1)
                    .fold(0u32, |acc, k| acc ^ dir[k])
            })
            .collect();
        Ok(Self {
            v,
            state,
            index: start,
        })
    }

    pub fn dim(&self) -> usize {
        self.state.len()
    }

    /// Writes the current point into `out` and advances.
    pub fn next_into(&mut self, out: &mut [f64]) {
        for (o, &x) in out.iter_mut().zip(&self.state) {
            *o = x as f64 * SCALE;
        }
        self.advance();
    }

    /// Raw 32-bit coordinates of the current point, then advances.
    pub fn next_bits(&mut self) -> Vec<u32> {
        let bits = self.state.clone();
        self.advance();
        bits
    }

    fn advance(&mut self) {
        self.index += 1;
        let c = self.index.trailing_zeros() as usize;
        if c < BITS {
            for (x, dir) in self.state.iter_mut().zip(self.v) {
                *x ^= dir[c];
            }
        }
    }
}

/// The `2^log2n` points selected by `cfg`, each in `[0, 1)^dim`.
pub fn sobol_points(cfg: &SobolConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let mut stream = SobolStream::new(cfg.dim, cfg.skip)?;
    Ok((0..cfg.count())
        .map(|_| {
            let mut p = vec![0.0; cfg.dim];
            stream.next_into(&mut p);
            p
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_points_of_dimension_one() {
        let pts = sobol_points(&SobolConfig::new(1, 2)).unwrap();
        let xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        assert_eq!(xs[..3], [0.5, 0.75, 0.25]);
    }

    #[test]
    fn stream_can_start_anywhere() {
        let mut a = SobolStream::new(7, 0).unwrap();
        for _ in 0..37 {
            a.next_bits();
        }
        let mut b = SobolStream::new(7, 37).unwrap();
        for _ in 0..20 {
            assert_eq!(a.next_bits(), b.next_bits());
        }
    }

    #[test]
    fn every_dimension_is_a_permutation_of_dyadic_cells() {
        // the first 2^k points hit each interval [i/2^k, (i+1)/2^k) once
        let k = 6;
        let mut stream = SobolStream::new(MAX_DIM, 0).unwrap();
        let mut seen = vec![vec![false; 1 << k]; MAX_DIM];
        for _ in 0..1 << k {
            for (d, x) in stream.next_bits().into_iter().enumerate() {
                let cell = (x >> (32 - k)) as usize;
                assert!(!seen[d][cell], "dimension {d} repeats cell {cell}");
                seen[d][cell] = true;
            }
        }
    }

    #[test]
    fn config_limits() {
        assert!(matches!(SobolConfig::new(0, 4).validate(), Err(Error::Capability(_))));
        assert!(matches!(SobolConfig::new(MAX_DIM + 1, 4).validate(), Err(Error::Capability(_))));
        assert!(matches!(SobolConfig::new(2, 32).validate(), Err(Error::Capability(_))));
        let mut cfg = SobolConfig::new(2, 4);
        cfg.table = "other".into();
        assert!(matches!(cfg.validate(), Err(Error::Capability(_))));
        assert!(SobolConfig::new(MAX_DIM, 31).validate().is_ok());
    }
}

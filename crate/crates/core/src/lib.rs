//! Benchmark analysis toolkit built around *absolute ranking*: each
//! performance value is mapped through the CDF of the same metric under
//! uniform random search, instead of being ranked against the other
//! algorithms that happen to be in the comparison.
//!
//! The crate also carries the relative-ranking pipelines (Friedman test with
//! Bonferroni–Dunn critical difference, Bradley–Terry fitting) and a detector
//! for conclusions that change when unrelated algorithms are added or removed.
//!
//! Module map:
//!
//! * [`matrix`]: labeled performance matrices, CSV I/O, projection.
//! * [`normalize`]: rank, max–min, z-score and absolute normalization.
//! * [`stats`]: Friedman test and critical differences.
//! * [`bayes`]: pairwise wins and Bradley–Terry fitting.
//! * [`bench`]: benchmark functions and the `m0` metric.
//! * [`absrank`]: absolute-rank CDF objects and their composition.
//! * [`sobol`], [`sampling`]: quasi-random sampling and search-range selection.
//! * [`niia`]: paradox datasets and the subset-flip detector.

pub mod absrank;
pub mod bayes;
pub mod bench;
pub mod error;
pub mod matrix;
pub mod niia;
pub mod normalize;
pub mod sampling;
pub mod sobol;
pub mod special;
pub mod stats;

mod verdict;

pub use error::{Error, Result};
pub use matrix::{Orientation, PerformanceMatrix};
pub use verdict::Direction;

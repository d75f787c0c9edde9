use std::fmt;

use serde::{Deserialize, Serialize};

/// Outcome of comparing the first algorithm of a pair against the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// First of the pair is better.
    First,
    /// Second of the pair is better.
    Second,
    /// No strict preference (equal evidence, or not significant).
    Indistinguishable,
}

impl Direction {
    /// Direction implied by two lower-is-better scores.
    pub fn from_lower_is_better(first: f64, second: f64) -> Self {
        if first < second {
            Direction::First
        } else if second < first {
            Direction::Second
        } else {
            Direction::Indistinguishable
        }
    }

    /// The same verdict seen from the swapped pair.
    pub fn swapped(self) -> Self {
        match self {
            Direction::First => Direction::Second,
            Direction::Second => Direction::First,
            Direction::Indistinguishable => Direction::Indistinguishable,
        }
    }

    pub fn is_strict(self) -> bool {
        self != Direction::Indistinguishable
    }

    /// `"A≻B"`-style rendering.
    pub fn render(self, first: &str, second: &str) -> String {
        match self {
            Direction::First => format!("{first}≻{second}"),
            Direction::Second => format!("{second}≻{first}"),
            Direction::Indistinguishable => format!("{first}~{second}"),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::First => "first",
            Direction::Second => "second",
            Direction::Indistinguishable => "indistinguishable",
        })
    }
}

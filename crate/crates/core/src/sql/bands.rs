//! Percentile banding of score distributions.
//!
//! Percentiles use the nearest-rank method: the value at 1-based position
//! `ceil(q * n)` of the sorted scores. Scores strictly below the 25th
//! percentile are low, strictly above the 75th are high, the rest medium.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ComplexityScore;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("cannot band an empty list of scores")]
pub struct EmptyScores;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Low,
    Medium,
    High,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::Low, Band::Medium, Band::High];

    pub fn label(self) -> &'static str {
        match self {
            Band::Low => "Low",
            Band::Medium => "Medium",
            Band::High => "High",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandThresholds<T> {
    pub p25: T,
    pub p75: T,
}

impl<T: PartialOrd + Copy> BandThresholds<T> {
    pub fn band(&self, score: T) -> Band {
        if score < self.p25 {
            Band::Low
        } else if score > self.p75 {
            Band::High
        } else {
            Band::Medium
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Banding<T> {
    /// Always `"nearest-rank"`.
    pub method: String,
    pub thresholds: BandThresholds<T>,
    /// One band per input score, in input order.
    pub bands: Vec<Band>,
    /// Counts indexed by [`Band::index`].
    pub counts: [usize; 3],
}

fn sorted<T: Copy + PartialOrd>(scores: &[T]) -> Vec<T> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    v
}

/// Nearest-rank percentile of already sorted values, `percent` in 1..=100.
pub fn nearest_rank<T: Copy>(sorted: &[T], percent: u32) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = ((percent as usize * n).div_ceil(100)).clamp(1, n);
    Some(sorted[rank - 1])
}

pub fn categorize_scores<T: Copy + PartialOrd>(scores: &[T]) -> Result<Banding<T>, EmptyScores> {
    let s = sorted(scores);
    let p25 = nearest_rank(&s, 25).ok_or(EmptyScores)?;
    let p75 = nearest_rank(&s, 75).ok_or(EmptyScores)?;
    let thresholds = BandThresholds { p25, p75 };
    let bands: Vec<Band> = scores.iter().map(|&x| thresholds.band(x)).collect();
    let mut counts = [0; 3];
    for b in &bands {
        counts[b.index()] += 1;
    }
    Ok(Banding { method: "nearest-rank".into(), thresholds, bands, counts })
}

/// Boxplot statistics: min, nearest-rank quartiles, conventional median
/// (mean of the middle pair for even counts), max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumberSummary {
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub max: f64,
}

pub fn five_number_summary<T: Copy + PartialOrd + Into<f64>>(scores: &[T]) -> Result<FiveNumberSummary, EmptyScores> {
    let s: Vec<f64> = sorted(scores).into_iter().map(Into::into).collect();
    let n = s.len();
    if n == 0 {
        return Err(EmptyScores);
    }
    let median = if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 };
    Ok(FiveNumberSummary {
        min: s[0],
        p25: nearest_rank(&s, 25).ok_or(EmptyScores)?,
        median,
        p75: nearest_rank(&s, 75).ok_or(EmptyScores)?,
        max: s[n - 1],
    })
}

impl From<ComplexityScore> for f64 {
    fn from(score: ComplexityScore) -> f64 {
        f64::from(score.0)
    }
}

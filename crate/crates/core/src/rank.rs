//! Within-SDS percentile ranks, quartile classes and top-scientist flags.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RankError {
    #[error("percentile {0} is outside [0, 100]")]
    PercentileOutOfRange(i64),
}

pub const DEFAULT_TOP_PERCENTILE: u8 = 80;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileRanking {
    pub sds_code: String,
    pub observation_year: i32,
    /// Percentile in `0..=100`, 100 = most productive.
    pub entries: BTreeMap<String, u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuartileRanking {
    pub sds_code: String,
    pub observation_year: i32,
    /// Class in `1..=4`, 4 = top quartile.
    pub entries: BTreeMap<String, u8>,
}

/// Average (fractional) ranks, 1-based, where `rank 1` goes to the first
/// element under `order`. Ties share the mean of the positions they span.
/// Returned as twice the rank so the value stays integral.
pub(crate) fn doubled_average_ranks<T, F>(values: &[T], mut order: F) -> Vec<u64>
where
    F: FnMut(&T, &T) -> std::cmp::Ordering,
{
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| order(&values[a], &values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && order(&values[idx[start]], &values[idx[end]]).is_eq() {
            end += 1;
        }
        // positions start+1 ..= end; mean = (start + 1 + end) / 2
        let doubled = (start + 1 + end) as u64;
        for &i in &idx[start..end] {
            ranks[i] = doubled;
        }
        start = end;
    }
    ranks
}

/// `round(num / den)` with halves rounded away from zero, for `num >= 0`.
fn round_half_up(num: u64, den: u64) -> u64 {
    (2 * num + den) / (2 * den)
}

/// Ranks one SDS by Scientific Strength.
///
/// With descending average rank `r` among `n` researchers the percentile is
/// `round(100 (n - r) / (n - 1))`; a lone researcher gets 100.
pub fn percentile_rank(sds_code: &str, observation_year: i32, scores: &[(String, f64)]) -> PercentileRanking {
    let n = scores.len() as u64;
    let entries = if n == 1 {
        std::iter::once((scores[0].0.clone(), 100u8)).collect()
    } else {
        let doubled = doubled_average_ranks(scores, |a, b| b.1.total_cmp(&a.1));
        scores
            .iter()
            .zip(doubled)
            .map(|((id, _), r2)| {
                // 100 (n - r) / (n - 1) = 100 (2n - 2r) / (2 (n - 1))
                let p = round_half_up(100 * (2 * n - r2), 2 * (n - 1));
                (id.clone(), p as u8)
            })
            .collect()
    };
    PercentileRanking {
        sds_code: sds_code.to_string(),
        observation_year,
        entries,
    }
}

/// 4 for percentile >= 75, 3 for >= 50, 2 for >= 25, otherwise 1.
pub fn quartile_class(percentile: i64) -> Result<u8, RankError> {
    match percentile {
        75..=100 => Ok(4),
        50..=74 => Ok(3),
        25..=49 => Ok(2),
        0..=24 => Ok(1),
        p => Err(RankError::PercentileOutOfRange(p)),
    }
}

impl PercentileRanking {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn quartiles(&self) -> QuartileRanking {
        QuartileRanking {
            sds_code: self.sds_code.clone(),
            observation_year: self.observation_year,
            entries: self
                .entries
                .iter()
                .map(|(id, &p)| {
                    (
                        id.clone(),
                        quartile_class(p.into()).expect("percentiles are within 0..=100"),
                    )
                })
                .collect(),
        }
    }

    pub fn top_flags(&self, threshold_percentile: u8) -> BTreeMap<String, bool> {
        top_scientist_flags(self, threshold_percentile)
    }
}

/// A researcher is "top" when strictly above `threshold_percentile`.
pub fn top_scientist_flags(ranking: &PercentileRanking, threshold_percentile: u8) -> BTreeMap<String, bool> {
    ranking
        .entries
        .iter()
        .map(|(id, &p)| (id.clone(), p > threshold_percentile))
        .collect()
}

/// One row of the ranking export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub researcher_id: String,
    pub sds_code: String,
    pub observation_year: i32,
    pub ss: f64,
    pub percentile: u8,
    pub quartile: u8,
    pub top_flag: bool,
}

/// Flattens a ranking and its scores into export rows, ordered by researcher id.
pub fn ranking_rows(ranking: &PercentileRanking, scores: &[(String, f64)], top_threshold: u8) -> Vec<RankingRow> {
    let ss: BTreeMap<&str, f64> = scores.iter().map(|(id, v)| (id.as_str(), *v)).collect();
    ranking
        .entries
        .iter()
        .map(|(id, &p)| RankingRow {
            researcher_id: id.clone(),
            sds_code: ranking.sds_code.clone(),
            observation_year: ranking.observation_year,
            ss: ss.get(id.as_str()).copied().unwrap_or(0.0),
            percentile: p,
            quartile: quartile_class(p.into()).expect("percentiles are within 0..=100"),
            top_flag: p > top_threshold,
        })
        .collect()
}

/// CSV with header `researcher_id,sds_code,observation_year,ss,percentile,quartile,top_flag`.
pub fn write_rankings_csv<W: Write>(rows: &[RankingRow], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "researcher_id",
        "sds_code",
        "observation_year",
        "ss",
        "percentile",
        "quartile",
        "top_flag",
    ])?;
    for r in rows {
        w.write_record([
            r.researcher_id.clone(),
            r.sds_code.clone(),
            r.observation_year.to_string(),
            format!("{:.6}", r.ss),
            r.percentile.to_string(),
            r.quartile.to_string(),
            u8::from(r.top_flag).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

//! Ranking instability of early citation windows against the benchmark window.
//!
//! Deltas are `benchmark percentile - early percentile`, so a positive shift
//! means the researcher ranks higher once citations have matured.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rank::{doubled_average_ranks, PercentileRanking};

#[derive(Debug, Error, PartialEq)]
pub enum StabilityError {
    #[error("researcher sets differ between rankings: `{0}` is missing from one of them")]
    ResearcherMismatch(String),
    #[error("rankings have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no shifts to summarize")]
    Empty,
    #[error("invalid histogram bins: {0}")]
    Bins(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftRecord {
    pub researcher_id: String,
    pub sds_code: String,
    pub early_year: i32,
    pub delta: i32,
}

/// One record per researcher, ordered by researcher id.
pub fn compute_shifts(
    early: &PercentileRanking,
    benchmark: &PercentileRanking,
) -> Result<Vec<ShiftRecord>, StabilityError> {
    check_same_keys(&early.entries, &benchmark.entries)?;
    Ok(early
        .entries
        .iter()
        .map(|(id, &p_early)| ShiftRecord {
            researcher_id: id.clone(),
            sds_code: early.sds_code.clone(),
            early_year: early.observation_year,
            delta: i32::from(benchmark.entries[id]) - i32::from(p_early),
        })
        .collect())
}

fn check_same_keys<V>(a: &BTreeMap<String, V>, b: &BTreeMap<String, V>) -> Result<(), StabilityError> {
    if let Some(k) = a.keys().find(|k| !b.contains_key(*k)) {
        return Err(StabilityError::ResearcherMismatch(k.clone()));
    }
    if let Some(k) = b.keys().find(|k| !a.contains_key(*k)) {
        return Err(StabilityError::ResearcherMismatch(k.clone()));
    }
    Ok(())
}

/// Descriptive statistics of one early-vs-benchmark comparison. The `_pos`
/// and `_neg` fields are `None` when no researcher moved in that direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftStats {
    pub sds_code: String,
    pub early_year: i32,
    pub benchmark_year: i32,
    pub n: usize,
    pub pct_changed_total: f64,
    pub pct_changed_pos: f64,
    pub pct_changed_neg: f64,
    pub mean_abs: f64,
    pub mean_pos: Option<f64>,
    pub mean_neg: Option<f64>,
    pub median_abs: f64,
    pub median_pos: Option<f64>,
    pub median_neg: Option<f64>,
    /// The delta of largest magnitude, sign kept; negative wins a tie.
    pub max_abs_signed: i32,
    pub max_pos: Option<i32>,
    pub max_neg: Option<i32>,
    /// Sample standard deviation (n - 1) of |delta|.
    pub stddev_abs: f64,
    /// `None` when either ranking has no spread.
    pub spearman: Option<f64>,
}

fn mean(v: &[i32]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().map(|&x| f64::from(x)).sum::<f64>() / v.len() as f64)
}

fn median(v: &[i32]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_unstable();
    let n = s.len();
    Some(if n % 2 == 1 {
        f64::from(s[n / 2])
    } else {
        (f64::from(s[n / 2 - 1]) + f64::from(s[n / 2])) / 2.0
    })
}

fn sample_stddev(v: &[i32]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v).expect("non-empty");
    let ss: f64 = v.iter().map(|&x| (f64::from(x) - m).powi(2)).sum();
    (ss / (v.len() - 1) as f64).sqrt()
}

pub fn shift_stats(
    shifts: &[ShiftRecord],
    early: &PercentileRanking,
    benchmark: &PercentileRanking,
) -> Result<ShiftStats, StabilityError> {
    if shifts.is_empty() {
        return Err(StabilityError::Empty);
    }
    let n = shifts.len();
    let deltas: Vec<i32> = shifts.iter().map(|s| s.delta).collect();
    let abs: Vec<i32> = deltas.iter().map(|d| d.abs()).collect();
    let pos: Vec<i32> = deltas.iter().copied().filter(|&d| d > 0).collect();
    let neg: Vec<i32> = deltas.iter().copied().filter(|&d| d < 0).collect();
    let max_pos = pos.iter().copied().max();
    let max_neg = neg.iter().copied().min();
    let max_abs_signed = match (max_pos, max_neg) {
        (Some(p), Some(q)) if p > -q => p,
        (_, Some(q)) => q,
        (Some(p), None) => p,
        (None, None) => 0,
    };
    Ok(ShiftStats {
        sds_code: early.sds_code.clone(),
        early_year: early.observation_year,
        benchmark_year: benchmark.observation_year,
        n,
        pct_changed_total: (pos.len() + neg.len()) as f64 / n as f64,
        pct_changed_pos: pos.len() as f64 / n as f64,
        pct_changed_neg: neg.len() as f64 / n as f64,
        mean_abs: mean(&abs).expect("non-empty"),
        mean_pos: mean(&pos),
        mean_neg: mean(&neg),
        median_abs: median(&abs).expect("non-empty"),
        median_pos: median(&pos),
        median_neg: median(&neg),
        max_abs_signed,
        max_pos,
        max_neg,
        stddev_abs: sample_stddev(&abs),
        spearman: spearman_between(early, benchmark)?,
    })
}

/// Rank correlation of two paired samples: Pearson correlation of their
/// average ranks. `None` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>, StabilityError> {
    if x.len() != y.len() {
        return Err(StabilityError::LengthMismatch(x.len(), y.len()));
    }
    let rx = doubled_average_ranks(x, |a, b| a.total_cmp(b));
    let ry = doubled_average_ranks(y, |a, b| a.total_cmp(b));
    // Doubled ranks are integers, so the centered sums are exact in i128.
    let n = x.len() as i128;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0i128, 0i128, 0i128, 0i128, 0i128);
    for (&a, &b) in rx.iter().zip(&ry) {
        let (a, b) = (a as i128, b as i128);
        sx += a;
        sy += b;
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    let cxx = n * sxx - sx * sx;
    let cyy = n * syy - sy * sy;
    let cxy = n * sxy - sx * sy;
    if cxx == 0 || cyy == 0 {
        return Ok(None);
    }
    let denom = if cxx == cyy {
        cxx as f64
    } else {
        ((cxx as f64) * (cyy as f64)).sqrt()
    };
    Ok(Some((cxy as f64 / denom).clamp(-1.0, 1.0)))
}

/// Spearman correlation between two rankings of the same researchers.
pub fn spearman_between(a: &PercentileRanking, b: &PercentileRanking) -> Result<Option<f64>, StabilityError> {
    check_same_keys(&a.entries, &b.entries)?;
    let x: Vec<f64> = a.entries.values().map(|&p| f64::from(p)).collect();
    let y: Vec<f64> = a.entries.keys().map(|k| f64::from(b.entries[k])).collect();
    spearman(&x, &y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionCounts {
    pub uda_code: String,
    pub early_year: i32,
    pub population: usize,
    pub n_changed_any: usize,
    pub n_outliers: usize,
    pub share_changed_any: f64,
    pub share_outliers: f64,
}

/// Counts quartile-class changes per group. `group_of` maps researcher id to
/// its group (normally the UDA); researchers without a group are skipped.
pub fn quartile_transitions(
    early_year: i32,
    early: &BTreeMap<String, u8>,
    benchmark: &BTreeMap<String, u8>,
    group_of: &BTreeMap<String, String>,
) -> Result<Vec<TransitionCounts>, StabilityError> {
    check_same_keys(early, benchmark)?;
    let mut acc: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for (id, &q_early) in early {
        let Some(group) = group_of.get(id) else { continue };
        let change = (i32::from(benchmark[id]) - i32::from(q_early)).abs();
        let e = acc.entry(group).or_default();
        e.0 += 1;
        e.1 += usize::from(change >= 1);
        e.2 += usize::from(change >= 2);
    }
    Ok(acc
        .into_iter()
        .map(|(group, (population, changed, outliers))| TransitionCounts {
            uda_code: group.to_string(),
            early_year,
            population,
            n_changed_any: changed,
            n_outliers: outliers,
            share_changed_any: changed as f64 / population as f64,
            share_outliers: outliers as f64 / population as f64,
        })
        .collect())
}

/// Inclusive integer range of deltas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub low: i32,
    pub high: i32,
}

/// Sorted, non-overlapping delta bins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBins(Vec<HistogramBin>);

impl HistogramBins {
    pub fn new(bins: Vec<HistogramBin>) -> Result<Self, StabilityError> {
        if bins.is_empty() {
            return Err(StabilityError::Bins("no bins".into()));
        }
        for b in &bins {
            if b.low > b.high {
                return Err(StabilityError::Bins(format!("{}:{} is empty", b.low, b.high)));
            }
        }
        for w in bins.windows(2) {
            if w[0].high >= w[1].low {
                return Err(StabilityError::Bins(format!(
                    "{}:{} overlaps or precedes {}:{}",
                    w[1].low, w[1].high, w[0].low, w[0].high
                )));
            }
        }
        Ok(HistogramBins(bins))
    }

    pub fn bins(&self) -> &[HistogramBin] {
        &self.0
    }

    /// Counts per bin; deltas outside every bin are not counted.
    pub fn count(&self, shifts: &[ShiftRecord]) -> Vec<usize> {
        let mut counts = vec![0; self.0.len()];
        for s in shifts {
            if let Some(i) = self.0.iter().position(|b| (b.low..=b.high).contains(&s.delta)) {
                counts[i] += 1;
            }
        }
        counts
    }
}

impl Default for HistogramBins {
    /// <= -40, (-40, -20], (-20, 0), 0, (0, 20], (20, 40], > 40
    fn default() -> Self {
        let edges = [(-100, -40), (-39, -20), (-19, -1), (0, 0), (1, 20), (21, 40), (41, 100)];
        HistogramBins(edges.iter().map(|&(low, high)| HistogramBin { low, high }).collect())
    }
}

impl FromStr for HistogramBins {
    type Err = StabilityError;

    /// `low:high,low:high,...`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bins = s
            .split(',')
            .map(|item| {
                let (lo, hi) = item
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| StabilityError::Bins(format!("`{item}` is not low:high")))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<i32>()
                        .map_err(|_| StabilityError::Bins(format!("`{v}` is not an integer")))
                };
                Ok(HistogramBin {
                    low: parse(lo)?,
                    high: parse(hi)?,
                })
            })
            .collect::<Result<Vec<_>, StabilityError>>()?;
        HistogramBins::new(bins)
    }
}

impl fmt::Display for HistogramBins {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|b| format!("{}:{}", b.low, b.high)).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub sds_code: String,
    pub early_year: i32,
    pub spearman: Option<f64>,
    pub mean_abs_shift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CumulativeMetric {
    /// Share of SDSs whose Spearman exceeds the threshold.
    SpearmanGt,
    /// Share of SDSs whose mean |shift| is at most the threshold.
    MeanAbsShiftLe,
}

impl CumulativeMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            CumulativeMetric::SpearmanGt => "spearman_gt",
            CumulativeMetric::MeanAbsShiftLe => "mean_abs_shift_le",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativePoint {
    pub metric: CumulativeMetric,
    pub early_year: i32,
    pub threshold: f64,
    pub share_of_sds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Ordered by SDS code, then early year.
    pub points: Vec<ConvergencePoint>,
    pub cumulative: Vec<CumulativePoint>,
}

impl ConvergenceReport {
    pub fn spearman_series(&self, sds_code: &str) -> Vec<(i32, Option<f64>)> {
        self.points
            .iter()
            .filter(|p| p.sds_code == sds_code)
            .map(|p| (p.early_year, p.spearman))
            .collect()
    }

    pub fn share(&self, metric: CumulativeMetric, early_year: i32, threshold: f64) -> Option<f64> {
        self.cumulative
            .iter()
            .find(|c| c.metric == metric && c.early_year == early_year && c.threshold == threshold)
            .map(|c| c.share_of_sds)
    }
}

pub fn spearman_thresholds() -> Vec<f64> {
    (0..=20).map(|i| f64::from(i) / 20.0).collect()
}

pub fn mean_shift_thresholds() -> Vec<f64> {
    (0..=50).map(f64::from).collect()
}

/// Per-SDS Spearman and mean |shift| for every non-benchmark year, plus their
/// distributions across SDSs. SDSs lacking the benchmark ranking are skipped;
/// SDSs with undefined Spearman are left out of the Spearman shares.
pub fn convergence_series(
    rankings: &BTreeMap<String, BTreeMap<i32, PercentileRanking>>,
    benchmark_year: i32,
) -> Result<ConvergenceReport, StabilityError> {
    let mut points = Vec::new();
    for (sds, by_year) in rankings {
        let Some(bench) = by_year.get(&benchmark_year) else {
            continue;
        };
        for (&year, ranking) in by_year {
            if year == benchmark_year {
                continue;
            }
            let shifts = compute_shifts(ranking, bench)?;
            let mean_abs_shift = if shifts.is_empty() {
                0.0
            } else {
                shifts.iter().map(|s| f64::from(s.delta.abs())).sum::<f64>() / shifts.len() as f64
            };
            points.push(ConvergencePoint {
                sds_code: sds.clone(),
                early_year: year,
                spearman: spearman_between(ranking, bench)?,
                mean_abs_shift,
            });
        }
    }

    let mut years: Vec<i32> = points.iter().map(|p| p.early_year).collect();
    years.sort_unstable();
    years.dedup();
    let mut cumulative = Vec::new();
    for &year in &years {
        let rhos: Vec<f64> = points
            .iter()
            .filter(|p| p.early_year == year)
            .filter_map(|p| p.spearman)
            .collect();
        for t in spearman_thresholds() {
            if rhos.is_empty() {
                break;
            }
            cumulative.push(CumulativePoint {
                metric: CumulativeMetric::SpearmanGt,
                early_year: year,
                threshold: t,
                share_of_sds: rhos.iter().filter(|&&r| r > t).count() as f64 / rhos.len() as f64,
            });
        }
        let shifts: Vec<f64> = points
            .iter()
            .filter(|p| p.early_year == year)
            .map(|p| p.mean_abs_shift)
            .collect();
        for t in mean_shift_thresholds() {
            cumulative.push(CumulativePoint {
                metric: CumulativeMetric::MeanAbsShiftLe,
                early_year: year,
                threshold: t,
                share_of_sds: shifts.iter().filter(|&&m| m <= t).count() as f64 / shifts.len() as f64,
            });
        }
    }
    Ok(ConvergenceReport { points, cumulative })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Stats CSV with header
/// `sds_code,early_year,benchmark_year,n,pct_changed,pct_pos,pct_neg,mean_abs,mean_pos,mean_neg,median_abs,median_pos,median_neg,max_signed,stddev_abs,spearman`.
pub fn write_stats_csv<W: Write>(stats: &[ShiftStats], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "sds_code",
        "early_year",
        "benchmark_year",
        "n",
        "pct_changed",
        "pct_pos",
        "pct_neg",
        "mean_abs",
        "mean_pos",
        "mean_neg",
        "median_abs",
        "median_pos",
        "median_neg",
        "max_signed",
        "stddev_abs",
        "spearman",
    ])?;
    for s in stats {
        w.write_record([
            s.sds_code.clone(),
            s.early_year.to_string(),
            s.benchmark_year.to_string(),
            s.n.to_string(),
            format!("{:.6}", s.pct_changed_total),
            format!("{:.6}", s.pct_changed_pos),
            format!("{:.6}", s.pct_changed_neg),
            format!("{:.6}", s.mean_abs),
            fmt_opt(s.mean_pos),
            fmt_opt(s.mean_neg),
            format!("{:.6}", s.median_abs),
            fmt_opt(s.median_pos),
            fmt_opt(s.median_neg),
            s.max_abs_signed.to_string(),
            format!("{:.6}", s.stddev_abs),
            fmt_opt(s.spearman),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Transitions CSV with header `uda_code,early_year,n_changed_any,share_changed_any,n_outliers,share_outliers`.
pub fn write_transitions_csv<W: Write>(rows: &[TransitionCounts], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "uda_code",
        "early_year",
        "n_changed_any",
        "share_changed_any",
        "n_outliers",
        "share_outliers",
    ])?;
    for t in rows {
        w.write_record([
            t.uda_code.clone(),
            t.early_year.to_string(),
            t.n_changed_any.to_string(),
            format!("{:.6}", t.share_changed_any),
            t.n_outliers.to_string(),
            format!("{:.6}", t.share_outliers),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub sds_code: String,
    pub early_year: i32,
    pub bin: HistogramBin,
    pub count: usize,
}

/// Histogram CSV with header `sds_code,early_year,bin_low,bin_high,count`; bin bounds inclusive.
pub fn write_histogram_csv<W: Write>(rows: &[HistogramRow], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sds_code", "early_year", "bin_low", "bin_high", "count"])?;
    for r in rows {
        w.write_record([
            r.sds_code.clone(),
            r.early_year.to_string(),
            r.bin.low.to_string(),
            r.bin.high.to_string(),
            r.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Cumulative CSV with header `metric,early_year,threshold,share_of_sds`.
pub fn write_cumulative_csv<W: Write>(rows: &[CumulativePoint], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["metric", "early_year", "threshold", "share_of_sds"])?;
    for c in rows {
        w.write_record([
            c.metric.as_str().to_string(),
            c.early_year.to_string(),
            format!("{:.6}", c.threshold),
            format!("{:.6}", c.share_of_sds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ranking(year: i32, percentiles: &[u8]) -> PercentileRanking {
        PercentileRanking {
            sds_code: "S".into(),
            observation_year: year,
            entries: percentiles
                .iter()
                .enumerate()
                .map(|(i, &p)| (format!("r{i:03}"), p))
                .collect(),
        }
    }

    fn deltas_ranking(deltas: &[i32]) -> (PercentileRanking, PercentileRanking) {
        let early: Vec<u8> = deltas.iter().map(|_| 50).collect();
        let bench: Vec<u8> = deltas.iter().map(|d| (50 + d) as u8).collect();
        (ranking(2004, &early), ranking(2008, &bench))
    }

    #[test]
    fn shift_examples() {
        let r = ranking(2008, &[0, 30, 100]);
        assert!(compute_shifts(&r, &r).unwrap().iter().all(|s| s.delta == 0));
        let s = compute_shifts(&ranking(2004, &[30, 100]), &ranking(2008, &[70, 0])).unwrap();
        assert_eq!(s.iter().map(|s| s.delta).collect::<Vec<_>>(), vec![40, -100]);
    }

    #[test]
    fn mismatched_researchers_rejected() {
        let a = ranking(2004, &[10, 20]);
        let b = ranking(2008, &[10, 20, 30]);
        assert!(matches!(
            compute_shifts(&a, &b),
            Err(StabilityError::ResearcherMismatch(_))
        ));
    }

    #[test]
    fn stats_on_five_deltas() {
        let (e, b) = deltas_ranking(&[0, 7, -24, 9, 0]);
        let shifts = compute_shifts(&e, &b).unwrap();
        let s = shift_stats(&shifts, &e, &b).unwrap();
        assert!((s.pct_changed_total - 0.6).abs() < 1e-15);
        assert!((s.pct_changed_pos - 0.4).abs() < 1e-15);
        assert!((s.pct_changed_neg - 0.2).abs() < 1e-15);
        assert_eq!(s.mean_pos, Some(8.0));
        assert_eq!(s.mean_neg, Some(-24.0));
        assert_eq!(s.mean_abs, 8.0);
        assert_eq!(s.max_abs_signed, -24);
        assert_eq!((s.max_pos, s.max_neg), (Some(9), Some(-24)));
        assert_eq!(s.median_abs, 7.0);
        assert_eq!(s.median_pos, Some(8.0));
        assert_eq!(s.median_neg, Some(-24.0));
        // |d| = {0,7,24,9,0}, mean 8: (64+1+256+1+64)/4
        assert!((s.stddev_abs - (386.0f64 / 4.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn identical_rankings() {
        let r = ranking(2008, &[0, 25, 50, 50, 100]);
        let s = shift_stats(&compute_shifts(&r, &r).unwrap(), &r, &r).unwrap();
        assert_eq!(s.pct_changed_total, 0.0);
        assert_eq!(s.spearman, Some(1.0));
        assert_eq!(
            (s.mean_pos, s.mean_neg, s.median_pos, s.max_pos),
            (None, None, None, None)
        );
        assert_eq!(s.max_abs_signed, 0);
    }

    #[test]
    fn reversal_is_minus_one() {
        let s = spearman_between(&ranking(2004, &[0, 50, 100]), &ranking(2008, &[100, 50, 0])).unwrap();
        assert_eq!(s, Some(-1.0));
    }

    #[test]
    fn constant_ranking_has_no_spearman() {
        let s = spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s, None);
    }

    #[test]
    fn spearman_with_ties_matches_pearson_on_midranks() {
        // x ranks: 1.5 1.5 3 4 ; y ranks: 1 2 3 4 -> pearson by hand
        let r = spearman(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap().unwrap();
        let (xr, yr) = ([1.5, 1.5, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0]);
        let (mx, my) = (2.5, 2.5);
        let sxy: f64 = xr.iter().zip(&yr).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = xr.iter().map(|a| (a - mx) * (a - mx)).sum();
        let syy: f64 = yr.iter().map(|b| (b - my) * (b - my)).sum();
        assert!((r - sxy / (sxx * syy).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn transition_examples() {
        let groups: BTreeMap<String, String> = (0..4).map(|i| (format!("r{i:03}"), "U".to_string())).collect();
        let q = |v: &[u8]| -> BTreeMap<String, u8> {
            v.iter().enumerate().map(|(i, &c)| (format!("r{i:03}"), c)).collect()
        };
        let same = quartile_transitions(2004, &q(&[1, 2, 3, 4]), &q(&[1, 2, 3, 4]), &groups).unwrap();
        assert_eq!((same[0].n_changed_any, same[0].n_outliers), (0, 0));
        let t = quartile_transitions(2004, &q(&[4, 3, 2, 1]), &q(&[3, 3, 1, 1]), &groups).unwrap();
        assert_eq!((t[0].n_changed_any, t[0].n_outliers, t[0].population), (2, 0, 4));
        let t = quartile_transitions(2004, &q(&[1, 2, 3, 4]), &q(&[4, 2, 3, 4]), &groups).unwrap();
        assert_eq!((t[0].n_changed_any, t[0].n_outliers), (1, 1));
        assert_eq!(t[0].share_outliers, 0.25);
    }

    #[test]
    fn histogram_bins() {
        let bins = HistogramBins::default();
        assert_eq!(bins.to_string(), "-100:-40,-39:-20,-19:-1,0:0,1:20,21:40,41:100");
        assert_eq!(bins.to_string().parse::<HistogramBins>().unwrap(), bins);
        let (e, b) = deltas_ranking(&[0, 7, -24, 9, 0, -40, 41, -20]);
        let counts = bins.count(&compute_shifts(&e, &b).unwrap());
        assert_eq!(counts, vec![1, 2, 0, 2, 2, 0, 1]);
        assert!("5:1".parse::<HistogramBins>().is_err());
        assert!("0:5,5:9".parse::<HistogramBins>().is_err());
        assert!("a:b".parse::<HistogramBins>().is_err());
    }

    #[test]
    fn convergence_examples() {
        let mut one = BTreeMap::new();
        let bench = ranking(2008, &[0, 50, 100]);
        one.insert(
            "S".to_string(),
            [
                (
                    2004,
                    PercentileRanking {
                        observation_year: 2004,
                        ..bench.clone()
                    },
                ),
                (2008, bench.clone()),
            ]
            .into_iter()
            .collect(),
        );
        let rep = convergence_series(&one, 2008).unwrap();
        assert_eq!(rep.spearman_series("S"), vec![(2004, Some(1.0))]);
        assert_eq!(rep.share(CumulativeMetric::SpearmanGt, 2004, 0.95), Some(1.0));
        assert_eq!(rep.share(CumulativeMetric::MeanAbsShiftLe, 2004, 0.0), Some(1.0));
    }

    #[test]
    fn cumulative_share_counts_sds_above_threshold() {
        let mut rankings = BTreeMap::new();
        let bench = ranking(2008, &[0, 25, 50, 75, 100]);
        // swap of ranks 1/2 -> rho 0.9; full shuffle -> lower
        let mild = ranking(2004, &[25, 0, 50, 75, 100]);
        let strong = ranking(2004, &[50, 100, 0, 75, 25]);
        let rho_mild = spearman_between(&mild, &bench).unwrap().unwrap();
        let rho_strong = spearman_between(&strong, &bench).unwrap().unwrap();
        assert!(rho_mild > 0.8 && rho_strong < 0.8, "{rho_mild} {rho_strong}");
        for (code, early) in [("A", mild), ("B", strong)] {
            let mut by_year = BTreeMap::new();
            by_year.insert(
                2004,
                PercentileRanking {
                    sds_code: code.into(),
                    ..early
                },
            );
            by_year.insert(
                2008,
                PercentileRanking {
                    sds_code: code.into(),
                    ..bench.clone()
                },
            );
            rankings.insert(code.to_string(), by_year);
        }
        let rep = convergence_series(&rankings, 2008).unwrap();
        assert_eq!(rep.share(CumulativeMetric::SpearmanGt, 2004, 0.8), Some(0.5));
    }

    fn paired() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
        (1usize..60).prop_flat_map(|n| {
            (
                proptest::collection::vec(0u8..=100, n),
                proptest::collection::vec(0u8..=100, n),
            )
        })
    }

    proptest! {
        #[test]
        fn swap_antisymmetry((a, b) in paired()) {
            let (ea, eb) = (ranking(2004, &a), ranking(2008, &b));
            let fwd = compute_shifts(&ea, &eb).unwrap();
            let bwd = compute_shifts(&eb, &ea).unwrap();
            for (f, r) in fwd.iter().zip(&bwd) {
                prop_assert_eq!(f.delta, -r.delta);
            }
            let sf = shift_stats(&fwd, &ea, &eb).unwrap();
            let sb = shift_stats(&bwd, &eb, &ea).unwrap();
            prop_assert_eq!(sf.spearman, sb.spearman);
            prop_assert_eq!(sf.mean_abs, sb.mean_abs);
            prop_assert_eq!(sf.pct_changed_total, sb.pct_changed_total);
            let sum: i32 = fwd.iter().map(|s| s.delta).sum();
            let diff: i32 = b.iter().map(|&x| i32::from(x)).sum::<i32>() - a.iter().map(|&x| i32::from(x)).sum::<i32>();
            prop_assert_eq!(sum, diff);
        }

        #[test]
        fn stats_invariants((a, b) in paired()) {
            let (ea, eb) = (ranking(2004, &a), ranking(2008, &b));
            let s = shift_stats(&compute_shifts(&ea, &eb).unwrap(), &ea, &eb).unwrap();
            prop_assert!((s.pct_changed_total - s.pct_changed_pos - s.pct_changed_neg).abs() < 1e-12);
            prop_assert!(s.mean_pos.unwrap_or(0.0) >= 0.0 && s.mean_neg.unwrap_or(0.0) <= 0.0);
            let biggest = s.max_pos.unwrap_or(0).abs().max(s.max_neg.unwrap_or(0).abs());
            prop_assert_eq!(s.max_abs_signed.abs(), biggest);
            if let Some(r) = s.spearman {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn self_spearman_is_one(a in proptest::collection::vec(0u8..=100, 2..80)) {
            let r = ranking(2008, &a);
            let rho = spearman_between(&r, &r).unwrap();
            if a.iter().any(|&x| x != a[0]) {
                prop_assert_eq!(rho, Some(1.0));
            } else {
                prop_assert_eq!(rho, None);
            }
        }

        #[test]
        fn spearman_ignores_monotone_transforms(
            xy in (2usize..40).prop_flat_map(|n| (
                proptest::collection::vec(0.0f64..10.0, n),
                proptest::collection::vec(0.0f64..10.0, n),
            ))
        ) {
            let (x, y) = xy;
            let tx: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0).collect();
            let ty: Vec<f64> = y.iter().map(|v| (v / 2.0).exp()).collect();
            prop_assert_eq!(spearman(&x, &y).unwrap(), spearman(&tx, &ty).unwrap());
        }
    }
}

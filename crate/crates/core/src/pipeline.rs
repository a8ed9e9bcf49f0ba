//! End-to-end analysis: filter, normalize, score, rank every observation
//! year, then compare each early year against the benchmark.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    filter_eligible_sds, Corpus, CorpusConfig, EligibilityThresholds, FilterReport, LoadReport, UdaCount,
};
use crate::normalize::{compute_medians, BaselineTable, NormalizeError};
use crate::rank::{
    percentile_rank, ranking_rows, write_rankings_csv, PercentileRanking, RankingRow, DEFAULT_TOP_PERCENTILE,
};
use crate::score::{compute_ss, write_scores_csv, Counting, ScoreTable};
use crate::stability::{
    compute_shifts, convergence_series, quartile_transitions, shift_stats, write_cumulative_csv, write_histogram_csv,
    write_stats_csv, write_transitions_csv, ConvergenceReport, HistogramBins, HistogramRow, ShiftStats, StabilityError,
    TransitionCounts,
};
use crate::toppersist::{persistence_report, write_probit_csv, ProbitError, ProbitFit};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Probit(#[from] ProbitError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub corpus: CorpusConfig,
    pub thresholds: EligibilityThresholds,
    pub top_percentile: u8,
    pub counting: Counting,
    pub bins: HistogramBins,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            corpus: CorpusConfig::default(),
            thresholds: EligibilityThresholds::default(),
            top_percentile: DEFAULT_TOP_PERCENTILE,
            counting: Counting::Full,
            bins: HistogramBins::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbitFailure {
    pub uda_code: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusTotals {
    pub researchers: usize,
    pub publications: usize,
    pub sds: usize,
    pub universities: usize,
}

/// Deterministic run summary written as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: AnalysisConfig,
    pub inputs: Vec<String>,
    pub loaded: CorpusTotals,
    pub filter: FilterReport,
    pub analyzed: CorpusTotals,
    pub by_uda: Vec<UdaCount>,
    pub benchmark_year: i32,
    /// Early year used for the top-scientist persistence model.
    pub persistence_early_year: Option<i32>,
    pub probit_failures: Vec<ProbitFailure>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub filter_ms: f64,
    pub scoring_ms: f64,
    pub ranking_ms: f64,
    pub stability_ms: f64,
    pub persistence_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub corpus: Corpus,
    pub baselines: BaselineTable,
    /// One per observation year, ascending.
    pub scores: Vec<ScoreTable>,
    /// SDS code -> observation year -> ranking.
    pub rankings: BTreeMap<String, BTreeMap<i32, PercentileRanking>>,
    pub ranking_rows: Vec<RankingRow>,
    /// Ordered by SDS code, then early year.
    pub stats: Vec<ShiftStats>,
    pub histogram: Vec<HistogramRow>,
    /// Ordered by early year, then UDA code.
    pub transitions: Vec<TransitionCounts>,
    pub convergence: ConvergenceReport,
    pub probit: Vec<ProbitFit>,
    pub manifest: Manifest,
    pub timings: Timings,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn totals(corpus: &Corpus) -> CorpusTotals {
    let universities: std::collections::BTreeSet<&str> =
        corpus.researchers().iter().map(|r| r.university_id.as_str()).collect();
    CorpusTotals {
        researchers: corpus.researchers().len(),
        publications: corpus.publications().len(),
        sds: corpus.sds_members().len(),
        universities: universities.len(),
    }
}

/// Runs the whole analysis on an already loaded corpus.
pub fn analyze(corpus: &Corpus, config: &AnalysisConfig, inputs: Vec<String>) -> Result<Analysis, PipelineError> {
    let t0 = Instant::now();
    let mut timings = Timings::default();

    let (filtered, filter_report) = filter_eligible_sds(corpus, config.thresholds);
    timings.filter_ms = ms(t0.elapsed());

    let t = Instant::now();
    let years = filtered.observation_years().to_vec();
    let benchmark = filtered.benchmark_year();
    let per_year: Vec<(BaselineTable, ScoreTable)> = years
        .par_iter()
        .map(|&y| {
            let b = compute_medians(&filtered, y)?;
            let s = compute_ss(&filtered, &b, y, config.counting)?;
            Ok((b, s))
        })
        .collect::<Result<_, NormalizeError>>()?;
    let mut baselines = BaselineTable::default();
    let mut scores = Vec::with_capacity(per_year.len());
    for (b, s) in per_year {
        baselines.extend(b);
        scores.push(s);
    }
    timings.scoring_ms = ms(t.elapsed());

    let t = Instant::now();
    let members = filtered.sds_members();
    let researchers = filtered.researchers();
    let sds_list: Vec<(&str, &Vec<usize>)> = members.iter().map(|(k, v)| (*k, v)).collect();
    let ranked: Vec<(String, BTreeMap<i32, PercentileRanking>, Vec<RankingRow>)> = sds_list
        .par_iter()
        .map(|(sds, idx)| {
            let mut by_year = BTreeMap::new();
            let mut rows = Vec::new();
            for table in &scores {
                let sds_scores: Vec<(String, f64)> = idx
                    .iter()
                    .map(|&i| {
                        let id = &researchers[i].researcher_id;
                        (id.clone(), table.entries[id].value)
                    })
                    .collect();
                let ranking = percentile_rank(sds, table.observation_year, &sds_scores);
                rows.extend(ranking_rows(&ranking, &sds_scores, config.top_percentile));
                by_year.insert(table.observation_year, ranking);
            }
            (sds.to_string(), by_year, rows)
        })
        .collect();
    let mut rankings = BTreeMap::new();
    let mut all_rows = Vec::new();
    for (sds, by_year, rows) in ranked {
        rankings.insert(sds, by_year);
        all_rows.extend(rows);
    }
    timings.ranking_ms = ms(t.elapsed());

    let t = Instant::now();
    let early_years: Vec<i32> = years.iter().copied().filter(|&y| y != benchmark).collect();
    let mut stats = Vec::new();
    let mut histogram = Vec::new();
    for (sds, by_year) in &rankings {
        let bench = &by_year[&benchmark];
        for &y in &early_years {
            let early = &by_year[&y];
            let shifts = compute_shifts(early, bench)?;
            stats.push(shift_stats(&shifts, early, bench)?);
            for (bin, count) in config.bins.bins().iter().zip(config.bins.count(&shifts)) {
                histogram.push(HistogramRow {
                    sds_code: sds.clone(),
                    early_year: y,
                    bin: *bin,
                    count,
                });
            }
        }
    }
    let group_of: BTreeMap<String, String> = researchers
        .iter()
        .map(|r| (r.researcher_id.clone(), r.uda_code.clone()))
        .collect();
    let quartiles_for = |year: i32| -> BTreeMap<String, u8> {
        rankings
            .values()
            .flat_map(|by_year| by_year[&year].quartiles().entries)
            .collect()
    };
    let mut transitions = Vec::new();
    if !early_years.is_empty() {
        let bench_q = quartiles_for(benchmark);
        for &y in &early_years {
            transitions.extend(quartile_transitions(y, &quartiles_for(y), &bench_q, &group_of)?);
        }
    }
    let convergence = convergence_series(&rankings, benchmark)?;
    timings.stability_ms = ms(t.elapsed());

    let t = Instant::now();
    let sds_to_uda: BTreeMap<String, String> = filtered
        .sds_to_uda()
        .into_iter()
        .map(|(s, u)| (s.to_string(), u.to_string()))
        .collect();
    let persistence_early_year = early_years.first().copied();
    let mut probit = Vec::new();
    let mut probit_failures = Vec::new();
    if let Some(early_year) = persistence_early_year {
        let early: Vec<PercentileRanking> = rankings.values().map(|m| m[&early_year].clone()).collect();
        let bench: Vec<PercentileRanking> = rankings.values().map(|m| m[&benchmark].clone()).collect();
        for (uda, fit) in persistence_report(&early, &bench, &sds_to_uda, config.top_percentile)? {
            match fit {
                Ok(f) => probit.push(f),
                Err(e) => probit_failures.push(ProbitFailure {
                    uda_code: uda,
                    error: e.to_string(),
                }),
            }
        }
    }
    timings.persistence_ms = ms(t.elapsed());
    timings.total_ms = ms(t0.elapsed());

    let manifest = Manifest {
        tool: "citewin".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        inputs,
        loaded: totals(corpus),
        filter: filter_report,
        analyzed: totals(&filtered),
        by_uda: filtered.uda_counts(),
        benchmark_year: benchmark,
        persistence_early_year,
        probit_failures,
    };

    Ok(Analysis {
        corpus: filtered,
        baselines,
        scores,
        rankings,
        ranking_rows: all_rows,
        stats,
        histogram,
        transitions,
        convergence,
        probit,
        manifest,
        timings,
    })
}

pub const REPORT_FILES: [&str; 10] = [
    "baselines.csv",
    "scores.csv",
    "rankings.csv",
    "stats.csv",
    "transitions.csv",
    "histogram.csv",
    "cumulative.csv",
    "probit.csv",
    "manifest.json",
    "load_report.json",
];

impl Analysis {
    /// Writes every report into `dir`. All files except `timings.json` are
    /// byte-identical across runs on the same input.
    pub fn write_reports(&self, dir: &Path, load_report: &LoadReport) -> Result<(), PipelineError> {
        std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let csv_file = |name: &str, f: &dyn Fn(BufWriter<File>) -> csv::Result<()>| -> Result<(), PipelineError> {
            let path = dir.join(name);
            let file = File::create(&path).map_err(|source| PipelineError::Io {
                path: path.display().to_string(),
                source,
            })?;
            f(BufWriter::new(file)).map_err(|source| PipelineError::Csv {
                path: path.display().to_string(),
                source,
            })
        };
        csv_file("baselines.csv", &|w| self.baselines.write_csv(w))?;
        csv_file("scores.csv", &|w| write_scores_csv(&self.scores, w))?;
        csv_file("rankings.csv", &|w| write_rankings_csv(&self.ranking_rows, w))?;
        csv_file("stats.csv", &|w| write_stats_csv(&self.stats, w))?;
        csv_file("transitions.csv", &|w| write_transitions_csv(&self.transitions, w))?;
        csv_file("histogram.csv", &|w| write_histogram_csv(&self.histogram, w))?;
        csv_file("cumulative.csv", &|w| {
            write_cumulative_csv(&self.convergence.cumulative, w)
        })?;
        csv_file("probit.csv", &|w| write_probit_csv(&self.probit, w))?;

        let json = |name: &str, value: String| -> Result<(), PipelineError> {
            let path = dir.join(name);
            std::fs::write(&path, value + "\n").map_err(|source| PipelineError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        json("manifest.json", to_json(&self.manifest))?;
        json("load_report.json", to_json(load_report))?;
        json("timings.json", to_json(&self.timings))?;
        Ok(())
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SdsSpec, SynthConfig};

    #[test]
    fn benchmark_only_has_empty_stability_sections() {
        let cfg = SynthConfig {
            observation_years: vec![2008],
            sds_specs: vec![SdsSpec::new("A/01", "A", 15)],
            ..SynthConfig::default()
        };
        let (corpus, _) = generate(&cfg).unwrap().to_corpus().unwrap();
        let a = analyze(&corpus, &AnalysisConfig::default(), vec![]).unwrap();
        assert!(a.stats.is_empty() && a.transitions.is_empty() && a.probit.is_empty());
        assert!(a.convergence.points.is_empty());
        assert_eq!(a.manifest.persistence_early_year, None);
        assert_eq!(a.ranking_rows.len(), 15);
    }

    #[test]
    fn analysis_covers_every_sds_and_year() {
        let cfg = SynthConfig::default();
        let (corpus, _) = generate(&cfg).unwrap().to_corpus().unwrap();
        let a = analyze(&corpus, &AnalysisConfig::default(), vec![]).unwrap();
        assert_eq!(a.rankings.len(), 2);
        assert_eq!(a.stats.len(), 2 * 4);
        assert_eq!(a.transitions.len(), 2 * 4);
        assert_eq!(a.ranking_rows.len(), (120 + 200) * 5);
        assert_eq!(a.manifest.analyzed.researchers, 320);
        assert!(a.stats.iter().all(|s| s.spearman.is_some()));
    }
}

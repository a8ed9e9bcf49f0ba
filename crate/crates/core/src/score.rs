//! Scientific Strength: the per-researcher sum of standardized publication scores.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::normalize::{standardize_publication, BaselineTable, NormalizeError};

/// How a co-authored publication's score is credited to its authors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Counting {
    /// Every listed author receives the full score.
    #[default]
    Full,
    /// Each listed author receives `score / n_authors`.
    EqualSplit,
}

impl fmt::Display for Counting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Counting::Full => "full",
            Counting::EqualSplit => "equal-split",
        })
    }
}

impl FromStr for Counting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Counting::Full),
            "equal-split" => Ok(Counting::EqualSplit),
            other => Err(format!(
                "unknown counting rule `{other}` (expected full or equal-split)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScientificStrength {
    pub researcher_id: String,
    pub sds_code: String,
    pub observation_year: i32,
    pub value: f64,
    /// Publications in the window, cited or not.
    pub n_pubs: usize,
}

/// Scientific Strength of every researcher of a corpus for one observation year.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub observation_year: i32,
    /// Ordered by researcher id.
    pub entries: BTreeMap<String, ScientificStrength>,
}

impl ScoreTable {
    pub fn get(&self, researcher_id: &str) -> Option<&ScientificStrength> {
        self.entries.get(researcher_id)
    }

    /// `(researcher_id, ss)` pairs of one SDS, ordered by researcher id.
    pub fn sds_scores(&self, sds_code: &str) -> Vec<(String, f64)> {
        self.entries
            .values()
            .filter(|s| s.sds_code == sds_code)
            .map(|s| (s.researcher_id.clone(), s.value))
            .collect()
    }
}

/// Standardized score of every publication at `observation_year`, indexed like
/// `corpus.publications()`.
pub fn publication_scores(
    corpus: &Corpus,
    baselines: &BaselineTable,
    observation_year: i32,
) -> Result<Vec<f64>, NormalizeError> {
    let y = corpus
        .year_index(observation_year)
        .ok_or(NormalizeError::UnknownObservationYear(observation_year))?;
    corpus
        .publications()
        .iter()
        .enumerate()
        .map(|(p, publication)| {
            standardize_publication(publication, corpus.citations_at(p, y), observation_year, baselines)
        })
        .collect()
}

/// Computes SS for every researcher.
///
/// Each researcher's sum is accumulated in ascending `pub_id` order so the
/// result does not depend on input order or scheduling.
pub fn compute_ss(
    corpus: &Corpus,
    baselines: &BaselineTable,
    observation_year: i32,
    counting: Counting,
) -> Result<ScoreTable, NormalizeError> {
    let scores = publication_scores(corpus, baselines, observation_year)?;
    Ok(aggregate(corpus, &scores, observation_year, counting))
}

/// Sums precomputed publication scores per researcher.
pub fn aggregate(corpus: &Corpus, pub_scores: &[f64], observation_year: i32, counting: Counting) -> ScoreTable {
    let publications = corpus.publications();
    let entries = corpus
        .researchers()
        .iter()
        .zip(corpus.publications_by_researcher())
        .map(|(r, pubs)| {
            let value = pubs
                .iter()
                .map(|&p| match counting {
                    Counting::Full => pub_scores[p],
                    Counting::EqualSplit => pub_scores[p] / publications[p].author_ids.len() as f64,
                })
                .fold(0.0, |acc, s| acc + s);
            (
                r.researcher_id.clone(),
                ScientificStrength {
                    researcher_id: r.researcher_id.clone(),
                    sds_code: r.sds_code.clone(),
                    observation_year,
                    value,
                    n_pubs: pubs.len(),
                },
            )
        })
        .collect();
    ScoreTable {
        observation_year,
        entries,
    }
}

/// CSV with header `researcher_id,sds_code,observation_year,ss,n_pubs`; one
/// block per table in the given order.
pub fn write_scores_csv<W: Write>(tables: &[ScoreTable], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["researcher_id", "sds_code", "observation_year", "ss", "n_pubs"])?;
    for t in tables {
        for s in t.entries.values() {
            w.write_record([
                s.researcher_id.clone(),
                s.sds_code.clone(),
                s.observation_year.to_string(),
                format!("{:.6}", s.value),
                s.n_pubs.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

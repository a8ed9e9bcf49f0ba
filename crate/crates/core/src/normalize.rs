//! Median citation baselines and per-publication standardized scores.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Publication};

#[derive(Debug, Error, PartialEq)]
pub enum NormalizeError {
    #[error("observation year {0} is not configured for this corpus")]
    UnknownObservationYear(i32),
    #[error(
        "no baseline for ({pub_year}, `{category}`, {observation_year}) although pub `{pub_id}` is cited; \
         baselines were built from a different corpus"
    )]
    MissingBaseline {
        pub_id: String,
        pub_year: i32,
        category: String,
        observation_year: i32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BaselineKey {
    pub pub_year: i32,
    pub subject_category: String,
    pub observation_year: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    /// Always >= 1: only cited publications enter the cell.
    pub median: f64,
    pub n_cited: usize,
}

/// Median of cited publications per (publication year, category, observation year).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaselineTable {
    cells: BTreeMap<BaselineKey, Baseline>,
}

impl BaselineTable {
    pub fn get(&self, pub_year: i32, category: &str, observation_year: i32) -> Option<Baseline> {
        // BTreeMap lookup needs an owned key; cells are few enough that this is fine.
        self.cells
            .get(&BaselineKey {
                pub_year,
                subject_category: category.to_string(),
                observation_year,
            })
            .copied()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BaselineKey, &Baseline)> {
        self.cells.iter()
    }

    /// Merges tables built for different observation years.
    pub fn extend(&mut self, other: BaselineTable) {
        self.cells.extend(other.cells);
    }

    /// CSV with header `pub_year,category,observation_year,n_cited,median`.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["pub_year", "category", "observation_year", "n_cited", "median"])?;
        for (k, b) in &self.cells {
            w.write_record([
                k.pub_year.to_string(),
                k.subject_category.clone(),
                k.observation_year.to_string(),
                b.n_cited.to_string(),
                format!("{:.6}", b.median),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Median of the strictly positive values; `None` when there are none.
/// Even-sized sets take the midpoint of the two central values.
pub fn median_of_cited(counts: &[u64]) -> Option<f64> {
    let mut cited: Vec<u64> = counts.iter().copied().filter(|&c| c > 0).collect();
    if cited.is_empty() {
        return None;
    }
    let n = cited.len();
    let mid = n / 2;
    let (_, &mut upper, _) = cited.select_nth_unstable(mid);
    if n % 2 == 1 {
        return Some(upper as f64);
    }
    let lower = *cited[..mid].iter().max().expect("mid >= 1");
    Some((lower as f64 + upper as f64) / 2.0)
}

/// Builds the baseline cells for one observation year.
///
/// A multi-category publication contributes its full count to each of its
/// categories' cells.
pub fn compute_medians(corpus: &Corpus, observation_year: i32) -> Result<BaselineTable, NormalizeError> {
    let y = corpus
        .year_index(observation_year)
        .ok_or(NormalizeError::UnknownObservationYear(observation_year))?;
    let mut samples: BTreeMap<(i32, &str), Vec<u64>> = BTreeMap::new();
    for (p, publication) in corpus.publications().iter().enumerate() {
        let c = corpus.citations_at(p, y);
        for cat in &publication.categories {
            samples
                .entry((publication.pub_year, cat.category.as_str()))
                .or_default()
                .push(c);
        }
    }
    let cells = samples
        .into_iter()
        .filter_map(|((pub_year, category), counts)| {
            let median = median_of_cited(&counts)?;
            let n_cited = counts.iter().filter(|&&c| c > 0).count();
            Some((
                BaselineKey {
                    pub_year,
                    subject_category: category.to_string(),
                    observation_year,
                },
                Baseline { median, n_cited },
            ))
        })
        .collect();
    Ok(BaselineTable { cells })
}

/// Weighted average over the publication's categories of `citations / median`.
/// Uncited publications score 0 without consulting the baselines.
pub fn standardize_publication(
    publication: &Publication,
    citations: u64,
    observation_year: i32,
    baselines: &BaselineTable,
) -> Result<f64, NormalizeError> {
    if citations == 0 {
        return Ok(0.0);
    }
    let c = citations as f64;
    let mut score = 0.0;
    for cat in &publication.categories {
        let baseline = baselines
            .get(publication.pub_year, &cat.category, observation_year)
            .ok_or_else(|| NormalizeError::MissingBaseline {
                pub_id: publication.pub_id.clone(),
                pub_year: publication.pub_year,
                category: cat.category.clone(),
                observation_year,
            })?;
        score += cat.weight * (c / baseline.median);
    }
    Ok(score)
}

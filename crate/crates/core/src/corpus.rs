//! Data model, CSV loading, and field-eligibility filtering.
//!
//! A [`Corpus`] is immutable once built. Researchers and publications are
//! kept sorted by id so every downstream fold visits them in a fixed order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RESEARCHERS_HEADER: [&str; 4] = ["researcher_id", "sds_code", "uda_code", "university_id"];
pub const PUBLICATIONS_HEADER: [&str; 4] = ["pub_id", "pub_year", "author_ids", "categories"];
pub const CITATIONS_HEADER: [&str; 3] = ["pub_id", "observation_year", "cumulative_citations"];

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: field `{field}`: {message}")]
    Schema {
        file: String,
        line: u64,
        field: String,
        message: String,
    },
    #[error("{file}:{line}: field `{field}`: {message}")]
    Reference {
        file: String,
        line: u64,
        field: String,
        message: String,
    },
    #[error(
        "{file}:{line}: field `cumulative_citations`: pub `{pub_id}` decreases from {previous} \
         in {previous_year} to {current} in {year}"
    )]
    Monotonicity {
        file: String,
        /// 0 when the offending value is a defaulted (missing) row.
        line: u64,
        pub_id: String,
        previous_year: i32,
        previous: u64,
        year: i32,
        current: u64,
    },
    #[error("invalid corpus configuration: {0}")]
    Config(String),
}

impl CorpusError {
    fn schema(file: &str, line: u64, field: &str, message: impl Into<String>) -> Self {
        CorpusError::Schema {
            file: file.to_string(),
            line,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn reference(file: &str, line: u64, field: &str, message: impl Into<String>) -> Self {
        CorpusError::Reference {
            file: file.to_string(),
            line,
            field: field.to_string(),
            message: message.into(),
        }
    }
}

/// Inclusive range of publication years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearWindow {
    pub start: i32,
    pub end: i32,
}

impl YearWindow {
    pub fn new(start: i32, end: i32) -> Self {
        YearWindow { start, end }
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.start..=self.end).contains(&year)
    }
}

impl fmt::Display for YearWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub evaluation_window: YearWindow,
    /// Strictly increasing; the last entry is the benchmark year.
    pub observation_years: Vec<i32>,
}

impl CorpusConfig {
    pub fn new(evaluation_window: YearWindow, observation_years: Vec<i32>) -> Self {
        CorpusConfig {
            evaluation_window,
            observation_years,
        }
    }

    pub fn benchmark_year(&self) -> Option<i32> {
        self.observation_years.last().copied()
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let w = self.evaluation_window;
        if w.start > w.end {
            return Err(CorpusError::Config(format!("evaluation window {w} is empty")));
        }
        let first = *self
            .observation_years
            .first()
            .ok_or_else(|| CorpusError::Config("no observation years".into()))?;
        if self.observation_years.windows(2).any(|p| p[0] >= p[1]) {
            return Err(CorpusError::Config(format!(
                "observation years {:?} are not strictly increasing",
                self.observation_years
            )));
        }
        if first < w.end {
            return Err(CorpusError::Config(format!(
                "observation year {first} precedes the end of the evaluation window {w}"
            )));
        }
        Ok(())
    }
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig::new(YearWindow::new(2001, 2003), (2004..=2008).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Researcher {
    pub researcher_id: String,
    pub sds_code: String,
    pub uda_code: String,
    pub university_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryWeight {
    pub category: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Publication {
    pub pub_id: String,
    pub pub_year: i32,
    pub author_ids: Vec<String>,
    pub categories: Vec<CategoryWeight>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationRecord {
    pub pub_id: String,
    pub observation_year: i32,
    pub cumulative_citations: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefaultedCitation {
    pub pub_id: String,
    pub observation_year: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SdsCount {
    pub sds_code: String,
    pub uda_code: String,
    pub researchers: usize,
    pub publishing_researchers: usize,
    pub publications: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UdaCount {
    pub uda_code: String,
    pub researchers: usize,
    pub publications: usize,
    pub sds: usize,
    pub universities: usize,
}

/// Emitted by [`load_corpus`]; serialized as JSON by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub researchers: usize,
    pub publications: usize,
    pub citation_rows: usize,
    /// Rows whose observation year is not one of the configured years.
    pub ignored_citation_rows: usize,
    pub defaulted_citations: Vec<DefaultedCitation>,
    pub by_sds: Vec<SdsCount>,
    pub by_uda: Vec<UdaCount>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    config: CorpusConfig,
    researchers: Vec<Researcher>,
    publications: Vec<Publication>,
    /// Row-major `[publication][observation year]`.
    citations: Vec<u64>,
    researcher_index: HashMap<String, usize>,
}

/// A record paired with where it came from, for error messages.
struct Located<T> {
    line: u64,
    value: T,
}

struct SourceNames<'a> {
    researchers: &'a str,
    publications: &'a str,
    citations: &'a str,
}

impl Corpus {
    /// Builds a corpus from in-memory records, applying the same validation as
    /// [`load_corpus`]. Errors cite the record's 1-based row as if written to a
    /// CSV file with a header.
    pub fn from_records(
        config: CorpusConfig,
        researchers: Vec<Researcher>,
        publications: Vec<Publication>,
        citations: Vec<CitationRecord>,
    ) -> Result<(Corpus, LoadReport), CorpusError> {
        fn locate<T>(v: Vec<T>) -> Vec<Located<T>> {
            v.into_iter()
                .enumerate()
                .map(|(i, value)| Located {
                    line: i as u64 + 2,
                    value,
                })
                .collect()
        }
        for p in &publications {
            validate_weights(&p.categories).map_err(|m| {
                CorpusError::schema("publications", 0, "categories", format!("pub `{}`: {m}", p.pub_id))
            })?;
        }
        assemble(
            config,
            locate(researchers),
            locate(publications),
            locate(citations),
            &SourceNames {
                researchers: "researchers",
                publications: "publications",
                citations: "citations",
            },
        )
    }

    pub fn config(&self) -> &CorpusConfig {
        &self.config
    }

    pub fn evaluation_window(&self) -> YearWindow {
        self.config.evaluation_window
    }

    pub fn observation_years(&self) -> &[i32] {
        &self.config.observation_years
    }

    pub fn benchmark_year(&self) -> i32 {
        *self.config.observation_years.last().expect("validated non-empty")
    }

    pub fn year_index(&self, observation_year: i32) -> Option<usize> {
        self.config
            .observation_years
            .iter()
            .position(|&y| y == observation_year)
    }

    /// Sorted by `researcher_id`.
    pub fn researchers(&self) -> &[Researcher] {
        &self.researchers
    }

    /// Sorted by `pub_id`.
    pub fn publications(&self) -> &[Publication] {
        &self.publications
    }

    pub fn researcher_position(&self, researcher_id: &str) -> Option<usize> {
        self.researcher_index.get(researcher_id).copied()
    }

    pub fn researcher(&self, researcher_id: &str) -> Option<&Researcher> {
        self.researcher_position(researcher_id).map(|i| &self.researchers[i])
    }

    /// Cumulative counts of publication `pub_pos`, one per observation year.
    pub fn citation_path(&self, pub_pos: usize) -> &[u64] {
        let k = self.config.observation_years.len();
        &self.citations[pub_pos * k..(pub_pos + 1) * k]
    }

    pub fn citations_at(&self, pub_pos: usize, year_pos: usize) -> u64 {
        self.citation_path(pub_pos)[year_pos]
    }

    /// Researcher positions grouped by SDS, in code order.
    pub fn sds_members(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut out: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.researchers.iter().enumerate() {
            out.entry(r.sds_code.as_str()).or_default().push(i);
        }
        out
    }

    pub fn sds_to_uda(&self) -> BTreeMap<&str, &str> {
        self.researchers
            .iter()
            .map(|r| (r.sds_code.as_str(), r.uda_code.as_str()))
            .collect()
    }

    /// Publication positions authored by each researcher, ascending by `pub_id`.
    pub fn publications_by_researcher(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.researchers.len()];
        for (p, publication) in self.publications.iter().enumerate() {
            for a in &publication.author_ids {
                out[self.researcher_index[a]].push(p);
            }
        }
        out
    }

    pub fn sds_counts(&self) -> Vec<SdsCount> {
        let by_researcher = self.publications_by_researcher();
        let mut pubs_per_sds: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
        for (r, pubs) in by_researcher.iter().enumerate() {
            pubs_per_sds
                .entry(self.researchers[r].sds_code.as_str())
                .or_default()
                .extend(pubs.iter().copied());
        }
        self.sds_members()
            .into_iter()
            .map(|(sds, members)| SdsCount {
                sds_code: sds.to_string(),
                uda_code: self.researchers[members[0]].uda_code.clone(),
                researchers: members.len(),
                publishing_researchers: members.iter().filter(|&&m| !by_researcher[m].is_empty()).count(),
                publications: pubs_per_sds.get(sds).map_or(0, BTreeSet::len),
            })
            .collect()
    }

    /// Counts per UDA in the shape of a staff/publications/fields/universities table.
    pub fn uda_counts(&self) -> Vec<UdaCount> {
        #[derive(Default)]
        struct Acc<'a> {
            researchers: usize,
            publications: BTreeSet<usize>,
            sds: BTreeSet<&'a str>,
            universities: BTreeSet<&'a str>,
        }
        let by_researcher = self.publications_by_researcher();
        let mut acc: BTreeMap<&str, Acc> = BTreeMap::new();
        for (i, r) in self.researchers.iter().enumerate() {
            let a = acc.entry(r.uda_code.as_str()).or_default();
            a.researchers += 1;
            a.publications.extend(by_researcher[i].iter().copied());
            a.sds.insert(&r.sds_code);
            a.universities.insert(&r.university_id);
        }
        acc.into_iter()
            .map(|(uda, a)| UdaCount {
                uda_code: uda.to_string(),
                researchers: a.researchers,
                publications: a.publications.len(),
                sds: a.sds.len(),
                universities: a.universities.len(),
            })
            .collect()
    }

    /// Every citation cell as an explicit record, ordered by pub then year.
    pub fn citation_records(&self) -> Vec<CitationRecord> {
        let years = &self.config.observation_years;
        let mut out = Vec::with_capacity(self.citations.len());
        for (p, publication) in self.publications.iter().enumerate() {
            for (y, &year) in years.iter().enumerate() {
                out.push(CitationRecord {
                    pub_id: publication.pub_id.clone(),
                    observation_year: year,
                    cumulative_citations: self.citations_at(p, y),
                });
            }
        }
        out
    }

    /// Writes the three corpus files in the loader's schema.
    pub fn write_csv<W1: Write, W2: Write, W3: Write>(
        &self,
        researchers: W1,
        publications: W2,
        citations: W3,
    ) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(researchers);
        w.write_record(RESEARCHERS_HEADER)?;
        for r in &self.researchers {
            w.write_record([&r.researcher_id, &r.sds_code, &r.uda_code, &r.university_id])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_writer(publications);
        w.write_record(PUBLICATIONS_HEADER)?;
        for p in &self.publications {
            let categories = p
                .categories
                .iter()
                .map(|c| format!("{}:{}", c.category, c.weight))
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                p.pub_id.as_str(),
                &p.pub_year.to_string(),
                &p.author_ids.join(";"),
                &categories,
            ])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_writer(citations);
        w.write_record(CITATIONS_HEADER)?;
        let years = &self.config.observation_years;
        for (p, publication) in self.publications.iter().enumerate() {
            for (y, year) in years.iter().enumerate() {
                w.write_record([
                    publication.pub_id.as_str(),
                    &year.to_string(),
                    &self.citations_at(p, y).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `researchers.csv`, `publications.csv` and `citations.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), CorpusError> {
        let create = |name: &str| {
            let path = dir.join(name);
            std::fs::File::create(&path)
                .map(std::io::BufWriter::new)
                .map_err(|source| CorpusError::Io { path, source })
        };
        let (r, p, c) = (
            create("researchers.csv")?,
            create("publications.csv")?,
            create("citations.csv")?,
        );
        self.write_csv(r, p, c).map_err(|e| CorpusError::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::other(e),
        })
    }
}

/// Loads and validates the three corpus CSV files.
pub fn load_corpus(
    researchers_path: &Path,
    publications_path: &Path,
    citations_path: &Path,
    config: &CorpusConfig,
) -> Result<(Corpus, LoadReport), CorpusError> {
    let open = |path: &Path| {
        std::fs::File::open(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
    };
    let names = (
        researchers_path.display().to_string(),
        publications_path.display().to_string(),
        citations_path.display().to_string(),
    );
    load_corpus_from_readers(
        open(researchers_path)?,
        open(publications_path)?,
        open(citations_path)?,
        config,
        (&names.0, &names.1, &names.2),
    )
}

/// Reader-based variant of [`load_corpus`]; `names` label the three sources
/// in error messages.
pub fn load_corpus_from_readers<R1: Read, R2: Read, R3: Read>(
    researchers: R1,
    publications: R2,
    citations: R3,
    config: &CorpusConfig,
    names: (&str, &str, &str),
) -> Result<(Corpus, LoadReport), CorpusError> {
    config.validate()?;
    let researchers = parse_researchers(researchers, names.0)?;
    let publications = parse_publications(publications, names.1)?;
    let citations = parse_citations(citations, names.2)?;
    assemble(
        config.clone(),
        researchers,
        publications,
        citations,
        &SourceNames {
            researchers: names.0,
            publications: names.1,
            citations: names.2,
        },
    )
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn check_header<R: Read>(reader: &mut csv::Reader<R>, expected: &[&str], file: &str) -> Result<(), CorpusError> {
    let header = reader
        .headers()
        .map_err(|e| CorpusError::schema(file, 1, "header", e.to_string()))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(CorpusError::schema(
            file,
            1,
            "header",
            format!(
                "expected `{}`, found `{}`",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

fn records<'r, R: Read>(
    reader: &'r mut csv::Reader<R>,
    file: &str,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord), CorpusError>> + 'r {
    let file = file.to_string();
    reader.records().map(move |r| {
        let record = r.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CorpusError::schema(&file, line, "record", e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        Ok((line, record))
    })
}

fn non_empty<'a>(
    record: &'a csv::StringRecord,
    idx: usize,
    field: &str,
    file: &str,
    line: u64,
) -> Result<&'a str, CorpusError> {
    match record.get(idx) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(CorpusError::schema(file, line, field, "missing value")),
    }
}

fn parse_researchers<R: Read>(reader: R, file: &str) -> Result<Vec<Located<Researcher>>, CorpusError> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &RESEARCHERS_HEADER, file)?;
    let mut out = Vec::new();
    for rec in records(&mut rdr, file) {
        let (line, rec) = rec?;
        let field = |i: usize| non_empty(&rec, i, RESEARCHERS_HEADER[i], file, line).map(str::to_string);
        out.push(Located {
            line,
            value: Researcher {
                researcher_id: field(0)?,
                sds_code: field(1)?,
                uda_code: field(2)?,
                university_id: field(3)?,
            },
        });
    }
    Ok(out)
}

/// Parses `cat[:weight];cat[:weight];...`. Weights are all given or all
/// omitted; omitted means an equal split.
pub fn parse_categories(raw: &str) -> Result<Vec<CategoryWeight>, String> {
    let items: Vec<&str> = raw.split(';').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err("no subject categories".into());
    }
    let mut parsed = Vec::with_capacity(items.len());
    for item in &items {
        match item.rsplit_once(':') {
            Some((cat, w)) => {
                let weight: f64 = w
                    .trim()
                    .parse()
                    .map_err(|_| format!("weight `{w}` of category `{cat}` is not a number"))?;
                parsed.push((cat.trim().to_string(), Some(weight)));
            }
            None => parsed.push((item.to_string(), None)),
        }
    }
    let weighted = parsed.iter().filter(|(_, w)| w.is_some()).count();
    if weighted != 0 && weighted != parsed.len() {
        return Err("weights must be given for all categories or for none".into());
    }
    let equal = 1.0 / parsed.len() as f64;
    let categories: Vec<CategoryWeight> = parsed
        .into_iter()
        .map(|(category, w)| CategoryWeight {
            category,
            weight: w.unwrap_or(equal),
        })
        .collect();
    validate_weights(&categories)?;
    Ok(categories)
}

fn validate_weights(categories: &[CategoryWeight]) -> Result<(), String> {
    if categories.is_empty() {
        return Err("no subject categories".into());
    }
    let mut seen = BTreeSet::new();
    for c in categories {
        if c.category.is_empty() {
            return Err("empty category name".into());
        }
        if !seen.insert(c.category.as_str()) {
            return Err(format!("category `{}` listed twice", c.category));
        }
        if !(c.weight > 0.0 && c.weight.is_finite()) {
            return Err(format!("weight of `{}` must be strictly positive", c.category));
        }
    }
    let sum: f64 = categories.iter().map(|c| c.weight).sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(format!("weights sum to {sum}, not 1"));
    }
    Ok(())
}

fn parse_publications<R: Read>(reader: R, file: &str) -> Result<Vec<Located<Publication>>, CorpusError> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &PUBLICATIONS_HEADER, file)?;
    let mut out = Vec::new();
    for rec in records(&mut rdr, file) {
        let (line, rec) = rec?;
        let pub_id = non_empty(&rec, 0, "pub_id", file, line)?.to_string();
        let year_raw = non_empty(&rec, 1, "pub_year", file, line)?;
        let pub_year: i32 = year_raw
            .parse()
            .map_err(|_| CorpusError::schema(file, line, "pub_year", format!("`{year_raw}` is not a year")))?;
        let author_ids: Vec<String> = non_empty(&rec, 2, "author_ids", file, line)?
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        if author_ids.is_empty() {
            return Err(CorpusError::schema(file, line, "author_ids", "no authors"));
        }
        let categories = parse_categories(non_empty(&rec, 3, "categories", file, line)?)
            .map_err(|m| CorpusError::schema(file, line, "categories", m))?;
        out.push(Located {
            line,
            value: Publication {
                pub_id,
                pub_year,
                author_ids,
                categories,
            },
        });
    }
    Ok(out)
}

fn parse_citations<R: Read>(reader: R, file: &str) -> Result<Vec<Located<CitationRecord>>, CorpusError> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &CITATIONS_HEADER, file)?;
    let mut out = Vec::new();
    for rec in records(&mut rdr, file) {
        let (line, rec) = rec?;
        let pub_id = non_empty(&rec, 0, "pub_id", file, line)?.to_string();
        let year_raw = non_empty(&rec, 1, "observation_year", file, line)?;
        let observation_year: i32 = year_raw
            .parse()
            .map_err(|_| CorpusError::schema(file, line, "observation_year", format!("`{year_raw}` is not a year")))?;
        let count_raw = non_empty(&rec, 2, "cumulative_citations", file, line)?;
        let cumulative_citations: u64 = count_raw.parse().map_err(|_| {
            CorpusError::schema(
                file,
                line,
                "cumulative_citations",
                format!("`{count_raw}` is not a non-negative integer"),
            )
        })?;
        out.push(Located {
            line,
            value: CitationRecord {
                pub_id,
                observation_year,
                cumulative_citations,
            },
        });
    }
    Ok(out)
}

fn assemble(
    config: CorpusConfig,
    researchers: Vec<Located<Researcher>>,
    publications: Vec<Located<Publication>>,
    citations: Vec<Located<CitationRecord>>,
    names: &SourceNames<'_>,
) -> Result<(Corpus, LoadReport), CorpusError> {
    config.validate()?;

    let mut sds_uda: HashMap<&str, (&str, u64)> = HashMap::new();
    let mut seen_researchers: HashMap<&str, u64> = HashMap::new();
    for Located { line, value: r } in &researchers {
        if let Some(first) = seen_researchers.insert(&r.researcher_id, *line) {
            return Err(CorpusError::schema(
                names.researchers,
                *line,
                "researcher_id",
                format!("`{}` duplicates line {first}", r.researcher_id),
            ));
        }
        let (uda, first) = *sds_uda.entry(&r.sds_code).or_insert((&r.uda_code, *line));
        if uda != r.uda_code {
            return Err(CorpusError::schema(
                names.researchers,
                *line,
                "uda_code",
                format!(
                    "SDS `{}` is mapped to `{}` here but to `{uda}` on line {first}",
                    r.sds_code, r.uda_code
                ),
            ));
        }
    }

    let window = config.evaluation_window;
    let mut seen_pubs: HashMap<&str, u64> = HashMap::new();
    for Located { line, value: p } in &publications {
        if let Some(first) = seen_pubs.insert(&p.pub_id, *line) {
            return Err(CorpusError::schema(
                names.publications,
                *line,
                "pub_id",
                format!("`{}` duplicates line {first}", p.pub_id),
            ));
        }
        if !window.contains(p.pub_year) {
            return Err(CorpusError::schema(
                names.publications,
                *line,
                "pub_year",
                format!("{} is outside the evaluation window {window}", p.pub_year),
            ));
        }
        let mut authors = BTreeSet::new();
        for a in &p.author_ids {
            if !seen_researchers.contains_key(a.as_str()) {
                return Err(CorpusError::reference(
                    names.publications,
                    *line,
                    "author_ids",
                    format!("unknown researcher `{a}` on pub `{}`", p.pub_id),
                ));
            }
            if !authors.insert(a.as_str()) {
                return Err(CorpusError::schema(
                    names.publications,
                    *line,
                    "author_ids",
                    format!("researcher `{a}` listed twice on pub `{}`", p.pub_id),
                ));
            }
        }
    }

    let mut researchers: Vec<Researcher> = researchers.into_iter().map(|l| l.value).collect();
    researchers.sort_by(|a, b| a.researcher_id.cmp(&b.researcher_id));
    let mut publications: Vec<Publication> = publications.into_iter().map(|l| l.value).collect();
    publications.sort_by(|a, b| a.pub_id.cmp(&b.pub_id));
    let pub_index: HashMap<&str, usize> = publications
        .iter()
        .enumerate()
        .map(|(i, p)| (p.pub_id.as_str(), i))
        .collect();

    let years = &config.observation_years;
    let k = years.len();
    let year_pos: HashMap<i32, usize> = years.iter().enumerate().map(|(i, &y)| (y, i)).collect();
    // (count, source line) per cell; None = missing row.
    let mut cells: Vec<Option<(u64, u64)>> = vec![None; publications.len() * k];
    let mut ignored = 0usize;
    let citation_rows = citations.len();
    for Located { line, value: c } in &citations {
        let Some(&p) = pub_index.get(c.pub_id.as_str()) else {
            return Err(CorpusError::reference(
                names.citations,
                *line,
                "pub_id",
                format!("unknown publication `{}`", c.pub_id),
            ));
        };
        if c.observation_year < publications[p].pub_year {
            return Err(CorpusError::schema(
                names.citations,
                *line,
                "observation_year",
                format!(
                    "{} precedes publication year {} of `{}`",
                    c.observation_year, publications[p].pub_year, c.pub_id
                ),
            ));
        }
        let Some(&y) = year_pos.get(&c.observation_year) else {
            ignored += 1;
            continue;
        };
        let cell = &mut cells[p * k + y];
        if let Some((_, first)) = cell {
            return Err(CorpusError::schema(
                names.citations,
                *line,
                "observation_year",
                format!(
                    "duplicate row for `{}` in {} (first on line {first})",
                    c.pub_id, c.observation_year
                ),
            ));
        }
        *cell = Some((c.cumulative_citations, *line));
    }

    let mut defaulted = Vec::new();
    let mut counts = Vec::with_capacity(cells.len());
    for (p, publication) in publications.iter().enumerate() {
        let mut previous: Option<(i32, u64)> = None;
        for (y, &year) in years.iter().enumerate() {
            let (count, line) = match cells[p * k + y] {
                Some(v) => v,
                None => {
                    defaulted.push(DefaultedCitation {
                        pub_id: publication.pub_id.clone(),
                        observation_year: year,
                    });
                    (0, 0)
                }
            };
            if let Some((previous_year, prev)) = previous {
                if count < prev {
                    return Err(CorpusError::Monotonicity {
                        file: names.citations.to_string(),
                        line,
                        pub_id: publication.pub_id.clone(),
                        previous_year,
                        previous: prev,
                        year,
                        current: count,
                    });
                }
            }
            previous = Some((year, count));
            counts.push(count);
        }
    }

    let researcher_index = researchers
        .iter()
        .enumerate()
        .map(|(i, r)| (r.researcher_id.clone(), i))
        .collect();
    let corpus = Corpus {
        config,
        researchers,
        publications,
        citations: counts,
        researcher_index,
    };
    let report = LoadReport {
        researchers: corpus.researchers.len(),
        publications: corpus.publications.len(),
        citation_rows,
        ignored_citation_rows: ignored,
        defaulted_citations: defaulted,
        by_sds: corpus.sds_counts(),
        by_uda: corpus.uda_counts(),
    };
    Ok((corpus, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EligibilityThresholds {
    /// Minimum share of members with at least one publication (inclusive).
    pub min_publishing_share: f64,
    /// Minimum number of members (inclusive).
    pub min_members: usize,
}

impl Default for EligibilityThresholds {
    fn default() -> Self {
        EligibilityThresholds {
            min_publishing_share: 0.5,
            min_members: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedSds {
    pub sds_code: String,
    pub uda_code: String,
    pub members: usize,
    pub publishing: usize,
    pub publishing_share: f64,
    pub too_few_members: bool,
    pub low_publishing_share: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub thresholds: EligibilityThresholds,
    pub retained_sds: usize,
    pub removed: Vec<RemovedSds>,
    pub empty: bool,
}

/// Keeps only the SDSs meeting both thresholds.
///
/// Researchers of removed SDSs are dropped, author lists are trimmed to the
/// remaining researchers, and publications left without authors are dropped
/// together with their citation paths.
pub fn filter_eligible_sds(corpus: &Corpus, thresholds: EligibilityThresholds) -> (Corpus, FilterReport) {
    let mut keep_sds = BTreeSet::new();
    let mut removed = Vec::new();
    for c in corpus.sds_counts() {
        // publishing / members >= share, without dividing
        let share_ok = c.publishing_researchers as f64 >= thresholds.min_publishing_share * c.researchers as f64;
        let size_ok = c.researchers >= thresholds.min_members;
        if share_ok && size_ok {
            keep_sds.insert(c.sds_code);
        } else {
            removed.push(RemovedSds {
                publishing_share: c.publishing_researchers as f64 / c.researchers as f64,
                sds_code: c.sds_code,
                uda_code: c.uda_code,
                members: c.researchers,
                publishing: c.publishing_researchers,
                too_few_members: !size_ok,
                low_publishing_share: !share_ok,
            });
        }
    }

    let researchers: Vec<Researcher> = corpus
        .researchers
        .iter()
        .filter(|r| keep_sds.contains(&r.sds_code))
        .cloned()
        .collect();
    let kept_ids: BTreeSet<&str> = researchers.iter().map(|r| r.researcher_id.as_str()).collect();
    let mut publications = Vec::new();
    let mut citations = Vec::new();
    for (p, publication) in corpus.publications.iter().enumerate() {
        let author_ids: Vec<String> = publication
            .author_ids
            .iter()
            .filter(|a| kept_ids.contains(a.as_str()))
            .cloned()
            .collect();
        if author_ids.is_empty() {
            continue;
        }
        publications.push(Publication {
            author_ids,
            ..publication.clone()
        });
        citations.extend_from_slice(corpus.citation_path(p));
    }
    let researcher_index = researchers
        .iter()
        .enumerate()
        .map(|(i, r)| (r.researcher_id.clone(), i))
        .collect();
    let report = FilterReport {
        thresholds,
        retained_sds: keep_sds.len(),
        removed,
        empty: researchers.is_empty(),
    };
    let filtered = Corpus {
        config: corpus.config.clone(),
        researchers,
        publications,
        citations,
        researcher_index,
    };
    (filtered, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    const RESEARCHERS: &str = "researcher_id,sds_code,uda_code,university_id
r1,MAT/03,MAT,u1
r2,MAT/03,MAT,u2
r3,FIS/01,FIS,u1
r4,FIS/01,FIS,u3
";
    const PUBLICATIONS: &str = "pub_id,pub_year,author_ids,categories
p1,2001,r1,Mathematics
p2,2002,r1;r2,Mathematics:0.5;Applied Mathematics:0.5
p3,2003,r3,Physics
p4,2001,r3;r4,Physics;Optics
p5,2002,r4,Optics:1
";

    fn citations_full() -> String {
        let mut s = String::from("pub_id,observation_year,cumulative_citations\n");
        for p in 1..=5 {
            for (i, y) in (2004..=2008).enumerate() {
                s.push_str(&format!("p{p},{y},{}\n", p + i));
            }
        }
        s
    }

    fn load(cits: &str) -> Result<(Corpus, LoadReport), CorpusError> {
        load_corpus_from_readers(
            RESEARCHERS.as_bytes(),
            PUBLICATIONS.as_bytes(),
            cits.as_bytes(),
            &CorpusConfig::default(),
            ("researchers.csv", "publications.csv", "citations.csv"),
        )
    }

    #[test]
    fn toy_corpus_loads_with_expected_counts() {
        let (corpus, report) = load(&citations_full()).unwrap();
        assert_eq!(corpus.researchers().len(), 4);
        assert_eq!(corpus.publications().len(), 5);
        assert_eq!(corpus.sds_members().len(), 2);
        assert!(report.defaulted_citations.is_empty());
        assert_eq!(report.citation_rows, 25);
        assert_eq!(corpus.benchmark_year(), 2008);
        let p4 = &corpus.publications()[3];
        assert_eq!(p4.categories[0].weight, 0.5);
        assert_eq!(corpus.citation_path(1), &[2, 3, 4, 5, 6]);
        let uda: Vec<_> = report
            .by_uda
            .iter()
            .map(|u| (u.uda_code.as_str(), u.researchers, u.publications))
            .collect();
        assert_eq!(uda, vec![("FIS", 2, 3), ("MAT", 2, 2)]);
    }

    #[test]
    fn decreasing_path_is_a_monotonicity_error() {
        let cits = citations_full().replace("p2,2006,4", "p2,2006,1");
        match load(&cits).unwrap_err() {
            CorpusError::Monotonicity { pub_id, year, line, .. } => {
                assert_eq!(pub_id, "p2");
                assert_eq!(year, 2006);
                assert_eq!(line, 9);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_row_defaults_to_zero_and_is_reported() {
        let cits = citations_full().replace("p3,2004,3\n", "");
        let (corpus, report) = load(&cits).unwrap();
        assert_eq!(corpus.citations_at(2, 0), 0);
        assert_eq!(
            report.defaulted_citations,
            vec![DefaultedCitation {
                pub_id: "p3".into(),
                observation_year: 2004
            }]
        );
    }

    #[test]
    fn schema_errors_name_file_line_and_field() {
        let cits = citations_full().replace("p1,2005,2", "p1,2005,two");
        let err = load(&cits).unwrap_err().to_string();
        assert!(err.contains("citations.csv:3"), "{err}");
        assert!(err.contains("cumulative_citations"), "{err}");

        let bad_header = citations_full().replace("cumulative_citations\n", "count\n");
        assert!(matches!(load(&bad_header), Err(CorpusError::Schema { line: 1, .. })));
    }

    #[test]
    fn unknown_publication_and_author_are_reference_errors() {
        let cits = format!("{}p9,2004,1\n", citations_full());
        assert!(matches!(load(&cits), Err(CorpusError::Reference { ref field, .. }) if field == "pub_id"));

        let pubs = PUBLICATIONS.replace("p5,2002,r4", "p5,2002,r9");
        let err = load_corpus_from_readers(
            RESEARCHERS.as_bytes(),
            pubs.as_bytes(),
            citations_full().as_bytes(),
            &CorpusConfig::default(),
            ("researchers.csv", "publications.csv", "citations.csv"),
        )
        .unwrap_err();
        match err {
            CorpusError::Reference { line, field, .. } => {
                assert_eq!(line, 6);
                assert_eq!(field, "author_ids");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn sds_must_map_to_one_uda() {
        let r = RESEARCHERS.replace("r2,MAT/03,MAT", "r2,MAT/03,FIS");
        let err = load_corpus_from_readers(
            r.as_bytes(),
            PUBLICATIONS.as_bytes(),
            citations_full().as_bytes(),
            &CorpusConfig::default(),
            ("researchers.csv", "publications.csv", "citations.csv"),
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::Schema { ref field, line: 3, .. } if field == "uda_code"));
    }

    #[test]
    fn category_parsing() {
        let c = parse_categories("A;B;C").unwrap();
        assert!(c.iter().all(|c| (c.weight - 1.0 / 3.0).abs() < 1e-15));
        assert!(parse_categories("A:0.5;B").is_err());
        assert!(parse_categories("A:0.5;B:0.6").is_err());
        assert!(parse_categories("A:0;B:1").is_err());
        assert!(parse_categories("A:0.5;A:0.5").is_err());
        assert!(parse_categories("").is_err());
        assert_eq!(parse_categories("A:1").unwrap()[0].weight, 1.0);
    }

    #[test]
    fn out_of_window_year_rejected() {
        let pubs = PUBLICATIONS.replace("p1,2001", "p1,2004");
        let err = load_corpus_from_readers(
            RESEARCHERS.as_bytes(),
            pubs.as_bytes(),
            citations_full().as_bytes(),
            &CorpusConfig::default(),
            ("r", "p", "c"),
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::Schema { ref field, .. } if field == "pub_year"));
    }

    fn sds_with(code: &str, members: usize, publishing: usize) -> (Vec<Researcher>, Vec<Publication>) {
        let researchers: Vec<_> = (0..members)
            .map(|i| Researcher {
                researcher_id: format!("{code}-r{i:02}"),
                sds_code: code.into(),
                uda_code: "U".into(),
                university_id: "u".into(),
            })
            .collect();
        let publications = (0..publishing)
            .map(|i| Publication {
                pub_id: format!("{code}-p{i:02}"),
                pub_year: 2002,
                author_ids: vec![format!("{code}-r{i:02}")],
                categories: vec![CategoryWeight {
                    category: "C".into(),
                    weight: 1.0,
                }],
            })
            .collect();
        (researchers, publications)
    }

    fn eligibility_corpus() -> Corpus {
        let mut researchers = Vec::new();
        let mut publications = Vec::new();
        for (code, m, p) in [("A", 9, 9), ("B", 10, 5), ("C", 20, 8)] {
            let (r, p) = sds_with(code, m, p);
            researchers.extend(r);
            publications.extend(p);
        }
        Corpus::from_records(CorpusConfig::default(), researchers, publications, vec![])
            .unwrap()
            .0
    }

    #[test]
    fn eligibility_thresholds_are_inclusive() {
        let corpus = eligibility_corpus();
        let (filtered, report) = filter_eligible_sds(&corpus, EligibilityThresholds::default());
        let kept: Vec<_> = filtered.sds_members().keys().map(|s| s.to_string()).collect();
        assert_eq!(kept, vec!["B"]);
        let removed: Vec<_> = report
            .removed
            .iter()
            .map(|r| (r.sds_code.as_str(), r.too_few_members, r.low_publishing_share))
            .collect();
        assert_eq!(removed, vec![("A", true, false), ("C", false, true)]);
        assert_eq!(filtered.publications().len(), 5);
        assert_eq!(filtered.citation_path(0).len(), 5);
    }

    #[test]
    fn filtering_is_idempotent() {
        let corpus = eligibility_corpus();
        let (once, _) = filter_eligible_sds(&corpus, EligibilityThresholds::default());
        let (twice, report) = filter_eligible_sds(&once, EligibilityThresholds::default());
        assert_eq!(once, twice);
        assert!(report.removed.is_empty());
    }

    #[test]
    fn filtering_everything_yields_empty_corpus() {
        let corpus = eligibility_corpus();
        let strict = EligibilityThresholds {
            min_publishing_share: 1.0,
            min_members: 50,
        };
        let (filtered, report) = filter_eligible_sds(&corpus, strict);
        assert!(report.empty);
        assert!(filtered.researchers().is_empty());
        assert!(filtered.publications().is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(CorpusConfig::new(YearWindow::new(2001, 2003), vec![])
            .validate()
            .is_err());
        assert!(CorpusConfig::new(YearWindow::new(2001, 2003), vec![2005, 2004])
            .validate()
            .is_err());
        assert!(CorpusConfig::new(YearWindow::new(2001, 2003), vec![2002, 2004])
            .validate()
            .is_err());
        assert!(CorpusConfig::new(YearWindow::new(2001, 2003), vec![2008])
            .validate()
            .is_ok());
    }
}

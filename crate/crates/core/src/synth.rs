//! Seeded synthetic corpora with per-field citation aging.
//!
//! Every researcher draws from its own ChaCha stream (the global seed plus the
//! researcher's index as stream id), so output does not depend on how the
//! work is scheduled.
//!
//! Model, per SDS:
//! - publications per researcher ~ Poisson(`mean_pubs_per_researcher`)
//! - latent quality q ~ LogNormal(0, `quality_sigma`), year uniform in the window
//! - authors = lead + Poisson(`coauthorship_mean` - 1) co-authors from the same SDS
//! - expected cumulative citations at year y: `citation_scale * q * F(y - pub_year)`
//!   with `F(t) = 1 - exp(-t / aging_tau)`, realized by independent Poisson
//!   increments between observation years

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    CategoryWeight, CitationRecord, Corpus, CorpusConfig, CorpusError, LoadReport, Publication, Researcher, YearWindow,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid `{field}`{}: {message}", scope.as_ref().map(|s| format!(" for SDS `{s}`")).unwrap_or_default())]
    Invalid {
        field: String,
        scope: Option<String>,
        message: String,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl SynthError {
    fn invalid(field: &str, scope: Option<&str>, message: impl Into<String>) -> Self {
        SynthError::Invalid {
            field: field.to_string(),
            scope: scope.map(str::to_string),
            message: message.into(),
        }
    }

    /// Name of the offending configuration field, if any.
    pub fn field(&self) -> Option<&str> {
        match self {
            SynthError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

/// Saturating-exponential share of eventual citations received after `t` years.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgingCurve {
    pub tau: f64,
}

impl AgingCurve {
    pub fn new(tau: f64) -> Self {
        AgingCurve { tau }
    }

    pub fn fraction(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            -(-t / self.tau).exp_m1()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdsSpec {
    pub sds_code: String,
    pub uda_code: String,
    pub n_members: usize,
    pub mean_pubs_per_researcher: f64,
    pub aging_tau: f64,
    pub quality_sigma: f64,
    pub coauthorship_mean: f64,
    pub n_categories: usize,
    pub multi_category_share: f64,
}

impl SdsSpec {
    pub fn new(sds_code: &str, uda_code: &str, n_members: usize) -> Self {
        SdsSpec {
            sds_code: sds_code.to_string(),
            uda_code: uda_code.to_string(),
            n_members,
            mean_pubs_per_researcher: 7.0,
            aging_tau: 2.0,
            quality_sigma: 1.0,
            coauthorship_mean: 1.5,
            n_categories: 3,
            multi_category_share: 0.2,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let scope = Some(self.sds_code.as_str());
        if self.uda_code.is_empty() {
            return Err(SynthError::invalid("uda_code", scope, "must not be empty"));
        }
        if self.n_members == 0 {
            return Err(SynthError::invalid("n_members", scope, "must be at least 1"));
        }
        let positive = |v: f64, field: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(SynthError::invalid(field, scope, format!("must be > 0, got {v}")))
            }
        };
        positive(self.mean_pubs_per_researcher, "mean_pubs_per_researcher")?;
        positive(self.aging_tau, "aging_tau")?;
        if !(self.quality_sigma >= 0.0 && self.quality_sigma.is_finite()) {
            return Err(SynthError::invalid(
                "quality_sigma",
                scope,
                format!("must be >= 0, got {}", self.quality_sigma),
            ));
        }
        if !(self.coauthorship_mean >= 1.0 && self.coauthorship_mean.is_finite()) {
            return Err(SynthError::invalid(
                "coauthorship_mean",
                scope,
                format!("must be >= 1, got {}", self.coauthorship_mean),
            ));
        }
        if self.n_categories == 0 {
            return Err(SynthError::invalid("n_categories", scope, "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.multi_category_share) {
            return Err(SynthError::invalid(
                "multi_category_share",
                scope,
                format!("must be within [0, 1], got {}", self.multi_category_share),
            ));
        }
        Ok(())
    }
}

const SDS_FIELDS: [&str; 8] = [
    "uda_code",
    "n_members",
    "mean_pubs_per_researcher",
    "aging_tau",
    "quality_sigma",
    "coauthorship_mean",
    "n_categories",
    "multi_category_share",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub evaluation_window: YearWindow,
    /// Strictly increasing; the last one is the benchmark.
    pub observation_years: Vec<i32>,
    /// Multiplier on latent quality giving expected eventual citations.
    pub citation_scale: f64,
    pub n_universities: usize,
    pub sds_specs: Vec<SdsSpec>,
}

impl Default for SynthConfig {
    /// Two SDSs in different UDAs: a slow-citing one and a fast-citing one.
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            evaluation_window: YearWindow::new(2001, 2003),
            observation_years: (2004..=2008).collect(),
            citation_scale: 10.0,
            n_universities: 20,
            sds_specs: vec![
                SdsSpec {
                    aging_tau: 5.0,
                    mean_pubs_per_researcher: 4.0,
                    ..SdsSpec::new("MAT/03", "MAT", 120)
                },
                SdsSpec {
                    aging_tau: 0.5,
                    mean_pubs_per_researcher: 12.0,
                    coauthorship_mean: 3.0,
                    ..SdsSpec::new("FIS/01", "FIS", 200)
                },
            ],
        }
    }
}

impl SynthConfig {
    pub fn corpus_config(&self) -> CorpusConfig {
        CorpusConfig::new(self.evaluation_window, self.observation_years.clone())
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        self.corpus_config()
            .validate()
            .map_err(|e| SynthError::invalid("observe", None, e.to_string()))?;
        if !(self.citation_scale > 0.0 && self.citation_scale.is_finite()) {
            return Err(SynthError::invalid(
                "citation_scale",
                None,
                format!("must be > 0, got {}", self.citation_scale),
            ));
        }
        if self.n_universities == 0 {
            return Err(SynthError::invalid("universities", None, "must be at least 1"));
        }
        if self.sds_specs.is_empty() {
            return Err(SynthError::invalid("sds", None, "no SDS defined"));
        }
        let mut codes = BTreeSet::new();
        for s in &self.sds_specs {
            if !codes.insert(s.sds_code.as_str()) {
                return Err(SynthError::invalid("sds", Some(&s.sds_code), "defined twice"));
            }
            s.validate()?;
        }
        Ok(())
    }

    /// Parses the flat `key = value` format:
    ///
    /// ```text
    /// # comment
    /// seed = 42
    /// window = 2001:2003
    /// observe = 2004,2005,2006,2007,2008
    /// citation_scale = 10
    /// universities = 20
    /// sds.MAT/03.uda_code = MAT
    /// sds.MAT/03.n_members = 120
    /// sds.MAT/03.aging_tau = 5
    /// ```
    ///
    /// Per-SDS keys are `sds.<code>.<field>`; `uda_code` and `n_members` are
    /// required, other fields default to the values of [`SdsSpec::new`].
    pub fn parse(text: &str) -> Result<SynthConfig, SynthError> {
        let defaults = SynthConfig::default();
        let mut cfg = SynthConfig {
            sds_specs: Vec::new(),
            ..defaults
        };
        let mut order: Vec<String> = Vec::new();
        let mut fields: BTreeMap<String, BTreeMap<String, (usize, String)>> = BTreeMap::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| SynthError::Syntax {
                line,
                message: format!("expected `key = value`, found `{content}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(rest) = key.strip_prefix("sds.") {
                let (code, field) = rest.rsplit_once('.').ok_or_else(|| SynthError::Syntax {
                    line,
                    message: format!("expected `sds.<code>.<field>`, found `{key}`"),
                })?;
                if !SDS_FIELDS.contains(&field) {
                    return Err(SynthError::Syntax {
                        line,
                        message: format!("unknown SDS field `{field}`"),
                    });
                }
                if !fields.contains_key(code) {
                    order.push(code.to_string());
                }
                fields
                    .entry(code.to_string())
                    .or_default()
                    .insert(field.to_string(), (line, value.to_string()));
                continue;
            }
            match key {
                "seed" => cfg.seed = parse_value(value, "seed", line)?,
                "window" => {
                    let (a, b) = value.split_once(':').ok_or_else(|| SynthError::Syntax {
                        line,
                        message: format!("`window` must be start:end, found `{value}`"),
                    })?;
                    cfg.evaluation_window = YearWindow::new(
                        parse_value(a.trim(), "window", line)?,
                        parse_value(b.trim(), "window", line)?,
                    );
                }
                "observe" => {
                    cfg.observation_years = value
                        .split(',')
                        .map(|y| parse_value(y.trim(), "observe", line))
                        .collect::<Result<_, _>>()?
                }
                "citation_scale" => cfg.citation_scale = parse_value(value, "citation_scale", line)?,
                "universities" => cfg.n_universities = parse_value(value, "universities", line)?,
                other => {
                    return Err(SynthError::Syntax {
                        line,
                        message: format!("unknown key `{other}`"),
                    })
                }
            }
        }

        for code in order {
            let f = &fields[&code];
            let get = |name: &str| f.get(name);
            let (_, uda) = get("uda_code").ok_or_else(|| SynthError::invalid("uda_code", Some(&code), "missing"))?;
            let (line, members) =
                get("n_members").ok_or_else(|| SynthError::invalid("n_members", Some(&code), "missing"))?;
            let mut spec = SdsSpec::new(&code, uda, parse_value(members, "n_members", *line)?);
            if let Some((line, v)) = get("mean_pubs_per_researcher") {
                spec.mean_pubs_per_researcher = parse_value(v, "mean_pubs_per_researcher", *line)?;
            }
            if let Some((line, v)) = get("aging_tau") {
                spec.aging_tau = parse_value(v, "aging_tau", *line)?;
            }
            if let Some((line, v)) = get("quality_sigma") {
                spec.quality_sigma = parse_value(v, "quality_sigma", *line)?;
            }
            if let Some((line, v)) = get("coauthorship_mean") {
                spec.coauthorship_mean = parse_value(v, "coauthorship_mean", *line)?;
            }
            if let Some((line, v)) = get("n_categories") {
                spec.n_categories = parse_value(v, "n_categories", *line)?;
            }
            if let Some((line, v)) = get("multi_category_share") {
                spec.multi_category_share = parse_value(v, "multi_category_share", *line)?;
            }
            cfg.sds_specs.push(spec);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serializes to the format accepted by [`SynthConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "window = {}", self.evaluation_window);
        let years: Vec<String> = self.observation_years.iter().map(i32::to_string).collect();
        let _ = writeln!(s, "observe = {}", years.join(","));
        let _ = writeln!(s, "citation_scale = {}", self.citation_scale);
        let _ = writeln!(s, "universities = {}", self.n_universities);
        for d in &self.sds_specs {
            let c = &d.sds_code;
            let _ = writeln!(s);
            let _ = writeln!(s, "sds.{c}.uda_code = {}", d.uda_code);
            let _ = writeln!(s, "sds.{c}.n_members = {}", d.n_members);
            let _ = writeln!(s, "sds.{c}.mean_pubs_per_researcher = {}", d.mean_pubs_per_researcher);
            let _ = writeln!(s, "sds.{c}.aging_tau = {}", d.aging_tau);
            let _ = writeln!(s, "sds.{c}.quality_sigma = {}", d.quality_sigma);
            let _ = writeln!(s, "sds.{c}.coauthorship_mean = {}", d.coauthorship_mean);
            let _ = writeln!(s, "sds.{c}.n_categories = {}", d.n_categories);
            let _ = writeln!(s, "sds.{c}.multi_category_share = {}", d.multi_category_share);
        }
        s
    }
}

fn parse_value<T: std::str::FromStr>(raw: &str, field: &str, line: usize) -> Result<T, SynthError> {
    raw.parse().map_err(|_| SynthError::Syntax {
        line,
        message: format!("`{field}`: cannot parse `{raw}`"),
    })
}

/// A generated corpus plus each researcher's latent expected eventual
/// citations (sum over authored publications of `citation_scale * q`).
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub researchers: Vec<Researcher>,
    pub publications: Vec<Publication>,
    pub citations: Vec<CitationRecord>,
    pub ground_truth: BTreeMap<String, f64>,
}

impl SynthCorpus {
    pub fn to_corpus(&self) -> Result<(Corpus, LoadReport), CorpusError> {
        Corpus::from_records(
            self.config.corpus_config(),
            self.researchers.clone(),
            self.publications.clone(),
            self.citations.clone(),
        )
    }

    pub fn ground_truth_json(&self) -> String {
        serde_json::to_string_pretty(&self.ground_truth).expect("string keys and finite floats serialize")
    }

    /// Writes the three corpus CSV files and `ground_truth.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), SynthError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| SynthError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let (corpus, _) = self.to_corpus()?;
        corpus.write_dir(dir)?;
        let sidecar = dir.join("ground_truth.json");
        std::fs::write(&sidecar, self.ground_truth_json() + "\n").map_err(io(&sidecar))?;
        Ok(())
    }
}

fn researcher_id(index: usize) -> String {
    format!("r{index:06}")
}

struct Draft {
    publications: Vec<Publication>,
    citations: Vec<CitationRecord>,
    /// (author index, expected eventual citations) contributions
    credit: Vec<(usize, f64)>,
    university: usize,
}

/// Generates a synthetic corpus. Deterministic in `config`.
pub fn generate(config: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    config.validate()?;
    // (global researcher index range, spec) per SDS
    let mut offset = 0;
    let mut blocks = Vec::with_capacity(config.sds_specs.len());
    for spec in &config.sds_specs {
        blocks.push((offset, spec));
        offset += spec.n_members;
    }
    let total = offset;
    let member_block: Vec<usize> = blocks
        .iter()
        .enumerate()
        .flat_map(|(b, (_, spec))| std::iter::repeat_n(b, spec.n_members))
        .collect();

    let drafts: Vec<Draft> = (0..total)
        .into_par_iter()
        .map(|i| {
            let (start, spec) = blocks[member_block[i]];
            draft_researcher(config, spec, start, i)
        })
        .collect();

    let mut researchers = Vec::with_capacity(total);
    let mut publications = Vec::new();
    let mut citations = Vec::new();
    let mut ground_truth: BTreeMap<String, f64> = (0..total).map(|i| (researcher_id(i), 0.0)).collect();
    let mut credit = vec![0.0; total];
    for (i, d) in drafts.into_iter().enumerate() {
        let spec = blocks[member_block[i]].1;
        researchers.push(Researcher {
            researcher_id: researcher_id(i),
            sds_code: spec.sds_code.clone(),
            uda_code: spec.uda_code.clone(),
            university_id: format!("u{:03}", d.university),
        });
        publications.extend(d.publications);
        citations.extend(d.citations);
        for (author, c) in d.credit {
            credit[author] += c;
        }
    }
    for (i, c) in credit.into_iter().enumerate() {
        ground_truth.insert(researcher_id(i), c);
    }
    Ok(SynthCorpus {
        config: config.clone(),
        researchers,
        publications,
        citations,
        ground_truth,
    })
}

fn poisson<R: Rng>(rng: &mut R, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("finite positive rate").sample(rng) as u64
}

fn draft_researcher(config: &SynthConfig, spec: &SdsSpec, block_start: usize, index: usize) -> Draft {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let university = rng.random_range(0..config.n_universities);
    let n_pubs = poisson(&mut rng, spec.mean_pubs_per_researcher);
    let quality = LogNormal::new(0.0, spec.quality_sigma).expect("validated sigma");
    let aging = AgingCurve::new(spec.aging_tau);
    let window = config.evaluation_window;
    let local = index - block_start;

    let mut publications = Vec::with_capacity(n_pubs as usize);
    let mut citations = Vec::with_capacity(n_pubs as usize * config.observation_years.len());
    let mut credit = Vec::new();
    for k in 0..n_pubs {
        let pub_id = format!("p{index:06}-{k:03}");
        let pub_year = rng.random_range(window.start..=window.end);
        let q = quality.sample(&mut rng);

        let extra = poisson(&mut rng, spec.coauthorship_mean - 1.0).min(spec.n_members as u64 - 1) as usize;
        let mut authors = vec![index];
        // sample among the other members: draw from n - 1 slots and skip the lead
        for j in sample(&mut rng, spec.n_members - 1, extra).into_iter() {
            let member = if j >= local { j + 1 } else { j };
            authors.push(block_start + member);
        }
        authors.sort_unstable();

        let primary = rng.random_range(0..spec.n_categories);
        let mut cats = vec![primary];
        if spec.n_categories > 1 && rng.random_bool(spec.multi_category_share) {
            let other = (primary + 1 + rng.random_range(0..spec.n_categories - 1)) % spec.n_categories;
            cats.push(other);
            cats.sort_unstable();
        }
        let weight = 1.0 / cats.len() as f64;
        let categories = cats
            .iter()
            .map(|c| CategoryWeight {
                category: format!("{}-C{c}", spec.sds_code),
                weight,
            })
            .collect();

        let eventual = config.citation_scale * q;
        let mut expected_so_far = 0.0;
        let mut cumulative = 0u64;
        for &year in &config.observation_years {
            let expected = eventual * aging.fraction(f64::from(year - pub_year));
            cumulative += poisson(&mut rng, expected - expected_so_far);
            expected_so_far = expected;
            citations.push(CitationRecord {
                pub_id: pub_id.clone(),
                observation_year: year,
                cumulative_citations: cumulative,
            });
        }

        credit.extend(authors.iter().map(|&a| (a, eventual)));
        publications.push(Publication {
            pub_id,
            pub_year,
            author_ids: authors.iter().map(|&a| researcher_id(a)).collect(),
            categories,
        });
    }
    Draft {
        publications,
        citations,
        credit,
        university,
    }
}

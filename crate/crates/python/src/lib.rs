//! Python bindings for `citewin_core`.
//!
//! Structured results (reports, statistics) cross the boundary as plain
//! Python dicts and lists built from their JSON form.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use citewin_core::corpus::{self, CorpusConfig, CorpusError, EligibilityThresholds, LoadReport, YearWindow};
use citewin_core::pipeline::{self, AnalysisConfig};
use citewin_core::stability::{self, HistogramBins};
use citewin_core::{normal, normalize, rank, toppersist, Counting, SynthConfig};

fn value_error(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn corpus_error(e: CorpusError) -> PyErr {
    match e {
        CorpusError::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => value_error(e),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_error)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn corpus_config(window: (i32, i32), observe: Vec<i32>) -> PyResult<CorpusConfig> {
    let config = CorpusConfig::new(YearWindow::new(window.0, window.1), observe);
    config.validate().map_err(corpus_error)?;
    Ok(config)
}

/// A validated corpus of researchers, publications and citation paths.
#[pyclass(name = "Corpus", module = "citewin", frozen)]
struct PyCorpus {
    inner: citewin_core::Corpus,
    report: LoadReport,
}

#[pymethods]
impl PyCorpus {
    /// Loads and validates the three corpus CSV files.
    #[staticmethod]
    #[pyo3(signature = (researchers, publications, citations, window = (2001, 2003), observe = vec![2004, 2005, 2006, 2007, 2008]))]
    fn load(
        researchers: PathBuf,
        publications: PathBuf,
        citations: PathBuf,
        window: (i32, i32),
        observe: Vec<i32>,
    ) -> PyResult<Self> {
        let config = corpus_config(window, observe)?;
        let (inner, report) =
            corpus::load_corpus(&researchers, &publications, &citations, &config).map_err(corpus_error)?;
        Ok(PyCorpus { inner, report })
    }

    #[getter]
    fn n_researchers(&self) -> usize {
        self.inner.researchers().len()
    }

    #[getter]
    fn n_publications(&self) -> usize {
        self.inner.publications().len()
    }

    #[getter]
    fn observation_years(&self) -> Vec<i32> {
        self.inner.observation_years().to_vec()
    }

    #[getter]
    fn benchmark_year(&self) -> i32 {
        self.inner.benchmark_year()
    }

    /// Researcher ids per SDS code.
    fn sds_members(&self) -> BTreeMap<String, Vec<String>> {
        let researchers = self.inner.researchers();
        self.inner
            .sds_members()
            .into_iter()
            .map(|(sds, idx)| {
                (
                    sds.to_string(),
                    idx.iter().map(|&i| researchers[i].researcher_id.clone()).collect(),
                )
            })
            .collect()
    }

    fn load_report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.report)
    }

    /// Writes `researchers.csv`, `publications.csv` and `citations.csv`.
    fn write_dir(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.write_dir(&dir).map_err(corpus_error)
    }

    /// Runs the full ranking and stability analysis.
    #[pyo3(signature = (top = 80, counting = "full", min_share = 0.5, min_members = 10, bins = None))]
    fn analyze(
        &self,
        py: Python<'_>,
        top: u8,
        counting: &str,
        min_share: f64,
        min_members: usize,
        bins: Option<&str>,
    ) -> PyResult<PyAnalysis> {
        let counting: Counting = counting.parse().map_err(value_error)?;
        let bins = match bins {
            Some(b) => b.parse::<HistogramBins>().map_err(value_error)?,
            None => HistogramBins::default(),
        };
        let config = AnalysisConfig {
            corpus: self.inner.config().clone(),
            thresholds: EligibilityThresholds {
                min_publishing_share: min_share,
                min_members,
            },
            top_percentile: top,
            counting,
            bins,
        };
        let analysis = py
            .detach(|| pipeline::analyze(&self.inner, &config, Vec::new()))
            .map_err(value_error)?;
        Ok(PyAnalysis {
            inner: analysis,
            report: self.report.clone(),
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Corpus(researchers={}, publications={}, observation_years={:?})",
            self.n_researchers(),
            self.n_publications(),
            self.inner.observation_years()
        )
    }
}

/// Results of one analysis run.
#[pyclass(name = "Analysis", module = "citewin", frozen)]
struct PyAnalysis {
    inner: pipeline::Analysis,
    report: LoadReport,
}

#[pymethods]
impl PyAnalysis {
    /// Percentile of every researcher in `sds_code` at `observation_year`.
    fn percentiles(&self, sds_code: &str, observation_year: i32) -> PyResult<BTreeMap<String, u8>> {
        self.inner
            .rankings
            .get(sds_code)
            .and_then(|by_year| by_year.get(&observation_year))
            .map(|r| r.entries.clone())
            .ok_or_else(|| value_error(format!("no ranking for SDS `{sds_code}` in {observation_year}")))
    }

    /// Scientific strength of every researcher at `observation_year`.
    fn scores(&self, observation_year: i32) -> PyResult<BTreeMap<String, f64>> {
        let table = self
            .inner
            .scores
            .iter()
            .find(|t| t.observation_year == observation_year)
            .ok_or_else(|| value_error(format!("no scores for {observation_year}")))?;
        Ok(table.entries.iter().map(|(id, s)| (id.clone(), s.value)).collect())
    }

    /// `(early_year, rho)` pairs against the benchmark ranking.
    fn spearman_series(&self, sds_code: &str) -> Vec<(i32, Option<f64>)> {
        self.inner.convergence.spearman_series(sds_code)
    }

    fn sds_codes(&self) -> Vec<String> {
        self.inner.rankings.keys().cloned().collect()
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.stats)
    }

    fn transitions<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.transitions)
    }

    fn probit(&self) -> Vec<PyProbitFit> {
        self.inner
            .probit
            .iter()
            .cloned()
            .map(|inner| PyProbitFit { inner })
            .collect()
    }

    fn manifest<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.manifest)
    }

    fn write_reports(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.write_reports(&dir, &self.report).map_err(value_error)
    }
}

/// Binary probit of benchmark top status on early top status.
#[pyclass(name = "ProbitFit", module = "citewin", frozen)]
struct PyProbitFit {
    inner: toppersist::ProbitFit,
}

#[pymethods]
impl PyProbitFit {
    #[getter]
    fn uda_code(&self) -> &str {
        &self.inner.uda_code
    }
    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }
    #[getter]
    fn beta0(&self) -> f64 {
        self.inner.beta0
    }
    #[getter]
    fn beta1(&self) -> f64 {
        self.inner.beta1
    }
    #[getter]
    fn se_beta0(&self) -> f64 {
        self.inner.se_beta0
    }
    #[getter]
    fn se_beta1(&self) -> f64 {
        self.inner.se_beta1
    }
    #[getter]
    fn prob_top_given_top(&self) -> f64 {
        self.inner.prob_top_given_top
    }
    #[getter]
    fn pseudo_r2(&self) -> f64 {
        self.inner.pseudo_r2
    }
    #[getter]
    fn p_value_model(&self) -> f64 {
        self.inner.p_value_model
    }

    fn as_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "ProbitFit(uda_code={:?}, n={}, beta0={:.6}, beta1={:.6})",
            self.inner.uda_code, self.inner.n, self.inner.beta0, self.inner.beta1
        )
    }
}

/// Generates a synthetic corpus; `config` uses the `key = value` format of
/// `default_synth_config()`. Returns the corpus and the latent ground truth.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn simulate(py: Python<'_>, config: Option<&str>) -> PyResult<(PyCorpus, BTreeMap<String, f64>)> {
    let config = match config {
        Some(text) => SynthConfig::parse(text).map_err(value_error)?,
        None => SynthConfig::default(),
    };
    let synth = py.detach(|| citewin_core::generate(&config)).map_err(value_error)?;
    let (inner, report) = synth.to_corpus().map_err(corpus_error)?;
    Ok((PyCorpus { inner, report }, synth.ground_truth))
}

#[pyfunction]
fn default_synth_config() -> String {
    SynthConfig::default().to_text()
}

/// Median of the strictly positive counts, `None` if there are none.
#[pyfunction]
fn median_of_cited(counts: Vec<u64>) -> Option<f64> {
    normalize::median_of_cited(&counts)
}

/// Integer percentile in [0, 100] per researcher, 100 for the best score.
#[pyfunction]
#[pyo3(signature = (scores, sds_code = "", observation_year = 0))]
fn percentile_rank(scores: BTreeMap<String, f64>, sds_code: &str, observation_year: i32) -> BTreeMap<String, u8> {
    let scores: Vec<(String, f64)> = scores.into_iter().collect();
    rank::percentile_rank(sds_code, observation_year, &scores).entries
}

#[pyfunction]
fn quartile_class(percentile: i64) -> PyResult<u8> {
    rank::quartile_class(percentile).map_err(value_error)
}

/// Spearman correlation, `None` when either input has no spread.
#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> PyResult<Option<f64>> {
    stability::spearman(&x, &y).map_err(value_error)
}

#[pyfunction]
fn fit_probit(y: Vec<bool>, x: Vec<bool>) -> PyResult<PyProbitFit> {
    toppersist::fit_probit(&y, &x)
        .map(|inner| PyProbitFit { inner })
        .map_err(value_error)
}

#[pyfunction]
fn norm_cdf(x: f64) -> f64 {
    normal::cdf(x)
}

#[pyfunction]
fn norm_ppf(p: f64) -> f64 {
    normal::quantile(p)
}

#[pymodule]
fn citewin(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyAnalysis>()?;
    m.add_class::<PyProbitFit>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(default_synth_config, m)?)?;
    m.add_function(wrap_pyfunction!(median_of_cited, m)?)?;
    m.add_function(wrap_pyfunction!(percentile_rank, m)?)?;
    m.add_function(wrap_pyfunction!(quartile_class, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(fit_probit, m)?)?;
    m.add_function(wrap_pyfunction!(norm_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(norm_ppf, m)?)?;
    Ok(())
}

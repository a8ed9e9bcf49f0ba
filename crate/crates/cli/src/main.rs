use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use citewin_core::corpus::{load_corpus, CorpusConfig, CorpusError, EligibilityThresholds, LoadReport, YearWindow};
use citewin_core::pipeline::{analyze, to_json, AnalysisConfig};
use citewin_core::score::Counting;
use citewin_core::stability::HistogramBins;
use citewin_core::synth::{generate, SynthConfig};

#[derive(Parser)]
#[command(
    name = "citewin",
    version,
    about = "Sensitivity of researcher productivity rankings to the citation window"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus from a key-value config file.
    ///
    /// Config format, one `key = value` per line, `#` starts a comment:
    ///
    ///   seed = 42
    ///   window = 2001:2003
    ///   observe = 2004,2005,2006,2007,2008
    ///   citation_scale = 10
    ///   universities = 20
    ///   sds.MAT/03.uda_code = MAT
    ///   sds.MAT/03.n_members = 120
    ///   sds.MAT/03.mean_pubs_per_researcher = 4
    ///   sds.MAT/03.aging_tau = 5
    ///   sds.MAT/03.quality_sigma = 1
    ///   sds.MAT/03.coauthorship_mean = 1.5
    ///   sds.MAT/03.n_categories = 3
    ///   sds.MAT/03.multi_category_share = 0.2
    ///
    /// Only `uda_code` and `n_members` are required per SDS.
    #[command(verbatim_doc_comment)]
    Simulate {
        #[arg(long, required_unless_present = "print_default_config")]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "print_default_config")]
        out: Option<PathBuf>,
        /// Print the built-in example config and exit.
        #[arg(long)]
        print_default_config: bool,
    },
    /// Run the full ranking and stability analysis and write all reports.
    Analyze {
        #[arg(long)]
        researchers: PathBuf,
        #[arg(long)]
        publications: PathBuf,
        #[arg(long)]
        citations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        years: YearArgs,
        #[arg(long, default_value_t = 0.5)]
        min_share: f64,
        #[arg(long, default_value_t = 10)]
        min_members: usize,
        /// Top-scientist threshold; flags are strictly above it.
        #[arg(long, default_value_t = 80)]
        top: u8,
        #[arg(long, default_value = "full", value_parser = ["full", "equal-split"])]
        counting: String,
        /// Inclusive delta bins `low:high,...` for the shift histogram.
        #[arg(long, allow_hyphen_values = true)]
        bins: Option<String>,
    },
    /// Validate corpus files and print the load report.
    ///
    /// Takes the researchers, publications and citations files in that
    /// order, or a single directory containing `researchers.csv`,
    /// `publications.csv` and `citations.csv`.
    Validate {
        #[arg(required = true, num_args = 1..=3)]
        paths: Vec<PathBuf>,
        #[command(flatten)]
        years: YearArgs,
        /// Write the load report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args)]
struct YearArgs {
    /// Publication window `start:end`.
    #[arg(long, default_value = "2001:2003")]
    window: String,
    /// Observation years, comma-separated.
    #[arg(long, default_value = "2004,2005,2006,2007,2008")]
    observe: String,
    /// Benchmark year; must be one of the observation years. Later years are dropped.
    #[arg(long)]
    benchmark: Option<i32>,
}

enum Failure {
    /// Exit 1.
    Validation(String),
    /// Exit 2.
    Usage(String),
}

impl Failure {
    fn report(self) -> ExitCode {
        let (kind, code, message) = match self {
            Failure::Validation(m) => ("validation", 1, m),
            Failure::Usage(m) => ("usage", 2, m),
        };
        let line = serde_json::json!({ "status": "error", "kind": kind, "message": message });
        eprintln!("{line}");
        ExitCode::from(code)
    }
}

fn corpus_failure(e: CorpusError) -> Failure {
    match e {
        CorpusError::Io { .. } | CorpusError::Config(_) => Failure::Usage(e.to_string()),
        _ => Failure::Validation(e.to_string()),
    }
}

impl YearArgs {
    fn corpus_config(&self) -> Result<CorpusConfig, Failure> {
        let (a, b) = self
            .window
            .split_once(':')
            .ok_or_else(|| Failure::Usage(format!("--window must be start:end, got `{}`", self.window)))?;
        let year = |s: &str| {
            s.trim()
                .parse::<i32>()
                .map_err(|_| Failure::Usage(format!("`{s}` is not a year")))
        };
        let window = YearWindow::new(year(a)?, year(b)?);
        let mut observe = self.observe.split(',').map(year).collect::<Result<Vec<_>, _>>()?;
        if let Some(bench) = self.benchmark {
            if !observe.contains(&bench) {
                return Err(Failure::Usage(format!(
                    "benchmark year {bench} is not among the observation years {observe:?}"
                )));
            }
            observe.retain(|&y| y <= bench);
        }
        let config = CorpusConfig::new(window, observe);
        config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(config)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn simulate(config: Option<PathBuf>, out: Option<PathBuf>, print_default: bool) -> Result<(), Failure> {
    if print_default {
        print!("{}", SynthConfig::default().to_text());
        return Ok(());
    }
    let (config, out) = (config.expect("required by clap"), out.expect("required by clap"));
    let text = std::fs::read_to_string(&config).map_err(|e| Failure::Usage(format!("{}: {e}", config.display())))?;
    let cfg = SynthConfig::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", config.display())))?;
    let corpus = generate(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    corpus.write_dir(&out).map_err(|e| Failure::Usage(e.to_string()))?;
    eprintln!(
        "wrote {} researchers, {} publications to {}",
        corpus.researchers.len(),
        corpus.publications.len(),
        out.display()
    );
    Ok(())
}

fn load(paths: [&Path; 3], config: &CorpusConfig) -> Result<(citewin_core::Corpus, LoadReport), Failure> {
    for p in paths {
        if !p.exists() {
            return Err(Failure::Usage(format!("{}: file not found", p.display())));
        }
    }
    load_corpus(paths[0], paths[1], paths[2], config).map_err(corpus_failure)
}

#[allow(clippy::too_many_arguments)]
fn run_analyze(
    researchers: PathBuf,
    publications: PathBuf,
    citations: PathBuf,
    out: PathBuf,
    years: YearArgs,
    min_share: f64,
    min_members: usize,
    top: u8,
    counting: String,
    bins: Option<String>,
) -> Result<(), Failure> {
    let corpus_config = years.corpus_config()?;
    if !(0.0..=1.0).contains(&min_share) {
        return Err(Failure::Usage(format!(
            "--min-share must be within [0, 1], got {min_share}"
        )));
    }
    if top > 100 {
        return Err(Failure::Usage(format!("--top must be within [0, 100], got {top}")));
    }
    let counting: Counting = counting.parse().map_err(Failure::Usage)?;
    let bins = match bins {
        Some(b) => b.parse::<HistogramBins>().map_err(|e| Failure::Usage(e.to_string()))?,
        None => HistogramBins::default(),
    };
    let config = AnalysisConfig {
        corpus: corpus_config,
        thresholds: EligibilityThresholds {
            min_publishing_share: min_share,
            min_members,
        },
        top_percentile: top,
        counting,
        bins,
    };
    let (corpus, report) = load([&researchers, &publications, &citations], &config.corpus)?;
    let inputs = [&researchers, &publications, &citations]
        .iter()
        .map(|p| p.display().to_string())
        .collect();
    let analysis = analyze(&corpus, &config, inputs).map_err(|e| Failure::Validation(e.to_string()))?;
    analysis
        .write_reports(&out, &report)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    eprintln!(
        "analyzed {} researchers in {} SDSs; reports in {} ({:.0} ms)",
        analysis.manifest.analyzed.researchers,
        analysis.manifest.analyzed.sds,
        out.display(),
        analysis.timings.total_ms
    );
    Ok(())
}

fn validate(paths: Vec<PathBuf>, years: YearArgs, report_path: Option<PathBuf>) -> Result<(), Failure> {
    let config = years.corpus_config()?;
    let files: [PathBuf; 3] = match paths.as_slice() {
        [dir] if dir.is_dir() => [
            dir.join("researchers.csv"),
            dir.join("publications.csv"),
            dir.join("citations.csv"),
        ],
        [r, p, c] => [r.clone(), p.clone(), c.clone()],
        _ => {
            return Err(Failure::Usage(
                "expected a corpus directory or three files (researchers, publications, citations)".into(),
            ))
        }
    };
    let (_, report) = load([&files[0], &files[1], &files[2]], &config)?;
    let json = to_json(&report) + "\n";
    match report_path {
        Some(p) => write_file(&p, &json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            config,
            out,
            print_default_config,
        } => simulate(config, out, print_default_config),
        Command::Analyze {
            researchers,
            publications,
            citations,
            out,
            years,
            min_share,
            min_members,
            top,
            counting,
            bins,
        } => run_analyze(
            researchers,
            publications,
            citations,
            out,
            years,
            min_share,
            min_members,
            top,
            counting,
            bins,
        ),
        Command::Validate { paths, years, report } => validate(paths, years, report),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}

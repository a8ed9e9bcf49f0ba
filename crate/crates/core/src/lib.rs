//! Field-normalized researcher productivity rankings and their sensitivity to
//! the year in which citations are counted.
//!
//! The pipeline runs [`corpus`] → [`normalize`] → [`score`] → [`rank`] for
//! every observation year, then [`stability`] and [`toppersist`] compare each
//! early ranking with the benchmark ranking. [`synth`] produces seeded test
//! corpora and [`pipeline`] ties everything together.

pub mod corpus;
pub mod normal;
pub mod normalize;
pub mod pipeline;
pub mod rank;
pub mod score;
pub mod stability;
pub mod synth;
pub mod toppersist;

pub use corpus::{
    filter_eligible_sds, load_corpus, Corpus, CorpusConfig, CorpusError, EligibilityThresholds, LoadReport,
};
pub use normalize::{compute_medians, standardize_publication, BaselineTable};
pub use pipeline::{analyze, Analysis, AnalysisConfig, PipelineError};
pub use rank::{percentile_rank, quartile_class, top_scientist_flags, PercentileRanking, QuartileRanking};
pub use score::{compute_ss, Counting, ScientificStrength, ScoreTable};
pub use stability::{compute_shifts, quartile_transitions, shift_stats, ShiftRecord, ShiftStats, TransitionCounts};
pub use synth::{generate, SynthConfig, SynthCorpus};
pub use toppersist::{fit_probit, persistence_report, ProbitError, ProbitFit};

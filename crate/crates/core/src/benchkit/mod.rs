//! Multiple-choice benchmark construction: same-type distractors, letter
//! balancing, length buckets and distribution statistics.

mod mcq;
mod stats;
mod types;

pub use mcq::{balance_letters, build_benchmark, letter_counts, make_mcq, BuildReport, DistractorPool, McqConfig};
pub use stats::{stats, term_frequencies, write_terms_csv, BenchmarkStats, BucketCounts};
pub use types::{bucketize, normalize, LengthClass, Letter, McqItem, MinutesBucket};

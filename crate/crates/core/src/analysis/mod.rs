//! Evaluation, interpretability tools and benchmarking.

mod attention;
mod bench;
mod early_exit;
mod eval;
mod key;
mod letters;
mod ngram;
mod probe;

pub use attention::{export_attention, write_npy_f64, AttentionMaps};
pub use bench::{bench_inputs, hardware_string, throughput_bench, BenchReport, BenchSpec};
pub use early_exit::{early_exit_curve, early_exit_table, write_curve_csv, EarlyExitCurve, EarlyExitTable, LayerDecoding, LayerSer};
pub use eval::{
    eval_cipher, evaluate, percentile, summarize, Aggregate, Decoder, EvalReport, FrequencyRankDecoder, LengthBin,
    SequenceResult, BIN_EDGES, LONG_THRESHOLD,
};
pub use key::{recover_key, KeySummary, RecoveredKey};
pub use letters::{
    letter_error_profile, profile_from_ser, write_letter_profile_csv, write_letter_profile_long, LetterFrequencies,
    LetterProfile, LetterRow,
};
pub use ngram::{count_cosine, ngram_counts, ngram_cosine, similarity_matrix, NgramCounts, SimilarityMatrix};
pub use probe::{
    harvest_activations, probe_decode, probe_study, train_probe, Activations, Probe, ProbeKind, ProbeResult, ProbeSpec,
    ProbeStudy, ProbeTraining,
};

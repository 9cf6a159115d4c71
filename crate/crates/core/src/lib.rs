//! Post-hoc machinery for long-term action anticipation: weighted logit
//! ensembling, co-occurrence refinement of verb/noun predictions,
//! label-smoothed multi-head training, and best-of-K edit-distance
//! evaluation, plus a synthetic harness with planted structure.
//!
//! Pipeline: `logits (one or two models) -> combine_logits -> softmax_rows ->
//! generate_patterns (with CoocStats from a label corpus) -> evaluate_corpus`.

pub mod ensemble;
pub mod error;
pub mod io;
pub mod matrix;
pub mod metric;
pub mod refine;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod train;
pub mod vocab;

pub use ensemble::{combine_logits, softmax_rows, EnsembleWeights, LogitsTensor, StepDistributions};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use metric::{ed_at_k, edit_distance, evaluate_corpus, EvalFlags, EvalReport, MatchAxis};
pub use refine::{
    generate_patterns, refine_noun_step, refine_verb_step, FirstStepPolicy, PredictionConfig, PredictionSet, Refined,
    Tier,
};
pub use stats::{build_stats, CoocStats, IndicatorMode, SmoothingConfig};
pub use synth::{corrupt_to_logits, gen_markov_corpus, run_refinement_experiment, SynthConfig};
pub use train::{cross_entropy, smooth_labels, train, MultiHeadDecoder, TrainConfig, TrainExample};
pub use vocab::{validate_sequence, Action, ActionSequence, Axis, Vocabulary};

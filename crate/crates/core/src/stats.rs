//! Co-occurrence statistics over a label corpus and the two scores the
//! refinement step is built on: the consecutive-class transition indicator
//! and the verb-given-noun conditional.
//!
//! Marginals are pooled over every position of every sequence. Transition
//! counts only pair consecutive actions inside one sequence. Every count gets
//! `add_k` before normalization; probabilities are clamped into
//! `[prob_clamp_min, prob_clamp_max]` only when a score is evaluated, never
//! in storage.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::vocab::{validate_corpus, ActionSequence, Axis, Vocabulary};

/// Tolerance used when checking that stored rows are distributions.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// What to store for a conditional row whose context never occurs when
/// `add_k` is zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyRowPolicy {
    /// Store the uniform distribution.
    #[default]
    Uniform,
    /// Fail with [`Error::UnnormalizableRow`].
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub add_k: f64,
    pub prob_clamp_min: f64,
    pub prob_clamp_max: f64,
    #[serde(default)]
    pub empty_rows: EmptyRowPolicy,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            add_k: 1.0,
            prob_clamp_min: 1e-6,
            prob_clamp_max: 1.0 - 1e-6,
            empty_rows: EmptyRowPolicy::Uniform,
        }
    }
}

impl SmoothingConfig {
    pub fn with_add_k(add_k: f64) -> Self {
        Self {
            add_k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.add_k.is_finite() && self.add_k >= 0.0) {
            return Err(Error::InvalidConfig(format!("add_k must be >= 0, got {}", self.add_k)));
        }
        if !(self.prob_clamp_min > 0.0 && self.prob_clamp_min < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "prob_clamp_min must lie in (0, 0.5), got {}",
                self.prob_clamp_min
            )));
        }
        if !(self.prob_clamp_max > 0.5 && self.prob_clamp_max < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "prob_clamp_max must lie in (0.5, 1), got {}",
                self.prob_clamp_max
            )));
        }
        Ok(())
    }

    pub fn clamp(&self, p: f64) -> f64 {
        p.clamp(self.prob_clamp_min, self.prob_clamp_max)
    }
}

/// Which form of the normalized co-occurrence score to evaluate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorMode {
    /// `ln(c / (p_prev * p_next)) / -ln(c)` with the transition conditional
    /// `c = p(next | prev)` in both places.
    #[default]
    AsWritten,
    /// Textbook NPMI: the joint `p(prev, next) = p(next | prev) * p(prev)`
    /// replaces the conditional.
    StandardNpmi,
}

impl fmt::Display for IndicatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndicatorMode::AsWritten => "as_written",
            IndicatorMode::StandardNpmi => "standard_npmi",
        })
    }
}

impl std::str::FromStr for IndicatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as_written" => Ok(Self::AsWritten),
            "standard_npmi" => Ok(Self::StandardNpmi),
            other => Err(Error::InvalidConfig(format!("unknown indicator mode {other:?}"))),
        }
    }
}

/// The transition indicator from raw (unclamped) probabilities.
pub fn indicator(
    conditional: f64,
    prev_marginal: f64,
    next_marginal: f64,
    mode: IndicatorMode,
    smoothing: &SmoothingConfig,
) -> f64 {
    let m_prev = smoothing.clamp(prev_marginal);
    let m_next = smoothing.clamp(next_marginal);
    let c = match mode {
        IndicatorMode::AsWritten => smoothing.clamp(conditional),
        IndicatorMode::StandardNpmi => smoothing.clamp(conditional * prev_marginal),
    };
    (c / (m_prev * m_next)).ln() / -c.ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStats")]
pub struct CoocStats {
    pub c_verb: usize,
    pub c_noun: usize,
    pub verb_marginal: Vec<f64>,
    pub noun_marginal: Vec<f64>,
    /// `C_verb x C_verb`, row = previous verb.
    pub verb_transition: Matrix,
    /// `C_noun x C_noun`, row = previous noun.
    pub noun_transition: Matrix,
    /// `C_noun x C_verb`, row = noun.
    pub verb_given_noun: Matrix,
    pub smoothing: SmoothingConfig,
    pub corpus_fingerprint: String,
    #[serde(default)]
    pub sequence_count: usize,
    #[serde(default)]
    pub action_count: usize,
    #[serde(default)]
    pub bigram_count: usize,
}

#[derive(Deserialize)]
struct RawStats {
    c_verb: usize,
    c_noun: usize,
    verb_marginal: Vec<f64>,
    noun_marginal: Vec<f64>,
    verb_transition: Matrix,
    noun_transition: Matrix,
    verb_given_noun: Matrix,
    smoothing: SmoothingConfig,
    corpus_fingerprint: String,
    #[serde(default)]
    sequence_count: usize,
    #[serde(default)]
    action_count: usize,
    #[serde(default)]
    bigram_count: usize,
}

impl TryFrom<RawStats> for CoocStats {
    type Error = Error;

    fn try_from(raw: RawStats) -> Result<Self> {
        let stats = CoocStats {
            c_verb: raw.c_verb,
            c_noun: raw.c_noun,
            verb_marginal: raw.verb_marginal,
            noun_marginal: raw.noun_marginal,
            verb_transition: raw.verb_transition,
            noun_transition: raw.noun_transition,
            verb_given_noun: raw.verb_given_noun,
            smoothing: raw.smoothing,
            corpus_fingerprint: raw.corpus_fingerprint,
            sequence_count: raw.sequence_count,
            action_count: raw.action_count,
            bigram_count: raw.bigram_count,
        };
        stats.check()?;
        Ok(stats)
    }
}

/// Order-independent digest of a corpus: SHA-256 over the sorted canonical
/// JSON lines, each terminated by `\n`.
pub fn corpus_fingerprint(corpus: &[ActionSequence]) -> String {
    let mut lines: Vec<String> = corpus
        .iter()
        .map(|s| serde_json::to_string(s).expect("sequence serializes"))
        .collect();
    lines.sort_unstable();
    let mut hasher = Sha256::new();
    for line in &lines {
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

fn normalize(
    counts: &[f64],
    add_k: f64,
    policy: EmptyRowPolicy,
    table: &'static str,
    class: usize,
) -> Result<Vec<f64>> {
    let total: f64 = counts.iter().map(|c| c + add_k).sum();
    if total > 0.0 {
        return Ok(counts.iter().map(|c| (c + add_k) / total).collect());
    }
    match policy {
        EmptyRowPolicy::Uniform => Ok(vec![1.0 / counts.len() as f64; counts.len()]),
        EmptyRowPolicy::Reject => Err(Error::UnnormalizableRow { table, class }),
    }
}

fn normalize_rows(counts: &Matrix, cfg: &SmoothingConfig, table: &'static str) -> Result<Matrix> {
    let mut out = Matrix::zeros(counts.rows(), counts.cols());
    for r in 0..counts.rows() {
        let row = normalize(counts.row(r), cfg.add_k, cfg.empty_rows, table, r)?;
        out.row_mut(r).copy_from_slice(&row);
    }
    Ok(out)
}

/// Counts unigrams, within-sequence bigrams and verb/noun co-occurrences and
/// turns them into smoothed distributions.
pub fn build_stats(
    corpus: &[ActionSequence],
    verbs: &Vocabulary,
    nouns: &Vocabulary,
    cfg: &SmoothingConfig,
) -> Result<CoocStats> {
    build_stats_sized(corpus, verbs.len(), nouns.len(), cfg)
}

pub fn build_stats_sized(
    corpus: &[ActionSequence],
    c_verb: usize,
    c_noun: usize,
    cfg: &SmoothingConfig,
) -> Result<CoocStats> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    cfg.validate()?;
    validate_corpus(corpus, c_verb, c_noun)?;

    let mut verb_counts = vec![0.0; c_verb];
    let mut noun_counts = vec![0.0; c_noun];
    let mut verb_bigrams = Matrix::zeros(c_verb, c_verb);
    let mut noun_bigrams = Matrix::zeros(c_noun, c_noun);
    let mut noun_verb = Matrix::zeros(c_noun, c_verb);
    let mut action_count = 0;
    let mut bigram_count = 0;

    for seq in corpus {
        for a in &seq.actions {
            verb_counts[a.verb] += 1.0;
            noun_counts[a.noun] += 1.0;
            noun_verb.set(a.noun, a.verb, noun_verb.get(a.noun, a.verb) + 1.0);
        }
        for w in seq.actions.windows(2) {
            let (prev, next) = (w[0], w[1]);
            verb_bigrams.set(prev.verb, next.verb, verb_bigrams.get(prev.verb, next.verb) + 1.0);
            noun_bigrams.set(prev.noun, next.noun, noun_bigrams.get(prev.noun, next.noun) + 1.0);
        }
        action_count += seq.actions.len();
        bigram_count += seq.actions.len() - 1;
    }

    Ok(CoocStats {
        c_verb,
        c_noun,
        verb_marginal: normalize(&verb_counts, cfg.add_k, cfg.empty_rows, "verb_marginal", 0)?,
        noun_marginal: normalize(&noun_counts, cfg.add_k, cfg.empty_rows, "noun_marginal", 0)?,
        verb_transition: normalize_rows(&verb_bigrams, cfg, "verb_transition")?,
        noun_transition: normalize_rows(&noun_bigrams, cfg, "noun_transition")?,
        verb_given_noun: normalize_rows(&noun_verb, cfg, "verb_given_noun")?,
        smoothing: *cfg,
        corpus_fingerprint: corpus_fingerprint(corpus),
        sequence_count: corpus.len(),
        action_count,
        bigram_count,
    })
}

impl CoocStats {
    /// Assembles statistics from explicit tables, checking shapes and that
    /// every marginal and conditional row is a distribution.
    pub fn from_tables(
        verb_marginal: Vec<f64>,
        noun_marginal: Vec<f64>,
        verb_transition: Matrix,
        noun_transition: Matrix,
        verb_given_noun: Matrix,
        smoothing: SmoothingConfig,
    ) -> Result<Self> {
        let stats = CoocStats {
            c_verb: verb_marginal.len(),
            c_noun: noun_marginal.len(),
            verb_marginal,
            noun_marginal,
            verb_transition,
            noun_transition,
            verb_given_noun,
            smoothing,
            corpus_fingerprint: String::new(),
            sequence_count: 0,
            action_count: 0,
            bigram_count: 0,
        };
        stats.check()?;
        Ok(stats)
    }

    /// Uniform marginals and conditionals: every score is constant.
    pub fn uniform(c_verb: usize, c_noun: usize, smoothing: SmoothingConfig) -> Self {
        Self::from_tables(
            vec![1.0 / c_verb as f64; c_verb],
            vec![1.0 / c_noun as f64; c_noun],
            Matrix::filled(c_verb, c_verb, 1.0 / c_verb as f64),
            Matrix::filled(c_noun, c_noun, 1.0 / c_noun as f64),
            Matrix::filled(c_noun, c_verb, 1.0 / c_verb as f64),
            smoothing,
        )
        .expect("uniform tables are valid")
    }

    fn check(&self) -> Result<()> {
        self.smoothing.validate()?;
        if self.c_verb == 0 || self.c_noun == 0 {
            return Err(Error::InvalidConfig("class counts must be positive".into()));
        }
        let expect = [
            ("verb_marginal", (1, self.verb_marginal.len()), (1, self.c_verb)),
            ("noun_marginal", (1, self.noun_marginal.len()), (1, self.c_noun)),
            (
                "verb_transition",
                self.verb_transition.shape(),
                (self.c_verb, self.c_verb),
            ),
            (
                "noun_transition",
                self.noun_transition.shape(),
                (self.c_noun, self.c_noun),
            ),
            (
                "verb_given_noun",
                self.verb_given_noun.shape(),
                (self.c_noun, self.c_verb),
            ),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::ShapeMismatch {
                    left: format!("{name} {}x{}", got.0, got.1),
                    right: format!("expected {}x{}", want.0, want.1),
                });
            }
        }
        let rows = std::iter::once(("verb_marginal", 0, self.verb_marginal.as_slice()))
            .chain(std::iter::once(("noun_marginal", 0, self.noun_marginal.as_slice())))
            .chain(
                self.verb_transition
                    .iter_rows()
                    .enumerate()
                    .map(|(i, r)| ("verb_transition", i, r)),
            )
            .chain(
                self.noun_transition
                    .iter_rows()
                    .enumerate()
                    .map(|(i, r)| ("noun_transition", i, r)),
            )
            .chain(
                self.verb_given_noun
                    .iter_rows()
                    .enumerate()
                    .map(|(i, r)| ("verb_given_noun", i, r)),
            );
        for (name, i, row) in rows {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidConfig(format!(
                    "{name} row {i} has entries outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidConfig(format!("{name} row {i} sums to {sum}")));
            }
        }
        Ok(())
    }

    pub fn classes(&self, axis: Axis) -> usize {
        match axis {
            Axis::Verb => self.c_verb,
            Axis::Noun => self.c_noun,
        }
    }

    pub fn marginal(&self, axis: Axis) -> &[f64] {
        match axis {
            Axis::Verb => &self.verb_marginal,
            Axis::Noun => &self.noun_marginal,
        }
    }

    pub fn transition(&self, axis: Axis) -> &Matrix {
        match axis {
            Axis::Verb => &self.verb_transition,
            Axis::Noun => &self.noun_transition,
        }
    }

    /// Transition indicator for class `next` following class `prev` on
    /// `axis`. Always finite. Panics if an index is out of bounds.
    pub fn transition_score(&self, prev: usize, next: usize, axis: Axis, mode: IndicatorMode) -> f64 {
        let marginal = self.marginal(axis);
        indicator(
            self.transition(axis).get(prev, next),
            marginal[prev],
            marginal[next],
            mode,
            &self.smoothing,
        )
    }

    /// Stored `p(verb | noun)`, unclamped.
    pub fn verb_given_noun(&self, verb: usize, noun: usize) -> f64 {
        self.verb_given_noun.get(noun, verb)
    }

    pub fn check_index(&self, axis: Axis, index: usize) -> Result<()> {
        let classes = self.classes(axis);
        if index < classes {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { axis, index, classes })
        }
    }
}

//! Co-occurrence refinement of per-step distributions and generation of the
//! `K` output patterns.
//!
//! Pattern 0 is the per-step argmax of the unrefined distributions. Pattern 1
//! chains greedily through refined distributions: at each step the noun is
//! refined against the pattern's previous noun and decided first, then the
//! verb is refined against the previous verb and the noun just chosen.
//! Patterns 2.. follow the same chain but draw from the refined
//! distributions with one seeded stream, consumed in pattern order, step
//! order, noun before verb.

use serde::{Deserialize, Serialize};

use crate::ensemble::StepDistributions;
use crate::error::{Error, Result};
use crate::matrix::shape_str;
use crate::rng::SplitMix64;
use crate::stats::{CoocStats, IndicatorMode};
use crate::vocab::{Action, Axis};

/// How the first step of a refined pattern is handled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstStepPolicy {
    /// Use the raw distributions at the first step.
    #[default]
    Unrefined,
    /// Treat this action as the one preceding the first predicted step.
    SeedAction(Action),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictionConfig {
    pub z: usize,
    pub k: usize,
    pub rng_seed: u64,
    pub mode: IndicatorMode,
    pub first_step_policy: FirstStepPolicy,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            z: 20,
            k: 5,
            rng_seed: 0,
            mode: IndicatorMode::AsWritten,
            first_step_policy: FirstStepPolicy::Unrefined,
        }
    }
}

impl PredictionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.z == 0 || self.k == 0 {
            return Err(Error::InvalidConfig(format!(
                "z and k must be positive (z={}, k={})",
                self.z, self.k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    RawArgmax,
    RefinedArgmax,
    RefinedSampled,
}

impl Tier {
    pub fn for_pattern(index: usize) -> Self {
        match index {
            0 => Tier::RawArgmax,
            1 => Tier::RefinedArgmax,
            _ => Tier::RefinedSampled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub example_id: String,
    pub patterns: Vec<Vec<Action>>,
    pub tiers: Vec<Tier>,
}

impl PredictionSet {
    /// The first `k` patterns only.
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            example_id: self.example_id.clone(),
            patterns: self.patterns.iter().take(k).cloned().collect(),
            tiers: self.tiers.iter().take(k).copied().collect(),
        }
    }
}

/// A refined distribution, or the untouched input when gating removed all
/// probability mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub probs: Vec<f64>,
    pub fallback_used: bool,
}

/// `probs[i] * max(0, scores[i])`, renormalized. When nothing survives the
/// gate the input is returned unchanged with `fallback_used` set.
pub fn apply_scores(probs: &[f64], scores: &[f64]) -> Refined {
    debug_assert_eq!(probs.len(), scores.len());
    let gated: Vec<f64> = probs.iter().zip(scores).map(|(p, s)| p * s.max(0.0)).collect();
    let total: f64 = gated.iter().sum();
    if total > 0.0 && total.is_finite() {
        Refined {
            probs: gated.into_iter().map(|x| x / total).collect(),
            fallback_used: false,
        }
    } else {
        Refined {
            probs: probs.to_vec(),
            fallback_used: true,
        }
    }
}

/// `P_n * relu(f_noun(prev_noun, n))`, renormalized.
pub fn refine_noun_step(noun_probs: &[f64], prev_noun: usize, stats: &CoocStats, mode: IndicatorMode) -> Refined {
    let scores: Vec<f64> = (0..noun_probs.len())
        .map(|n| stats.transition_score(prev_noun, n, Axis::Noun, mode))
        .collect();
    apply_scores(noun_probs, &scores)
}

/// `P_v * relu(f_verb(prev_verb, v)) * p(v | selected_noun)`, renormalized.
/// The conditional is nonnegative, so it folds into the gated score.
pub fn refine_verb_step(
    verb_probs: &[f64],
    prev_verb: usize,
    selected_noun: usize,
    stats: &CoocStats,
    mode: IndicatorMode,
) -> Refined {
    let scores: Vec<f64> = (0..verb_probs.len())
        .map(|v| {
            stats.transition_score(prev_verb, v, Axis::Verb, mode).max(0.0) * stats.verb_given_noun(v, selected_noun)
        })
        .collect();
    apply_scores(verb_probs, &scores)
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw over class index order.
pub fn sample_index(probs: &[f64], rng: &mut SplitMix64) -> usize {
    let total: f64 = probs.iter().sum();
    let u = rng.next_f64() * total;
    let mut cumulative = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    // rounding left u at the top edge: take the last class with mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Per-step argmax of the unrefined distributions.
pub fn raw_argmax_pattern(dists: &StepDistributions) -> Vec<Action> {
    (0..dists.steps())
        .map(|z| Action::new(argmax(dists.verb_probs.row(z)), argmax(dists.noun_probs.row(z))))
        .collect()
}

enum Choice<'a> {
    Greedy,
    Sampled(&'a mut SplitMix64),
}

impl Choice<'_> {
    fn pick(&mut self, probs: &[f64]) -> usize {
        match self {
            Choice::Greedy => argmax(probs),
            Choice::Sampled(rng) => sample_index(probs, rng),
        }
    }
}

fn refined_pattern(
    dists: &StepDistributions,
    stats: &CoocStats,
    cfg: &PredictionConfig,
    mut choice: Choice<'_>,
) -> Vec<Action> {
    let mut prev = match cfg.first_step_policy {
        FirstStepPolicy::Unrefined => None,
        FirstStepPolicy::SeedAction(a) => Some(a),
    };
    let mut pattern = Vec::with_capacity(dists.steps());
    for z in 0..dists.steps() {
        let noun_row = dists.noun_probs.row(z);
        let verb_row = dists.verb_probs.row(z);
        let action = match prev {
            None => {
                let noun = choice.pick(noun_row);
                let verb = choice.pick(verb_row);
                Action::new(verb, noun)
            }
            Some(p) => {
                let nouns = refine_noun_step(noun_row, p.noun, stats, cfg.mode);
                let noun = choice.pick(&nouns.probs);
                let verbs = refine_verb_step(verb_row, p.verb, noun, stats, cfg.mode);
                let verb = choice.pick(&verbs.probs);
                Action::new(verb, noun)
            }
        };
        pattern.push(action);
        prev = Some(action);
    }
    pattern
}

/// Produces the `K` patterns for one example.
pub fn generate_patterns(
    dists: &StepDistributions,
    stats: &CoocStats,
    cfg: &PredictionConfig,
) -> Result<PredictionSet> {
    cfg.validate()?;
    if dists.verb_probs.rows() != cfg.z || dists.noun_probs.rows() != cfg.z {
        return Err(Error::ShapeMismatch {
            left: format!(
                "distributions verb {} / noun {}",
                shape_str(&dists.verb_probs),
                shape_str(&dists.noun_probs)
            ),
            right: format!("z = {}", cfg.z),
        });
    }
    if dists.verb_probs.cols() != stats.c_verb || dists.noun_probs.cols() != stats.c_noun {
        return Err(Error::ShapeMismatch {
            left: format!(
                "distributions over {} verbs / {} nouns",
                dists.verb_probs.cols(),
                dists.noun_probs.cols()
            ),
            right: format!("stats over {} verbs / {} nouns", stats.c_verb, stats.c_noun),
        });
    }
    if let FirstStepPolicy::SeedAction(a) = cfg.first_step_policy {
        stats.check_index(Axis::Verb, a.verb)?;
        stats.check_index(Axis::Noun, a.noun)?;
    }

    let mut patterns = Vec::with_capacity(cfg.k);
    patterns.push(raw_argmax_pattern(dists));
    if cfg.k >= 2 {
        patterns.push(refined_pattern(dists, stats, cfg, Choice::Greedy));
    }
    let mut rng = SplitMix64::new(cfg.rng_seed);
    for _ in 2..cfg.k {
        patterns.push(refined_pattern(dists, stats, cfg, Choice::Sampled(&mut rng)));
    }
    Ok(PredictionSet {
        example_id: dists.example_id.clone(),
        tiers: (0..cfg.k).map(Tier::for_pattern).collect(),
        patterns,
    })
}

/// A single-pattern prediction set that never consults statistics.
pub fn raw_prediction_set(dists: &StepDistributions) -> PredictionSet {
    PredictionSet {
        example_id: dists.example_id.clone(),
        patterns: vec![raw_argmax_pattern(dists)],
        tiers: vec![Tier::RawArgmax],
    }
}

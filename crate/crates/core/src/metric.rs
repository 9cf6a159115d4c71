//! Edit-distance evaluation: per-axis distance of the best of `K` patterns,
//! normalized by the ground-truth length and averaged over examples.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::refine::PredictionSet;
use crate::vocab::{Action, ActionSequence, Axis};

/// Which part of an action is compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchAxis {
    Verb,
    Noun,
    /// The full `(verb, noun)` pair; a half-correct pair is a mismatch.
    Action,
}

impl MatchAxis {
    pub const ALL: [MatchAxis; 3] = [MatchAxis::Verb, MatchAxis::Noun, MatchAxis::Action];

    fn project(self, a: Action) -> (usize, usize) {
        match self {
            MatchAxis::Verb => (a.on(Axis::Verb), 0),
            MatchAxis::Noun => (a.on(Axis::Noun), 0),
            MatchAxis::Action => (a.verb, a.noun),
        }
    }
}

/// Levenshtein distance, or Damerau-Levenshtein when `allow_transposition`
/// is set (insertions, deletions, substitutions and swaps of adjacent
/// symbols, each of cost 1, with no restriction on editing a substring more
/// than once).
pub fn edit_distance<T: Eq + Hash>(a: &[T], b: &[T], allow_transposition: bool) -> usize {
    if allow_transposition {
        damerau_levenshtein(a, b)
    } else {
        levenshtein(a, b)
    }
}

fn levenshtein<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

// Lowrance-Wagner recurrence. Row/column 0 of `d` is the sentinel
// "infinity" border, so string index i lives at d[i + 1].
fn damerau_levenshtein<T: Eq + Hash>(a: &[T], b: &[T]) -> usize {
    let (n, m) = (a.len(), b.len());
    let inf = n + m;
    let width = m + 2;
    let mut d = vec![0usize; (n + 2) * width];
    let at = |i: usize, j: usize| i * width + j;
    d[at(0, 0)] = inf;
    for i in 0..=n {
        d[at(i + 1, 0)] = inf;
        d[at(i + 1, 1)] = i;
    }
    for j in 0..=m {
        d[at(0, j + 1)] = inf;
        d[at(1, j + 1)] = j;
    }
    // last row (1-based) in which each symbol of `a` occurred
    let mut last_row: HashMap<&T, usize> = HashMap::new();
    for i in 1..=n {
        let mut last_match_col = 0;
        for j in 1..=m {
            let k = last_row.get(&b[j - 1]).copied().unwrap_or(0);
            let l = last_match_col;
            let cost = if a[i - 1] == b[j - 1] {
                last_match_col = j;
                0
            } else {
                1
            };
            let best = (d[at(i, j)] + cost)
                .min(d[at(i + 1, j)] + 1)
                .min(d[at(i, j + 1)] + 1)
                .min(d[at(k, l)] + (i - k - 1) + 1 + (j - l - 1));
            d[at(i + 1, j + 1)] = best;
        }
        last_row.insert(&a[i - 1], i);
    }
    d[at(n + 1, m + 1)]
}

/// Best-of-`K` normalized distance on one axis.
pub fn ed_at_k(
    preds: &PredictionSet,
    truth: &ActionSequence,
    axis: MatchAxis,
    allow_transposition: bool,
) -> Result<f64> {
    let z = truth.len();
    if z == 0 {
        return Err(Error::LengthMismatch(0, 0));
    }
    if preds.patterns.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "example {}: prediction set has no patterns",
            preds.example_id
        )));
    }
    let target: Vec<(usize, usize)> = truth.actions.iter().map(|&a| axis.project(a)).collect();
    let mut best = usize::MAX;
    for pattern in &preds.patterns {
        if pattern.len() != z {
            return Err(Error::LengthMismatch(pattern.len(), z));
        }
        let projected: Vec<(usize, usize)> = pattern.iter().map(|&a| axis.project(a)).collect();
        best = best.min(edit_distance(&projected, &target, allow_transposition));
    }
    Ok(best as f64 / z as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalFlags {
    pub allow_transposition: bool,
}

impl Default for EvalFlags {
    fn default() -> Self {
        Self {
            allow_transposition: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub example_id: String,
    pub ed_verb: f64,
    pub ed_noun: f64,
    pub ed_action: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ed_verb: f64,
    pub ed_noun: f64,
    pub ed_action: f64,
    pub n_examples: usize,
    pub unmatched: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub unmatched_ids: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_example: Option<Vec<ExampleScore>>,
}

/// Scores every prediction set whose `example_id` has a ground truth.
/// Unmatched predictions are counted and skipped. Per-example scores are
/// always kept; callers drop them when not wanted.
pub fn evaluate_corpus(pred_sets: &[PredictionSet], truths: &[ActionSequence], flags: EvalFlags) -> Result<EvalReport> {
    let by_id: HashMap<&str, &ActionSequence> = truths.iter().map(|t| (t.episode_id.as_str(), t)).collect();
    let mut per_example = Vec::with_capacity(pred_sets.len());
    let mut unmatched_ids = Vec::new();
    for preds in pred_sets {
        let Some(truth) = by_id.get(preds.example_id.as_str()) else {
            unmatched_ids.push(preds.example_id.clone());
            continue;
        };
        let score = |axis| ed_at_k(preds, truth, axis, flags.allow_transposition);
        per_example.push(ExampleScore {
            example_id: preds.example_id.clone(),
            ed_verb: score(MatchAxis::Verb)?,
            ed_noun: score(MatchAxis::Noun)?,
            ed_action: score(MatchAxis::Action)?,
        });
    }
    if per_example.is_empty() {
        return Err(Error::NoMatchedExamples);
    }
    let n = per_example.len() as f64;
    let mean = |f: fn(&ExampleScore) -> f64| per_example.iter().map(f).sum::<f64>() / n;
    Ok(EvalReport {
        ed_verb: mean(|e| e.ed_verb),
        ed_noun: mean(|e| e.ed_noun),
        ed_action: mean(|e| e.ed_action),
        n_examples: per_example.len(),
        unmatched: unmatched_ids.len(),
        unmatched_ids,
        per_example: Some(per_example),
    })
}

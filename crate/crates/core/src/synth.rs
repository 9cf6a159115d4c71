//! Synthetic corpora with planted sequential structure, noisy logits derived
//! from ground truth, and an end-to-end refinement experiment.
//!
//! Generative model: nouns follow a Markov chain whose rows put weight
//! `transition_sharpness` on one designated successor and weight 1 on every
//! other class. Each verb is drawn given the current noun from a table that
//! mixes a designated verb (weight `verb_noun_coupling`) with the uniform
//! distribution. Verb-to-verb structure is therefore induced through the
//! nouns; the planted verb transition table is the exact ratio of expected
//! bigram counts under this model, so empirical counts converge to it.

use serde::{Deserialize, Serialize};

use crate::ensemble::{softmax_rows, LogitsTensor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metric::{evaluate_corpus, EvalFlags, EvalReport};
use crate::refine::{generate_patterns, PredictionConfig, PredictionSet};
use crate::rng::{derive_seed, SplitMix64};
use crate::stats::{build_stats_sized, SmoothingConfig};
use crate::vocab::{Action, ActionSequence};

// Stream tags so corpus, noise and sampling never share a PRNG stream.
const CORPUS_STREAM: u64 = 0x636f_7270;
const NOISE_STREAM: u64 = 0x6e6f_6973;
const TABLE_STREAM: u64 = 0x7461_626c;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub c_verb: usize,
    pub c_noun: usize,
    pub num_sequences: usize,
    pub seq_len: usize,
    pub transition_sharpness: f64,
    pub verb_noun_coupling: f64,
    pub logit_noise_sigma: f64,
    pub logit_scale: f64,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            c_verb: 5,
            c_noun: 5,
            num_sequences: 200,
            seq_len: 20,
            transition_sharpness: 1.0,
            verb_noun_coupling: 0.0,
            logit_noise_sigma: 1.0,
            logit_scale: 1.0,
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    /// Sharpness that puts `mass` on the designated successor of a row over
    /// `classes` classes: `s / (s + classes - 1) = mass`.
    pub fn sharpness_for_mass(mass: f64, classes: usize) -> f64 {
        mass * (classes as f64 - 1.0) / (1.0 - mass)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.c_verb == 0 || self.c_noun == 0 || self.num_sequences == 0 {
            return bad("class counts and num_sequences must be >= 1".into());
        }
        if self.seq_len < 2 {
            return bad(format!("seq_len must be >= 2, got {}", self.seq_len));
        }
        if !(self.transition_sharpness >= 1.0 && self.transition_sharpness.is_finite()) {
            return bad(format!(
                "transition_sharpness must be >= 1, got {}",
                self.transition_sharpness
            ));
        }
        if !(0.0..=1.0).contains(&self.verb_noun_coupling) {
            return bad(format!(
                "verb_noun_coupling must lie in [0, 1], got {}",
                self.verb_noun_coupling
            ));
        }
        if !(self.logit_noise_sigma >= 0.0 && self.logit_noise_sigma.is_finite()) {
            return bad(format!(
                "logit_noise_sigma must be >= 0, got {}",
                self.logit_noise_sigma
            ));
        }
        if !(self.logit_scale > 0.0 && self.logit_scale.is_finite()) {
            return bad(format!("logit_scale must be > 0, got {}", self.logit_scale));
        }
        Ok(())
    }
}

/// Ground-truth tables of the generative model, in [`crate::stats::CoocStats`]
/// layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTables {
    pub noun_successor: Vec<usize>,
    pub designated_verb: Vec<usize>,
    pub noun_transition: Matrix,
    pub verb_given_noun: Matrix,
    pub verb_transition: Matrix,
    pub verb_marginal: Vec<f64>,
    pub noun_marginal: Vec<f64>,
}

fn planted_rows(cfg: &SynthConfig, rng: &mut SplitMix64) -> (Vec<usize>, Vec<usize>, Matrix, Matrix) {
    let mut successor: Vec<usize> = (0..cfg.c_noun).collect();
    rng.shuffle(&mut successor);
    let mut verbs: Vec<usize> = (0..cfg.c_verb).collect();
    rng.shuffle(&mut verbs);
    let designated_verb: Vec<usize> = (0..cfg.c_noun).map(|n| verbs[n % cfg.c_verb]).collect();

    let total = cfg.transition_sharpness + (cfg.c_noun as f64 - 1.0);
    let mut noun_transition = Matrix::filled(cfg.c_noun, cfg.c_noun, 1.0 / total);
    for (r, &s) in successor.iter().enumerate() {
        noun_transition.set(r, s, cfg.transition_sharpness / total);
    }
    let uniform = (1.0 - cfg.verb_noun_coupling) / cfg.c_verb as f64;
    let mut verb_given_noun = Matrix::filled(cfg.c_noun, cfg.c_verb, uniform);
    for (n, &v) in designated_verb.iter().enumerate() {
        verb_given_noun.set(n, v, uniform + cfg.verb_noun_coupling);
    }
    (successor, designated_verb, noun_transition, verb_given_noun)
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Expected pooled marginals and verb bigram table for sequences that start
/// from a uniform noun.
fn expected_tables(cfg: &SynthConfig, nt: &Matrix, g: &Matrix) -> (Vec<f64>, Vec<f64>, Matrix) {
    let (cn, cv) = (cfg.c_noun, cfg.c_verb);
    let mut pos = vec![1.0 / cn as f64; cn];
    let mut noun_mass = vec![0.0; cn];
    let mut verb_mass = vec![0.0; cv];
    let mut bigrams = Matrix::zeros(cv, cv);
    for z in 0..cfg.seq_len {
        for (n, &p) in pos.iter().enumerate() {
            noun_mass[n] += p;
            for (v, mass) in verb_mass.iter_mut().enumerate() {
                *mass += p * g.get(n, v);
            }
        }
        if z + 1 == cfg.seq_len {
            break;
        }
        for (n, &p) in pos.iter().enumerate() {
            for n2 in 0..cn {
                let w = p * nt.get(n, n2);
                if w == 0.0 {
                    continue;
                }
                for a in 0..cv {
                    let wa = w * g.get(n, a);
                    for b in 0..cv {
                        bigrams.set(a, b, bigrams.get(a, b) + wa * g.get(n2, b));
                    }
                }
            }
        }
        let mut next = vec![0.0; cn];
        for (n, &p) in pos.iter().enumerate() {
            for (n2, x) in next.iter_mut().enumerate() {
                *x += p * nt.get(n, n2);
            }
        }
        pos = next;
    }
    for a in 0..cv {
        let row = normalized(bigrams.row(a).to_vec());
        bigrams.row_mut(a).copy_from_slice(&row);
    }
    (normalized(verb_mass), normalized(noun_mass), bigrams)
}

fn draw(row: &[f64], rng: &mut SplitMix64) -> usize {
    crate::refine::sample_index(row, rng)
}

pub fn episode_id(index: usize) -> String {
    format!("ep{index:05}")
}

/// Samples the planted tables and `num_sequences` sequences. Sequence `i`
/// uses its own stream derived from `(rng_seed, i)`.
pub fn gen_markov_corpus(cfg: &SynthConfig) -> Result<(Vec<ActionSequence>, PlantedTables)> {
    cfg.validate()?;
    let mut table_rng = SplitMix64::new(derive_seed(cfg.rng_seed, TABLE_STREAM));
    let (noun_successor, designated_verb, noun_transition, verb_given_noun) = planted_rows(cfg, &mut table_rng);

    let corpus_seed = derive_seed(cfg.rng_seed, CORPUS_STREAM);
    let corpus = (0..cfg.num_sequences)
        .map(|i| {
            let mut rng = SplitMix64::stream(corpus_seed, i as u64);
            let mut noun = rng.below(cfg.c_noun);
            let mut actions = Vec::with_capacity(cfg.seq_len);
            for z in 0..cfg.seq_len {
                if z > 0 {
                    noun = draw(noun_transition.row(noun), &mut rng);
                }
                let verb = draw(verb_given_noun.row(noun), &mut rng);
                actions.push(Action::new(verb, noun));
            }
            ActionSequence::new(episode_id(i), actions)
        })
        .collect();

    let (verb_marginal, noun_marginal, verb_transition) = expected_tables(cfg, &noun_transition, &verb_given_noun);
    Ok((
        corpus,
        PlantedTables {
            noun_successor,
            designated_verb,
            noun_transition,
            verb_given_noun,
            verb_transition,
            verb_marginal,
            noun_marginal,
        },
    ))
}

/// `scale * onehot(truth) + N(0, sigma^2)` per entry; verb rows first, then
/// noun rows, row-major.
pub fn corrupt_to_logits(
    truth: &ActionSequence,
    c_verb: usize,
    c_noun: usize,
    sigma: f64,
    scale: f64,
    seed: u64,
) -> Result<LogitsTensor> {
    if sigma.is_nan() || sigma < 0.0 || scale.is_nan() || scale <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "need sigma >= 0 and scale > 0, got {sigma}, {scale}"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let mut noisy = |ids: Vec<usize>, classes: usize| {
        let mut m = Matrix::zeros(ids.len(), classes);
        for (z, &id) in ids.iter().enumerate() {
            for c in 0..classes {
                let signal = if c == id { scale } else { 0.0 };
                let noise = if sigma > 0.0 { sigma * rng.gaussian() } else { 0.0 };
                m.set(z, c, signal + noise);
            }
        }
        m
    };
    let verb_logits = noisy(truth.ids(crate::vocab::Axis::Verb).collect(), c_verb);
    let noun_logits = noisy(truth.ids(crate::vocab::Axis::Noun).collect(), c_noun);
    LogitsTensor::new(truth.episode_id.clone(), verb_logits, noun_logits)
}

/// Even-indexed sequences train, odd-indexed sequences evaluate.
pub fn split_by_parity(corpus: &[ActionSequence]) -> (Vec<ActionSequence>, Vec<ActionSequence>) {
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for (i, seq) in corpus.iter().enumerate() {
        if i % 2 == 0 {
            train.push(seq.clone());
        } else {
            eval.push(seq.clone());
        }
    }
    (train, eval)
}

/// The first `z` actions of each held-out sequence.
pub fn future_truths(eval: &[ActionSequence], z: usize) -> Result<Vec<ActionSequence>> {
    eval.iter()
        .map(|s| {
            if s.len() < z {
                return Err(Error::InvalidConfig(format!(
                    "sequence {} has {} actions, need z = {z}",
                    s.episode_id,
                    s.len()
                )));
            }
            Ok(ActionSequence::new(s.episode_id.clone(), s.actions[..z].to_vec()))
        })
        .collect()
}

/// Noisy logits for every truth. `model` selects an independent noise
/// stream so several simulated models can be produced.
pub fn truths_to_logits(truths: &[ActionSequence], cfg: &SynthConfig, model: u64) -> Result<Vec<LogitsTensor>> {
    let noise_seed = derive_seed(derive_seed(cfg.rng_seed, NOISE_STREAM), model);
    truths
        .iter()
        .enumerate()
        .map(|(i, t)| {
            corrupt_to_logits(
                t,
                cfg.c_verb,
                cfg.c_noun,
                cfg.logit_noise_sigma,
                cfg.logit_scale,
                derive_seed(noise_seed, i as u64),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdTriple {
    pub verb: f64,
    pub noun: f64,
    pub action: f64,
}

impl From<&EvalReport> for EdTriple {
    fn from(r: &EvalReport) -> Self {
        Self {
            verb: r.ed_verb,
            noun: r.ed_noun,
            action: r.ed_action,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode_id: String,
    pub raw_action: f64,
    pub refined_argmax_action: Option<f64>,
    pub full_action: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub synth: SynthConfig,
    pub prediction: PredictionConfig,
    pub n_train: usize,
    pub n_eval: usize,
    /// Pattern 0 alone: per-step argmax without refinement.
    pub raw: EdTriple,
    /// Pattern 1 alone, when `K >= 2`.
    pub refined_argmax: Option<EdTriple>,
    /// Best of all `K` patterns.
    pub full: EdTriple,
    /// `raw - full`; positive means the refined set helps.
    pub delta: EdTriple,
    pub episodes: Vec<EpisodeRow>,
}

fn only_pattern(set: &PredictionSet, index: usize) -> PredictionSet {
    PredictionSet {
        example_id: set.example_id.clone(),
        patterns: vec![set.patterns[index].clone()],
        tiers: vec![set.tiers[index]],
    }
}

/// Builds statistics on the even split, corrupts the odd split into logits,
/// decodes, and compares pattern 0 alone against the full `K`-pattern set.
pub fn run_refinement_experiment(cfg: &SynthConfig, pred_cfg: &PredictionConfig) -> Result<ExperimentReport> {
    pred_cfg.validate()?;
    let (corpus, _) = gen_markov_corpus(cfg)?;
    let (train, eval) = split_by_parity(&corpus);
    if eval.is_empty() {
        return Err(Error::InvalidConfig(
            "need at least two sequences for a train/eval split".into(),
        ));
    }
    let stats = build_stats_sized(&train, cfg.c_verb, cfg.c_noun, &SmoothingConfig::default())?;
    let truths = future_truths(&eval, pred_cfg.z)?;
    let logits = truths_to_logits(&truths, cfg, 0)?;

    let sets = logits
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let per_episode = PredictionConfig {
                rng_seed: derive_seed(pred_cfg.rng_seed, i as u64),
                ..*pred_cfg
            };
            generate_patterns(&softmax_rows(l), &stats, &per_episode)
        })
        .collect::<Result<Vec<_>>>()?;

    let flags = EvalFlags::default();
    let raw_sets: Vec<PredictionSet> = sets.iter().map(|s| only_pattern(s, 0)).collect();
    let raw = evaluate_corpus(&raw_sets, &truths, flags)?;
    let full = evaluate_corpus(&sets, &truths, flags)?;
    let refined = if pred_cfg.k >= 2 {
        let one: Vec<PredictionSet> = sets.iter().map(|s| only_pattern(s, 1)).collect();
        Some(evaluate_corpus(&one, &truths, flags)?)
    } else {
        None
    };

    let per = |r: &EvalReport| r.per_example.clone().unwrap_or_default();
    let (raw_rows, full_rows) = (per(&raw), per(&full));
    let refined_rows = refined.as_ref().map(per);
    let episodes = raw_rows
        .iter()
        .zip(&full_rows)
        .enumerate()
        .map(|(i, (r, f))| EpisodeRow {
            episode_id: r.example_id.clone(),
            raw_action: r.ed_action,
            refined_argmax_action: refined_rows.as_ref().map(|rows| rows[i].ed_action),
            full_action: f.ed_action,
        })
        .collect();

    let raw_t = EdTriple::from(&raw);
    let full_t = EdTriple::from(&full);
    Ok(ExperimentReport {
        synth: *cfg,
        prediction: *pred_cfg,
        n_train: train.len(),
        n_eval: truths.len(),
        raw: raw_t,
        refined_argmax: refined.as_ref().map(EdTriple::from),
        full: full_t,
        delta: EdTriple {
            verb: raw_t.verb - full_t.verb,
            noun: raw_t.noun - full_t.noun,
            action: raw_t.action - full_t.action,
        },
        episodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refine::argmax;
    use crate::vocab::validate_corpus;

    #[test]
    fn sharpness_one_is_uniform() {
        let cfg = SynthConfig {
            c_noun: 4,
            ..Default::default()
        };
        let (_, planted) = gen_markov_corpus(&cfg).unwrap();
        assert!(planted
            .noun_transition
            .as_slice()
            .iter()
            .all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn sharpness_for_mass_hits_target() {
        let s = SynthConfig::sharpness_for_mass(0.9, 5);
        assert!((s / (s + 4.0) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_corpus() {
        let cfg = SynthConfig {
            transition_sharpness: 10.0,
            rng_seed: 4,
            ..Default::default()
        };
        assert_eq!(gen_markov_corpus(&cfg).unwrap(), gen_markov_corpus(&cfg).unwrap());
        let other = SynthConfig { rng_seed: 5, ..cfg };
        assert_ne!(gen_markov_corpus(&cfg).unwrap().0, gen_markov_corpus(&other).unwrap().0);
    }

    #[test]
    fn corpus_validates() {
        let cfg = SynthConfig {
            c_verb: 3,
            c_noun: 7,
            ..Default::default()
        };
        let (corpus, _) = gen_markov_corpus(&cfg).unwrap();
        validate_corpus(&corpus, 3, 7).unwrap();
        assert_eq!(corpus.len(), 200);
    }

    #[test]
    fn planted_tables_are_stochastic() {
        let cfg = SynthConfig {
            transition_sharpness: 30.0,
            verb_noun_coupling: 0.7,
            c_verb: 3,
            ..Default::default()
        };
        let (_, p) = gen_markov_corpus(&cfg).unwrap();
        for m in [&p.noun_transition, &p.verb_given_noun, &p.verb_transition] {
            for row in m.iter_rows() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_logits_decode_to_truth() {
        let truth = ActionSequence::new("t", vec![Action::new(2, 0), Action::new(0, 3), Action::new(1, 1)]);
        let l = corrupt_to_logits(&truth, 3, 4, 0.0, 1.0, 9).unwrap();
        for (z, a) in truth.actions.iter().enumerate() {
            assert_eq!(argmax(l.verb_logits.row(z)), a.verb);
            assert_eq!(argmax(l.noun_logits.row(z)), a.noun);
        }
        assert_eq!(l, corrupt_to_logits(&truth, 3, 4, 0.0, 1.0, 9).unwrap());
        let noisy = corrupt_to_logits(&truth, 3, 4, 1.0, 1.0, 9).unwrap();
        assert_eq!(noisy, corrupt_to_logits(&truth, 3, 4, 1.0, 1.0, 9).unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig {
            seq_len: 1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            transition_sharpness: 0.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            verb_noun_coupling: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}

//! Class vocabularies, actions and ground-truth action sequences.
//!
//! Class ids are dense array indices: id `i` of a vocabulary is column `i`
//! of every logit or probability row on that axis. Verb and noun vocabularies
//! are independent; an action is always the `(verb, noun)` pair.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One class axis of an action label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Verb,
    Noun,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Verb => "verb",
            Axis::Noun => "noun",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawVocabulary")]
pub struct Vocabulary {
    kind: Axis,
    names: Vec<String>,
}

#[derive(Deserialize)]
struct RawVocabulary {
    kind: Axis,
    names: Vec<String>,
}

impl TryFrom<RawVocabulary> for Vocabulary {
    type Error = Error;

    fn try_from(raw: RawVocabulary) -> Result<Self> {
        Vocabulary::new(raw.kind, raw.names)
    }
}

impl Vocabulary {
    pub fn new(kind: Axis, names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidVocabulary(format!("{kind} vocabulary has no classes")));
        }
        let mut seen = HashSet::with_capacity(names.len());
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidVocabulary(format!(
                    "duplicate {kind} class name {name:?}"
                )));
            }
        }
        Ok(Self { kind, names })
    }

    /// A vocabulary with generated names `verb_0`, `verb_1`, ...
    pub fn numbered(kind: Axis, classes: usize) -> Result<Self> {
        Self::new(kind, (0..classes).map(|i| format!("{kind}_{i}")).collect())
    }

    pub fn kind(&self) -> Axis {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// A `(verb, noun)` pair. Serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Action {
    pub verb: usize,
    pub noun: usize,
}

impl Action {
    pub const fn new(verb: usize, noun: usize) -> Self {
        Self { verb, noun }
    }

    pub fn on(self, axis: Axis) -> usize {
        match axis {
            Axis::Verb => self.verb,
            Axis::Noun => self.noun,
        }
    }
}

impl From<(usize, usize)> for Action {
    fn from((verb, noun): (usize, usize)) -> Self {
        Self { verb, noun }
    }
}

impl From<Action> for (usize, usize) {
    fn from(a: Action) -> Self {
        (a.verb, a.noun)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSequence {
    pub episode_id: String,
    pub actions: Vec<Action>,
}

impl ActionSequence {
    pub fn new(episode_id: impl Into<String>, actions: Vec<Action>) -> Self {
        Self {
            episode_id: episode_id.into(),
            actions,
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn ids(&self, axis: Axis) -> impl Iterator<Item = usize> + '_ {
        self.actions.iter().map(move |a| a.on(axis))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptySequence,
    OutOfRange {
        position: usize,
        axis: Axis,
        index: usize,
        classes: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySequence => f.write_str("empty sequence"),
            Violation::OutOfRange {
                position,
                axis,
                index,
                classes,
            } => write!(
                f,
                "position {position}: {axis} id {index} out of range for {classes} classes"
            ),
        }
    }
}

/// Checks every action of `seq` against the vocabularies. Violations are
/// returned as data, in position order, verb before noun.
pub fn validate_sequence(
    seq: &ActionSequence,
    verbs: &Vocabulary,
    nouns: &Vocabulary,
) -> std::result::Result<(), Vec<Violation>> {
    validate_sequence_sizes(seq, verbs.len(), nouns.len())
}

pub fn validate_sequence_sizes(
    seq: &ActionSequence,
    c_verb: usize,
    c_noun: usize,
) -> std::result::Result<(), Vec<Violation>> {
    if seq.actions.is_empty() {
        return Err(vec![Violation::EmptySequence]);
    }
    let mut violations = Vec::new();
    for (position, action) in seq.actions.iter().enumerate() {
        for (axis, index, classes) in [(Axis::Verb, action.verb, c_verb), (Axis::Noun, action.noun, c_noun)] {
            if index >= classes {
                violations.push(Violation::OutOfRange {
                    position,
                    axis,
                    index,
                    classes,
                });
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Validates a whole corpus, failing on the first bad episode.
pub fn validate_corpus(corpus: &[ActionSequence], c_verb: usize, c_noun: usize) -> Result<()> {
    for seq in corpus {
        if let Err(violations) = validate_sequence_sizes(seq, c_verb, c_noun) {
            let detail = violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::InvalidSequence {
                episode_id: seq.episode_id.clone(),
                detail,
            });
        }
    }
    Ok(())
}

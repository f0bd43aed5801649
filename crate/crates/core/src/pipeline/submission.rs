//! Submission files and their validator.
//!
//! A submission uses the concepts-file layout. Each line may carry at most
//! [`MAX_CONCEPTS`] distinct concepts and each sample id may appear once.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::label_space::{ConceptId, LabelVocabulary};
use crate::metrics::check_threshold;

use super::concepts::{lines, split_line};

/// Upper bound on concepts per image.
pub const MAX_CONCEPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubmissionRecord {
    sample_id: String,
    concepts: Vec<ConceptId>,
}

impl SubmissionRecord {
    pub fn new(sample_id: impl Into<String>, concepts: Vec<ConceptId>) -> Result<Self> {
        let sample_id = sample_id.into();
        super::concepts::check_sample_id(&sample_id).map_err(Error::InvalidArgument)?;
        if concepts.is_empty() || concepts.len() > MAX_CONCEPTS {
            return Err(Error::invalid(format!(
                "record {sample_id:?} has {} concepts, expected 1..={MAX_CONCEPTS}",
                concepts.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = concepts.iter().find(|c| !seen.insert(*c)) {
            return Err(Error::invalid(format!(
                "record {sample_id:?} repeats concept {dup}"
            )));
        }
        Ok(SubmissionRecord {
            sample_id,
            concepts,
        })
    }

    pub fn sample_id(&self) -> &str {
        &self.sample_id
    }

    pub fn concepts(&self) -> &[ConceptId] {
        &self.concepts
    }
}

/// Canonical submission text: records sorted by sample id, LF-terminated.
pub fn submission_text(records: &[SubmissionRecord]) -> Result<String> {
    let mut sorted: Vec<&SubmissionRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].sample_id == w[1].sample_id) {
        return Err(Error::DuplicateSample(w[0].sample_id.clone()));
    }
    let mut out = String::new();
    for r in sorted {
        out.push_str(&r.sample_id);
        out.push('\t');
        let joined: Vec<&str> = r.concepts.iter().map(ConceptId::as_str).collect();
        out.push_str(&joined.join(";"));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_submission(path: impl AsRef<Path>, records: &[SubmissionRecord]) -> Result<()> {
    let path = path.as_ref();
    let text = submission_text(records)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Turns sigmoid scores into submission records.
///
/// Labels at or above `threshold` are kept. When more than [`MAX_CONCEPTS`]
/// qualify, the highest-scoring ones are kept (ties to the lower concept id).
/// A row with no label above threshold falls back to its single best label, so
/// every record is non-empty. Concepts are listed in vocabulary order.
pub fn records_from_scores(
    sample_ids: &[String],
    scores: ArrayView2<f64>,
    vocab: &LabelVocabulary,
    threshold: f64,
) -> Result<Vec<SubmissionRecord>> {
    check_threshold(threshold)?;
    if scores.nrows() != sample_ids.len() {
        return Err(Error::LengthMismatch {
            expected: sample_ids.len(),
            actual: scores.nrows(),
        });
    }
    if scores.ncols() != vocab.len() {
        return Err(Error::LengthMismatch {
            expected: vocab.len(),
            actual: scores.ncols(),
        });
    }
    sample_ids
        .iter()
        .zip(scores.rows())
        .map(|(id, row)| {
            let mut ranked: Vec<usize> = (0..row.len()).collect();
            // stable: equal scores stay in ascending concept order
            ranked.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
            let above = ranked.iter().take_while(|&&i| row[i] >= threshold).count();
            let mut keep: Vec<usize> = ranked[..above.clamp(1, MAX_CONCEPTS)].to_vec();
            keep.sort_unstable();
            let concepts = keep
                .into_iter()
                .map(|i| vocab.concepts()[i].clone())
                .collect();
            SubmissionRecord::new(id.clone(), concepts)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    Malformed(String),
    NoConcepts,
    InvalidConcept(String),
    ConceptLimitExceeded(usize),
    RepeatedConcept(String),
    RepeatedSample,
    UnknownConcept(String),
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::Malformed(m) => write!(f, "malformed line: {m}"),
            ViolationKind::NoConcepts => write!(f, "no concepts"),
            ViolationKind::InvalidConcept(c) => write!(f, "invalid concept {c:?}"),
            ViolationKind::ConceptLimitExceeded(n) => {
                write!(f, "concept limit exceeded ({n} > {MAX_CONCEPTS})")
            }
            ViolationKind::RepeatedConcept(c) => write!(f, "repeated concept {c}"),
            ViolationKind::RepeatedSample => write!(f, "repeated sample id"),
            ViolationKind::UnknownConcept(c) => write!(f, "unknown concept {c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub line: usize,
    pub sample_id: Option<String>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.sample_id {
            Some(id) => write!(f, "line {} ({id}): {}", self.line, self.kind),
            None => write!(f, "line {}: {}", self.line, self.kind),
        }
    }
}

/// All rule violations in a submission text; empty means valid.
pub fn validate_submission_text(text: &str, vocab: Option<&LabelVocabulary>) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut ids = HashSet::new();
    for (n, line) in lines(text) {
        if line.is_empty() {
            continue;
        }
        let mut push = |sample_id: Option<&str>, kind| {
            violations.push(Violation {
                line: n,
                sample_id: sample_id.map(str::to_owned),
                kind,
            })
        };
        let (id, raw) = match split_line(line) {
            Ok(parts) => parts,
            Err(m) => {
                push(None, ViolationKind::Malformed(m));
                continue;
            }
        };
        if !ids.insert(id.clone()) {
            push(Some(&id), ViolationKind::RepeatedSample);
        }
        if raw.is_empty() {
            push(Some(&id), ViolationKind::NoConcepts);
        }
        if raw.len() > MAX_CONCEPTS {
            push(Some(&id), ViolationKind::ConceptLimitExceeded(raw.len()));
        }
        let mut seen = HashSet::new();
        for token in &raw {
            let Ok(concept) = ConceptId::new(token.as_str()) else {
                push(Some(&id), ViolationKind::InvalidConcept(token.clone()));
                continue;
            };
            if !seen.insert(token.as_str()) {
                push(Some(&id), ViolationKind::RepeatedConcept(token.clone()));
            } else if vocab.is_some_and(|v| !v.contains(&concept)) {
                push(Some(&id), ViolationKind::UnknownConcept(token.clone()));
            }
        }
    }
    violations
}

pub fn validate_submission(
    path: impl AsRef<Path>,
    vocab: Option<&LabelVocabulary>,
) -> Result<Vec<Violation>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(validate_submission_text(&text, vocab))
}

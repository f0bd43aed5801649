//! Concept vocabulary, multi one-hot label vectors and dataset-level label statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::FeatureData;

/// Opaque identifier of one concept (e.g. a UMLS CUI such as `C0040398`).
///
/// Ordering is byte-lexicographic, which is what the vocabulary sorts by.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConceptId(String);

impl ConceptId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let valid = !id.is_empty()
            && !id
                .chars()
                .any(|c| c.is_whitespace() || c == ';' || c == '\t');
        if valid {
            Ok(ConceptId(id))
        } else {
            Err(Error::InvalidConcept(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for ConceptId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConceptId::new(s)
    }
}

impl AsRef<str> for ConceptId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Image modality categories, taken from the dataset's sub-directory names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    /// Angiography
    Dran,
    /// Combined modalities in one image
    Drco,
    /// Computerized tomography
    Drct,
    /// Magnetic resonance
    Drmr,
    /// Positron emission tomography
    Drpe,
    /// Ultrasound
    Drus,
    /// X-ray, 2D tomography
    Drxr,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Dran,
        Category::Drco,
        Category::Drct,
        Category::Drmr,
        Category::Drpe,
        Category::Drus,
        Category::Drxr,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Category::Dran => "DRAN",
            Category::Drco => "DRCO",
            Category::Drct => "DRCT",
            Category::Drmr => "DRMR",
            Category::Drpe => "DRPE",
            Category::Drus => "DRUS",
            Category::Drxr => "DRXR",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.code() == s)
            .ok_or_else(|| Error::invalid(format!("unknown category {s:?}")))
    }
}

/// Sorted set of unique concepts with a position index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocabulary {
    concepts: Vec<ConceptId>,
    index: HashMap<ConceptId, usize>,
}

impl LabelVocabulary {
    /// Builds a vocabulary from a list that must already be strictly ascending.
    pub fn from_sorted(concepts: Vec<ConceptId>) -> Result<Self> {
        if concepts.is_empty() {
            return Err(Error::NoConcepts);
        }
        if let Some(w) = concepts.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "vocabulary not strictly ascending at {:?}, {:?}",
                w[0].as_str(),
                w[1].as_str()
            )));
        }
        let index = concepts
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        Ok(LabelVocabulary { concepts, index })
    }

    /// Number of concepts, `k`.
    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn concepts(&self) -> &[ConceptId] {
        &self.concepts
    }

    pub fn get(&self, position: usize) -> Option<&ConceptId> {
        self.concepts.get(position)
    }

    pub fn position(&self, concept: &ConceptId) -> Option<usize> {
        self.index.get(concept).copied()
    }

    pub fn contains(&self, concept: &ConceptId) -> bool {
        self.index.contains_key(concept)
    }

    /// Multi one-hot encoding of a label set.
    pub fn encode<'a, I>(&self, labels: I) -> Result<MultiHotVector>
    where
        I: IntoIterator<Item = &'a ConceptId>,
    {
        let mut bits = vec![0u8; self.len()];
        for label in labels {
            let pos = self
                .position(label)
                .ok_or_else(|| Error::UnknownConcept(label.0.clone()))?;
            bits[pos] = 1;
        }
        Ok(MultiHotVector { bits })
    }

    /// Concepts at the positions holding a one.
    pub fn decode(&self, vec: &MultiHotVector) -> Result<BTreeSet<ConceptId>> {
        if vec.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: vec.len(),
            });
        }
        Ok(vec.ones().map(|i| self.concepts[i].clone()).collect())
    }

    /// Hex SHA-256 over the newline-joined concept list; identifies the label space
    /// a checkpoint was trained against.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for c in &self.concepts {
            hasher.update(c.as_str().as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

/// Deduplicated union of the given label sets, sorted by bytes.
pub fn build_vocabulary<'a, I, S>(label_sets: I) -> Result<LabelVocabulary>
where
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = &'a ConceptId>,
{
    let union: BTreeSet<ConceptId> = label_sets.into_iter().flatten().cloned().collect();
    LabelVocabulary::from_sorted(union.into_iter().collect())
}

/// Fixed-length 0/1 vector over a vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiHotVector {
    bits: Vec<u8>,
}

impl MultiHotVector {
    pub fn zeros(len: usize) -> Self {
        MultiHotVector { bits: vec![0; len] }
    }

    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::invalid(format!(
                "multi-hot element {b} is not 0 or 1"
            )));
        }
        Ok(MultiHotVector { bits })
    }

    pub fn from_bools(bits: impl IntoIterator<Item = bool>) -> Self {
        MultiHotVector {
            bits: bits.into_iter().map(u8::from).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i] == 1
    }

    pub fn set(&mut self, i: usize, on: bool) {
        self.bits[i] = u8::from(on);
    }

    /// Number of positive labels (`|Y_i|`).
    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    /// Indices of positive labels, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| i)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| f64::from(b)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub sample_id: String,
    pub features: FeatureData,
    pub labels: MultiHotVector,
    pub category: Option<Category>,
}

/// A labelled collection `D` over one vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    vocabulary: LabelVocabulary,
    samples: Vec<LabeledSample>,
}

impl Dataset {
    /// Checks that every sample matches the vocabulary length, that sample ids are
    /// unique, and that all feature payloads share one shape.
    pub fn new(vocabulary: LabelVocabulary, samples: Vec<LabeledSample>) -> Result<Self> {
        let k = vocabulary.len();
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if s.labels.len() != k {
                return Err(Error::LengthMismatch {
                    expected: k,
                    actual: s.labels.len(),
                });
            }
            if !seen.insert(s.sample_id.as_str()) {
                return Err(Error::DuplicateSample(s.sample_id.clone()));
            }
        }
        if let Some(first) = samples.first() {
            let shape = first.features.shape();
            if let Some(bad) = samples.iter().find(|s| s.features.shape() != shape) {
                return Err(Error::invalid(format!(
                    "sample {:?} has feature shape {:?}, expected {:?}",
                    bad.sample_id,
                    bad.features.shape(),
                    shape
                )));
            }
        }
        Ok(Dataset {
            vocabulary,
            samples,
        })
    }

    pub fn vocabulary(&self) -> &LabelVocabulary {
        &self.vocabulary
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<LabeledSample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Flattened feature dimension, or `None` for an empty dataset.
    pub fn feature_dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.features.dim())
    }

    /// Decoded label set of every sample, in order.
    pub fn label_sets(&self) -> Vec<BTreeSet<ConceptId>> {
        self.samples
            .iter()
            .map(|s| {
                s.labels
                    .ones()
                    .map(|i| self.vocabulary.concepts[i].clone())
                    .collect()
            })
            .collect()
    }

    /// Subset of samples whose ids are in `ids`, keeping this dataset's order.
    pub fn subset(&self, ids: &HashSet<String>) -> Dataset {
        Dataset {
            vocabulary: self.vocabulary.clone(),
            samples: self
                .samples
                .iter()
                .filter(|s| ids.contains(&s.sample_id))
                .cloned()
                .collect(),
        }
    }
}

fn total_labels(d: &Dataset) -> u64 {
    d.samples.iter().map(|s| s.labels.count_ones() as u64).sum()
}

/// Mean number of labels per sample.
pub fn label_cardinality(d: &Dataset) -> Result<f64> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(total_labels(d) as f64 / d.len() as f64)
}

/// Label cardinality divided by the vocabulary size.
pub fn label_density(d: &Dataset) -> Result<f64> {
    Ok(label_cardinality(d)? / d.vocabulary.len() as f64)
}

/// Per-concept sample counts, descending by count with ties broken by ascending
/// concept id, truncated to `top_n`. Concepts that never occur are omitted.
pub fn concept_frequency_histogram(d: &Dataset, top_n: usize) -> Result<Vec<(ConceptId, usize)>> {
    if top_n == 0 {
        return Err(Error::invalid("top_n must be at least 1"));
    }
    let mut counts = vec![0usize; d.vocabulary.len()];
    for s in &d.samples {
        for i in s.labels.ones() {
            counts[i] += 1;
        }
    }
    // positions are already in ascending concept order, so a stable sort keeps the tie rule
    let mut ranked: Vec<(usize, usize)> = counts
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| c > 0)
        .collect();
    ranked.sort_by_key(|e| std::cmp::Reverse(e.1));
    ranked.truncate(top_n);
    Ok(ranked
        .into_iter()
        .map(|(i, c)| (d.vocabulary.concepts[i].clone(), c))
        .collect())
}

/// Number of samples having exactly `c` labels, for `1 <= c <= max_count`.
pub fn cui_count_histogram(d: &Dataset, max_count: usize) -> Result<BTreeMap<usize, usize>> {
    if max_count == 0 {
        return Err(Error::invalid("max_count must be at least 1"));
    }
    let mut hist = BTreeMap::new();
    for s in &d.samples {
        let c = s.labels.count_ones();
        if (1..=max_count).contains(&c) {
            *hist.entry(c).or_insert(0) += 1;
        }
    }
    Ok(hist)
}

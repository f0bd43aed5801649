//! Ground-truth concepts files: `sample_id<TAB>C1;C2;...`, one sample per line.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::label_space::{build_vocabulary, ConceptId, Dataset, LabelVocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConceptsFile {
    rows: Vec<(String, Vec<ConceptId>)>,
}

pub(crate) fn check_sample_id(id: &str) -> std::result::Result<(), String> {
    if id.is_empty() {
        return Err("empty sample id".into());
    }
    if id
        .chars()
        .any(|c| c.is_whitespace() || c.is_control() || c == '/' || c == '\\')
    {
        return Err(format!("invalid sample id {id:?}"));
    }
    Ok(())
}

/// Splits one line into its sample id and raw concept tokens (duplicates kept).
pub(crate) fn split_line(line: &str) -> std::result::Result<(String, Vec<String>), String> {
    let (id, rest) = line
        .split_once('\t')
        .ok_or_else(|| "expected sample_id<TAB>concepts".to_string())?;
    check_sample_id(id)?;
    let concepts = if rest.is_empty() {
        Vec::new()
    } else {
        rest.split(';').map(str::to_owned).collect()
    };
    Ok((id.to_owned(), concepts))
}

pub(crate) fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
}

impl ConceptsFile {
    /// Builds a file from rows, deduplicating each concept list (first occurrence
    /// wins) and rejecting repeated sample ids or empty lists.
    pub fn new(rows: Vec<(String, Vec<ConceptId>)>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(rows.len());
        for (id, concepts) in rows {
            check_sample_id(&id).map_err(Error::InvalidArgument)?;
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateSample(id));
            }
            if concepts.is_empty() {
                return Err(Error::invalid(format!("sample {id:?} has no concepts")));
            }
            let mut uniq = HashSet::new();
            let concepts = concepts
                .into_iter()
                .filter(|c| uniq.insert(c.clone()))
                .collect();
            out.push((id, concepts));
        }
        Ok(ConceptsFile { rows: out })
    }

    pub fn from_dataset(d: &Dataset) -> Self {
        let rows = d
            .samples()
            .iter()
            .zip(d.label_sets())
            .map(|(s, set)| (s.sample_id.clone(), set.into_iter().collect()))
            .collect();
        ConceptsFile { rows }
    }

    pub fn rows(&self) -> &[(String, Vec<ConceptId>)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, sample_id: &str) -> Option<&[ConceptId]> {
        self.rows
            .iter()
            .find(|(id, _)| id == sample_id)
            .map(|(_, c)| c.as_slice())
    }

    pub fn sample_ids(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|(id, _)| id.as_str())
    }

    pub fn vocabulary(&self) -> Result<LabelVocabulary> {
        build_vocabulary(self.rows.iter().map(|(_, c)| c.iter()))
    }

    pub fn label_sets(&self) -> Vec<BTreeSet<ConceptId>> {
        self.rows
            .iter()
            .map(|(_, c)| c.iter().cloned().collect())
            .collect()
    }

    /// Canonical text: rows sorted by sample id, LF-terminated.
    pub fn to_text(&self) -> String {
        let mut rows: Vec<&(String, Vec<ConceptId>)> = self.rows.iter().collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out = String::new();
        for (id, concepts) in rows {
            out.push_str(id);
            out.push('\t');
            let joined: Vec<&str> = concepts.iter().map(ConceptId::as_str).collect();
            out.push_str(&joined.join(";"));
            out.push('\n');
        }
        out
    }
}

pub fn parse_concepts(text: &str, path: &Path) -> Result<ConceptsFile> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_owned(),
        line,
        message,
    };
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in lines(text) {
        if line.is_empty() {
            continue;
        }
        let (id, raw) = split_line(line).map_err(|m| parse_err(n, m))?;
        if raw.is_empty() {
            return Err(parse_err(n, format!("sample {id:?} has no concepts")));
        }
        if !seen.insert(id.clone()) {
            return Err(parse_err(n, format!("repeated sample id {id:?}")));
        }
        let concepts = raw
            .into_iter()
            .map(ConceptId::new)
            .collect::<Result<Vec<_>>>()
            .map_err(|e| parse_err(n, e.to_string()))?;
        rows.push((id, concepts));
    }
    if rows.is_empty() {
        return Err(Error::Format {
            path: path.to_owned(),
            message: "empty concepts file".into(),
        });
    }
    ConceptsFile::new(rows)
}

pub fn read_concepts(path: impl AsRef<Path>) -> Result<ConceptsFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_concepts(&text, path)
}

pub fn write_concepts(path: impl AsRef<Path>, file: &ConceptsFile) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, file.to_text()).map_err(|e| Error::io(path, e))
}

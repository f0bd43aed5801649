//! Dataset directories.
//!
//! ```text
//! root/
//!   concepts.tsv            ground truth, drives which samples are loaded
//!   <id>.pgm | features.csv samples without a category
//!   DRCT/<id>.pgm           samples grouped by category code
//!   DRXR/features.csv
//! ```
//!
//! Sample ids are PGM file stems or the first CSV column. Directories whose
//! names are not category codes are ignored, as are samples that the concepts
//! file does not mention.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::label_space::{Category, ConceptId, Dataset, LabelVocabulary, LabeledSample};
use crate::model::FeatureData;

use super::concepts::{check_sample_id, read_concepts, write_concepts, ConceptsFile};
use super::pgm::{read_pgm, write_pgm};
use super::{CONCEPTS_FILE, FEATURES_FILE};

/// An unlabelled input found under a dataset root.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSample {
    pub sample_id: String,
    pub features: FeatureData,
    pub category: Option<Category>,
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

fn read_features_csv(path: &Path) -> Result<Vec<(String, FeatureData)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message,
        };
        let mut fields = line.split(',');
        let id = fields.next().unwrap_or_default().trim().to_owned();
        check_sample_id(&id).map_err(err)?;
        let values = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| err(format!("bad feature value {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let features = FeatureData::vector(values).map_err(|e| err(e.to_string()))?;
        rows.push((id, features));
    }
    Ok(rows)
}

fn scan_dir(
    dir: &Path,
    category: Option<Category>,
    out: &mut Vec<(InputSample, PathBuf)>,
) -> Result<()> {
    for path in read_dir_sorted(dir)? {
        if path.is_dir() {
            if category.is_none() {
                let name = path
                    .file_name()
                    .and_then(|n| n.to_str())
                    .unwrap_or_default();
                if let Ok(cat) = name.parse::<Category>() {
                    scan_dir(&path, Some(cat), out)?;
                }
            }
            continue;
        }
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if name == FEATURES_FILE {
            for (sample_id, features) in read_features_csv(&path)? {
                out.push((
                    InputSample {
                        sample_id,
                        features,
                        category,
                    },
                    path.clone(),
                ));
            }
        } else if path.extension().is_some_and(|e| e == "pgm") {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default();
            check_sample_id(stem).map_err(|m| Error::Format {
                path: path.clone(),
                message: m,
            })?;
            out.push((
                InputSample {
                    sample_id: stem.to_owned(),
                    features: read_pgm(&path)?,
                    category,
                },
                path.clone(),
            ));
        }
    }
    Ok(())
}

/// Every sample under `root`, ordered by ascending sample id.
pub fn load_inputs(root: impl AsRef<Path>) -> Result<Vec<InputSample>> {
    let root = root.as_ref();
    let mut found = Vec::new();
    scan_dir(root, None, &mut found)?;
    let mut by_id: BTreeMap<String, (InputSample, PathBuf)> = BTreeMap::new();
    for (sample, path) in found {
        if let Some((_, first)) = by_id.get(&sample.sample_id) {
            return Err(Error::Format {
                path,
                message: format!(
                    "sample {:?} also defined in {}",
                    sample.sample_id,
                    first.display()
                ),
            });
        }
        by_id.insert(sample.sample_id.clone(), (sample, path));
    }
    Ok(by_id.into_values().map(|(s, _)| s).collect())
}

/// Loads `root` labelled by `root/concepts.tsv`.
pub fn load_dataset(root: impl AsRef<Path>, vocab: Option<&LabelVocabulary>) -> Result<Dataset> {
    let root = root.as_ref();
    load_dataset_with(root, root.join(CONCEPTS_FILE), vocab)
}

/// Loads the samples of `root` listed in `concepts_path`.
///
/// Without `vocab` the vocabulary is built from the listed labels; with it, any
/// label outside the vocabulary is an error.
pub fn load_dataset_with(
    root: impl AsRef<Path>,
    concepts_path: impl AsRef<Path>,
    vocab: Option<&LabelVocabulary>,
) -> Result<Dataset> {
    let root = root.as_ref();
    let concepts = read_concepts(concepts_path.as_ref())?;
    let vocabulary = match vocab {
        Some(v) => v.clone(),
        None => concepts.vocabulary()?,
    };
    let mut inputs: HashMap<String, InputSample> = load_inputs(root)?
        .into_iter()
        .map(|s| (s.sample_id.clone(), s))
        .collect();
    let mut rows: Vec<&(String, Vec<ConceptId>)> = concepts.rows().iter().collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let mut samples = Vec::with_capacity(rows.len());
    for (id, labels) in rows {
        let input = inputs.remove(id).ok_or_else(|| Error::Format {
            path: root.to_owned(),
            message: format!("no sample file for {id:?}"),
        })?;
        let labels = vocabulary.encode(labels)?;
        samples.push(LabeledSample {
            sample_id: input.sample_id,
            features: input.features,
            labels,
            category: input.category,
        });
    }
    Dataset::new(vocabulary, samples)
}

fn format_row(id: &str, values: &[f64]) -> String {
    let mut line = id.to_owned();
    for v in values {
        // Debug formatting is the shortest string that parses back exactly
        line.push_str(&format!(",{v:?}"));
    }
    line.push('\n');
    line
}

/// Writes `d` in the layout [`load_dataset`] reads. Image intensities are stored
/// at 8 bits, so only datasets already on the 1/255 grid survive a round trip
/// unchanged.
pub fn write_dataset(root: impl AsRef<Path>, d: &Dataset) -> Result<()> {
    let root = root.as_ref();
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut csv_rows: BTreeMap<Option<Category>, String> = BTreeMap::new();
    let mut made_dirs = BTreeSet::new();
    for s in d.samples() {
        let dir = match s.category {
            Some(c) => root.join(c.code()),
            None => root.to_owned(),
        };
        if made_dirs.insert(dir.clone()) {
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        match &s.features {
            FeatureData::Image { .. } => {
                write_pgm(dir.join(format!("{}.pgm", s.sample_id)), &s.features)?
            }
            FeatureData::Vector(v) => csv_rows
                .entry(s.category)
                .or_default()
                .push_str(&format_row(&s.sample_id, v)),
        }
    }
    for (cat, text) in csv_rows {
        let path = match cat {
            Some(c) => root.join(c.code()).join(FEATURES_FILE),
            None => root.join(FEATURES_FILE),
        };
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    write_concepts(root.join(CONCEPTS_FILE), &ConceptsFile::from_dataset(d))
}

//! File formats and dataset ingestion.
//!
//! | file | layout |
//! |------|--------|
//! | concepts / submission | `sample_id<TAB>C1;C2;...` per line, UTF-8, LF, sorted by sample id |
//! | image sample | binary PGM (`P5`, maxval 255), intensities mapped to `[0, 1]` |
//! | vector samples | `features.csv`, one `sample_id,v1,v2,...` row per sample |
//! | training config | flat `key=value` lines, `#` comments |
//! | history | CSV `epoch,train_loss,val_loss,val_f1,lr` |
//! | checkpoint | see [`checkpoint`] |

pub mod checkpoint;
pub mod concepts;
pub mod config;
pub mod dataset_io;
pub mod pgm;
pub mod reports;
pub mod submission;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use concepts::{read_concepts, write_concepts, ConceptsFile};
pub use config::{parse_config, TrainSettings};
pub use dataset_io::{load_dataset, load_dataset_with, load_inputs, write_dataset, InputSample};
pub use reports::{format_g17, write_history_csv};
pub use submission::{
    records_from_scores, validate_submission, write_submission, SubmissionRecord, Violation,
    ViolationKind, MAX_CONCEPTS,
};

/// Name of the ground-truth file inside a dataset directory.
pub const CONCEPTS_FILE: &str = "concepts.tsv";
/// Name of the vector-feature file inside a dataset (or category) directory.
pub const FEATURES_FILE: &str = "features.csv";

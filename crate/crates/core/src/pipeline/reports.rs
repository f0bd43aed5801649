//! CSV reports: training history and label statistics.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::label_space::{
    concept_frequency_histogram, cui_count_histogram, label_cardinality, label_density, ConceptId,
    Dataset,
};
use crate::training::EpochRecord;

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,val_f1,lr";

/// Formats like C's `%.17g`: 17 significant digits, trailing zeros trimmed,
/// exponent form outside `1e-4 <= |x| < 1e17`.
pub fn format_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.16e}", x.abs());
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let sign = if x < 0.0 { "-" } else { "" };
    if !(-4..17).contains(&exp) {
        let (head, tail) = digits.split_at(1);
        let tail = tail.trim_end_matches('0');
        let frac = if tail.is_empty() {
            String::new()
        } else {
            format!(".{tail}")
        };
        let esign = if exp < 0 { '-' } else { '+' };
        return format!("{sign}{head}{frac}e{esign}{:02}", exp.abs());
    }
    let body = if exp >= 0 {
        let split = exp as usize + 1;
        let (int, frac) = digits.split_at(split);
        let frac = frac.trim_end_matches('0');
        if frac.is_empty() {
            int.to_owned()
        } else {
            format!("{int}.{frac}")
        }
    } else {
        let zeros = "0".repeat((-exp - 1) as usize);
        format!("0.{zeros}{}", digits.trim_end_matches('0'))
    };
    format!("{sign}{body}")
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch,
            format_g17(r.train_loss),
            format_g17(r.val_loss),
            format_g17(r.val_f1),
            format_g17(r.learning_rate)
        ));
    }
    out
}

pub fn write_history_csv(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, history_csv(history)).map_err(|e| Error::io(path, e))
}

/// Label statistics of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub samples: usize,
    pub concepts: usize,
    pub label_cardinality: f64,
    pub label_density: f64,
    pub top_concepts: Vec<(ConceptId, usize)>,
    pub count_histogram: BTreeMap<usize, usize>,
}

impl StatsReport {
    pub fn compute(d: &Dataset, top_n: usize, max_count: usize) -> Result<Self> {
        Ok(StatsReport {
            samples: d.len(),
            concepts: d.vocabulary().len(),
            label_cardinality: label_cardinality(d)?,
            label_density: label_density(d)?,
            top_concepts: concept_frequency_histogram(d, top_n)?,
            count_histogram: cui_count_histogram(d, max_count)?,
        })
    }

    /// `metric,value` rows.
    pub fn summary_csv(&self) -> String {
        format!(
            "metric,value\nsamples,{}\nconcepts,{}\nlabel_cardinality,{:?}\nlabel_density,{:?}\n",
            self.samples, self.concepts, self.label_cardinality, self.label_density
        )
    }

    /// `concept,images` rows, most frequent first.
    pub fn frequency_csv(&self) -> String {
        let mut out = String::from("concept,images\n");
        for (c, n) in &self.top_concepts {
            out.push_str(&format!("{c},{n}\n"));
        }
        out
    }

    /// `concept_count,images` rows, ascending count.
    pub fn count_csv(&self) -> String {
        let mut out = String::from("concept_count,images\n");
        for (c, n) in &self.count_histogram {
            out.push_str(&format!("{c},{n}\n"));
        }
        out
    }
}

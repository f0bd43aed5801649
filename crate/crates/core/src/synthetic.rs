//! Generated multi-label tasks with known structure, used by tests and examples.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::label_space::{ConceptId, Dataset, LabelVocabulary, LabeledSample, MultiHotVector};
use crate::model::FeatureData;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub features: usize,
    pub labels: usize,
    /// Target mean number of positive labels per sample.
    pub mean_labels: f64,
    /// Minimum distance of every sample from every label's decision hyperplane.
    pub margin: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            samples: 500,
            features: 32,
            labels: 16,
            mean_labels: 3.0,
            margin: 0.25,
        }
    }
}

/// Probability `p` with `labels * p / (1 - (1 - p)^labels) = mean`, the mean
/// label count of independent Bernoulli(p) labels conditioned on at least one.
fn label_rate(labels: usize, mean: f64) -> f64 {
    let cond_mean = |p: f64| labels as f64 * p / (1.0 - (1.0 - p).powi(labels as i32));
    let (mut lo, mut hi) = (1e-12, 1.0 - 1e-12);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cond_mean(mid) < mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Linearly separable multi-label data.
///
/// Label `j` owns a direction `w_j`; the directions are random and orthonormal.
/// Each sample draws its labels independently with a common rate (empty sets
/// redrawn) chosen so the expected count is `mean_labels`. Its features are
/// `x = sum_j s_j w_j + r`, where `s_j = ±(margin + u)` with `u ~ U(0, 1)`
/// carries the label sign and `r` is uniform noise projected off every `w_j`.
/// So `w_j·x = s_j` and label `j` is present iff `w_j·x > 0`, with every sample
/// at least `margin` from every hyperplane.
pub fn separable_dataset(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    generate(spec, seed).map(|(d, _)| d)
}

/// The dataset together with its `features x labels` direction matrix.
fn generate(spec: &SyntheticSpec, seed: u64) -> Result<(Dataset, Array2<f64>)> {
    if spec.samples == 0 || spec.features == 0 || spec.labels == 0 {
        return Err(Error::invalid(
            "synthetic dataset dimensions must be positive",
        ));
    }
    if spec.labels > spec.features {
        return Err(Error::invalid(
            "synthetic labels need one feature direction each",
        ));
    }
    if !(spec.mean_labels > 1.0 && spec.mean_labels < spec.labels as f64) {
        return Err(Error::invalid("mean_labels must lie in (1, labels)"));
    }
    if spec.margin.is_nan() || spec.margin < 0.0 {
        return Err(Error::invalid("margin must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Gram-Schmidt on random vectors
    let mut directions = Array2::<f64>::zeros((spec.features, spec.labels));
    let mut j = 0;
    while j < spec.labels {
        let mut v = Array1::from_shape_simple_fn(spec.features, || rng.random_range(-1.0..1.0));
        for prev in directions.columns().into_iter().take(j) {
            let proj = prev.dot(&v);
            v.scaled_add(-proj, &prev);
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-6 {
            directions.column_mut(j).assign(&(v / norm));
            j += 1;
        }
    }

    let rate = label_rate(spec.labels, spec.mean_labels);
    let vocab = LabelVocabulary::from_sorted(
        (0..spec.labels)
            .map(|j| ConceptId::new(format!("L{j:03}")))
            .collect::<Result<_>>()?,
    )?;
    let mut samples = Vec::with_capacity(spec.samples);
    while samples.len() < spec.samples {
        let labels = MultiHotVector::from_bools((0..spec.labels).map(|_| rng.random_bool(rate)));
        if labels.count_ones() == 0 {
            continue;
        }
        let signed = Array1::from_shape_fn(spec.labels, |j| {
            let s = spec.margin + rng.random_range(0.0..1.0);
            if labels.get(j) {
                s
            } else {
                -s
            }
        });
        let noise = Array1::from_shape_simple_fn(spec.features, || rng.random_range(-1.0..1.0));
        let residual = &noise - &directions.dot(&directions.t().dot(&noise));
        let x = directions.dot(&signed) + residual;
        samples.push(LabeledSample {
            sample_id: format!("syn{:05}", samples.len()),
            features: FeatureData::Vector(x.to_vec()),
            labels,
            category: None,
        });
    }
    Ok((Dataset::new(vocab, samples)?, directions))
}

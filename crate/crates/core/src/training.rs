//! Training protocol: NAdam updates, horizontal-flip augmentation, validation
//! splitting, plateau learning-rate reduction and F1-monitored early stopping.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::label_space::{Dataset, LabeledSample, MultiHotVector};
use crate::losses::LossSpec;
use crate::metrics::{check_threshold, mean_f1};
use crate::model::{stack_features, DenseLayer, FeatureData, Mode, ModelParams, ParamGrads};

/// A monitored value must beat the best so far by more than this to count as an improvement.
pub const MIN_DELTA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Augmentation {
    None,
    HFlip,
}

impl FromStr for Augmentation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Augmentation::None),
            "hflip" => Ok(Augmentation::HFlip),
            _ => Err(Error::Config(format!("unknown augmentation {s:?}"))),
        }
    }
}

impl fmt::Display for Augmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Augmentation::None => "none",
            Augmentation::HFlip => "hflip",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monitor {
    Loss,
    F1,
}

impl Monitor {
    fn improves(self, value: f64, best: f64) -> bool {
        match self {
            Monitor::F1 => value > best + MIN_DELTA,
            Monitor::Loss => value < best - MIN_DELTA,
        }
    }

    fn initial_best(self) -> f64 {
        match self {
            Monitor::F1 => f64::NEG_INFINITY,
            Monitor::Loss => f64::INFINITY,
        }
    }

    fn pick(self, record: &EpochRecord) -> f64 {
        match self {
            Monitor::F1 => record.val_f1,
            Monitor::Loss => record.val_loss,
        }
    }
}

impl FromStr for Monitor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loss" => Ok(Monitor::Loss),
            "f1" => Ok(Monitor::F1),
            _ => Err(Error::Config(format!("unknown monitored metric {s:?}"))),
        }
    }
}

impl fmt::Display for Monitor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Monitor::Loss => "loss",
            Monitor::F1 => "f1",
        })
    }
}

/// Reduce-on-plateau policy, written `factor/patience/metric` (e.g. `0.2/5/f1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrReduction {
    pub factor: f64,
    pub patience: usize,
    pub monitor: Monitor,
}

impl LrReduction {
    pub fn validate(&self) -> Result<()> {
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(Error::Config(format!(
                "reduction factor {} outside (0, 1)",
                self.factor
            )));
        }
        if self.patience == 0 {
            return Err(Error::Config(
                "reduction patience must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

impl FromStr for LrReduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('/').collect();
        let [factor, patience, monitor] = parts.as_slice() else {
            return Err(Error::Config(format!(
                "expected factor/patience/metric, got {s:?}"
            )));
        };
        let policy = LrReduction {
            factor: factor
                .parse()
                .map_err(|_| Error::Config(format!("bad reduction factor {factor:?}")))?,
            patience: patience
                .parse()
                .map_err(|_| Error::Config(format!("bad reduction patience {patience:?}")))?,
            monitor: monitor.parse()?,
        };
        policy.validate()?;
        Ok(policy)
    }
}

impl fmt::Display for LrReduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.factor, self.patience, self.monitor)
    }
}

/// NAdam constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NadamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for NadamConfig {
    fn default() -> Self {
        NadamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub loss: LossSpec,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: NadamConfig,
    pub augmentation: Augmentation,
    pub lr_reduction: Option<LrReduction>,
    /// Epochs without a val-F1 improvement before stopping.
    pub early_stopping_patience: usize,
    pub max_epochs: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.early_stopping_patience == 0 {
            return Err(Error::Config(
                "early stopping patience must be at least 1".into(),
            ));
        }
        let o = &self.optimizer;
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || o.epsilon <= 0.0 {
            return Err(Error::Config("invalid NAdam constants".into()));
        }
        if let Some(r) = &self.lr_reduction {
            r.validate()?;
        }
        check_threshold(self.threshold).map_err(|e| Error::Config(e.to_string()))?;
        LossSpec::new(self.loss.kind, self.loss.epsilon)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f1: f64,
    /// Learning rate used during this epoch.
    pub learning_rate: f64,
}

/// Each sample followed by its column-reversed copy (`<id>-hflip`).
fn flip_rows(pixels: &[f64], width: usize) -> Vec<f64> {
    pixels
        .chunks(width)
        .flat_map(|row| row.iter().rev().copied())
        .collect()
}

pub fn augment_hflip(d: &Dataset) -> Result<Dataset> {
    let mut samples = Vec::with_capacity(d.len() * 2);
    for s in d.samples() {
        let FeatureData::Image {
            height,
            width,
            pixels,
        } = &s.features
        else {
            return Err(Error::AugmentationRequiresImages);
        };
        let flipped = flip_rows(pixels, *width);
        samples.push(s.clone());
        samples.push(LabeledSample {
            sample_id: format!("{}-hflip", s.sample_id),
            features: FeatureData::Image {
                height: *height,
                width: *width,
                pixels: flipped,
            },
            labels: s.labels.clone(),
            category: s.category,
        });
    }
    Dataset::new(d.vocabulary().clone(), samples)
}

/// Seeded random halving into `(val1, val2)`; `val1` receives `ceil(n/2)` samples.
/// Each half keeps the input's relative sample order.
pub fn split_validation(d: &Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
    if d.len() < 2 {
        return Err(Error::invalid("splitting needs at least 2 samples"));
    }
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_first = vec![false; d.len()];
    for &i in &order[..d.len().div_ceil(2)] {
        in_first[i] = true;
    }
    let (first, second): (Vec<_>, Vec<_>) = d
        .samples()
        .iter()
        .cloned()
        .zip(in_first)
        .partition(|(_, first)| *first);
    let strip = |v: Vec<(LabeledSample, bool)>| v.into_iter().map(|(s, _)| s).collect();
    Ok((
        Dataset::new(d.vocabulary().clone(), strip(first))?,
        Dataset::new(d.vocabulary().clone(), strip(second))?,
    ))
}

/// First and second moment estimates, shaped like the model layers.
#[derive(Debug, Clone, PartialEq)]
pub struct NadamState {
    m: Vec<DenseLayer>,
    v: Vec<DenseLayer>,
}

impl NadamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros = ParamGrads::zeros_like(params).layers;
        NadamState {
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One NAdam update over flat slices.
///
/// ```text
/// m ← β1·m + (1-β1)·g        v ← β2·v + (1-β2)·g²
/// m̂ = m / (1-β1^t)           v̂ = v / (1-β2^t)
/// θ ← θ - lr·(β1·m̂ + (1-β1)·g/(1-β1^t)) / (√v̂ + ε)
/// ```
pub fn nadam_update(
    theta: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    cfg: &NadamConfig,
) -> Result<()> {
    let n = theta.len();
    if grad.len() != n || m.len() != n || v.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: grad.len().max(m.len()).max(v.len()),
        });
    }
    if t == 0 {
        return Err(Error::invalid("NAdam step index starts at 1"));
    }
    let t = i32::try_from(t).unwrap_or(i32::MAX);
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for i in 0..n {
        let g = grad[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        theta[i] -= lr * (b1 * m_hat + (1.0 - b1) * g / c1) / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// Applies [`nadam_update`] to every weight and bias of the model.
pub fn nadam_step(
    params: &mut ModelParams,
    grads: &ParamGrads,
    state: &mut NadamState,
    t: u64,
    lr: f64,
    cfg: &NadamConfig,
) -> Result<()> {
    let n = params.layers().len();
    if grads.layers.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: grads.layers.len(),
        });
    }
    for (i, layer) in params.layers_mut().iter_mut().enumerate() {
        let g = &grads.layers[i];
        if g.weights.dim() != layer.weights.dim() || state.m[i].weights.dim() != layer.weights.dim()
        {
            return Err(Error::ShapeMismatch {
                expected: layer.weights.dim(),
                actual: g.weights.dim(),
            });
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        nadam_update(
            slice_mut(&mut layer.weights),
            slice(&g.weights),
            slice_mut(&mut m.weights),
            slice_mut(&mut v.weights),
            t,
            lr,
            cfg,
        )?;
        nadam_update(
            layer.bias.as_slice_mut().expect("contiguous"),
            g.bias.as_slice().expect("contiguous"),
            m.bias.as_slice_mut().expect("contiguous"),
            v.bias.as_slice_mut().expect("contiguous"),
            t,
            lr,
            cfg,
        )?;
    }
    Ok(())
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are stored contiguously")
}

fn slice_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut()
        .expect("parameters are stored contiguously")
}

/// Stateful reduce-on-plateau tracker.
///
/// After `patience` consecutive epochs without improvement the rate is multiplied
/// by `factor`; the following `patience` epochs are a cooldown during which
/// stagnation is not counted. The current rate is always
/// `initial * factor^reductions`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    policy: LrReduction,
    initial_lr: f64,
    best: f64,
    wait: usize,
    cooldown: usize,
    reductions: u32,
}

impl PlateauScheduler {
    pub fn new(policy: LrReduction, initial_lr: f64) -> Self {
        PlateauScheduler {
            policy,
            initial_lr,
            best: policy.monitor.initial_best(),
            wait: 0,
            cooldown: 0,
            reductions: 0,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.initial_lr * self.policy.factor.powi(self.reductions as i32)
    }

    pub fn reductions(&self) -> u32 {
        self.reductions
    }

    /// Feeds one epoch's record; returns the rate for the next epoch.
    pub fn observe(&mut self, record: &EpochRecord) -> f64 {
        let value = self.policy.monitor.pick(record);
        let improved = self.policy.monitor.improves(value, self.best);
        if improved {
            self.best = value;
            self.wait = 0;
        }
        if self.cooldown > 0 {
            self.cooldown -= 1;
        } else if !improved {
            self.wait += 1;
            if self.wait >= self.policy.patience {
                self.reductions += 1;
                self.wait = 0;
                self.cooldown = self.policy.patience;
            }
        }
        self.learning_rate()
    }
}

/// Learning rate for the epoch after `history`, replaying the plateau policy from
/// the first record's rate. `None` for an empty history.
pub fn reduce_lr_on_plateau(history: &[EpochRecord], policy: &LrReduction) -> Option<f64> {
    let first = history.first()?;
    let mut sched = PlateauScheduler::new(*policy, first.learning_rate);
    let mut lr = sched.learning_rate();
    for record in history {
        lr = sched.observe(record);
    }
    Some(lr)
}

/// Counts epochs without a val-F1 improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: Monitor::F1.initial_best(),
            wait: 0,
        }
    }

    /// Returns `true` once training should stop.
    pub fn observe(&mut self, val_f1: f64) -> bool {
        if Monitor::F1.improves(val_f1, self.best) {
            self.best = val_f1;
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        self.wait >= self.patience
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the epoch with the highest val F1 (earliest on ties).
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

fn label_matrix(d: &Dataset) -> Array2<f64> {
    let k = d.vocabulary().len();
    let mut y = Array2::zeros((d.len(), k));
    for (mut row, s) in y.rows_mut().into_iter().zip(d.samples()) {
        for i in s.labels.ones() {
            row[i] = 1.0;
        }
    }
    y
}

fn check_compatible(params: &ModelParams, d: &Dataset, name: &str) -> Result<()> {
    if d.is_empty() {
        return Err(Error::invalid(format!("{name} set is empty")));
    }
    if d.vocabulary().len() != params.output_size() {
        return Err(Error::invalid(format!(
            "{name} set has {} concepts, model outputs {}",
            d.vocabulary().len(),
            params.output_size()
        )));
    }
    if d.feature_dim() != Some(params.input_dim()) {
        return Err(Error::invalid(format!(
            "{name} set has feature dimension {:?}, model expects {}",
            d.feature_dim(),
            params.input_dim()
        )));
    }
    Ok(())
}

/// Validation loss and mean F1 of `params` on a prepared set.
pub fn evaluate_split(
    params: &ModelParams,
    x: &Array2<f64>,
    y: &Array2<f64>,
    loss: &LossSpec,
    threshold: f64,
) -> Result<(f64, f64)> {
    let out = params.forward_eval(x.view())?;
    let value = loss.evaluate(y.view(), out.view())?.value;
    let truths: Vec<MultiHotVector> = y
        .rows()
        .into_iter()
        .map(|r| MultiHotVector::from_bools(r.iter().map(|&v| v == 1.0)))
        .collect();
    let preds: Vec<MultiHotVector> = out
        .rows()
        .into_iter()
        .map(|r| MultiHotVector::from_bools(r.iter().map(|&s| s >= threshold)))
        .collect();
    Ok((value, mean_f1(&truths, &preds)?))
}

/// Mini-batch training with per-epoch validation.
///
/// Each epoch shuffles the training set, walks it in `batch_size` chunks (the
/// last one may be smaller) and applies one NAdam step per chunk. Training stops
/// at `max_epochs` or when val F1 stalls for `early_stopping_patience` epochs.
pub fn train(
    params: ModelParams,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainingConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_compatible(&params, train_set, "training")?;
    check_compatible(&params, val_set, "validation")?;
    if train_set.vocabulary() != val_set.vocabulary() {
        return Err(Error::invalid(
            "training and validation vocabularies differ",
        ));
    }

    let augmented;
    let train_set = match cfg.augmentation {
        Augmentation::None => train_set,
        Augmentation::HFlip => {
            augmented = augment_hflip(train_set)?;
            &augmented
        }
    };
    let x_train = stack_features(train_set.samples().iter().map(|s| &s.features))?;
    let y_train = label_matrix(train_set);
    let x_val = stack_features(val_set.samples().iter().map(|s| &s.features))?;
    let y_val = label_matrix(val_set);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = params;
    let mut best = params.clone();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_epoch = None;
    let mut state = NadamState::new(&params);
    let mut step = 0u64;
    let mut lr = cfg.learning_rate;
    let mut scheduler = cfg
        .lr_reduction
        .map(|policy| PlateauScheduler::new(policy, cfg.learning_rate));
    let mut stopper = EarlyStopping::new(cfg.early_stopping_patience);
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xb = x_train.select(Axis(0), batch);
            let yb = y_train.select(Axis(0), batch);
            let (out, cache) = params.forward(xb.view(), Mode::Train, &mut rng)?;
            let loss = cfg.loss.evaluate(yb.view(), out.view())?;
            if !loss.value.is_finite() {
                return Err(Error::invalid(format!(
                    "non-finite training loss at epoch {epoch}"
                )));
            }
            loss_sum += loss.value * batch.len() as f64;
            let grads = params.backward(&cache, loss.gradient.view())?;
            step += 1;
            nadam_step(&mut params, &grads, &mut state, step, lr, &cfg.optimizer)?;
        }
        let (val_loss, val_f1) = evaluate_split(&params, &x_val, &y_val, &cfg.loss, cfg.threshold)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss,
            val_f1,
            learning_rate: lr,
        };
        history.push(record);
        if val_f1 > best_f1 {
            best_f1 = val_f1;
            best = params.clone();
            best_epoch = Some(epoch);
        }
        if let Some(s) = scheduler.as_mut() {
            lr = s.observe(&record);
        }
        if stopper.observe(val_f1) {
            break;
        }
    }
    Ok(TrainOutcome {
        params: best,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label_space::{build_vocabulary, ConceptId, LabelVocabulary};
    use crate::losses::{LossKind, DEFAULT_EPSILON};
    use crate::model::{init_model, HeadConfig};
    use crate::synthetic::{separable_dataset, SyntheticSpec};
    use proptest::prelude::*;
    use rand::Rng;

    fn record(epoch: usize, val_loss: f64, val_f1: f64, lr: f64) -> EpochRecord {
        EpochRecord {
            epoch,
            train_loss: val_loss,
            val_loss,
            val_f1,
            learning_rate: lr,
        }
    }

    fn image_dataset(n: usize, h: usize, w: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = LabelVocabulary::from_sorted(vec![
            ConceptId::new("A").unwrap(),
            ConceptId::new("B").unwrap(),
        ])
        .unwrap();
        let samples = (0..n)
            .map(|i| LabeledSample {
                sample_id: format!("img{i:02}"),
                features: FeatureData::image(h, w, (0..h * w).map(|_| rng.random()).collect())
                    .unwrap(),
                labels: MultiHotVector::from_bools([true, rng.random_bool(0.5)]),
                category: None,
            })
            .collect();
        Dataset::new(vocab, samples).unwrap()
    }

    fn base_config(loss: LossKind) -> TrainingConfig {
        TrainingConfig {
            loss: LossSpec::new(loss, DEFAULT_EPSILON).unwrap(),
            batch_size: 32,
            learning_rate: 1e-2,
            optimizer: NadamConfig::default(),
            augmentation: Augmentation::None,
            lr_reduction: None,
            early_stopping_patience: 10,
            max_epochs: 20,
            threshold: 0.5,
            seed: 3,
        }
    }

    #[test]
    fn hflip_examples() {
        let d = image_dataset(1, 1, 1, 0);
        let a = augment_hflip(&d).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a.samples()[0].features, a.samples()[1].features);
        assert_eq!(a.samples()[1].sample_id, "img00-hflip");

        let vocab = d.vocabulary().clone();
        let s = LabeledSample {
            sample_id: "x".into(),
            features: FeatureData::image(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
            labels: MultiHotVector::from_bools([true, false]),
            category: None,
        };
        let a = augment_hflip(&Dataset::new(vocab, vec![s]).unwrap()).unwrap();
        assert_eq!(a.samples()[1].features.values(), &[0.2, 0.1, 0.4, 0.3]);
        assert_eq!(a.samples()[1].labels, a.samples()[0].labels);
    }

    #[test]
    fn hflip_twice_is_identity() {
        let d = image_dataset(20, 3, 5, 1);
        let once = augment_hflip(&d).unwrap();
        for (i, s) in d.samples().iter().enumerate() {
            let flipped = once.samples()[2 * i + 1].features.values();
            assert_eq!(flip_rows(flipped, 5), s.features.values());
        }
    }

    #[test]
    fn hflip_requires_images() {
        let d = separable_dataset(
            &SyntheticSpec {
                samples: 4,
                ..SyntheticSpec::default()
            },
            1,
        )
        .unwrap();
        assert!(matches!(
            augment_hflip(&d),
            Err(Error::AugmentationRequiresImages)
        ));
    }

    #[test]
    fn hflip_doubles_statistics() {
        use crate::label_space::{
            concept_frequency_histogram, cui_count_histogram, label_cardinality,
        };
        let d = image_dataset(9, 2, 3, 4);
        let a = augment_hflip(&d).unwrap();
        assert_eq!(a.vocabulary(), d.vocabulary());
        assert_eq!(
            label_cardinality(&a).unwrap(),
            label_cardinality(&d).unwrap()
        );
        let k = d.vocabulary().len();
        let before = concept_frequency_histogram(&d, k).unwrap();
        let after = concept_frequency_histogram(&a, k).unwrap();
        for ((c0, n0), (c1, n1)) in before.iter().zip(&after) {
            assert_eq!((c0, 2 * n0), (c1, *n1));
        }
        let before = cui_count_histogram(&d, 50).unwrap();
        let after = cui_count_histogram(&a, 50).unwrap();
        assert!(before.iter().all(|(c, n)| after[c] == 2 * n));
    }

    #[test]
    fn split_examples() {
        let d = image_dataset(4, 1, 1, 0);
        let (a, b) = split_validation(&d, 1).unwrap();
        assert_eq!((a.len(), b.len()), (2, 2));
        let d5 = image_dataset(5, 1, 1, 0);
        let (a, b) = split_validation(&d5, 1).unwrap();
        assert_eq!((a.len(), b.len()), (3, 2));
        let mut ids: Vec<_> = a
            .samples()
            .iter()
            .chain(b.samples())
            .map(|s| s.sample_id.clone())
            .collect();
        ids.sort();
        let mut all: Vec<_> = d5.samples().iter().map(|s| s.sample_id.clone()).collect();
        all.sort();
        assert_eq!(ids, all);
        let (a2, b2) = split_validation(&d5, 1).unwrap();
        assert_eq!((a2, b2), (a, b));
        assert!(split_validation(&image_dataset(1, 1, 1, 0), 1).is_err());
    }

    #[test]
    fn nadam_zero_gradient_is_a_no_op() {
        let mut theta = vec![0.3, -1.2];
        let (mut m, mut v) = (vec![0.0; 2], vec![0.0; 2]);
        nadam_update(
            &mut theta,
            &[0.0, 0.0],
            &mut m,
            &mut v,
            1,
            0.1,
            &NadamConfig::default(),
        )
        .unwrap();
        assert_eq!(theta, vec![0.3, -1.2]);
    }

    #[test]
    fn nadam_first_step_hand_value() {
        let mut theta = vec![0.0];
        let (mut m, mut v) = (vec![0.0], vec![0.0]);
        nadam_update(
            &mut theta,
            &[1.0],
            &mut m,
            &mut v,
            1,
            0.1,
            &NadamConfig::default(),
        )
        .unwrap();
        // m̂ = v̂ = 1; step = lr·(0.9 + 0.1/0.1)/(1 + 1e-8)
        let expected = -0.1 * 1.9 / (1.0 + 1e-8);
        assert!((theta[0] - expected).abs() < 1e-15, "{}", theta[0]);
        assert!((m[0] - 0.1).abs() < 1e-15);
        assert!((v[0] - 0.001).abs() < 1e-15);
    }

    #[test]
    fn nadam_descends_on_quadratic() {
        let mut theta = vec![1.0];
        let (mut m, mut v) = (vec![0.0], vec![0.0]);
        for t in 1..=200 {
            let g = [2.0 * theta[0]];
            nadam_update(
                &mut theta,
                &g,
                &mut m,
                &mut v,
                t,
                0.01,
                &NadamConfig::default(),
            )
            .unwrap();
        }
        assert!(theta[0].abs() < 0.5, "{}", theta[0]);
    }

    #[test]
    fn nadam_rejects_bad_inputs() {
        let mut theta = vec![0.0; 2];
        let (mut m, mut v) = (vec![0.0; 2], vec![0.0; 2]);
        let cfg = NadamConfig::default();
        assert!(nadam_update(&mut theta, &[1.0], &mut m, &mut v, 1, 0.1, &cfg).is_err());
        assert!(nadam_update(&mut theta, &[1.0, 1.0], &mut m, &mut v, 0, 0.1, &cfg).is_err());
    }

    #[test]
    fn plateau_policy_parse() {
        let p: LrReduction = "0.2/5/f1".parse().unwrap();
        assert_eq!((p.factor, p.patience, p.monitor), (0.2, 5, Monitor::F1));
        assert_eq!(p.to_string(), "0.2/5/f1");
        assert!("1.5/5/f1".parse::<LrReduction>().is_err());
        assert!("0.2/0/f1".parse::<LrReduction>().is_err());
        assert!("0.2/5/acc".parse::<LrReduction>().is_err());
        assert!("0.2/5".parse::<LrReduction>().is_err());
    }

    #[test]
    fn improving_f1_keeps_rate() {
        let policy: LrReduction = "0.2/5/f1".parse().unwrap();
        let history: Vec<_> = (0..12)
            .map(|e| record(e, 1.0, 0.1 + 0.05 * e as f64, 1e-3))
            .collect();
        assert_eq!(reduce_lr_on_plateau(&history, &policy), Some(1e-3));
        assert_eq!(reduce_lr_on_plateau(&[], &policy), None);
    }

    #[test]
    fn flat_f1_reduces_after_patience() {
        let policy: LrReduction = "0.2/5/f1".parse().unwrap();
        let history: Vec<_> = (0..6).map(|e| record(e, 1.0, 0.3, 1e-3)).collect();
        // epoch 0 sets the best; epochs 1..=5 are the five stagnant ones
        assert_eq!(reduce_lr_on_plateau(&history[..5], &policy), Some(1e-3));
        assert_eq!(reduce_lr_on_plateau(&history, &policy), Some(1e-3 * 0.2));
    }

    #[test]
    fn cooldown_follows_a_reduction() {
        let policy: LrReduction = "0.5/2/loss".parse().unwrap();
        let mut s = PlateauScheduler::new(policy, 1.0);
        let lrs: Vec<f64> = (0..9)
            .map(|e| s.observe(&record(e, 1.0, 0.0, 1.0)))
            .collect();
        // reduce at 2, cooldown 3-4, wait 5-6, reduce at 6, cooldown 7-8
        assert_eq!(lrs, vec![1.0, 1.0, 0.5, 0.5, 0.5, 0.5, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn tiny_changes_do_not_count_as_improvement() {
        let policy: LrReduction = "0.2/3/loss".parse().unwrap();
        let history: Vec<_> = (0..4)
            .map(|e| record(e, 1.0 - 1e-7 * e as f64, 0.0, 1.0))
            .collect();
        assert_eq!(reduce_lr_on_plateau(&history, &policy), Some(0.2));
    }

    #[test]
    fn max_epochs_zero_returns_initial_params() {
        let d = separable_dataset(
            &SyntheticSpec {
                samples: 20,
                ..SyntheticSpec::default()
            },
            1,
        )
        .unwrap();
        let k = d.vocabulary().len();
        let p = init_model(
            &HeadConfig {
                hidden_sizes: vec![4],
                dropout_p: 0.0,
                output_size: k,
                seed: 1,
            },
            d.feature_dim().unwrap(),
        )
        .unwrap();
        let cfg = TrainingConfig {
            max_epochs: 0,
            ..base_config(LossKind::Bce)
        };
        let out = train(p.clone(), &d, &d, &cfg).unwrap();
        assert_eq!(out.params, p);
        assert!(out.history.is_empty());
        assert_eq!(out.best_epoch, None);
    }

    #[test]
    fn training_is_deterministic_and_returns_best_epoch() {
        let spec = SyntheticSpec {
            samples: 120,
            ..SyntheticSpec::default()
        };
        let d = separable_dataset(&spec, 2).unwrap();
        let (tr, va) = split_validation(&d, 9).unwrap();
        let k = d.vocabulary().len();
        let head = HeadConfig {
            hidden_sizes: vec![16],
            dropout_p: 0.2,
            output_size: k,
            seed: 5,
        };
        let p = init_model(&head, d.feature_dim().unwrap()).unwrap();
        let cfg = TrainingConfig {
            lr_reduction: Some("0.2/2/f1".parse().unwrap()),
            early_stopping_patience: 4,
            ..base_config(LossKind::Product)
        };
        let a = train(p.clone(), &tr, &va, &cfg).unwrap();
        let b = train(p, &tr, &va, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);

        let best = a.best_epoch.unwrap();
        let max = a
            .history
            .iter()
            .map(|r| r.val_f1)
            .fold(f64::NEG_INFINITY, f64::max);
        let first_max = a.history.iter().position(|r| r.val_f1 == max).unwrap();
        assert_eq!(best, first_max);
        let x = stack_features(va.samples().iter().map(|s| &s.features)).unwrap();
        let (_, f1) = evaluate_split(&a.params, &x, &label_matrix(&va), &cfg.loss, 0.5).unwrap();
        assert_eq!(f1, max);

        for (i, r) in a.history.iter().enumerate() {
            assert_eq!(r.epoch, i);
            assert!(r.train_loss.is_finite() && r.val_loss.is_finite());
        }
    }

    #[test]
    fn train_rejects_incompatible_inputs() {
        let d = separable_dataset(
            &SyntheticSpec {
                samples: 10,
                ..SyntheticSpec::default()
            },
            1,
        )
        .unwrap();
        let p = init_model(
            &HeadConfig {
                hidden_sizes: vec![],
                dropout_p: 0.0,
                output_size: 3,
                seed: 1,
            },
            d.feature_dim().unwrap(),
        )
        .unwrap();
        assert!(train(p, &d, &d, &base_config(LossKind::Bce)).is_err());
        let k = d.vocabulary().len();
        let p = init_model(
            &HeadConfig {
                hidden_sizes: vec![],
                dropout_p: 0.0,
                output_size: k,
                seed: 1,
            },
            3,
        )
        .unwrap();
        assert!(train(p, &d, &d, &base_config(LossKind::Bce)).is_err());
        let bad = TrainingConfig {
            batch_size: 0,
            ..base_config(LossKind::Bce)
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn vocabulary_mismatch_is_rejected() {
        let d = image_dataset(4, 1, 1, 0);
        let other_vocab =
            build_vocabulary([[ConceptId::new("A").unwrap(), ConceptId::new("C").unwrap()].iter()])
                .unwrap();
        let other = Dataset::new(other_vocab, d.samples().to_vec()).unwrap();
        let p = init_model(
            &HeadConfig {
                hidden_sizes: vec![],
                dropout_p: 0.0,
                output_size: 2,
                seed: 1,
            },
            1,
        )
        .unwrap();
        assert!(train(p, &d, &other, &base_config(LossKind::Bce)).is_err());
    }

    proptest! {
        #[test]
        fn rate_is_initial_times_factor_power(
            f1s in prop::collection::vec(0.0f64..1.0, 1..40),
            patience in 1usize..5,
            factor in 0.05f64..0.95,
        ) {
            let policy = LrReduction { factor, patience, monitor: Monitor::F1 };
            let mut s = PlateauScheduler::new(policy, 1e-3);
            for (e, f) in f1s.iter().enumerate() {
                let lr = s.observe(&record(e, 0.0, *f, 0.0));
                prop_assert_eq!(lr, 1e-3 * factor.powi(s.reductions() as i32));
            }
        }
    }
}

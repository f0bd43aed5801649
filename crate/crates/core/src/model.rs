//! Dense classification head: `input -> [affine -> ReLU -> dropout]* -> affine -> sigmoid`.
//!
//! Weights are stored `(fan_in, fan_out)` so a batch `X` of shape `(batch, fan_in)`
//! maps to `X·W + b`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::label_space::MultiHotVector;
use crate::metrics::check_threshold;

/// Input payload of one sample.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureData {
    /// Grayscale intensities in `[0, 1]`, row-major.
    Image {
        height: usize,
        width: usize,
        pixels: Vec<f64>,
    },
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureShape {
    Image { height: usize, width: usize },
    Vector(usize),
}

impl FeatureData {
    pub fn image(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image dimensions must be at least 1x1"));
        }
        if pixels.len() != height * width {
            return Err(Error::LengthMismatch {
                expected: height * width,
                actual: pixels.len(),
            });
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!(
                "pixel intensity {v} outside [0, 1]"
            )));
        }
        Ok(FeatureData::Image {
            height,
            width,
            pixels,
        })
    }

    pub fn vector(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("feature vector must not be empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature vector contains a non-finite value"));
        }
        Ok(FeatureData::Vector(values))
    }

    pub fn shape(&self) -> FeatureShape {
        match self {
            FeatureData::Image { height, width, .. } => FeatureShape::Image {
                height: *height,
                width: *width,
            },
            FeatureData::Vector(v) => FeatureShape::Vector(v.len()),
        }
    }

    /// Length of the flattened input.
    pub fn dim(&self) -> usize {
        self.values().len()
    }

    pub fn values(&self) -> &[f64] {
        match self {
            FeatureData::Image { pixels, .. } => pixels,
            FeatureData::Vector(v) => v,
        }
    }

    pub fn is_image(&self) -> bool {
        matches!(self, FeatureData::Image { .. })
    }
}

/// Stacks flattened features into a `(batch, dim)` matrix.
pub fn stack_features<'a, I>(features: I) -> Result<Array2<f64>>
where
    I: IntoIterator<Item = &'a FeatureData>,
{
    let mut data = Vec::new();
    let mut dim = None;
    let mut rows = 0;
    for f in features {
        let values = f.values();
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::LengthMismatch {
                    expected: d,
                    actual: values.len(),
                })
            }
            _ => {}
        }
        data.extend_from_slice(values);
        rows += 1;
    }
    let dim = dim.ok_or_else(|| Error::invalid("empty batch"))?;
    Ok(Array2::from_shape_vec((rows, dim), data).expect("row lengths checked"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadConfig {
    pub hidden_sizes: Vec<usize>,
    pub dropout_p: f64,
    /// Number of sigmoid units, one per concept.
    pub output_size: usize,
    pub seed: u64,
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.output_size == 0 || self.hidden_sizes.contains(&0) {
            return Err(Error::invalid("layer widths must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::invalid(format!(
                "dropout probability {} outside [0, 1)",
                self.dropout_p
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `(fan_in, fan_out)`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        DenseLayer {
            weights: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: HeadConfig,
    input_dim: usize,
    layers: Vec<DenseLayer>,
    revision: u64,
}

/// Glorot-uniform weights, zero biases, drawn from a ChaCha8 stream seeded by `cfg.seed`.
pub fn init_model(cfg: &HeadConfig, input_dim: usize) -> Result<ModelParams> {
    cfg.validate()?;
    if input_dim == 0 {
        return Err(Error::invalid("input dimension must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let layers = layer_dims(cfg, input_dim)
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || {
                rng.random_range(-limit..=limit)
            });
            DenseLayer {
                weights,
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(ModelParams {
        config: cfg.clone(),
        input_dim,
        layers,
        revision: 0,
    })
}

fn layer_dims(cfg: &HeadConfig, input_dim: usize) -> Vec<(usize, usize)> {
    let mut widths = vec![input_dim];
    widths.extend(&cfg.hidden_sizes);
    widths.push(cfg.output_size);
    widths.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Intermediates of one forward pass, consumed by [`ModelParams::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    revision: u64,
    inputs: Array2<f64>,
    hidden: Vec<HiddenCache>,
    outputs: Array2<f64>,
}

#[derive(Debug, Clone)]
struct HiddenCache {
    pre_activation: Array2<f64>,
    /// Inverted-dropout multipliers (0 or 1/(1-p)); `None` when dropout is off.
    mask: Option<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn outputs(&self) -> &Array2<f64> {
        &self.outputs
    }

    /// Dropout multipliers used at each hidden layer.
    pub fn masks(&self) -> Vec<Option<Array2<f64>>> {
        self.hidden.iter().map(|h| h.mask.clone()).collect()
    }

    /// Pre-activations of each hidden layer.
    pub fn pre_activations(&self) -> Vec<&Array2<f64>> {
        self.hidden.iter().map(|h| &h.pre_activation).collect()
    }
}

/// Gradients mirroring [`ModelParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<DenseLayer>,
}

impl ParamGrads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        ParamGrads {
            layers: params
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.weights.nrows(), l.weights.ncols()))
                .collect(),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl ModelParams {
    /// Assembles parameters from explicit layers, checking that shapes chain.
    pub fn from_layers(
        config: HeadConfig,
        input_dim: usize,
        layers: Vec<DenseLayer>,
    ) -> Result<Self> {
        config.validate()?;
        let dims = layer_dims(&config, input_dim);
        if dims.len() != layers.len() {
            return Err(Error::invalid(format!(
                "expected {} layers, got {}",
                dims.len(),
                layers.len()
            )));
        }
        for ((fan_in, fan_out), l) in dims.iter().zip(&layers) {
            if l.weights.dim() != (*fan_in, *fan_out) || l.bias.len() != *fan_out {
                return Err(Error::ShapeMismatch {
                    expected: (*fan_in, *fan_out),
                    actual: l.weights.dim(),
                });
            }
            if l.weights
                .iter()
                .chain(l.bias.iter())
                .any(|v| !v.is_finite())
            {
                return Err(Error::invalid("non-finite parameter"));
            }
        }
        Ok(ModelParams {
            config,
            input_dim,
            layers,
            revision: 0,
        })
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_size(&self) -> usize {
        self.config.output_size
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Mutable access; invalidates outstanding forward caches.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.revision += 1;
        &mut self.layers
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn check_inputs(&self, inputs: &ArrayView2<f64>) -> Result<()> {
        if inputs.ncols() != self.input_dim {
            return Err(Error::ShapeMismatch {
                expected: (inputs.nrows(), self.input_dim),
                actual: inputs.dim(),
            });
        }
        Ok(())
    }

    /// Forward pass. In [`Mode::Train`] each hidden unit is dropped with
    /// probability `dropout_p` and survivors are scaled by `1/(1-p)`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        inputs: ArrayView2<f64>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_inputs(&inputs)?;
        let p = self.config.dropout_p;
        let batch = inputs.nrows();
        let masks = self
            .config
            .hidden_sizes
            .iter()
            .map(|&width| {
                (mode == Mode::Train && p > 0.0).then(|| {
                    let keep = 1.0 / (1.0 - p);
                    Array2::from_shape_simple_fn((batch, width), || {
                        if rng.random::<f64>() < p {
                            0.0
                        } else {
                            keep
                        }
                    })
                })
            })
            .collect();
        self.forward_with_masks(inputs, masks)
    }

    /// Deterministic forward pass without dropout.
    pub fn forward_eval(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        let masks = vec![None; self.config.hidden_sizes.len()];
        Ok(self.forward_with_masks(inputs, masks)?.0)
    }

    /// Forward pass with caller-supplied dropout multipliers, one per hidden layer.
    pub fn forward_with_masks(
        &self,
        inputs: ArrayView2<f64>,
        masks: Vec<Option<Array2<f64>>>,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_inputs(&inputs)?;
        let n_hidden = self.layers.len() - 1;
        if masks.len() != n_hidden {
            return Err(Error::invalid(format!(
                "expected {n_hidden} dropout masks, got {}",
                masks.len()
            )));
        }
        let mut hidden = Vec::with_capacity(n_hidden);
        let mut current = inputs.to_owned();
        for (layer, mask) in self.layers[..n_hidden].iter().zip(masks) {
            let pre_activation = current.dot(&layer.weights) + &layer.bias;
            let mut output = pre_activation.mapv(|z| z.max(0.0));
            if let Some(m) = &mask {
                if m.dim() != output.dim() {
                    return Err(Error::ShapeMismatch {
                        expected: output.dim(),
                        actual: m.dim(),
                    });
                }
                output *= m;
            }
            current = output.clone();
            hidden.push(HiddenCache {
                pre_activation,
                mask,
                output,
            });
        }
        let last = &self.layers[n_hidden];
        let outputs = (current.dot(&last.weights) + &last.bias).mapv(sigmoid);
        let cache = ForwardCache {
            revision: self.revision,
            inputs: inputs.to_owned(),
            hidden,
            outputs: outputs.clone(),
        };
        Ok((outputs, cache))
    }

    /// Backpropagates `d(loss)/d(prediction)` through the cached forward pass.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        loss_gradient: ArrayView2<f64>,
    ) -> Result<ParamGrads> {
        if cache.revision != self.revision {
            return Err(Error::StaleCache(format!(
                "cache from revision {}, parameters at {}",
                cache.revision, self.revision
            )));
        }
        if cache.hidden.len() + 1 != self.layers.len() || cache.inputs.ncols() != self.input_dim {
            return Err(Error::StaleCache("layer structure differs".into()));
        }
        if loss_gradient.dim() != cache.outputs.dim() {
            return Err(Error::ShapeMismatch {
                expected: cache.outputs.dim(),
                actual: loss_gradient.dim(),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        // sigmoid'(z) = y(1 - y)
        let mut delta = &loss_gradient * &cache.outputs.mapv(|y| y * (1.0 - y));
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let layer_input = if i == 0 {
                cache.inputs.view()
            } else {
                cache.hidden[i - 1].output.view()
            };
            grads.push(DenseLayer {
                weights: layer_input.t().dot(&delta),
                bias: delta.sum_axis(Axis(0)),
            });
            if i > 0 {
                let h = &cache.hidden[i - 1];
                let mut upstream = delta.dot(&layer.weights.t());
                if let Some(m) = &h.mask {
                    upstream *= m;
                }
                upstream.zip_mut_with(&h.pre_activation, |g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = upstream;
            }
        }
        grads.reverse();
        Ok(ParamGrads { layers: grads })
    }

    /// Eval-mode forward followed by thresholding of every row.
    pub fn predict(&self, inputs: ArrayView2<f64>, threshold: f64) -> Result<Vec<MultiHotVector>> {
        check_threshold(threshold)?;
        let scores = self.forward_eval(inputs)?;
        Ok(scores
            .rows()
            .into_iter()
            .map(|row| MultiHotVector::from_bools(row.iter().map(|&s| s >= threshold)))
            .collect())
    }
}

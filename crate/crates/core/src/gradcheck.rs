//! Finite-difference verification of end-to-end parameter gradients.
//!
//! For each loss, a tiny head (`inputs -> 2 hidden units -> outputs`, dropout off)
//! is instantiated with random parameters and a random batch. Every weight and
//! bias is perturbed by `±h` and the central difference of the loss is compared
//! with the gradient from [`ModelParams::backward`].

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::losses::{LossKind, LossSpec, DEFAULT_EPSILON};
use crate::model::{init_model, HeadConfig, Mode, ModelParams};

/// Central-difference step.
pub const STEP: f64 = 1e-6;

/// Magnitudes below this are compared absolutely; central differences with
/// `h = 1e-6` carry roughly `1e-10` of round-off.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub instances: usize,
    pub input_dim: usize,
    pub hidden: usize,
    pub outputs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            instances: 100,
            input_dim: 3,
            hidden: 2,
            outputs: 4,
            batch: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub kind: LossKind,
    pub max_relative_error: f64,
    pub parameters_checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn loss_value(
    params: &ModelParams,
    x: &Array2<f64>,
    y: &Array2<f64>,
    spec: &LossSpec,
) -> Result<f64> {
    let out = params.forward_eval(x.view())?;
    Ok(spec.evaluate(y.view(), out.view())?.value)
}

/// Largest relative error between analytic and numeric gradients over all parameters.
pub fn check_instance(
    params: &ModelParams,
    x: &Array2<f64>,
    y: &Array2<f64>,
    spec: &LossSpec,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (out, cache) = params.forward(x.view(), Mode::Eval, &mut rng)?;
    let lg = spec.evaluate(y.view(), out.view())?.gradient;
    let grads = params.backward(&cache, lg.view())?;
    let mut worst = 0.0f64;
    for (li, g) in grads.layers.iter().enumerate() {
        let analytic = g.weights.iter().chain(g.bias.iter()).copied();
        for (idx, a) in analytic.enumerate() {
            let bump = |delta: f64| -> Result<f64> {
                let mut q = params.clone();
                let layer = &mut q.layers_mut()[li];
                let n_w = layer.weights.len();
                if idx < n_w {
                    let cols = layer.weights.ncols();
                    layer.weights[[idx / cols, idx % cols]] += delta;
                } else {
                    layer.bias[idx - n_w] += delta;
                }
                loss_value(&q, x, y, spec)
            };
            let numeric = (bump(STEP)? - bump(-STEP)?) / (2.0 * STEP);
            worst = worst.max(relative_error(a, numeric));
        }
    }
    Ok(worst)
}

/// Runs `cfg.instances` random instances for one loss.
pub fn run(kind: LossKind, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let spec = LossSpec::new(kind, DEFAULT_EPSILON)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _ in 0..cfg.instances {
        let head = HeadConfig {
            hidden_sizes: vec![cfg.hidden],
            dropout_p: 0.0,
            output_size: cfg.outputs,
            seed: rng.random(),
        };
        let mut params = init_model(&head, cfg.input_dim)?;
        for layer in params.layers_mut() {
            layer.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let x = Array2::from_shape_simple_fn((cfg.batch, cfg.input_dim), || {
            rng.random_range(-1.0..1.0)
        });
        let y = Array2::from_shape_simple_fn((cfg.batch, cfg.outputs), || {
            if rng.random_bool(0.4) {
                1.0
            } else {
                0.0
            }
        });
        worst = worst.max(check_instance(&params, &x, &y, &spec)?);
        checked += params.num_parameters();
    }
    Ok(GradCheckReport {
        kind,
        max_relative_error: worst,
        parameters_checked: checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_losses_pass_a_short_check() {
        let cfg = GradCheckConfig {
            instances: 10,
            seed: 3,
            ..GradCheckConfig::default()
        };
        for kind in LossKind::ALL {
            let r = run(kind, &cfg).unwrap();
            assert!(
                r.max_relative_error < 1e-4,
                "{kind}: {}",
                r.max_relative_error
            );
            assert_eq!(r.parameters_checked, 10 * (3 * 2 + 2 + 2 * 4 + 4));
        }
    }

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-9, 0.0) - 1e-3).abs() < 1e-15);
    }
}

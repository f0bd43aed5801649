//! Trains the same head with each loss on a generated task and prints held-out
//! mean F1. Run with `cargo run --release --example loss_comparison [seeds]`.

use std::collections::HashSet;

use conceptdet::label_space::Dataset;
use conceptdet::losses::DEFAULT_EPSILON;
use conceptdet::model::{init_model, stack_features, HeadConfig};
use conceptdet::synthetic::{separable_dataset, SyntheticSpec};
use conceptdet::training::{evaluate_split, train, Augmentation, NadamConfig, TrainingConfig};
use conceptdet::{LossKind, LossSpec};
use ndarray::Array2;

fn split(d: &Dataset) -> (Dataset, Dataset, Dataset) {
    let ids: Vec<String> = d.samples().iter().map(|s| s.sample_id.clone()).collect();
    let pick =
        |lo: usize, hi: usize| d.subset(&ids[lo..hi].iter().cloned().collect::<HashSet<_>>());
    let n = ids.len();
    (
        pick(0, n * 70 / 100),
        pick(n * 70 / 100, n * 85 / 100),
        pick(n * 85 / 100, n),
    )
}

fn main() {
    let seeds: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(3);
    println!("seed,loss,epochs,best_epoch,test_f1");
    for seed in 0..seeds {
        let d = separable_dataset(&SyntheticSpec::default(), seed).unwrap();
        let (tr, va, te) = split(&d);
        let x = stack_features(te.samples().iter().map(|s| &s.features)).unwrap();
        let y = Array2::from_shape_vec(
            (te.len(), te.vocabulary().len()),
            te.samples()
                .iter()
                .flat_map(|s| s.labels.to_f64())
                .collect(),
        )
        .unwrap();
        for kind in LossKind::ALL {
            let cfg = TrainingConfig {
                loss: LossSpec::new(kind, DEFAULT_EPSILON).unwrap(),
                batch_size: 32,
                learning_rate: 1e-2,
                optimizer: NadamConfig::default(),
                augmentation: Augmentation::None,
                lr_reduction: Some("0.2/5/f1".parse().unwrap()),
                early_stopping_patience: 25,
                max_epochs: 200,
                threshold: 0.5,
                seed,
            };
            let head = HeadConfig {
                hidden_sizes: vec![32],
                dropout_p: 0.0,
                output_size: d.vocabulary().len(),
                seed,
            };
            let params = init_model(&head, d.feature_dim().unwrap()).unwrap();
            let out = train(params, &tr, &va, &cfg).unwrap();
            let (_, f1) = evaluate_split(&out.params, &x, &y, &cfg.loss, cfg.threshold).unwrap();
            println!(
                "{seed},{kind},{},{},{f1:.4}",
                out.history.len(),
                out.best_epoch.map_or(-1, |e| e as i64)
            );
        }
    }
}

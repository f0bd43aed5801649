//! Thresholding and the sample-averaged F1 score used for evaluation.

use crate::error::{Error, Result};
use crate::label_space::MultiHotVector;

/// Sigmoid outputs of the model for one sample; every element in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionVector(Vec<f64>);

impl PredictionVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::invalid(format!(
                "prediction score {s} outside [0, 1]"
            )));
        }
        Ok(PredictionVector(scores))
    }

    pub fn scores(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Marks every label whose score is at or above `threshold`.
pub fn threshold_predictions(scores: &PredictionVector, threshold: f64) -> Result<MultiHotVector> {
    check_threshold(threshold)?;
    Ok(MultiHotVector::from_bools(
        scores.scores().iter().map(|&s| s >= threshold),
    ))
}

pub(crate) fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "threshold {threshold} outside (0, 1)"
        )))
    }
}

/// Precision, recall and F1 of one predicted label set against the truth.
///
/// Two empty sets score 1.0 on all three. When exactly one side is empty the
/// score is 0.0.
pub fn sample_f1(truth: &MultiHotVector, pred: &MultiHotVector) -> Result<SampleScore> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (&t, &p) in truth.bits().iter().zip(pred.bits()) {
        match (t, p) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (1, 0) => fn_ += 1,
            _ => {}
        }
    }
    if tp + fp + fn_ == 0 {
        return Ok(SampleScore {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        });
    }
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    Ok(SampleScore {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        // 2pr/(p+r) reduces to 2tp/(2tp+fp+fn) over the integer counts
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
    })
}

/// Arithmetic mean of per-sample F1 over paired label vectors.
pub fn mean_f1(truths: &[MultiHotVector], preds: &[MultiHotVector]) -> Result<f64> {
    if truths.len() != preds.len() {
        return Err(Error::LengthMismatch {
            expected: truths.len(),
            actual: preds.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sum = 0.0;
    for (t, p) in truths.iter().zip(preds) {
        sum += sample_f1(t, p)?.f1;
    }
    Ok(sum / truths.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn mh(bits: &[u8]) -> MultiHotVector {
        MultiHotVector::from_bits(bits.to_vec()).unwrap()
    }

    // Set-based F1 built from explicit intersections, independent of the counting path.
    fn oracle_f1(truth: &MultiHotVector, pred: &MultiHotVector) -> f64 {
        let t: HashSet<usize> = truth.ones().collect();
        let p: HashSet<usize> = pred.ones().collect();
        if t.is_empty() && p.is_empty() {
            return 1.0;
        }
        if t.is_empty() || p.is_empty() {
            return 0.0;
        }
        let inter = t.intersection(&p).count() as f64;
        let precision = inter / p.len() as f64;
        let recall = inter / t.len() as f64;
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    }

    #[test]
    fn threshold_examples() {
        let s = PredictionVector::new(vec![0.9, 0.1]).unwrap();
        assert_eq!(threshold_predictions(&s, 0.5).unwrap().bits(), &[1, 0]);
        let s = PredictionVector::new(vec![0.5]).unwrap();
        assert_eq!(threshold_predictions(&s, 0.5).unwrap().bits(), &[1]);
        for t in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(threshold_predictions(&s, t).is_err());
        }
        assert!(PredictionVector::new(vec![1.1]).is_err());
    }

    #[test]
    fn threshold_matches_elementwise_compare() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let scores: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
            let t = rng.random_range(0.05..0.95);
            let got =
                threshold_predictions(&PredictionVector::new(scores.clone()).unwrap(), t).unwrap();
            for (i, s) in scores.iter().enumerate() {
                assert_eq!(got.get(i), *s >= t);
            }
        }
    }

    #[test]
    fn sample_f1_examples() {
        let s = sample_f1(&mh(&[1, 1, 0]), &mh(&[1, 1, 0])).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));

        let s = sample_f1(&mh(&[1, 1, 0]), &mh(&[0, 1, 1])).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));

        assert_eq!(sample_f1(&mh(&[0, 0]), &mh(&[0, 0])).unwrap().f1, 1.0);
        assert_eq!(sample_f1(&mh(&[0, 0]), &mh(&[1, 0])).unwrap().f1, 0.0);
        assert_eq!(sample_f1(&mh(&[1, 0]), &mh(&[0, 0])).unwrap().f1, 0.0);
        assert!(sample_f1(&mh(&[1]), &mh(&[1, 0])).is_err());
    }

    #[test]
    fn mean_f1_examples() {
        let t = vec![mh(&[1, 0]), mh(&[0, 1])];
        assert_eq!(mean_f1(&t, &t).unwrap(), 1.0);

        let truths = vec![mh(&[1, 1, 0]), mh(&[1, 0, 0])];
        let preds = vec![mh(&[0, 1, 1]), mh(&[1, 0, 0])];
        assert_eq!(mean_f1(&truths, &preds).unwrap(), 0.75);

        assert!(mean_f1(&[], &[]).is_err());
        assert!(mean_f1(&truths, &preds[..1]).is_err());
    }

    #[test]
    fn mean_f1_matches_set_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = 24;
        let mut truths = Vec::new();
        let mut preds = Vec::new();
        for _ in 0..50 {
            truths.push(MultiHotVector::from_bools(
                (0..k).map(|_| rng.random_bool(0.2)),
            ));
            preds.push(MultiHotVector::from_bools(
                (0..k).map(|_| rng.random_bool(0.2)),
            ));
        }
        let oracle: f64 = truths
            .iter()
            .zip(&preds)
            .map(|(t, p)| oracle_f1(t, p))
            .sum::<f64>()
            / truths.len() as f64;
        assert!((mean_f1(&truths, &preds).unwrap() - oracle).abs() < 1e-12);
    }

    fn arb_pair() -> impl Strategy<Value = (Vec<bool>, Vec<bool>)> {
        (1usize..20).prop_flat_map(|k| {
            (
                prop::collection::vec(any::<bool>(), k),
                prop::collection::vec(any::<bool>(), k),
            )
        })
    }

    proptest! {
        #[test]
        fn f1_bounded_by_precision_and_recall((t, p) in arb_pair()) {
            let s = sample_f1(&MultiHotVector::from_bools(t.clone()), &MultiHotVector::from_bools(p.clone())).unwrap();
            prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-15);
            if t.iter().any(|&b| b) || p.iter().any(|&b| b) {
                prop_assert!(s.f1 <= (2.0 * s.precision).min(2.0 * s.recall) + 1e-15);
            }
        }

        #[test]
        fn f1_invariant_under_position_permutation((t, p) in arb_pair(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut perm: Vec<usize> = (0..t.len()).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let tp: Vec<bool> = perm.iter().map(|&i| t[i]).collect();
            let pp: Vec<bool> = perm.iter().map(|&i| p[i]).collect();
            let a = sample_f1(&MultiHotVector::from_bools(t), &MultiHotVector::from_bools(p)).unwrap();
            let b = sample_f1(&MultiHotVector::from_bools(tp), &MultiHotVector::from_bools(pp)).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn mean_f1_invariant_under_pair_reordering(pairs in prop::collection::vec((prop::collection::vec(any::<bool>(), 6), prop::collection::vec(any::<bool>(), 6)), 1..12)) {
            let truths: Vec<_> = pairs.iter().map(|(t, _)| MultiHotVector::from_bools(t.clone())).collect();
            let preds: Vec<_> = pairs.iter().map(|(_, p)| MultiHotVector::from_bools(p.clone())).collect();
            let fwd = mean_f1(&truths, &preds).unwrap();
            let truths_rev: Vec<_> = truths.iter().rev().cloned().collect();
            let preds_rev: Vec<_> = preds.iter().rev().cloned().collect();
            let rev = mean_f1(&truths_rev, &preds_rev).unwrap();
            prop_assert!((fwd - rev).abs() < 1e-12);
        }
    }
}

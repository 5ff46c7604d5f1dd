//! Watermark detection and correct/incorrect-key evaluation, with a kNN
//! classifier standing in for the protected model.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledImages;
use crate::error::{Error, Result};
use crate::keystream::trial_keys;
use crate::ml::{accuracy, knn_predict_all, output_features, vectorize, Dataset, FeatureVector};
use crate::transform::Transform;

pub type PredictionVector = Vec<usize>;

/// Fraction of positions where two prediction vectors agree.
pub fn watermark_detect<T: PartialEq>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyDomain(
            "watermark detection over zero predictions",
        ));
    }
    let matches = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(matches as f64 / a.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeySensitivityReport {
    /// Model trained and tested on correctly transformed data.
    pub accuracy_correct_key: f64,
    /// Mean over `trials` random incorrect keys applied to the test set.
    pub accuracy_incorrect_key_mean: f64,
    pub accuracy_incorrect_key_min: f64,
    pub accuracy_incorrect_key_max: f64,
    /// Transformed-data model on untransformed test images.
    pub accuracy_plain: f64,
    /// Plain model on plain test images, for reference.
    pub accuracy_baseline: f64,
    pub trials: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WatermarkReport {
    /// Agreement between predictions on plain and correctly transformed
    /// test images.
    pub tau_correct: f64,
    /// Mean agreement when the test images use a random incorrect key.
    pub tau_incorrect_mean: f64,
    pub tau_incorrect_max: f64,
    pub accuracy_plain: f64,
    pub accuracy_correct_key: f64,
    pub accuracy_incorrect_key_mean: f64,
    pub trials: usize,
    pub k: usize,
}

fn check_splits(train: &LabeledImages, test: &LabeledImages, trials: usize) -> Result<()> {
    if train.is_empty() {
        return Err(Error::EmptyDomain("empty training split"));
    }
    if test.is_empty() {
        return Err(Error::EmptyDomain("empty test split"));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter(
            "at least one incorrect-key trial is required".into(),
        ));
    }
    Ok(())
}

fn transformed(images: &LabeledImages, t: &Transform) -> Result<Vec<FeatureVector>> {
    images
        .images
        .iter()
        .map(|img| t.apply(img).map(|o| output_features(&o)))
        .collect()
}

fn plain(images: &LabeledImages) -> Vec<FeatureVector> {
    images.images.iter().map(vectorize).collect()
}

fn summarize(values: &[f64]) -> (f64, f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, min, max)
}

/// Trains kNN on training images transformed with the correct key (the key
/// inside `transform`) and scores it on the test set transformed with that
/// key, with `trials` incorrect keys drawn from `seed`, and untransformed.
pub fn evaluate_key_sensitivity(
    train: &LabeledImages,
    test: &LabeledImages,
    transform: &Transform,
    trials: usize,
    seed: u64,
    k: usize,
) -> Result<KeySensitivityReport> {
    check_splits(train, test, trials)?;
    let truth = &test.labels;
    let model = Dataset::new(transformed(train, transform)?, train.labels.clone())?;

    let correct = accuracy(
        &knn_predict_all(&model, &transformed(test, transform)?, k)?,
        truth,
    )?;
    let mut wrong = Vec::with_capacity(trials);
    for key in trial_keys(seed, trials) {
        let t = transform.with_key(key);
        wrong.push(accuracy(
            &knn_predict_all(&model, &transformed(test, &t)?, k)?,
            truth,
        )?);
    }
    let (mean, min, max) = summarize(&wrong);
    let plain_test = plain(test);
    let accuracy_plain = accuracy(&knn_predict_all(&model, &plain_test, k)?, truth)?;
    let baseline_model = Dataset::new(plain(train), train.labels.clone())?;
    let accuracy_baseline = accuracy(&knn_predict_all(&baseline_model, &plain_test, k)?, truth)?;

    Ok(KeySensitivityReport {
        accuracy_correct_key: correct,
        accuracy_incorrect_key_mean: mean,
        accuracy_incorrect_key_min: min,
        accuracy_incorrect_key_max: max,
        accuracy_plain,
        accuracy_baseline,
        trials,
        k,
    })
}

/// Embeds the watermark by training kNN on plain and correctly transformed
/// images together, then measures detection with the correct key and with
/// `trials` incorrect keys.
pub fn evaluate_watermark(
    train: &LabeledImages,
    test: &LabeledImages,
    transform: &Transform,
    trials: usize,
    seed: u64,
    k: usize,
) -> Result<WatermarkReport> {
    check_splits(train, test, trials)?;
    let truth = &test.labels;
    let mut samples = plain(train);
    samples.extend(transformed(train, transform)?);
    let mut labels = train.labels.clone();
    labels.extend(&train.labels);
    let model = Dataset::new(samples, labels)?;

    let on_plain = knn_predict_all(&model, &plain(test), k)?;
    let on_correct = knn_predict_all(&model, &transformed(test, transform)?, k)?;
    let mut taus = Vec::with_capacity(trials);
    let mut accs = Vec::with_capacity(trials);
    for key in trial_keys(seed, trials) {
        let preds = knn_predict_all(&model, &transformed(test, &transform.with_key(key))?, k)?;
        taus.push(watermark_detect(&on_plain, &preds)?);
        accs.push(accuracy(&preds, truth)?);
    }
    let (tau_mean, _, tau_max) = summarize(&taus);
    let (acc_mean, _, _) = summarize(&accs);
    Ok(WatermarkReport {
        tau_correct: watermark_detect(&on_plain, &on_correct)?,
        tau_incorrect_mean: tau_mean,
        tau_incorrect_max: tau_max,
        accuracy_plain: accuracy(&on_plain, truth)?,
        accuracy_correct_key: accuracy(&on_correct, truth)?,
        accuracy_incorrect_key_mean: acc_mean,
        trials,
        k,
    })
}

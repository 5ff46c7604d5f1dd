//! Checks that a transform leaves classical machine learning unaffected:
//! Euclidean distances, inner products (after z-score normalization when
//! negative-positive flips are involved) and per-feature order.
//!
//! Feature vectors use the 8-bit scale: integer images map to their pixel
//! values, so sums of squares and products stay exact in `f64` for any
//! image up to 2^53 / 255^2 pixels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::transform::{Output, Transform};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Row-major flatten with interleaved channels, on the 8-bit scale.
pub fn vectorize(img: &ImageTensor) -> FeatureVector {
    FeatureVector(img.data().iter().map(|&v| f64::from(v)).collect())
}

pub fn output_features(out: &Output) -> FeatureVector {
    FeatureVector(out.features())
}

fn same_len(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    Ok(())
}

pub fn euclid_dist2(x: &[f64], y: &[f64]) -> Result<f64> {
    same_len(x, y)?;
    Ok(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
}

pub fn inner(x: &[f64], y: &[f64]) -> Result<f64> {
    same_len(x, y)?;
    Ok(x.iter().zip(y).map(|(a, b)| a * b).sum())
}

/// Labeled feature vectors of one common length.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<FeatureVector>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(samples: Vec<FeatureVector>, labels: Vec<usize>) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: samples.len(),
                actual: labels.len(),
            });
        }
        if let Some(first) = samples.first() {
            for s in &samples {
                if s.len() != first.len() {
                    return Err(Error::LengthMismatch {
                        expected: first.len(),
                        actual: s.len(),
                    });
                }
            }
        }
        Ok(Dataset { samples, labels })
    }

    pub fn from_images(images: &[ImageTensor], labels: Vec<usize>) -> Result<Self> {
        Self::new(images.iter().map(vectorize).collect(), labels)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, FeatureVector::len)
    }

    pub fn samples(&self) -> &[FeatureVector] {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Per-feature mean.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut mean = vec![0.0; self.dim()];
        for s in &self.samples {
            for (m, v) in mean.iter_mut().zip(&s.0) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Per-feature population standard deviation.
    pub fn std(&self) -> Vec<f64> {
        let mean = self.mean();
        let n = self.len() as f64;
        let mut var = vec![0.0; self.dim()];
        for s in &self.samples {
            for ((acc, v), m) in var.iter_mut().zip(&s.0).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        var.into_iter().map(|v| (v / n).sqrt()).collect()
    }
}

/// Per-feature z-score with population standard deviation. Constant
/// features (`sigma = 0`) become 0.
pub fn zscore(data: &Dataset) -> Result<Dataset> {
    if data.len() < 2 {
        return Err(Error::EmptyDomain("z-score needs at least two samples"));
    }
    let mean = data.mean();
    let std = data.std();
    let samples = data
        .samples
        .iter()
        .map(|s| {
            FeatureVector(
                s.0.iter()
                    .zip(&mean)
                    .zip(&std)
                    .map(|((v, m), sd)| if *sd > 0.0 { (v - m) / sd } else { 0.0 })
                    .collect(),
            )
        })
        .collect();
    Ok(Dataset {
        samples,
        labels: data.labels.clone(),
    })
}

pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if gamma.is_nan() || gamma <= 0.0 || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    Ok((-gamma * euclid_dist2(x, y)?).exp())
}

pub fn poly_kernel(x: &[f64], y: &[f64], degree: u32) -> Result<f64> {
    if degree == 0 {
        return Err(Error::InvalidParameter(
            "polynomial degree must be at least 1".into(),
        ));
    }
    Ok((1.0 + inner(x, y)?).powi(degree as i32))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Kernel {
    Rbf { gamma: f64 },
    Poly { degree: u32 },
}

impl Kernel {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match *self {
            Kernel::Rbf { gamma } => rbf_kernel(x, y, gamma),
            Kernel::Poly { degree } => poly_kernel(x, y, degree),
        }
    }
}

pub fn gram_matrix(data: &Dataset, kernel: Kernel) -> Result<Vec<Vec<f64>>> {
    let s = data.samples();
    s.iter()
        .map(|a| s.iter().map(|b| kernel.eval(&a.0, &b.0)).collect())
        .collect()
}

/// `|a - b| / max(|a|, |b|)`, or 0 when both are 0.
pub fn rel_dev(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Largest entrywise relative deviation between two Gram matrices.
pub fn max_rel_gram_deviation(a: &Dataset, b: &Dataset, kernel: Kernel) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (ga, gb) = (gram_matrix(a, kernel)?, gram_matrix(b, kernel)?);
    Ok(ga
        .iter()
        .flatten()
        .zip(gb.iter().flatten())
        .map(|(&x, &y)| rel_dev(x, y))
        .fold(0.0, f64::max))
}

/// Indices of `train` sorted by squared distance to `query`, ties by index.
pub fn neighbor_order(train: &Dataset, query: &FeatureVector) -> Result<Vec<(f64, usize)>> {
    let mut d = train
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| euclid_dist2(&s.0, &query.0).map(|d| (d, i)))
        .collect::<Result<Vec<_>>>()?;
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(d)
}

/// Majority label among the `k` nearest training samples. Vote ties go to
/// the label whose closest member ranks first, then to the lower label.
pub fn knn_classify(train: &Dataset, query: &FeatureVector, k: usize) -> Result<usize> {
    if train.is_empty() {
        return Err(Error::EmptyDomain("empty training set"));
    }
    if k == 0 || k > train.len() {
        return Err(Error::InvalidParameter(format!(
            "k must be in 1..={}, got {k}",
            train.len()
        )));
    }
    let order = neighbor_order(train, query)?;
    // (votes, first rank) per label
    let mut tally: Vec<(usize, usize, usize)> = Vec::new();
    for (rank, &(_, i)) in order.iter().take(k).enumerate() {
        let label = train.labels[i];
        match tally.iter_mut().find(|t| t.0 == label) {
            Some(t) => t.1 += 1,
            None => tally.push((label, 1, rank)),
        }
    }
    let best = tally
        .iter()
        .min_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)).then(a.0.cmp(&b.0)))
        .expect("k >= 1");
    Ok(best.0)
}

pub fn knn_predict_all(train: &Dataset, queries: &[FeatureVector], k: usize) -> Result<Vec<usize>> {
    queries.iter().map(|q| knn_classify(train, q, k)).collect()
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyDomain("accuracy over zero samples"));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureOrder {
    Preserved,
    Reversed,
    Broken,
}

/// Ranking of samples along one feature before and after a transform.
pub fn compare_order(before: &[f64], after: &[f64]) -> FeatureOrder {
    let (mut preserved, mut reversed) = (true, true);
    for i in 0..before.len() {
        for j in i + 1..before.len() {
            let a = before[i].total_cmp(&before[j]);
            let b = after[i].total_cmp(&after[j]);
            preserved &= a == b;
            reversed &= a == b.reverse();
            if !preserved && !reversed {
                return FeatureOrder::Broken;
            }
        }
    }
    if preserved {
        FeatureOrder::Preserved
    } else {
        FeatureOrder::Reversed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub samples: usize,
    pub dim: usize,
    /// max over pairs of `|dist2(x_i, x_j) - dist2(x'_i, x'_j)|`.
    pub max_abs_distance_dev: f64,
    /// max over pairs of `|<x_i, x_j> - <x'_i, x'_j>|` on raw values.
    pub max_abs_inner_dev: f64,
    /// Same after z-scoring both datasets, divided by the largest
    /// `|<z_i, z_j>|`.
    pub max_rel_inner_dev_zscore: f64,
    /// Per output feature: true if the cross-sample ranking of its source
    /// feature is preserved or exactly reversed. Empty when the transform
    /// has no feature correspondence.
    pub order_preserved: Vec<bool>,
    pub features_preserved: usize,
    pub features_reversed: usize,
    pub features_broken: usize,
}

impl PropertyReport {
    pub fn all_orders_kept(&self) -> bool {
        !self.order_preserved.is_empty() && self.features_broken == 0
    }
}

fn exact_pair_stats(a: &[u8], b: &[u8]) -> (i64, i64) {
    let (mut d2, mut ip) = (0i64, 0i64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (i64::from(x), i64::from(y));
        d2 += (x - y) * (x - y);
        ip += x * y;
    }
    (d2, ip)
}

/// Compares distances, inner products and feature order between a set of
/// images and their transformed versions.
pub fn verify_properties(images: &[ImageTensor], transform: &Transform) -> Result<PropertyReport> {
    let Some(first) = images.first() else {
        return Err(Error::EmptyDomain("no images to verify"));
    };
    if images.len() < 2 {
        return Err(Error::EmptyDomain(
            "property checks need at least two images",
        ));
    }
    for img in images {
        if !img.same_shape(first) {
            return Err(Error::Dimension(format!(
                "image shape {}x{}x{} differs from {}x{}x{}",
                img.channels(),
                img.height(),
                img.width(),
                first.channels(),
                first.height(),
                first.width()
            )));
        }
    }
    let outputs = images
        .iter()
        .map(|i| transform.apply(i))
        .collect::<Result<Vec<_>>>()?;
    let n = images.len();

    let (mut dist_dev, mut inner_dev) = (0.0f64, 0.0f64);
    let all_pixels = outputs.iter().all(|o| matches!(o, Output::Pixels(_)));
    if all_pixels {
        let enc: Vec<&[u8]> = outputs.iter().map(|o| o.pixels().unwrap().data()).collect();
        for i in 0..n {
            for j in i..n {
                let (d, p) = exact_pair_stats(images[i].data(), images[j].data());
                let (d2, p2) = exact_pair_stats(enc[i], enc[j]);
                dist_dev = dist_dev.max((d - d2).abs() as f64);
                inner_dev = inner_dev.max((p - p2).abs() as f64);
            }
        }
    }

    let plain = Dataset::from_images(images, vec![0; n])?;
    let encrypted = Dataset::new(outputs.iter().map(output_features).collect(), vec![0; n])?;
    if plain.dim() != encrypted.dim() {
        return Err(Error::Dimension(
            "transform changed the number of features".into(),
        ));
    }
    if !all_pixels {
        for i in 0..n {
            for j in i..n {
                let (a, b) = (&plain.samples[i].0, &plain.samples[j].0);
                let (x, y) = (&encrypted.samples[i].0, &encrypted.samples[j].0);
                dist_dev = dist_dev.max((euclid_dist2(a, b)? - euclid_dist2(x, y)?).abs());
                inner_dev = inner_dev.max((inner(a, b)? - inner(x, y)?).abs());
            }
        }
    }

    let (zp, ze) = (zscore(&plain)?, zscore(&encrypted)?);
    let (mut zdev, mut zscale) = (0.0f64, 0.0f64);
    for i in 0..n {
        for j in i..n {
            let a = inner(&zp.samples[i].0, &zp.samples[j].0)?;
            let b = inner(&ze.samples[i].0, &ze.samples[j].0)?;
            zdev = zdev.max((a - b).abs());
            zscale = zscale.max(a.abs()).max(b.abs());
        }
    }
    let max_rel_inner_dev_zscore = if zscale > 0.0 { zdev / zscale } else { zdev };

    let d = plain.dim();
    let source: Option<Vec<usize>> =
        match transform.signed_feature_map(first.channels(), first.height(), first.width())? {
            Some(map) => Some(map.into_iter().map(|(s, _)| s).collect()),
            None if transform.keeps_positions() => Some((0..d).collect()),
            None => None,
        };
    let mut orders = Vec::new();
    if let Some(source) = source {
        let mut before = vec![0.0; n];
        let mut after = vec![0.0; n];
        for (k, &src) in source.iter().enumerate() {
            for i in 0..n {
                before[i] = plain.samples[i].0[src];
                after[i] = encrypted.samples[i].0[k];
            }
            orders.push(compare_order(&before, &after));
        }
    }
    let count = |o: FeatureOrder| orders.iter().filter(|&&x| x == o).count();
    Ok(PropertyReport {
        samples: n,
        dim: d,
        max_abs_distance_dev: dist_dev,
        max_abs_inner_dev: inner_dev,
        max_rel_inner_dev_zscore,
        order_preserved: orders.iter().map(|&o| o != FeatureOrder::Broken).collect(),
        features_preserved: count(FeatureOrder::Preserved),
        features_reversed: count(FeatureOrder::Reversed),
        features_broken: count(FeatureOrder::Broken),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector(v.to_vec())
    }

    #[test]
    fn vectorize_row_major() {
        let img = ImageTensor::new(1, 2, 2, vec![1, 2, 3, 4]).unwrap();
        assert_eq!(vectorize(&img).0, vec![1.0, 2.0, 3.0, 4.0]);
        let rgb = ImageTensor::new(3, 1, 1, vec![9, 8, 7]).unwrap();
        assert_eq!(vectorize(&rgb).len(), 3);
    }

    #[test]
    fn distances_and_inner() {
        assert_eq!(euclid_dist2(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(inner(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(euclid_dist2(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 25.0);
        assert!(inner(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn kernels() {
        let x = [0.3, -1.2, 4.0];
        assert_eq!(rbf_kernel(&x, &x, 0.5).unwrap(), 1.0);
        assert_eq!(poly_kernel(&[0.0; 3], &x, 3).unwrap(), 1.0);
        assert!(
            (rbf_kernel(&[0.0, 0.0], &[3.0, 4.0], 0.01).unwrap() - (-0.25f64).exp()).abs() < 1e-15
        );
        assert!(rbf_kernel(&x, &x, 0.0).is_err());
        assert!(poly_kernel(&x, &x, 0).is_err());
    }

    #[test]
    fn zscore_two_points_and_constant() {
        let d = Dataset::new(vec![fv(&[0.0, 5.0]), fv(&[255.0, 5.0])], vec![0, 1]).unwrap();
        let z = zscore(&d).unwrap();
        assert_eq!(z.samples()[0].0, vec![-1.0, 0.0]);
        assert_eq!(z.samples()[1].0, vec![1.0, 0.0]);
        let one = Dataset::new(vec![fv(&[1.0])], vec![0]).unwrap();
        assert!(zscore(&one).is_err());
    }

    #[test]
    fn zscore_sign_inversion_under_negpos() {
        let rows = [
            [12.0, 200.0, 7.0],
            [99.0, 3.0, 7.0],
            [250.0, 128.0, 7.0],
            [0.0, 64.0, 7.0],
        ];
        let plain = Dataset::new(rows.iter().map(|r| fv(r)).collect(), vec![0; 4]).unwrap();
        let neg = Dataset::new(
            rows.iter().map(|r| fv(&r.map(|v| 255.0 - v))).collect(),
            vec![0; 4],
        )
        .unwrap();
        let (zp, zn) = (zscore(&plain).unwrap(), zscore(&neg).unwrap());
        for (a, b) in zp.samples().iter().zip(zn.samples()) {
            for (x, y) in a.0.iter().zip(&b.0) {
                assert!((x + y).abs() < 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn zscore_idempotent() {
        let rows = [[1.0, 2.0, 9.0], [4.0, 8.0, 9.0], [7.0, 1.0, 9.0]];
        let d = Dataset::new(rows.iter().map(|r| fv(r)).collect(), vec![0; 3]).unwrap();
        let once = zscore(&d).unwrap();
        let twice = zscore(&once).unwrap();
        for (a, b) in once.samples().iter().zip(twice.samples()) {
            for (x, y) in a.0.iter().zip(&b.0) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn knn_trivial_cases() {
        let one = Dataset::new(vec![fv(&[1.0, 1.0])], vec![4]).unwrap();
        assert_eq!(knn_classify(&one, &fv(&[100.0, -3.0]), 1).unwrap(), 4);
        let same = Dataset::new(vec![fv(&[0.0]), fv(&[1.0]), fv(&[5.0])], vec![2, 2, 2]).unwrap();
        assert_eq!(knn_classify(&same, &fv(&[3.0]), 3).unwrap(), 2);
        let empty = Dataset::new(vec![], vec![]).unwrap();
        assert!(matches!(
            knn_classify(&empty, &fv(&[0.0]), 1),
            Err(Error::EmptyDomain(_))
        ));
        assert!(knn_classify(&same, &fv(&[0.0]), 4).is_err());
    }

    #[test]
    fn knn_five_point_instance() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0], [6.0, 5.0]];
        let labels = vec![0, 0, 1, 1, 1];
        let train = Dataset::new(pts.iter().map(|p| fv(p)).collect(), labels.clone()).unwrap();
        let q = fv(&[0.9, 0.8]);
        // brute force: sort every distance and vote
        let mut all: Vec<(f64, usize)> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| ((p[0] - 0.9f64).powi(2) + (p[1] - 0.8f64).powi(2), labels[i]))
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        // d2 = 0.65 (label 0), 0.85 (label 1), 1.45 (label 0), then the far pair
        assert_eq!(all.iter().take(3).filter(|x| x.1 == 0).count(), 2);
        assert_eq!(knn_classify(&train, &q, 3).unwrap(), 0);
        assert_eq!(knn_classify(&train, &q, 5).unwrap(), 1);
    }

    #[test]
    fn knn_tie_goes_to_nearest_label() {
        let train = Dataset::new(vec![fv(&[0.0]), fv(&[3.0])], vec![1, 0]).unwrap();
        assert_eq!(knn_classify(&train, &fv(&[1.0]), 2).unwrap(), 1);
        assert_eq!(knn_classify(&train, &fv(&[2.0]), 2).unwrap(), 0);
        // equidistant: rank by index, then label 1 wins because it is sample 0
        assert_eq!(knn_classify(&train, &fv(&[1.5]), 2).unwrap(), 1);
    }

    #[test]
    fn order_comparison() {
        assert_eq!(
            compare_order(&[1.0, 2.0, 3.0], &[5.0, 6.0, 9.0]),
            FeatureOrder::Preserved
        );
        assert_eq!(
            compare_order(&[1.0, 2.0, 3.0], &[254.0, 253.0, 252.0]),
            FeatureOrder::Reversed
        );
        assert_eq!(
            compare_order(&[1.0, 2.0, 3.0], &[2.0, 1.0, 3.0]),
            FeatureOrder::Broken
        );
        assert_eq!(
            compare_order(&[4.0, 4.0], &[1.0, 1.0]),
            FeatureOrder::Preserved
        );
    }

    #[test]
    fn accuracy_counts() {
        assert_eq!(accuracy(&[1, 0, 1, 1], &[1, 0, 0, 1]).unwrap(), 0.75);
        assert!(accuracy(&[], &[]).is_err());
    }
}

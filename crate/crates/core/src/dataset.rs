//! Labeled image collections: a directory of PGM/PPM files plus a
//! `labels.csv` with `filename,label` rows, and a synthetic generator.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::image::{read_image, write_image, ImageTensor};
use crate::ml::{vectorize, Dataset};

pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImages {
    pub images: Vec<ImageTensor>,
    /// Index into `classes`.
    pub labels: Vec<usize>,
    /// Sorted class names.
    pub classes: Vec<String>,
    pub files: Vec<String>,
}

impl LabeledImages {
    pub fn new(images: Vec<ImageTensor>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: images.len(),
                actual: labels.len(),
            });
        }
        let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
        Ok(LabeledImages {
            files: (0..images.len())
                .map(|i| {
                    format!(
                        "img{i:04}.p{}m",
                        if images[i].channels() == 1 { 'g' } else { 'p' }
                    )
                })
                .collect(),
            images,
            labels,
            classes: (0..n_classes).map(|c| c.to_string()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn to_dataset(&self) -> Result<Dataset> {
        Dataset::new(
            self.images.iter().map(vectorize).collect(),
            self.labels.clone(),
        )
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }
}

fn parse_labels(text: &str) -> Result<Vec<(String, String)>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((file, label)) = line.split_once(',') else {
            return Err(Error::Dataset(format!(
                "line {}: expected filename,label",
                lineno + 1
            )));
        };
        let (file, label) = (file.trim(), label.trim());
        if lineno == 0
            && file.eq_ignore_ascii_case("filename")
            && label.eq_ignore_ascii_case("label")
        {
            continue;
        }
        if file.is_empty() || label.is_empty() {
            return Err(Error::Dataset(format!("line {}: empty field", lineno + 1)));
        }
        rows.push((file.to_string(), label.to_string()));
    }
    Ok(rows)
}

/// Loads `dir/labels.csv` and every image it names, in file order.
pub fn load_labeled_dir(dir: impl AsRef<Path>) -> Result<LabeledImages> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join(LABELS_FILE))?;
    let rows = parse_labels(&text)?;
    if rows.is_empty() {
        return Err(Error::Dataset(format!(
            "{} lists no images",
            dir.join(LABELS_FILE).display()
        )));
    }
    let classes: Vec<String> = rows
        .iter()
        .map(|r| r.1.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut images = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    let mut files = Vec::with_capacity(rows.len());
    for (file, label) in rows {
        images.push(read_image(dir.join(&file))?);
        labels.push(classes.binary_search(&label).unwrap());
        files.push(file);
    }
    Ok(LabeledImages {
        images,
        labels,
        classes,
        files,
    })
}

pub fn save_labeled_dir(data: &LabeledImages, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut csv = String::from("filename,label\n");
    for ((img, &label), file) in data.images.iter().zip(&data.labels).zip(&data.files) {
        write_image(img, dir.join(file))?;
        csv.push_str(&format!("{file},{}\n", data.classes[label]));
    }
    fs::write(dir.join(LABELS_FILE), csv)?;
    Ok(())
}

/// Parameters of the synthetic prototype dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub prototypes_per_class: usize,
    pub samples_per_prototype: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Prototype pixels are `128 +- amplitude`.
    pub amplitude: u8,
    /// Per-sample uniform noise in `-noise..=noise`.
    pub noise: u8,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 2,
            prototypes_per_class: 10,
            samples_per_prototype: 2,
            channels: 3,
            height: 16,
            width: 16,
            amplitude: 60,
            noise: 10,
        }
    }
}

/// Separable synthetic images: each class owns a few random `+-amplitude`
/// sign patterns around mid-gray, and every sample is one pattern plus small
/// uniform noise. Returns `(train, test)` drawn from the same prototypes.
pub fn synthetic_prototypes(
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<(LabeledImages, LabeledImages)> {
    if spec.classes == 0 || spec.prototypes_per_class == 0 || spec.samples_per_prototype == 0 {
        return Err(Error::InvalidParameter(
            "synthetic dataset needs at least one sample".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let d = spec.channels * spec.height * spec.width;
    let mut protos = Vec::new();
    for class in 0..spec.classes {
        for _ in 0..spec.prototypes_per_class {
            let signs: Vec<bool> = (0..d).map(|_| rng.gen()).collect();
            protos.push((class, signs));
        }
    }
    let draw = |rng: &mut ChaCha20Rng| -> Result<LabeledImages> {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for (class, signs) in &protos {
            for _ in 0..spec.samples_per_prototype {
                let data = signs
                    .iter()
                    .map(|&s| {
                        let base = if s {
                            128 + i32::from(spec.amplitude)
                        } else {
                            128 - i32::from(spec.amplitude)
                        };
                        let e = rng.gen_range(-i32::from(spec.noise)..=i32::from(spec.noise));
                        (base + e).clamp(0, 255) as u8
                    })
                    .collect();
                images.push(ImageTensor::new(
                    spec.channels,
                    spec.height,
                    spec.width,
                    data,
                )?);
                labels.push(*class);
            }
        }
        LabeledImages::new(images, labels)
    };
    let train = draw(&mut rng)?;
    let test = draw(&mut rng)?;
    Ok((train, test))
}

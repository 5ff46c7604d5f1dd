use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use blockcrypt::dataset::{
    load_labeled_dir, save_labeled_dir, synthetic_prototypes, LabeledImages, SyntheticSpec,
};
use blockcrypt::etc::{self, keyspace_color, EtcConfig, EtcSteps, EtcVariant};
use blockcrypt::image::{read_image, write_image};
use blockcrypt::keystream::KeyFile;
use blockcrypt::learnable::{LearnableVariant, TransformSpec};
use blockcrypt::ml::{accuracy, knn_predict_all, output_features, vectorize, Dataset};
use blockcrypt::transform::{Output, Transform};
use blockcrypt::watermark::{evaluate_key_sensitivity, watermark_detect};
use blockcrypt::{Error, Result, SecretKey};
use rand::rngs::OsRng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::{
    Command, EtcArgs, EtcKind, LearnArgs, LearnKind, OptTransformArgs, Step, TransformArgs,
    TransformKind,
};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Keygen {
            out,
            seed,
            ffx_password,
        } => keygen(&out, seed, ffx_password),
        Command::Encrypt(args) => etc_command(&args, true),
        Command::Decrypt(args) => etc_command(&args, false),
        Command::Transform(args) => transform_command(&args),
        Command::Invert(args) => invert_command(&args),
        Command::Keyspace { x, y, bx, by } => emit(&keyspace_color(x, y, bx, by)?),
        Command::Verify { transform, dataset } => {
            let t = build(&transform)?;
            let data = at(&dataset, load_labeled_dir(&dataset))?;
            emit(&blockcrypt::ml::verify_properties(&data.images, &t)?)
        }
        Command::Knn {
            train,
            test,
            k,
            transform,
            preds,
        } => knn_command(&train, &test, k, &transform, preds.as_deref()),
        Command::Keysense {
            transform,
            data,
            trials,
            seed,
            k,
        } => {
            let t = build(&transform)?;
            let (train_dir, test_dir) = (data.join("train"), data.join("test"));
            let train = at(&train_dir, load_labeled_dir(&train_dir))?;
            let test = align_labels(&train, at(&test_dir, load_labeled_dir(&test_dir))?);
            emit(&evaluate_key_sensitivity(
                &train, &test, &t, trials, seed, k,
            )?)
        }
        Command::Watermark { preds_a, preds_b } => {
            let a = read_predictions(&preds_a)?;
            let b = read_predictions(&preds_b)?;
            emit(&WatermarkOut {
                tau: watermark_detect(&a, &b)?,
                n: a.len(),
            })
        }
        Command::Synth {
            out,
            seed,
            classes,
            prototypes,
            samples,
            size,
        } => {
            let spec = SyntheticSpec {
                classes,
                prototypes_per_class: prototypes,
                samples_per_prototype: samples,
                height: size,
                width: size,
                ..SyntheticSpec::default()
            };
            let (train, test) = synthetic_prototypes(&spec, seed)?;
            let (train_dir, test_dir) = (out.join("train"), out.join("test"));
            at(&train_dir, save_labeled_dir(&train, &train_dir))?;
            at(&test_dir, save_labeled_dir(&test, &test_dir))
        }
    }
}

fn emit<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Prefix I/O errors with the path involved.
fn at<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    })
}

fn keygen(out: &Path, seed: Option<u64>, ffx_password: Option<String>) -> Result<()> {
    let key = match seed {
        Some(s) => SecretKey::random(&mut ChaCha20Rng::seed_from_u64(s)),
        None => SecretKey::random(&mut OsRng),
    };
    let mut file = KeyFile::new(&key);
    file.ffx = ffx_password;
    at(out, file.save(out))
}

fn load_key(path: &Path) -> Result<(SecretKey, KeyFile)> {
    let file = at(path, KeyFile::load(path))?;
    Ok((file.master()?, file))
}

fn steps(list: &Option<Vec<Step>>) -> EtcSteps {
    match list {
        None => EtcSteps::default(),
        Some(list) => EtcSteps {
            scramble: list.contains(&Step::Scramble),
            rotate_invert: list.contains(&Step::Rotate),
            negpos: list.contains(&Step::Negpos),
            color_shuffle: list.contains(&Step::Color),
        },
    }
}

fn etc_variant(kind: EtcKind) -> EtcVariant {
    match kind {
        EtcKind::Color => EtcVariant::Color,
        EtcKind::GrayscaleRgb => EtcVariant::GrayscaleRgb,
        EtcKind::GrayscaleYcbcr => EtcVariant::GrayscaleYcbcr,
    }
}

fn learn_variant(kind: LearnKind) -> LearnableVariant {
    match kind {
        LearnKind::Pixelwise => LearnableVariant::Pixelwise,
        LearnKind::Shf => LearnableVariant::Shf,
        LearnKind::Neg => LearnableVariant::Neg,
        LearnKind::Ffx => LearnableVariant::Ffx,
    }
}

fn learn_spec(
    variant: LearnableVariant,
    block: usize,
    key: SecretKey,
    file: &KeyFile,
) -> Result<TransformSpec> {
    let spec = TransformSpec::new(variant, block, key)?;
    // only an explicit password is pinned; otherwise it follows the key
    Ok(match &file.ffx {
        Some(_) if variant == LearnableVariant::Ffx => spec.with_ffx_password(file.ffx_password()?),
        _ => spec,
    })
}

fn make_transform(
    kind: TransformKind,
    key_path: &Path,
    bx: usize,
    by: usize,
    block: usize,
    step_list: &Option<Vec<Step>>,
) -> Result<Transform> {
    let (key, file) = load_key(key_path)?;
    let etc = |v| -> Result<Transform> {
        Ok(EtcConfig::with_steps(v, bx, by, key.clone(), steps(step_list))?.into())
    };
    let learn = |v| -> Result<Transform> { Ok(learn_spec(v, block, key.clone(), &file)?.into()) };
    match kind {
        TransformKind::EtcColor => etc(EtcVariant::Color),
        TransformKind::EtcGrayscaleRgb => etc(EtcVariant::GrayscaleRgb),
        TransformKind::EtcGrayscaleYcbcr => etc(EtcVariant::GrayscaleYcbcr),
        TransformKind::Pixelwise => learn(LearnableVariant::Pixelwise),
        TransformKind::Shf => learn(LearnableVariant::Shf),
        TransformKind::Neg => learn(LearnableVariant::Neg),
        TransformKind::Ffx => learn(LearnableVariant::Ffx),
    }
}

fn build(a: &TransformArgs) -> Result<Transform> {
    make_transform(a.kind, &a.key, a.bx, a.by, a.block, &a.steps)
}

fn etc_command(args: &EtcArgs, forward: bool) -> Result<()> {
    let (key, _) = load_key(&args.key)?;
    let cfg = EtcConfig::with_steps(
        etc_variant(args.variant),
        args.bx,
        args.by,
        key,
        steps(&args.steps),
    )?;
    let img = at(&args.input, read_image(&args.input))?;
    let out = if forward {
        etc::encrypt(&img, &cfg)?
    } else {
        etc::decrypt(&img, &cfg)?
    };
    at(&args.output, write_image(&out, &args.output))
}

#[derive(Serialize)]
struct FfxSidecar {
    variant: &'static str,
    block: usize,
    max: u16,
}

fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn transform_command(args: &LearnArgs) -> Result<()> {
    let (key, file) = load_key(&args.key)?;
    let spec = learn_spec(learn_variant(args.variant), args.block, key, &file)?;
    let img = at(&args.input, read_image(&args.input))?;
    match Transform::from(spec).apply(&img)? {
        Output::Pixels(p) => at(&args.output, write_image(&p, &args.output)),
        Output::Ffx { max, image, .. } => {
            at(&args.output, write_image(&image.quantize(), &args.output))?;
            let side = FfxSidecar {
                variant: "ffx",
                block: args.block,
                max,
            };
            let mut text = serde_json::to_string_pretty(&side)?;
            text.push('\n');
            let side_path = sidecar_path(&args.output);
            at(&side_path, fs::write(&side_path, text).map_err(Error::from))?;
            Ok(())
        }
    }
}

fn invert_command(args: &LearnArgs) -> Result<()> {
    let (key, file) = load_key(&args.key)?;
    let spec = learn_spec(learn_variant(args.variant), args.block, key, &file)?;
    let img = at(&args.input, read_image(&args.input))?;
    let out = Transform::from(spec).invert(&img)?;
    at(&args.output, write_image(&out, &args.output))
}

/// Re-index `test` labels into `train`'s class list. Classes the training
/// split never saw get an index no prediction can match.
fn align_labels(train: &LabeledImages, mut test: LabeledImages) -> LabeledImages {
    let unseen = train.classes.len();
    test.labels = test
        .labels
        .iter()
        .map(|&l| {
            train
                .classes
                .iter()
                .position(|c| *c == test.classes[l])
                .unwrap_or(unseen)
        })
        .collect();
    test.classes = train.classes.clone();
    test
}

#[derive(Serialize)]
struct KnnOut {
    k: usize,
    accuracy: f64,
    predictions: Vec<String>,
}

#[derive(Serialize)]
struct WatermarkOut {
    tau: f64,
    n: usize,
}

fn knn_command(
    train: &Path,
    test: &Path,
    k: usize,
    t: &OptTransformArgs,
    preds: Option<&Path>,
) -> Result<()> {
    let train_set = at(train, load_labeled_dir(train))?;
    let test = align_labels(&train_set, at(test, load_labeled_dir(test))?);
    let train = train_set;
    let transform = match (&t.kind, &t.key) {
        (Some(kind), Some(key)) => Some(make_transform(*kind, key, t.bx, t.by, t.block, &t.steps)?),
        _ => None,
    };
    let features = |data: &LabeledImages| -> Result<Vec<_>> {
        data.images
            .iter()
            .map(|img| match &transform {
                Some(t) => t.apply(img).map(|o| output_features(&o)),
                None => Ok(vectorize(img)),
            })
            .collect()
    };
    let model = Dataset::new(features(&train)?, train.labels.clone())?;
    let predicted = knn_predict_all(&model, &features(&test)?, k)?;
    let names: Vec<String> = predicted
        .iter()
        .map(|&p| train.classes[p].clone())
        .collect();
    if let Some(path) = preds {
        let mut csv = String::from("filename,label\n");
        for (file, name) in test.files.iter().zip(&names) {
            csv.push_str(&format!("{file},{name}\n"));
        }
        at(path, fs::write(path, csv).map_err(Error::from))?;
    }
    emit(&KnnOut {
        k,
        accuracy: accuracy(&predicted, &test.labels)?,
        predictions: names,
    })
}

/// Labels from a `filename,label` or one-label-per-line file.
fn read_predictions(path: &Path) -> Result<Vec<String>> {
    let text = at(path, fs::read_to_string(path).map_err(Error::from))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let label = line.rsplit(',').next().unwrap_or(line).trim();
        if i == 0 && label.eq_ignore_ascii_case("label") {
            continue;
        }
        if label.is_empty() {
            return Err(Error::Format(format!(
                "{}: line {} has an empty label",
                path.display(),
                i + 1
            )));
        }
        out.push(label.to_string());
    }
    Ok(out)
}

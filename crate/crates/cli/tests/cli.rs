use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use blockcrypt::image::{read_image, write_image};
use blockcrypt::ImageTensor;
use serde_json::Value;

/// Runs the binary in `dir` with a whitespace-separated argument string.
fn bin(dir: &Path, args: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blockcrypt"))
        .current_dir(dir)
        .args(args.split_whitespace())
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &str) -> Vec<u8> {
    let out = bin(dir, args);
    assert!(
        out.status.success(),
        "{args} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn json(dir: &Path, args: &str) -> Value {
    serde_json::from_slice(&ok(dir, args)).unwrap()
}

fn code(dir: &Path, args: &str) -> Option<i32> {
    bin(dir, args).status.code()
}

fn gradient(h: usize, w: usize) -> ImageTensor {
    ImageTensor::from_fn(3, h, w, |y, x, c| (y * 7 + x * 3 + c * 85) as u8).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), "keygen -o k.json --seed 42");
    write_image(&gradient(32, 48), dir.path().join("in.ppm")).unwrap();
    dir
}

#[test]
fn encrypt_decrypt_round_trip() {
    let dir = setup();
    let d = dir.path();
    ok(
        d,
        "encrypt --variant color --bx 16 --by 16 --key k.json in.ppm e.ppm",
    );
    ok(
        d,
        "decrypt --variant color --bx 16 --by 16 --key k.json e.ppm d.ppm",
    );
    let original = fs::read(d.join("in.ppm")).unwrap();
    assert_ne!(fs::read(d.join("e.ppm")).unwrap(), original);
    assert_eq!(fs::read(d.join("d.ppm")).unwrap(), original);
}

#[test]
fn grayscale_rgb_writes_packed_then_rgb() {
    let dir = setup();
    let d = dir.path();
    ok(
        d,
        "encrypt --variant grayscale-rgb --bx 8 --by 8 --key k.json in.ppm e.pgm",
    );
    let enc = read_image(d.join("e.pgm")).unwrap();
    assert_eq!((enc.channels(), enc.height(), enc.width()), (1, 96, 48));
    ok(
        d,
        "decrypt --variant grayscale-rgb --bx 8 --by 8 --key k.json e.pgm d.ppm",
    );
    assert_eq!(read_image(d.join("d.ppm")).unwrap(), gradient(32, 48));
}

#[test]
fn rectangular_blocks_need_rotation_off() {
    let dir = setup();
    let d = dir.path();
    let base = "--variant color --bx 16 --by 8 --key k.json";
    assert_eq!(code(d, &format!("encrypt {base} in.ppm e.ppm")), Some(3));
    let steps = "--steps scramble,negpos,color";
    ok(d, &format!("encrypt {base} {steps} in.ppm e.ppm"));
    ok(d, &format!("decrypt {base} {steps} e.ppm d.ppm"));
    assert_eq!(read_image(d.join("d.ppm")).unwrap(), gradient(32, 48));
}

#[test]
fn learnable_round_trip_and_ffx_sidecar() {
    let dir = setup();
    let d = dir.path();
    for variant in ["pixelwise", "shf", "neg"] {
        ok(
            d,
            &format!("transform --variant {variant} --block 4 --key k.json in.ppm t.ppm"),
        );
        ok(
            d,
            &format!("invert --variant {variant} --block 4 --key k.json t.ppm r.ppm"),
        );
        assert_eq!(
            read_image(d.join("r.ppm")).unwrap(),
            gradient(32, 48),
            "{variant}"
        );
    }
    ok(d, "transform --variant ffx --key k.json in.ppm f.ppm");
    let side: Value = serde_json::from_slice(&fs::read(d.join("f.ppm.json")).unwrap()).unwrap();
    assert_eq!(side["variant"], "ffx");
    assert!(side["max"].as_u64().unwrap() <= 999);
    assert_eq!(
        code(d, "invert --variant ffx --key k.json f.ppm g.ppm"),
        Some(3)
    );
    assert!(!d.join("g.ppm").exists());
}

#[test]
fn keyspace_report() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(dir.path(), "keyspace --x 1024 --y 768 --bx 16 --by 16");
    assert_eq!(v["n"], 3072);
    assert!((v["log2_keyspace"].as_f64().unwrap() - 51393.168707271).abs() < 1e-6);
}

#[test]
fn verify_on_synthetic_dataset() {
    let dir = setup();
    let d = dir.path();
    ok(d, "synth -o ds --prototypes 5 --samples 1");
    let v = json(
        d,
        "verify --transform etc-color --bx 8 --by 8 --key k.json --dataset ds/train",
    );
    assert_eq!(v["samples"], 10);
    assert_eq!(v["max_abs_distance_dev"], 0.0);
    assert!(v["max_rel_inner_dev_zscore"].as_f64().unwrap() <= 1e-9);
    assert_eq!(v["features_broken"], 0);
}

#[test]
fn knn_keysense_and_watermark() {
    let dir = setup();
    let d = dir.path();
    ok(d, "synth -o ds --seed 1");
    let plain = json(d, "knn --train ds/train --test ds/test --preds a.csv");
    assert_eq!(plain["accuracy"], 1.0);
    let enc = json(
        d,
        "knn --train ds/train --test ds/test --transform etc-color --bx 8 --by 8 --key k.json --preds b.csv",
    );
    assert_eq!(enc["predictions"], plain["predictions"]);
    let w = json(d, "watermark --preds-a a.csv --preds-b b.csv");
    assert_eq!(w["tau"], 1.0);

    let r = json(
        d,
        "keysense --transform neg --block 16 --key k.json --data ds --trials 10",
    );
    assert_eq!(r["trials"], 10);
    assert_eq!(r["accuracy_correct_key"], 1.0);
}

#[test]
fn watermark_from_label_lists() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("a.csv"), "label\ncat\ndog\ncat\nbird\n").unwrap();
    fs::write(
        d.join("b.csv"),
        "x.ppm,cat\ny.ppm,dog\nz.ppm,cat\nw.ppm,cat\n",
    )
    .unwrap();
    let v = json(d, "watermark --preds-a a.csv --preds-b b.csv");
    assert_eq!(v["tau"], 0.75);
    assert_eq!(v["n"], 4);
    fs::write(d.join("c.csv"), "cat\n").unwrap();
    assert_eq!(
        code(d, "watermark --preds-a a.csv --preds-b c.csv"),
        Some(3)
    );
}

#[test]
fn exit_codes() {
    let dir = setup();
    let d = dir.path();
    assert_eq!(code(d, "--help"), Some(0));
    assert_eq!(code(d, "encrypt --help"), Some(0));
    assert_eq!(code(d, ""), Some(1));
    assert_eq!(code(d, "encrypt --variant sepia"), Some(1));

    let missing = bin(d, "encrypt --variant color --key k.json nope.ppm o.ppm");
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.ppm"));

    fs::write(d.join("bad.ppm"), b"P6\n4 4\n65535\n").unwrap();
    let depth = "encrypt --variant color --bx 2 --by 2 --key k.json bad.ppm o.ppm";
    assert_eq!(code(d, depth), Some(2));
    let dims = "encrypt --variant color --bx 5 --by 5 --key k.json in.ppm o.ppm";
    assert_eq!(code(d, dims), Some(3));
    assert!(!d.join("o.ppm").exists());
}

#[test]
fn seeded_keygen_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, "keygen -o a.json --seed 7");
    ok(d, "keygen -o b.json --seed 7");
    ok(d, "keygen -o c.json");
    let a = fs::read(d.join("a.json")).unwrap();
    assert_eq!(a, fs::read(d.join("b.json")).unwrap());
    assert_ne!(a, fs::read(d.join("c.json")).unwrap());
}

//! Values frozen from `tests/oracles/reference.py`, a stdlib-only Python
//! replay that shares no code with this crate.

use blockcrypt::fpe::{FpeCipher, DEFAULT_PASSWORD};
use blockcrypt::keystream::{
    gen_binary_mask, gen_color_codes, gen_dihedral_codes, gen_permutation, labels, MaskMode,
    SecretKey,
};
use blockcrypt::learnable::{block_transform, BlockOutput, LearnableVariant, TransformSpec};
use blockcrypt::ImageTensor;

fn master() -> SecretKey {
    SecretKey::new((0u8..32).collect::<Vec<_>>()).unwrap()
}

#[test]
fn subkeys() {
    assert_eq!(
        master().derive(labels::SCRAMBLE).to_hex(),
        "8538a251805c2cac83f68fa681d3c6534d1dfc77ebccc8268b07e152ff13a7e6"
    );
    assert_eq!(
        master().derive(labels::SHF).to_hex(),
        "a6bd810c9fc746c50e6b51a4bd0fddd2a1c20b471bdd8d1830c510c27f6f1ae9"
    );
}

#[test]
fn stream_words() {
    let mut s = master().derive(labels::SCRAMBLE).stream();
    let words: Vec<u64> = (0..5).map(|_| s.next_u64()).collect();
    assert_eq!(
        words,
        [
            0x0c58d5180993abdd,
            0x531fa664277480a4,
            0x2a3925246266a56d,
            0xa4452b3b956ac121,
            0x936c2352968a05c7,
        ]
    );
}

#[test]
fn permutations() {
    let p = gen_permutation(&master().derive(labels::SCRAMBLE), 8).unwrap();
    assert_eq!(p.entries(), [5, 3, 7, 6, 4, 1, 2, 0]);
    let p = gen_permutation(&master().derive(labels::SHF), 12).unwrap();
    assert_eq!(p.entries(), [6, 5, 3, 1, 0, 2, 11, 4, 10, 9, 7, 8]);
}

fn bits(v: &[u8]) -> Vec<bool> {
    v.iter().map(|&b| b == 1).collect()
}

#[test]
fn masks() {
    let m = gen_binary_mask(
        &master().derive(labels::NEGPOS),
        16,
        MaskMode::BernoulliHalf,
    )
    .unwrap();
    assert_eq!(
        m.bits(),
        bits(&[1, 1, 1, 1, 0, 0, 1, 1, 1, 1, 0, 0, 0, 1, 0, 1])
    );
    let m = gen_binary_mask(&master().derive(labels::NEG), 9, MaskMode::BalancedExact).unwrap();
    assert_eq!(m.bits(), bits(&[1, 1, 1, 0, 0, 1, 0, 1, 0]));
}

#[test]
fn codes() {
    let c: Vec<u8> = gen_color_codes(&master().derive(labels::COLOR_SHUFFLE), 10)
        .unwrap()
        .into_iter()
        .map(|c| c.get())
        .collect();
    assert_eq!(c, [4, 1, 3, 3, 3, 4, 1, 0, 1, 5]);
    let d: Vec<u8> = gen_dihedral_codes(&master().derive(labels::ROTATE_INVERT), 10)
        .unwrap()
        .into_iter()
        .map(|c| c.get())
        .collect();
    assert_eq!(d, [7, 7, 5, 0, 5, 3, 6, 1, 4, 7]);
}

fn csv_rows(text: &str) -> impl Iterator<Item = Vec<u32>> + '_ {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
}

#[test]
fn fpe_table_matches_oracle() {
    let cipher = FpeCipher::new(DEFAULT_PASSWORD).unwrap();
    let rows: Vec<_> = csv_rows(include_str!("../testdata/fpe_golden.csv")).collect();
    assert_eq!(rows.len(), 1000);
    for row in rows {
        let (v, enc) = (row[0] as u16, row[1] as u16);
        assert_eq!(cipher.encrypt(v).unwrap(), enc, "v = {v}");
        assert_eq!(cipher.encrypt_uncached(v).unwrap(), enc);
        assert_eq!(cipher.decrypt(enc).unwrap(), v);
    }
}

fn ffx_test_image() -> ImageTensor {
    ImageTensor::from_fn(3, 16, 16, |y, x, c| {
        ((31 * y + 17 * x + 101 * c) % 256) as u8
    })
    .unwrap()
}

#[test]
fn ffx_image_matches_scalar_oracle() {
    let spec = TransformSpec::new(LearnableVariant::Ffx, 4, master()).unwrap();
    let BlockOutput::Ffx { raw, max, image } = block_transform(&ffx_test_image(), &spec).unwrap()
    else {
        panic!("expected FFX output");
    };
    assert_eq!(max, 993);
    let rows: Vec<_> = csv_rows(include_str!("../testdata/ffx_image_golden.csv")).collect();
    assert_eq!(rows.len(), raw.len());
    for row in rows {
        let i = (row[0] as usize * 16 + row[1] as usize) * 3 + row[2] as usize;
        assert_eq!(u32::from(raw[i]), row[3]);
        assert_eq!(image.data()[i], f64::from(row[3]) / 993.0);
    }
}

#[test]
fn etc_color_matches_reference_replay() {
    use blockcrypt::etc::{encrypt, EtcConfig, EtcVariant};
    use blockcrypt::image::encode_pnm;
    use sha2::{Digest, Sha256};

    let img = ImageTensor::from_fn(3, 32, 32, |y, x, c| {
        ((y * y + 3 * x + 59 * c + x * y) % 256) as u8
    })
    .unwrap();
    let cfg = EtcConfig::new(EtcVariant::Color, 8, 8, master()).unwrap();
    let ppm = encode_pnm(&encrypt(&img, &cfg).unwrap());
    assert_eq!(
        hex::encode(Sha256::digest(&ppm)),
        "54fbee68837026b39f3ddb946faa1003193e07dee59880bd13ab4862089db5e9"
    );
}

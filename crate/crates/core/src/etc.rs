//! Block-scrambling encryption for encryption-then-compression (EtC)
//! systems: the color-based scheme, the two grayscale-based schemes and the
//! brute-force key-space calculator.
//!
//! Color encryption applies, per block and in this order:
//!
//! 1. block scrambling (`K1`),
//! 2. rotation and inversion (`K2`),
//! 3. negative-positive transform, one bit per block shared by all channels
//!    (`K3`),
//! 4. color component shuffling (`K4`).
//!
//! Grayscale variants pack the three channels into one tall single-channel
//! image (R, G, B stacked vertically, optionally after a YCbCr conversion)
//! and apply steps 1-3 only. Decryption runs the inverse steps in reverse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{partition, reassemble, BlockGrid, ImageTensor};
use crate::keystream::{
    gen_binary_mask, gen_color_codes, gen_dihedral_codes, gen_permutation, labels,
    ColorShuffleCode, DihedralCode, MaskMode, SecretKey,
};

/// Channel order for each color shuffle code: output channel `k` takes input
/// channel `COLOR_TABLE[code][k]`.
pub const COLOR_TABLE: [[usize; 3]; 6] = [
    [0, 1, 2], // R G B
    [0, 2, 1], // R B G
    [1, 0, 2], // G R B
    [1, 2, 0], // G B R
    [2, 0, 1], // B R G
    [2, 1, 0], // B G R
];

/// Negative-positive transform of an `bits`-bit value.
pub fn negpos(value: u32, bit: bool, bits: u32) -> Result<u32> {
    if bits == 0 || bits > 16 {
        return Err(Error::InvalidParameter(format!(
            "unsupported bit depth {bits}"
        )));
    }
    let max = (1u32 << bits) - 1;
    if value > max {
        return Err(Error::OutOfRange { value, max });
    }
    Ok(if bit { value ^ max } else { value })
}

pub fn color_shuffle(rgb: [u8; 3], code: ColorShuffleCode) -> [u8; 3] {
    let row = COLOR_TABLE[code.get() as usize];
    [rgb[row[0]], rgb[row[1]], rgb[row[2]]]
}

pub fn color_unshuffle(rgb: [u8; 3], code: ColorShuffleCode) -> [u8; 3] {
    let row = COLOR_TABLE[code.get() as usize];
    let mut out = [0u8; 3];
    for k in 0..3 {
        out[row[k]] = rgb[k];
    }
    out
}

fn shuffle_pixels(data: &mut [u8], code: ColorShuffleCode, inverse: bool) {
    for px in data.chunks_exact_mut(3) {
        let v = [px[0], px[1], px[2]];
        let out = if inverse {
            color_unshuffle(v, code)
        } else {
            color_shuffle(v, code)
        };
        px.copy_from_slice(&out);
    }
}

fn rotate_cw(block: &ImageTensor) -> ImageTensor {
    let (h, w, c) = (block.height(), block.width(), block.channels());
    // source (y, x) lands at (x, h - 1 - y) in the w x h result
    ImageTensor::from_fn(c, w, h, |y, x, ch| block.get(h - 1 - x, y, ch)).unwrap()
}

fn flip_horizontal(block: &ImageTensor) -> ImageTensor {
    let (h, w, c) = (block.height(), block.width(), block.channels());
    ImageTensor::from_fn(c, h, w, |y, x, ch| block.get(y, w - 1 - x, ch)).unwrap()
}

/// Rotate the block clockwise by `code % 4` quarter turns, then flip it
/// horizontally if `code >= 4`.
pub fn dihedral_apply(block: &ImageTensor, code: DihedralCode) -> Result<ImageTensor> {
    if code.transposes() && block.width() != block.height() {
        return Err(Error::Dimension(format!(
            "quarter-turn rotation needs a square block, got {}x{}",
            block.width(),
            block.height()
        )));
    }
    let mut out = block.clone();
    for _ in 0..code.quarter_turns() {
        out = rotate_cw(&out);
    }
    if code.flipped() {
        out = flip_horizontal(&out);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EtcVariant {
    Color,
    GrayscaleRgb,
    GrayscaleYcbcr,
}

/// Which of the four block steps are active. Defaults to all of them; the
/// grayscale variants ignore `color_shuffle`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EtcSteps {
    pub scramble: bool,
    pub rotate_invert: bool,
    pub negpos: bool,
    pub color_shuffle: bool,
}

impl Default for EtcSteps {
    fn default() -> Self {
        EtcSteps {
            scramble: true,
            rotate_invert: true,
            negpos: true,
            color_shuffle: true,
        }
    }
}

impl EtcSteps {
    pub const NONE: EtcSteps = EtcSteps {
        scramble: false,
        rotate_invert: false,
        negpos: false,
        color_shuffle: false,
    };
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EtcConfig {
    pub variant: EtcVariant,
    pub bx: usize,
    pub by: usize,
    pub key: SecretKey,
    pub steps: EtcSteps,
}

impl EtcConfig {
    pub fn new(variant: EtcVariant, bx: usize, by: usize, key: SecretKey) -> Result<Self> {
        Self::with_steps(variant, bx, by, key, EtcSteps::default())
    }

    pub fn with_steps(
        variant: EtcVariant,
        bx: usize,
        by: usize,
        key: SecretKey,
        steps: EtcSteps,
    ) -> Result<Self> {
        if bx == 0 || by == 0 {
            return Err(Error::InvalidParameter(
                "block dimensions must be positive".into(),
            ));
        }
        if steps.rotate_invert && bx != by {
            return Err(Error::InvalidParameter(format!(
                "rotation needs square blocks, got {bx}x{by}"
            )));
        }
        Ok(EtcConfig {
            variant,
            bx,
            by,
            key,
            steps,
        })
    }

    pub fn with_key(&self, key: SecretKey) -> Self {
        EtcConfig {
            key,
            ..self.clone()
        }
    }
}

/// Per-image key material for `n` blocks.
struct BlockKeys {
    perm: Option<Vec<usize>>,
    dihedral: Option<Vec<DihedralCode>>,
    negpos: Option<Vec<bool>>,
    color: Option<Vec<ColorShuffleCode>>,
}

impl BlockKeys {
    fn generate(cfg: &EtcConfig, n: usize, color: bool) -> Result<Self> {
        let k = &cfg.key;
        let s = cfg.steps;
        Ok(BlockKeys {
            perm: s
                .scramble
                .then(|| {
                    gen_permutation(&k.derive(labels::SCRAMBLE), n).map(|p| p.entries().to_vec())
                })
                .transpose()?,
            dihedral: s
                .rotate_invert
                .then(|| gen_dihedral_codes(&k.derive(labels::ROTATE_INVERT), n))
                .transpose()?,
            negpos: s
                .negpos
                .then(|| {
                    gen_binary_mask(&k.derive(labels::NEGPOS), n, MaskMode::BernoulliHalf)
                        .map(|m| m.bits().to_vec())
                })
                .transpose()?,
            color: (color && s.color_shuffle)
                .then(|| gen_color_codes(&k.derive(labels::COLOR_SHUFFLE), n))
                .transpose()?,
        })
    }
}

fn encrypt_blocks(img: &ImageTensor, cfg: &EtcConfig, color: bool) -> Result<ImageTensor> {
    let grid = BlockGrid::for_image(img, cfg.bx, cfg.by)?;
    let blocks = partition(img, cfg.bx, cfg.by)?;
    let keys = BlockKeys::generate(cfg, grid.count(), color)?;

    let mut blocks = match &keys.perm {
        Some(perm) => perm.iter().map(|&j| blocks[j].clone()).collect(),
        None => blocks,
    };
    for (i, block) in blocks.iter_mut().enumerate() {
        if let Some(codes) = &keys.dihedral {
            *block = dihedral_apply(block, codes[i])?;
        }
        if let Some(bits) = &keys.negpos {
            if bits[i] {
                block.data_mut().iter_mut().for_each(|v| *v ^= 0xff);
            }
        }
        if let Some(codes) = &keys.color {
            shuffle_pixels(block.data_mut(), codes[i], false);
        }
    }
    reassemble(&blocks, &grid)
}

fn decrypt_blocks(img: &ImageTensor, cfg: &EtcConfig, color: bool) -> Result<ImageTensor> {
    let grid = BlockGrid::for_image(img, cfg.bx, cfg.by)?;
    let mut blocks = partition(img, cfg.bx, cfg.by)?;
    let keys = BlockKeys::generate(cfg, grid.count(), color)?;

    for (i, block) in blocks.iter_mut().enumerate() {
        if let Some(codes) = &keys.color {
            shuffle_pixels(block.data_mut(), codes[i], true);
        }
        if let Some(bits) = &keys.negpos {
            if bits[i] {
                block.data_mut().iter_mut().for_each(|v| *v ^= 0xff);
            }
        }
        if let Some(codes) = &keys.dihedral {
            *block = dihedral_apply(block, codes[i].inverse())?;
        }
    }
    let blocks = match &keys.perm {
        Some(perm) => {
            let mut out = blocks.clone();
            for (i, &j) in perm.iter().enumerate() {
                out[j] = blocks[i].clone();
            }
            out
        }
        None => blocks,
    };
    reassemble(&blocks, &grid)
}

fn expect_channels(img: &ImageTensor, expected: usize) -> Result<()> {
    if img.channels() != expected {
        return Err(Error::Channels {
            expected,
            actual: img.channels(),
        });
    }
    Ok(())
}

fn expect_variant(cfg: &EtcConfig, color: bool) -> Result<()> {
    let is_color = cfg.variant == EtcVariant::Color;
    if is_color != color {
        return Err(Error::InvalidParameter(format!(
            "variant {:?} used with the wrong cipher",
            cfg.variant
        )));
    }
    Ok(())
}

pub fn encrypt_color(img: &ImageTensor, cfg: &EtcConfig) -> Result<ImageTensor> {
    expect_variant(cfg, true)?;
    expect_channels(img, 3)?;
    encrypt_blocks(img, cfg, true)
}

pub fn decrypt_color(img: &ImageTensor, cfg: &EtcConfig) -> Result<ImageTensor> {
    expect_variant(cfg, true)?;
    expect_channels(img, 3)?;
    decrypt_blocks(img, cfg, true)
}

/// Pack an RGB image into the single-channel layout of the configured
/// grayscale variant.
pub fn pack_for_variant(img: &ImageTensor, variant: EtcVariant) -> Result<ImageTensor> {
    match variant {
        EtcVariant::GrayscaleRgb => pack_grayscale_rgb(img),
        EtcVariant::GrayscaleYcbcr => pack_grayscale_ycbcr(img),
        EtcVariant::Color => Err(Error::InvalidParameter(
            "color variant does not pack".into(),
        )),
    }
}

pub fn unpack_for_variant(img: &ImageTensor, variant: EtcVariant) -> Result<ImageTensor> {
    match variant {
        EtcVariant::GrayscaleRgb => unpack_grayscale_rgb(img),
        EtcVariant::GrayscaleYcbcr => unpack_grayscale_ycbcr(img),
        EtcVariant::Color => Err(Error::InvalidParameter(
            "color variant does not pack".into(),
        )),
    }
}

/// Encrypts a grayscale-based image. A 3-channel input is packed first; a
/// 1-channel input is taken to be packed already. The output has one
/// channel.
pub fn encrypt_grayscale(img: &ImageTensor, cfg: &EtcConfig) -> Result<ImageTensor> {
    expect_variant(cfg, false)?;
    let packed = match img.channels() {
        3 => pack_for_variant(img, cfg.variant)?,
        _ => img.clone(),
    };
    encrypt_blocks(&packed, cfg, false)
}

/// Inverse of [`encrypt_grayscale`] that stops at the packed image.
pub fn decrypt_grayscale_packed(img: &ImageTensor, cfg: &EtcConfig) -> Result<ImageTensor> {
    expect_variant(cfg, false)?;
    expect_channels(img, 1)?;
    decrypt_blocks(img, cfg, false)
}

/// Decrypts and unpacks back to RGB. Exact for `GrayscaleRgb`; within one
/// level per channel for `GrayscaleYcbcr`.
pub fn decrypt_grayscale(img: &ImageTensor, cfg: &EtcConfig) -> Result<ImageTensor> {
    unpack_for_variant(&decrypt_grayscale_packed(img, cfg)?, cfg.variant)
}

pub fn encrypt(img: &ImageTensor, cfg: &EtcConfig) -> Result<ImageTensor> {
    match cfg.variant {
        EtcVariant::Color => encrypt_color(img, cfg),
        _ => encrypt_grayscale(img, cfg),
    }
}

pub fn decrypt(img: &ImageTensor, cfg: &EtcConfig) -> Result<ImageTensor> {
    match cfg.variant {
        EtcVariant::Color => decrypt_color(img, cfg),
        _ => decrypt_grayscale(img, cfg),
    }
}

/// Stack the R, G and B planes vertically: output is `3H x W`, one channel.
pub fn pack_grayscale_rgb(img: &ImageTensor) -> Result<ImageTensor> {
    expect_channels(img, 3)?;
    let (h, w) = (img.height(), img.width());
    ImageTensor::from_fn(1, 3 * h, w, |y, x, _| img.get(y % h, x, y / h))
}

pub fn unpack_grayscale_rgb(img: &ImageTensor) -> Result<ImageTensor> {
    expect_channels(img, 1)?;
    if !img.height().is_multiple_of(3) {
        return Err(Error::Dimension(format!(
            "packed height {} is not a multiple of 3",
            img.height()
        )));
    }
    let h = img.height() / 3;
    ImageTensor::from_fn(3, h, img.width(), |y, x, c| img.get(c * h + y, x, 0))
}

#[inline]
fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Full-range BT.601 (JFIF) RGB to YCbCr, rounding half away from zero and
/// clamping to `0..=255`.
pub fn rgb_to_ycbcr([r, g, b]: [u8; 3]) -> [u8; 3] {
    let (r, g, b) = (f64::from(r), f64::from(g), f64::from(b));
    [
        to_u8(0.299 * r + 0.587 * g + 0.114 * b),
        to_u8(128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b),
        to_u8(128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b),
    ]
}

pub fn ycbcr_to_rgb([y, cb, cr]: [u8; 3]) -> [u8; 3] {
    let (y, cb, cr) = (f64::from(y), f64::from(cb) - 128.0, f64::from(cr) - 128.0);
    [
        to_u8(y + 1.402 * cr),
        to_u8(y - 0.344136 * cb - 0.714136 * cr),
        to_u8(y + 1.772 * cb),
    ]
}

fn map_pixels(img: &ImageTensor, f: fn([u8; 3]) -> [u8; 3]) -> ImageTensor {
    let mut out = img.clone();
    for px in out.data_mut().chunks_exact_mut(3) {
        px.copy_from_slice(&f([px[0], px[1], px[2]]));
    }
    out
}

/// YCbCr conversion followed by the same vertical Y, Cb, Cr stacking as
/// [`pack_grayscale_rgb`].
pub fn pack_grayscale_ycbcr(img: &ImageTensor) -> Result<ImageTensor> {
    expect_channels(img, 3)?;
    pack_grayscale_rgb(&map_pixels(img, rgb_to_ycbcr))
}

pub fn unpack_grayscale_ycbcr(img: &ImageTensor) -> Result<ImageTensor> {
    Ok(map_pixels(&unpack_grayscale_rgb(img)?, ycbcr_to_rgb))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeySpaceReport {
    /// Number of blocks.
    pub n: u64,
    /// `log2(n! * 8^n * 2^n * 6^n)`.
    pub log2_keyspace: f64,
}

/// `log2(n!)`: compensated summation up to 4096, Stirling's series above.
pub fn log2_factorial(n: u64) -> f64 {
    if n <= 4096 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for k in 2..=n {
            let y = (k as f64).log2() - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        sum
    } else {
        let x = n as f64;
        let ln = x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x)
            - 1.0 / (360.0 * x.powi(3))
            + 1.0 / (1260.0 * x.powi(5));
        ln / std::f64::consts::LN_2
    }
}

/// Number of blocks `floor((X / Bx) * (Y / By))` and the color-based key
/// space `n! * 8^n * 2^n * 6^n` in bits.
pub fn keyspace_color(x: u64, y: u64, bx: u64, by: u64) -> Result<KeySpaceReport> {
    if bx == 0 || by == 0 {
        return Err(Error::InvalidParameter(
            "block dimensions must be positive".into(),
        ));
    }
    if x == 0 || y == 0 {
        return Err(Error::InvalidParameter(
            "image dimensions must be positive".into(),
        ));
    }
    let n = (u128::from(x) * u128::from(y) / (u128::from(bx) * u128::from(by))) as u64;
    let per_block = 3.0 + 1.0 + 6f64.log2();
    Ok(KeySpaceReport {
        n,
        log2_keyspace: log2_factorial(n) + n as f64 * per_block,
    })
}

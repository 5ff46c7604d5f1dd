//! Learnable image transforms: the pixel-wise scheme and the block-wise
//! SHF / NEG / FFX transforms.
//!
//! Block-wise transforms split the image into `M x M` blocks, flatten each
//! block to a vector of length `c * M * M` and apply one keyed vector (a
//! permutation or a balanced mask) to every block alike:
//!
//! * SHF: `b'(k) = b(v[k])`.
//! * NEG: `b'(k) = b(k) ^ 255` where `r[k] = 1`.
//! * FFX: `b'(k) = Enc(b(k))` where `r[k] = 1`, then the whole image is
//!   divided by its maximum value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::etc::{color_shuffle, color_unshuffle};
use crate::fpe::FpeCipher;
use crate::image::{
    flatten_block, partition, reassemble, unflatten_block, BlockGrid, FloatImage, ImageTensor,
};
use crate::keystream::{
    gen_binary_mask, gen_color_codes, gen_permutation, labels, BinaryMask, ColorShuffleCode,
    MaskMode, PermutationVector, SecretKey,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnableVariant {
    Pixelwise,
    Shf,
    Neg,
    Ffx,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformSpec {
    pub variant: LearnableVariant,
    /// Block size `M`; ignored by the pixel-wise variant.
    pub block: usize,
    pub key: SecretKey,
    /// FFX password. `None` uses the bytes of the key's `FFX` subkey.
    pub ffx_password: Option<Vec<u8>>,
}

impl TransformSpec {
    pub fn new(variant: LearnableVariant, block: usize, key: SecretKey) -> Result<Self> {
        if block == 0 {
            return Err(Error::InvalidParameter(
                "block size must be at least 1".into(),
            ));
        }
        Ok(TransformSpec {
            variant,
            block,
            key,
            ffx_password: None,
        })
    }

    pub fn with_ffx_password(mut self, password: Vec<u8>) -> Self {
        self.ffx_password = Some(password);
        self
    }

    pub fn with_key(&self, key: SecretKey) -> Self {
        TransformSpec {
            key,
            ..self.clone()
        }
    }

    fn ffx_cipher(&self) -> Result<FpeCipher> {
        match &self.ffx_password {
            Some(p) => FpeCipher::new(p),
            None => FpeCipher::new(self.key.derive(labels::FFX).as_bytes()),
        }
    }
}

/// Keyed per-pixel negative-positive mask and color codes for an image.
pub fn pixelwise_material(
    key: &SecretKey,
    height: usize,
    width: usize,
) -> Result<(BinaryMask, Vec<ColorShuffleCode>)> {
    let n = height * width;
    let mask = gen_binary_mask(&key.derive(labels::NEGPOS), 3 * n, MaskMode::BernoulliHalf)?;
    let codes = gen_color_codes(&key.derive(labels::COLOR_SHUFFLE), n)?;
    Ok((mask, codes))
}

fn check_rgb(img: &ImageTensor) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::Channels {
            expected: 3,
            actual: img.channels(),
        });
    }
    Ok(())
}

/// Negative-positive per channel, then color shuffle per pixel, with
/// explicit key material.
pub fn pixelwise_encrypt_with(
    img: &ImageTensor,
    mask: &BinaryMask,
    codes: &[ColorShuffleCode],
) -> Result<ImageTensor> {
    check_rgb(img)?;
    check_material(img, mask, codes)?;
    let mut out = img.clone();
    for (i, px) in out.data_mut().chunks_exact_mut(3).enumerate() {
        let mut v = [px[0], px[1], px[2]];
        for (c, value) in v.iter_mut().enumerate() {
            if mask.bits()[3 * i + c] {
                *value ^= 0xff;
            }
        }
        px.copy_from_slice(&color_shuffle(v, codes[i]));
    }
    Ok(out)
}

pub fn pixelwise_decrypt_with(
    img: &ImageTensor,
    mask: &BinaryMask,
    codes: &[ColorShuffleCode],
) -> Result<ImageTensor> {
    check_rgb(img)?;
    check_material(img, mask, codes)?;
    let mut out = img.clone();
    for (i, px) in out.data_mut().chunks_exact_mut(3).enumerate() {
        let mut v = color_unshuffle([px[0], px[1], px[2]], codes[i]);
        for (c, value) in v.iter_mut().enumerate() {
            if mask.bits()[3 * i + c] {
                *value ^= 0xff;
            }
        }
        px.copy_from_slice(&v);
    }
    Ok(out)
}

fn check_material(img: &ImageTensor, mask: &BinaryMask, codes: &[ColorShuffleCode]) -> Result<()> {
    let n = img.height() * img.width();
    if mask.len() != 3 * n {
        return Err(Error::LengthMismatch {
            expected: 3 * n,
            actual: mask.len(),
        });
    }
    if codes.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: codes.len(),
        });
    }
    Ok(())
}

pub fn pixelwise_encrypt(img: &ImageTensor, key: &SecretKey) -> Result<ImageTensor> {
    check_rgb(img)?;
    let (mask, codes) = pixelwise_material(key, img.height(), img.width())?;
    pixelwise_encrypt_with(img, &mask, &codes)
}

pub fn pixelwise_decrypt(img: &ImageTensor, key: &SecretKey) -> Result<ImageTensor> {
    check_rgb(img)?;
    let (mask, codes) = pixelwise_material(key, img.height(), img.width())?;
    pixelwise_decrypt_with(img, &mask, &codes)
}

/// Key material shared by every block.
#[derive(Debug, Clone)]
pub enum BlockMaterial {
    Shf(PermutationVector),
    Neg(BinaryMask),
    Ffx { mask: BinaryMask, cipher: FpeCipher },
}

/// A block-wise transform bound to a block size and channel count.
#[derive(Debug, Clone)]
pub struct BlockTransform {
    block: usize,
    channels: usize,
    material: BlockMaterial,
}

/// Result of a forward block transform.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockOutput {
    /// SHF and NEG stay on the 8-bit integer scale.
    Pixels(ImageTensor),
    /// FFX: pre-normalization values (`0..=999`), their maximum, and the
    /// image divided by that maximum.
    Ffx {
        raw: Vec<u16>,
        max: u16,
        image: FloatImage,
    },
}

impl BlockOutput {
    /// The `[0, 1]` view.
    pub fn normalized(&self) -> FloatImage {
        match self {
            BlockOutput::Pixels(img) => img.normalized(),
            BlockOutput::Ffx { image, .. } => image.clone(),
        }
    }

    /// Values on the 8-bit scale: integers for SHF/NEG, `255 * x` for FFX.
    pub fn features(&self) -> Vec<f64> {
        match self {
            BlockOutput::Pixels(img) => img.data().iter().map(|&v| f64::from(v)).collect(),
            BlockOutput::Ffx { image, .. } => image.data().iter().map(|&v| v * 255.0).collect(),
        }
    }

    pub fn pixels(&self) -> Option<&ImageTensor> {
        match self {
            BlockOutput::Pixels(img) => Some(img),
            BlockOutput::Ffx { .. } => None,
        }
    }
}

impl BlockTransform {
    pub fn from_spec(spec: &TransformSpec, channels: usize) -> Result<Self> {
        if spec.block == 0 {
            return Err(Error::InvalidParameter(
                "block size must be at least 1".into(),
            ));
        }
        let len = channels * spec.block * spec.block;
        let material = match spec.variant {
            LearnableVariant::Shf => {
                BlockMaterial::Shf(gen_permutation(&spec.key.derive(labels::SHF), len)?)
            }
            LearnableVariant::Neg => BlockMaterial::Neg(gen_binary_mask(
                &spec.key.derive(labels::NEG),
                len,
                MaskMode::BalancedExact,
            )?),
            LearnableVariant::Ffx => BlockMaterial::Ffx {
                mask: gen_binary_mask(&spec.key.derive(labels::FFX), len, MaskMode::BalancedExact)?,
                cipher: spec.ffx_cipher()?,
            },
            LearnableVariant::Pixelwise => {
                return Err(Error::InvalidParameter(
                    "pixel-wise transform is not block-wise".into(),
                ))
            }
        };
        Ok(BlockTransform {
            block: spec.block,
            channels,
            material,
        })
    }

    pub fn with_material(block: usize, channels: usize, material: BlockMaterial) -> Result<Self> {
        let len = channels * block * block;
        let actual = match &material {
            BlockMaterial::Shf(p) => p.len(),
            BlockMaterial::Neg(m) => m.len(),
            BlockMaterial::Ffx { mask, .. } => mask.len(),
        };
        if block == 0 || actual != len {
            return Err(Error::LengthMismatch {
                expected: len,
                actual,
            });
        }
        Ok(BlockTransform {
            block,
            channels,
            material,
        })
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn material(&self) -> &BlockMaterial {
        &self.material
    }

    fn check(&self, img: &ImageTensor) -> Result<BlockGrid> {
        if img.channels() != self.channels {
            return Err(Error::Channels {
                expected: self.channels,
                actual: img.channels(),
            });
        }
        BlockGrid::for_image(img, self.block, self.block)
    }

    fn map_blocks(&self, img: &ImageTensor, f: impl Fn(Vec<u8>) -> Vec<u8>) -> Result<ImageTensor> {
        let grid = self.check(img)?;
        let blocks = partition(img, self.block, self.block)?
            .iter()
            .map(|b| {
                let flat = flatten_block(b);
                unflatten_block(
                    crate::image::FlatBlock(f(flat.0)),
                    self.channels,
                    self.block,
                    self.block,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        reassemble(&blocks, &grid)
    }

    pub fn apply(&self, img: &ImageTensor) -> Result<BlockOutput> {
        match &self.material {
            BlockMaterial::Shf(v) => {
                Ok(BlockOutput::Pixels(self.map_blocks(img, |b| v.gather(&b))?))
            }
            BlockMaterial::Neg(r) => Ok(BlockOutput::Pixels(self.map_blocks(img, |mut b| {
                for (value, &bit) in b.iter_mut().zip(r.bits()) {
                    if bit {
                        *value ^= 0xff;
                    }
                }
                b
            })?)),
            BlockMaterial::Ffx { mask, cipher } => self.apply_ffx(img, mask, cipher),
        }
    }

    fn apply_ffx(
        &self,
        img: &ImageTensor,
        mask: &BinaryMask,
        cipher: &FpeCipher,
    ) -> Result<BlockOutput> {
        let grid = self.check(img)?;
        if img.is_empty() {
            return Err(Error::EmptyDomain("FFX on an empty image"));
        }
        let mut encrypted = Vec::with_capacity(grid.count());
        for block in partition(img, self.block, self.block)? {
            let flat = flatten_block(&block);
            let out: Vec<u16> = flat
                .0
                .iter()
                .zip(mask.bits())
                .map(|(&v, &bit)| {
                    if bit {
                        cipher.encrypt(v.into())
                    } else {
                        Ok(v.into())
                    }
                })
                .collect::<Result<_>>()?;
            encrypted.push(out);
        }
        // reassemble the u16 blocks in image order
        let mut raw = vec![0u16; img.len()];
        let c = self.channels;
        let row_len = self.block * c;
        for (i, block) in encrypted.iter().enumerate() {
            let (br, bc) = (i / grid.cols, i % grid.cols);
            for y in 0..self.block {
                let dst = img.index(br * self.block + y, bc * self.block, 0);
                raw[dst..dst + row_len].copy_from_slice(&block[y * row_len..(y + 1) * row_len]);
            }
        }
        let max = raw.iter().copied().max().unwrap_or(0);
        if max == 0 {
            return Err(Error::EmptyDomain("FFX output maximum is zero"));
        }
        let data = raw.iter().map(|&v| f64::from(v) / f64::from(max)).collect();
        let image = FloatImage::new(c, img.height(), img.width(), data)?;
        Ok(BlockOutput::Ffx { raw, max, image })
    }

    pub fn invert(&self, img: &ImageTensor) -> Result<ImageTensor> {
        match &self.material {
            BlockMaterial::Shf(v) => {
                let inv = v.inverse();
                self.map_blocks(img, |b| inv.gather(&b))
            }
            BlockMaterial::Neg(_) => match self.apply(img)? {
                BlockOutput::Pixels(p) => Ok(p),
                BlockOutput::Ffx { .. } => unreachable!(),
            },
            BlockMaterial::Ffx { .. } => Err(Error::NotInvertible(
                "FFX output is normalized by a maximum that is not stored",
            )),
        }
    }
}

pub fn block_transform(img: &ImageTensor, spec: &TransformSpec) -> Result<BlockOutput> {
    BlockTransform::from_spec(spec, img.channels())?.apply(img)
}

pub fn block_transform_invert(img: &ImageTensor, spec: &TransformSpec) -> Result<ImageTensor> {
    if spec.variant == LearnableVariant::Ffx {
        return Err(Error::NotInvertible(
            "FFX output is normalized by a maximum that is not stored",
        ));
    }
    BlockTransform::from_spec(spec, img.channels())?.invert(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(b: u8) -> SecretKey {
        SecretKey::new(vec![b; 32]).unwrap()
    }

    fn noise(c: usize, h: usize, w: usize, seed: u8) -> ImageTensor {
        let mut s = key(seed).derive("noise").stream();
        ImageTensor::from_fn(c, h, w, |_, _, _| s.below(256) as u8).unwrap()
    }

    #[test]
    fn pixelwise_identity_material() {
        let img = noise(3, 4, 5, 1);
        let mask = BinaryMask::from_bits(vec![false; 60], MaskMode::BernoulliHalf);
        let codes = vec![ColorShuffleCode::IDENTITY; 20];
        assert_eq!(pixelwise_encrypt_with(&img, &mask, &codes).unwrap(), img);
    }

    #[test]
    fn pixelwise_single_pixel() {
        let img = ImageTensor::new(3, 1, 1, vec![0, 128, 255]).unwrap();
        let mask = BinaryMask::from_bits(vec![true; 3], MaskMode::BernoulliHalf);
        let codes = vec![ColorShuffleCode::new(5).unwrap()];
        let out = pixelwise_encrypt_with(&img, &mask, &codes).unwrap();
        assert_eq!(out.data(), &[0, 127, 255]);
        assert_eq!(pixelwise_decrypt_with(&out, &mask, &codes).unwrap(), img);
    }

    #[test]
    fn pixelwise_round_trip_and_errors() {
        let img = noise(3, 12, 10, 2);
        let enc = pixelwise_encrypt(&img, &key(3)).unwrap();
        assert_ne!(enc, img);
        assert_eq!(pixelwise_decrypt(&enc, &key(3)).unwrap(), img);
        assert!(matches!(
            pixelwise_encrypt(&noise(1, 2, 2, 0), &key(3)),
            Err(Error::Channels { .. })
        ));
    }

    #[test]
    fn shf_identity_permutation() {
        let img = noise(3, 8, 8, 4);
        let t = BlockTransform::with_material(
            4,
            3,
            BlockMaterial::Shf(PermutationVector::identity(48)),
        )
        .unwrap();
        assert_eq!(t.apply(&img).unwrap(), BlockOutput::Pixels(img));
    }

    #[test]
    fn neg_is_involution() {
        let img = noise(3, 8, 8, 5);
        let spec = TransformSpec::new(LearnableVariant::Neg, 4, key(6)).unwrap();
        let once = block_transform(&img, &spec).unwrap();
        let twice = block_transform(once.pixels().unwrap(), &spec).unwrap();
        assert_eq!(twice.pixels().unwrap(), &img);
        // normalized view is 1 - x on masked positions
        let r = BlockTransform::from_spec(&spec, 3).unwrap();
        let BlockMaterial::Neg(mask) = r.material() else {
            panic!()
        };
        assert_eq!(mask.count_ones(), 24);
    }

    #[test]
    fn shf_and_neg_invert() {
        let img = noise(3, 8, 12, 7);
        for v in [LearnableVariant::Shf, LearnableVariant::Neg] {
            let spec = TransformSpec::new(v, 4, key(8)).unwrap();
            let out = block_transform(&img, &spec).unwrap();
            assert_eq!(
                block_transform_invert(out.pixels().unwrap(), &spec).unwrap(),
                img
            );
        }
    }

    #[test]
    fn ffx_not_invertible_and_normalized() {
        let img = noise(3, 8, 8, 9);
        let spec = TransformSpec::new(LearnableVariant::Ffx, 4, key(10)).unwrap();
        assert!(matches!(
            block_transform_invert(&img, &spec),
            Err(Error::NotInvertible(_))
        ));
        let BlockOutput::Ffx { raw, max, image } = block_transform(&img, &spec).unwrap() else {
            panic!("expected FFX output")
        };
        assert_eq!(Some(max), raw.iter().copied().max());
        assert!(max <= 999);
        assert!(image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(image.data().contains(&1.0));
    }

    #[test]
    fn ffx_all_zero_unmasked_rejected() {
        // a 1x1 block whose single element is unmasked and zero
        let mask = BinaryMask::from_bits(vec![false], MaskMode::BalancedExact);
        let t = BlockTransform::with_material(
            1,
            1,
            BlockMaterial::Ffx {
                mask,
                cipher: FpeCipher::new(b"pw").unwrap(),
            },
        )
        .unwrap();
        let img = ImageTensor::zeros(1, 2, 2).unwrap();
        assert!(matches!(t.apply(&img), Err(Error::EmptyDomain(_))));
        let empty = ImageTensor::zeros(1, 0, 0).unwrap();
        assert!(matches!(t.apply(&empty), Err(Error::EmptyDomain(_))));
    }

    #[test]
    fn non_divisible_rejected() {
        let img = noise(3, 10, 8, 11);
        let spec = TransformSpec::new(LearnableVariant::Shf, 4, key(1)).unwrap();
        assert!(matches!(
            block_transform(&img, &spec),
            Err(Error::Dimension(_))
        ));
        assert!(TransformSpec::new(LearnableVariant::Shf, 0, key(1)).is_err());
    }

    #[test]
    fn shf_preserves_block_multisets() {
        let img = noise(3, 8, 8, 12);
        let spec = TransformSpec::new(LearnableVariant::Shf, 4, key(13)).unwrap();
        let out = block_transform(&img, &spec).unwrap();
        let before = partition(&img, 4, 4).unwrap();
        let after = partition(out.pixels().unwrap(), 4, 4).unwrap();
        for (a, b) in before.iter().zip(&after) {
            let (mut x, mut y) = (a.data().to_vec(), b.data().to_vec());
            x.sort_unstable();
            y.sort_unstable();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn neg_preserves_squared_differences_within_partitions() {
        let img = noise(1, 4, 4, 14);
        let spec = TransformSpec::new(LearnableVariant::Neg, 4, key(15)).unwrap();
        let out = block_transform(&img, &spec).unwrap();
        let t = BlockTransform::from_spec(&spec, 1).unwrap();
        let BlockMaterial::Neg(mask) = t.material() else {
            panic!()
        };
        let (p, q) = (img.data(), out.pixels().unwrap().data());
        for i in 0..16 {
            for j in 0..16 {
                if mask.bits()[i] == mask.bits()[j] {
                    let d = i32::from(p[i]) - i32::from(p[j]);
                    let e = i32::from(q[i]) - i32::from(q[j]);
                    assert_eq!(d * d, e * e);
                }
            }
        }
    }
}

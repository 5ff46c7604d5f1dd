//! A single handle over every transform family, used by the verifiers, the
//! key-sensitivity protocol and the CLI.

use crate::error::{Error, Result};
use crate::etc::{self, EtcConfig, EtcVariant};
use crate::image::ImageTensor;
use crate::keystream::SecretKey;
use crate::learnable::{
    block_transform, pixelwise_decrypt, pixelwise_encrypt, BlockOutput, BlockTransform,
    LearnableVariant, TransformSpec,
};

pub use crate::learnable::BlockOutput as Output;

#[derive(Debug, Clone)]
pub enum Transform {
    /// EtC block scrambling. `invert` returns the packed image for the
    /// grayscale variants so that it is an exact inverse.
    Etc(EtcConfig),
    /// Pixel-wise or block-wise learnable transform derived from a key.
    Learnable(TransformSpec),
    /// Block-wise transform with explicit key material. Key-independent:
    /// [`Transform::with_key`] returns it unchanged.
    Fixed(BlockTransform),
}

impl Transform {
    pub fn apply(&self, img: &ImageTensor) -> Result<Output> {
        match self {
            Transform::Etc(cfg) => etc::encrypt(img, cfg).map(Output::Pixels),
            Transform::Learnable(spec) if spec.variant == LearnableVariant::Pixelwise => {
                pixelwise_encrypt(img, &spec.key).map(Output::Pixels)
            }
            Transform::Learnable(spec) => block_transform(img, spec),
            Transform::Fixed(t) => t.apply(img),
        }
    }

    pub fn invert(&self, img: &ImageTensor) -> Result<ImageTensor> {
        match self {
            Transform::Etc(cfg) if cfg.variant == EtcVariant::Color => etc::decrypt_color(img, cfg),
            Transform::Etc(cfg) => etc::decrypt_grayscale_packed(img, cfg),
            Transform::Learnable(spec) if spec.variant == LearnableVariant::Pixelwise => {
                pixelwise_decrypt(img, &spec.key)
            }
            Transform::Learnable(spec) => crate::learnable::block_transform_invert(img, spec),
            Transform::Fixed(t) => t.invert(img),
        }
    }

    /// The same transform under a different key.
    pub fn with_key(&self, key: SecretKey) -> Transform {
        match self {
            Transform::Etc(cfg) => Transform::Etc(cfg.with_key(key)),
            Transform::Learnable(spec) => Transform::Learnable(spec.with_key(key)),
            Transform::Fixed(t) => Transform::Fixed(t.clone()),
        }
    }

    /// True when the transform only moves values and maps some of them
    /// through `p -> 255 - p`, so that the output features are a signed
    /// permutation of the input features.
    pub fn is_signed_permutation(&self) -> bool {
        match self {
            Transform::Etc(cfg) => cfg.variant != EtcVariant::GrayscaleYcbcr,
            Transform::Learnable(spec) => spec.variant != LearnableVariant::Ffx,
            Transform::Fixed(t) => {
                !matches!(t.material(), crate::learnable::BlockMaterial::Ffx { .. })
            }
        }
    }

    /// True when output position `k` always holds input position `k`.
    pub fn keeps_positions(&self) -> bool {
        match self {
            Transform::Learnable(spec) => spec.variant == LearnableVariant::Ffx,
            Transform::Fixed(t) => {
                matches!(t.material(), crate::learnable::BlockMaterial::Ffx { .. })
            }
            Transform::Etc(_) => false,
        }
    }

    /// For every output feature, the input feature it came from and whether
    /// it was negated. Recovered by probing the transform with indicator
    /// images, so it reflects the actual key material.
    pub fn signed_feature_map(
        &self,
        channels: usize,
        height: usize,
        width: usize,
    ) -> Result<Option<Vec<(usize, bool)>>> {
        if !self.is_signed_permutation() {
            return Ok(None);
        }
        let d = channels * height * width;
        let probe = |f: &dyn Fn(usize) -> u8| -> Result<Vec<u8>> {
            let img = ImageTensor::new(channels, height, width, (0..d).map(f).collect())?;
            match self.apply(&img)? {
                Output::Pixels(p) => Ok(p.into_data()),
                Output::Ffx { .. } => Err(Error::InvalidParameter(
                    "FFX output is not a permutation".into(),
                )),
            }
        };
        let base = probe(&|_| 0)?;
        if base.len() != d || base.iter().any(|&v| v != 0 && v != 255) {
            return Ok(None);
        }
        let negated: Vec<bool> = base.iter().map(|&v| v == 255).collect();
        let mut source = vec![0usize; d];
        let bits = usize::BITS - d.saturating_sub(1).leading_zeros();
        for bit in 0..bits {
            let out = probe(&|i| ((i >> bit) & 1) as u8)?;
            for (k, &v) in out.iter().enumerate() {
                let v = if negated[k] { 255 - v } else { v };
                match v {
                    0 => {}
                    1 => source[k] |= 1 << bit,
                    _ => return Ok(None),
                }
            }
        }
        let mut seen = vec![false; d];
        for &s in &source {
            if s >= d || seen[s] {
                return Ok(None);
            }
            seen[s] = true;
        }
        Ok(Some(source.into_iter().zip(negated).collect()))
    }
}

impl From<EtcConfig> for Transform {
    fn from(cfg: EtcConfig) -> Self {
        Transform::Etc(cfg)
    }
}

impl From<TransformSpec> for Transform {
    fn from(spec: TransformSpec) -> Self {
        Transform::Learnable(spec)
    }
}

impl From<BlockTransform> for Transform {
    fn from(t: BlockTransform) -> Self {
        Transform::Fixed(t)
    }
}

impl BlockOutput {
    pub fn into_pixels(self) -> Result<ImageTensor> {
        match self {
            BlockOutput::Pixels(p) => Ok(p),
            BlockOutput::Ffx { .. } => {
                Err(Error::InvalidParameter("FFX output is real-valued".into()))
            }
        }
    }
}

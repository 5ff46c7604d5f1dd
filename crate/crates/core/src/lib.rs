//! Secret-key image transforms for privacy-preserving and access-controlled
//! machine learning.
//!
//! * [`keystream`]: deterministic key material (subkeys, permutations, masks).
//! * [`image`]: 8-bit images, block tiling and PGM/PPM I/O.
//! * [`etc`]: block-scrambling EtC encryption and its key space.
//! * [`fpe`]: three-digit format-preserving Feistel cipher.
//! * [`learnable`]: pixel-wise and block-wise SHF/NEG/FFX transforms.
//! * [`transform`]: one enum over every transform family.
//! * [`ml`]: distance / inner-product / order checks, z-score, kernels, kNN.
//! * [`watermark`]: watermark detection and key-sensitivity evaluation.
//! * [`dataset`]: labeled image directories.

pub mod dataset;
pub mod error;
pub mod etc;
pub mod fpe;
pub mod image;
pub mod keystream;
pub mod learnable;
pub mod ml;
pub mod transform;
pub mod watermark;

pub use error::{Error, Result};
pub use image::ImageTensor;
pub use keystream::SecretKey;

//! Deterministic key material.
//!
//! Everything random in the crate (block permutations, binary masks, color
//! and dihedral codes, Feistel round keys) is drawn from a [`SecretKey`]
//! through the frozen construction below, so that every transform can be
//! replayed and inverted from the key alone.
//!
//! Frozen algorithm (version 1):
//!
//! * Subkey: `HMAC-SHA256(master, "blockcrypt/subkey/v1\0" || label)`.
//! * Stream: block `i` is `SHA-256(subkey || u64_le(i))`; each 32-byte block
//!   yields four little-endian `u64` words, consumed in order.
//! * `below(n)`: draw words until `x >= (2^64 - n) mod n`, return `x mod n`.
//! * Permutation: inside-out Fisher-Yates; for `i` in `0..n`, draw
//!   `j = below(i + 1)`, then `a[i] = a[j]; a[j] = i` (or `a[i] = i` when
//!   `j == i`).
//! * Bernoulli mask: bit `i` is bit `i mod 64` (LSB first) of word `i / 64`.
//! * Balanced mask: `p = permutation(n)`, bit `i` is set iff
//!   `p[i] < ceil(n / 2)`.
//! * Codes: one `below(6)` (color) or `below(8)` (dihedral) draw per code.
//!
//! `tests/oracles/reference.py` replays the same steps with the Python
//! standard library.

use std::fmt;
use std::fs;
use std::path::Path;

use hmac::{Hmac, KeyInit, Mac};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const SUBKEY_TAG: &[u8] = b"blockcrypt/subkey/v1\0";

/// Minimum master key length in bytes.
pub const MIN_KEY_LEN: usize = 16;

/// Subkey labels used by the transforms.
pub mod labels {
    pub const SCRAMBLE: &str = "K1";
    pub const ROTATE_INVERT: &str = "K2";
    pub const NEGPOS: &str = "K3";
    pub const COLOR_SHUFFLE: &str = "K4";
    pub const SHF: &str = "SHF";
    pub const NEG: &str = "NEG";
    pub const FFX: &str = "FFX";
}

type HmacSha256 = Hmac<Sha256>;

/// HMAC-SHA256 of `msg` under `key`.
pub(crate) fn prf(key: &[u8], msg: &[&[u8]]) -> [u8; 32] {
    let mut mac = HmacSha256::new_from_slice(key).expect("hmac accepts any key length");
    for part in msg {
        mac.update(part);
    }
    mac.finalize().into_bytes().into()
}

/// A secret key: an opaque byte string of at least [`MIN_KEY_LEN`] bytes.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SecretKey(Vec<u8>);

impl SecretKey {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self> {
        let bytes = bytes.into();
        if bytes.is_empty() {
            return Err(Error::InvalidKey("empty master key".into()));
        }
        if bytes.len() < MIN_KEY_LEN {
            return Err(Error::InvalidKey(format!(
                "master key must be at least {MIN_KEY_LEN} bytes, got {}",
                bytes.len()
            )));
        }
        Ok(SecretKey(bytes))
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s.trim()).map_err(|e| Error::InvalidKey(e.to_string()))?;
        SecretKey::new(bytes)
    }

    /// A fresh 32-byte key drawn from `rng`.
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = vec![0u8; 32];
        rng.fill_bytes(&mut bytes);
        SecretKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }

    /// Label-separated subkey. Always 32 bytes.
    pub fn derive(&self, label: &str) -> SecretKey {
        SecretKey(prf(&self.0, &[SUBKEY_TAG, label.as_bytes()]).to_vec())
    }

    /// Keystream seeded directly from this key.
    pub fn stream(&self) -> KeyStream {
        KeyStream::new(self)
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({} bytes)", self.0.len())
    }
}

/// Derive the subkey for `label` from `master`.
pub fn derive_subkey(master: &SecretKey, label: &str) -> SecretKey {
    master.derive(label)
}

/// Counter-mode SHA-256 word generator.
#[derive(Clone)]
pub struct KeyStream {
    key: Vec<u8>,
    counter: u64,
    words: [u64; 4],
    next: usize,
}

impl KeyStream {
    pub fn new(key: &SecretKey) -> Self {
        KeyStream {
            key: key.0.clone(),
            counter: 0,
            words: [0; 4],
            next: 4,
        }
    }

    fn refill(&mut self) {
        let mut h = Sha256::new();
        h.update(&self.key);
        h.update(self.counter.to_le_bytes());
        let block = h.finalize();
        for (w, chunk) in self.words.iter_mut().zip(block.chunks_exact(8)) {
            *w = u64::from_le_bytes(chunk.try_into().unwrap());
        }
        self.counter += 1;
        self.next = 0;
    }

    pub fn next_u64(&mut self) -> u64 {
        if self.next == 4 {
            self.refill();
        }
        let w = self.words[self.next];
        self.next += 1;
        w
    }

    /// Uniform integer in `0..n` by rejection sampling. `n` must be nonzero.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % n;
            }
        }
    }
}

/// A bijection on `0..n`, stored zero-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationVector(Vec<usize>);

impl PermutationVector {
    pub fn identity(n: usize) -> Self {
        PermutationVector((0..n).collect())
    }

    /// Checks that `entries` is a bijection on `0..entries.len()`.
    pub fn from_entries(entries: Vec<usize>) -> Result<Self> {
        let n = entries.len();
        if n == 0 {
            return Err(Error::EmptyDomain("permutation of length 0"));
        }
        let mut seen = vec![false; n];
        for &e in &entries {
            if e >= n || seen[e] {
                return Err(Error::InvalidParameter(format!(
                    "not a permutation of 0..{n}: entry {e}"
                )));
            }
            seen[e] = true;
        }
        Ok(PermutationVector(entries))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> PermutationVector {
        let mut inv = vec![0; self.0.len()];
        for (i, &p) in self.0.iter().enumerate() {
            inv[p] = i;
        }
        PermutationVector(inv)
    }

    /// `out[k] = input[v[k]]`.
    pub fn gather<T: Clone>(&self, input: &[T]) -> Vec<T> {
        debug_assert_eq!(input.len(), self.0.len());
        self.0.iter().map(|&i| input[i].clone()).collect()
    }
}

/// Seeded inside-out shuffle of `0..n`.
pub fn gen_permutation(key: &SecretKey, n: usize) -> Result<PermutationVector> {
    if n == 0 {
        return Err(Error::EmptyDomain("permutation of length 0"));
    }
    let mut stream = key.stream();
    let mut a: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        let j = stream.below(i as u64 + 1) as usize;
        if j == i {
            a.push(i);
        } else {
            a.push(a[j]);
            a[j] = i;
        }
    }
    Ok(PermutationVector(a))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    /// Every bit independent with probability one half.
    BernoulliHalf,
    /// Exactly `ceil(n / 2)` ones, uniformly placed.
    BalancedExact,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    bits: Vec<bool>,
    mode: MaskMode,
}

impl BinaryMask {
    pub fn from_bits(bits: Vec<bool>, mode: MaskMode) -> Self {
        BinaryMask { bits, mode }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn mode(&self) -> MaskMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

pub fn gen_binary_mask(key: &SecretKey, n: usize, mode: MaskMode) -> Result<BinaryMask> {
    if n == 0 {
        return Err(Error::EmptyDomain("mask of length 0"));
    }
    let bits = match mode {
        MaskMode::BernoulliHalf => {
            let mut stream = key.stream();
            let mut bits = Vec::with_capacity(n);
            let mut word = 0u64;
            for i in 0..n {
                if i % 64 == 0 {
                    word = stream.next_u64();
                }
                bits.push((word >> (i % 64)) & 1 == 1);
            }
            bits
        }
        MaskMode::BalancedExact => {
            let ones = n.div_ceil(2);
            gen_permutation(key, n)?
                .entries()
                .iter()
                .map(|&p| p < ones)
                .collect()
        }
    };
    Ok(BinaryMask { bits, mode })
}

/// Row index into the six-way color component permutation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ColorShuffleCode(u8);

impl ColorShuffleCode {
    pub const IDENTITY: ColorShuffleCode = ColorShuffleCode(0);

    pub fn new(code: u8) -> Result<Self> {
        if code < 6 {
            Ok(ColorShuffleCode(code))
        } else {
            Err(Error::OutOfRange {
                value: code.into(),
                max: 5,
            })
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

/// Element of the dihedral group of the square: `code % 4` clockwise quarter
/// turns, followed by a horizontal flip when `code >= 4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DihedralCode(u8);

impl DihedralCode {
    pub const IDENTITY: DihedralCode = DihedralCode(0);

    pub fn new(code: u8) -> Result<Self> {
        if code < 8 {
            Ok(DihedralCode(code))
        } else {
            Err(Error::OutOfRange {
                value: code.into(),
                max: 7,
            })
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn quarter_turns(self) -> u8 {
        self.0 % 4
    }

    pub fn flipped(self) -> bool {
        self.0 >= 4
    }

    /// Reflections are involutions; rotations invert to the opposite turn.
    pub fn inverse(self) -> DihedralCode {
        if self.flipped() {
            self
        } else {
            DihedralCode((4 - self.0) % 4)
        }
    }

    /// True when the transform swaps width and height.
    pub fn transposes(self) -> bool {
        self.quarter_turns() % 2 == 1
    }
}

pub fn gen_color_codes(key: &SecretKey, n: usize) -> Result<Vec<ColorShuffleCode>> {
    if n == 0 {
        return Err(Error::EmptyDomain("zero color codes"));
    }
    let mut stream = key.stream();
    Ok((0..n)
        .map(|_| ColorShuffleCode(stream.below(6) as u8))
        .collect())
}

pub fn gen_dihedral_codes(key: &SecretKey, n: usize) -> Result<Vec<DihedralCode>> {
    if n == 0 {
        return Err(Error::EmptyDomain("zero dihedral codes"));
    }
    let mut stream = key.stream();
    Ok((0..n)
        .map(|_| DihedralCode(stream.below(8) as u8))
        .collect())
}

/// `count` keys drawn from a ChaCha20 generator seeded with `seed`. Used for
/// incorrect-key trials; never for the transforms themselves.
pub fn trial_keys(seed: u64, count: usize) -> Vec<SecretKey> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..count).map(|_| SecretKey::random(&mut rng)).collect()
}

/// On-disk key: `{"master": "<hex>"}` with an optional FFX password.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyFile {
    pub master: String,
    #[serde(rename = "FFX", default, skip_serializing_if = "Option::is_none")]
    pub ffx: Option<String>,
}

impl KeyFile {
    pub fn new(key: &SecretKey) -> Self {
        KeyFile {
            master: key.to_hex(),
            ffx: None,
        }
    }

    pub fn master(&self) -> Result<SecretKey> {
        SecretKey::from_hex(&self.master)
    }

    /// The FFX password: the explicit field if present, otherwise the bytes
    /// of the `FFX` subkey.
    pub fn ffx_password(&self) -> Result<Vec<u8>> {
        match &self.ffx {
            Some(p) if p.is_empty() => Err(Error::InvalidKey("empty FFX password".into())),
            Some(p) => Ok(p.as_bytes().to_vec()),
            None => Ok(self.master()?.derive(labels::FFX).as_bytes().to_vec()),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let kf: KeyFile = serde_json::from_str(&text)?;
        kf.master()?;
        Ok(kf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

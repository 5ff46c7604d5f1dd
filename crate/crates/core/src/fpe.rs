//! Format-preserving Feistel encryption over three decimal digits.
//!
//! The numeral `v = d0 d1 d2` is split into a one-digit left half `a = d0`
//! and a two-digit right half `b = d1 d2`. Round `i` (0-based, ten rounds)
//! uses width `m = 1` for even `i` and `m = 2` for odd `i`:
//!
//! ```text
//! c = (a + F(i, m, b)) mod 10^m;  a = b;  b = c
//! ```
//!
//! where `F` is the first eight bytes (big-endian) of
//! `HMAC-SHA256(password, "blockcrypt/ffx/v1\0" || i || m || u16_be(b))`
//! reduced mod `10^m`. After an even number of rounds the halves are back to
//! one and two digits and the output is `a * 100 + b`.

use crate::error::{Error, Result};
use crate::keystream::prf;

const FFX_TAG: &[u8] = b"blockcrypt/ffx/v1\0";

pub const DOMAIN: u16 = 1000;
pub const DEFAULT_ROUNDS: u8 = 10;

/// Password used for the shipped golden-vector file.
pub const DEFAULT_PASSWORD: &[u8] = b"password";

/// Immutable cipher with its full encryption table precomputed.
#[derive(Clone)]
pub struct FpeCipher {
    password: Vec<u8>,
    rounds: u8,
    forward: Vec<u16>,
    backward: Vec<u16>,
}

impl std::fmt::Debug for FpeCipher {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FpeCipher")
            .field("rounds", &self.rounds)
            .finish_non_exhaustive()
    }
}

fn pow10(m: u8) -> u16 {
    if m == 1 {
        10
    } else {
        100
    }
}

impl FpeCipher {
    pub fn new(password: &[u8]) -> Result<Self> {
        Self::with_rounds(password, DEFAULT_ROUNDS)
    }

    /// `rounds` must be even and nonzero so the halves end at their
    /// original widths.
    pub fn with_rounds(password: &[u8], rounds: u8) -> Result<Self> {
        if password.is_empty() {
            return Err(Error::InvalidKey("empty FFX password".into()));
        }
        if rounds == 0 || !rounds.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "round count must be even and positive, got {rounds}"
            )));
        }
        let mut cipher = FpeCipher {
            password: password.to_vec(),
            rounds,
            forward: Vec::new(),
            backward: vec![0; DOMAIN as usize],
        };
        // the other half is two digits in even rounds and one digit in odd ones
        let rf: Vec<Vec<u16>> = (0..rounds)
            .map(|i| {
                let m = Self::width(i);
                (0..pow10(3 - m))
                    .map(|b| cipher.round_value(i, m, b))
                    .collect()
            })
            .collect();
        cipher.forward = (0..DOMAIN)
            .map(|v| cipher.feistel_with(v, |i, _, b| rf[i as usize][b as usize]))
            .collect();
        for (v, &e) in cipher.forward.iter().enumerate() {
            cipher.backward[e as usize] = v as u16;
        }
        Ok(cipher)
    }

    pub fn rounds(&self) -> u8 {
        self.rounds
    }

    fn round_value(&self, round: u8, width: u8, half: u16) -> u16 {
        let mac = prf(
            &self.password,
            &[FFX_TAG, &[round, width], &half.to_be_bytes()],
        );
        let x = u64::from_be_bytes(mac[..8].try_into().unwrap());
        (x % u64::from(pow10(width))) as u16
    }

    fn width(round: u8) -> u8 {
        if round.is_multiple_of(2) {
            1
        } else {
            2
        }
    }

    fn feistel_with(&self, v: u16, f: impl Fn(u8, u8, u16) -> u16) -> u16 {
        let (mut a, mut b) = (v / 100, v % 100);
        for i in 0..self.rounds {
            let m = Self::width(i);
            let c = (a + f(i, m, b)) % pow10(m);
            a = b;
            b = c;
        }
        a * 100 + b
    }

    fn feistel_decrypt(&self, v: u16) -> u16 {
        let (mut a, mut b) = (v / 100, v % 100);
        for i in (0..self.rounds).rev() {
            let m = Self::width(i);
            let modulus = pow10(m);
            let c = b;
            b = a;
            a = (c + modulus - self.round_value(i, m, b)) % modulus;
        }
        a * 100 + b
    }

    fn check(v: u16) -> Result<()> {
        if v >= DOMAIN {
            return Err(Error::OutOfRange {
                value: v.into(),
                max: u32::from(DOMAIN) - 1,
            });
        }
        Ok(())
    }

    pub fn encrypt(&self, v: u16) -> Result<u16> {
        Self::check(v)?;
        Ok(self.forward[v as usize])
    }

    pub fn decrypt(&self, v: u16) -> Result<u16> {
        Self::check(v)?;
        Ok(self.backward[v as usize])
    }

    /// Runs the Feistel network directly, recomputing every round value.
    pub fn encrypt_uncached(&self, v: u16) -> Result<u16> {
        Self::check(v)?;
        Ok(self.feistel_with(v, |i, m, b| self.round_value(i, m, b)))
    }

    pub fn decrypt_uncached(&self, v: u16) -> Result<u16> {
        Self::check(v)?;
        Ok(self.feistel_decrypt(v))
    }
}

pub fn fpe_encrypt(v: u16, cipher: &FpeCipher) -> Result<u16> {
    cipher.encrypt(v)
}

pub fn fpe_decrypt(v: u16, cipher: &FpeCipher) -> Result<u16> {
    cipher.decrypt(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bijection_and_inverse() {
        let c = FpeCipher::new(b"pw").unwrap();
        let mut seen = vec![false; 1000];
        for v in 0..DOMAIN {
            let e = c.encrypt(v).unwrap();
            assert!(!seen[e as usize]);
            seen[e as usize] = true;
            assert_eq!(c.decrypt(e).unwrap(), v);
            assert_eq!(c.encrypt(c.decrypt(v).unwrap()).unwrap(), v);
        }
    }

    #[test]
    fn uncached_network_matches_table() {
        let c = FpeCipher::new(b"pw").unwrap();
        for v in 0..DOMAIN {
            let e = c.encrypt_uncached(v).unwrap();
            assert_eq!(e, c.encrypt(v).unwrap());
            assert_eq!(c.decrypt_uncached(e).unwrap(), v);
        }
    }

    #[test]
    fn errors() {
        let c = FpeCipher::new(b"pw").unwrap();
        assert!(matches!(c.encrypt(1000), Err(Error::OutOfRange { .. })));
        assert!(c.decrypt(1000).is_err());
        assert!(FpeCipher::new(b"").is_err());
        assert!(FpeCipher::with_rounds(b"pw", 3).is_err());
    }

    #[test]
    fn golden_default_password() {
        let c = FpeCipher::new(DEFAULT_PASSWORD).unwrap();
        assert_eq!(c.encrypt(0).unwrap(), 465);
        assert_eq!(c.encrypt(1).unwrap(), 482);
        assert_eq!(c.encrypt(255).unwrap(), 683);
    }
}

//! Bounded-storage encryption: each plaintext bit `M` is sent as
//! `(a, M ⊕ a·x)` with a fresh uniform `a` and a long-lived key `x`.

mod attack;
mod wire;

pub use attack::{
    expected_window_guess_rate, rank_distribution, run_attack, AttackConfig, AttackReport, Attacker, FixedGuessAttacker,
    ThreatModel, WindowAttacker,
};
pub use wire::{decode_stream, encode_stream, frame_len, HEADER_LEN, MAGIC, VERSION};

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::gf2::BitVector;

/// Largest key length accepted by the wire format.
pub const MAX_STREAM_DIM: usize = u16::MAX as usize;

/// `n` bits packed into 64-bit words; coordinate `i + 1` is bit `i % 64` of word `i / 64`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WideBits {
    n: usize,
    words: Vec<u64>,
}

impl WideBits {
    pub fn zero(n: usize) -> Self {
        WideBits { n, words: vec![0; n.div_ceil(64)] }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut w = WideBits { n, words: (0..n.div_ceil(64)).map(|_| rng.random()).collect() };
        w.clear_tail();
        w
    }

    fn clear_tail(&mut self) {
        if !self.n.is_multiple_of(64) {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << (self.n % 64)) - 1;
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Coordinate `i` (zero-based).
    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        let bit = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= bit;
        } else {
            self.words[i / 64] &= !bit;
        }
    }

    pub fn dot(&self, other: &WideBits) -> Result<bool> {
        check_dim(self.n, other.n)?;
        Ok(self.words.iter().zip(&other.words).map(|(a, b)| (a & b).count_ones()).sum::<u32>() & 1 == 1)
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn from_bitvector(v: &BitVector) -> Self {
        WideBits { n: v.n(), words: vec![v.bits() as u64] }
    }

    pub fn to_bitvector(&self) -> Result<BitVector> {
        BitVector::new(self.n, self.words.first().copied().unwrap_or(0) as u32)
    }

    /// Packed MSB-first: coordinate 1 is the most significant bit of byte 0.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.n.div_ceil(8)];
        for i in 0..self.n {
            if self.get(i) {
                out[i / 8] |= 0x80 >> (i % 8);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecretKey {
    x: WideBits,
}

impl SecretKey {
    pub fn new(x: WideBits) -> Result<Self> {
        if x.n == 0 || x.n > MAX_STREAM_DIM {
            return Err(Error::parameter(format!("key length {} outside 1..={MAX_STREAM_DIM}", x.n)));
        }
        Ok(SecretKey { x })
    }

    pub fn n(&self) -> usize {
        self.x.n
    }

    pub fn bits(&self) -> &WideBits {
        &self.x
    }

    /// Two bytes of `n` (big-endian), then the key packed MSB-first.
    pub fn to_hex(&self) -> String {
        let mut bytes = (self.x.n as u16).to_be_bytes().to_vec();
        bytes.extend(self.x.to_bytes());
        hex::encode(bytes)
    }

    pub fn from_hex(text: &str) -> Result<Self> {
        let bytes = hex_decode(text.trim())?;
        if bytes.len() < 2 {
            return Err(Error::format(bytes.len(), "key shorter than its length prefix"));
        }
        let n = u16::from_be_bytes([bytes[0], bytes[1]]) as usize;
        if n == 0 {
            return Err(Error::format(0, "key length is zero"));
        }
        let body = &bytes[2..];
        if body.len() != n.div_ceil(8) {
            return Err(Error::format(2, format!("expected {} key bytes for n = {n}, found {}", n.div_ceil(8), body.len())));
        }
        let mut x = WideBits::zero(n);
        for i in 0..body.len() * 8 {
            let bit = body[i / 8] & (0x80 >> (i % 8)) != 0;
            if i < n {
                x.set(i, bit);
            } else if bit {
                return Err(Error::format(2 + i / 8, "nonzero padding after the last key bit"));
            }
        }
        SecretKey::new(x)
    }
}

fn hex_decode(text: &str) -> Result<Vec<u8>> {
    hex::decode(text).map_err(|e| match e {
        hex::FromHexError::InvalidHexCharacter { index, .. } => Error::format(index / 2, "invalid hex digit"),
        other => Error::format(text.len() / 2, other.to_string()),
    })
}

pub fn keygen<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<SecretKey> {
    SecretKey::new(WideBits::random(n, rng))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub a: WideBits,
    pub c: bool,
}

pub fn encrypt_bit<R: Rng + ?Sized>(key: &SecretKey, m: bool, rng: &mut R) -> Frame {
    let a = WideBits::random(key.n(), rng);
    let pad = a.dot(&key.x).expect("same length");
    Frame { a, c: m ^ pad }
}

pub fn decrypt_bit(key: &SecretKey, frame: &Frame) -> Result<bool> {
    Ok(frame.c ^ frame.a.dot(&key.x)?)
}

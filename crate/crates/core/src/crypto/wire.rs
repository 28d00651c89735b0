//! Byte-exact stream framing.
//!
//! Header: `BSC1`, version byte, `n` as big-endian u16, plaintext bit count
//! as big-endian u64. Then one frame per plaintext bit (bits of each byte
//! MSB first): `a` packed MSB-first with coordinate 1 first, the cipher bit,
//! and zero padding to a byte boundary.

use rand::Rng;

use super::{decrypt_bit, encrypt_bit, Frame, SecretKey, WideBits};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BSC1";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 15;

/// `⌈(n + 1) / 8⌉`.
pub fn frame_len(n: usize) -> usize {
    (n + 1).div_ceil(8)
}

fn write_frame(out: &mut Vec<u8>, f: &Frame) {
    let n = f.a.n();
    let start = out.len();
    out.resize(start + frame_len(n), 0);
    let buf = &mut out[start..];
    for i in 0..n {
        if f.a.get(i) {
            buf[i / 8] |= 0x80 >> (i % 8);
        }
    }
    if f.c {
        buf[n / 8] |= 0x80 >> (n % 8);
    }
}

fn read_frame(buf: &[u8], n: usize, offset: usize) -> Result<Frame> {
    let mut a = WideBits::zero(n);
    for i in 0..n {
        a.set(i, buf[i / 8] & (0x80 >> (i % 8)) != 0);
    }
    let c = buf[n / 8] & (0x80 >> (n % 8)) != 0;
    for i in n + 1..buf.len() * 8 {
        if buf[i / 8] & (0x80 >> (i % 8)) != 0 {
            return Err(Error::format(offset + i / 8, "nonzero frame padding"));
        }
    }
    Ok(Frame { a, c })
}

pub fn encode_stream<R: Rng + ?Sized>(key: &SecretKey, plaintext: &[u8], rng: &mut R) -> Vec<u8> {
    let n = key.n();
    let bits = plaintext.len() as u64 * 8;
    let mut out = Vec::with_capacity(HEADER_LEN + plaintext.len() * 8 * frame_len(n));
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(n as u16).to_be_bytes());
    out.extend_from_slice(&bits.to_be_bytes());
    for byte in plaintext {
        for j in 0..8 {
            let m = byte & (0x80 >> j) != 0;
            write_frame(&mut out, &encrypt_bit(key, m, rng));
        }
    }
    out
}

pub fn decode_stream(key: &SecretKey, bytes: &[u8]) -> Result<Vec<u8>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len(), format!("truncated header ({} of {HEADER_LEN} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(0, "bad magic"));
    }
    if bytes[4] != VERSION {
        return Err(Error::format(4, format!("unsupported version {:#04x}", bytes[4])));
    }
    let n = u16::from_be_bytes([bytes[5], bytes[6]]) as usize;
    if n == 0 {
        return Err(Error::format(5, "key length is zero"));
    }
    if n != key.n() {
        return Err(Error::format(5, format!("stream uses n = {n}, key has n = {}", key.n())));
    }
    let bits = u64::from_be_bytes(bytes[7..15].try_into().expect("eight bytes"));
    if bits % 8 != 0 {
        return Err(Error::format(7, format!("bit count {bits} is not a whole number of bytes")));
    }
    let flen = frame_len(n);
    let body = &bytes[HEADER_LEN..];
    let expected = usize::try_from(bits)
        .ok()
        .and_then(|b| b.checked_mul(flen))
        .ok_or_else(|| Error::format(7, "bit count too large"))?;
    if body.len() < expected {
        return Err(Error::format(bytes.len(), format!("truncated body: {} of {expected} bytes", body.len())));
    }
    if body.len() > expected {
        return Err(Error::format(HEADER_LEN + expected, "trailing bytes after the last frame"));
    }
    let mut out = vec![0u8; (bits / 8) as usize];
    for (t, chunk) in body.chunks(flen).enumerate() {
        let frame = read_frame(chunk, n, HEADER_LEN + t * flen)?;
        if decrypt_bit(key, &frame)? {
            out[t / 8] |= 0x80 >> (t % 8);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keygen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn framing_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let key = keygen(6, &mut rng).unwrap();
        let empty = encode_stream(&key, &[], &mut rng);
        assert_eq!(empty, b"BSC1\x01\x00\x06\x00\x00\x00\x00\x00\x00\x00\x00");
        assert_eq!(decode_stream(&key, &empty).unwrap(), Vec::<u8>::new());
        let one = encode_stream(&key, &[0xa5], &mut rng);
        assert_eq!(one.len(), HEADER_LEN + 8 * frame_len(6));
        assert_eq!(frame_len(6), 1);
        assert_eq!(frame_len(7), 1);
        assert_eq!(frame_len(8), 2);
        assert_eq!(decode_stream(&key, &one).unwrap(), vec![0xa5]);
    }

    #[test]
    fn frame_bit_layout() {
        // n = 3, a = (1,0,1), c = 1 → 1011_0000
        let mut a = WideBits::zero(3);
        a.set(0, true);
        a.set(2, true);
        let mut out = Vec::new();
        write_frame(&mut out, &Frame { a, c: true });
        assert_eq!(out, vec![0b1011_0000]);
        assert!(read_frame(&[0b1011_0001], 3, 20).is_err_and(|e| e == Error::format(20, "nonzero frame padding")));
    }

    #[test]
    fn four_kib_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let key = keygen(20, &mut rng).unwrap();
        let payload: Vec<u8> = (0..4096).map(|_| rng.random()).collect();
        let enc = encode_stream(&key, &payload, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(enc, encode_stream(&key, &payload, &mut ChaCha8Rng::seed_from_u64(9)));
        assert_eq!(decode_stream(&key, &enc).unwrap(), payload);
    }

    #[test]
    fn format_errors_carry_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let key = keygen(9, &mut rng).unwrap();
        let good = encode_stream(&key, b"hi", &mut rng);
        let offset = |bytes: &[u8]| match decode_stream(&key, bytes) {
            Err(Error::Format { offset, .. }) => offset,
            other => panic!("expected a format error, got {other:?}"),
        };
        assert_eq!(offset(&good[..10]), 10);
        let mut bad = good.clone();
        bad[0] = b'X';
        assert_eq!(offset(&bad), 0);
        let mut bad = good.clone();
        bad[4] = 2;
        assert_eq!(offset(&bad), 4);
        let mut bad = good.clone();
        bad[6] = 10;
        assert_eq!(offset(&bad), 5);
        let mut bad = good.clone();
        bad[14] = 3;
        assert_eq!(offset(&bad), 7);
        assert_eq!(offset(&good[..good.len() - 1]), good.len() - 1);
        let mut long = good.clone();
        long.push(0);
        assert_eq!(offset(&long), good.len());
        let mut bad = good.clone();
        bad[HEADER_LEN + 1] |= 0x01;
        assert_eq!(offset(&bad), HEADER_LEN + 1);
    }
}

//! Binary checkpoints.
//!
//! Layout, all little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `BCNS` |
//! | 4 | format version (`u32`) |
//! | 4 | `n` (`u32`) |
//! | 8 | `L` (`f64`) |
//! | 8 | `t` (`f64`) |
//! | 4 + 8 | pressure-law family (`u32`) and parameter (`f64`) |
//! | 3·n²·8 | `a`, `u¹`, `u²` as row-major `f64` |
//! | 4 | CRC-32 of everything above (`u32`) |

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::cns_model::{FlowState, PressureLaw};
use crate::spectral::{GridSpec, RealField2D, VectorField2D};

pub const MAGIC: &[u8; 4] = b"BCNS";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8 + 4 + 8;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint truncated: expected {expected} bytes, found {found}")]
    ShortRead { expected: usize, found: usize },
    #[error("not a checkpoint: bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("checkpoint checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("invalid checkpoint header: {0}")]
    InvalidHeader(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub fn encode(state: &FlowState, law: PressureLaw) -> Vec<u8> {
    let g = state.grid();
    let mut buf = Vec::with_capacity(HEADER_LEN + 3 * g.len() * 8 + 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(g.n as u32).to_le_bytes());
    buf.extend_from_slice(&g.half_width.to_le_bytes());
    buf.extend_from_slice(&state.t.to_le_bytes());
    let (family, param) = law.tag();
    buf.extend_from_slice(&family.to_le_bytes());
    buf.extend_from_slice(&param.to_le_bytes());
    for field in [&state.a, &state.u.x, &state.u.y] {
        for v in &field.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

fn take<const N: usize>(bytes: &[u8], at: &mut usize) -> [u8; N] {
    let out: [u8; N] = bytes[*at..*at + N].try_into().expect("length checked");
    *at += N;
    out
}

pub fn decode(bytes: &[u8]) -> Result<(FlowState, PressureLaw), CheckpointError> {
    if bytes.len() < 4 {
        return Err(CheckpointError::ShortRead {
            expected: HEADER_LEN + 4,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("length checked");
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(CheckpointError::ShortRead {
            expected: HEADER_LEN + 4,
            found: bytes.len(),
        });
    }
    let mut at = 4;
    let version = u32::from_le_bytes(take(bytes, &mut at));
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let n = u32::from_le_bytes(take(bytes, &mut at)) as usize;
    let l = f64::from_le_bytes(take(bytes, &mut at));
    let t = f64::from_le_bytes(take(bytes, &mut at));
    let family = u32::from_le_bytes(take(bytes, &mut at));
    let param = f64::from_le_bytes(take(bytes, &mut at));
    let grid = GridSpec::new(n, l).map_err(|e| CheckpointError::InvalidHeader(e.to_string()))?;
    let expected = HEADER_LEN + 3 * grid.len() * 8 + 4;
    if bytes.len() < expected {
        return Err(CheckpointError::ShortRead {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(CheckpointError::InvalidHeader(format!(
            "{} trailing bytes after checksum",
            bytes.len() - expected
        )));
    }
    let body = &bytes[..expected - 4];
    let stored = u32::from_le_bytes(bytes[expected - 4..].try_into().expect("length checked"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(CheckpointError::ChecksumMismatch { stored, computed });
    }
    let law = PressureLaw::from_tag(family, param).map_err(|e| CheckpointError::InvalidHeader(e.to_string()))?;
    let mut read_field = || {
        let values: Vec<f64> = (0..grid.len())
            .map(|_| f64::from_le_bytes(take(bytes, &mut at)))
            .collect();
        RealField2D { grid, values }
    };
    let a = read_field();
    let ux = read_field();
    let uy = read_field();
    Ok((
        FlowState {
            a,
            u: VectorField2D::new(ux, uy),
            t,
        },
        law,
    ))
}

pub fn write_checkpoint(path: &Path, state: &FlowState, law: PressureLaw) -> Result<(), CheckpointError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(state, law))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(FlowState, PressureLaw), CheckpointError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (FlowState, PressureLaw) {
        let g = GridSpec::new(16, 2.5).unwrap();
        let a = RealField2D::from_fn(g, |x, y| 0.1 * (x + 2.0 * y).sin() + 1e-17);
        let ux = RealField2D::from_fn(g, |x, _| x.cos() / 3.0);
        let uy = RealField2D::from_fn(g, |_, y| (y * 7.0).sin() * f64::EPSILON);
        (
            FlowState {
                a,
                u: VectorField2D::new(ux, uy),
                t: 1.0 / 3.0,
            },
            PressureLaw::gamma(1.4).unwrap(),
        )
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (s, law) = sample();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("state.bcns");
        write_checkpoint(&p, &s, law).unwrap();
        let (back, law2) = read_checkpoint(&p).unwrap();
        assert_eq!(law, law2);
        assert_eq!(back.t.to_bits(), s.t.to_bits());
        for (x, y) in [(&back.a, &s.a), (&back.u.x, &s.u.x), (&back.u.y, &s.u.y)] {
            assert!(x.values.iter().zip(&y.values).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn header_layout() {
        let (s, law) = sample();
        let b = encode(&s, law);
        assert_eq!(&b[..4], b"BCNS");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), FORMAT_VERSION);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 16);
        assert_eq!(f64::from_le_bytes(b[12..20].try_into().unwrap()), 2.5);
        assert_eq!(b.len(), HEADER_LEN + 3 * 256 * 8 + 4);
    }

    #[test]
    fn truncated_file_is_short_read() {
        let (s, law) = sample();
        let b = encode(&s, law);
        for cut in [2, 20, b.len() - 1] {
            assert!(matches!(decode(&b[..cut]), Err(CheckpointError::ShortRead { .. })), "cut {cut}");
        }
    }

    #[test]
    fn corruption_is_detected() {
        let (s, law) = sample();
        let mut b = encode(&s, law);
        b[HEADER_LEN + 17] ^= 0x10;
        assert!(matches!(decode(&b), Err(CheckpointError::ChecksumMismatch { .. })));

        let mut b = encode(&s, law);
        b[0] = b'X';
        assert!(matches!(decode(&b), Err(CheckpointError::BadMagic(_))));

        let mut b = encode(&s, law);
        b[4] = 9;
        assert!(matches!(decode(&b), Err(CheckpointError::UnsupportedVersion(9))));
    }
}

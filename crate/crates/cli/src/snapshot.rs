//! Binary snapshots of the spectral state.
//!
//! Layout, little-endian throughout:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `NPE2` |
//! | 2     | format version (u16) |
//! | 1     | variant tag (0 npe, 1 npns, 2 regularized) |
//! | 1     | reserved, zero |
//! | 4     | n (u32) |
//! | 48    | time, D, ε, k_BT_K, ν, ℓ (f64) |
//! | 48·n² | ρ̂, σ̂, ω̂ as interleaved (re, im) f64, row-major in k |
//! | 8     | CRC-64/XZ of everything above (u64) |

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crc::{Crc, CRC_64_XZ};
use num_complex::Complex64;
use npe_core::{Grid, PhysParams, SimState, SpectralField2D, Variant};
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"NPE2";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 12 + 6 * 8;
const CHECKSUM: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("not a snapshot file (bad magic bytes)")]
    BadMagic,

    #[error("snapshot format version {found} is not supported (expected {FORMAT_VERSION})")]
    VersionMismatch { found: u16 },

    #[error("snapshot checksum mismatch")]
    ChecksumMismatch,

    #[error("snapshot is corrupt: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Encodes `state` and `params` in the snapshot layout.
pub fn encode(state: &SimState, params: &PhysParams) -> Vec<u8> {
    let n = state.grid().n();
    let mut buf = Vec::with_capacity(HEADER_LEN + 48 * n * n + 8);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(params.variant.tag());
    buf.push(0);
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    for v in [
        state.time,
        params.diffusivity,
        params.epsilon,
        params.kbtk,
        params.nu,
        params.ell,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for f in [&state.rho, &state.sigma, &state.omega] {
        for c in f.coeffs() {
            buf.extend_from_slice(&c.re.to_le_bytes());
            buf.extend_from_slice(&c.im.to_le_bytes());
        }
    }
    let crc = CHECKSUM.checksum(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

fn f64_at(bytes: &[u8], offset: usize) -> f64 {
    f64::from_le_bytes(bytes[offset..offset + 8].try_into().expect("8 bytes"))
}

/// Decodes a snapshot; never returns a partially read state.
pub fn decode(bytes: &[u8]) -> Result<(SimState, PhysParams), SnapshotError> {
    let truncated = || SnapshotError::Io(io::Error::new(io::ErrorKind::UnexpectedEof, "snapshot is truncated"));
    if bytes.len() < 4 {
        return Err(truncated());
    }
    if bytes[..4] != MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    if bytes.len() < HEADER_LEN + 8 {
        return Err(truncated());
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(SnapshotError::VersionMismatch { found: version });
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let expected = n
        .checked_mul(n)
        .and_then(|nn| nn.checked_mul(48))
        .and_then(|p| p.checked_add(HEADER_LEN + 8))
        .ok_or_else(|| SnapshotError::Corrupt(format!("grid size {n} is implausible")))?;
    if bytes.len() < expected {
        return Err(truncated());
    }
    if bytes.len() > expected {
        return Err(SnapshotError::ChecksumMismatch);
    }
    let (body, tail) = bytes.split_at(expected - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if CHECKSUM.checksum(body) != stored {
        return Err(SnapshotError::ChecksumMismatch);
    }

    let variant = Variant::from_tag(bytes[6])
        .ok_or_else(|| SnapshotError::Corrupt(format!("unknown variant tag {}", bytes[6])))?;
    let grid = Grid::new(n).map_err(|e| SnapshotError::Corrupt(e.to_string()))?;
    let time = f64_at(bytes, 12);
    let params = PhysParams {
        diffusivity: f64_at(bytes, 20),
        epsilon: f64_at(bytes, 28),
        kbtk: f64_at(bytes, 36),
        nu: f64_at(bytes, 44),
        ell: f64_at(bytes, 52),
        variant,
    };
    let len = n * n;
    let mut fields = (0..3).map(|i| {
        let start = HEADER_LEN + i * 16 * len;
        let coeffs = (0..len)
            .map(|j| {
                let o = start + 16 * j;
                Complex64::new(f64_at(body, o), f64_at(body, o + 8))
            })
            .collect();
        SpectralField2D::from_coeffs(grid, coeffs).map_err(|e| SnapshotError::Corrupt(e.to_string()))
    });
    let rho = fields.next().expect("three fields")?;
    let sigma = fields.next().expect("three fields")?;
    let omega = fields.next().expect("three fields")?;
    let state = SimState::new(time, rho, sigma, omega).map_err(|e| SnapshotError::Corrupt(e.to_string()))?;
    Ok((state, params))
}

/// Writes via a temporary file and rename, so readers never see a partial file.
pub fn write_snapshot(state: &SimState, params: &PhysParams, path: &Path) -> Result<(), SnapshotError> {
    let bytes = encode(state, params);
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(SimState, PhysParams), SnapshotError> {
    decode(&fs::read(path)?)
}

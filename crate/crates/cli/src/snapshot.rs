//! CSS2 binary snapshots.
//!
//! Layout, all little-endian: magic `CSS2`, `u32` version (1), `u32` N,
//! `f64` side length, `f64` t, `f64` κ, then twelve `N×N` `f64` arrays in the
//! order φ₁..₃, ∂ₜφ₁..₃, A₀..₂, ∂ₜA₀..₂, each row-major with the x₁ index
//! fastest.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use cssigma::fields::{FieldError, State, VectorField3};
use cssigma::spectral::{Grid, ScalarField};

pub const MAGIC: &[u8; 4] = b"CSS2";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 * 3;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a CSS2 snapshot (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported snapshot version {0}")]
    BadVersion(u32),
    #[error("snapshot header is inconsistent: {0}")]
    BadHeader(String),
    #[error("snapshot truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("snapshot does not describe a valid state: {0}")]
    Invalid(#[from] FieldError),
}

fn components(state: &State) -> [&ScalarField; 12] {
    let [p, dp, a, da] = [&state.phi, &state.dphi, &state.a, &state.da];
    [
        &p.c[0], &p.c[1], &p.c[2], &dp.c[0], &dp.c[1], &dp.c[2], &a.c[0], &a.c[1], &a.c[2],
        &da.c[0], &da.c[1], &da.c[2],
    ]
}

pub fn encode(state: &State) -> Vec<u8> {
    let g = state.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 12 * 8 * g.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.n_points() as u32).to_le_bytes());
    for x in [g.side_length(), state.t, state.kappa] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for f in components(state) {
        for v in f.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn f64_at(bytes: &[u8], off: usize) -> f64 {
    f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap())
}

fn u32_at(bytes: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap())
}

/// Decodes a snapshot; `m_bound` is not stored and must be supplied.
/// Only the coupling is validated, so damaged data can still be inspected.
pub fn decode(bytes: &[u8], m_bound: f64) -> Result<State, SnapshotError> {
    if bytes.len() < HEADER_LEN {
        return Err(SnapshotError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(SnapshotError::BadMagic(magic));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(SnapshotError::BadVersion(version));
    }
    let n = u32_at(bytes, 8) as usize;
    let (side, t, kappa) = (f64_at(bytes, 12), f64_at(bytes, 20), f64_at(bytes, 28));
    let grid = Grid::new(n, side).map_err(|e| SnapshotError::BadHeader(e.to_string()))?;
    let expected = HEADER_LEN + 12 * 8 * n * n;
    if bytes.len() != expected {
        return Err(SnapshotError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let mut fields: Vec<ScalarField> = (0..12)
        .map(|k| {
            let base = HEADER_LEN + k * 8 * n * n;
            let vals = (0..n * n).map(|i| f64_at(bytes, base + 8 * i)).collect();
            ScalarField::from_values(&grid, vals)
        })
        .collect();
    let mut next3 = || {
        let c: Vec<ScalarField> = fields.drain(..3).collect();
        let [a, b, c]: [ScalarField; 3] = c.try_into().unwrap();
        VectorField3::new(a, b, c)
    };
    let (phi, dphi, a, da) = (next3(), next3(), next3(), next3());
    cssigma::fields::check_coupling(kappa, m_bound)?;
    Ok(State {
        phi,
        dphi,
        a,
        da,
        t,
        kappa,
        m_bound,
    })
}

pub fn write(path: &Path, state: &State) -> Result<(), SnapshotError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(state))?;
    f.flush()?;
    Ok(())
}

pub fn read(path: &Path, m_bound: f64) -> Result<State, SnapshotError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes, m_bound)
}

/// Bitwise equality of every stored quantity.
pub fn bitwise_equal(a: &State, b: &State) -> bool {
    let g = |s: &State| (s.grid().n_points(), s.grid().side_length().to_bits());
    g(a) == g(b)
        && a.t.to_bits() == b.t.to_bits()
        && a.kappa.to_bits() == b.kappa.to_bits()
        && components(a)
            .iter()
            .zip(components(b).iter())
            .all(|(x, y)| {
                x.values()
                    .iter()
                    .zip(y.values())
                    .all(|(p, q)| p.to_bits() == q.to_bits())
            })
}

//! Binary field checkpoint.
//!
//! Layout (all little-endian, bit-exact across platforms):
//! header `{magic "BFNS", version: u32, n: u32, length: f64}`, then one
//! record per wavevector of the canonical half-spectrum (`k = 0` plus every
//! retained `k` whose first nonzero component is positive, in lexicographic
//! order): three components, each as interleaved `(re: f64, im: f64)`.
//! The conjugate half is implied by Hermitian symmetry. Fields of other
//! scalar types round-trip through `f64`.

use std::io::{Read, Write};

use num_complex::Complex;
use thiserror::Error;

use crate::field::{half_spectrum, RawSpectral, SpectralField};
use crate::grid::TorusGrid;
use crate::scalar::{real, Scalar};

pub const MAGIC: [u8; 4] = *b"BFNS";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes (not a field checkpoint)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("invalid header: {0}")]
    BadHeader(String),
    #[error("stored field is not divergence-free (relative divergence {0:.3e})")]
    NotDivergenceFree(f64),
}

pub fn write_checkpoint<T: Scalar>(
    field: &SpectralField<T>,
    out: &mut impl Write,
) -> std::io::Result<()> {
    let grid = field.grid();
    out.write_all(&MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(grid.n() as u32).to_le_bytes())?;
    out.write_all(&grid.length().to_f64().unwrap().to_le_bytes())?;
    for k in half_spectrum(grid.cutoff()) {
        let coeff = field.coeff(k);
        for c in coeff {
            out.write_all(&c.re.to_f64().unwrap().to_le_bytes())?;
            out.write_all(&c.im.to_f64().unwrap().to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<T: Scalar>(
    input: &mut impl Read,
) -> Result<SpectralField<T>, CheckpointError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    input.read_exact(&mut word)?;
    let n = u32::from_le_bytes(word) as usize;
    let mut dword = [0u8; 8];
    input.read_exact(&mut dword)?;
    let length = f64::from_le_bytes(dword);
    if n < 4 || n % 2 != 0 {
        return Err(CheckpointError::BadHeader(format!(
            "modes per axis must be an even integer >= 4, got {n}"
        )));
    }
    if !(length > 0.0) || !length.is_finite() {
        return Err(CheckpointError::BadHeader(format!(
            "box length must be positive and finite, got {length}"
        )));
    }
    let grid = TorusGrid::<T>::new(n, real::<T>(length))
        .map_err(|e| CheckpointError::BadHeader(e.to_string()))?;
    let mut raw = RawSpectral::zeros(grid.clone());
    for k in half_spectrum(grid.cutoff()) {
        let mut coeff = [Complex::new(T::zero(), T::zero()); 3];
        for c in coeff.iter_mut() {
            input.read_exact(&mut dword)?;
            let re = f64::from_le_bytes(dword);
            input.read_exact(&mut dword)?;
            let im = f64::from_le_bytes(dword);
            *c = Complex::new(real::<T>(re), real::<T>(im));
        }
        raw.set_coeff(k, coeff);
        if k != [0, 0, 0] {
            raw.set_coeff(
                [-k[0], -k[1], -k[2]],
                [coeff[0].conj(), coeff[1].conj(), coeff[2].conj()],
            );
        }
    }
    // The stored field is required to be divergence-free; tolerate only the
    // rounding of one f64 round trip (scaled for the working precision).
    let field = SpectralField::from_invariant_raw(raw);
    let tol = real::<T>(1000.0) * T::epsilon();
    let rel = field.divergence_rel();
    if rel > tol {
        return Err(CheckpointError::NotDivergenceFree(
            rel.to_f64().unwrap_or(f64::NAN),
        ));
    }
    Ok(field)
}

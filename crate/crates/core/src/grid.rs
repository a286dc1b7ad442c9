//! Discretization of the periodic box `[0, L]^3`: wavenumber bookkeeping,
//! the 2/3-rule dealiasing band and shared FFT plans.

use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::scalar::{real, Scalar};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("modes per axis must be an even integer >= 4, got {0}")]
    BadResolution(usize),
    #[error("box side length must be positive and finite")]
    BadLength,
}

/// FFT plans for the base `n` grid and the 3/2-padded product grid, shared
/// read-only between fields living on the same grid.
pub(crate) struct GridPlans<T: Scalar> {
    pub fwd_n: Arc<dyn Fft<T>>,
    pub inv_n: Arc<dyn Fft<T>>,
    pub fwd_m: Arc<dyn Fft<T>>,
    pub inv_m: Arc<dyn Fft<T>>,
}

/// The periodic box `[0, L]^3` sampled with `n` modes per axis.
///
/// Wavenumber index `k` along an axis ranges over `{-n/2+1, ..., n/2}` and
/// corresponds to the physical wavenumber `2 pi k / L`. After the 2/3 rule,
/// only indices with `|k| <= floor(n/3)` are retained; pointwise products are
/// evaluated on the zero-padded `3n/2` grid so that quadratic nonlinearities
/// of band-limited fields are alias-free.
pub struct TorusGrid<T: Scalar> {
    length: T,
    n: usize,
    cutoff: usize,
    plans: Arc<GridPlans<T>>,
}

impl<T: Scalar> Clone for TorusGrid<T> {
    fn clone(&self) -> Self {
        Self {
            length: self.length,
            n: self.n,
            cutoff: self.cutoff,
            plans: Arc::clone(&self.plans),
        }
    }
}

impl<T: Scalar> fmt::Debug for TorusGrid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("n", &self.n)
            .field("cutoff", &self.cutoff)
            .finish()
    }
}

impl<T: Scalar> PartialEq for TorusGrid<T> {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.length == other.length
    }
}

impl<T: Scalar> TorusGrid<T> {
    pub fn new(n: usize, length: T) -> Result<Self, GridError> {
        if n < 4 || n % 2 != 0 {
            return Err(GridError::BadResolution(n));
        }
        if !(length > T::zero()) || !length.is_finite() {
            return Err(GridError::BadLength);
        }
        let m = 3 * n / 2;
        let mut planner = FftPlanner::new();
        let plans = GridPlans {
            fwd_n: planner.plan_fft_forward(n),
            inv_n: planner.plan_fft_inverse(n),
            fwd_m: planner.plan_fft_forward(m),
            inv_m: planner.plan_fft_inverse(m),
        };
        Ok(Self {
            length,
            n,
            cutoff: n / 3,
            plans: Arc::new(plans),
        })
    }

    /// Grid with the default box `[0, 2 pi]^3`.
    pub fn two_pi(n: usize) -> Result<Self, GridError> {
        Self::new(n, real::<T>(2.0) * T::PI())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> T {
        self.length
    }

    /// Highest retained wavenumber index per axis (2/3 rule: `floor(n/3)`).
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Side of the 3/2 zero-padded grid used for pointwise products.
    pub fn padded_n(&self) -> usize {
        3 * self.n / 2
    }

    pub fn volume(&self) -> T {
        self.length * self.length * self.length
    }

    pub(crate) fn plans(&self) -> &GridPlans<T> {
        &self.plans
    }

    /// Signed wavenumber indices for every storage index of the base grid.
    pub fn signed_indices(&self) -> Vec<i64> {
        (0..self.n).map(|i| signed_index(i, self.n)).collect()
    }

    #[inline]
    pub fn in_band(&self, k: [i64; 3]) -> bool {
        let c = self.cutoff as i64;
        k.iter().all(|ki| ki.abs() <= c)
    }

    /// Physical wavevector `2 pi k / L` for the signed index triple.
    #[inline]
    pub fn wavevector(&self, k: [i64; 3]) -> [T; 3] {
        let scale = real::<T>(2.0) * T::PI() / self.length;
        [
            scale * real::<T>(k[0] as f64),
            scale * real::<T>(k[1] as f64),
            scale * real::<T>(k[2] as f64),
        ]
    }

    /// Eigenvalue of the Stokes operator on mode `k`: `|2 pi k / L|^2`.
    #[inline]
    pub fn eigenvalue(&self, k: [i64; 3]) -> T {
        let kappa = self.wavevector(k);
        kappa[0] * kappa[0] + kappa[1] * kappa[1] + kappa[2] * kappa[2]
    }

    /// Largest Stokes eigenvalue over the retained band.
    pub fn max_eigenvalue(&self) -> T {
        let c = self.cutoff as i64;
        self.eigenvalue([c, c, c])
    }

    /// All signed wavevectors of the retained band, k = 0 included, sorted by
    /// `(|k|^2, k0, k1, k2)`. One entry per wavevector (conjugate partners
    /// both appear).
    pub fn band_modes_sorted(&self) -> Vec<[i64; 3]> {
        let c = self.cutoff as i64;
        let mut out = Vec::new();
        for k0 in -c..=c {
            for k1 in -c..=c {
                for k2 in -c..=c {
                    out.push([k0, k1, k2]);
                }
            }
        }
        out.sort_by_key(|k| (k[0] * k[0] + k[1] * k[1] + k[2] * k[2], k[0], k[1], k[2]));
        out
    }
}

/// Signed wavenumber index for storage index `i` on an axis of `len` points:
/// `i` for `i <= len/2`, `i - len` otherwise.
#[inline]
pub fn signed_index(i: usize, len: usize) -> i64 {
    if i <= len / 2 {
        i as i64
    } else {
        i as i64 - len as i64
    }
}

/// Storage index of signed wavenumber `k` on an axis of `len` points.
#[inline]
pub fn storage_index(k: i64, len: usize) -> usize {
    if k >= 0 {
        k as usize
    } else {
        (k + len as i64) as usize
    }
}

//! Vector fields on the periodic box in spectral and collocation form.
//!
//! The transform convention: the forward transform carries `1/n^3`, so
//! coefficients are resolution independent and Parseval reads
//! `||u||_{L2}^2 = L^3 sum_k |c(k)|^2`. A `SpectralField` is always real
//! (Hermitian coefficient symmetry), band-limited to the 2/3-rule cutoff,
//! and divergence-free; `RawSpectral` is the same storage without the
//! divergence-free guarantee and is what the Leray projection consumes.

use ndarray::Array3;
use num_complex::Complex;
use thiserror::Error;

use crate::grid::{signed_index, storage_index, TorusGrid};
use crate::scalar::{real, Scalar};
use crate::transform::fft3_inplace;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("negative Stokes power on a field with nonzero mean (|mean| = {mean_magnitude:.3e})")]
    NonInvertible { mean_magnitude: f64 },
}

/// Norms of a velocity field: `L^2`, gradient `L^2`, the full `W^{1,2}`
/// norm `v_norm^2 = l2^2 + grad_l2^2`, and requested Lebesgue norms.
#[derive(Debug, Clone)]
pub struct NormReport<T: Scalar> {
    pub l2: T,
    pub grad_l2: T,
    pub v_norm: T,
    /// Pairs `(p, ||u||_{L^p})` in the order requested.
    pub lp: Vec<(T, T)>,
}

impl<T: Scalar> NormReport<T> {
    pub fn lp(&self, p: T) -> Option<T> {
        self.lp.iter().find(|(q, _)| *q == p).map(|(_, v)| *v)
    }
}

fn zero_cube<T: Scalar>(n: usize) -> Array3<Complex<T>> {
    Array3::from_elem((n, n, n), Complex::new(T::zero(), T::zero()))
}

/// Spectral coefficients without the divergence-free guarantee.
#[derive(Debug, Clone)]
pub struct RawSpectral<T: Scalar> {
    grid: TorusGrid<T>,
    coeffs: [Array3<Complex<T>>; 3],
}

impl<T: Scalar> RawSpectral<T> {
    pub fn zeros(grid: TorusGrid<T>) -> Self {
        let n = grid.n();
        Self {
            grid,
            coeffs: [zero_cube(n), zero_cube(n), zero_cube(n)],
        }
    }

    /// Builds coefficients from a closure over the retained band and then
    /// enforces Hermitian symmetry, so the represented field is real even if
    /// the closure is not conjugate-symmetric.
    pub fn from_modes(grid: TorusGrid<T>, mut f: impl FnMut([i64; 3]) -> [Complex<T>; 3]) -> Self {
        let mut raw = Self::zeros(grid);
        let c = raw.grid.cutoff() as i64;
        let n = raw.grid.n();
        for k0 in -c..=c {
            for k1 in -c..=c {
                for k2 in -c..=c {
                    let k = [k0, k1, k2];
                    let idx = storage3(k, n);
                    let val = f(k);
                    for comp in 0..3 {
                        raw.coeffs[comp][idx] = val[comp];
                    }
                }
            }
        }
        raw.symmetrize();
        raw
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.grid
    }

    pub fn coeff(&self, k: [i64; 3]) -> [Complex<T>; 3] {
        let idx = storage3(k, self.grid.n());
        [self.coeffs[0][idx], self.coeffs[1][idx], self.coeffs[2][idx]]
    }

    pub fn set_coeff(&mut self, k: [i64; 3], value: [Complex<T>; 3]) {
        let idx = storage3(k, self.grid.n());
        for comp in 0..3 {
            self.coeffs[comp][idx] = value[comp];
        }
    }

    /// Zeroes modes outside the dealiased band and makes `c(-k)` the exact
    /// conjugate of `c(k)`.
    pub(crate) fn symmetrize(&mut self) {
        let n = self.grid.n();
        let cutoff = self.grid.cutoff() as i64;
        let half = real::<T>(0.5);
        for comp in self.coeffs.iter_mut() {
            // Mask everything outside the band first.
            for ((i, j, l), v) in comp.indexed_iter_mut() {
                let k = [
                    signed_index(i, n),
                    signed_index(j, n),
                    signed_index(l, n),
                ];
                if k.iter().any(|ki| ki.abs() > cutoff) {
                    *v = Complex::new(T::zero(), T::zero());
                }
            }
            for k in half_spectrum(cutoff as usize) {
                if k == [0, 0, 0] {
                    let idx = storage3(k, n);
                    comp[idx].im = T::zero();
                    continue;
                }
                let idx = storage3(k, n);
                let midx = storage3([-k[0], -k[1], -k[2]], n);
                let avg = (comp[idx] + comp[midx].conj()) * half;
                comp[idx] = avg;
                comp[midx] = avg.conj();
            }
        }
    }

    /// Orthogonal projection onto divergence-free fields, mode by mode:
    /// `c(k) -> c(k) - k (k . c(k)) / |k|^2`, with the `k = 0` mode passed
    /// through unchanged.
    pub fn leray_project(&self) -> SpectralField<T> {
        let mut out = self.clone();
        let n = out.grid.n();
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let k = [
                        signed_index(i, n),
                        signed_index(j, n),
                        signed_index(l, n),
                    ];
                    let ksq = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
                    if ksq == 0 {
                        continue;
                    }
                    let kf = [
                        real::<T>(k[0] as f64),
                        real::<T>(k[1] as f64),
                        real::<T>(k[2] as f64),
                    ];
                    let inv_ksq = T::one() / real::<T>(ksq as f64);
                    let dot = out.coeffs[0][[i, j, l]] * kf[0]
                        + out.coeffs[1][[i, j, l]] * kf[1]
                        + out.coeffs[2][[i, j, l]] * kf[2];
                    for comp in 0..3 {
                        let corr = dot * (kf[comp] * inv_ksq);
                        out.coeffs[comp][[i, j, l]] = out.coeffs[comp][[i, j, l]] - corr;
                    }
                }
            }
        }
        SpectralField { inner: out }
    }
}

#[inline]
fn storage3(k: [i64; 3], n: usize) -> [usize; 3] {
    [
        storage_index(k[0], n),
        storage_index(k[1], n),
        storage_index(k[2], n),
    ]
}

/// Half of the retained band: `k = 0` plus every `k` whose first nonzero
/// component is positive, sorted lexicographically. This is the canonical
/// order of the checkpoint format.
pub(crate) fn half_spectrum(cutoff: usize) -> Vec<[i64; 3]> {
    let c = cutoff as i64;
    let mut out = Vec::new();
    for k0 in -c..=c {
        for k1 in -c..=c {
            for k2 in -c..=c {
                let k = [k0, k1, k2];
                let first = k.iter().copied().find(|ki| *ki != 0);
                match first {
                    None => out.push(k),
                    Some(v) if v > 0 => out.push(k),
                    _ => {}
                }
            }
        }
    }
    out.sort();
    out
}

/// A real, divergence-free, band-limited velocity field stored as Fourier
/// coefficients.
#[derive(Debug, Clone)]
pub struct SpectralField<T: Scalar> {
    inner: RawSpectral<T>,
}

impl<T: Scalar> SpectralField<T> {
    pub fn zeros(grid: TorusGrid<T>) -> Self {
        Self {
            inner: RawSpectral::zeros(grid),
        }
    }

    /// Build from a closure over band modes and project onto the
    /// divergence-free subspace.
    pub fn from_modes_projected(
        grid: TorusGrid<T>,
        f: impl FnMut([i64; 3]) -> [Complex<T>; 3],
    ) -> Self {
        RawSpectral::from_modes(grid, f).leray_project()
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.inner.grid
    }

    pub fn as_raw(&self) -> &RawSpectral<T> {
        &self.inner
    }

    pub fn into_raw(self) -> RawSpectral<T> {
        self.inner
    }

    pub fn coeff(&self, k: [i64; 3]) -> [Complex<T>; 3] {
        self.inner.coeff(k)
    }

    pub(crate) fn coeffs(&self) -> &[Array3<Complex<T>>; 3] {
        &self.inner.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Array3<Complex<T>>; 3] {
        &mut self.inner.coeffs
    }

    /// Constructs from coefficient cubes that are already known to satisfy
    /// the invariants (used by operators that preserve them).
    pub(crate) fn from_invariant_raw(inner: RawSpectral<T>) -> Self {
        Self { inner }
    }

    pub fn mean_coeff(&self) -> [Complex<T>; 3] {
        self.coeff([0, 0, 0])
    }

    /// `L^2` norm via Parseval.
    pub fn l2_norm(&self) -> T {
        let vol = self.grid().volume();
        let mut sum = T::zero();
        for comp in self.coeffs() {
            for v in comp.iter() {
                sum += v.norm_sqr();
            }
        }
        (vol * sum).sqrt()
    }

    /// `L^2` norm of the gradient via Parseval.
    pub fn grad_l2_norm(&self) -> T {
        let vol = self.grid().volume();
        let n = self.grid().n();
        let mut sum = T::zero();
        for comp in self.coeffs() {
            for ((i, j, l), v) in comp.indexed_iter() {
                let k = [
                    signed_index(i, n),
                    signed_index(j, n),
                    signed_index(l, n),
                ];
                sum += self.grid().eigenvalue(k) * v.norm_sqr();
            }
        }
        (vol * sum).sqrt()
    }

    pub fn v_norm(&self) -> T {
        let l2 = self.l2_norm();
        let g = self.grad_l2_norm();
        (l2 * l2 + g * g).sqrt()
    }

    /// `L^2`, gradient and `W^{1,2}` norms from coefficients (exact via
    /// Parseval); `L^p` norms for `p != 2` by collocation quadrature on the
    /// 3/2 zero-padded grid, exact for even `p <= 4` on band-limited fields.
    pub fn norms(&self, p_list: &[T]) -> NormReport<T> {
        let two = real::<T>(2.0);
        for p in p_list {
            assert!(
                *p >= two && p.is_finite(),
                "Lebesgue exponents must satisfy 2 <= p < infinity"
            );
        }
        let l2 = self.l2_norm();
        let grad_l2 = self.grad_l2_norm();
        let v_norm = (l2 * l2 + grad_l2 * grad_l2).sqrt();

        let needs_quadrature = p_list.iter().any(|p| *p != two);
        let padded = if needs_quadrature {
            Some(self.padded_physical())
        } else {
            None
        };
        let mut lp = Vec::with_capacity(p_list.len());
        for &p in p_list {
            if p == two {
                lp.push((p, l2));
                continue;
            }
            let vals = padded.as_ref().unwrap();
            let m = self.grid().padded_n();
            let weight = self.grid().volume() / real::<T>((m * m * m) as f64);
            let half_p = p * real::<T>(0.5);
            let mut sum = T::zero();
            for ((a, b), c) in vals[0].iter().zip(vals[1].iter()).zip(vals[2].iter()) {
                let sq = *a * *a + *b * *b + *c * *c;
                sum += sq.powf(half_p);
            }
            lp.push((p, (weight * sum).powf(T::one() / p)));
        }
        NormReport {
            l2,
            grad_l2,
            v_norm,
            lp,
        }
    }

    /// `L^2` inner product via Parseval.
    pub fn h_inner(&self, other: &Self) -> T {
        assert_eq!(self.grid(), other.grid(), "fields must share a grid");
        let vol = self.grid().volume();
        let mut sum = T::zero();
        for comp in 0..3 {
            for (a, b) in self.coeffs()[comp].iter().zip(other.coeffs()[comp].iter()) {
                sum += a.re * b.re + a.im * b.im;
            }
        }
        vol * sum
    }

    /// `W^{1,2}` inner product: `(u, v) + (grad u, grad v)`.
    pub fn v_inner(&self, other: &Self) -> T {
        assert_eq!(self.grid(), other.grid(), "fields must share a grid");
        let vol = self.grid().volume();
        let n = self.grid().n();
        let mut sum = T::zero();
        for comp in 0..3 {
            for (((i, j, l), a), b) in self.coeffs()[comp]
                .indexed_iter()
                .zip(other.coeffs()[comp].iter())
            {
                let k = [
                    signed_index(i, n),
                    signed_index(j, n),
                    signed_index(l, n),
                ];
                let w = T::one() + self.grid().eigenvalue(k);
                sum += w * (a.re * b.re + a.im * b.im);
            }
        }
        vol * sum
    }

    /// Real fractional power of the Stokes operator, diagonal per mode:
    /// multiplies `c(k)` by `(|2 pi k / L|^2)^s`. The mean mode is
    /// annihilated for `s > 0`, kept for `s = 0`, and must vanish (relative
    /// tolerance 1e-14) for `s < 0`.
    pub fn stokes_pow(&self, s: T) -> Result<Self, OperatorError> {
        if s == T::zero() {
            return Ok(self.clone());
        }
        if s < T::zero() {
            let mc = self.mean_coeff();
            let mean_sq: T = mc.iter().map(|c| c.norm_sqr()).fold(T::zero(), |a, b| a + b);
            let mean_l2 = (self.grid().volume() * mean_sq).sqrt();
            let tol = real::<T>(1e-14) * (T::one() + self.l2_norm());
            if mean_l2 > tol {
                return Err(OperatorError::NonInvertible {
                    mean_magnitude: mean_l2.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        let mut out = self.clone();
        let n = self.grid().n();
        for comp in out.inner.coeffs.iter_mut() {
            for ((i, j, l), v) in comp.indexed_iter_mut() {
                let k = [
                    signed_index(i, n),
                    signed_index(j, n),
                    signed_index(l, n),
                ];
                if k == [0, 0, 0] {
                    *v = Complex::new(T::zero(), T::zero());
                } else {
                    let factor = self.grid().eigenvalue(k).powf(s);
                    *v = *v * factor;
                }
            }
        }
        Ok(out)
    }

    /// `L^2` norm of the divergence, relative to the gradient scale.
    pub fn divergence_rel(&self) -> T {
        let vol = self.grid().volume();
        let n = self.grid().n();
        let mut sum = T::zero();
        for ((i, j, l), _) in self.coeffs()[0].indexed_iter() {
            let k = [
                signed_index(i, n),
                signed_index(j, n),
                signed_index(l, n),
            ];
            let kappa = self.grid().wavevector(k);
            let mut dot = Complex::new(T::zero(), T::zero());
            for comp in 0..3 {
                dot = dot + self.coeffs()[comp][[i, j, l]] * kappa[comp];
            }
            sum += dot.norm_sqr();
        }
        let div = (vol * sum).sqrt();
        div / (T::one() + self.grad_l2_norm())
    }

    /// Inverse transform to the collocation grid.
    pub fn to_physical(&self) -> PhysicalField<T> {
        let n = self.grid().n();
        let mut values = [
            Array3::zeros((n, n, n)),
            Array3::zeros((n, n, n)),
            Array3::zeros((n, n, n)),
        ];
        for comp in 0..3 {
            let mut cube = self.coeffs()[comp].clone();
            fft3_inplace(&mut cube, self.grid().plans().inv_n.as_ref());
            for (dst, src) in values[comp].iter_mut().zip(cube.iter()) {
                *dst = src.re;
            }
        }
        PhysicalField {
            grid: self.grid().clone(),
            values,
        }
    }

    /// Samples the field on the 3/2 zero-padded grid (used for alias-free
    /// pointwise products and `L^p` quadrature).
    pub(crate) fn padded_physical(&self) -> [Array3<T>; 3] {
        let m = self.grid().padded_n();
        let mut out = [
            Array3::zeros((m, m, m)),
            Array3::zeros((m, m, m)),
            Array3::zeros((m, m, m)),
        ];
        for comp in 0..3 {
            let mut cube = embed_band(&self.inner.coeffs[comp], self.grid(), m);
            fft3_inplace(&mut cube, self.grid().plans().inv_m.as_ref());
            for (dst, src) in out[comp].iter_mut().zip(cube.iter()) {
                *dst = src.re;
            }
        }
        out
    }

    pub fn scaled(&self, factor: T) -> Self {
        let mut out = self.clone();
        for comp in out.inner.coeffs.iter_mut() {
            for v in comp.iter_mut() {
                *v = *v * factor;
            }
        }
        out
    }

    /// `self += factor * other`.
    pub fn axpy(&mut self, factor: T, other: &Self) {
        assert_eq!(self.grid(), other.grid(), "fields must share a grid");
        for comp in 0..3 {
            for (a, b) in self.inner.coeffs[comp]
                .iter_mut()
                .zip(other.inner.coeffs[comp].iter())
            {
                *a = *a + *b * factor;
            }
        }
    }
}

impl<T: Scalar> std::ops::Add for &SpectralField<T> {
    type Output = SpectralField<T>;
    fn add(self, rhs: Self) -> SpectralField<T> {
        let mut out = self.clone();
        out.axpy(T::one(), rhs);
        out
    }
}

impl<T: Scalar> std::ops::Sub for &SpectralField<T> {
    type Output = SpectralField<T>;
    fn sub(self, rhs: Self) -> SpectralField<T> {
        let mut out = self.clone();
        out.axpy(-T::one(), rhs);
        out
    }
}

/// Embed band-limited coefficients of the `n` grid into an `m >= n` cube
/// (identity on coefficients; the transform normalization makes them
/// resolution independent).
pub(crate) fn embed_band<T: Scalar>(
    coeffs: &Array3<Complex<T>>,
    grid: &TorusGrid<T>,
    m: usize,
) -> Array3<Complex<T>> {
    let n = grid.n();
    let c = grid.cutoff() as i64;
    let mut out = zero_cube(m);
    for k0 in -c..=c {
        for k1 in -c..=c {
            for k2 in -c..=c {
                let src = storage3([k0, k1, k2], n);
                let dst = storage3([k0, k1, k2], m);
                out[dst] = coeffs[src];
            }
        }
    }
    out
}

/// Forward-transform real samples on the padded `m` grid and keep the
/// dealiased band on the base grid.
pub(crate) fn padded_to_raw<T: Scalar>(
    values: &[Array3<T>; 3],
    grid: &TorusGrid<T>,
) -> RawSpectral<T> {
    let m = grid.padded_n();
    let n = grid.n();
    let c = grid.cutoff() as i64;
    let scale = T::one() / real::<T>((m * m * m) as f64);
    let mut raw = RawSpectral::zeros(grid.clone());
    for comp in 0..3 {
        let mut cube = Array3::from_shape_fn((m, m, m), |idx| Complex::new(values[comp][idx], T::zero()));
        fft3_inplace(&mut cube, grid.plans().fwd_m.as_ref());
        for k0 in -c..=c {
            for k1 in -c..=c {
                for k2 in -c..=c {
                    let src = storage3([k0, k1, k2], m);
                    let dst = storage3([k0, k1, k2], n);
                    raw.coeffs[comp][dst] = cube[src] * scale;
                }
            }
        }
    }
    raw.symmetrize();
    raw
}

/// The same velocity field sampled on the `n^3` collocation grid.
#[derive(Debug, Clone)]
pub struct PhysicalField<T: Scalar> {
    grid: TorusGrid<T>,
    values: [Array3<T>; 3],
}

impl<T: Scalar> PhysicalField<T> {
    /// Sample a closure at the collocation points `x_i = L i / n`.
    pub fn from_fn(grid: TorusGrid<T>, mut f: impl FnMut([T; 3]) -> [T; 3]) -> Self {
        let n = grid.n();
        let dx = grid.length() / real::<T>(n as f64);
        let mut values = [
            Array3::zeros((n, n, n)),
            Array3::zeros((n, n, n)),
            Array3::zeros((n, n, n)),
        ];
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let x = [
                        dx * real::<T>(i as f64),
                        dx * real::<T>(j as f64),
                        dx * real::<T>(l as f64),
                    ];
                    let v = f(x);
                    for comp in 0..3 {
                        values[comp][[i, j, l]] = v[comp];
                    }
                }
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[Array3<T>; 3] {
        &self.values
    }

    /// Forward transform with band truncation but no Leray projection.
    pub fn to_spectral_raw(&self) -> RawSpectral<T> {
        let n = self.grid.n();
        let scale = T::one() / real::<T>((n * n * n) as f64);
        let mut raw = RawSpectral::zeros(self.grid.clone());
        for comp in 0..3 {
            let mut cube =
                Array3::from_shape_fn((n, n, n), |idx| Complex::new(self.values[comp][idx], T::zero()));
            fft3_inplace(&mut cube, self.grid.plans().fwd_n.as_ref());
            for (dst, src) in raw.coeffs[comp].iter_mut().zip(cube.iter()) {
                *dst = *src * scale;
            }
        }
        raw.symmetrize();
        raw
    }

    /// Forward transform followed by the Leray projection.
    pub fn to_spectral_projected(&self) -> SpectralField<T> {
        self.to_spectral_raw().leray_project()
    }
}

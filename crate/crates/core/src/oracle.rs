//! Brute-force reference implementations used by the verification suites.
//!
//! Everything here evaluates Fourier sums and convolutions directly over the
//! mode set, with no FFT and no padded grid, so these routines are slow but
//! independent of the pseudo-spectral path they are used to check. Intended
//! for small resolutions (n = 8 or so).

use num_complex::Complex;

use crate::field::{RawSpectral, SpectralField};
use crate::scalar::{real, Scalar};

fn band<T: Scalar>(u: &SpectralField<T>) -> Vec<[i64; 3]> {
    let c = u.grid().cutoff() as i64;
    let mut out = Vec::new();
    for k0 in -c..=c {
        for k1 in -c..=c {
            for k2 in -c..=c {
                out.push([k0, k1, k2]);
            }
        }
    }
    out
}

/// `Pi[(u . grad) v]` by dense convolution over the retained mode set.
pub fn bilinear_convection<T: Scalar>(
    u: &SpectralField<T>,
    v: &SpectralField<T>,
) -> SpectralField<T> {
    assert_eq!(u.grid(), v.grid(), "fields must share a grid");
    let grid = u.grid().clone();
    let cutoff = grid.cutoff() as i64;
    let modes = band(u);
    let mut acc = RawSpectral::zeros(grid.clone());
    for &p in &modes {
        let up = u.coeff(p);
        if up.iter().all(|c| c.norm_sqr() == T::zero()) {
            continue;
        }
        for &q in &modes {
            let k = [p[0] + q[0], p[1] + q[1], p[2] + q[2]];
            if k.iter().any(|ki| ki.abs() > cutoff) {
                continue;
            }
            let vq = v.coeff(q);
            let kappa = grid.wavevector(q);
            for comp in 0..3 {
                // (i kappa_axis v_comp(q)) summed against u_axis(p)
                let mut term = Complex::new(T::zero(), T::zero());
                for axis in 0..3 {
                    let deriv = Complex::new(-vq[comp].im * kappa[axis], vq[comp].re * kappa[axis]);
                    term = term + up[axis] * deriv;
                }
                let mut cur = acc.coeff(k);
                cur[comp] = cur[comp] + term;
                acc.set_coeff(k, cur);
            }
        }
    }
    acc.leray_project()
}

/// `a Pi(|u|^2 u)` (the damping term at `alpha = 1`) by two dense
/// convolutions: first `s = |u|^2` on the doubled band, then `s * u_j`
/// truncated back to the retained band.
pub fn bf_cubic<T: Scalar>(u: &SpectralField<T>, a: T) -> SpectralField<T> {
    let grid = u.grid().clone();
    let cutoff = grid.cutoff() as i64;
    let modes = band(u);
    let wide = 2 * cutoff;
    let side = (2 * wide + 1) as usize;
    let idx = |k: [i64; 3]| -> usize {
        let o = |x: i64| (x + wide) as usize;
        (o(k[0]) * side + o(k[1])) * side + o(k[2])
    };
    let mut s = vec![Complex::new(T::zero(), T::zero()); side * side * side];
    for &p in &modes {
        let up = u.coeff(p);
        for &q in &modes {
            let uq = u.coeff(q);
            let r = [p[0] + q[0], p[1] + q[1], p[2] + q[2]];
            let mut dot = Complex::new(T::zero(), T::zero());
            for comp in 0..3 {
                dot = dot + up[comp] * uq[comp];
            }
            s[idx(r)] = s[idx(r)] + dot;
        }
    }
    let mut acc = RawSpectral::zeros(grid);
    for r0 in -wide..=wide {
        for r1 in -wide..=wide {
            for r2 in -wide..=wide {
                let sr = s[idx([r0, r1, r2])];
                if sr.norm_sqr() == T::zero() {
                    continue;
                }
                for &p in &modes {
                    let k = [r0 + p[0], r1 + p[1], r2 + p[2]];
                    if k.iter().any(|ki| ki.abs() > cutoff) {
                        continue;
                    }
                    let up = u.coeff(p);
                    let mut cur = acc.coeff(k);
                    for comp in 0..3 {
                        cur[comp] = cur[comp] + sr * up[comp] * a;
                    }
                    acc.set_coeff(k, cur);
                }
            }
        }
    }
    acc.leray_project()
}

/// Evaluates the field at an arbitrary point by direct Fourier summation.
pub fn eval_at<T: Scalar>(u: &SpectralField<T>, x: [T; 3]) -> [T; 3] {
    let mut out = [T::zero(); 3];
    let c = u.grid().cutoff() as i64;
    for k0 in -c..=c {
        for k1 in -c..=c {
            for k2 in -c..=c {
                let k = [k0, k1, k2];
                let kappa = u.grid().wavevector(k);
                let phase = kappa[0] * x[0] + kappa[1] * x[1] + kappa[2] * x[2];
                let (sin, cos) = phase.sin_cos();
                let coeff = u.coeff(k);
                for comp in 0..3 {
                    // Re(c e^{i phase})
                    out[comp] += coeff[comp].re * cos - coeff[comp].im * sin;
                }
            }
        }
    }
    out
}

/// `int ((u1 . grad) u2) . u3 dx` by direct Fourier evaluation on an
/// oversampled quadrature grid, entirely bypassing the FFT path.
pub fn trilinear_quadrature<T: Scalar>(
    u1: &SpectralField<T>,
    u2: &SpectralField<T>,
    u3: &SpectralField<T>,
    points_per_axis: usize,
) -> T {
    let grid = u1.grid();
    let g = points_per_axis;
    let dx = grid.length() / real::<T>(g as f64);
    let c = grid.cutoff() as i64;
    let mut sum = T::zero();
    for i in 0..g {
        for j in 0..g {
            for l in 0..g {
                let x = [
                    dx * real::<T>(i as f64),
                    dx * real::<T>(j as f64),
                    dx * real::<T>(l as f64),
                ];
                let a = eval_at(u1, x);
                let b = eval_at(u3, x);
                // grad u2 at x by direct summation
                let mut conv = [T::zero(); 3];
                for k0 in -c..=c {
                    for k1 in -c..=c {
                        for k2 in -c..=c {
                            let k = [k0, k1, k2];
                            let kappa = grid.wavevector(k);
                            let phase = kappa[0] * x[0] + kappa[1] * x[1] + kappa[2] * x[2];
                            let (sin, cos) = phase.sin_cos();
                            let coeff = u2.coeff(k);
                            let adotk = a[0] * kappa[0] + a[1] * kappa[1] + a[2] * kappa[2];
                            for comp in 0..3 {
                                // Re(i kappa . a  c e^{i phase})
                                let re = -coeff[comp].im * cos - coeff[comp].re * sin;
                                conv[comp] += adotk * re;
                            }
                        }
                    }
                }
                sum += conv[0] * b[0] + conv[1] * b[1] + conv[2] * b[2];
            }
        }
    }
    sum * dx * dx * dx
}

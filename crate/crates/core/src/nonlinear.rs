//! The convective bilinear term `B(u,v) = Pi[(u . grad) v]`, the
//! Brinkman-Forchheimer damping `a |u|^{2 alpha} u`, and the trilinear form
//! `b(u1,u2,u3)`, all evaluated pseudo-spectrally with 3/2-rule dealiasing.
//!
//! Pointwise products are formed on the zero-padded grid and truncated back
//! to the dealiased band. For the quadratic convective term this is exact;
//! for `|u|^{2 alpha} u` with non-integer `2 alpha` the product is not
//! band-limited and the truncation is the Galerkin projection of the term.

use ndarray::Array3;
use num_complex::Complex;
use thiserror::Error;

use crate::field::{padded_to_raw, SpectralField};
use crate::grid::storage_index;
use crate::scalar::{real, Scalar};
use crate::transform::fft3_inplace;

#[derive(Debug, Error)]
pub enum BfParamsError {
    #[error("damping coefficient must be positive, got {0}")]
    NonPositiveA(f64),
    #[error("damping exponent must lie in [1, 3/2], got {0}")]
    AlphaOutOfRange(f64),
}

/// Brinkman-Forchheimer damping parameters: coefficient `a > 0` and
/// exponent `alpha` in `[1, 3/2]`.
#[derive(Debug, Clone, Copy)]
pub struct BfParams<T: Scalar> {
    a: T,
    alpha: T,
}

impl<T: Scalar> BfParams<T> {
    pub fn new(a: T, alpha: T) -> Result<Self, BfParamsError> {
        if !(a > T::zero()) || !a.is_finite() {
            return Err(BfParamsError::NonPositiveA(a.to_f64().unwrap_or(f64::NAN)));
        }
        if !(alpha >= T::one() && alpha <= real::<T>(1.5)) {
            return Err(BfParamsError::AlphaOutOfRange(
                alpha.to_f64().unwrap_or(f64::NAN),
            ));
        }
        Ok(Self { a, alpha })
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }
}

/// Samples `d v_j / d x_i` on the padded grid via spectral differentiation.
pub(crate) fn padded_partial<T: Scalar>(v: &SpectralField<T>, axis: usize, comp: usize) -> Array3<T> {
    let grid = v.grid();
    let n = grid.n();
    let m = grid.padded_n();
    let c = grid.cutoff() as i64;
    let mut cube = Array3::from_elem((m, m, m), Complex::new(T::zero(), T::zero()));
    for k0 in -c..=c {
        for k1 in -c..=c {
            for k2 in -c..=c {
                let k = [k0, k1, k2];
                let kappa = grid.wavevector(k)[axis];
                let src = [
                    storage_index(k0, n),
                    storage_index(k1, n),
                    storage_index(k2, n),
                ];
                let dst = [
                    storage_index(k0, m),
                    storage_index(k1, m),
                    storage_index(k2, m),
                ];
                let val = v.coeffs()[comp][src];
                // i kappa * c
                cube[dst] = Complex::new(-val.im * kappa, val.re * kappa);
            }
        }
    }
    fft3_inplace(&mut cube, grid.plans().inv_m.as_ref());
    Array3::from_shape_fn((m, m, m), |idx| cube[idx].re)
}

/// `B(u,v) = Pi[(u . grad) v]`, divergence-free and band-limited.
pub fn bilinear_b<T: Scalar>(u: &SpectralField<T>, v: &SpectralField<T>) -> SpectralField<T> {
    assert_eq!(u.grid(), v.grid(), "fields must share a grid");
    let grid = u.grid();
    let m = grid.padded_n();
    let up = u.padded_physical();
    let mut w = [
        Array3::<T>::zeros((m, m, m)),
        Array3::<T>::zeros((m, m, m)),
        Array3::<T>::zeros((m, m, m)),
    ];
    for comp in 0..3 {
        for axis in 0..3 {
            let dv = padded_partial(v, axis, comp);
            for ((acc, a), b) in w[comp].iter_mut().zip(up[axis].iter()).zip(dv.iter()) {
                *acc += *a * *b;
            }
        }
    }
    padded_to_raw(&w, grid).leray_project()
}

/// The trilinear form `b(u1,u2,u3) = int ((u1 . grad) u2) . u3 dx` by
/// collocation quadrature on the padded grid (exact for band-limited
/// inputs, since triple products stay below the padded Nyquist index).
pub fn trilinear_b<T: Scalar>(
    u1: &SpectralField<T>,
    u2: &SpectralField<T>,
    u3: &SpectralField<T>,
) -> T {
    assert_eq!(u1.grid(), u2.grid(), "fields must share a grid");
    assert_eq!(u1.grid(), u3.grid(), "fields must share a grid");
    let grid = u1.grid();
    let m = grid.padded_n();
    let u1p = u1.padded_physical();
    let u3p = u3.padded_physical();
    let mut sum = T::zero();
    for comp in 0..3 {
        for axis in 0..3 {
            let dv = padded_partial(u2, axis, comp);
            for ((a, b), c) in u1p[axis].iter().zip(dv.iter()).zip(u3p[comp].iter()) {
                sum += *a * *b * *c;
            }
        }
    }
    sum * grid.volume() / real::<T>((m * m * m) as f64)
}

/// `a Pi(|u|^{2 alpha} u)` with `|.|` the pointwise Euclidean 3-vector norm.
pub fn bf_term<T: Scalar>(u: &SpectralField<T>, params: &BfParams<T>) -> SpectralField<T> {
    damping_with_energy(u, params).0
}

/// Damping term together with `a ||u||_{L^{2a+2}}^{2a+2}` evaluated by the
/// same collocation quadrature, so the energy ledger pairing
/// `<a Pi |u|^{2a} u, u> = a ||u||^{2a+2}` holds to rounding.
pub(crate) fn damping_with_energy<T: Scalar>(
    u: &SpectralField<T>,
    params: &BfParams<T>,
) -> (SpectralField<T>, T) {
    let grid = u.grid();
    let m = grid.padded_n();
    let up = u.padded_physical();
    let alpha = params.alpha;
    let one = T::one();
    let mut w = [
        Array3::<T>::zeros((m, m, m)),
        Array3::<T>::zeros((m, m, m)),
        Array3::<T>::zeros((m, m, m)),
    ];
    let mut energy = T::zero();
    let alpha_is_one = alpha == one;
    {
        let (ux, uy, uz) = (
            up[0].as_slice().unwrap(),
            up[1].as_slice().unwrap(),
            up[2].as_slice().unwrap(),
        );
        let [w0, w1, w2] = &mut w;
        let (w0, w1, w2) = (
            w0.as_slice_mut().unwrap(),
            w1.as_slice_mut().unwrap(),
            w2.as_slice_mut().unwrap(),
        );
        for idx in 0..m * m * m {
            let (x, y, z) = (ux[idx], uy[idx], uz[idx]);
            let sq = x * x + y * y + z * z;
            let gain = if alpha_is_one { sq } else { sq.powf(alpha) };
            w0[idx] = gain * x;
            w1[idx] = gain * y;
            w2[idx] = gain * z;
            energy += gain * sq;
        }
    }
    let quad_weight = grid.volume() / real::<T>((m * m * m) as f64);
    let field = padded_to_raw(&w, grid).leray_project().scaled(params.a);
    (field, params.a * energy * quad_weight)
}

/// Frechet derivative of the damping term applied to a direction:
/// `a Pi( |u|^{2a} delta + 2a |u|^{2(a-1)} (u . delta) u )`.
pub(crate) fn damping_jacobian_apply<T: Scalar>(
    u: &SpectralField<T>,
    delta: &SpectralField<T>,
    params: &BfParams<T>,
) -> SpectralField<T> {
    let grid = u.grid();
    let m = grid.padded_n();
    let up = u.padded_physical();
    let dp = delta.padded_physical();
    let alpha = params.alpha();
    let two_alpha = real::<T>(2.0) * alpha;
    let one = T::one();
    let mut w = [
        Array3::<T>::zeros((m, m, m)),
        Array3::<T>::zeros((m, m, m)),
        Array3::<T>::zeros((m, m, m)),
    ];
    {
        let (ux, uy, uz) = (
            up[0].as_slice().unwrap(),
            up[1].as_slice().unwrap(),
            up[2].as_slice().unwrap(),
        );
        let (dx, dy, dz) = (
            dp[0].as_slice().unwrap(),
            dp[1].as_slice().unwrap(),
            dp[2].as_slice().unwrap(),
        );
        let [w0, w1, w2] = &mut w;
        let (w0, w1, w2) = (
            w0.as_slice_mut().unwrap(),
            w1.as_slice_mut().unwrap(),
            w2.as_slice_mut().unwrap(),
        );
        for idx in 0..m * m * m {
            let (x, y, z) = (ux[idx], uy[idx], uz[idx]);
            let (a, b, c) = (dx[idx], dy[idx], dz[idx]);
            let sq = x * x + y * y + z * z;
            let gain = if alpha == one { sq } else { sq.powf(alpha) };
            let gain_prime = if alpha == one {
                real::<T>(2.0)
            } else {
                two_alpha * sq.powf(alpha - one)
            };
            let udotd = x * a + y * b + z * c;
            w0[idx] = gain * a + gain_prime * udotd * x;
            w1[idx] = gain * b + gain_prime * udotd * y;
            w2[idx] = gain * c + gain_prime * udotd * z;
        }
    }
    padded_to_raw(&w, grid).leray_project().scaled(params.a())
}

/// `|u|^{2 alpha} u` for a single 3-vector.
#[inline]
pub fn bf_pointwise<T: Scalar>(u: [T; 3], alpha: T) -> [T; 3] {
    let sq = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
    let gain = if alpha == T::one() { sq } else { sq.powf(alpha) };
    [gain * u[0], gain * u[1], gain * u[2]]
}

/// Monotonicity quotient of the damping nonlinearity:
/// `(|u|^{2a} u - |v|^{2a} v) . (u - v) / (|u-v|^2 (|u|+|v|)^{2a})`.
/// Returns `+infinity` when `u = v` (zero denominator). The infimum of this
/// quotient over vector pairs is the empirical monotonicity constant.
pub fn bf_monotonicity_gap<T: Scalar>(u: [T; 3], v: [T; 3], alpha: T) -> T {
    let fu = bf_pointwise(u, alpha);
    let fv = bf_pointwise(v, alpha);
    let diff = [u[0] - v[0], u[1] - v[1], u[2] - v[2]];
    let diff_sq = diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2];
    let norm_u = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let norm_v = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let two = real::<T>(2.0);
    let den = diff_sq * (norm_u + norm_v).powf(two * alpha);
    if den == T::zero() {
        return T::infinity();
    }
    let num = (fu[0] - fv[0]) * diff[0] + (fu[1] - fv[1]) * diff[1] + (fu[2] - fv[2]) * diff[2];
    num / den
}

/// Lipschitz quotient of the damping nonlinearity:
/// `| |u|^{2a} u - |v|^{2a} v | / (|u-v| (|u|^{2a} + |v|^{2a}))`.
/// `None` when the denominator vanishes.
pub fn bf_lipschitz_ratio<T: Scalar>(u: [T; 3], v: [T; 3], alpha: T) -> Option<T> {
    let fu = bf_pointwise(u, alpha);
    let fv = bf_pointwise(v, alpha);
    let diff = [u[0] - v[0], u[1] - v[1], u[2] - v[2]];
    let diff_norm = (diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2]).sqrt();
    let sq_u = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
    let sq_v = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let den = diff_norm * (sq_u.powf(alpha) + sq_v.powf(alpha));
    if den == T::zero() {
        return None;
    }
    let num = ((fu[0] - fv[0]) * (fu[0] - fv[0])
        + (fu[1] - fv[1]) * (fu[1] - fv[1])
        + (fu[2] - fv[2]) * (fu[2] - fv[2]))
        .sqrt();
    Some(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::RawSpectral;
    use crate::grid::TorusGrid;
    use crate::oracle;
    use crate::testutil::{rng_for, standard_normal};
    use rand::Rng;

    fn random_field(grid: &TorusGrid<f64>, seed: u64) -> SpectralField<f64> {
        let mut rng = rng_for(seed, &[7, 7, 7]);
        RawSpectral::from_modes(grid.clone(), |k| {
            let decay = 1.0 / (1.0 + (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64);
            let mut c = [Complex::new(0.0, 0.0); 3];
            for v in c.iter_mut() {
                *v = Complex::new(standard_normal(&mut rng), standard_normal(&mut rng)) * decay;
            }
            c
        })
        .leray_project()
    }

    #[test]
    fn trilinear_vanishes_on_repeated_last_argument() {
        let grid = TorusGrid::<f64>::two_pi(8).unwrap();
        for seed in 0..5 {
            let u = random_field(&grid, seed);
            let v = random_field(&grid, 50 + seed);
            let b = trilinear_b(&u, &v, &v);
            let scale = u.l2_norm() * v.l2_norm() * v.grad_l2_norm() + 1e-30;
            assert!(b.abs() / scale <= 1e-10, "b(u,v,v)/scale = {}", b / scale);
        }
    }

    #[test]
    fn trilinear_vanishes_when_middle_is_constant() {
        let grid = TorusGrid::<f64>::two_pi(8).unwrap();
        let constant = SpectralField::from_modes_projected(grid.clone(), |k| {
            if k == [0, 0, 0] {
                [
                    Complex::new(0.3, 0.0),
                    Complex::new(0.9, 0.0),
                    Complex::new(-0.4, 0.0),
                ]
            } else {
                [Complex::new(0.0, 0.0); 3]
            }
        });
        let u = random_field(&grid, 1);
        let w = random_field(&grid, 2);
        assert!(trilinear_b(&u, &constant, &w).abs() < 1e-12);
    }

    #[test]
    fn trilinear_matches_hand_quadrature() {
        // u1 constant, u2 = (0, cos x1, 0), u3 = (0, sin x1, 0):
        // b = -c1 * L^3 / 2.
        let grid = TorusGrid::<f64>::two_pi(8).unwrap();
        let c1 = 0.37;
        let u1 = SpectralField::from_modes_projected(grid.clone(), |k| {
            if k == [0, 0, 0] {
                [
                    Complex::new(c1, 0.0),
                    Complex::new(-0.8, 0.0),
                    Complex::new(0.15, 0.0),
                ]
            } else {
                [Complex::new(0.0, 0.0); 3]
            }
        });
        let u2 = crate::field::PhysicalField::from_fn(grid.clone(), |x| [0.0, x[0].cos(), 0.0])
            .to_spectral_projected();
        let u3 = crate::field::PhysicalField::from_fn(grid.clone(), |x| [0.0, x[0].sin(), 0.0])
            .to_spectral_projected();

        // Independent direct quadrature on a plain grid with analytic
        // derivative of u2.
        let g = 16usize;
        let length = grid.length();
        let dx = length / g as f64;
        let mut quad = 0.0;
        for i in 0..g {
            for _j in 0..g {
                for _l in 0..g {
                    let x1 = dx * i as f64;
                    let conv_2 = c1 * (-x1.sin()); // u1 . grad of u2's component 2
                    quad += conv_2 * x1.sin();
                }
            }
        }
        quad *= dx * dx * dx;
        let expect = -c1 * length.powi(3) / 2.0;
        assert!((quad - expect).abs() < 1e-10 * expect.abs());

        let b = trilinear_b(&u1, &u2, &u3);
        assert!((b - quad).abs() <= 1e-12 * (1.0 + quad.abs()), "{b} vs {quad}");
    }

    #[test]
    fn trilinear_antisymmetry_in_last_two_arguments() {
        let grid = TorusGrid::<f64>::two_pi(8).unwrap();
        for seed in 0..5 {
            let u = random_field(&grid, 200 + seed);
            let v = random_field(&grid, 300 + seed);
            let w = random_field(&grid, 400 + seed);
            let b1 = trilinear_b(&u, &v, &w);
            let b2 = trilinear_b(&u, &w, &v);
            let scale = b1.abs().max(b2.abs()).max(1e-30);
            assert!((b1 + b2).abs() / scale <= 1e-10);
        }
    }

    #[test]
    fn bilinear_vanishes_on_constant_argument() {
        let grid = TorusGrid::<f64>::two_pi(8).unwrap();
        let constant = SpectralField::from_modes_projected(grid.clone(), |k| {
            if k == [0, 0, 0] {
                [Complex::new(1.0, 0.0); 3]
            } else {
                [Complex::new(0.0, 0.0); 3]
            }
        });
        let u = random_field(&grid, 6);
        assert!(bilinear_b(&u, &constant).l2_norm() < 1e-13);
    }

    #[test]
    fn bilinear_matches_dense_convolution_oracle() {
        let grid = TorusGrid::<f64>::two_pi(8).unwrap();
        for seed in 0..3 {
            let u = random_field(&grid, 500 + seed);
            let v = random_field(&grid, 600 + seed);
            let fast = bilinear_b(&u, &v);
            let slow = oracle::bilinear_convection(&u, &v);
            let diff = (&fast - &slow).l2_norm();
            assert!(diff <= 1e-11 * (1.0 + slow.l2_norm()));
        }
    }

    #[test]
    fn bilinear_output_is_divergence_free_and_orthogonal_to_v() {
        let grid = TorusGrid::<f64>::two_pi(8).unwrap();
        let u = random_field(&grid, 8);
        let v = random_field(&grid, 9);
        let b = bilinear_b(&u, &v);
        assert!(b.divergence_rel() <= 1e-14);
        let ip = b.h_inner(&v).abs();
        let scale = b.l2_norm() * v.l2_norm() + 1e-30;
        assert!(ip / scale <= 1e-10);
    }

    #[test]
    fn bf_term_on_zero_and_constant_fields() {
        let grid = TorusGrid::<f64>::two_pi(8).unwrap();
        let params = BfParams::new(2.0, 1.0).unwrap();
        let zero = SpectralField::zeros(grid.clone());
        assert_eq!(bf_term(&zero, &params).l2_norm(), 0.0);

        let c = [0.4, -0.3, 0.5];
        let constant = SpectralField::from_modes_projected(grid, |k| {
            if k == [0, 0, 0] {
                [
                    Complex::new(c[0], 0.0),
                    Complex::new(c[1], 0.0),
                    Complex::new(c[2], 0.0),
                ]
            } else {
                [Complex::new(0.0, 0.0); 3]
            }
        });
        let out = bf_term(&constant, &params);
        let csq = c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
        let mean = out.mean_coeff();
        for comp in 0..3 {
            let expect = params.a() * csq * c[comp];
            assert!((mean[comp].re - expect).abs() < 1e-12);
            assert!(mean[comp].im.abs() < 1e-14);
        }
    }

    #[test]
    fn bf_term_matches_cubic_convolution_oracle() {
        let grid = TorusGrid::<f64>::two_pi(8).unwrap();
        let params = BfParams::new(1.0, 1.0).unwrap();
        for seed in 0..3 {
            let u = random_field(&grid, 700 + seed);
            let fast = bf_term(&u, &params);
            let slow = oracle::bf_cubic(&u, params.a());
            let diff = (&fast - &slow).l2_norm();
            assert!(diff <= 1e-9 * (1.0 + slow.l2_norm()));
        }
    }

    #[test]
    fn bf_energy_pairing_matches_lebesgue_norm() {
        let grid = TorusGrid::<f64>::two_pi(8).unwrap();
        for (seed, alpha) in [(1u64, 1.0), (2, 1.25), (3, 1.5)] {
            let params = BfParams::new(0.7, alpha).unwrap();
            let u = random_field(&grid, 800 + seed);
            let (field, energy) = damping_with_energy(&u, &params);
            let pairing = field.h_inner(&u);
            assert!(
                (pairing - energy).abs() <= 1e-11 * (1.0 + energy.abs()),
                "pairing {pairing} vs energy {energy}"
            );
            let p = 2.0 * alpha + 2.0;
            let report = u.norms(&[p]);
            let from_norm = params.a() * report.lp(p).unwrap().powf(p);
            assert!((energy - from_norm).abs() <= 1e-10 * (1.0 + from_norm.abs()));
        }
    }

    #[test]
    fn monotonicity_gap_analytic_values() {
        // v = 0: numerator |u|^{2a+2}, denominator |u|^{2a+2}.
        let u = [0.3_f64, -0.4, 0.5];
        for alpha in [1.0, 1.25, 1.5] {
            let r: f64 = bf_monotonicity_gap(u, [0.0; 3], alpha);
            assert!((r - 1.0).abs() < 1e-12);
        }
        // u = -v, alpha = 1: (2|u|^3 * 2|u|) / (4|u|^2 * 4|u|^2) = 1/4.
        let v = [-0.3_f64, 0.4, -0.5];
        let r: f64 = bf_monotonicity_gap(u, v, 1.0);
        assert!((r - 0.25).abs() < 1e-12);
        // u = v: sentinel.
        let sentinel: f64 = bf_monotonicity_gap(u, u, 1.0);
        assert!(sentinel.is_infinite());
    }

    #[test]
    fn sampled_monotonicity_and_lipschitz_constants_behave() {
        let mut rng = rng_for(42, &[1, 1, 1]);
        for &alpha in &[1.0, 1.25, 1.5] {
            let mut kappa_hat = f64::INFINITY;
            let mut c_hat: f64 = 0.0;
            for _ in 0..10_000 {
                let mut vec = || {
                    let dir = [
                        standard_normal(&mut rng),
                        standard_normal(&mut rng),
                        standard_normal(&mut rng),
                    ];
                    let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
                    let radius: f64 = rng.gen();
                    [
                        dir[0] / norm * radius,
                        dir[1] / norm * radius,
                        dir[2] / norm * radius,
                    ]
                };
                let u = vec();
                let v = vec();
                let gap = bf_monotonicity_gap(u, v, alpha);
                if gap.is_finite() {
                    kappa_hat = kappa_hat.min(gap);
                }
                if let Some(ratio) = bf_lipschitz_ratio(u, v, alpha) {
                    c_hat = c_hat.max(ratio);
                }
            }
            assert!(kappa_hat > 0.0, "monotonicity constant must be positive");
            assert!(c_hat.is_finite() && c_hat >= 1.0);
            // Scale invariance: the quotients are 0-homogeneous.
            let u = [0.11, -0.2, 0.07];
            let v = [-0.03, 0.18, 0.4];
            let g1 = bf_monotonicity_gap(u, v, alpha);
            for c in [2.0, 10.0] {
                let us = [u[0] * c, u[1] * c, u[2] * c];
                let vs = [v[0] * c, v[1] * c, v[2] * c];
                let g2 = bf_monotonicity_gap(us, vs, alpha);
                assert!((g1 - g2).abs() <= 1e-10 * g1.abs());
            }
        }
    }

    #[test]
    fn params_validation() {
        assert!(BfParams::new(0.0, 1.0).is_err());
        assert!(BfParams::new(1.0, 0.9).is_err());
        assert!(BfParams::new(1.0, 1.6).is_err());
        assert!(BfParams::new(1.0, 1.5).is_ok());
    }
}

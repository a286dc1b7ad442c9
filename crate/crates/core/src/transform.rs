//! In-place 3D FFTs built from 1D plans, applied axis by axis.

use ndarray::{Array3, Axis};
use num_complex::Complex;
use rustfft::Fft;

use crate::scalar::Scalar;

/// Applies the 1D transform along every axis of the cube. The plan length
/// must match the cube side.
pub(crate) fn fft3_inplace<T: Scalar>(data: &mut Array3<Complex<T>>, fft: &dyn Fft<T>) {
    let n = fft.len();
    debug_assert_eq!(data.shape(), [n, n, n]);
    let mut lane = vec![Complex::new(T::zero(), T::zero()); n];
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
    for axis in [Axis(0), Axis(1), Axis(2)] {
        for mut l in data.lanes_mut(axis) {
            for (dst, src) in lane.iter_mut().zip(l.iter()) {
                *dst = *src;
            }
            fft.process_with_scratch(&mut lane, &mut scratch);
            for (src, dst) in lane.iter().zip(l.iter_mut()) {
                *dst = *src;
            }
        }
    }
}

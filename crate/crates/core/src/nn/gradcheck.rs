//! Central finite differences for gradient verification.

use crate::scalar::Scalar;

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn finite_difference<T: Scalar>(x: &[T], h: T, mut f: impl FnMut(&[T]) -> T) -> Vec<T> {
    let mut probe = x.to_vec();
    let two_h = h + h;
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / two_h
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn relative_error<T: Scalar>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len());
    let diff = crate::scalar::euclidean(a, b);
    let scale = crate::scalar::norm(a).max(crate::scalar::norm(b));
    if scale == T::zero() {
        T::zero()
    } else {
        diff / scale
    }
}

//! Scalar abstraction shared by every numeric kernel.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rayon::prelude::*;

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// An absolute tolerance that never drops below a few ulps of `T`.
#[inline]
pub fn tol<T: Real>(x: f64) -> T {
    lit::<T>(x).max(T::epsilon() * lit(64.0))
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

const CHUNK: usize = 4096;

/// Sum of `f(0) + ... + f(len - 1)` with a reduction order that depends only
/// on `len`: fixed-size chunks are summed sequentially (in parallel across
/// chunks) and the partials are combined pairwise. Results are bitwise
/// reproducible for any thread count.
pub fn fixed_sum<T, F>(len: usize, f: F) -> T
where
    T: Real,
    F: Fn(usize) -> T + Sync + Send,
{
    let chunks = len.div_ceil(CHUNK);
    let partials: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let hi = ((c + 1) * CHUNK).min(len);
            let mut acc = T::zero();
            for i in c * CHUNK..hi {
                acc += f(i);
            }
            acc
        })
        .collect();
    pairwise(&partials)
}

/// Maximum of `f(i)`; `-inf` for an empty range.
pub fn fixed_max<T, F>(len: usize, f: F) -> T
where
    T: Real,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..len)
        .into_par_iter()
        .map(f)
        .reduce(T::neg_infinity, |a, b| if b > a { b } else { a })
}

fn pairwise<T: Real>(xs: &[T]) -> T {
    match xs.len() {
        0 => T::zero(),
        1 => xs[0],
        n => pairwise(&xs[..n / 2]) + pairwise(&xs[n / 2..]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_sum_is_thread_count_independent() {
        let f = |i: usize| ((i as f64) * 0.37).sin() * 1e-3 + 1.0 / (1.0 + i as f64);
        let n = 100_003;
        let a = fixed_sum(n, f);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = one.install(|| fixed_sum(n, f));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn tolerance_floor_tracks_precision() {
        assert_eq!(tol::<f64>(1e-12), 1e-12);
        assert!(tol::<f32>(1e-12) > 1e-6);
    }

    #[test]
    fn fixed_max_handles_empty() {
        assert_eq!(fixed_max::<f64, _>(0, |_| 1.0), f64::NEG_INFINITY);
        assert_eq!(fixed_max(5, |i| i as f64), 4.0);
    }
}

//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real floating-point scalar (`f32` or `f64`).
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Converts a count into `Self`.
    #[inline]
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

const PAIRWISE_BLOCK: usize = 32;

/// Pairwise summation of `f(0) + ... + f(len - 1)`.
///
/// The split points depend only on `len`, so the result is bit-reproducible
/// regardless of how callers schedule work.
pub fn pairwise_sum_by<T: Real>(len: usize, f: &impl Fn(usize) -> T) -> T {
    fn rec<T: Real>(lo: usize, hi: usize, f: &impl Fn(usize) -> T) -> T {
        if hi - lo <= PAIRWISE_BLOCK {
            let mut acc = T::zero();
            for i in lo..hi {
                acc = acc + f(i);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, len, f)
}

pub fn pairwise_sum<T: Real>(xs: &[T]) -> T {
    pairwise_sum_by(xs.len(), &|i| xs[i])
}

/// `<v> = (1/m) sum_i v_i`.
pub fn mean<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    pairwise_sum(xs) / T::count(xs.len())
}

/// Normalised scalar product `<u, v> = (1/m) sum_i u_i v_i`.
pub fn inner<T: Real>(u: &[T], v: &[T]) -> T {
    debug_assert_eq!(u.len(), v.len());
    if u.is_empty() {
        return T::zero();
    }
    pairwise_sum_by(u.len(), &|i| u[i] * v[i]) / T::count(u.len())
}

/// Sample mean and standard error (sample std / sqrt(R)); the error is zero
/// for fewer than two samples.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let r = xs.len();
    if r == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = mean(xs);
    if r < 2 {
        return (m, 0.0);
    }
    let ss = pairwise_sum_by(r, &|i| (xs[i] - m) * (xs[i] - m));
    let sd = (ss / (r - 1) as f64).sqrt();
    (m, sd / (r as f64).sqrt())
}

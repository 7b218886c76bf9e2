//! Compensated summation primitives.
//!
//! Box sums extracted from a summed-area table subtract cumulative values
//! that can be many orders of magnitude larger than the box sum itself, so
//! the table is built and queried in double-width (two-float) arithmetic.
//! Plain reductions use Neumaier's variant of Kahan summation.

use crate::Real;

/// Error-free transform: `a + b = hi + lo` exactly, with `hi = fl(a + b)`.
#[inline]
fn two_sum<F: Real>(a: F, b: F) -> (F, F) {
    let hi = a + b;
    let v = hi - a;
    let lo = (a - (hi - v)) + (b - v);
    (hi, lo)
}

/// Unevaluated sum of two floats, `hi + lo`, with `|lo| <= ulp(hi)/2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TwoFloat<F> {
    pub hi: F,
    pub lo: F,
}

impl<F: Real> TwoFloat<F> {
    pub fn zero() -> Self {
        TwoFloat {
            hi: F::zero(),
            lo: F::zero(),
        }
    }

    pub fn from_single(x: F) -> Self {
        TwoFloat { hi: x, lo: F::zero() }
    }

    #[inline]
    pub fn add(self, other: Self) -> Self {
        let (s, e) = two_sum(self.hi, other.hi);
        let e = e + self.lo + other.lo;
        let (hi, lo) = two_sum(s, e);
        TwoFloat { hi, lo }
    }

    #[inline]
    pub fn add_single(self, x: F) -> Self {
        let (s, e) = two_sum(self.hi, x);
        let e = e + self.lo;
        let (hi, lo) = two_sum(s, e);
        TwoFloat { hi, lo }
    }

    #[inline]
    pub fn neg(self) -> Self {
        TwoFloat {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    #[inline]
    pub fn value(self) -> F {
        self.hi + self.lo
    }
}

/// Neumaier (improved Kahan) running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum<F> {
    sum: F,
    comp: F,
}

impl<F: Real> NeumaierSum<F> {
    pub fn new() -> Self {
        NeumaierSum {
            sum: F::zero(),
            comp: F::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: F) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> F {
        self.sum + self.comp
    }
}

/// Compensated sum of an iterator.
pub fn sum_compensated<F: Real, I: IntoIterator<Item = F>>(iter: I) -> F {
    let mut acc = NeumaierSum::new();
    for x in iter {
        acc.add(x);
    }
    acc.value()
}

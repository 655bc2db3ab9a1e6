//! Exact rational scalars.
//!
//! Every quantity in the localization sum is a `BigRational`; nothing in the
//! pipeline ever rounds.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Rat = BigRational;

pub fn rat(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn rat_frac(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

/// `base^exp` for a possibly negative exponent. Returns `None` when the base
/// is zero and the exponent negative (the caller maps this to
/// `DegenerateWeights` or a structural zero as appropriate).
pub fn ipow(base: &Rat, exp: i64) -> Option<Rat> {
    if exp == 0 {
        return Some(Rat::one());
    }
    if base.is_zero() {
        return if exp > 0 { Some(Rat::zero()) } else { None };
    }
    let e = i32::try_from(exp).expect("exponent out of range");
    Some(base.pow(e))
}

/// Exact factorial as a rational.
pub fn factorial(n: usize) -> Rat {
    let mut acc = BigInt::one();
    for k in 2..=n {
        acc *= BigInt::from(k);
    }
    Rat::from_integer(acc)
}

/// Renders `p/q` with a reduced fraction and positive denominator, e.g.
/// `-120/1` or `3/2`.
pub fn format_ratio(v: &Rat) -> String {
    let (mut num, mut den) = (v.numer().clone(), v.denom().clone());
    if den.is_negative() {
        num = -num;
        den = -den;
    }
    format!("{num}/{den}")
}

//! Exact rational numbers and their textual form.
//!
//! [`Rational`] is an arbitrary-precision ratio kept in lowest terms with a
//! positive denominator. The canonical text form is always `num/den`, even for
//! integers, so that instance files and machine reports are unambiguous.

use alloc::format;
use alloc::string::{String, ToString};
use core::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::{Error, Result};

pub type Rational = num_rational::BigRational;

/// `num/den` with both parts always present.
pub fn format_rational(x: &Rational) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

/// Parses `a/b`, a plain integer, or a finite decimal such as `0.25` into an
/// exact rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let err = || Error::ParseRational(s.to_string());
    let s = s.trim();
    if s.is_empty() {
        return Err(err());
    }
    if let Some((num, den)) = s.split_once('/') {
        let num = BigInt::from_str(num.trim()).map_err(|_| err())?;
        let den = BigInt::from_str(den.trim()).map_err(|_| err())?;
        if den.is_zero() {
            return Err(err());
        }
        return Ok(Rational::new(num, den));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let negative = int.starts_with('-');
        let int_part = if int.is_empty() || int == "-" || int == "+" {
            BigInt::zero()
        } else {
            BigInt::from_str(int).map_err(|_| err())?
        };
        let scale = num_traits::pow(BigInt::from(10u32), frac.len());
        let frac_part = BigInt::from_str(frac).map_err(|_| err())?;
        let mut value = Rational::new(int_part.abs() * &scale + frac_part, scale);
        if negative {
            value = -value;
        }
        return Ok(value);
    }
    BigInt::from_str(s).map(Rational::from_integer).map_err(|_| err())
}

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn is_probability(x: &Rational) -> bool {
    !x.is_negative() && *x <= Rational::one()
}

/// Lossy conversion for sampling and display only.
pub fn to_f64(x: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    x.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_all_forms() {
        assert_eq!(parse_rational("3/4").unwrap(), ratio(3, 4));
        assert_eq!(parse_rational("6/8").unwrap(), ratio(3, 4));
        assert_eq!(parse_rational("-2/4").unwrap(), ratio(-1, 2));
        assert_eq!(parse_rational("7").unwrap(), int(7));
        assert_eq!(parse_rational("0.25").unwrap(), ratio(1, 4));
        assert_eq!(parse_rational("1.9").unwrap(), ratio(19, 10));
        assert_eq!(parse_rational("-0.5").unwrap(), ratio(-1, 2));
        assert_eq!(parse_rational(".5").unwrap(), ratio(1, 2));
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "1/0", "a/b", "1.", "1.2.3", "1/2/3", "0.x"] {
            assert!(parse_rational(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn canonical_form_keeps_denominator() {
        assert_eq!(format_rational(&int(9)), "9/1");
        assert_eq!(format_rational(&ratio(-6, 4)), "-3/2");
    }

    proptest! {
        #[test]
        fn format_parse_round_trip(n in any::<i64>(), d in 1i64..i64::MAX) {
            let x = ratio(n, d);
            prop_assert_eq!(parse_rational(&format_rational(&x)).unwrap(), x);
        }
    }
}

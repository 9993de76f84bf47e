//! Exact scalars for the Fock-space calculus: Gaussian rationals `re + im*i`
//! with arbitrary-precision rational components and `i^2 = -1`.
//!
//! Every coefficient in the engine lives here.  The imaginary unit enters
//! through the symmetric-product side of the theory, where classes carry
//! weights `i^age`; all other arithmetic stays rational.  Canonical text
//! forms:
//!
//! * file form: `p/q` with `q > 0` and `gcd(p, q) = 1`, always with the slash;
//! * display form: `p/q` or `p/q+r/s*i` (the `+` becomes `-` for negative
//!   imaginary part, and a purely imaginary value prints as `r/s*i`).

use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::{One, Signed, Zero};
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

pub type Rational = BigRational;

/// Parse a rational from `p/q` or bare-integer `p` form.
pub fn parse_rational(text: &str) -> Result<Rational, ScalarParseError> {
    let trimmed = text.trim();
    Rational::from_str(trimmed).map_err(|_| ScalarParseError {
        input: text.to_string(),
    })
}

/// Canonical file form `p/q`: reduced, `q > 0`, slash always present.
pub fn rational_file_string(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Compact human form: omits the denominator when it is 1.
pub fn rational_compact_string(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed scalar literal: {input:?}")]
pub struct ScalarParseError {
    pub input: String,
}

/// A Gaussian rational `re + im*i`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scalar {
    pub re: Rational,
    pub im: Rational,
}

impl Scalar {
    pub fn new(re: Rational, im: Rational) -> Self {
        Scalar { re, im }
    }

    pub fn zero() -> Self {
        Scalar::new(Rational::zero(), Rational::zero())
    }

    pub fn one() -> Self {
        Scalar::new(Rational::one(), Rational::zero())
    }

    /// The imaginary unit.
    pub fn i() -> Self {
        Scalar::new(Rational::zero(), Rational::one())
    }

    pub fn from_int(n: i64) -> Self {
        Scalar::new(Rational::from_integer(BigInt::from(n)), Rational::zero())
    }

    /// `p/q` as a real scalar; panics if `q == 0`.
    pub fn from_ratio(p: i64, q: i64) -> Self {
        assert!(q != 0, "zero denominator");
        Scalar::new(
            Rational::new(BigInt::from(p), BigInt::from(q)),
            Rational::zero(),
        )
    }

    pub fn from_rational(r: Rational) -> Self {
        Scalar::new(r, Rational::zero())
    }

    /// `i^e` for any integer exponent (negative exponents use `i^-1 = -i`).
    pub fn i_pow(e: i64) -> Self {
        match e.rem_euclid(4) {
            0 => Scalar::one(),
            1 => Scalar::i(),
            2 => -Scalar::one(),
            _ => -Scalar::i(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn is_real(&self) -> bool {
        self.im.is_zero()
    }

    /// Real part as a rational; `None` when the value is not purely real.
    pub fn as_rational(&self) -> Option<&Rational> {
        if self.im.is_zero() {
            Some(&self.re)
        } else {
            None
        }
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inverse(&self) -> Option<Scalar> {
        let norm = &self.re * &self.re + &self.im * &self.im;
        if norm.is_zero() {
            return None;
        }
        Some(Scalar::new(&self.re / &norm, -(&self.im / &norm)))
    }

    /// Canonical display form (see module docs).  Stable across runs.
    pub fn file_string(&self) -> String {
        if self.im.is_zero() {
            rational_file_string(&self.re)
        } else if self.re.is_zero() {
            format!("{}*i", rational_file_string(&self.im))
        } else if self.im.is_negative() {
            format!(
                "{}-{}*i",
                rational_file_string(&self.re),
                rational_file_string(&(-&self.im))
            )
        } else {
            format!(
                "{}+{}*i",
                rational_file_string(&self.re),
                rational_file_string(&self.im)
            )
        }
    }

    /// Shorter human form: integer denominators are dropped.
    pub fn compact_string(&self) -> String {
        if self.im.is_zero() {
            rational_compact_string(&self.re)
        } else if self.re.is_zero() {
            format!("{}*i", rational_compact_string(&self.im))
        } else if self.im.is_negative() {
            format!(
                "{}-{}*i",
                rational_compact_string(&self.re),
                rational_compact_string(&(-&self.im))
            )
        } else {
            format!(
                "{}+{}*i",
                rational_compact_string(&self.re),
                rational_compact_string(&self.im)
            )
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.file_string())
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({})", self.file_string())
    }
}

impl FromStr for Scalar {
    type Err = ScalarParseError;

    /// Accepts `p/q`, `p`, `p/q+r/s*i`, `p/q-r/s*i`, `r/s*i`, `i`, `-i`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let text = s.trim();
        if text.is_empty() {
            return Err(ScalarParseError {
                input: s.to_string(),
            });
        }
        // Split into at most two signed terms at top-level +/- boundaries
        // (a sign directly after the start or after another sign binds to
        // its term instead of splitting).
        let bytes = text.as_bytes();
        let mut split_at = None;
        for (idx, &b) in bytes.iter().enumerate().skip(1) {
            if b == b'+' || b == b'-' {
                let prev = bytes[idx - 1];
                if prev != b'+' && prev != b'-' && prev != b'/' && prev != b'*' {
                    split_at = Some(idx);
                }
            }
        }
        let (first, second) = match split_at {
            Some(idx) => (&text[..idx], Some(&text[idx..])),
            None => (text, None),
        };
        let mut out = parse_term(first, s)?;
        if let Some(rest) = second {
            out += parse_term(rest, s)?;
        }
        Ok(out)
    }
}

fn parse_term(term: &str, whole: &str) -> Result<Scalar, ScalarParseError> {
    let err = || ScalarParseError {
        input: whole.to_string(),
    };
    let t = term.trim();
    if t.is_empty() {
        return Err(err());
    }
    let (sign, body) = match t.strip_prefix('-') {
        Some(rest) => (-1i64, rest.trim()),
        None => (1i64, t.strip_prefix('+').unwrap_or(t).trim()),
    };
    if body == "i" {
        let unit = Scalar::i();
        return Ok(if sign < 0 { -unit } else { unit });
    }
    let (is_imag, numeric) = if let Some(head) = body.strip_suffix("*i") {
        (true, head.trim())
    } else if let Some(head) = body.strip_suffix('i') {
        (true, head.trim())
    } else {
        (false, body)
    };
    let mut r = parse_rational(numeric).map_err(|_| err())?;
    if sign < 0 {
        r = -r;
    }
    Ok(if is_imag {
        Scalar::new(Rational::zero(), r)
    } else {
        Scalar::from_rational(r)
    })
}

impl Add for Scalar {
    type Output = Scalar;
    fn add(self, rhs: Scalar) -> Scalar {
        Scalar::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl<'a> Add<&'a Scalar> for Scalar {
    type Output = Scalar;
    fn add(self, rhs: &'a Scalar) -> Scalar {
        Scalar::new(self.re + &rhs.re, self.im + &rhs.im)
    }
}

impl AddAssign for Scalar {
    fn add_assign(&mut self, rhs: Scalar) {
        self.re += rhs.re;
        self.im += rhs.im;
    }
}

impl<'a> AddAssign<&'a Scalar> for Scalar {
    fn add_assign(&mut self, rhs: &'a Scalar) {
        self.re += &rhs.re;
        self.im += &rhs.im;
    }
}

impl Sub for Scalar {
    type Output = Scalar;
    fn sub(self, rhs: Scalar) -> Scalar {
        Scalar::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl SubAssign for Scalar {
    fn sub_assign(&mut self, rhs: Scalar) {
        self.re -= rhs.re;
        self.im -= rhs.im;
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar::new(-self.re, -self.im)
    }
}

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar::new(-&self.re, -&self.im)
    }
}

impl Mul for Scalar {
    type Output = Scalar;
    fn mul(self, rhs: Scalar) -> Scalar {
        (&self).mul(&rhs)
    }
}

impl Mul<&Scalar> for &Scalar {
    type Output = Scalar;
    fn mul(self, rhs: &Scalar) -> Scalar {
        Scalar::new(
            &self.re * &rhs.re - &self.im * &rhs.im,
            &self.re * &rhs.im + &self.im * &rhs.re,
        )
    }
}

impl<'a> Mul<&'a Scalar> for Scalar {
    type Output = Scalar;
    fn mul(self, rhs: &'a Scalar) -> Scalar {
        (&self).mul(rhs)
    }
}

impl MulAssign<&Scalar> for Scalar {
    fn mul_assign(&mut self, rhs: &Scalar) {
        *self = (&*self).mul(rhs);
    }
}

impl Div for Scalar {
    type Output = Scalar;
    fn div(self, rhs: Scalar) -> Scalar {
        let inv = rhs.inverse().expect("division by zero scalar");
        (&self).mul(&inv)
    }
}

impl Div<&Scalar> for &Scalar {
    type Output = Scalar;
    fn div(self, rhs: &Scalar) -> Scalar {
        let inv = rhs.inverse().expect("division by zero scalar");
        self.mul(&inv)
    }
}

//! Exact scalars: arbitrary-precision rationals and prime fields.
//!
//! Every computation in this crate runs over a single session field, chosen
//! at construction time and carried by every complex and matrix. Mixing
//! fields is an error caught at the API boundaries; see [`FieldSpec`].

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};

use crate::error::{Error, Result};

/// The coefficient field of a session: the rationals, or Z/p for a prime p.
///
/// The rationals are the default; Sigma-coinvariants via averaging need
/// characteristic zero, so prime fields are provided with that caveat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FieldSpec {
    Rationals,
    Prime(u64),
}

impl FieldSpec {
    pub fn prime(p: u64) -> Result<Self> {
        if is_prime(p) {
            Ok(FieldSpec::Prime(p))
        } else {
            Err(Error::Config(format!("{p} is not prime")))
        }
    }

    pub fn zero(&self) -> Scalar {
        match self {
            FieldSpec::Rationals => Scalar::Rat(BigRational::zero()),
            FieldSpec::Prime(p) => Scalar::Mod(0, *p),
        }
    }

    pub fn one(&self) -> Scalar {
        self.from_i64(1)
    }

    pub fn from_i64(&self, n: i64) -> Scalar {
        match self {
            FieldSpec::Rationals => Scalar::Rat(BigRational::from(BigInt::from(n))),
            FieldSpec::Prime(p) => {
                let r = n.rem_euclid(*p as i64) as u64;
                Scalar::Mod(r, *p)
            }
        }
    }

    /// Inverse of n! in the session field; fails in characteristic p <= n.
    pub fn inv_factorial(&self, n: usize) -> Result<Scalar> {
        let mut acc = self.one();
        for k in 1..=n as i64 {
            let f = self.from_i64(k);
            if f.is_zero() {
                return Err(Error::Config(format!(
                    "factorial {n}! is not invertible in characteristic {}",
                    match self {
                        FieldSpec::Prime(p) => *p,
                        FieldSpec::Rationals => 0,
                    }
                )));
            }
            acc = &acc * &f;
        }
        acc.inv()
    }

    pub fn parse_scalar(&self, s: &str) -> Result<Scalar> {
        let bad = |m: &str| Error::Parse {
            at: s.to_string(),
            msg: m.to_string(),
        };
        match self {
            FieldSpec::Rationals => {
                let (num, den) = match s.split_once('/') {
                    Some((a, b)) => (a, b),
                    None => (s, "1"),
                };
                let n: BigInt = num.trim().parse().map_err(|_| bad("bad numerator"))?;
                let d: BigInt = den.trim().parse().map_err(|_| bad("bad denominator"))?;
                if d.is_zero() {
                    return Err(bad("zero denominator"));
                }
                Ok(Scalar::Rat(BigRational::new(n, d)))
            }
            FieldSpec::Prime(p) => {
                let n: i64 = s.trim().parse().map_err(|_| bad("bad residue"))?;
                Ok(self.from_i64(n))
            }
        }
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSpec::Rationals => write!(f, "Q"),
            FieldSpec::Prime(p) => write!(f, "F{p}"),
        }
    }
}

fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// An element of the session field. No floating point anywhere.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Scalar {
    Rat(BigRational),
    Mod(u64, u64),
}

impl Scalar {
    pub fn field(&self) -> FieldSpec {
        match self {
            Scalar::Rat(_) => FieldSpec::Rationals,
            Scalar::Mod(_, p) => FieldSpec::Prime(*p),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Rat(r) => r.is_zero(),
            Scalar::Mod(v, _) => *v == 0,
        }
    }

    pub fn is_one(&self) -> bool {
        match self {
            Scalar::Rat(r) => r.is_one(),
            Scalar::Mod(v, _) => *v == 1,
        }
    }

    pub fn inv(&self) -> Result<Scalar> {
        if self.is_zero() {
            return Err(Error::Config("division by zero".into()));
        }
        Ok(match self {
            Scalar::Rat(r) => Scalar::Rat(r.recip()),
            Scalar::Mod(v, p) => Scalar::Mod(mod_inv(*v, *p), *p),
        })
    }

    /// Absolute size used for pivot selection: digit count of |num|+|den|.
    pub(crate) fn pivot_weight(&self) -> usize {
        match self {
            Scalar::Rat(r) => r.numer().abs().to_string().len() + r.denom().to_string().len(),
            Scalar::Mod(..) => 1,
        }
    }
}

fn mod_inv(v: u64, p: u64) -> u64 {
    // extended Euclid on (v, p), p prime
    let (mut r0, mut r1) = (v as i128, p as i128);
    let (mut s0, mut s1) = (1i128, 0i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
    }
    assert_eq!(r0, 1, "non-invertible residue mod {p}");
    s0.rem_euclid(p as i128) as u64
}

fn check_same(a: &Scalar, b: &Scalar) {
    debug_assert_eq!(a.field(), b.field(), "scalar field mismatch");
}

impl<'a> Add<&'a Scalar> for &Scalar {
    type Output = Scalar;
    fn add(self, rhs: &'a Scalar) -> Scalar {
        check_same(self, rhs);
        match (self, rhs) {
            (Scalar::Rat(a), Scalar::Rat(b)) => Scalar::Rat(a + b),
            (Scalar::Mod(a, p), Scalar::Mod(b, _)) => Scalar::Mod((a + b) % p, *p),
            _ => panic!("scalar field mismatch"),
        }
    }
}

impl<'a> Sub<&'a Scalar> for &Scalar {
    type Output = Scalar;
    fn sub(self, rhs: &'a Scalar) -> Scalar {
        check_same(self, rhs);
        match (self, rhs) {
            (Scalar::Rat(a), Scalar::Rat(b)) => Scalar::Rat(a - b),
            (Scalar::Mod(a, p), Scalar::Mod(b, _)) => Scalar::Mod((a + p - b) % p, *p),
            _ => panic!("scalar field mismatch"),
        }
    }
}

impl<'a> Mul<&'a Scalar> for &Scalar {
    type Output = Scalar;
    fn mul(self, rhs: &'a Scalar) -> Scalar {
        check_same(self, rhs);
        match (self, rhs) {
            (Scalar::Rat(a), Scalar::Rat(b)) => Scalar::Rat(a * b),
            (Scalar::Mod(a, p), Scalar::Mod(b, _)) => {
                Scalar::Mod(((*a as u128 * *b as u128) % *p as u128) as u64, *p)
            }
            _ => panic!("scalar field mismatch"),
        }
    }
}

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        match self {
            Scalar::Rat(a) => Scalar::Rat(-a),
            Scalar::Mod(a, p) => Scalar::Mod((p - a) % p, *p),
        }
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        -&self
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Rat(r) => {
                if r.denom().is_one() {
                    write!(f, "{}", r.numer())
                } else {
                    write!(f, "{}/{}", r.numer(), r.denom())
                }
            }
            Scalar::Mod(v, _) => write!(f, "{v}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_arithmetic_is_exact() {
        let q = FieldSpec::Rationals;
        let third = q.parse_scalar("1/3").unwrap();
        let sum = &(&third + &third) + &third;
        assert!(sum.is_one());
        assert_eq!(third.inv().unwrap(), q.from_i64(3));
    }

    #[test]
    fn prime_field_inverse() {
        let f7 = FieldSpec::prime(7).unwrap();
        let x = f7.from_i64(3);
        let xi = x.inv().unwrap();
        assert!((&x * &xi).is_one());
        assert!(FieldSpec::prime(6).is_err());
    }

    #[test]
    fn scalar_display_roundtrip() {
        let q = FieldSpec::Rationals;
        for s in ["5", "-7/3", "0", "22/7"] {
            let v = q.parse_scalar(s).unwrap();
            assert_eq!(q.parse_scalar(&v.to_string()).unwrap(), v);
        }
    }

    #[test]
    fn inv_factorial_characteristic_guard() {
        assert!(FieldSpec::Rationals.inv_factorial(6).is_ok());
        let f5 = FieldSpec::prime(5).unwrap();
        assert!(f5.inv_factorial(4).is_ok());
        assert!(f5.inv_factorial(5).is_err());
    }
}

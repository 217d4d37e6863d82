//! Scalars that stay exact while every input is rational.
//!
//! [`Real`] is either an exact rational or an `f64`. Arithmetic between two
//! exact values is exact; as soon as a float participates the result is a
//! float. Exact values use an `i64` ratio fast path and fall back to big
//! integers on overflow, so hot loops over small dyadic weights stay cheap.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Rem, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::{BigRational, Ratio};
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, One, Signed, ToPrimitive, Zero};

type Small = Ratio<i64>;

#[derive(Clone, Debug)]
enum Rat {
    Small(Small),
    Big(BigRational),
}

impl Rat {
    fn from_big(value: BigRational) -> Rat {
        match (value.numer().to_i64(), value.denom().to_i64()) {
            (Some(n), Some(d)) if n != i64::MIN && d != i64::MIN => Rat::Small(Ratio::new_raw(n, d)),
            _ => Rat::Big(value),
        }
    }

    fn to_big(&self) -> BigRational {
        match self {
            Rat::Small(r) => BigRational::new_raw(BigInt::from(*r.numer()), BigInt::from(*r.denom())),
            Rat::Big(b) => b.clone(),
        }
    }

    fn to_f64(&self) -> f64 {
        match self {
            Rat::Small(r) => *r.numer() as f64 / *r.denom() as f64,
            Rat::Big(b) => big_to_f64(b),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Rat::Small(r) => r.is_zero(),
            Rat::Big(b) => b.is_zero(),
        }
    }

    fn signum(&self) -> i32 {
        match self {
            Rat::Small(r) => r.numer().signum() as i32,
            Rat::Big(b) => {
                if b.is_zero() {
                    0
                } else if b.is_negative() {
                    -1
                } else {
                    1
                }
            }
        }
    }
}

fn big_to_f64(b: &BigRational) -> f64 {
    match (b.numer().to_f64(), b.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            // Scale both parts down so the quotient survives the conversion.
            let bits = b.numer().bits().max(b.denom().bits()) as i64;
            let shift = (bits - 1000).max(0) as usize;
            let n = (b.numer() >> shift).to_f64().unwrap_or(0.0);
            let d = (b.denom() >> shift).to_f64().unwrap_or(f64::INFINITY);
            n / d
        }
    }
}

macro_rules! rat_binop {
    ($name:ident, $checked:ident, $op:tt) => {
        fn $name(a: &Rat, b: &Rat) -> Rat {
            if let (Rat::Small(x), Rat::Small(y)) = (a, b) {
                if let Some(r) = x.$checked(y) {
                    if *r.numer() != i64::MIN && *r.denom() != i64::MIN {
                        return Rat::Small(r);
                    }
                }
            }
            Rat::from_big(a.to_big() $op b.to_big())
        }
    };
}

rat_binop!(rat_add, checked_add, +);
rat_binop!(rat_sub, checked_sub, -);
rat_binop!(rat_mul, checked_mul, *);
rat_binop!(rat_div, checked_div, /);

/// An exact rational or a floating point real.
#[derive(Clone, Debug)]
pub struct Real(Repr);

#[derive(Clone, Debug)]
enum Repr {
    Exact(Rat),
    Float(f64),
}

impl Real {
    pub fn zero() -> Real {
        Real::int(0)
    }

    pub fn one() -> Real {
        Real::int(1)
    }

    pub fn int(v: i64) -> Real {
        if v == i64::MIN {
            return Real::from_big(BigRational::from_integer(BigInt::from(v)));
        }
        Real(Repr::Exact(Rat::Small(Ratio::from_integer(v))))
    }

    /// Exact `numer / denom`. Panics on a zero denominator.
    pub fn ratio(numer: i64, denom: i64) -> Real {
        assert!(denom != 0, "zero denominator");
        Real::from_big(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    pub fn from_big(value: BigRational) -> Real {
        Real(Repr::Exact(Rat::from_big(value)))
    }

    pub fn float(value: f64) -> Real {
        Real(Repr::Float(value))
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.0, Repr::Exact(_))
    }

    pub fn to_big(&self) -> Option<BigRational> {
        match &self.0 {
            Repr::Exact(r) => Some(r.to_big()),
            Repr::Float(_) => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match &self.0 {
            Repr::Exact(r) => r.to_f64(),
            Repr::Float(f) => *f,
        }
    }

    /// Drops exactness.
    pub fn to_float(&self) -> Real {
        Real::float(self.to_f64())
    }

    pub fn is_zero(&self) -> bool {
        match &self.0 {
            Repr::Exact(r) => r.is_zero(),
            Repr::Float(f) => *f == 0.0,
        }
    }

    pub fn is_negative(&self) -> bool {
        self.signum() < 0
    }

    pub fn signum(&self) -> i32 {
        match &self.0 {
            Repr::Exact(r) => r.signum(),
            Repr::Float(f) => {
                if *f > 0.0 {
                    1
                } else if *f < 0.0 {
                    -1
                } else {
                    0
                }
            }
        }
    }

    pub fn abs(&self) -> Real {
        if self.is_negative() {
            -self
        } else {
            self.clone()
        }
    }

    pub fn square(&self) -> Real {
        self * self
    }

    /// Square root as a float (exact perfect squares are kept exact).
    pub fn sqrt(&self) -> Real {
        if let Some(b) = self.to_big() {
            if !b.is_negative() {
                let (n, d) = (b.numer().sqrt(), b.denom().sqrt());
                if &(&n * &n) == b.numer() && &(&d * &d) == b.denom() {
                    return Real::from_big(BigRational::new(n, d));
                }
            }
        }
        Real::float(self.to_f64().sqrt())
    }

    pub fn floor(&self) -> Real {
        match &self.0 {
            Repr::Exact(r) => Real::from_big(r.to_big().floor()),
            Repr::Float(f) => Real::float(f.floor()),
        }
    }

    /// Fractional part in `[0, 1)`.
    pub fn fract(&self) -> Real {
        let mut f = self - self.floor();
        if let Repr::Float(v) = f.0 {
            if v >= 1.0 {
                f = Real::float(0.0);
            }
        }
        f
    }

    pub fn max(self, other: Real) -> Real {
        if other > self {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: Real) -> Real {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn pow(&self, exp: u32) -> Real {
        let mut acc = Real::one();
        for _ in 0..exp {
            acc = &acc * self;
        }
        acc
    }

    /// `self <= other`, strictly on exact paths and with relative slack
    /// `rel` when either side is a float.
    pub fn le_with_slack(&self, other: &Real, rel: f64) -> bool {
        if self.is_exact() && other.is_exact() {
            return self <= other;
        }
        let (a, b) = (self.to_f64(), other.to_f64());
        a <= b + rel * b.abs().max(a.abs()).max(f64::MIN_POSITIVE)
    }

    /// Equality, exact on exact paths and within `tol` (absolute, scaled by
    /// magnitude when above one) otherwise.
    pub fn approx_eq(&self, other: &Real, tol: f64) -> bool {
        if self.is_exact() && other.is_exact() {
            return self == other;
        }
        let (a, b) = (self.to_f64(), other.to_f64());
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }
}

impl Default for Real {
    fn default() -> Self {
        Real::zero()
    }
}

impl From<i64> for Real {
    fn from(v: i64) -> Self {
        Real::int(v)
    }
}

impl From<f64> for Real {
    fn from(v: f64) -> Self {
        Real::float(v)
    }
}

impl From<BigRational> for Real {
    fn from(v: BigRational) -> Self {
        Real::from_big(v)
    }
}

fn binop(a: &Real, b: &Real, exact: fn(&Rat, &Rat) -> Rat, float: fn(f64, f64) -> f64) -> Real {
    match (&a.0, &b.0) {
        (Repr::Exact(x), Repr::Exact(y)) => Real(Repr::Exact(exact(x, y))),
        _ => Real::float(float(a.to_f64(), b.to_f64())),
    }
}

macro_rules! impl_op {
    ($trait:ident, $method:ident, $exact:ident, $float:expr) => {
        impl $trait<&Real> for &Real {
            type Output = Real;
            fn $method(self, rhs: &Real) -> Real {
                binop(self, rhs, $exact, $float)
            }
        }
        impl $trait<Real> for Real {
            type Output = Real;
            fn $method(self, rhs: Real) -> Real {
                binop(&self, &rhs, $exact, $float)
            }
        }
        impl $trait<&Real> for Real {
            type Output = Real;
            fn $method(self, rhs: &Real) -> Real {
                binop(&self, rhs, $exact, $float)
            }
        }
        impl $trait<Real> for &Real {
            type Output = Real;
            fn $method(self, rhs: Real) -> Real {
                binop(self, &rhs, $exact, $float)
            }
        }
    };
}

impl_op!(Add, add, rat_add, |a, b| a + b);
impl_op!(Sub, sub, rat_sub, |a, b| a - b);
impl_op!(Mul, mul, rat_mul, |a, b| a * b);

fn checked_div(a: &Rat, b: &Rat) -> Rat {
    assert!(!b.is_zero(), "exact division by zero");
    rat_div(a, b)
}

impl_op!(Div, div, checked_div, |a, b| a / b);

fn rat_rem(a: &Rat, b: &Rat) -> Rat {
    let q = rat_div(a, b).to_big().trunc();
    rat_sub(a, &rat_mul(b, &Rat::from_big(q)))
}

impl_op!(Rem, rem, rat_rem, |a, b| a % b);

impl Neg for &Real {
    type Output = Real;
    fn neg(self) -> Real {
        match &self.0 {
            Repr::Exact(Rat::Small(r)) => Real(Repr::Exact(Rat::Small(-r))),
            Repr::Exact(Rat::Big(b)) => Real::from_big(-b),
            Repr::Float(f) => Real::float(-f),
        }
    }
}

impl Neg for Real {
    type Output = Real;
    fn neg(self) -> Real {
        -&self
    }
}

impl AddAssign<&Real> for Real {
    fn add_assign(&mut self, rhs: &Real) {
        *self = &*self + rhs;
    }
}

impl AddAssign<Real> for Real {
    fn add_assign(&mut self, rhs: Real) {
        *self = &*self + &rhs;
    }
}

impl SubAssign<&Real> for Real {
    fn sub_assign(&mut self, rhs: &Real) {
        *self = &*self - rhs;
    }
}

impl MulAssign<&Real> for Real {
    fn mul_assign(&mut self, rhs: &Real) {
        *self = &*self * rhs;
    }
}

impl PartialEq for Real {
    fn eq(&self, other: &Self) -> bool {
        self.partial_cmp(other) == Some(Ordering::Equal)
    }
}

impl PartialOrd for Real {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (&self.0, &other.0) {
            (Repr::Exact(Rat::Small(a)), Repr::Exact(Rat::Small(b))) => a.partial_cmp(b),
            (Repr::Exact(a), Repr::Exact(b)) => a.to_big().partial_cmp(&b.to_big()),
            _ => self.to_f64().partial_cmp(&other.to_f64()),
        }
    }
}

impl std::iter::Sum for Real {
    fn sum<I: Iterator<Item = Real>>(iter: I) -> Real {
        iter.fold(Real::zero(), |acc, x| acc + x)
    }
}

impl<'a> std::iter::Sum<&'a Real> for Real {
    fn sum<I: Iterator<Item = &'a Real>>(iter: I) -> Real {
        iter.fold(Real::zero(), |acc, x| acc + x)
    }
}

impl std::iter::Product for Real {
    fn product<I: Iterator<Item = Real>>(iter: I) -> Real {
        iter.fold(Real::one(), |acc, x| acc * x)
    }
}

/// Exact values print as `p/q` (or `p` for integers); floats print as the
/// shortest decimal that round-trips, always with a decimal point or
/// exponent so the two cannot be confused.
impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Exact(Rat::Small(r)) => write!(f, "{r}"),
            Repr::Exact(Rat::Big(b)) => write!(f, "{b}"),
            Repr::Float(v) => write!(f, "{v:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse `{0}` as a real number")]
pub struct ParseRealError(pub String);

/// Parses `p/q`, integers and decimal literals (`0.125`, `1e-3`) exactly.
/// A leading `~` forces a float.
impl FromStr for Real {
    type Err = ParseRealError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseRealError(s.to_string());
        let t = s.trim();
        if let Some(rest) = t.strip_prefix('~') {
            return rest.trim().parse::<f64>().map(Real::float).map_err(|_| err());
        }
        if let Some((n, d)) = t.split_once('/') {
            let n: BigInt = n.trim().parse().map_err(|_| err())?;
            let d: BigInt = d.trim().parse().map_err(|_| err())?;
            if d.is_zero() {
                return Err(err());
            }
            return Ok(Real::from_big(BigRational::new(n, d)));
        }
        let (mantissa, exponent) = match t.find(['e', 'E']) {
            Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|_| err())?),
            None => (t, 0),
        };
        let (negative, digits) = match mantissa.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
        };
        let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(err());
        }
        if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let all: BigInt = format!("0{int_part}{frac_part}").parse().map_err(|_| err())?;
        let scale = exponent - frac_part.len() as i32;
        let ten = BigInt::from(10);
        let value = if scale >= 0 {
            BigRational::from_integer(all * num_traits::pow(ten, scale as usize))
        } else {
            BigRational::new(all, num_traits::pow(ten, (-scale) as usize))
        };
        Ok(Real::from_big(if negative { -value } else { value }))
    }
}

impl Zero for Real {
    fn zero() -> Self {
        Real::zero()
    }
    fn is_zero(&self) -> bool {
        Real::is_zero(self)
    }
}

impl One for Real {
    fn one() -> Self {
        Real::one()
    }
}

impl num_traits::Num for Real {
    type FromStrRadixErr = ParseRealError;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        if radix != 10 {
            return Err(ParseRealError(s.to_string()));
        }
        s.parse()
    }
}

/// Sums in a fixed balanced tree so float results do not depend on how the
/// work was scheduled.
pub fn tree_reduce<T, F>(mut items: Vec<T>, combine: F) -> Option<T>
where
    F: Fn(T, T) -> T,
{
    if items.is_empty() {
        return None;
    }
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

pub fn tree_sum(items: Vec<Real>) -> Real {
    tree_reduce(items, |a, b| a + b).unwrap_or_else(Real::zero)
}

/// Greatest common divisor helper used by lattice code.
pub fn gcd_i64(a: i64, b: i64) -> i64 {
    a.gcd(&b)
}

//! Trigonometric polynomials on the torus and rotation angles.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_complex::Complex;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::real::Real;

pub type Coef = Complex<Real>;

/// A rotation angle measured in full turns. Rational angles stay exact;
/// others are carried as an unevaluated double-double `hi + lo`.
#[derive(Clone, Debug, PartialEq)]
pub enum Angle {
    Rational(Real),
    DoubleDouble { hi: f64, lo: f64 },
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl Angle {
    pub fn rational(value: Real) -> Result<Angle> {
        if !value.is_exact() {
            return Ok(Angle::DoubleDouble { hi: value.to_f64(), lo: 0.0 });
        }
        Ok(Angle::Rational(value.fract()))
    }

    pub fn float(value: f64) -> Angle {
        Angle::DoubleDouble { hi: value, lo: 0.0 }
    }

    /// `(√5 - 1) / 2` to about 106 bits: one Newton step on `a^2 + a - 1`.
    pub fn golden() -> Angle {
        let hi = (5f64.sqrt() - 1.0) / 2.0;
        let sq = hi * hi;
        let sq_err = hi.mul_add(hi, -sq);
        let (s, s_err) = two_sum(sq, hi);
        let residual = (s - 1.0) + s_err + sq_err;
        let lo = -residual / (2.0 * hi + 1.0);
        Angle::DoubleDouble { hi, lo }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Angle::Rational(_))
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Angle::Rational(r) => r.to_f64(),
            Angle::DoubleDouble { hi, lo } => hi + lo,
        }
    }

    /// Fractional part of `m * angle`, in `[0, 1)`.
    pub fn times_fract(&self, m: i64) -> Real {
        match self {
            Angle::Rational(r) => (Real::int(m) * r).fract(),
            Angle::DoubleDouble { hi, lo } => {
                let mf = m as f64;
                let p = mf * hi;
                let p_err = mf.mul_add(*hi, -p);
                let whole = p.floor();
                let mut r = (p - whole) + (p_err + mf * lo);
                r -= r.floor();
                if r >= 1.0 {
                    r = 0.0;
                }
                Real::float(r)
            }
        }
    }

    pub fn precision_note(&self) -> &'static str {
        match self {
            Angle::Rational(_) => "exact rational angle",
            Angle::DoubleDouble { .. } => "double-double angle, phases reduced mod 1 before rounding to f64",
        }
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Angle::Rational(r) => write!(f, "{r}"),
            Angle::DoubleDouble { hi, lo } => write!(f, "{:?}", hi + lo),
        }
    }
}

/// `exp(2πiθ)`; exact at quarter turns, float otherwise.
pub fn unit_phase(theta: &Real) -> Coef {
    if theta.is_exact() {
        let t = theta.fract();
        for (q, re, im) in [(0, 1, 0), (1, 0, 1), (2, -1, 0), (3, 0, -1)] {
            if t == Real::ratio(q, 4) {
                return Complex::new(Real::int(re), Real::int(im));
            }
        }
    }
    let x = 2.0 * std::f64::consts::PI * theta.fract().to_f64();
    Complex::new(Real::float(x.cos()), Real::float(x.sin()))
}

pub type Frequency = Vec<BigInt>;

/// `Σ c_k exp(2πi⟨k, x⟩)` with finitely many nonzero coefficients.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TrigPoly {
    dim: usize,
    coefs: BTreeMap<Frequency, Coef>,
}

fn coef_is_zero(c: &Coef) -> bool {
    c.re.is_zero() && c.im.is_zero()
}

impl TrigPoly {
    pub fn zero(dim: usize) -> Self {
        TrigPoly { dim, coefs: BTreeMap::new() }
    }

    pub fn constant(dim: usize, c: Real) -> Self {
        TrigPoly::zero(dim).with_term(vec![BigInt::zero(); dim], Complex::new(c, Real::zero()))
    }

    /// `exp(2πi⟨k, x⟩)`.
    pub fn character(k: &[i64]) -> Self {
        TrigPoly::zero(k.len()).with_term(k.iter().map(|&v| BigInt::from(v)).collect(), Complex::one())
    }

    /// `amplitude * cos(2π⟨k, x⟩)`.
    pub fn cosine(k: &[i64], amplitude: Real) -> Self {
        let half = Complex::new(amplitude / Real::int(2), Real::zero());
        let pos: Frequency = k.iter().map(|&v| BigInt::from(v)).collect();
        let neg: Frequency = pos.iter().map(|v| -v).collect();
        TrigPoly::zero(k.len()).with_term(pos, half.clone()).with_term(neg, half)
    }

    /// `amplitude * sin(2π⟨k, x⟩)`.
    pub fn sine(k: &[i64], amplitude: Real) -> Self {
        let half = amplitude / Real::int(2);
        let pos: Frequency = k.iter().map(|&v| BigInt::from(v)).collect();
        let neg: Frequency = pos.iter().map(|v| -v).collect();
        TrigPoly::zero(k.len())
            .with_term(pos, Complex::new(Real::zero(), -half.clone()))
            .with_term(neg, Complex::new(Real::zero(), half))
    }

    pub fn with_term(mut self, k: Frequency, c: Coef) -> Self {
        self.add_term(k, c);
        self
    }

    fn add_term(&mut self, k: Frequency, c: Coef) {
        let entry = self.coefs.entry(k.clone()).or_insert_with(Complex::zero);
        *entry = entry.clone() + c;
        if coef_is_zero(entry) {
            self.coefs.remove(&k);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Frequency, &Coef)> {
        self.coefs.iter()
    }

    pub fn coefficient(&self, k: &[BigInt]) -> Coef {
        self.coefs.get(k).cloned().unwrap_or_else(Complex::zero)
    }

    pub fn add(&self, other: &TrigPoly) -> TrigPoly {
        let mut out = self.clone();
        for (k, c) in &other.coefs {
            out.add_term(k.clone(), c.clone());
        }
        out
    }

    pub fn scale(&self, s: &Real) -> TrigPoly {
        let mut out = TrigPoly::zero(self.dim);
        for (k, c) in &self.coefs {
            out.add_term(k.clone(), Complex::new(&c.re * s, &c.im * s));
        }
        out
    }

    pub fn mul(&self, other: &TrigPoly) -> TrigPoly {
        let mut out = TrigPoly::zero(self.dim);
        for (k1, c1) in &self.coefs {
            for (k2, c2) in &other.coefs {
                let k: Frequency = k1.iter().zip(k2).map(|(a, b)| a + b).collect();
                out.add_term(k, c1.clone() * c2.clone());
            }
        }
        out
    }

    /// Mean over the torus: the zero-frequency coefficient (real part; the
    /// imaginary part vanishes for real-valued polynomials).
    pub fn mean(&self) -> Coef {
        self.coefficient(&vec![BigInt::zero(); self.dim])
    }

    /// `∫ f h` for two polynomials without forming the product.
    pub fn mean_of_product(&self, other: &TrigPoly) -> Coef {
        let mut acc: Coef = Complex::zero();
        for (k, c) in &self.coefs {
            let neg: Frequency = k.iter().map(|v| -v).collect();
            if let Some(d) = other.coefs.get(&neg) {
                acc = acc + c.clone() * d.clone();
            }
        }
        acc
    }

    /// `c_{-k} = conj(c_k)` for every frequency.
    pub fn is_real(&self) -> bool {
        self.coefs.iter().all(|(k, c)| {
            let neg: Frequency = k.iter().map(|v| -v).collect();
            let d = self.coefficient(&neg);
            d.re == c.re && d.im == -c.im.clone()
        })
    }

    /// `Σ (|Re c| + |Im c|)`, a bound on the sup norm.
    pub fn sup_bound(&self) -> Real {
        self.coefs.values().map(|c| c.re.abs() + c.im.abs()).sum()
    }

    /// `f(x + gα)`: multiplies the coefficient at `k` by `exp(2πi⟨k, gα⟩)`.
    pub fn rotate(&self, alpha: &[Angle], g: i64) -> Result<TrigPoly> {
        let mut out = TrigPoly::zero(self.dim);
        for (k, c) in &self.coefs {
            let mut theta = Real::zero();
            for (ki, a) in k.iter().zip(alpha) {
                let m = ki
                    .to_i64()
                    .and_then(|v| v.checked_mul(g))
                    .ok_or_else(|| Error::input(format!("frequency {ki} times {g} overflows")))?;
                theta = (theta + a.times_fract(m)).fract();
            }
            out.add_term(k.clone(), c.clone() * unit_phase(&theta));
        }
        Ok(out)
    }

    /// `f(M x)`: frequency `k` moves to `Mᵀ k`.
    pub fn remap(&self, matrix: &[Vec<BigInt>]) -> TrigPoly {
        let mut out = TrigPoly::zero(self.dim);
        for (k, c) in &self.coefs {
            let image: Frequency = (0..self.dim).map(|j| (0..self.dim).map(|i| &matrix[i][j] * &k[i]).sum()).collect();
            out.add_term(image, c.clone());
        }
        out
    }
}

impl fmt::Display for TrigPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coefs.is_empty() {
            return write!(f, "0");
        }
        for (i, (k, c)) in self.coefs.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            let ks: Vec<String> = k.iter().map(|v| v.to_string()).collect();
            write!(f, "({}+{}i)e[{}]", c.re, c.im, ks.join(","))?;
        }
        Ok(())
    }
}

pub type BigMatrix = Vec<Vec<BigInt>>;

pub fn mat_mul(a: &BigMatrix, b: &BigMatrix) -> BigMatrix {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| &a[i][k] * &b[k][j]).sum()).collect()).collect()
}

pub fn mat_identity(n: usize) -> BigMatrix {
    (0..n).map(|i| (0..n).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }).collect()).collect()
}

pub fn mat_pow(a: &BigMatrix, mut e: u64) -> BigMatrix {
    let mut base = a.clone();
    let mut acc = mat_identity(a.len());
    while e > 0 {
        if e & 1 == 1 {
            acc = mat_mul(&acc, &base);
        }
        base = mat_mul(&base, &base);
        e >>= 1;
    }
    acc
}

pub fn determinant(a: &BigMatrix) -> BigInt {
    let n = a.len();
    if n == 1 {
        return a[0][0].clone();
    }
    let mut det = BigInt::zero();
    for j in 0..n {
        let minor: BigMatrix = (1..n).map(|i| (0..n).filter(|&c| c != j).map(|c| a[i][c].clone()).collect()).collect();
        let term = &a[0][j] * determinant(&minor);
        if j % 2 == 0 {
            det += term;
        } else {
            det -= term;
        }
    }
    det
}

/// Inverse of a unimodular integer matrix.
pub fn unimodular_inverse(a: &BigMatrix) -> Option<BigMatrix> {
    let n = a.len();
    let det = determinant(a);
    if det.abs() != BigInt::one() {
        return None;
    }
    if n == 1 {
        return Some(vec![vec![det]]);
    }
    let inv = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let minor: BigMatrix = (0..n)
                        .filter(|&r| r != j)
                        .map(|r| (0..n).filter(|&c| c != i).map(|c| a[r][c].clone()).collect())
                        .collect();
                    let cof = determinant(&minor);
                    let signed = if (i + j) % 2 == 0 { cof } else { -cof };
                    signed * &det
                })
                .collect()
        })
        .collect();
    Some(inv)
}

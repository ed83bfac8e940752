//! Deterministic fixed-point amounts with nine fractional decimal digits.
//!
//! Every monetary quantity in the engine (prices, reserves, balances, bonds,
//! penalties, rewards) is a [`FixedAmount`]. Addition and subtraction are
//! exact; multiplication and division round half-to-even to the nearest
//! 10⁻⁹. Logarithms and exponentials are evaluated in a 64-fractional-bit
//! intermediate format and quantized once at the end.

mod wide;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use wide::Wide;

/// Number of fractional decimal digits.
pub const DECIMALS: u32 = 9;
/// Raw units per whole unit.
pub const SCALE: i128 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FixedError {
    #[error("fixed-point overflow")]
    Overflow,
    #[error("division by zero")]
    DivisionByZero,
    #[error("logarithm domain error: {0} is not positive")]
    Domain(FixedAmount),
    #[error("invalid decimal literal `{0}`")]
    Parse(String),
}

/// Rounding direction for explicit-rounding helpers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rounding {
    HalfEven,
    Floor,
    Ceil,
}

/// Signed count of 10⁻⁹ units.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FixedAmount(i128);

impl FixedAmount {
    pub const ZERO: FixedAmount = FixedAmount(0);
    pub const ONE: FixedAmount = FixedAmount(SCALE);
    /// One quantum (10⁻⁹).
    pub const QUANTUM: FixedAmount = FixedAmount(1);
    pub const MAX: FixedAmount = FixedAmount(i128::MAX);
    pub const MIN: FixedAmount = FixedAmount(i128::MIN + 1);

    pub const fn from_raw(raw: i128) -> Self {
        FixedAmount(raw)
    }

    pub const fn raw(self) -> i128 {
        self.0
    }

    pub const fn from_int(units: i64) -> Self {
        FixedAmount(units as i128 * SCALE)
    }

    /// `num / den` rounded half-to-even.
    pub fn from_ratio(num: i128, den: i128) -> Result<Self, FixedError> {
        if den == 0 {
            return Err(FixedError::DivisionByZero);
        }
        match num.checked_mul(SCALE) {
            Some(n) => Ok(FixedAmount(div_round(n, den, Rounding::HalfEven))),
            None => big_div_round(BigInt::from(num) * SCALE, &BigInt::from(den), Rounding::HalfEven).map(FixedAmount),
        }
    }

    /// Parses a decimal literal. Digits past the ninth fractional place are
    /// rounded half-to-even.
    pub fn parse(s: &str) -> Result<Self, FixedError> {
        parse_decimal(s).ok_or_else(|| FixedError::Parse(s.to_string()))?
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn abs(self) -> Self {
        FixedAmount(self.0.abs())
    }

    pub fn signum(self) -> i128 {
        self.0.signum()
    }

    pub fn checked_add(self, rhs: Self) -> Result<Self, FixedError> {
        self.0.checked_add(rhs.0).map(FixedAmount).ok_or(FixedError::Overflow)
    }

    pub fn checked_sub(self, rhs: Self) -> Result<Self, FixedError> {
        self.0.checked_sub(rhs.0).map(FixedAmount).ok_or(FixedError::Overflow)
    }

    /// `self · rhs`, rounded half-to-even.
    pub fn checked_mul(self, rhs: Self) -> Result<Self, FixedError> {
        self.mul_div_round(rhs, FixedAmount::ONE, Rounding::HalfEven)
    }

    /// `self / rhs`, rounded half-to-even.
    pub fn checked_div(self, rhs: Self) -> Result<Self, FixedError> {
        self.mul_div_round(FixedAmount::ONE, rhs, Rounding::HalfEven)
    }

    /// `self · mul / div` with a single rounding step.
    pub fn mul_div(self, mul: Self, div: Self) -> Result<Self, FixedError> {
        self.mul_div_round(mul, div, Rounding::HalfEven)
    }

    pub fn mul_div_round(self, mul: Self, div: Self, mode: Rounding) -> Result<Self, FixedError> {
        if div.0 == 0 {
            return Err(FixedError::DivisionByZero);
        }
        match self.0.checked_mul(mul.0) {
            Some(p) => Ok(FixedAmount(div_round(p, div.0, mode))),
            None => {
                big_div_round(BigInt::from(self.0) * BigInt::from(mul.0), &BigInt::from(div.0), mode).map(FixedAmount)
            }
        }
    }

    /// Multiplies by an integer count, exactly.
    pub fn mul_int(self, n: i128) -> Result<Self, FixedError> {
        self.0.checked_mul(n).map(FixedAmount).ok_or(FixedError::Overflow)
    }

    /// Divides by an integer count, rounding half-to-even.
    pub fn div_int(self, n: i128) -> Result<Self, FixedError> {
        if n == 0 {
            return Err(FixedError::DivisionByZero);
        }
        Ok(FixedAmount(div_round(self.0, n, Rounding::HalfEven)))
    }

    /// Applies `bps / 10000`, rounding in the given direction.
    pub fn mul_bps(self, bps: u32, mode: Rounding) -> Self {
        FixedAmount(div_round(self.0 * bps as i128, 10_000, mode))
    }

    /// Exact rational value of this amount.
    pub fn to_rational(self) -> BigRational {
        BigRational::new(BigInt::from(self.0), BigInt::from(SCALE))
    }

    /// Lossy conversion for reporting; never used on the arithmetic path.
    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }

    /// Natural logarithm. Errors when `self ≤ 0`.
    pub fn ln(self) -> Result<Self, FixedError> {
        Wide::ln(self)?.to_fixed()
    }

    /// `e^self`. Underflows quietly to zero.
    pub fn exp(self) -> Result<Self, FixedError> {
        Wide::from_fixed(self)?.exp_scaled(FixedAmount::ONE)
    }

    /// `self^exponent` for `self ≥ 0`, via `exp(exponent · ln self)` in wide precision.
    pub fn powf(self, exponent: Self) -> Result<Self, FixedError> {
        FixedAmount::ONE.mul_pow(self, exponent)
    }

    /// `self · base^exponent` with a single final rounding.
    pub fn mul_pow(self, base: Self, exponent: Self) -> Result<Self, FixedError> {
        if base.is_negative() {
            return Err(FixedError::Domain(base));
        }
        if base.is_zero() {
            return match exponent.0.cmp(&0) {
                Ordering::Greater => Ok(FixedAmount::ZERO),
                Ordering::Equal => Ok(self),
                Ordering::Less => Err(FixedError::DivisionByZero),
            };
        }
        Wide::ln(base)?.mul_fixed(exponent)?.exp_scaled(self)
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn clamp(self, lo: Self, hi: Self) -> Self {
        self.max(lo).min(hi)
    }
}

/// Rounds an exact rational to the nearest 10⁻⁹, ties to even.
pub fn quantize(value: &BigRational) -> Result<FixedAmount, FixedError> {
    let num = value.numer() * BigInt::from(SCALE);
    big_div_round(num, value.denom(), Rounding::HalfEven).map(FixedAmount)
}

/// Natural logarithm with the domain check surfaced as an error.
pub fn safe_ln(x: FixedAmount) -> Result<FixedAmount, FixedError> {
    x.ln()
}

/// `ln(num / den)` without quantizing the ratio first.
pub fn ln_ratio(num: FixedAmount, den: FixedAmount) -> Result<FixedAmount, FixedError> {
    Wide::ln(num)?.checked_sub(Wide::ln(den)?)?.to_fixed()
}

/// Splits `total` across `weights`, flooring each share.
///
/// Returns the shares and the undistributed remainder, which is less than
/// one quantum per recipient. Zero total weight distributes nothing.
pub fn pro_rata(total: FixedAmount, weights: &[FixedAmount]) -> Result<(Vec<FixedAmount>, FixedAmount), FixedError> {
    if total.is_negative() || weights.iter().any(|w| w.is_negative()) {
        return Err(FixedError::Domain(total));
    }
    let sum: BigInt = weights.iter().map(|w| BigInt::from(w.0)).sum();
    if sum.is_zero() {
        return Ok((vec![FixedAmount::ZERO; weights.len()], total));
    }
    let mut shares = Vec::with_capacity(weights.len());
    let mut paid = 0i128;
    for w in weights {
        let share = big_div_round(BigInt::from(total.0) * BigInt::from(w.0), &sum, Rounding::Floor)?;
        paid += share;
        shares.push(FixedAmount(share));
    }
    Ok((shares, FixedAmount(total.0 - paid)))
}

pub(crate) fn div_round(n: i128, d: i128, mode: Rounding) -> i128 {
    debug_assert!(d != 0);
    let q = n / d;
    let r = n % d;
    if r == 0 {
        return q;
    }
    let negative = (n < 0) != (d < 0);
    let step = if negative { -1 } else { 1 };
    match mode {
        Rounding::Floor => {
            if negative {
                q - 1
            } else {
                q
            }
        }
        Rounding::Ceil => {
            if negative {
                q
            } else {
                q + 1
            }
        }
        Rounding::HalfEven => {
            let r = r.unsigned_abs();
            let rest = d.unsigned_abs() - r;
            match r.cmp(&rest) {
                Ordering::Greater => q + step,
                Ordering::Less => q,
                Ordering::Equal => {
                    if q % 2 == 0 {
                        q
                    } else {
                        q + step
                    }
                }
            }
        }
    }
}

fn big_div_round(n: BigInt, d: &BigInt, mode: Rounding) -> Result<i128, FixedError> {
    if d.is_zero() {
        return Err(FixedError::DivisionByZero);
    }
    let (q, r) = n.div_rem(d);
    let q = if r.is_zero() {
        q
    } else {
        let negative = n.is_negative() != d.is_negative();
        let step = if negative { -BigInt::one() } else { BigInt::one() };
        match mode {
            Rounding::Floor => {
                if negative {
                    q - 1
                } else {
                    q
                }
            }
            Rounding::Ceil => {
                if negative {
                    q
                } else {
                    q + 1
                }
            }
            Rounding::HalfEven => {
                let twice: BigInt = r.abs() * 2;
                match twice.cmp(&d.abs()) {
                    Ordering::Greater => q + step,
                    Ordering::Less => q,
                    Ordering::Equal => {
                        if q.is_even() {
                            q
                        } else {
                            q + step
                        }
                    }
                }
            }
        }
    };
    q.to_i128().ok_or(FixedError::Overflow)
}

fn parse_decimal(s: &str) -> Option<Result<FixedAmount, FixedError>> {
    let t = s.trim();
    let (negative, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], body[i + 1..].parse::<i32>().ok()?),
        None => (body, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((a, b)) => (a, b),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let mut num: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    if negative {
        num = -num;
    }
    let scale = exponent - frac_part.len() as i32;
    if scale.unsigned_abs() > 400 {
        return None;
    }
    let ten = BigInt::from(10);
    let value = if scale >= 0 {
        BigRational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(num, num_traits::pow(ten, (-scale) as usize))
    };
    Some(quantize(&value))
}

impl fmt::Display for FixedAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let int = abs / SCALE as u128;
        let frac = abs % SCALE as u128;
        if frac == 0 {
            write!(f, "{sign}{int}")
        } else {
            let frac = format!("{frac:09}");
            write!(f, "{sign}{int}.{}", frac.trim_end_matches('0'))
        }
    }
}

impl fmt::Debug for FixedAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for FixedAmount {
    type Err = FixedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FixedAmount::parse(s)
    }
}

impl std::ops::Add for FixedAmount {
    type Output = FixedAmount;

    /// Panics on overflow; use [`FixedAmount::checked_add`] for untrusted inputs.
    fn add(self, rhs: Self) -> Self {
        self.checked_add(rhs).expect("fixed-point overflow")
    }
}

impl std::ops::Sub for FixedAmount {
    type Output = FixedAmount;

    fn sub(self, rhs: Self) -> Self {
        self.checked_sub(rhs).expect("fixed-point overflow")
    }
}

impl std::ops::AddAssign for FixedAmount {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::ops::SubAssign for FixedAmount {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl std::ops::Neg for FixedAmount {
    type Output = FixedAmount;

    fn neg(self) -> Self {
        FixedAmount(self.0.checked_neg().expect("fixed-point overflow"))
    }
}

impl std::iter::Sum for FixedAmount {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(FixedAmount::ZERO, |a, b| a + b)
    }
}

impl From<i64> for FixedAmount {
    fn from(units: i64) -> Self {
        FixedAmount::from_int(units)
    }
}

impl Serialize for FixedAmount {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FixedAmount {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct Visitor;

        impl serde::de::Visitor<'_> for Visitor {
            type Value = FixedAmount;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a decimal string or number")
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<FixedAmount, E> {
                FixedAmount::parse(v).map_err(E::custom)
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<FixedAmount, E> {
                Ok(FixedAmount::from_int(v))
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<FixedAmount, E> {
                (v as i128).checked_mul(SCALE).map(FixedAmount).ok_or_else(|| E::custom("overflow"))
            }

            fn visit_f64<E: serde::de::Error>(self, v: f64) -> Result<FixedAmount, E> {
                if !v.is_finite() {
                    return Err(E::custom("non-finite number"));
                }
                // Shortest round-trip representation keeps `0.1` as 0.1.
                FixedAmount::parse(&format!("{v}")).map_err(E::custom)
            }
        }

        deserializer.deserialize_any(Visitor)
    }
}

impl schemars::JsonSchema for FixedAmount {
    fn schema_name() -> String {
        "FixedAmount".to_string()
    }

    fn json_schema(_: &mut schemars::gen::SchemaGenerator) -> schemars::schema::Schema {
        use schemars::schema::{InstanceType, Metadata, SchemaObject, SingleOrVec};
        SchemaObject {
            metadata: Some(Box::new(Metadata {
                description: Some("Decimal amount with up to 9 fractional digits, as a string or number".into()),
                ..Default::default()
            })),
            instance_type: Some(SingleOrVec::Vec(vec![InstanceType::String, InstanceType::Number])),
            ..Default::default()
        }
        .into()
    }
}

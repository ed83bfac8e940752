//! Signed Q64.64 intermediate used for logarithms and exponentials.

use std::cmp::Ordering;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_traits::ToPrimitive;

use super::{div_round, FixedAmount, FixedError, Rounding, SCALE};

const FRAC_BITS: u32 = 64;
const ONE: i128 = 1 << FRAC_BITS;
const LOW_MASK: u128 = u64::MAX as u128;

/// A real number carried with 64 fractional bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Wide(i128);

impl Wide {
    pub const ZERO: Wide = Wide(0);
    pub const ONE: Wide = Wide(ONE);

    pub fn from_fixed(x: FixedAmount) -> Result<Wide, FixedError> {
        Wide::ratio(x, FixedAmount::ONE)
    }

    /// `num / den` carried at full intermediate precision.
    pub fn ratio(num: FixedAmount, den: FixedAmount) -> Result<Wide, FixedError> {
        if den.is_zero() {
            return Err(FixedError::DivisionByZero);
        }
        match num.raw().checked_mul(ONE) {
            Some(n) => Ok(Wide(div_round(n, den.raw(), Rounding::HalfEven))),
            None => {
                let n = BigInt::from(num.raw()) << FRAC_BITS;
                let q = n / BigInt::from(den.raw());
                q.to_i128().map(Wide).ok_or(FixedError::Overflow)
            }
        }
    }

    /// Natural logarithm of a positive amount.
    pub fn ln(x: FixedAmount) -> Result<Wide, FixedError> {
        if !x.is_positive() {
            return Err(FixedError::Domain(x));
        }
        Ok(Wide(ln_int(x.raw() as u128) - ln_scale()))
    }

    pub fn checked_add(self, rhs: Wide) -> Result<Wide, FixedError> {
        self.0.checked_add(rhs.0).map(Wide).ok_or(FixedError::Overflow)
    }

    pub fn checked_sub(self, rhs: Wide) -> Result<Wide, FixedError> {
        self.0.checked_sub(rhs.0).map(Wide).ok_or(FixedError::Overflow)
    }

    /// Multiplies by a fixed amount, rounding to the nearest 2⁻⁶⁴.
    pub fn mul_fixed(self, f: FixedAmount) -> Result<Wide, FixedError> {
        match self.0.checked_mul(f.raw()) {
            Some(p) => Ok(Wide(div_round(p, SCALE, Rounding::HalfEven))),
            None => {
                let p = BigInt::from(self.0) * BigInt::from(f.raw()) / BigInt::from(SCALE);
                p.to_i128().map(Wide).ok_or(FixedError::Overflow)
            }
        }
    }

    /// Quantizes to the nearest 10⁻⁹, ties to even.
    pub fn to_fixed(self) -> Result<FixedAmount, FixedError> {
        match self.0.checked_mul(SCALE) {
            Some(p) => Ok(FixedAmount::from_raw(div_round(p, ONE, Rounding::HalfEven))),
            None => Err(FixedError::Overflow),
        }
    }

    /// `scale · e^self`, rounded once to the nearest 10⁻⁹.
    pub fn exp_scaled(self, scale: FixedAmount) -> Result<FixedAmount, FixedError> {
        if scale.is_zero() {
            return Ok(FixedAmount::ZERO);
        }
        let ln2 = ln2();
        let k = div_round(self.0, ln2, Rounding::HalfEven);
        if k > 200 {
            return Err(FixedError::Overflow);
        }
        if k < -400 {
            return Ok(FixedAmount::ZERO);
        }
        let r = self.0 - k * ln2;
        // |r| ≤ ln2/2, so the Taylor series converges in under 30 terms
        let mut sum = ONE;
        let mut term = ONE;
        for n in 1..64 {
            term = mul_q_signed(term, r) / n;
            if term == 0 {
                break;
            }
            sum += term;
        }
        let mantissa = sum as u128;
        let product = mul_wide(scale.raw().unsigned_abs(), mantissa);
        let shift = FRAC_BITS as i128 - k;
        let magnitude = if shift >= 0 {
            shr_round_half_even(product, shift as u32)?
        } else {
            shl_checked(product, (-shift) as u32)?
        };
        if magnitude > i128::MAX as u128 {
            return Err(FixedError::Overflow);
        }
        let value = magnitude as i128;
        Ok(FixedAmount::from_raw(if scale.is_negative() { -value } else { value }))
    }
}

/// ln 2 rounded to 64 fractional bits.
const LN2: i128 = 0xB172_17F7_D1CF_79AC;

fn ln2() -> i128 {
    LN2
}

fn ln_scale() -> i128 {
    static LN_SCALE: OnceLock<i128> = OnceLock::new();
    *LN_SCALE.get_or_init(|| ln_int(SCALE as u128))
}

/// ln of a positive integer, Q64.
fn ln_int(x: u128) -> i128 {
    debug_assert!(x > 0);
    let e = 127 - x.leading_zeros();
    // mantissa normalized into [1, 2)
    let m = if e <= FRAC_BITS { x << (FRAC_BITS - e) } else { x >> (e - FRAC_BITS) };
    let s = ((m - ONE as u128) << FRAC_BITS) / (m + ONE as u128);
    e as i128 * ln2() + 2 * atanh(s) as i128
}

/// atanh(s) for 0 ≤ s < 1/2, Q64.
fn atanh(s: u128) -> u128 {
    let s2 = mul_q(s, s);
    let mut sum = s;
    let mut term = s;
    let mut k = 1u128;
    loop {
        term = mul_q(term, s2);
        if term == 0 {
            return sum;
        }
        sum += term / (2 * k + 1);
        k += 1;
    }
}

/// 128×128 → 256-bit product as (hi, lo).
fn mul_wide(a: u128, b: u128) -> (u128, u128) {
    let (a1, a0) = (a >> 64, a & LOW_MASK);
    let (b1, b0) = (b >> 64, b & LOW_MASK);
    let p00 = a0 * b0;
    let p01 = a0 * b1;
    let p10 = a1 * b0;
    let p11 = a1 * b1;
    let mid = (p00 >> 64) + (p01 & LOW_MASK) + (p10 & LOW_MASK);
    let lo = (p00 & LOW_MASK) | (mid << 64);
    let hi = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
    (hi, lo)
}

/// (a·b) >> 64, truncating. Callers keep the result below 2¹²⁸.
fn mul_q(a: u128, b: u128) -> u128 {
    let (hi, lo) = mul_wide(a, b);
    (hi << 64) | (lo >> 64)
}

fn mul_q_signed(a: i128, b: i128) -> i128 {
    let m = mul_q(a.unsigned_abs(), b.unsigned_abs()) as i128;
    if (a < 0) != (b < 0) {
        -m
    } else {
        m
    }
}

fn shr(v: (u128, u128), s: u32) -> (u128, u128) {
    match s {
        0 => v,
        1..=127 => (v.0 >> s, (v.1 >> s) | (v.0 << (128 - s))),
        128..=255 => (0, v.0 >> (s - 128)),
        _ => (0, 0),
    }
}

fn shl(v: (u128, u128), s: u32) -> (u128, u128) {
    match s {
        0 => v,
        1..=127 => ((v.0 << s) | (v.1 >> (128 - s)), v.1 << s),
        128..=255 => (v.1 << (s - 128), 0),
        _ => (0, 0),
    }
}

fn sub256(a: (u128, u128), b: (u128, u128)) -> (u128, u128) {
    let (lo, borrow) = a.1.overflowing_sub(b.1);
    (a.0 - b.0 - borrow as u128, lo)
}

fn shr_round_half_even(v: (u128, u128), s: u32) -> Result<u128, FixedError> {
    if s == 0 {
        return if v.0 == 0 { Ok(v.1) } else { Err(FixedError::Overflow) };
    }
    if s >= 256 {
        return Ok(0);
    }
    let q = shr(v, s);
    if q.0 != 0 {
        return Err(FixedError::Overflow);
    }
    let rem = sub256(v, shl(q, s));
    let half = shl((0, 1), s - 1);
    let up = match rem.cmp(&half) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => q.1 & 1 == 1,
    };
    Ok(q.1 + up as u128)
}

impl std::ops::Neg for Wide {
    type Output = Wide;

    fn neg(self) -> Wide {
        Wide(-self.0)
    }
}

fn shl_checked(v: (u128, u128), s: u32) -> Result<u128, FixedError> {
    if v.0 != 0 || (s > 0 && (s >= 128 || v.1 >> (128 - s) != 0)) {
        return Err(FixedError::Overflow);
    }
    Ok(v.1 << s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_agrees_with_ln2_constant() {
        // atanh accumulates truncation error of a few ulps per term
        let diff = 2 * atanh(ONE as u128 / 3) as i128 - LN2;
        assert!(diff.abs() <= 32, "diff {diff}");
    }

    #[test]
    fn wide_product_matches_bigint() {
        let a = 0xDEAD_BEEF_0123_4567_89AB_CDEF_0011_2233u128;
        let b = 0x0F0F_0F0F_F0F0_F0F0_1234_5678_9ABC_DEF0u128;
        let (hi, lo) = mul_wide(a, b);
        let expect = BigInt::from(a) * BigInt::from(b);
        let got = (BigInt::from(hi) << 128) + BigInt::from(lo);
        assert_eq!(got, expect);
    }

    #[test]
    fn rounding_shift_is_half_even() {
        assert_eq!(shr_round_half_even((0, 0b101), 1).unwrap(), 0b10);
        assert_eq!(shr_round_half_even((0, 0b111), 1).unwrap(), 0b100);
        assert_eq!(shr_round_half_even((0, 0b110), 2).unwrap(), 0b10);
        assert_eq!(shr_round_half_even((1, 0), 128).unwrap(), 1);
    }
}

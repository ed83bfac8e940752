//! Reference values computed independently of the library, in big-integer
//! fixed point with 60 decimal digits.

#![allow(dead_code)]

use std::path::PathBuf;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rugsim::fixed::FixedAmount;

const DIGITS: u32 = 60;

fn scale() -> BigInt {
    BigInt::from(10).pow(DIGITS)
}

/// `2 · atanh(z)` for a scaled `z` with |z| < 1/2.
fn two_atanh(z: &BigInt) -> BigInt {
    let s = scale();
    let z2 = z * z / &s;
    let mut term = z.clone();
    let mut sum = BigInt::zero();
    let mut k = 1u32;
    while !term.is_zero() {
        sum += &term / BigInt::from(k);
        term = &term * &z2 / &s;
        k += 2;
    }
    sum * 2
}

/// ln of a positive rational, scaled by 10^60.
pub fn ln_scaled(x: &BigRational) -> BigInt {
    assert!(x.is_positive());
    let s = scale();
    let two = BigRational::from_integer(BigInt::from(2));
    let mut y = x.clone();
    let mut k: i64 = 0;
    while y >= two {
        y /= &two;
        k += 1;
    }
    while y < BigRational::one() {
        y *= &two;
        k -= 1;
    }
    // y in [1, 2): z = (y - 1) / (y + 1) lies in [0, 1/3)
    let z = (&y - BigRational::one()) / (&y + BigRational::one());
    let z_s = (z * BigRational::from_integer(s.clone())).to_integer();
    let ln2 = two_atanh(&(&s / BigInt::from(3)));
    two_atanh(&z_s) + ln2 * BigInt::from(k)
}

/// e^m scaled by 10^60, for small non-negative integers m.
pub fn exp_int_scaled(m: u32) -> BigInt {
    let s = scale();
    let mut e = BigInt::zero();
    let mut term = s.clone();
    let mut k = 1u32;
    while !term.is_zero() {
        e += &term;
        term /= BigInt::from(k);
        k += 1;
    }
    let mut acc = s.clone();
    for _ in 0..m {
        acc = acc * &e / &s;
    }
    acc
}

/// Rounds a 10^60-scaled value to the nearest 10^-9 quantum.
pub fn to_fixed(scaled: &BigInt) -> FixedAmount {
    let div = BigInt::from(10).pow(DIGITS - 9);
    let (q, r) = scaled.div_mod_floor(&div);
    let q = if r * 2 >= div { q + 1 } else { q };
    FixedAmount::from_raw(i128::try_from(q).expect("fits"))
}

/// |got - oracle| in units, resolved to 10^-18.
pub fn abs_error(got: FixedAmount, oracle_scaled: &BigInt) -> f64 {
    let diff = BigInt::from(got.raw()) * BigInt::from(10).pow(DIGITS - 9) - oracle_scaled;
    let q = diff.abs() / BigInt::from(10).pow(DIGITS - 18);
    i128::try_from(q).expect("small") as f64 * 1e-18
}

pub fn fa(s: &str) -> FixedAmount {
    FixedAmount::parse(s).expect("literal")
}

pub fn rational(x: FixedAmount) -> BigRational {
    BigRational::new(BigInt::from(x.raw()), BigInt::from(1_000_000_000))
}

/// Exact `Σ_{i=1..n} (H/n)(γ + Δγ·i)`.
pub fn cumulative_oracle(h: FixedAmount, n: u64, gamma: FixedAmount, delta_gamma: FixedAmount) -> BigRational {
    let part = rational(h) / BigRational::from_integer(BigInt::from(n));
    (1..=n)
        .map(|i| &part * (rational(gamma) + rational(delta_gamma) * BigRational::from_integer(BigInt::from(i))))
        .fold(BigRational::zero(), |a, b| a + b)
}

/// |a - b| in quanta, where `b` is exact.
pub fn quanta_from(a: FixedAmount, b: &BigRational) -> BigRational {
    ((rational(a) - b) * BigRational::from_integer(BigInt::from(1_000_000_000))).abs()
}

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

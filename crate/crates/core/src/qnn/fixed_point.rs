//! Integer proxy for multiplication by a real-valued scale ratio.
//!
//! A positive real `m` is stored as a 31-bit normalized significand and a
//! shift, `m ≈ multiplier · 2^(−31−shift)` with `multiplier ∈ [2^30, 2^31)`.
//! Requantization then needs only an integer multiply and a rounding right
//! shift.

use crate::error::{Error, Result};
use crate::ir::{QuantParams, RoundingMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedPointMultiplier {
    pub multiplier: i32,
    pub shift: i32,
}

impl FixedPointMultiplier {
    /// The real value this multiplier stands for (exact in f64).
    pub fn to_f64(self) -> f64 {
        // split the power so neither factor under- or overflows on its own
        let e = -self.shift;
        (self.multiplier as f64 / 2f64.powi(31)) * 2f64.powi(e / 2) * 2f64.powi(e - e / 2)
    }

    pub fn is_power_of_two(self) -> bool {
        self.multiplier == 1 << 30
    }
}

/// Splits a positive finite `m` into `(significand, exponent)` with
/// `m = significand · 2^exponent` and `significand ∈ [0.5, 1)`.
fn frexp(m: f64) -> (f64, i32) {
    const EXP_MASK: u64 = 0x7ff << 52;
    let (m, bias) = if m < f64::MIN_POSITIVE {
        // subnormal: scale into the normal range first
        (m * 2f64.powi(64), -64)
    } else {
        (m, 0)
    };
    let bits = m.to_bits();
    let raw_exp = ((bits & EXP_MASK) >> 52) as i32;
    let significand = f64::from_bits((bits & !EXP_MASK) | (1022u64 << 52));
    (significand, raw_exp - 1022 + bias)
}

pub fn derive_fixed_point_multiplier(m: f64) -> Result<FixedPointMultiplier> {
    if m.is_nan() || m.is_infinite() || m <= 0.0 {
        return Err(Error::FixedPoint(format!(
            "scale ratio must be positive and finite, got {m}"
        )));
    }
    let (significand, mut exponent) = frexp(m);
    let mut q = (significand * 2f64.powi(31)).round() as i64;
    if q == 1 << 31 {
        q = 1 << 30;
        exponent += 1;
    }
    let shift = -exponent;
    Ok(FixedPointMultiplier {
        multiplier: q as i32,
        shift,
    })
}

/// `v / 2^n` rounded to nearest, ties broken by `mode`.
pub fn rounding_shift_right(v: i128, n: u32, mode: RoundingMode) -> i128 {
    if n == 0 {
        return v;
    }
    if n >= 127 {
        // |v| < 2^127 ≤ half a step away from zero
        return 0;
    }
    let half = 1i128 << (n - 1);
    match mode {
        RoundingMode::ToNearestAway => {
            let mag = (v.unsigned_abs() + half as u128) >> n;
            if v < 0 {
                -(mag as i128)
            } else {
                mag as i128
            }
        }
        RoundingMode::ToNearestEven => {
            let floor = v >> n;
            let rem = v - (floor << n);
            if rem > half || (rem == half && floor & 1 == 1) {
                floor + 1
            } else {
                floor
            }
        }
    }
}

/// `round(x · m)` for the real `m` that `fpm` represents.
///
/// A negative shift left-shifts `x` first; that step must fit in 64 bits.
/// The product is formed in 128 bits and the final value must fit in i32.
pub fn apply_fixed_point(x: i32, fpm: FixedPointMultiplier, mode: RoundingMode) -> Result<i32> {
    let (x_shifted, right) = if fpm.shift < 0 {
        let left = fpm.shift.unsigned_abs();
        let shifted = if left >= 63 {
            (x == 0).then_some(0)
        } else {
            (x as i64).checked_mul(1i64 << left)
        };
        let shifted = shifted.ok_or_else(|| {
            Error::Overflow(format!("{x} << {left} does not fit in 64 bits"))
        })?;
        (shifted, 31u32)
    } else {
        (x as i64, 31 + fpm.shift as u32)
    };
    let prod = x_shifted as i128 * fpm.multiplier as i128;
    let q = rounding_shift_right(prod, right, mode);
    i32::try_from(q).map_err(|_| {
        Error::Overflow(format!(
            "fixed-point product {x}·{}·2^(−31−{}) = {q} does not fit in i32",
            fpm.multiplier, fpm.shift
        ))
    })
}

/// `num / den` rounded to nearest, ties broken by `mode`. `den > 0`.
pub fn rounding_div(num: i64, den: i64, mode: RoundingMode) -> i64 {
    debug_assert!(den > 0);
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    // r ∈ [0, den): compare 2r with den to find the nearer neighbour
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => match mode {
            RoundingMode::ToNearestAway => {
                if num < 0 {
                    q
                } else {
                    q + 1
                }
            }
            RoundingMode::ToNearestEven => {
                if q & 1 == 0 {
                    q
                } else {
                    q + 1
                }
            }
        },
    }
}

/// One multiplier per input channel for re-expressing `input` codes in the
/// `output` scale (`m_c = scale_in[c] / scale_out`). The lowering and the
/// reference interpreter both call this, so they share the approximation.
pub fn requantize_multipliers(
    input: &QuantParams,
    output: &QuantParams,
) -> Result<Vec<FixedPointMultiplier>> {
    let out_scale = output.scale();
    input
        .scales
        .iter()
        .map(|&s| derive_fixed_point_multiplier(s / out_scale))
        .collect()
}

/// Parameters of the i32 accumulator of a quantized conv2d/dense:
/// scale `scale_in · scale_w[k]` along `channel_axis`, zero point 0.
pub fn accumulator_qparams(input: &QuantParams, weight: &QuantParams, channel_axis: usize) -> QuantParams {
    let scales: Vec<f64> = weight.scales.iter().map(|&w| input.scale() * w).collect();
    let n = scales.len();
    QuantParams {
        scales,
        zero_points: vec![0; n],
        axis: weight.axis.map(|_| channel_axis),
    }
}

/// The f32 reciprocal used when quantizing real values.
pub fn quantize_reciprocal(scale: f64) -> f32 {
    (1.0 / scale) as f32
}

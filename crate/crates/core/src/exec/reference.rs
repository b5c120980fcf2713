//! Oracle interpreter: evaluates QNN and framework composite ops straight
//! from their defining equations in wide integer arithmetic, and delegates
//! base ops to the ordinary kernels.
//!
//! Requantization here is exact rational arithmetic on the same
//! fixed-point multiplier the lowering uses, so equivalence checks against
//! canonicalized graphs are exact.

use crate::error::{Error, Result};
use crate::exec::interp::{conv_params, eval_node, ExecutionContext, TensorMap};
use crate::ir::registry::pool_window;
use crate::ir::shape::{broadcast_index_map, broadcast_shapes, Window2d};
use crate::ir::{DType, Node, QuantParams, RoundingMode, TensorValue};
use crate::qnn::fixed_point::{
    accumulator_qparams, quantize_reciprocal, requantize_multipliers, FixedPointMultiplier,
};

/// `num / den` rounded to nearest with ties by `mode`, for `den > 0`.
fn round_ratio(num: i128, den: i128, mode: RoundingMode) -> i128 {
    let q = num / den; // truncates toward zero
    let r = num % den;
    let twice = 2 * r.abs();
    let away = if num < 0 { q - 1 } else { q + 1 };
    if twice < den {
        q
    } else if twice > den {
        away
    } else {
        match mode {
            RoundingMode::ToNearestAway => away,
            RoundingMode::ToNearestEven => {
                if q % 2 == 0 {
                    q
                } else {
                    away
                }
            }
        }
    }
}

/// `round(v · multiplier · 2^(−31−shift))` as an exact rational.
pub fn rational_fixed_point(v: i64, fpm: FixedPointMultiplier, mode: RoundingMode) -> i128 {
    let exp = 31 + fpm.shift as i64;
    let num = v as i128 * fpm.multiplier as i128;
    if exp <= 0 {
        num << (-exp)
    } else if exp >= 126 {
        0
    } else {
        round_ratio(num, 1i128 << exp, mode)
    }
}

fn clamp_to(dtype: DType, v: i128) -> i64 {
    let (lo, hi) = dtype.int_range();
    v.clamp(lo as i128, hi as i128) as i64
}

/// Channel of flat element `i` along `axis` of `shape`.
fn channel_of(shape: &[usize], axis: Option<usize>, i: usize) -> usize {
    match axis {
        Some(a) => (i / shape[a + 1..].iter().product::<usize>()) % shape[a],
        None => 0,
    }
}

/// Requantizes each code of `x` from `in_q` to `out_q`.
fn requantize_values(
    x: &[i64],
    shape: &[usize],
    in_q: &QuantParams,
    out_q: &QuantParams,
    out_dtype: DType,
    mode: RoundingMode,
) -> Result<Vec<i64>> {
    let fpms = requantize_multipliers(in_q, out_q)?;
    let zp_out = out_q.zero_point() as i128;
    Ok(x.iter()
        .enumerate()
        .map(|(i, &q)| {
            let c = channel_of(shape, in_q.axis, i);
            let centered = q - in_q.zero_point_at(c) as i64;
            let scaled = rational_fixed_point(centered, fpms[c], mode);
            clamp_to(out_dtype, scaled + zp_out)
        })
        .collect())
}

/// Conv2d with zero points subtracted first; padded cells are real zero.
fn direct_conv(node: &Node, data: &TensorValue, weight: &TensorValue, zp_a: i64, zp_b: i64) -> Result<Vec<i64>> {
    let p = conv_params(node, weight.shape())?;
    let (&[n, c, h, w], &[k, cg, r, s]) = (data.shape(), weight.shape()) else {
        return Err(Error::exec(node.id, "conv2d operands must be rank 4"));
    };
    let win = Window2d { kernel: [r, s], ..p.window };
    let (oh, ow) = win
        .output_hw(h, w)
        .ok_or_else(|| Error::exec(node.id, "kernel larger than padded input"))?;
    let a: Vec<i64> = data.to_i64().unwrap().iter().map(|v| v - zp_a).collect();
    let b: Vec<i64> = weight.to_i64().unwrap().iter().map(|v| v - zp_b).collect();
    let kg = k / p.groups;
    let mut out = Vec::with_capacity(n * k * oh * ow);
    for nb in 0..n {
        for oc in 0..k {
            let g = oc / kg;
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = 0i64;
                    for ci in 0..cg {
                        let ic = g * cg + ci;
                        for ky in 0..r {
                            for kx in 0..s {
                                let iy = (y * win.strides[0] + ky * win.dilation[0]) as i64 - win.padding[0] as i64;
                                let ix = (x * win.strides[1] + kx * win.dilation[1]) as i64 - win.padding[1] as i64;
                                if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                    continue;
                                }
                                let av = a[((nb * c + ic) * h + iy as usize) * w + ix as usize];
                                acc += av * b[((oc * cg + ci) * r + ky) * s + kx];
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    Ok(out)
}

fn direct_dense(data: &TensorValue, weight: &TensorValue, zp_a: i64, zp_b: i64) -> Vec<i64> {
    let (bsz, k) = (data.shape()[0], data.shape()[1]);
    let n = weight.shape()[0];
    let a = data.to_i64().unwrap();
    let w = weight.to_i64().unwrap();
    let mut out = Vec::with_capacity(bsz * n);
    for i in 0..bsz {
        for j in 0..n {
            out.push((0..k).map(|t| (a[i * k + t] - zp_a) * (w[j * k + t] - zp_b)).sum());
        }
    }
    out
}

fn weight_zero_point(node: &Node) -> Result<i64> {
    let wq = node.quant("weight_qparams")?;
    wq.uniform_zero_point()
        .map(i64::from)
        .ok_or_else(|| Error::attr(node.id, "per-channel weight zero points are not supported"))
}

fn checked_i32(node: &Node, shape: Vec<usize>, v: Vec<i64>) -> Result<TensorValue> {
    if let Some(bad) = v.iter().find(|x| !DType::I32.contains(**x)) {
        return Err(Error::exec(node.id, format!("accumulator value {bad} exceeds i32")));
    }
    TensorValue::from_i64(shape, DType::I32, &v)
}

/// Accumulate, add bias, clip, requantize: the framework conv/dense composite.
fn composite_tail(node: &Node, acc: Vec<i64>, shape: &[usize], bias: Option<&TensorValue>) -> Result<TensorValue> {
    let mut acc = acc;
    if let Some(b) = bias {
        let b = b.to_i64().unwrap();
        let per = shape[2..].iter().product::<usize>();
        for (i, v) in acc.iter_mut().enumerate() {
            *v += b[(i / per) % shape[1]];
        }
    } else {
        return Err(Error::attr(node.id, format!("`{}` requires a bias operand", node.op)));
    }
    let lo = node.int_or("out_min", i32::MIN as i64)?;
    let hi = node.int_or("out_max", i32::MAX as i64)?;
    for v in acc.iter_mut() {
        if !DType::I32.contains(*v) {
            return Err(Error::exec(node.id, format!("biased accumulator {v} exceeds i32")));
        }
        *v = (*v).clamp(lo, hi);
    }
    let in_q = accumulator_qparams(node.quant("input_qparams")?, node.quant("weight_qparams")?, 1);
    let out_dtype = node.dtype_attr("out_dtype")?;
    let out = requantize_values(&acc, shape, &in_q, node.quant("output_qparams")?, out_dtype, node.rounding()?)?;
    TensorValue::from_i64(shape.to_vec(), out_dtype, &out)
}

fn eval_qnn_add(node: &Node, l: &TensorValue, r: &TensorValue) -> Result<TensorValue> {
    let (lq, rq, oq) = (
        node.quant("lhs_qparams")?,
        node.quant("rhs_qparams")?,
        node.quant("output_qparams")?,
    );
    let mode = node.rounding()?;
    let shape = broadcast_shapes(l.shape(), r.shape())
        .ok_or_else(|| Error::exec(node.id, "operands do not broadcast"))?;
    let fl = requantize_multipliers(lq, oq)?[0];
    let fr = requantize_multipliers(rq, oq)?[0];
    let (lv, rv) = (l.to_i64().unwrap(), r.to_i64().unwrap());
    let (il, ir) = (broadcast_index_map(l.shape(), &shape), broadcast_index_map(r.shape(), &shape));
    let out_dtype = node.dtype_attr("out_dtype")?;
    let out: Vec<i64> = il
        .iter()
        .zip(&ir)
        .map(|(&i, &j)| {
            let a = rational_fixed_point(lv[i] - lq.zero_point() as i64, fl, mode);
            let b = rational_fixed_point(rv[j] - rq.zero_point() as i64, fr, mode);
            clamp_to(out_dtype, a + b + oq.zero_point() as i128)
        })
        .collect();
    TensorValue::from_i64(shape, out_dtype, &out)
}

fn eval_qnn_pool(node: &Node, x: &TensorValue, max: bool) -> Result<TensorValue> {
    let win = pool_window(node)?;
    let zp = node.quant("qparams")?.zero_point() as i64;
    let (&[n, c, h, w], dtype) = (x.shape(), x.dtype()) else {
        return Err(Error::exec(node.id, "pool input must be rank 4"));
    };
    let (oh, ow) = win
        .output_hw(h, w)
        .ok_or_else(|| Error::exec(node.id, "window larger than padded input"))?;
    let v = x.to_i64().unwrap();
    let count = win.window_size() as i128;
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for b in 0..n {
        for ch in 0..c {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut cells = Vec::with_capacity(win.window_size());
                    for ky in 0..win.kernel[0] {
                        for kx in 0..win.kernel[1] {
                            let iy = (y * win.strides[0] + ky * win.dilation[0]) as i64 - win.padding[0] as i64;
                            let ix = (xo * win.strides[1] + kx * win.dilation[1]) as i64 - win.padding[1] as i64;
                            if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                cells.push(None);
                            } else {
                                cells.push(Some(v[((b * c + ch) * h + iy as usize) * w + ix as usize]));
                            }
                        }
                    }
                    out.push(if max {
                        cells.iter().flatten().copied().max().unwrap_or(dtype.min_value())
                    } else {
                        // padded cells hold the zero point, i.e. real 0
                        let sum: i128 = cells.iter().map(|c| c.unwrap_or(zp) as i128).sum();
                        clamp_to(dtype, round_ratio(sum, count, RoundingMode::ToNearestAway))
                    });
                }
            }
        }
    }
    TensorValue::from_i64(vec![n, c, oh, ow], dtype, &out)
}

fn eval_quantize(node: &Node, x: &TensorValue) -> Result<TensorValue> {
    let q = node.quant("output_qparams")?;
    let dtype = node.dtype_attr("out_dtype")?;
    let (lo, hi) = dtype.int_range();
    let v = x.as_f32().ok_or_else(|| Error::exec(node.id, "quantize needs f32"))?;
    // pre-clamp keeps the i32 conversion exact; NaN lands on the lower bound
    let zp_max = *q.zero_points.iter().max().unwrap() as i64;
    let zp_min = *q.zero_points.iter().min().unwrap() as i64;
    let (wide_lo, wide_hi) = ((lo - zp_max) as f32, (hi - zp_min) as f32);
    let out: Vec<i64> = v
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let c = channel_of(x.shape(), q.axis, i);
            let zp = q.zero_point_at(c) as i64;
            let r = (e * quantize_reciprocal(q.scale_at(c))).round();
            let r = r.max(wide_lo).min(wide_hi);
            (r as i64 + zp).clamp(lo, hi)
        })
        .collect();
    TensorValue::from_i64(x.shape().to_vec(), dtype, &out)
}

fn eval_dequantize(node: &Node, x: &TensorValue) -> Result<TensorValue> {
    let q = node.quant("input_qparams")?;
    let v = x.to_i64().unwrap();
    let out: Vec<f32> = v
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let c = channel_of(x.shape(), q.axis, i);
            ((e - q.zero_point_at(c) as i64) as i32 as f32) * (q.scale_at(c) as f32)
        })
        .collect();
    TensorValue::from_f32(x.shape().to_vec(), out)
}

/// Evaluates one node by its defining equation.
pub fn eval_reference(node: &Node, x: &[&TensorValue]) -> Result<TensorValue> {
    let out_shape = || node.out_type().shape.clone();
    let res = match node.op.as_str() {
        "qnn.requantize" => {
            let in_q = node.quant("input_qparams")?;
            let dtype = node.dtype_attr("out_dtype")?;
            let v = requantize_values(
                &x[0].to_i64().unwrap(),
                x[0].shape(),
                in_q,
                node.quant("output_qparams")?,
                dtype,
                node.rounding()?,
            )?;
            TensorValue::from_i64(x[0].shape().to_vec(), dtype, &v)
        }
        "qnn.conv2d" => {
            let zp_a = node.quant("input_qparams")?.zero_point() as i64;
            let acc = direct_conv(node, x[0], x[1], zp_a, weight_zero_point(node)?)?;
            checked_i32(node, out_shape(), acc)
        }
        "qnn.dense" => {
            let zp_a = node.quant("input_qparams")?.zero_point() as i64;
            checked_i32(node, out_shape(), direct_dense(x[0], x[1], zp_a, weight_zero_point(node)?))
        }
        "tflite.quantized_conv2d" => {
            let zp_a = node.quant("input_qparams")?.zero_point() as i64;
            let acc = direct_conv(node, x[0], x[1], zp_a, weight_zero_point(node)?)?;
            composite_tail(node, acc, &out_shape(), x.get(2).copied())
        }
        "tflite.quantized_dense" => {
            let zp_a = node.quant("input_qparams")?.zero_point() as i64;
            let acc = direct_dense(x[0], x[1], zp_a, weight_zero_point(node)?);
            composite_tail(node, acc, &out_shape(), x.get(2).copied())
        }
        "qnn.add" | "tflite.quantized_add" => eval_qnn_add(node, x[0], x[1]),
        "qnn.avg_pool2d" | "tflite.quantized_avg_pool" => eval_qnn_pool(node, x[0], false),
        "qnn.max_pool2d" | "tflite.quantized_max_pool" => eval_qnn_pool(node, x[0], true),
        "qnn.quantize" => eval_quantize(node, x[0]),
        "qnn.dequantize" => eval_dequantize(node, x[0]),
        _ => return eval_node(node, x),
    };
    res.map_err(|e| e.at_node(node.id))
}

/// Runs a graph that may still contain QNN and framework ops.
pub fn reference_qnn_interpreter(g: &crate::ir::Graph, inputs: &TensorMap) -> Result<Vec<TensorValue>> {
    ExecutionContext::new(g, inputs)?.run_with(eval_reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qnn::fixed_point::derive_fixed_point_multiplier;

    #[test]
    fn round_ratio_ties() {
        use RoundingMode::*;
        assert_eq!(round_ratio(5, 2, ToNearestAway), 3);
        assert_eq!(round_ratio(-5, 2, ToNearestAway), -3);
        assert_eq!(round_ratio(5, 2, ToNearestEven), 2);
        assert_eq!(round_ratio(-5, 2, ToNearestEven), -2);
        assert_eq!(round_ratio(7, 2, ToNearestEven), 4);
        assert_eq!(round_ratio(-7, 4, ToNearestEven), -2);
    }

    #[test]
    fn rational_matches_examples() {
        let half = derive_fixed_point_multiplier(0.5).unwrap();
        assert_eq!(rational_fixed_point(5, half, RoundingMode::ToNearestAway), 3);
        assert_eq!(rational_fixed_point(-5, half, RoundingMode::ToNearestAway), -3);
        let four = derive_fixed_point_multiplier(4.0).unwrap();
        assert_eq!(rational_fixed_point(-7, four, RoundingMode::ToNearestEven), -28);
    }
}

//! Reference kernels. Integer kernels widen to i64, accumulate exactly and
//! check the result against the output dtype instead of wrapping.

use std::ops::{Add, Mul};

use crate::error::{Error, Result};
use crate::ir::shape::{broadcast_index_map, broadcast_shapes, Window2d};
use crate::ir::{numel, DType, RoundingMode, TensorValue};
use crate::qnn::fixed_point::{apply_fixed_point, rounding_div, FixedPointMultiplier};

/// Integer or f32 elements, widened for arithmetic.
enum Elems {
    Int(Vec<i64>),
    Float(Vec<f32>),
}

fn elems(t: &TensorValue) -> Elems {
    match t.as_f32() {
        Some(v) => Elems::Float(v.to_vec()),
        None => Elems::Int(t.to_i64().unwrap()),
    }
}

fn int_result(shape: Vec<usize>, dtype: DType, values: Vec<i64>, what: &str) -> Result<TensorValue> {
    if let Some(bad) = values.iter().find(|v| !dtype.contains(**v)) {
        return Err(Error::Overflow(format!(
            "{what} produced {bad}, outside the {dtype} range"
        )));
    }
    TensorValue::from_i64(shape, dtype, &values)
}

fn dims4(t: &TensorValue, what: &str) -> Result<[usize; 4]> {
    match *t.shape() {
        [a, b, c, d] => Ok([a, b, c, d]),
        _ => Err(Error::Tensor(format!("{what} must be rank 4, got {:?}", t.shape()))),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConvParams {
    pub window: Window2d,
    pub groups: usize,
    /// Value read for padded input positions.
    pub pad_value: f64,
}

fn conv2d_generic<T>(x: &[T], xs: [usize; 4], w: &[T], ws: [usize; 4], p: &ConvParams, pad: T, zero: T) -> (Vec<T>, [usize; 4])
where
    T: Copy + Add<Output = T> + Mul<Output = T>,
{
    let [n, c, h, wd] = xs;
    let [k, cg, r, s] = ws;
    let win = &p.window;
    let (oh, ow) = win.output_hw(h, wd).expect("checked by caller");
    let kg = k / p.groups;
    let mut out = Vec::with_capacity(n * k * oh * ow);
    for b in 0..n {
        for oc in 0..k {
            let g = oc / kg;
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = zero;
                    for ci in 0..cg {
                        let ic = g * cg + ci;
                        for ky in 0..r {
                            let iy = (y * win.strides[0] + ky * win.dilation[0]) as isize - win.padding[0] as isize;
                            for kx in 0..s {
                                let ix = (xo * win.strides[1] + kx * win.dilation[1]) as isize - win.padding[1] as isize;
                                let v = if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    pad
                                } else {
                                    x[((b * c + ic) * h + iy as usize) * wd + ix as usize]
                                };
                                acc = acc + v * w[((oc * cg + ci) * r + ky) * s + kx];
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    (out, [n, k, oh, ow])
}

/// NCHW × OIHW convolution. Integer operands accumulate exactly into i32.
pub fn conv2d_kernel(input: &TensorValue, weight: &TensorValue, p: &ConvParams) -> Result<TensorValue> {
    let xs = dims4(input, "conv2d input")?;
    let ws = dims4(weight, "conv2d weight")?;
    if p.groups == 0 || xs[1] % p.groups != 0 || ws[0] % p.groups != 0 || ws[1] * p.groups != xs[1] {
        return Err(Error::Tensor(format!(
            "channel mismatch: input {:?}, weight {:?}, groups {}",
            xs, ws, p.groups
        )));
    }
    let mut win = p.window;
    win.kernel = [ws[2], ws[3]];
    let p = ConvParams { window: win, ..*p };
    if win.output_hw(xs[2], xs[3]).is_none() {
        return Err(Error::Tensor("kernel larger than padded input".into()));
    }
    match (elems(input), elems(weight)) {
        (Elems::Int(x), Elems::Int(w)) => {
            let pad = p.pad_value as i64;
            let (out, shape) = conv2d_generic(&x, xs, &w, ws, &p, pad, 0i64);
            int_result(shape.to_vec(), DType::I32, out, "conv2d accumulation")
        }
        (Elems::Float(x), Elems::Float(w)) => {
            let (out, shape) = conv2d_generic(&x, xs, &w, ws, &p, p.pad_value as f32, 0f32);
            TensorValue::from_f32(shape.to_vec(), out)
        }
        _ => Err(Error::Tensor("conv2d operands mix integer and float".into())),
    }
}

/// `(B,K) × (N,K)ᵀ → (B,N)`.
pub fn matmul_kernel(a: &TensorValue, w: &TensorValue) -> Result<TensorValue> {
    let (&[b, k], &[n, k2]) = (a.shape(), w.shape()) else {
        return Err(Error::Tensor("matmul operands must be rank 2".into()));
    };
    if k != k2 {
        return Err(Error::Tensor(format!("matmul inner dims {k} vs {k2}")));
    }
    fn mm<T: Copy + Add<Output = T> + Mul<Output = T>>(x: &[T], w: &[T], b: usize, k: usize, n: usize, zero: T) -> Vec<T> {
        let mut out = Vec::with_capacity(b * n);
        for i in 0..b {
            for j in 0..n {
                let mut acc = zero;
                for t in 0..k {
                    acc = acc + x[i * k + t] * w[j * k + t];
                }
                out.push(acc);
            }
        }
        out
    }
    match (elems(a), elems(w)) {
        (Elems::Int(x), Elems::Int(wv)) => int_result(vec![b, n], DType::I32, mm(&x, &wv, b, k, n, 0), "matmul accumulation"),
        (Elems::Float(x), Elems::Float(wv)) => TensorValue::from_f32(vec![b, n], mm(&x, &wv, b, k, n, 0.0)),
        _ => Err(Error::Tensor("matmul operands mix integer and float".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Max,
    Avg,
}

/// Sliding-window reduction over the spatial axes of an NCHW tensor.
///
/// Padded positions contribute `pad_value` to sum and avg windows and are
/// skipped by max. Avg divides by the full window size; integer averages
/// round half away from zero.
pub fn windowed_reduce_kernel(input: &TensorValue, window: &Window2d, pad_value: f64, kind: ReduceKind) -> Result<TensorValue> {
    let [n, c, h, w] = dims4(input, "pool input")?;
    let (oh, ow) = window.output_hw(h, w).ok_or_else(|| {
        Error::Tensor(format!(
            "window {:?} larger than padded input {h}x{w}",
            window.kernel
        ))
    })?;
    let shape = vec![n, c, oh, ow];
    let count = window.window_size();
    // Visits one window, yielding Some(v) for real cells and None for padding.
    let for_window = |b: usize, ch: usize, y: usize, x: usize, f: &mut dyn FnMut(Option<usize>)| {
        for ky in 0..window.kernel[0] {
            let iy = (y * window.strides[0] + ky * window.dilation[0]) as isize - window.padding[0] as isize;
            for kx in 0..window.kernel[1] {
                let ix = (x * window.strides[1] + kx * window.dilation[1]) as isize - window.padding[1] as isize;
                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                    f(None);
                } else {
                    f(Some(((b * c + ch) * h + iy as usize) * w + ix as usize));
                }
            }
        }
    };
    match elems(input) {
        Elems::Int(v) => {
            let pad = pad_value as i64;
            let mut out = Vec::with_capacity(numel(&shape));
            for b in 0..n {
                for ch in 0..c {
                    for y in 0..oh {
                        for x in 0..ow {
                            let mut sum = 0i64;
                            let mut max: Option<i64> = None;
                            for_window(b, ch, y, x, &mut |idx| match idx {
                                Some(i) => {
                                    sum += v[i];
                                    max = Some(max.map_or(v[i], |m| m.max(v[i])));
                                }
                                None => sum += pad,
                            });
                            out.push(match kind {
                                ReduceKind::Sum => sum,
                                ReduceKind::Avg => rounding_div(sum, count as i64, RoundingMode::ToNearestAway),
                                ReduceKind::Max => max.unwrap_or(input.dtype().min_value()),
                            });
                        }
                    }
                }
            }
            let dtype = if kind == ReduceKind::Sum { DType::I32 } else { input.dtype() };
            int_result(shape, dtype, out, "windowed reduction")
        }
        Elems::Float(v) => {
            let pad = pad_value as f32;
            let mut out = Vec::with_capacity(numel(&shape));
            for b in 0..n {
                for ch in 0..c {
                    for y in 0..oh {
                        for x in 0..ow {
                            let mut sum = 0f32;
                            let mut max = f32::NEG_INFINITY;
                            for_window(b, ch, y, x, &mut |idx| match idx {
                                Some(i) => {
                                    sum += v[i];
                                    max = max.max(v[i]);
                                }
                                None => sum += pad,
                            });
                            out.push(match kind {
                                ReduceKind::Sum => sum,
                                ReduceKind::Avg => sum / count as f32,
                                ReduceKind::Max => max,
                            });
                        }
                    }
                }
            }
            TensorValue::from_f32(shape, out)
        }
    }
}

/// Sum over `axes` (sorted, unique). Integers accumulate into i32.
pub fn reduce_sum_kernel(x: &TensorValue, axes: &[usize], keepdims: bool) -> Result<TensorValue> {
    let shape = x.shape();
    let kept: Vec<usize> = shape
        .iter()
        .enumerate()
        .map(|(i, &d)| if axes.contains(&i) { 1 } else { d })
        .collect();
    let out_n = numel(&kept);
    let out_strides = crate::ir::shape::strides_of(&kept);
    // flat input index → flat output index
    let mut idx = vec![0usize; shape.len()];
    let mut targets = Vec::with_capacity(x.len());
    for _ in 0..x.len() {
        let mut flat = 0;
        for (d, &i) in idx.iter().enumerate() {
            if !axes.contains(&d) {
                flat += i * out_strides[d];
            }
        }
        targets.push(flat);
        for d in (0..shape.len()).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    let out_shape: Vec<usize> = if keepdims {
        kept
    } else {
        shape
            .iter()
            .enumerate()
            .filter(|(i, _)| !axes.contains(i))
            .map(|(_, &d)| d)
            .collect()
    };
    match elems(x) {
        Elems::Int(v) => {
            let mut acc = vec![0i64; out_n];
            for (val, t) in v.iter().zip(&targets) {
                acc[*t] += val;
            }
            int_result(out_shape, DType::I32, acc, "reduce_sum")
        }
        Elems::Float(v) => {
            let mut acc = vec![0f32; out_n];
            for (val, t) in v.iter().zip(&targets) {
                acc[*t] += val;
            }
            TensorValue::from_f32(out_shape, acc)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Subtract,
    Multiply,
    Divide(RoundingMode),
}

/// Broadcasting binary arithmetic on operands of one dtype.
pub fn binary_kernel(op: BinaryOp, a: &TensorValue, b: &TensorValue) -> Result<TensorValue> {
    if a.dtype() != b.dtype() {
        return Err(Error::Tensor(format!(
            "operand dtypes differ: {} vs {}",
            a.dtype(),
            b.dtype()
        )));
    }
    let shape = broadcast_shapes(a.shape(), b.shape()).ok_or_else(|| {
        Error::Tensor(format!("cannot broadcast {:?} with {:?}", a.shape(), b.shape()))
    })?;
    let ia = broadcast_index_map(a.shape(), &shape);
    let ib = broadcast_index_map(b.shape(), &shape);
    match (elems(a), elems(b)) {
        (Elems::Int(x), Elems::Int(y)) => {
            let mut out = Vec::with_capacity(ia.len());
            for (&i, &j) in ia.iter().zip(&ib) {
                let (p, q) = (x[i], y[j]);
                out.push(match op {
                    BinaryOp::Add => p + q,
                    BinaryOp::Subtract => p - q,
                    BinaryOp::Multiply => p.checked_mul(q).ok_or_else(|| Error::Overflow(format!("{p}·{q}")))?,
                    BinaryOp::Divide(mode) => {
                        if q == 0 {
                            return Err(Error::Tensor("integer division by zero".into()));
                        }
                        let (n, d) = if q < 0 { (-p, -q) } else { (p, q) };
                        rounding_div(n, d, mode)
                    }
                });
            }
            int_result(shape, a.dtype(), out, "integer arithmetic")
        }
        (Elems::Float(x), Elems::Float(y)) => {
            let out = ia
                .iter()
                .zip(&ib)
                .map(|(&i, &j)| match op {
                    BinaryOp::Add => x[i] + y[j],
                    BinaryOp::Subtract => x[i] - y[j],
                    BinaryOp::Multiply => x[i] * y[j],
                    BinaryOp::Divide(_) => x[i] / y[j],
                })
                .collect();
            TensorValue::from_f32(shape, out)
        }
        _ => unreachable!("dtypes checked equal"),
    }
}

/// Adds a 1-D bias along `axis`.
pub fn bias_add_kernel(x: &TensorValue, bias: &TensorValue, axis: usize) -> Result<TensorValue> {
    let rank = x.shape().len();
    if axis >= rank || bias.shape() != [x.shape()[axis]] {
        return Err(Error::Tensor(format!(
            "bias {:?} does not match axis {axis} of {:?}",
            bias.shape(),
            x.shape()
        )));
    }
    let mut bshape = vec![1; rank];
    bshape[axis] = x.shape()[axis];
    let b = bias.reshape(bshape)?;
    binary_kernel(BinaryOp::Add, x, &b)
}

pub fn clip_kernel(x: &TensorValue, a_min: f64, a_max: f64) -> Result<TensorValue> {
    match elems(x) {
        Elems::Int(v) => {
            let dt = x.dtype();
            let lo = dt.saturate(a_min.ceil().max(i64::MIN as f64) as i64);
            let hi = dt.saturate(a_max.floor().min(i64::MAX as f64) as i64);
            let out: Vec<i64> = v.into_iter().map(|e| e.max(lo).min(hi)).collect();
            TensorValue::from_i64(x.shape().to_vec(), dt, &out)
        }
        Elems::Float(v) => {
            let (lo, hi) = (a_min as f32, a_max as f32);
            TensorValue::from_f32(x.shape().to_vec(), v.into_iter().map(|e| e.max(lo).min(hi)).collect())
        }
    }
}

/// Dtype conversion. Integer narrowing saturates; float to integer
/// truncates toward zero and saturates (NaN becomes 0).
pub fn cast_kernel(x: &TensorValue, to: DType) -> Result<TensorValue> {
    let shape = x.shape().to_vec();
    match (elems(x), to) {
        (Elems::Int(v), DType::F32) => TensorValue::from_f32(shape, v.into_iter().map(|e| e as f32).collect()),
        (Elems::Int(v), _) => {
            let out: Vec<i64> = v.into_iter().map(|e| to.saturate(e)).collect();
            TensorValue::from_i64(shape, to, &out)
        }
        (Elems::Float(v), DType::F32) => TensorValue::from_f32(shape, v),
        (Elems::Float(v), _) => {
            let out: Vec<i64> = v.into_iter().map(|e| to.saturate(e as i64)).collect();
            TensorValue::from_i64(shape, to, &out)
        }
    }
}

pub fn relu_kernel(x: &TensorValue) -> Result<TensorValue> {
    match elems(x) {
        Elems::Int(v) => {
            let out: Vec<i64> = v.into_iter().map(|e| e.max(0)).collect();
            TensorValue::from_i64(x.shape().to_vec(), x.dtype(), &out)
        }
        Elems::Float(v) => TensorValue::from_f32(x.shape().to_vec(), v.into_iter().map(|e| e.max(0.0)).collect()),
    }
}

/// Round half away from zero.
pub fn round_kernel(x: &TensorValue) -> Result<TensorValue> {
    let v = x.as_f32().ok_or_else(|| Error::Tensor("round needs f32".into()))?;
    TensorValue::from_f32(x.shape().to_vec(), v.iter().map(|e| e.round()).collect())
}

/// Applies one fixed-point multiplier per slice along `axis` (or one for
/// the whole tensor when `axis` is `None`).
pub fn fixed_point_multiply_kernel(
    x: &TensorValue,
    fpms: &[FixedPointMultiplier],
    axis: Option<usize>,
    mode: RoundingMode,
) -> Result<TensorValue> {
    if x.dtype() != DType::I32 {
        return Err(Error::Tensor("fixed_point_multiply needs i32".into()));
    }
    let v = x.to_i64().unwrap();
    let shape = x.shape();
    let (extent, inner) = match axis {
        Some(a) => (shape[a], shape[a + 1..].iter().product::<usize>()),
        None => (1, 1),
    };
    if fpms.len() != extent {
        return Err(Error::Tensor(format!("{} multipliers for extent {extent}", fpms.len())));
    }
    let mut out = Vec::with_capacity(v.len());
    for (i, e) in v.into_iter().enumerate() {
        let ch = (i / inner) % extent;
        out.push(apply_fixed_point(e as i32, fpms[ch], mode)? as i64);
    }
    TensorValue::from_i64(shape.to_vec(), DType::I32, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], dt: DType, v: &[i64]) -> TensorValue {
        TensorValue::from_i64(shape.to_vec(), dt, v).unwrap()
    }

    fn conv_params(groups: usize) -> ConvParams {
        ConvParams {
            window: Window2d::unit([1, 1]),
            groups,
            pad_value: 0.0,
        }
    }

    #[test]
    fn all_ones_3x3() {
        let x = t(&[1, 1, 3, 3], DType::I8, &[1; 9]);
        let w = t(&[1, 1, 3, 3], DType::I8, &[1; 9]);
        let y = conv2d_kernel(&x, &w, &conv_params(1)).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.to_i64().unwrap(), vec![9]);
        assert_eq!(y.dtype(), DType::I32);
    }

    #[test]
    fn depthwise_doubles() {
        let x = t(&[1, 3, 2, 2], DType::I8, &[1, -2, 3, 4, 5, 6, -7, 8, 9, 10, 11, 12]);
        let w = t(&[3, 1, 1, 1], DType::I8, &[2, 2, 2]);
        let y = conv2d_kernel(&x, &w, &conv_params(3)).unwrap();
        let want: Vec<i64> = x.to_i64().unwrap().iter().map(|v| 2 * v).collect();
        assert_eq!(y.to_i64().unwrap(), want);
    }

    #[test]
    fn identity_1x1_upcasts() {
        let x = t(&[1, 1, 2, 2], DType::U8, &[0, 17, 255, 3]);
        let w = t(&[1, 1, 1, 1], DType::U8, &[1]);
        let y = conv2d_kernel(&x, &w, &conv_params(1)).unwrap();
        assert_eq!(y.dtype(), DType::I32);
        assert_eq!(y.to_i64().unwrap(), vec![0, 17, 255, 3]);
    }

    #[test]
    fn channel_mismatch() {
        let x = t(&[1, 2, 2, 2], DType::I8, &[0; 8]);
        let w = t(&[1, 3, 1, 1], DType::I8, &[0; 3]);
        assert!(conv2d_kernel(&x, &w, &conv_params(1)).is_err());
    }

    #[test]
    fn avg_pool_ties_away() {
        let x = t(&[1, 1, 2, 2], DType::I8, &[1, 2, 3, 4]);
        let y = windowed_reduce_kernel(&x, &Window2d::unit([2, 2]), 0.0, ReduceKind::Avg).unwrap();
        assert_eq!(y.to_i64().unwrap(), vec![3]);
    }

    #[test]
    fn max_over_constant() {
        let x = t(&[1, 1, 3, 3], DType::I8, &[-5; 9]);
        let y = windowed_reduce_kernel(&x, &Window2d::unit([2, 2]), 0.0, ReduceKind::Max).unwrap();
        assert_eq!(y.to_i64().unwrap(), vec![-5; 4]);
    }

    #[test]
    fn padded_sum_counts_pad_value() {
        // 1×1 input of value 1, pad 1, 2×2 window → four windows, each
        // containing the real cell once and three pad cells of 7.
        let x = t(&[1, 1, 1, 1], DType::I32, &[1]);
        let win = Window2d {
            kernel: [2, 2],
            strides: [1, 1],
            padding: [1, 1, 1, 1],
            dilation: [1, 1],
        };
        let y = windowed_reduce_kernel(&x, &win, 7.0, ReduceKind::Sum).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.to_i64().unwrap(), vec![22; 4]);
    }

    #[test]
    fn u8_all_max_no_overflow() {
        let x = t(&[1, 1, 3, 3], DType::U8, &[255; 9]);
        let s = windowed_reduce_kernel(&x, &Window2d::unit([3, 3]), 0.0, ReduceKind::Sum).unwrap();
        assert_eq!(s.to_i64().unwrap(), vec![2295]);
        let a = windowed_reduce_kernel(&x, &Window2d::unit([3, 3]), 0.0, ReduceKind::Avg).unwrap();
        assert_eq!(a.to_i64().unwrap(), vec![255]);
    }

    #[test]
    fn window_too_large() {
        let x = t(&[1, 1, 2, 2], DType::I8, &[0; 4]);
        assert!(windowed_reduce_kernel(&x, &Window2d::unit([3, 3]), 0.0, ReduceKind::Sum).is_err());
    }

    #[test]
    fn cast_saturates() {
        let x = t(&[3], DType::I32, &[300, -300, 5]);
        assert_eq!(cast_kernel(&x, DType::I8).unwrap().to_i64().unwrap(), vec![127, -128, 5]);
        assert_eq!(cast_kernel(&x, DType::U8).unwrap().to_i64().unwrap(), vec![255, 0, 5]);
    }

    #[test]
    fn multiply_and_overflow() {
        let a = t(&[2], DType::I32, &[2, 3]);
        let b = t(&[2], DType::I32, &[4, 5]);
        assert_eq!(binary_kernel(BinaryOp::Multiply, &a, &b).unwrap().to_i64().unwrap(), vec![8, 15]);
        let big = t(&[1], DType::I32, &[i32::MAX as i64]);
        assert!(binary_kernel(BinaryOp::Add, &big, &big).is_err());
    }

    #[test]
    fn bias_broadcasts_along_channels() {
        let x = t(&[1, 4, 2, 2], DType::I32, &[0; 16]);
        let b = t(&[4], DType::I32, &[1, 2, 3, 4]);
        let y = bias_add_kernel(&x, &b, 1).unwrap().to_i64().unwrap();
        assert_eq!(&y[0..4], &[1, 1, 1, 1]);
        assert_eq!(&y[12..16], &[4, 4, 4, 4]);
    }

    #[test]
    fn reduce_sum_axes() {
        let x = t(&[2, 3], DType::I8, &[1, 2, 3, 4, 5, 6]);
        assert_eq!(reduce_sum_kernel(&x, &[1], false).unwrap().to_i64().unwrap(), vec![6, 15]);
        let y = reduce_sum_kernel(&x, &[0], true).unwrap();
        assert_eq!(y.shape(), &[1, 3]);
        assert_eq!(y.to_i64().unwrap(), vec![5, 7, 9]);
    }

    #[test]
    fn divide_rounds_half_away() {
        let a = t(&[4], DType::I32, &[10, -10, 9, 7]);
        let b = t(&[], DType::I32, &[4]);
        let y = binary_kernel(BinaryOp::Divide(RoundingMode::ToNearestAway), &a, &b).unwrap();
        assert_eq!(y.to_i64().unwrap(), vec![3, -3, 2, 2]);
    }
}

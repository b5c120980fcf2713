#![allow(dead_code)]

use std::fs;
use std::path::PathBuf;

use num_bigint::BigInt;
use num_rational::BigRational;
use qnn_core::exec::TensorMap;
use qnn_core::frontend::load_tensor_file;
use qnn_core::ir::{AttrsBuilder, DType, Graph, GraphBuilder, QuantParams, RoundingMode, TensorValue};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct CorpusModel {
    pub name: String,
    pub model: Vec<u8>,
    pub inputs: TensorMap,
    pub golden_bytes: Vec<u8>,
    pub golden: TensorMap,
}

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

pub fn corpus() -> Vec<CorpusModel> {
    let dir = corpus_dir();
    let mut names: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .filter_map(|e| {
            let name = e.unwrap().file_name().into_string().unwrap();
            let stem = name.strip_suffix(".json")?;
            (!stem.contains('.')).then(|| stem.to_string())
        })
        .collect();
    names.sort();
    assert!(!names.is_empty(), "empty corpus");
    names
        .into_iter()
        .map(|name| {
            let model = fs::read(dir.join(format!("{name}.json"))).unwrap();
            let inputs = load_tensor_file(&fs::read(dir.join(format!("{name}.inputs.json"))).unwrap()).unwrap();
            let golden_bytes = fs::read(dir.join(format!("{name}.golden.json"))).unwrap();
            let golden = load_tensor_file(&golden_bytes).unwrap();
            CorpusModel { name, model, inputs, golden_bytes, golden }
        })
        .collect()
}

pub fn bind(name: &str, t: TensorValue) -> TensorMap {
    [(name.to_string(), t)].into_iter().collect()
}

/// `num/den` rounded to nearest with the given tie rule, exactly.
/// The denominator must be positive; the ratio need not be reduced.
pub fn round_rational(r: &BigRational, mode: RoundingMode) -> BigInt {
    let (num, den) = (r.numer(), r.denom());
    let f = r.floor().to_integer();
    // twice the remainder against the denominator: 2(num − f·den) ⋚ den
    let twice_rem: BigInt = (num - &f * den) * 2;
    match twice_rem.cmp(den) {
        std::cmp::Ordering::Less => f,
        std::cmp::Ordering::Greater => f + 1,
        std::cmp::Ordering::Equal => match mode {
            // a tie at +k.5 rounds up; at −k.5 (floor = −k−1) rounds down
            RoundingMode::ToNearestAway => {
                if num.sign() == num_bigint::Sign::Minus {
                    f
                } else {
                    f + 1
                }
            }
            RoundingMode::ToNearestEven => {
                if &f % 2 == BigInt::from(0) {
                    f
                } else {
                    f + 1
                }
            }
        },
    }
}

pub fn exact_f64(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

pub fn big_to_i64(b: &BigInt) -> i64 {
    i64::try_from(b.clone()).expect("fits i64")
}

#[derive(Debug, Clone)]
pub struct ConvCase {
    pub x: TensorValue,
    pub w: TensorValue,
    pub strides: [usize; 2],
    pub padding: [usize; 4],
    pub dilation: [usize; 2],
    pub groups: usize,
    pub zp_a: i32,
    pub zp_b: i32,
    pub weight_scales: Vec<f64>,
}

fn operand_range(dt: DType) -> (i64, i64) {
    match dt {
        DType::I16 => (-2000, 2000),
        _ => dt.int_range(),
    }
}

fn random_zero_point(rng: &mut ChaCha8Rng, dt: DType) -> i32 {
    match dt {
        DType::I16 => rng.gen_range(-1000..=1000),
        _ => {
            let (lo, hi) = dt.int_range();
            rng.gen_range(lo..=hi) as i32
        }
    }
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, dt: DType) -> TensorValue {
    let (lo, hi) = operand_range(dt);
    let n: usize = shape.iter().product();
    let v: Vec<i64> = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
    TensorValue::from_i64(shape, dt, &v).unwrap()
}

/// Shapes up to (2,4,8,8); strides {1,2}; pads {0,1}; dilations {1,2};
/// groups 1 or depthwise; i8/u8/i16 operands; symmetric, asymmetric
/// or per-channel weight scales.
pub fn random_conv_case(rng: &mut ChaCha8Rng) -> ConvCase {
    const DTYPES: [DType; 3] = [DType::I8, DType::U8, DType::I16];
    loop {
        let n = rng.gen_range(1..=2);
        let c = rng.gen_range(1..=4);
        let h = rng.gen_range(1..=8);
        let w = rng.gen_range(1..=8);
        let r = rng.gen_range(1..=3);
        let s = rng.gen_range(1..=3);
        let strides = [rng.gen_range(1..=2), rng.gen_range(1..=2)];
        let padding = [0; 4].map(|_| rng.gen_range(0..=1));
        let dilation = [rng.gen_range(1..=2), rng.gen_range(1..=2)];
        let depthwise = c > 1 && rng.gen_bool(0.3);
        let (k, cg, groups) = if depthwise { (c, 1, c) } else { (rng.gen_range(1..=4), c, 1) };
        let eff_h = dilation[0] * (r - 1) + 1;
        let eff_w = dilation[1] * (s - 1) + 1;
        if h + padding[0] + padding[2] < eff_h || w + padding[1] + padding[3] < eff_w {
            continue;
        }
        let dt_a = DTYPES[rng.gen_range(0..3)];
        let dt_b = DTYPES[rng.gen_range(0..3)];
        let (zp_a, zp_b) = match rng.gen_range(0..3) {
            0 => (0, 0),
            _ => (random_zero_point(rng, dt_a), random_zero_point(rng, dt_b)),
        };
        let weight_scales = if rng.gen_bool(0.4) {
            (0..k).map(|_| rng.gen_range(0.001..0.1)).collect()
        } else {
            vec![rng.gen_range(0.001..0.1)]
        };
        return ConvCase {
            x: random_tensor(rng, vec![n, c, h, w], dt_a),
            w: random_tensor(rng, vec![k, cg, r, s], dt_b),
            strides,
            padding,
            dilation,
            groups,
            zp_a,
            zp_b,
            weight_scales,
        };
    }
}

impl ConvCase {
    pub fn weight_qparams(&self) -> QuantParams {
        if self.weight_scales.len() > 1 {
            let k = self.weight_scales.len();
            QuantParams::per_channel(self.weight_scales.clone(), vec![self.zp_b; k], 0).unwrap()
        } else {
            QuantParams::per_tensor(self.weight_scales[0], self.zp_b).unwrap()
        }
    }

    /// input `x`, constant weight, one qnn.conv2d.
    pub fn graph(&self) -> Graph {
        let mut b = GraphBuilder::new();
        let x = b.input("x", self.x.shape().to_vec(), self.x.dtype()).unwrap();
        let w = b.constant(self.w.clone()).unwrap();
        let attrs = AttrsBuilder::new()
            .ints("strides", &self.strides.map(|v| v as i64))
            .ints("padding", &self.padding.map(|v| v as i64))
            .ints("dilation", &self.dilation.map(|v| v as i64))
            .int("groups", self.groups as i64)
            .quant("input_qparams", QuantParams::per_tensor(0.05, self.zp_a).unwrap())
            .quant("weight_qparams", self.weight_qparams())
            .build();
        let y = b.push("qnn.conv2d", vec![x, w], attrs).unwrap();
        b.finish(vec![y], vec!["y".into()]).unwrap()
    }

    /// Subtract zero points first, then convolve; padding is real zero.
    pub fn oracle(&self) -> (Vec<usize>, Vec<i64>) {
        let xs = self.x.shape();
        let ws = self.w.shape();
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (k, cg, r, s) = (ws[0], ws[1], ws[2], ws[3]);
        let [pt, pl, pb, pr] = self.padding;
        let oh = (h + pt + pb - self.dilation[0] * (r - 1) - 1) / self.strides[0] + 1;
        let ow = (w + pl + pr - self.dilation[1] * (s - 1) - 1) / self.strides[1] + 1;
        let xv = self.x.to_i64().unwrap();
        let wv = self.w.to_i64().unwrap();
        let k_per_group = k / self.groups;
        let mut out = Vec::with_capacity(n * k * oh * ow);
        for b in 0..n {
            for ko in 0..k {
                let g = ko / k_per_group;
                for y in 0..oh {
                    for xo in 0..ow {
                        let mut acc = 0i64;
                        for ci in 0..cg {
                            let cin = g * cg + ci;
                            for ry in 0..r {
                                for sx in 0..s {
                                    let iy = (y * self.strides[0] + ry * self.dilation[0]) as isize - pt as isize;
                                    let ix = (xo * self.strides[1] + sx * self.dilation[1]) as isize - pl as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    let a = xv[((b * c + cin) * h + iy as usize) * w + ix as usize] - self.zp_a as i64;
                                    let bw = wv[((ko * cg + ci) * r + ry) * s + sx] - self.zp_b as i64;
                                    acc += a * bw;
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
        (vec![n, k, oh, ow], out)
    }
}

mod common;

use common::{bind, big_to_i64, exact_f64, random_conv_case, random_tensor, round_rational};
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use qnn_core::exec::{reference_qnn_interpreter, run_graph, TensorMap};
use qnn_core::ir::{Attrs, AttrsBuilder, DType, Graph, GraphBuilder, QuantParams, RoundingMode, TensorValue};
use qnn_core::qnn::{canonicalize_pass, derive_fixed_point_multiplier, legalize_pass};
use qnn_core::targets::builtin_targets;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lowered(g: &Graph, inputs: &TensorMap) -> TensorValue {
    let c = canonicalize_pass(g).unwrap();
    assert_eq!(c.count_ops(|o| o.starts_with("qnn.")), 0);
    run_graph(&c, inputs).unwrap().remove(0)
}

fn oracle(g: &Graph, inputs: &TensorMap) -> TensorValue {
    reference_qnn_interpreter(g, inputs).unwrap().remove(0)
}

fn unary(x: &TensorValue, op: &str, attrs: Attrs) -> Graph {
    let mut b = GraphBuilder::new();
    let i = b.input("x", x.shape().to_vec(), x.dtype()).unwrap();
    let y = b.push(op, vec![i], attrs).unwrap();
    b.finish(vec![y], vec!["y".into()]).unwrap()
}

fn qp(s: f64, z: i32) -> QuantParams {
    QuantParams::per_tensor(s, z).unwrap()
}

#[test]
fn conv2d_lowering_equals_both_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..250 {
        let case = random_conv_case(&mut rng);
        let g = case.graph();
        let inputs = bind("x", case.x.clone());
        let got = lowered(&g, &inputs);
        let (shape, want) = case.oracle();
        assert_eq!(got.shape(), shape.as_slice());
        assert_eq!(got.to_i64().unwrap(), want, "{case:?}");
        assert_eq!(got, oracle(&g, &inputs));
    }
}

#[test]
fn dense_lowering_equals_subtract_first() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let (b_, k, n) = (rng.gen_range(1..=3), rng.gen_range(1..=9), rng.gen_range(1..=5));
        let dt_a = [DType::U8, DType::I8][rng.gen_range(0..2)];
        let dt_b = [DType::U8, DType::I8][rng.gen_range(0..2)];
        let x = random_tensor(&mut rng, vec![b_, k], dt_a);
        let w = random_tensor(&mut rng, vec![n, k], dt_b);
        let (zp_a, zp_b) = (rng.gen_range(-20..=120), rng.gen_range(-20..=120));
        let mut gb = GraphBuilder::new();
        let xi = gb.input("x", x.shape().to_vec(), dt_a).unwrap();
        let wc = gb.constant(w.clone()).unwrap();
        let attrs = AttrsBuilder::new().quant("input_qparams", qp(0.1, zp_a)).quant("weight_qparams", qp(0.2, zp_b)).build();
        let y = gb.push("qnn.dense", vec![xi, wc], attrs).unwrap();
        let g = gb.finish(vec![y], vec![]).unwrap();
        let inputs = bind("x", x.clone());
        let (xv, wv) = (x.to_i64().unwrap(), w.to_i64().unwrap());
        let want: Vec<i64> = (0..b_)
            .flat_map(|i| {
                let (xv, wv) = (&xv, &wv);
                (0..n).map(move |j| (0..k).map(|t| (xv[i * k + t] - zp_a as i64) * (wv[j * k + t] - zp_b as i64)).sum())
            })
            .collect();
        assert_eq!(lowered(&g, &inputs).to_i64().unwrap(), want);
    }
}

fn requant_graph(x: &TensorValue, in_q: QuantParams, out_q: QuantParams, out: DType, mode: RoundingMode) -> Graph {
    unary(
        x,
        "qnn.requantize",
        AttrsBuilder::new()
            .quant("input_qparams", in_q)
            .quant("output_qparams", out_q)
            .dtype("out_dtype", out)
            .rounding("rounding", mode)
            .build(),
    )
}

#[test]
fn requantize_lowering_equals_oracle_and_real_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for i in 0..200 {
        let mode = if i % 2 == 0 { RoundingMode::ToNearestAway } else { RoundingMode::ToNearestEven };
        let in_dt = [DType::I8, DType::U8, DType::I16, DType::I32][rng.gen_range(0..4)];
        let out_dt = [DType::I8, DType::U8, DType::I32][rng.gen_range(0..3)];
        let x = random_tensor(&mut rng, vec![2, 3, 4], in_dt);
        let per_channel = rng.gen_bool(0.3);
        let in_q = if per_channel {
            QuantParams::per_channel((0..3).map(|_| rng.gen_range(0.001..1.0)).collect(), vec![0; 3], 1).unwrap()
        } else {
            let (lo, hi) = operand_range_for_zp(in_dt);
            qp(rng.gen_range(0.001..1.0), rng.gen_range(lo..=hi))
        };
        let (olo, ohi) = if out_dt == DType::I32 { (-1000, 1000) } else { let r = out_dt.int_range(); (r.0 as i32, r.1 as i32) };
        // full-range i32 codes only fit when the ratio is at most 1
        let min_out = if in_dt == DType::I32 { in_q.scales.iter().cloned().fold(0.01, f64::max) } else { 0.01 };
        let out_q = qp(rng.gen_range(min_out..=2.0), rng.gen_range(olo..=ohi));
        let g = requant_graph(&x, in_q.clone(), out_q.clone(), out_dt, mode);
        let inputs = bind("x", x.clone());
        let got = lowered(&g, &inputs);
        assert_eq!(got, oracle(&g, &inputs));
        // real ratio: round(s_in/s_out · (q − zp_in)) + zp_out, clamped
        let xv = x.to_i64().unwrap();
        let (lo, hi) = out_dt.int_range();
        for (idx, (&q, &o)) in xv.iter().zip(&got.to_i64().unwrap()).enumerate() {
            let c = (idx / 4) % 3;
            let ratio = exact_f64(in_q.scale_at(c)) / exact_f64(out_q.scale());
            let real = ratio * BigRational::from_integer(BigInt::from(q - in_q.zero_point_at(c) as i64));
            let want = (big_to_i64(&round_rational(&real, mode)) + out_q.zero_point() as i64).clamp(lo, hi);
            assert!((o - want).abs() <= 1, "q={q} got {o} want {want}");
        }
    }
}

fn operand_range_for_zp(dt: DType) -> (i32, i32) {
    match dt {
        DType::I8 => (-128, 127),
        DType::U8 => (0, 255),
        _ => (-1000, 1000),
    }
}

#[test]
fn pools_lowering_equals_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for i in 0..200 {
        let dt = [DType::I8, DType::U8, DType::I16][i % 3];
        let (h, w) = (rng.gen_range(2..=6), rng.gen_range(2..=6));
        let x = random_tensor(&mut rng, vec![1, 2, h, w], dt);
        let (lo, hi) = operand_range_for_zp(dt);
        let attrs = AttrsBuilder::new()
            .ints("pool_size", &[2, 2])
            .ints("strides", &[rng.gen_range(1..=2), rng.gen_range(1..=2)])
            .ints("padding", &[0; 4].map(|_| rng.gen_range(0..=1)))
            .quant("qparams", qp(0.1, rng.gen_range(lo..=hi)))
            .build();
        for op in ["qnn.avg_pool2d", "qnn.max_pool2d"] {
            let g = unary(&x, op, attrs.clone());
            let inputs = bind("x", x.clone());
            assert_eq!(lowered(&g, &inputs), oracle(&g, &inputs), "{op}");
        }
    }
}

#[test]
fn add_lowering_equals_oracle_and_float_within_two_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for i in 0..200 {
        let mode = if i % 2 == 0 { RoundingMode::ToNearestAway } else { RoundingMode::ToNearestEven };
        let dt = [DType::I8, DType::U8][i % 2];
        let (lo, hi) = operand_range_for_zp(dt);
        let l = random_tensor(&mut rng, vec![2, 5], dt);
        let r = random_tensor(&mut rng, vec![5], dt);
        let (lq, rq, oq) = (
            qp(rng.gen_range(0.01..0.2), rng.gen_range(lo..=hi)),
            qp(rng.gen_range(0.01..0.2), rng.gen_range(lo..=hi)),
            qp(rng.gen_range(0.02..0.4), rng.gen_range(lo..=hi)),
        );
        let mut b = GraphBuilder::new();
        let li = b.input("l", vec![2, 5], dt).unwrap();
        let ri = b.input("r", vec![5], dt).unwrap();
        let attrs = AttrsBuilder::new()
            .quant("lhs_qparams", lq.clone())
            .quant("rhs_qparams", rq.clone())
            .quant("output_qparams", oq.clone())
            .dtype("out_dtype", dt)
            .rounding("rounding", mode)
            .build();
        let y = b.push("qnn.add", vec![li, ri], attrs).unwrap();
        let g = b.finish(vec![y], vec![]).unwrap();
        let inputs: TensorMap = [("l".to_string(), l.clone()), ("r".to_string(), r.clone())].into_iter().collect();
        let got = lowered(&g, &inputs);
        assert_eq!(got, oracle(&g, &inputs));
        let (lv, rv, gv) = (l.to_i64().unwrap(), r.to_i64().unwrap(), got.to_i64().unwrap());
        for (idx, &o) in gv.iter().enumerate() {
            let real = lq.scale() * (lv[idx] - lq.zero_point() as i64) as f64 + rq.scale() * (rv[idx % 5] - rq.zero_point() as i64) as f64;
            let want = ((real / oq.scale()).round() as i64 + oq.zero_point() as i64).clamp(lo as i64, hi as i64);
            assert!((o - want).abs() <= 2, "got {o} want {want}");
        }
    }
}

#[test]
fn quantize_dequantize_equal_oracle_and_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for i in 0..200 {
        let dt = [DType::I8, DType::U8, DType::I16][i % 3];
        let per_channel = i % 4 == 0;
        let (lo, hi) = operand_range_for_zp(dt);
        let q = if per_channel {
            QuantParams::per_channel((0..3).map(|_| rng.gen_range(0.001..0.5)).collect(), (0..3).map(|_| rng.gen_range(lo..=hi)).collect(), 1).unwrap()
        } else {
            qp(rng.gen_range(0.001..0.5), rng.gen_range(lo..=hi))
        };
        let xs: Vec<f32> = (0..24)
            .map(|j| match j {
                0 => 0.0,
                1 => f32::MAX,
                2 => -f32::MAX,
                _ => rng.gen_range(-300.0f32..300.0),
            })
            .collect();
        let x = TensorValue::from_f32(vec![2, 3, 4], xs.clone()).unwrap();
        let quant = unary(&x, "qnn.quantize", AttrsBuilder::new().quant("output_qparams", q.clone()).dtype("out_dtype", dt).build());
        let inputs = bind("x", x.clone());
        let codes = lowered(&quant, &inputs);
        assert_eq!(codes, oracle(&quant, &inputs));
        let deq = unary(&codes, "qnn.dequantize", AttrsBuilder::new().quant("input_qparams", q.clone()).build());
        let inputs = bind("x", codes.clone());
        let back = lowered(&deq, &inputs);
        assert_eq!(back, oracle(&deq, &inputs));
        let (dlo, dhi) = dt.int_range();
        for (j, (&v, &r)) in xs.iter().zip(back.as_f32().unwrap()).enumerate() {
            let c = if per_channel { (j / 4) % 3 } else { 0 };
            let (s, z) = (q.scale_at(c), q.zero_point_at(c) as f64);
            let clamped = (v as f64).clamp(s * (dlo as f64 - z), s * (dhi as f64 - z));
            let slack = 4.0 * f32::EPSILON as f64 * clamped.abs().max(s);
            assert!((r as f64 - clamped).abs() <= s / 2.0 + slack, "x={v} back={r} scale={s}");
        }
    }
}

#[test]
fn legalization_preserves_random_convs() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut checked = 0;
    while checked < 200 {
        let case = random_conv_case(&mut rng);
        if case.x.dtype() == DType::I16 || case.w.dtype() == DType::I16 {
            continue;
        }
        let g = case.graph();
        let inputs = bind("x", case.x.clone());
        let base = lowered(&g, &inputs);
        for t in builtin_targets() {
            let l = legalize_pass(&g, t).unwrap();
            assert_eq!(lowered(&l, &inputs), base, "{} {case:?}", t.name);
        }
        checked += 1;
    }
}

#[test]
fn symmetric_conv_lowers_to_one_convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for _ in 0..50 {
        let mut case = random_conv_case(&mut rng);
        case.zp_a = 0;
        case.zp_b = 0;
        let c = canonicalize_pass(&case.graph()).unwrap();
        assert_eq!(c.count_ops(|o| o == "conv2d"), 1);
        assert_eq!(c.count_ops(|o| !matches!(o, "conv2d" | "cast" | "input" | "constant")), 0);
    }
}

proptest! {
    #[test]
    fn multiplier_representation_bound(m in 1e-12f64..1e6) {
        let f = derive_fixed_point_multiplier(m).unwrap();
        prop_assert!((1 << 30..=i32::MAX).contains(&f.multiplier));
        let step = 2f64.powi(-31 - f.shift);
        prop_assert!((m - f.to_f64()).abs() <= step);
    }

    #[test]
    fn apply_matches_rational(x in any::<i32>(), m in 1e-6f64..1.0, even in any::<bool>()) {
        let mode = if even { RoundingMode::ToNearestEven } else { RoundingMode::ToNearestAway };
        let f = derive_fixed_point_multiplier(m).unwrap();
        let got = qnn_core::qnn::apply_fixed_point(x, f, mode).unwrap();
        let num = BigInt::from(x) * BigInt::from(f.multiplier);
        let r = if 31 + f.shift >= 0 {
            BigRational::new(num, BigInt::from(1) << (31 + f.shift) as usize)
        } else {
            BigRational::from_integer(num << (-(31 + f.shift)) as usize)
        };
        prop_assert_eq!(got as i64, big_to_i64(&round_rational(&r, mode)));
    }
}

#[test]
fn rational_rounding_oracle_examples() {
    let r = |n: i64, d: i64| BigRational::new_raw(BigInt::from(n), BigInt::from(d));
    let away = RoundingMode::ToNearestAway;
    let even = RoundingMode::ToNearestEven;
    for (n, d, a, e) in [(5, 2, 3, 2), (-5, 2, -3, -2), (7, 2, 4, 4), (-7, 2, -4, -4), (14, 6, 2, 2), (-14, 6, -2, -2), (10, 4, 3, 2), (9, 4, 2, 2), (-11, 4, -3, -3), (0, 3, 0, 0)] {
        assert_eq!(big_to_i64(&round_rational(&r(n, d), away)), a, "{n}/{d}");
        assert_eq!(big_to_i64(&round_rational(&r(n, d), even)), e, "{n}/{d}");
    }
}

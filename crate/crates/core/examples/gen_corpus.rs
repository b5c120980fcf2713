//! Regenerates the model corpus, seed inputs and golden outputs.
//!
//! Goldens come from the oracle interpreter on the parsed (unexpanded)
//! model, never from the compiler under test.
//!
//! cargo run -p qnn-core --example gen_corpus

use std::fs;
use std::path::Path;

use qnn_core::exec::{reference_qnn_interpreter, TensorMap};
use qnn_core::frontend::{parse_model_raw, save_tensor_file, Payload};
use qnn_core::ir::{DType, TensorValue};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

fn payload(t: &TensorValue) -> Value {
    serde_json::to_value(Payload::encode(t)).unwrap()
}

fn qp(scale: f32, zp: i32) -> Value {
    json!({"scales": [scale as f64], "zero_points": [zp]})
}

fn qp_channels(scales: &[f32]) -> Value {
    json!({"scales": scales.iter().map(|&s| s as f64).collect::<Vec<_>>(), "zero_points": vec![0; scales.len()], "axis": 0})
}

fn codes(rng: &mut ChaCha8Rng, dtype: DType, n: usize, lo: i64, hi: i64) -> Vec<i64> {
    let (dlo, dhi) = dtype.int_range();
    (0..n).map(|_| rng.gen_range(lo.max(dlo)..=hi.min(dhi))).collect()
}

/// A quantized weight constant with its real-valued reference.
fn weight(name: &str, rng: &mut ChaCha8Rng, shape: &[usize], dtype: DType, scales: &[f32], zp: i32, spread: i64) -> Value {
    let n: usize = shape.iter().product();
    let q = codes(rng, dtype, n, zp as i64 - spread, zp as i64 + spread);
    let per = n / shape[0];
    let real: Vec<f32> = q
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let s = if scales.len() == 1 { scales[0] } else { scales[i / per] };
            s * (c - zp as i64) as f32
        })
        .collect();
    json!({
        "name": name,
        "op": "constant",
        "constant": payload(&TensorValue::from_i64(shape.to_vec(), dtype, &q).unwrap()),
        "reference": payload(&TensorValue::from_f32(shape.to_vec(), real).unwrap()),
    })
}

fn bias(name: &str, rng: &mut ChaCha8Rng, k: usize, mag: i64) -> Value {
    let b: Vec<i64> = (0..k).map(|_| rng.gen_range(-mag..=mag)).collect();
    json!({"name": name, "op": "constant", "constant": payload(&TensorValue::from_i64(vec![k], DType::I32, &b).unwrap())})
}

fn input_tensor(rng: &mut ChaCha8Rng, shape: &[usize], dtype: DType) -> TensorValue {
    let n = shape.iter().product();
    if dtype == DType::F32 {
        let v = (0..n).map(|_| rng.gen_range(-4.0f32..4.0)).collect();
        return TensorValue::from_f32(shape.to_vec(), v).unwrap();
    }
    let (lo, hi) = dtype.int_range();
    TensorValue::from_i64(shape.to_vec(), dtype, &codes(rng, dtype, n, lo, hi)).unwrap()
}

struct Entry {
    name: &'static str,
    model: Value,
    inputs: TensorMap,
}

fn fig3(rng: &mut ChaCha8Rng) -> Entry {
    let (sa, sw) = (0.02f32, 0.005f32);
    let model = json!({
        "version": 1,
        "inputs": [{"name": "data", "shape": [1, 3, 8, 8], "dtype": "u8", "qparams": qp(sa, 128)}],
        "nodes": [
            weight("weight", rng, &[4, 3, 3, 3], DType::U8, &[sw], 121, 100),
            bias("bias", rng, 4, 2000),
            {"name": "conv", "op": "tflite.quantized_conv2d", "inputs": ["data", "weight", "bias"],
             "attrs": {"padding": [1, 1, 1, 1],
                       "input_qparams": qp(sa, 128), "weight_qparams": qp(sw, 121),
                       "output_qparams": qp(0.06, 128), "out_dtype": "u8",
                       "out_min": -20000, "out_max": 20000}}
        ],
        "outputs": ["conv"]
    });
    let inputs = [("data".to_string(), input_tensor(rng, &[1, 3, 8, 8], DType::U8))].into_iter().collect();
    Entry { name: "fig3_conv", model, inputs }
}

fn tiny_cnn(rng: &mut ChaCha8Rng) -> Entry {
    let s_in = 0.015f32;
    let s_w1 = 0.004f32;
    let s_a1 = 0.03f32;
    let s_w2: Vec<f32> = (0..16).map(|i| 0.002 + 0.0001 * i as f32).collect();
    let s_a2 = 0.05f32;
    let s_w3 = 0.003f32;
    let s_out = 0.08f32;
    let model = json!({
        "version": 1,
        "inputs": [{"name": "image", "shape": [1, 3, 16, 16], "dtype": "u8", "qparams": qp(s_in, 128)}],
        "nodes": [
            weight("conv1_w", rng, &[8, 3, 3, 3], DType::U8, &[s_w1], 130, 90),
            bias("conv1_b", rng, 8, 3000),
            {"name": "conv1", "op": "tflite.quantized_conv2d", "inputs": ["image", "conv1_w", "conv1_b"],
             "attrs": {"padding": [1, 1, 1, 1],
                       "input_qparams": qp(s_in, 128), "weight_qparams": qp(s_w1, 130),
                       "output_qparams": qp(s_a1, 0), "out_dtype": "u8", "out_min": 0}},
            {"name": "pool1", "op": "tflite.quantized_avg_pool", "inputs": ["conv1"],
             "attrs": {"pool_size": [2, 2], "strides": [2, 2], "qparams": qp(s_a1, 0)}},
            weight("conv2_w", rng, &[16, 8, 3, 3], DType::I8, &s_w2, 0, 100),
            bias("conv2_b", rng, 16, 2000),
            {"name": "conv2", "op": "tflite.quantized_conv2d", "inputs": ["pool1", "conv2_w", "conv2_b"],
             "attrs": {"padding": [1, 1, 1, 1], "strides": [2, 2],
                       "input_qparams": qp(s_a1, 0), "weight_qparams": qp_channels(&s_w2),
                       "output_qparams": qp(s_a2, 0), "out_dtype": "u8", "out_min": 0}},
            {"name": "pool2", "op": "tflite.quantized_max_pool", "inputs": ["conv2"],
             "attrs": {"pool_size": [2, 2], "strides": [2, 2], "qparams": qp(s_a2, 0)}},
            {"name": "flat", "op": "reshape", "inputs": ["pool2"], "attrs": {"newshape": [1, -1]}},
            weight("fc_w", rng, &[10, 64], DType::I8, &[s_w3], 3, 110),
            bias("fc_b", rng, 10, 1500),
            {"name": "fc", "op": "tflite.quantized_dense", "inputs": ["flat", "fc_w", "fc_b"],
             "attrs": {"input_qparams": qp(s_a2, 0), "weight_qparams": qp(s_w3, 3),
                       "output_qparams": qp(0.06, 128), "out_dtype": "u8"}},
            {"name": "logits", "op": "qnn.requantize", "inputs": ["fc"],
             "attrs": {"input_qparams": qp(0.06, 128), "output_qparams": qp(s_out, -3),
                       "out_dtype": "i8", "rounding": "away"}}
        ],
        "outputs": ["logits"]
    });
    let inputs = [("image".to_string(), input_tensor(rng, &[1, 3, 16, 16], DType::U8))].into_iter().collect();
    Entry { name: "tiny_cnn", model, inputs }
}

fn symmetric_conv(rng: &mut ChaCha8Rng) -> Entry {
    let (sa, sw) = (0.0625f32, 0.0078125f32);
    let model = json!({
        "version": 1,
        "inputs": [{"name": "x", "shape": [2, 4, 6, 6], "dtype": "i8", "qparams": qp(sa, 0)}],
        "nodes": [
            weight("w", rng, &[6, 4, 3, 3], DType::I8, &[sw], 0, 64),
            bias("b", rng, 6, 500),
            {"name": "y", "op": "tflite.quantized_conv2d", "inputs": ["x", "w", "b"],
             "attrs": {"input_qparams": qp(sa, 0), "weight_qparams": qp(sw, 0),
                       "output_qparams": qp(0.25, 0), "out_dtype": "i8"}}
        ],
        "outputs": ["y"]
    });
    let inputs = [("x".to_string(), input_tensor(rng, &[2, 4, 6, 6], DType::I8))].into_iter().collect();
    Entry { name: "symmetric_conv", model, inputs }
}

fn depthwise(rng: &mut ChaCha8Rng) -> Entry {
    let sw: Vec<f32> = vec![0.01, 0.02, 0.015, 0.03];
    let model = json!({
        "version": 1,
        "inputs": [{"name": "x", "shape": [1, 4, 9, 9], "dtype": "u8", "qparams": qp(0.04, 100)}],
        "nodes": [
            weight("dw", rng, &[4, 1, 3, 3], DType::I8, &sw, 0, 120),
            bias("db", rng, 4, 800),
            {"name": "y", "op": "tflite.quantized_conv2d", "inputs": ["x", "dw", "db"],
             "attrs": {"padding": [2, 2, 2, 2], "dilation": [2, 2], "groups": 4,
                       "input_qparams": qp(0.04, 100), "weight_qparams": qp_channels(&sw),
                       "output_qparams": qp(0.4, -10), "out_dtype": "i8"}}
        ],
        "outputs": ["y"]
    });
    let inputs = [("x".to_string(), input_tensor(rng, &[1, 4, 9, 9], DType::U8))].into_iter().collect();
    Entry { name: "depthwise_dilated", model, inputs }
}

fn residual_add(rng: &mut ChaCha8Rng) -> Entry {
    let model = json!({
        "version": 1,
        "inputs": [
            {"name": "a", "shape": [1, 4, 5, 5], "dtype": "i8", "qparams": qp(0.05, -3)},
            {"name": "b", "shape": [1, 4, 5, 5], "dtype": "i8", "qparams": qp(0.07, 5)}
        ],
        "nodes": [
            {"name": "sum", "op": "tflite.quantized_add", "inputs": ["a", "b"],
             "attrs": {"lhs_qparams": qp(0.05, -3), "rhs_qparams": qp(0.07, 5),
                       "output_qparams": qp(0.1, 2), "out_dtype": "i8", "rounding": "even"}},
            {"name": "pooled", "op": "tflite.quantized_avg_pool", "inputs": ["sum"],
             "attrs": {"pool_size": [3, 3], "padding": [1, 1, 1, 1], "qparams": qp(0.1, 2)}}
        ],
        "outputs": ["pooled"]
    });
    let inputs = [
        ("a".to_string(), input_tensor(rng, &[1, 4, 5, 5], DType::I8)),
        ("b".to_string(), input_tensor(rng, &[1, 4, 5, 5], DType::I8)),
    ]
    .into_iter()
    .collect();
    Entry { name: "residual_add", model, inputs }
}

fn dense_asym(rng: &mut ChaCha8Rng) -> Entry {
    let model = json!({
        "version": 1,
        "inputs": [{"name": "x", "shape": [3, 20], "dtype": "u8", "qparams": qp(0.1, 77)}],
        "nodes": [
            weight("w", rng, &[7, 20], DType::U8, &[0.02], 140, 100),
            bias("b", rng, 7, 4000),
            {"name": "y", "op": "tflite.quantized_dense", "inputs": ["x", "w", "b"],
             "attrs": {"input_qparams": qp(0.1, 77), "weight_qparams": qp(0.02, 140),
                       "output_qparams": qp(0.5, 120), "out_dtype": "u8",
                       "out_min": -30000, "out_max": 30000, "rounding": "even"}}
        ],
        "outputs": ["y"]
    });
    let inputs = [("x".to_string(), input_tensor(rng, &[3, 20], DType::U8))].into_iter().collect();
    Entry { name: "dense_asymmetric", model, inputs }
}

fn quantize_roundtrip(rng: &mut ChaCha8Rng) -> Entry {
    let model = json!({
        "version": 1,
        "inputs": [{"name": "x", "shape": [1, 2, 4, 4], "dtype": "f32"}],
        "nodes": [
            {"name": "q", "op": "qnn.quantize", "inputs": ["x"],
             "attrs": {"output_qparams": qp(0.03, 7), "out_dtype": "i8"}},
            {"name": "m", "op": "qnn.max_pool2d", "inputs": ["q"],
             "attrs": {"pool_size": [2, 2], "strides": [1, 1], "qparams": qp(0.03, 7)}},
            {"name": "y", "op": "qnn.dequantize", "inputs": ["m"],
             "attrs": {"input_qparams": qp(0.03, 7)}}
        ],
        "outputs": ["y", "q"]
    });
    let inputs = [("x".to_string(), input_tensor(rng, &[1, 2, 4, 4], DType::F32))].into_iter().collect();
    Entry { name: "quantize_roundtrip", model, inputs }
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus");
    fs::create_dir_all(&dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_2024);
    let entries = [
        fig3(&mut rng),
        tiny_cnn(&mut rng),
        symmetric_conv(&mut rng),
        depthwise(&mut rng),
        residual_add(&mut rng),
        dense_asym(&mut rng),
        quantize_roundtrip(&mut rng),
    ];
    for e in entries {
        let text = serde_json::to_string_pretty(&e.model).unwrap() + "\n";
        let g = parse_model_raw(text.as_bytes()).unwrap_or_else(|err| panic!("{}: {err}", e.name));
        let outs = reference_qnn_interpreter(&g, &e.inputs).unwrap_or_else(|err| panic!("{}: {err}", e.name));
        let golden: TensorMap = g.output_names.iter().cloned().zip(outs).collect();
        for (name, t) in &golden {
            if let Some(v) = t.to_i64() {
                let (lo, hi) = t.dtype().int_range();
                let sat = v.iter().filter(|&&x| x == lo || x == hi).count();
                let distinct = v.iter().collect::<std::collections::BTreeSet<_>>().len();
                println!("{}/{name}: {} values, {distinct} distinct, {sat} saturated", e.name, v.len());
            }
        }
        fs::write(dir.join(format!("{}.json", e.name)), text).unwrap();
        fs::write(dir.join(format!("{}.inputs.json", e.name)), save_tensor_file(&e.inputs)).unwrap();
        fs::write(dir.join(format!("{}.golden.json", e.name)), save_tensor_file(&golden)).unwrap();
    }
}

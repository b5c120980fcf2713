//! Textual IR dump: `%id = op(%a, %b) {k=v, ...} : (shape, dtype)`.

use std::fmt::Write;

use sha2::{Digest, Sha256};

use crate::ir::graph::fmt_shape;
use crate::ir::{AttrValue, Buffer, Graph, QuantParams, TensorValue};

fn fmt_f64_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", items.join(","))
}

fn fmt_list<T: ToString>(v: &[T]) -> String {
    let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", items.join(","))
}

fn fmt_quant(q: &QuantParams) -> String {
    let mut s = format!(
        "qp(scales={}, zero_points={}",
        fmt_f64_list(&q.scales),
        fmt_list(&q.zero_points)
    );
    if let Some(axis) = q.axis {
        let _ = write!(s, ", axis={axis}");
    }
    s.push(')');
    s
}

fn fmt_tensor(t: &TensorValue) -> String {
    let head = format!("tensor<{}{}>", t.dtype(), fmt_shape(t.shape()));
    if t.len() <= 16 {
        let body = match t.data() {
            Buffer::F32(v) => {
                let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
                format!("[{}]", items.join(","))
            }
            _ => fmt_list(&t.to_i64().unwrap()),
        };
        format!("{head}{body}")
    } else {
        let digest = Sha256::digest(t.to_le_bytes());
        let hex: String = digest[..4].iter().map(|b| format!("{b:02x}")).collect();
        format!("{head}#{hex}")
    }
}

pub fn fmt_attr(v: &AttrValue) -> String {
    match v {
        AttrValue::Int(i) => i.to_string(),
        AttrValue::Float(f) => format!("{f:?}"),
        AttrValue::Str(s) => format!("{s:?}"),
        AttrValue::Ints(v) => fmt_list(v),
        AttrValue::DType(d) => d.to_string(),
        AttrValue::Quant(q) => fmt_quant(q),
        AttrValue::Rounding(r) => r.to_string(),
        AttrValue::Tensor(t) => fmt_tensor(t),
    }
}

/// Deterministic dump of `g`, one node per line, followed by the outputs.
/// Fused nodes carry a trailing `// region N` comment.
pub fn dump(g: &Graph) -> String {
    let mut out = String::new();
    for n in &g.nodes {
        let args: Vec<String> = n.inputs.iter().map(|e| e.to_string()).collect();
        let _ = write!(out, "%{} = {}({})", n.id, n.op, args.join(", "));
        if !n.attrs.is_empty() {
            let attrs: Vec<String> = n
                .attrs
                .iter()
                .map(|(k, v)| format!("{k}={}", fmt_attr(v)))
                .collect();
            let _ = write!(out, " {{{}}}", attrs.join(", "));
        }
        let types: Vec<String> = n.out_types.iter().map(|t| t.to_string()).collect();
        let _ = write!(out, " : {}", types.join(", "));
        if let Some(r) = g.region_of(n.id) {
            let role = if g.regions[r].anchor == n.id { "anchor" } else { "follower" };
            let _ = write!(out, "  // region {r} {role}");
        }
        out.push('\n');
    }
    let outs: Vec<String> = g
        .outputs
        .iter()
        .zip(&g.output_names)
        .map(|(e, name)| format!("{e} as {name:?}"))
        .collect();
    let _ = writeln!(out, "return({})", outs.join(", "));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{AttrsBuilder, DType, GraphBuilder};

    #[test]
    fn dump_format() {
        let mut b = GraphBuilder::new();
        let x = b.input("x", vec![1, 2], DType::I32).unwrap();
        let c = b.const_i32(3).unwrap();
        let y = b.push("add", vec![x, c], AttrsBuilder::new().build()).unwrap();
        let z = b
            .push(
                "clip",
                vec![y],
                AttrsBuilder::new().float("a_min", -1.0).float("a_max", 5.0).build(),
            )
            .unwrap();
        let g = b.finish(vec![z], vec!["out".into()]).unwrap();
        let text = dump(&g);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            r#"%0 = input() {dtype=i32, name="x", shape=[1,2]} : ([1,2], i32)"#
        );
        assert_eq!(lines[1], "%1 = constant() {value=tensor<i32[]>[3]} : ([], i32)");
        assert_eq!(lines[2], "%2 = add(%0, %1) : ([1,2], i32)");
        assert_eq!(lines[3], "%3 = clip(%2) {a_max=5.0, a_min=-1.0} : ([1,2], i32)");
        assert_eq!(lines[4], r#"return(%3 as "out")"#);
    }
}

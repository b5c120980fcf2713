use std::collections::HashMap;

use crate::error::Result;
use crate::exec::eval_node;
use crate::ir::{rewrite, AttrValue, Attrs, Graph, NodeId, TensorValue};

/// Replaces every base-op node whose operands are all constants with the
/// constant it evaluates to. Nodes keep their ids. QNN ops are left alone.
pub fn fold_constants(g: &Graph) -> Result<Graph> {
    let mut values: HashMap<NodeId, TensorValue> = HashMap::new();
    rewrite(g, |b, node, inputs| {
        if node.is_constant() {
            values.insert(node.id, node.tensor("value")?.clone());
            return Ok(None);
        }
        if node.is_input() || node.is_qnn() || inputs.is_empty() {
            return Ok(None);
        }
        let Some(args) = inputs.iter().map(|e| values.get(&e.node)).collect::<Option<Vec<_>>>() else {
            return Ok(None);
        };
        let value = eval_node(node, &args)?;
        let mut attrs = Attrs::new();
        attrs.insert("value".into(), AttrValue::Tensor(value.clone()));
        let e = b.push_with_id(node.id, "constant", vec![], attrs)?;
        values.insert(node.id, value);
        Ok(Some(e))
    })
}

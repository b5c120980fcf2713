use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::TensorMap;
use crate::frontend::model::{json_error, Payload};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorFile {
    pub version: u32,
    pub tensors: BTreeMap<String, Payload>,
}

pub fn load_tensor_file(bytes: &[u8]) -> Result<TensorMap> {
    let file: TensorFile = serde_json::from_slice(bytes).map_err(json_error)?;
    if file.version != 1 {
        return Err(Error::Model {
            node: String::new(),
            msg: format!("unsupported tensor file version {}", file.version),
        });
    }
    file.tensors
        .into_iter()
        .map(|(name, p)| {
            let t = p.decode().map_err(|msg| Error::Model { node: name.clone(), msg })?;
            Ok((name, t))
        })
        .collect()
}

pub fn save_tensor_file(tensors: &TensorMap) -> Vec<u8> {
    let file = TensorFile {
        version: 1,
        tensors: tensors.iter().map(|(k, v)| (k.clone(), Payload::encode(v))).collect(),
    };
    let mut out = serde_json::to_vec_pretty(&file).expect("tensor file serializes");
    out.push(b'\n');
    out
}

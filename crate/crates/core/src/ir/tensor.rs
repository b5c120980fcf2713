use std::fmt;

use crate::error::{Error, Result};
use crate::ir::DType;

/// Typed flat storage. The variant fixes the element type, so a buffer can
/// never hold values outside its dtype.
#[derive(Clone)]
pub enum Buffer {
    I8(Vec<i8>),
    U8(Vec<u8>),
    I16(Vec<i16>),
    I32(Vec<i32>),
    F32(Vec<f32>),
}

impl Buffer {
    pub fn dtype(&self) -> DType {
        match self {
            Buffer::I8(_) => DType::I8,
            Buffer::U8(_) => DType::U8,
            Buffer::I16(_) => DType::I16,
            Buffer::I32(_) => DType::I32,
            Buffer::F32(_) => DType::F32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Buffer::I8(v) => v.len(),
            Buffer::U8(v) => v.len(),
            Buffer::I16(v) => v.len(),
            Buffer::I32(v) => v.len(),
            Buffer::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A dense row-major tensor.
#[derive(Clone)]
pub struct TensorValue {
    shape: Vec<usize>,
    data: Buffer,
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl TensorValue {
    pub fn new(shape: Vec<usize>, data: Buffer) -> Result<Self> {
        if numel(&shape) != data.len() {
            return Err(Error::Tensor(format!(
                "shape {:?} needs {} elements, buffer has {}",
                shape,
                numel(&shape),
                data.len()
            )));
        }
        Ok(TensorValue { shape, data })
    }

    /// Builds an integer tensor from wide values, rejecting any value that
    /// does not fit `dtype`.
    pub fn from_i64(shape: Vec<usize>, dtype: DType, values: &[i64]) -> Result<Self> {
        if dtype.is_float() {
            return Err(Error::Tensor("from_i64 needs an integer dtype".into()));
        }
        if let Some(bad) = values.iter().find(|v| !dtype.contains(**v)) {
            return Err(Error::Tensor(format!(
                "value {bad} is not representable as {dtype}"
            )));
        }
        let data = match dtype {
            DType::I8 => Buffer::I8(values.iter().map(|&v| v as i8).collect()),
            DType::U8 => Buffer::U8(values.iter().map(|&v| v as u8).collect()),
            DType::I16 => Buffer::I16(values.iter().map(|&v| v as i16).collect()),
            DType::I32 => Buffer::I32(values.iter().map(|&v| v as i32).collect()),
            DType::F32 => unreachable!(),
        };
        TensorValue::new(shape, data)
    }

    pub fn from_f32(shape: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        TensorValue::new(shape, Buffer::F32(values))
    }

    pub fn scalar_i32(v: i32) -> Self {
        TensorValue {
            shape: vec![],
            data: Buffer::I32(vec![v]),
        }
    }

    pub fn zeros(shape: Vec<usize>, dtype: DType) -> Self {
        let n = numel(&shape);
        let data = match dtype {
            DType::I8 => Buffer::I8(vec![0; n]),
            DType::U8 => Buffer::U8(vec![0; n]),
            DType::I16 => Buffer::I16(vec![0; n]),
            DType::I32 => Buffer::I32(vec![0; n]),
            DType::F32 => Buffer::F32(vec![0.0; n]),
        };
        TensorValue { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &Buffer {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn size_bytes(&self) -> usize {
        self.len() * self.dtype().size_bytes()
    }

    /// Integer elements widened to i64; `None` for float tensors.
    pub fn to_i64(&self) -> Option<Vec<i64>> {
        Some(match &self.data {
            Buffer::I8(v) => v.iter().map(|&x| x as i64).collect(),
            Buffer::U8(v) => v.iter().map(|&x| x as i64).collect(),
            Buffer::I16(v) => v.iter().map(|&x| x as i64).collect(),
            Buffer::I32(v) => v.iter().map(|&x| x as i64).collect(),
            Buffer::F32(_) => return None,
        })
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            Buffer::F32(v) => Some(v),
            _ => None,
        }
    }

    /// Integer or float elements as f64 (exact for every dtype).
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            Buffer::F32(v) => v.iter().map(|&x| x as f64).collect(),
            _ => self
                .to_i64()
                .unwrap()
                .into_iter()
                .map(|x| x as f64)
                .collect(),
        }
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        TensorValue::new(shape, self.data.clone())
    }

    /// Little-endian row-major raw bytes.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        match &self.data {
            Buffer::I8(v) => v.iter().map(|&x| x as u8).collect(),
            Buffer::U8(v) => v.clone(),
            Buffer::I16(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Buffer::I32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Buffer::F32(v) => v.iter().flat_map(|x| x.to_bits().to_le_bytes()).collect(),
        }
    }

    pub fn from_le_bytes(shape: Vec<usize>, dtype: DType, bytes: &[u8]) -> Result<Self> {
        let n = numel(&shape);
        let want = n * dtype.size_bytes();
        if bytes.len() != want {
            return Err(Error::Tensor(format!(
                "{dtype} tensor of shape {shape:?} needs {want} bytes, payload has {}",
                bytes.len()
            )));
        }
        let data = match dtype {
            DType::I8 => Buffer::I8(bytes.iter().map(|&b| b as i8).collect()),
            DType::U8 => Buffer::U8(bytes.to_vec()),
            DType::I16 => Buffer::I16(
                bytes
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]))
                    .collect(),
            ),
            DType::I32 => Buffer::I32(
                bytes
                    .chunks_exact(4)
                    .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
            DType::F32 => Buffer::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_bits(u32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                    .collect(),
            ),
        };
        TensorValue::new(shape, data)
    }
}

/// Equality is bitwise: NaN payloads compare equal to themselves.
impl PartialEq for TensorValue {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self.dtype() == other.dtype()
            && self.to_le_bytes() == other.to_le_bytes()
    }
}

impl Eq for TensorValue {}

impl fmt::Debug for TensorValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TensorValue<{}{:?}>", self.dtype(), self.shape)?;
        if self.len() <= 32 {
            match &self.data {
                Buffer::F32(v) => write!(f, "{v:?}")?,
                _ => write!(f, "{:?}", self.to_i64().unwrap())?,
            }
        }
        Ok(())
    }
}

//! Shape arithmetic shared by type inference and the kernels.

use crate::error::{Error, Result};
use crate::ir::Node;

/// Right-aligned broadcasting with size-1 expansion.
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Row-major strides of `shape`.
pub fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// For each flat index of `out_shape`, the flat index into a tensor of
/// `in_shape` that broadcasts onto it.
pub fn broadcast_index_map(in_shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let offset = out_shape.len() - in_shape.len();
    let in_strides = strides_of(in_shape);
    let n: usize = out_shape.iter().product();
    let mut map = Vec::with_capacity(n);
    let mut idx = vec![0usize; out_shape.len()];
    for _ in 0..n {
        let mut flat = 0;
        for (d, &i) in idx.iter().enumerate().skip(offset) {
            let k = d - offset;
            if in_shape[k] != 1 {
                flat += i * in_strides[k];
            }
        }
        map.push(flat);
        for d in (0..out_shape.len()).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    map
}

/// Geometry of a 2-D sliding window over an NCHW tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window2d {
    pub kernel: [usize; 2],
    pub strides: [usize; 2],
    /// top, left, bottom, right
    pub padding: [usize; 4],
    pub dilation: [usize; 2],
}

impl Window2d {
    pub fn unit(kernel: [usize; 2]) -> Self {
        Window2d {
            kernel,
            strides: [1, 1],
            padding: [0; 4],
            dilation: [1, 1],
        }
    }

    /// Reads `strides`, `padding` and `dilation` from a node.
    pub fn from_node(node: &Node, kernel: [usize; 2]) -> Result<Self> {
        let strides = node.usizes_or("strides", 2, 1)?;
        let dilation = node.usizes_or("dilation", 2, 1)?;
        let padding = node.usizes_or("padding", 4, 0)?;
        if strides.contains(&0) || dilation.contains(&0) {
            return Err(Error::attr(node.id, "strides and dilation must be positive"));
        }
        Ok(Window2d {
            kernel,
            strides: [strides[0], strides[1]],
            padding: [padding[0], padding[1], padding[2], padding[3]],
            dilation: [dilation[0], dilation[1]],
        })
    }

    pub fn effective_kernel(&self) -> [usize; 2] {
        [
            self.dilation[0] * (self.kernel[0] - 1) + 1,
            self.dilation[1] * (self.kernel[1] - 1) + 1,
        ]
    }

    /// Output spatial extent, or `None` if the window does not fit.
    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        if self.kernel.contains(&0) {
            return None;
        }
        let [eh, ew] = self.effective_kernel();
        let ph = h + self.padding[0] + self.padding[2];
        let pw = w + self.padding[1] + self.padding[3];
        if eh > ph || ew > pw {
            return None;
        }
        Some(((ph - eh) / self.strides[0] + 1, (pw - ew) / self.strides[1] + 1))
    }

    pub fn window_size(&self) -> usize {
        self.kernel[0] * self.kernel[1]
    }
}

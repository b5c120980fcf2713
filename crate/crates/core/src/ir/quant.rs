use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine quantization parameters: `real = scale * (q - zero_point)`.
///
/// Per-tensor parameters carry one scale and one zero point and no axis.
/// Per-channel parameters carry one entry per slice along `axis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub scales: Vec<f64>,
    pub zero_points: Vec<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<usize>,
}

impl QuantParams {
    pub fn per_tensor(scale: f64, zero_point: i32) -> Result<Self> {
        let q = QuantParams {
            scales: vec![scale],
            zero_points: vec![zero_point],
            axis: None,
        };
        q.check()?;
        Ok(q)
    }

    pub fn per_channel(scales: Vec<f64>, zero_points: Vec<i32>, axis: usize) -> Result<Self> {
        let q = QuantParams {
            scales,
            zero_points,
            axis: Some(axis),
        };
        q.check()?;
        Ok(q)
    }

    /// Structural invariants that do not depend on the tensor shape.
    pub fn check(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::Quant("no scales".into()));
        }
        if self.scales.len() != self.zero_points.len() {
            return Err(Error::Quant(format!(
                "{} scales but {} zero points",
                self.scales.len(),
                self.zero_points.len()
            )));
        }
        if self.axis.is_none() && self.scales.len() != 1 {
            return Err(Error::Quant(format!(
                "per-tensor parameters must have length 1, got {}",
                self.scales.len()
            )));
        }
        if let Some(s) = self.scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::Quant(format!("scale {s} is not positive and finite")));
        }
        Ok(())
    }

    /// Checks the channel count against a tensor shape.
    pub fn check_shape(&self, shape: &[usize]) -> Result<()> {
        self.check()?;
        if let Some(axis) = self.axis {
            let extent = *shape.get(axis).ok_or_else(|| {
                Error::Quant(format!("axis {axis} out of range for shape {shape:?}"))
            })?;
            if extent != self.scales.len() {
                return Err(Error::Quant(format!(
                    "{} per-channel entries for extent {extent} along axis {axis}",
                    self.scales.len()
                )));
            }
        }
        Ok(())
    }

    pub fn is_per_channel(&self) -> bool {
        self.axis.is_some()
    }

    pub fn is_symmetric(&self) -> bool {
        self.zero_points.iter().all(|&z| z == 0)
    }

    pub fn scale(&self) -> f64 {
        self.scales[0]
    }

    pub fn zero_point(&self) -> i32 {
        self.zero_points[0]
    }

    /// Single zero point shared by every channel, if there is one.
    pub fn uniform_zero_point(&self) -> Option<i32> {
        let z = self.zero_points[0];
        self.zero_points.iter().all(|&x| x == z).then_some(z)
    }

    pub fn with_zero_point(&self, zp: i32) -> Self {
        QuantParams {
            scales: self.scales.clone(),
            zero_points: vec![zp; self.zero_points.len()],
            axis: self.axis,
        }
    }

    /// Scale of channel `c` (per-tensor parameters ignore `c`).
    pub fn scale_at(&self, c: usize) -> f64 {
        if self.axis.is_some() {
            self.scales[c]
        } else {
            self.scales[0]
        }
    }

    pub fn zero_point_at(&self, c: usize) -> i32 {
        if self.axis.is_some() {
            self.zero_points[c]
        } else {
            self.zero_points[0]
        }
    }
}

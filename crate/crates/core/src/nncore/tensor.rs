use crate::error::{MixpertError, Result};

/// Dense row-major f32 tensor with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    grad: Option<Vec<f32>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(MixpertError::Shape(format!(
                "shape {:?} expects {} elements, got {}",
                shape,
                expect,
                data.len()
            )));
        }
        if shape.iter().any(|&e| e == 0) {
            return Err(MixpertError::Shape(format!(
                "zero extent in shape {shape:?}"
            )));
        }
        Ok(Self {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
            grad: None,
        }
    }

    pub fn scalar(v: f32) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn grad(&self) -> Option<&[f32]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, g: Vec<f32>) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(MixpertError::Shape(format!(
                "grad length {} does not match tensor length {}",
                g.len(),
                self.data.len()
            )));
        }
        self.grad = Some(g);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Errors if any element is NaN or infinite.
    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(MixpertError::NonFinite(context.to_string()))
        }
    }
}

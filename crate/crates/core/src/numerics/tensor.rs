use crate::error::{Error, Result};

use super::Real;

/// Dense row-major array with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<R = f32> {
    shape: Vec<usize>,
    data: Vec<R>,
    requires_grad: bool,
    grad: Option<Vec<R>>,
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::Dimension("shape has no axes".into()));
    }
    if let Some(axis) = shape.iter().position(|&d| d == 0) {
        return Err(Error::Dimension(format!(
            "axis {axis} of shape {shape:?} has zero extent"
        )));
    }
    Ok(shape.iter().product())
}

impl<R: Real> Tensor<R> {
    pub fn new(shape: Vec<usize>, data: Vec<R>) -> Result<Self> {
        let numel = check_shape(&shape)?;
        if numel != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} holds {numel} values but {} were given",
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let numel = check_shape(&shape)?;
        Self::new(shape, vec![R::zero(); numel])
    }

    pub fn full(shape: Vec<usize>, value: R) -> Result<Self> {
        let numel = check_shape(&shape)?;
        Self::new(shape, vec![value; numel])
    }

    pub fn scalar(value: R) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    /// 1-D tensor over `values`.
    pub fn vector(values: Vec<R>) -> Result<Self> {
        Self::new(vec![values.len()], values)
    }

    pub fn from_rows(rows: &[Vec<R>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != width) {
            return Err(Error::Dimension(format!(
                "row {bad} has width {} but row 0 has width {width}",
                rows[bad].len()
            )));
        }
        Self::new(vec![rows.len(), width], rows.concat())
    }

    pub fn with_requires_grad(mut self, requires_grad: bool) -> Self {
        self.requires_grad = requires_grad;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<R> {
        self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[R]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<R>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::Dimension(format!(
                "gradient of length {} for tensor of {} values",
                grad.len(),
                self.data.len()
            )));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let numel = check_shape(&shape)?;
        if numel != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Converts element type; gradients are dropped.
    pub fn cast<S: Real>(&self) -> Tensor<S> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| S::of(v.as_f64())).collect(),
            requires_grad: self.requires_grad,
            grad: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
            && self
                .grad
                .as_ref()
                .is_none_or(|g| g.iter().all(|v| v.is_finite()))
    }

    /// Number of rows when viewed as `[rows, last_axis]`.
    pub fn rows(&self) -> usize {
        self.data.len() / self.last_dim()
    }

    pub fn last_dim(&self) -> usize {
        *self.shape.last().expect("shape is never empty")
    }

    pub fn item(&self) -> Result<R> {
        if self.data.len() != 1 {
            return Err(Error::Contract(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_values() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            Tensor::<f32>::zeros(vec![2, 0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn grad_length_is_checked() {
        let mut t = Tensor::<f64>::zeros(vec![3]).unwrap();
        assert!(t.set_grad(vec![0.0; 2]).is_err());
        t.set_grad(vec![1.0; 3]).unwrap();
        assert_eq!(t.grad(), Some(&[1.0, 1.0, 1.0][..]));
    }

    #[test]
    fn cast_round_trips_f32_through_f64() {
        let t = Tensor::<f32>::new(vec![3], vec![0.1, -2.5, 1e-7]).unwrap();
        let back: Tensor<f32> = t.cast::<f64>().cast();
        assert_eq!(t, back);
    }
}

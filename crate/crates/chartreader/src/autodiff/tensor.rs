//! Dense row-major tensors.

use super::real::Real;

/// A dense tensor: a shape and a flat row-major buffer.
///
/// Invariant: `shape.iter().product() == data.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F: Real> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(
            n,
            data.len(),
            "tensor shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![F::zero(); n],
        }
    }

    pub fn filled(shape: Vec<usize>, v: F) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![v; n],
        }
    }

    pub fn scalar(v: F) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn from_vec(data: Vec<F>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    /// Reinterpret with a new shape of equal element count.
    pub fn reshaped(mut self, shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(n, self.data.len(), "reshape to {:?} changes element count", shape);
        self.shape = shape;
        self
    }

    /// Convert element type (used to lift f32 checkpoints into f64 graphs).
    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| G::c(v.as_f64())).collect(),
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, F> {
        self.data.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_product_matches_len() {
        let t = Tensor::<f64>::zeros(vec![2, 3, 4]);
        assert_eq!(t.len(), 24);
        assert_eq!(t.shape(), &[2, 3, 4]);
    }

    #[test]
    #[should_panic]
    fn mismatched_shape_panics() {
        let _ = Tensor::new(vec![2, 2], vec![1.0f32, 2.0, 3.0]);
    }

    #[test]
    fn cast_roundtrip() {
        let t = Tensor::from_vec(vec![1.5f32, -2.25]);
        let d: Tensor<f64> = t.cast();
        assert_eq!(d.data(), &[1.5f64, -2.25]);
    }
}

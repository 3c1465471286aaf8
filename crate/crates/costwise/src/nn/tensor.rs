use crate::error::{Error, Result};

/// Dense row-major tensor of 64-bit reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} holds {} values, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Number of rows of a rank-2 tensor; rank-1 tensors count as one row.
    pub fn rows(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[0]
        } else {
            1
        }
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&0)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

/// Handle to one parameter tensor inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Named parameter store. Layers hold `ParamId` handles; the optimizer,
/// checkpoint writer, and gradient checker walk the set as a whole.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|s| s.as_str()).zip(self.tensors.iter())
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    /// Gradient buffers shaped like every parameter, zero-filled.
    pub fn zero_grads(&self) -> GradSet {
        GradSet { tensors: self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect() }
    }
}

/// Gradient buffers parallel to a [`ParamSet`].
#[derive(Clone, Debug)]
pub struct GradSet {
    tensors: Vec<Tensor>,
}

impl GradSet {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn zero(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.fill(0.0));
    }

    /// Accumulate `other` into `self`, tensor by tensor.
    pub fn add_assign(&mut self, other: &GradSet) {
        assert_eq!(self.tensors.len(), other.tensors.len());
        for (a, b) in self.tensors.iter_mut().zip(other.tensors.iter()) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data().iter()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.data().iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

// Small dense kernels shared by the layers. `w` is (rows x cols) row-major.

/// out += W x
pub(crate) fn matvec_acc(w: &Tensor, x: &[f64], out: &mut [f64]) {
    let cols = w.cols();
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), w.rows());
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w.data()[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x.iter()) {
            acc += a * b;
        }
        *o += acc;
    }
}

/// out += Wᵀ y  (scatter a row-space gradient back to column space)
pub(crate) fn matvec_t_acc(w: &Tensor, y: &[f64], out: &mut [f64]) {
    let cols = w.cols();
    debug_assert_eq!(y.len(), w.rows());
    debug_assert_eq!(out.len(), cols);
    for (r, yr) in y.iter().enumerate() {
        if *yr == 0.0 {
            continue;
        }
        let row = &w.data()[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row.iter()) {
            *o += yr * a;
        }
    }
}

/// dW += y ⊗ x (outer product accumulate)
pub(crate) fn outer_acc(dw: &mut Tensor, y: &[f64], x: &[f64]) {
    let cols = dw.cols();
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(y.len(), dw.rows());
    for (r, yr) in y.iter().enumerate() {
        if *yr == 0.0 {
            continue;
        }
        let row = &mut dw.data_mut()[r * cols..(r + 1) * cols];
        for (o, xv) in row.iter_mut().zip(x.iter()) {
            *o += yr * xv;
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_wrong_count() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn matvec_matches_hand_loop() {
        let w = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let x = [1.0, 0.5, -1.0];
        let mut out = vec![0.0; 2];
        matvec_acc(&w, &x, &mut out);
        assert_eq!(out, vec![1.0 + 1.0 - 3.0, 4.0 + 2.5 - 6.0]);
    }

    #[test]
    fn scalar_count_sums_tensors() {
        let mut ps = ParamSet::new();
        ps.add("a", Tensor::zeros(&[2, 3]));
        ps.add("b", Tensor::zeros(&[4]));
        assert_eq!(ps.scalar_count(), 10);
    }
}

use rand::Rng;

use super::tensor::Tensor;

/// Xavier-style uniform initialization: values drawn from
/// U(-limit, limit) with limit = sqrt(6 / (fan_in + fan_out)).
pub fn xavier_uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::from_vec(&[rows, cols], data).expect("shape/count consistent by construction")
}

pub fn zeros_vec(n: usize) -> Tensor {
    Tensor::zeros(&[n])
}

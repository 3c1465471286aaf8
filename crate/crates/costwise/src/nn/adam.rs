use super::tensor::{GradSet, ParamSet, Tensor};

/// Adam with bias-corrected moment estimates.
/// Defaults: beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(ps: &ParamSet, lr: f64) -> Self {
        let m = ps.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect::<Vec<_>>();
        let v = ps.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect::<Vec<_>>();
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every parameter. Deterministic: a fixed traversal
    /// order and no internal randomness.
    pub fn step(&mut self, ps: &mut ParamSet, grads: &GradSet) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for (idx, id) in ps.ids().enumerate().collect::<Vec<_>>() {
            let g = grads.get(id).data().to_vec();
            let m = self.m[idx].data_mut();
            let v = self.v[idx].data_mut();
            let p = ps.get_mut(id).data_mut();
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;

    fn scalar_ps(w: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::from_vec(&[1], vec![w]).unwrap());
        ps
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut ps = scalar_ps(1.25);
        let grads = ps.zero_grads();
        let mut opt = Adam::new(&ps, 0.1);
        for _ in 0..10 {
            opt.step(&mut ps, &grads);
        }
        assert_eq!(ps.get(crate::nn::ParamId(0)).data()[0], 1.25);
    }

    #[test]
    fn single_step_descends_on_quadratic() {
        // f(w) = w^2, w = 1, so f'(1) = 2 and w must decrease.
        let mut ps = scalar_ps(1.0);
        let mut grads = ps.zero_grads();
        grads.get_mut(crate::nn::ParamId(0)).data_mut()[0] = 2.0;
        let mut opt = Adam::new(&ps, 0.1);
        opt.step(&mut ps, &grads);
        assert!(ps.get(crate::nn::ParamId(0)).data()[0] < 1.0);
    }

    #[test]
    fn two_hundred_steps_reach_quadratic_optimum() {
        // f(w) = (w - 3)^2 with optimum w* = 3.
        let mut ps = scalar_ps(1.0);
        let id = crate::nn::ParamId(0);
        let mut opt = Adam::new(&ps, 0.1);
        for _ in 0..200 {
            let w = ps.get(id).data()[0];
            let mut grads = ps.zero_grads();
            grads.get_mut(id).data_mut()[0] = 2.0 * (w - 3.0);
            opt.step(&mut ps, &grads);
        }
        let w = ps.get(id).data()[0];
        assert!((w - 3.0).abs() < 1e-3, "w = {w}");
    }
}

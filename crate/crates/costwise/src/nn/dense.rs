use rand::Rng;

use crate::error::{Error, Result};

use super::init::{xavier_uniform, zeros_vec};
use super::tensor::{matvec_acc, matvec_t_acc, outer_acc, GradSet, ParamId, ParamSet};

/// Affine layer y = W x + b.
#[derive(Clone, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new<R: Rng>(
        ps: &mut ParamSet,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let w = ps.add(format!("{name}.w"), xavier_uniform(rng, out_dim, in_dim));
        let b = ps.add(format!("{name}.b"), zeros_vec(out_dim));
        Dense { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, ps: &ParamSet, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::Shape(format!(
                "dense expects input of length {}, got {}",
                self.in_dim,
                x.len()
            )));
        }
        let mut out = ps.get(self.b).data().to_vec();
        matvec_acc(ps.get(self.w), x, &mut out);
        Ok(out)
    }

    /// Backward for one call; `x` is the input that produced `dy`.
    /// Returns dx and accumulates dW, db.
    pub fn backward(&self, ps: &ParamSet, grads: &mut GradSet, x: &[f64], dy: &[f64]) -> Vec<f64> {
        debug_assert_eq!(dy.len(), self.out_dim);
        outer_acc(grads.get_mut(self.w), dy, x);
        for (g, d) in grads.get_mut(self.b).data_mut().iter_mut().zip(dy.iter()) {
            *g += d;
        }
        let mut dx = vec![0.0; self.in_dim];
        matvec_t_acc(ps.get(self.w), dy, &mut dx);
        dx
    }

    /// Identity-shaped variant used by tests: W = I, b = 0.
    pub fn set_identity(&self, ps: &mut ParamSet) {
        assert_eq!(self.in_dim, self.out_dim);
        let w = ps.get_mut(self.w);
        w.fill(0.0);
        let n = self.in_dim;
        for i in 0..n {
            w.data_mut()[i * n + i] = 1.0;
        }
        ps.get_mut(self.b).fill(0.0);
    }
}

/// Bag-of-codes embedding layer: the event representation is the mean of
/// the member code vectors. An empty bag maps to the zero vector.
#[derive(Clone, Debug)]
pub struct EmbedLayer {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl EmbedLayer {
    pub fn new<R: Rng>(
        ps: &mut ParamSet,
        rng: &mut R,
        name: &str,
        vocab: usize,
        dim: usize,
    ) -> Self {
        let table = ps.add(format!("{name}.table"), xavier_uniform(rng, vocab, dim));
        EmbedLayer { table, vocab, dim }
    }

    pub fn forward(&self, ps: &ParamSet, bag: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        if bag.is_empty() {
            return out;
        }
        let t = ps.get(self.table);
        for &id in bag {
            debug_assert!(id < self.vocab);
            let row = &t.data()[id * self.dim..(id + 1) * self.dim];
            for (o, v) in out.iter_mut().zip(row.iter()) {
                *o += v;
            }
        }
        let inv = 1.0 / bag.len() as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        out
    }

    pub fn backward(&self, grads: &mut GradSet, bag: &[usize], d_out: &[f64]) {
        if bag.is_empty() {
            return;
        }
        let inv = 1.0 / bag.len() as f64;
        let g = grads.get_mut(self.table);
        for &id in bag {
            let row = &mut g.data_mut()[id * self.dim..(id + 1) * self.dim];
            for (r, d) in row.iter_mut().zip(d_out.iter()) {
                *r += d * inv;
            }
        }
    }
}

/// Squared-error loss on a scalar: returns (loss, d_loss/d_pred).
pub fn squared_error(pred: f64, target: f64) -> (f64, f64) {
    let e = pred - target;
    (e * e, 2.0 * e)
}

#[allow(unused_imports)]
mod tests_support {
    pub use super::*;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_yield_bias() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = Dense::new(&mut ps, &mut rng, "d", 4, 2);
        ps.get_mut(d.w).fill(0.0);
        ps.get_mut(d.b).data_mut().copy_from_slice(&[1.5, -2.5]);
        let y = d.forward(&ps, &[9.0, 8.0, 7.0, 6.0]).unwrap();
        assert_eq!(y, vec![1.5, -2.5]);
    }

    #[test]
    fn identity_passes_input_through() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = Dense::new(&mut ps, &mut rng, "d", 3, 3);
        d.set_identity(&mut ps);
        let y = d.forward(&ps, &[0.25, -1.0, 4.0]).unwrap();
        assert_eq!(y, vec![0.25, -1.0, 4.0]);
    }

    #[test]
    fn random_case_matches_scalar_loop() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = Dense::new(&mut ps, &mut rng, "d", 4, 3);
        let x = [0.3, -0.7, 1.1, 0.05];
        let y = d.forward(&ps, &x).unwrap();
        let w = ps.get(d.w);
        let b = ps.get(d.b);
        for r in 0..3 {
            let mut acc = b.data()[r];
            for c in 0..4 {
                acc += w.data()[r * 4 + c] * x[c];
            }
            assert!((acc - y[r]).abs() < 1e-14);
        }
    }

    #[test]
    fn shape_mismatch_is_fatal() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = Dense::new(&mut ps, &mut rng, "d", 4, 3);
        assert!(d.forward(&ps, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn dense_squared_loss_closed_form_gradient() {
        // L = (Wx + b - y)^2  =>  dW = 2(Wx + b - y) x^T
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Dense::new(&mut ps, &mut rng, "d", 3, 1);
        let x = [0.5, -2.0, 1.25];
        let target = 0.7;
        let pred = d.forward(&ps, &x).unwrap()[0];
        let (_, dpred) = squared_error(pred, target);
        let mut grads = ps.zero_grads();
        d.backward(&ps, &mut grads, &x, &[dpred]);
        let expect_scale = 2.0 * (pred - target);
        for c in 0..3 {
            assert!((grads.get(d.w).data()[c] - expect_scale * x[c]).abs() < 1e-12);
        }
        assert!((grads.get(d.b).data()[0] - expect_scale).abs() < 1e-12);
    }

    #[test]
    fn empty_bag_embeds_to_zero() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = EmbedLayer::new(&mut ps, &mut rng, "emb", 5, 3);
        assert_eq!(e.forward(&ps, &[]), vec![0.0; 3]);
    }

    #[test]
    fn bag_mean_is_order_invariant() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = EmbedLayer::new(&mut ps, &mut rng, "emb", 5, 3);
        let a = e.forward(&ps, &[0, 2, 4]);
        let b = e.forward(&ps, &[4, 0, 2]);
        assert_eq!(a, b);
    }
}

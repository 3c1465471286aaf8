//! Concatenation-based attention over a hidden-state sequence.
//!
//! With h_t the query state and h_1..h_{t-1} the attended states (all of
//! length 2p):
//!
//!   score_i = v_a . tanh(W_a [h_t; h_i])        i = 1..t-1
//!   alpha   = softmax(score)
//!   c_t     = sum_i alpha_i h_i
//!   out     = tanh(W_c [c_t; h_t])
//!
//! W_a is (q x 4p), v_a is (q), W_c is (r x 4p). When t = 1 there is no
//! prior state to attend over; the context falls back to the state itself:
//! out = tanh(W_c [h_t; h_t]) and the exported weight vector is [1.0].

use rand::Rng;

use crate::error::{Error, Result};

use super::init::xavier_uniform;
use super::tensor::{matvec_acc, matvec_t_acc, outer_acc, GradSet, ParamId, ParamSet};

#[derive(Clone, Debug)]
pub struct Attention {
    pub w_a: ParamId,
    pub v_a: ParamId,
    pub w_c: ParamId,
    /// hidden-state width (2p)
    pub state_dim: usize,
    /// score latent width q
    pub latent: usize,
    /// output width r
    pub out_dim: usize,
}

#[derive(Clone, Debug)]
pub struct AttnCache {
    /// tanh(W_a u_i) per attended state
    act: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    context: Vec<f64>,
    /// tanh output
    out: Vec<f64>,
    fallback: bool,
}

#[derive(Clone, Debug)]
pub struct AttnOutput {
    /// softmax weights over the attended states (or [1.0] in fallback)
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
    pub attended: Vec<f64>,
}

impl Attention {
    pub fn new<R: Rng>(
        ps: &mut ParamSet,
        rng: &mut R,
        name: &str,
        state_dim: usize,
        latent: usize,
        out_dim: usize,
    ) -> Self {
        let w_a = ps.add(format!("{name}.w_a"), xavier_uniform(rng, latent, 2 * state_dim));
        let v_a = ps.add(format!("{name}.v_a"), xavier_uniform(rng, 1, latent));
        let w_c = ps.add(format!("{name}.w_c"), xavier_uniform(rng, out_dim, 2 * state_dim));
        Attention { w_a, v_a, w_c, state_dim, latent, out_dim }
    }

    /// Fuse the first `t` states of `hiddens`, querying from step t (1-based).
    /// `t` must satisfy 1 <= t <= hiddens.len().
    pub fn fuse(
        &self,
        ps: &ParamSet,
        hiddens: &[Vec<f64>],
        t: usize,
    ) -> Result<(AttnOutput, AttnCache)> {
        if t == 0 || t > hiddens.len() {
            return Err(Error::Invalid(format!(
                "attention step t={} outside 1..={}",
                t,
                hiddens.len()
            )));
        }
        for (i, h) in hiddens.iter().take(t).enumerate() {
            if h.len() != self.state_dim {
                return Err(Error::Shape(format!(
                    "attention state {} has length {}, expected {}",
                    i,
                    h.len(),
                    self.state_dim
                )));
            }
        }
        let query = &hiddens[t - 1];
        if t == 1 {
            let (out, _pre) = self.combine(ps, query, query);
            let cache = AttnCache {
                act: Vec::new(),
                alphas: vec![1.0],
                context: query.clone(),
                out: out.clone(),
                fallback: true,
            };
            return Ok((
                AttnOutput { weights: vec![1.0], context: query.clone(), attended: out },
                cache,
            ));
        }

        let n = t - 1;
        let mut act = Vec::with_capacity(n);
        let mut scores = Vec::with_capacity(n);
        let mut u = vec![0.0; 2 * self.state_dim];
        u[..self.state_dim].copy_from_slice(query);
        for h in hiddens.iter().take(n) {
            u[self.state_dim..].copy_from_slice(h);
            let mut a = vec![0.0; self.latent];
            matvec_acc(ps.get(self.w_a), &u, &mut a);
            a.iter_mut().for_each(|v| *v = v.tanh());
            let score: f64 =
                ps.get(self.v_a).data().iter().zip(a.iter()).map(|(x, y)| x * y).sum();
            act.push(a);
            scores.push(score);
        }
        let alphas = softmax(&scores);
        let mut context = vec![0.0; self.state_dim];
        for (alpha, h) in alphas.iter().zip(hiddens.iter()) {
            for (c, v) in context.iter_mut().zip(h.iter()) {
                *c += alpha * v;
            }
        }
        let (out, _pre) = self.combine(ps, &context, query);
        let cache = AttnCache {
            act,
            alphas: alphas.clone(),
            context: context.clone(),
            out: out.clone(),
            fallback: false,
        };
        Ok((AttnOutput { weights: alphas, context, attended: out }, cache))
    }

    /// out = tanh(W_c [c; h])
    fn combine(&self, ps: &ParamSet, c: &[f64], h: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut u = vec![0.0; 2 * self.state_dim];
        u[..self.state_dim].copy_from_slice(c);
        u[self.state_dim..].copy_from_slice(h);
        let mut pre = vec![0.0; self.out_dim];
        matvec_acc(ps.get(self.w_c), &u, &mut pre);
        let out = pre.iter().map(|v| v.tanh()).collect();
        (out, pre)
    }

    /// Backward through the fusion. `d_out` is dL/d(attended). Returns
    /// dL/dh_i for i = 0..t-1 (the query state is index t-1).
    pub fn backward(
        &self,
        ps: &ParamSet,
        hiddens: &[Vec<f64>],
        t: usize,
        cache: &AttnCache,
        d_out: &[f64],
        grads: &mut GradSet,
    ) -> Vec<Vec<f64>> {
        let query = &hiddens[t - 1];
        let mut d_hidden = vec![vec![0.0; self.state_dim]; t];

        // through out = tanh(W_c [c; h_t])
        let d_pre: Vec<f64> =
            d_out.iter().zip(cache.out.iter()).map(|(d, o)| d * (1.0 - o * o)).collect();
        let mut u = vec![0.0; 2 * self.state_dim];
        u[..self.state_dim].copy_from_slice(&cache.context);
        u[self.state_dim..].copy_from_slice(query);
        outer_acc(grads.get_mut(self.w_c), &d_pre, &u);
        let mut du = vec![0.0; 2 * self.state_dim];
        matvec_t_acc(ps.get(self.w_c), &d_pre, &mut du);
        let (d_context, d_query_part) = du.split_at(self.state_dim);

        if cache.fallback {
            // context and query are the same state
            for i in 0..self.state_dim {
                d_hidden[t - 1][i] += d_context[i] + d_query_part[i];
            }
            return d_hidden;
        }

        for (a, b) in d_hidden[t - 1].iter_mut().zip(d_query_part.iter()) {
            *a += b;
        }

        // context = sum alpha_i h_i
        let n = t - 1;
        let mut d_alpha = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..self.state_dim {
                acc += d_context[j] * hiddens[i][j];
                d_hidden[i][j] += cache.alphas[i] * d_context[j];
            }
            d_alpha[i] = acc;
        }

        // softmax
        let dot: f64 = cache.alphas.iter().zip(d_alpha.iter()).map(|(a, d)| a * d).sum();
        let d_score: Vec<f64> =
            (0..n).map(|i| cache.alphas[i] * (d_alpha[i] - dot)).collect();

        // score_i = v_a . tanh(W_a [h_t; h_i])
        let v = ps.get(self.v_a).data().to_vec();
        for i in 0..n {
            if d_score[i] == 0.0 {
                continue;
            }
            let a = &cache.act[i];
            for (g, av) in grads.get_mut(self.v_a).data_mut().iter_mut().zip(a.iter()) {
                *g += d_score[i] * av;
            }
            let d_act_pre: Vec<f64> =
                (0..self.latent).map(|k| d_score[i] * v[k] * (1.0 - a[k] * a[k])).collect();
            let mut ui = vec![0.0; 2 * self.state_dim];
            ui[..self.state_dim].copy_from_slice(query);
            ui[self.state_dim..].copy_from_slice(&hiddens[i]);
            outer_acc(grads.get_mut(self.w_a), &d_act_pre, &ui);
            let mut dui = vec![0.0; 2 * self.state_dim];
            matvec_t_acc(ps.get(self.w_a), &d_act_pre, &mut dui);
            for j in 0..self.state_dim {
                d_hidden[t - 1][j] += dui[j];
                d_hidden[i][j] += dui[self.state_dim + j];
            }
        }
        d_hidden
    }
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

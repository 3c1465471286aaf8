//! GRU cell, backprop through time, and the bidirectional wrapper.
//!
//! Gate equations (per step, zero initial state):
//!   z_t = sigma(W_z x_t + U_z h_{t-1} + b_z)          update gate
//!   r_t = sigma(W_r x_t + U_r h_{t-1} + b_r)          reset gate
//!   n_t = tanh (W_n x_t + U_n (r_t . h_{t-1}) + b_n)  candidate
//!   h_t = z_t . h_{t-1} + (1 - z_t) . n_t
//!
//! Masked (padding) steps copy the previous hidden state unchanged and
//! contribute zero gradient to their inputs.

use rand::Rng;

use crate::error::{Error, Result};

use super::init::{xavier_uniform, zeros_vec};
use super::tensor::{matvec_acc, matvec_t_acc, outer_acc, sigmoid, GradSet, ParamId, ParamSet};

/// One direction of a GRU layer.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_n: ParamId,
    pub u_n: ParamId,
    pub b_n: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<R: Rng>(
        ps: &mut ParamSet,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        hidden: usize,
    ) -> Self {
        let w = |ps: &mut ParamSet, rng: &mut R, gate: &str, rows: usize, cols: usize| {
            ps.add(format!("{name}.{gate}"), xavier_uniform(rng, rows, cols))
        };
        let w_z = w(ps, rng, "w_z", hidden, in_dim);
        let u_z = w(ps, rng, "u_z", hidden, hidden);
        let b_z = ps.add(format!("{name}.b_z"), zeros_vec(hidden));
        let w_r = w(ps, rng, "w_r", hidden, in_dim);
        let u_r = w(ps, rng, "u_r", hidden, hidden);
        let b_r = ps.add(format!("{name}.b_r"), zeros_vec(hidden));
        let w_n = w(ps, rng, "w_n", hidden, in_dim);
        let u_n = w(ps, rng, "u_n", hidden, hidden);
        let b_n = ps.add(format!("{name}.b_n"), zeros_vec(hidden));
        GruCell { w_z, u_z, b_z, w_r, u_r, b_r, w_n, u_n, b_n, in_dim, hidden }
    }
}

/// Per-sequence activations recorded by the forward pass.
#[derive(Clone, Debug)]
pub struct GruCache {
    /// h_0 .. h_T (T+1 entries, h_0 = zeros)
    hs: Vec<Vec<f64>>,
    zs: Vec<Vec<f64>>,
    rs: Vec<Vec<f64>>,
    ns: Vec<Vec<f64>>,
    mask: Vec<bool>,
}

/// Run the recurrence over `inputs`. Steps where `mask[t]` is false copy
/// the previous hidden state. Returns the hidden sequence h_1..h_T and the
/// cache needed for [`gru_backward`].
pub fn gru_forward(
    ps: &ParamSet,
    cell: &GruCell,
    inputs: &[Vec<f64>],
    mask: &[bool],
) -> Result<(Vec<Vec<f64>>, GruCache)> {
    if inputs.is_empty() {
        return Err(Error::Invalid("gru_forward: empty input sequence".into()));
    }
    if inputs.len() != mask.len() {
        return Err(Error::Shape(format!(
            "gru_forward: {} inputs but {} mask entries",
            inputs.len(),
            mask.len()
        )));
    }
    let p = cell.hidden;
    let t_max = inputs.len();
    let mut hs = Vec::with_capacity(t_max + 1);
    hs.push(vec![0.0; p]);
    let mut zs = Vec::with_capacity(t_max);
    let mut rs = Vec::with_capacity(t_max);
    let mut ns = Vec::with_capacity(t_max);

    for (t, x) in inputs.iter().enumerate() {
        if x.len() != cell.in_dim {
            return Err(Error::Shape(format!(
                "gru_forward: step {} has input length {}, cell expects {}",
                t,
                x.len(),
                cell.in_dim
            )));
        }
        let h_prev = hs.last().expect("h_0 pushed above").clone();
        if !mask[t] {
            hs.push(h_prev);
            zs.push(vec![0.0; p]);
            rs.push(vec![0.0; p]);
            ns.push(vec![0.0; p]);
            continue;
        }
        let mut z = ps.get(cell.b_z).data().to_vec();
        matvec_acc(ps.get(cell.w_z), x, &mut z);
        matvec_acc(ps.get(cell.u_z), &h_prev, &mut z);
        z.iter_mut().for_each(|v| *v = sigmoid(*v));

        let mut r = ps.get(cell.b_r).data().to_vec();
        matvec_acc(ps.get(cell.w_r), x, &mut r);
        matvec_acc(ps.get(cell.u_r), &h_prev, &mut r);
        r.iter_mut().for_each(|v| *v = sigmoid(*v));

        let rh: Vec<f64> = r.iter().zip(h_prev.iter()).map(|(a, b)| a * b).collect();
        let mut n = ps.get(cell.b_n).data().to_vec();
        matvec_acc(ps.get(cell.w_n), x, &mut n);
        matvec_acc(ps.get(cell.u_n), &rh, &mut n);
        n.iter_mut().for_each(|v| *v = v.tanh());

        let h: Vec<f64> = (0..p).map(|i| z[i] * h_prev[i] + (1.0 - z[i]) * n[i]).collect();
        hs.push(h);
        zs.push(z);
        rs.push(r);
        ns.push(n);
    }
    let out = hs[1..].to_vec();
    Ok((out, GruCache { hs, zs, rs, ns, mask: mask.to_vec() }))
}

/// Reverse-mode pass. `d_states[t]` is dL/dh_t for the step outputs returned
/// by [`gru_forward`]. Accumulates parameter gradients and returns dL/dx_t.
pub fn gru_backward(
    ps: &ParamSet,
    cell: &GruCell,
    inputs: &[Vec<f64>],
    cache: &GruCache,
    d_states: &[Vec<f64>],
    grads: &mut GradSet,
) -> Vec<Vec<f64>> {
    let p = cell.hidden;
    let t_max = inputs.len();
    debug_assert_eq!(d_states.len(), t_max);
    let mut d_inputs = vec![vec![0.0; cell.in_dim]; t_max];
    let mut dh = vec![0.0; p];

    for t in (0..t_max).rev() {
        for (a, b) in dh.iter_mut().zip(d_states[t].iter()) {
            *a += b;
        }
        if !cache.mask[t] {
            // h_t = h_{t-1}: gradient flows through untouched, inputs get none
            continue;
        }
        let h_prev = &cache.hs[t];
        let z = &cache.zs[t];
        let r = &cache.rs[t];
        let n = &cache.ns[t];
        let x = &inputs[t];

        // h = z*h_prev + (1-z)*n
        let mut dz = vec![0.0; p];
        let mut dn = vec![0.0; p];
        let mut dh_prev = vec![0.0; p];
        for i in 0..p {
            dz[i] = dh[i] * (h_prev[i] - n[i]);
            dn[i] = dh[i] * (1.0 - z[i]);
            dh_prev[i] = dh[i] * z[i];
        }

        // candidate: n = tanh(W_n x + U_n (r.h_prev) + b_n)
        let dn_pre: Vec<f64> = (0..p).map(|i| dn[i] * (1.0 - n[i] * n[i])).collect();
        let rh: Vec<f64> = r.iter().zip(h_prev.iter()).map(|(a, b)| a * b).collect();
        outer_acc(grads.get_mut(cell.w_n), &dn_pre, x);
        outer_acc(grads.get_mut(cell.u_n), &dn_pre, &rh);
        for (g, d) in grads.get_mut(cell.b_n).data_mut().iter_mut().zip(dn_pre.iter()) {
            *g += d;
        }
        matvec_t_acc(ps.get(cell.w_n), &dn_pre, &mut d_inputs[t]);
        let mut drh = vec![0.0; p];
        matvec_t_acc(ps.get(cell.u_n), &dn_pre, &mut drh);
        let mut dr = vec![0.0; p];
        for i in 0..p {
            dr[i] = drh[i] * h_prev[i];
            dh_prev[i] += drh[i] * r[i];
        }

        // gates
        let dz_pre: Vec<f64> = (0..p).map(|i| dz[i] * z[i] * (1.0 - z[i])).collect();
        outer_acc(grads.get_mut(cell.w_z), &dz_pre, x);
        outer_acc(grads.get_mut(cell.u_z), &dz_pre, h_prev);
        for (g, d) in grads.get_mut(cell.b_z).data_mut().iter_mut().zip(dz_pre.iter()) {
            *g += d;
        }
        matvec_t_acc(ps.get(cell.w_z), &dz_pre, &mut d_inputs[t]);
        matvec_t_acc(ps.get(cell.u_z), &dz_pre, &mut dh_prev);

        let dr_pre: Vec<f64> = (0..p).map(|i| dr[i] * r[i] * (1.0 - r[i])).collect();
        outer_acc(grads.get_mut(cell.w_r), &dr_pre, x);
        outer_acc(grads.get_mut(cell.u_r), &dr_pre, h_prev);
        for (g, d) in grads.get_mut(cell.b_r).data_mut().iter_mut().zip(dr_pre.iter()) {
            *g += d;
        }
        matvec_t_acc(ps.get(cell.w_r), &dr_pre, &mut d_inputs[t]);
        matvec_t_acc(ps.get(cell.u_r), &dr_pre, &mut dh_prev);

        dh = dh_prev;
    }
    d_inputs
}

/// Bidirectional GRU layer: per-step output is [h_fwd; h_bwd], length 2p.
#[derive(Clone, Debug)]
pub struct BiGru {
    pub fwd: GruCell,
    pub bwd: GruCell,
}

#[derive(Clone, Debug)]
pub struct BiGruCache {
    fwd: GruCache,
    bwd: GruCache,
}

impl BiGru {
    pub fn new<R: Rng>(
        ps: &mut ParamSet,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        hidden: usize,
    ) -> Self {
        BiGru {
            fwd: GruCell::new(ps, rng, &format!("{name}.fwd"), in_dim, hidden),
            bwd: GruCell::new(ps, rng, &format!("{name}.bwd"), in_dim, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden
    }

    pub fn out_dim(&self) -> usize {
        2 * self.fwd.hidden
    }

    pub fn forward(
        &self,
        ps: &ParamSet,
        inputs: &[Vec<f64>],
        mask: &[bool],
    ) -> Result<(Vec<Vec<f64>>, BiGruCache)> {
        let (f_states, f_cache) = gru_forward(ps, &self.fwd, inputs, mask)?;
        let rev_inputs: Vec<Vec<f64>> = inputs.iter().rev().cloned().collect();
        let rev_mask: Vec<bool> = mask.iter().rev().cloned().collect();
        let (b_states_rev, b_cache) = gru_forward(ps, &self.bwd, &rev_inputs, &rev_mask)?;
        let t_max = inputs.len();
        let p = self.fwd.hidden;
        let mut out = Vec::with_capacity(t_max);
        for t in 0..t_max {
            let mut h = Vec::with_capacity(2 * p);
            h.extend_from_slice(&f_states[t]);
            h.extend_from_slice(&b_states_rev[t_max - 1 - t]);
            out.push(h);
        }
        Ok((out, BiGruCache { fwd: f_cache, bwd: b_cache }))
    }

    pub fn backward(
        &self,
        ps: &ParamSet,
        inputs: &[Vec<f64>],
        cache: &BiGruCache,
        d_states: &[Vec<f64>],
        grads: &mut GradSet,
    ) -> Vec<Vec<f64>> {
        let t_max = inputs.len();
        let p = self.fwd.hidden;
        let d_fwd: Vec<Vec<f64>> = d_states.iter().map(|d| d[..p].to_vec()).collect();
        let d_bwd_rev: Vec<Vec<f64>> =
            (0..t_max).rev().map(|t| d_states[t][p..].to_vec()).collect();
        let rev_inputs: Vec<Vec<f64>> = inputs.iter().rev().cloned().collect();

        let dx_fwd = gru_backward(ps, &self.fwd, inputs, &cache.fwd, &d_fwd, grads);
        let dx_bwd_rev = gru_backward(ps, &self.bwd, &rev_inputs, &cache.bwd, &d_bwd_rev, grads);

        let mut dx = dx_fwd;
        for t in 0..t_max {
            for (a, b) in dx[t].iter_mut().zip(dx_bwd_rev[t_max - 1 - t].iter()) {
                *a += b;
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_seq(rng: &mut ChaCha8Rng, t: usize, d: usize) -> Vec<Vec<f64>> {
        use rand::Rng;
        (0..t).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn zero_parameters_give_zero_states() {
        // sigma(0) = 0.5, tanh(0) = 0, h = 0.5*0 + 0.5*0 = 0
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cell = GruCell::new(&mut ps, &mut rng, "g", 3, 4);
        for id in ps.ids().collect::<Vec<_>>() {
            ps.get_mut(id).fill(0.0);
        }
        let inputs = rand_seq(&mut rng, 5, 3);
        let (states, _) = gru_forward(&ps, &cell, &inputs, &[true; 5]).unwrap();
        for h in states {
            assert!(h.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn single_step_bidirectional_concatenates_both_directions() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bi = BiGru::new(&mut ps, &mut rng, "bi", 3, 4);
        let x = rand_seq(&mut rng, 1, 3);
        let (states, _) = bi.forward(&ps, &x, &[true]).unwrap();
        let (f, _) = gru_forward(&ps, &bi.fwd, &x, &[true]).unwrap();
        let (b, _) = gru_forward(&ps, &bi.bwd, &x, &[true]).unwrap();
        assert_eq!(states[0][..4], f[0][..]);
        assert_eq!(states[0][4..], b[0][..]);
    }

    #[test]
    fn forward_matches_stepwise_reference_recomputation() {
        // Independent scalar re-evaluation of the recurrence, step by step.
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let cell = GruCell::new(&mut ps, &mut rng, "g", 3, 4);
        let inputs = rand_seq(&mut rng, 4, 3);
        let (states, _) = gru_forward(&ps, &cell, &inputs, &[true; 4]).unwrap();

        let p = 4usize;
        let d = 3usize;
        let get = |id: ParamId| ps.get(id).data().to_vec();
        let (wz, uz, bz) = (get(cell.w_z), get(cell.u_z), get(cell.b_z));
        let (wr, ur, br) = (get(cell.w_r), get(cell.u_r), get(cell.b_r));
        let (wn, un, bn) = (get(cell.w_n), get(cell.u_n), get(cell.b_n));
        let mut h = vec![0.0; p];
        for (t, x) in inputs.iter().enumerate() {
            let mut hn = vec![0.0; p];
            for i in 0..p {
                let mut az = bz[i];
                for j in 0..d {
                    az += wz[i * d + j] * x[j];
                }
                for j in 0..p {
                    az += uz[i * p + j] * h[j];
                }
                let z = 1.0 / (1.0 + (-az).exp());
                let mut an = bn[i];
                for j in 0..d {
                    an += wn[i * d + j] * x[j];
                }
                for j in 0..p {
                    // the reset gate of component j scales h_prev[j]
                    let rj = {
                        let mut arj = br[j];
                        for k in 0..d {
                            arj += wr[j * d + k] * x[k];
                        }
                        for k in 0..p {
                            arj += ur[j * p + k] * h[k];
                        }
                        1.0 / (1.0 + (-arj).exp())
                    };
                    an += un[i * p + j] * (rj * h[j]);
                }
                let n = an.tanh();
                hn[i] = z * h[i] + (1.0 - z) * n;
            }
            for i in 0..p {
                assert!(
                    (hn[i] - states[t][i]).abs() < 1e-12,
                    "step {t} dim {i}: {} vs {}",
                    hn[i],
                    states[t][i]
                );
            }
            h = hn;
        }
    }

    #[test]
    fn masked_steps_copy_state_and_block_input_gradient() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cell = GruCell::new(&mut ps, &mut rng, "g", 2, 3);
        let inputs = rand_seq(&mut rng, 4, 2);
        let mask = [true, false, true, false];
        let (states, cache) = gru_forward(&ps, &cell, &inputs, &mask).unwrap();
        assert_eq!(states[0], states[1]);
        assert_eq!(states[2], states[3]);

        let mut grads = ps.zero_grads();
        let d_states: Vec<Vec<f64>> = (0..4).map(|_| vec![1.0; 3]).collect();
        let dx = gru_backward(&ps, &cell, &inputs, &cache, &d_states, &mut grads);
        assert!(dx[1].iter().all(|v| *v == 0.0));
        assert!(dx[3].iter().all(|v| *v == 0.0));
        assert!(dx[0].iter().any(|v| *v != 0.0));
    }

    #[test]
    fn shape_mismatch_reports_offending_shapes() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cell = GruCell::new(&mut ps, &mut rng, "g", 2, 3);
        let err = gru_forward(&ps, &cell, &[vec![1.0; 5]], &[true]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('5') && msg.contains('2'), "got: {msg}");
    }
}

//! Central finite-difference gradient checking.
//!
//! The checker re-evaluates the loss at theta ± eps per sampled coordinate,
//! entirely independent of the analytic backward pass it validates.

use rand::Rng;

use super::tensor::{GradSet, ParamId, ParamSet};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// (parameter name, flat index, analytic, numeric) of the worst case
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Compare `analytic` gradients against central finite differences of
/// `loss_fn` at the sampled coordinates. `eps` is the half-step.
pub fn check_gradients<F>(
    ps: &mut ParamSet,
    analytic: &GradSet,
    mut loss_fn: F,
    samples: &[(ParamId, usize)],
    eps: f64,
) -> GradCheckReport
where
    F: FnMut(&ParamSet) -> f64,
{
    let mut max_rel_err = 0.0;
    let mut worst = None;
    for &(id, idx) in samples {
        let orig = ps.get(id).data()[idx];
        ps.get_mut(id).data_mut()[idx] = orig + eps;
        let up = loss_fn(ps);
        ps.get_mut(id).data_mut()[idx] = orig - eps;
        let down = loss_fn(ps);
        ps.get_mut(id).data_mut()[idx] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let ana = analytic.get(id).data()[idx];
        // guard the denominator: coordinates where both gradients sit below
        // 1e-4 are compared absolutely at that scale, since central
        // differences cannot resolve finer than ~1e-9 there
        let denom = ana.abs().max(numeric.abs()).max(1e-4);
        let rel = (ana - numeric).abs() / denom;
        if rel > max_rel_err {
            max_rel_err = rel;
            worst = Some((ps.name(id).to_string(), idx, ana, numeric));
        }
    }
    GradCheckReport { max_rel_err, checked: samples.len(), worst }
}

/// Sample `n` distinct (tensor, element) coordinates uniformly over all
/// scalar parameters in the set.
pub fn sample_coordinates<R: Rng>(ps: &ParamSet, rng: &mut R, n: usize) -> Vec<(ParamId, usize)> {
    let mut flat = Vec::new();
    for id in ps.ids() {
        for i in 0..ps.get(id).len() {
            flat.push((id, i));
        }
    }
    let mut out = Vec::with_capacity(n.min(flat.len()));
    for _ in 0..n.min(flat.len()) {
        let k = rng.gen_range(0..flat.len());
        out.push(flat.swap_remove(k));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::dense::{squared_error, Dense};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = Dense::new(&mut ps, &mut rng, "d", 3, 2);
        let grads = ps.zero_grads(); // analytic gradient of a constant: zero
        let samples = sample_coordinates(&ps, &mut rng, 8);
        let report = check_gradients(&mut ps, &grads, |_| 42.0, &samples, 1e-5);
        assert_eq!(report.max_rel_err, 0.0);
        let _ = d;
    }

    #[test]
    fn dense_gradient_matches_finite_differences() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = Dense::new(&mut ps, &mut rng, "d", 4, 3);
        let x = [0.4, -0.2, 0.9, 0.1];
        let targets = [0.3, -0.8, 0.5];

        let loss_of = |ps: &ParamSet| {
            let y = d.forward(ps, &x).unwrap();
            y.iter().zip(targets.iter()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>()
        };
        let y = d.forward(&ps, &x).unwrap();
        let dy: Vec<f64> =
            y.iter().zip(targets.iter()).map(|(p, t)| squared_error(*p, *t).1).collect();
        let mut grads = ps.zero_grads();
        d.backward(&ps, &mut grads, &x, &dy);

        let samples = sample_coordinates(&ps, &mut rng, 15);
        let report = check_gradients(&mut ps, &grads, loss_of, &samples, 1e-5);
        assert!(report.max_rel_err < 1e-6, "{:?}", report.worst);
    }
}

//! Central finite differences on a sample of entries, compared with the tape.

use gmc_core::model::layers::Bound;
use gmc_tensor::{ParamStore, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-6;

/// Adds `U(−0.05, 0.05)` to every entry. Fresh stores have zero biases, which
/// together with masked or constant inputs leave pre-activations exactly on
/// the leaky-ReLU kink, where finite differences are meaningless.
pub fn jitter(store: &ParamStore, seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = store.clone();
    for (_, t) in out.iter_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
    }
    out
}

/// Relative error `‖analytic − numeric‖ / ‖numeric‖` over the sampled entries.
fn relative(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    if norm == 0.0 && diff == 0.0 {
        0.0
    } else {
        diff / norm.max(1e-12)
    }
}

fn picks(rng: &mut ChaCha8Rng, numel: usize, samples: usize) -> Vec<usize> {
    if numel <= samples {
        (0..numel).collect()
    } else {
        (0..samples).map(|_| rng.random_range(0..numel)).collect()
    }
}

/// Checks the gradient of a scalar loss with respect to every store, sampling
/// up to `samples` entries per tensor. Returns the worst per-store error.
pub fn check_stores(stores: &[ParamStore], samples: usize, loss: impl Fn(&mut Tape, &[Bound]) -> Var) -> f64 {
    let eval = |s: &[ParamStore]| -> f64 {
        let mut tape = Tape::new();
        let bound: Vec<Bound> = s.iter().map(|p| Bound::new(&mut tape, p, false)).collect();
        let l = loss(&mut tape, &bound);
        tape.value(l).item()
    };
    let mut tape = Tape::new();
    let bound: Vec<Bound> = stores.iter().map(|p| Bound::new(&mut tape, p, true)).collect();
    let l = loss(&mut tape, &bound);
    let grads = tape.backward(l).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for (k, store) in stores.iter().enumerate() {
        let g = bound[k].grads(&tape, &grads);
        let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
        for (name, t) in store.iter() {
            for i in picks(&mut rng, t.numel(), samples) {
                let mut plus = stores.to_vec();
                plus[k].get_mut(name).unwrap().data_mut()[i] += STEP;
                let mut minus = stores.to_vec();
                minus[k].get_mut(name).unwrap().data_mut()[i] -= STEP;
                numeric.push((eval(&plus) - eval(&minus)) / (2.0 * STEP));
                analytic.push(g[name].data()[i]);
            }
        }
        let e = relative(&analytic, &numeric);
        worst = worst.max(e);
    }
    worst
}

/// Same check for plain input tensors.
pub fn check_inputs(inputs: &[Tensor], loss: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let eval = |xs: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.constant(t.clone())).collect();
        let l = loss(&mut tape, &vars);
        tape.value(l).item()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let l = loss(&mut tape, &vars);
    let grads = tape.backward(l).unwrap();
    let mut worst: f64 = 0.0;
    for (k, x) in inputs.iter().enumerate() {
        let g = grads.get(vars[k]).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()));
        let mut numeric = Vec::with_capacity(x.numel());
        for i in 0..x.numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= STEP;
            numeric.push((eval(&plus) - eval(&minus)) / (2.0 * STEP));
        }
        worst = worst.max(relative(g.data(), &numeric));
    }
    worst
}

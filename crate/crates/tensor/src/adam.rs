use crate::error::{Result, TensorError};
use crate::params::{GradStore, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for every parameter of one store, plus the step count.
///
/// Moments and updated parameters are rounded to `f32` after every step so the
/// whole optimizer state survives a save/load cycle bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: ParamStore,
    pub v: ParamStore,
}

impl AdamState {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        let mut m = ParamStore::new(*params.digest());
        for (name, t) in params.iter() {
            m.insert(name, Tensor::zeros(t.shape())).expect("names are unique");
        }
        AdamState {
            config,
            t: 0,
            v: m.clone(),
            m,
        }
    }
}

/// One bias-corrected Adam update. Every parameter must have a gradient.
pub fn adam_step(params: &mut ParamStore, grads: &GradStore, state: &mut AdamState) -> Result<()> {
    if let Some(name) = params.names().find(|n| !grads.contains_key(*n)) {
        return Err(TensorError::MissingGradient(name.to_string()));
    }
    state.m.check_compatible(params)?;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    state.t += 1;
    let t = state.t as i32;
    let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
    for (name, p) in params.iter_mut() {
        let g = &grads[name];
        if g.shape() != p.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                left: p.shape(),
                right: g.shape(),
            });
        }
        let m = state.m.get_mut(name)?;
        let v = state.v.get_mut(name)?;
        let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
        for (i, &gi) in g.data().iter().enumerate() {
            let mi = (beta1 * md[i] + (1.0 - beta1) * gi) as f32 as f64;
            let vi = (beta2 * vd[i] + (1.0 - beta2) * gi * gi) as f32 as f64;
            md[i] = mi;
            vd[i] = vi;
            let step = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
            pd[i] = (pd[i] - step) as f32 as f64;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new([0; 32]);
        for (i, &v) in values.iter().enumerate() {
            s.insert(format!("p{i}"), Tensor::scalar(v)).unwrap();
        }
        s
    }

    fn grads(values: &[f64]) -> GradStore {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| (format!("p{i}"), Tensor::scalar(v)))
            .collect()
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = store(&[0.5]);
        let mut st = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &grads(&[0.0]), &mut st).unwrap();
        assert_eq!(p.get("p0").unwrap().item(), 0.5);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = store(&[0.0]);
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(&p, cfg);
        adam_step(&mut p, &grads(&[1.0]), &mut st).unwrap();
        // m̂ = v̂ = 1, so the step is lr / (1 + ε).
        assert!((p.get("p0").unwrap().item() + 0.1).abs() < 1e-7);
    }

    #[test]
    fn identical_parameters_stay_identical() {
        let mut p = store(&[0.3, 0.3]);
        let mut st = AdamState::new(&p, AdamConfig::default());
        for k in 0..50 {
            let g = (k as f64 * 0.7).sin();
            adam_step(&mut p, &grads(&[g, g]), &mut st).unwrap();
            assert_eq!(p.get("p0").unwrap(), p.get("p1").unwrap());
        }
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut p = store(&[0.0, 1.0]);
        let mut st = AdamState::new(&p, AdamConfig::default());
        let err = adam_step(&mut p, &grads(&[1.0]), &mut st).unwrap_err();
        assert_eq!(err, TensorError::MissingGradient("p1".into()));
        assert_eq!(st.t, 0);
    }

    #[test]
    fn second_moment_non_negative() {
        let mut p = store(&[0.0]);
        let mut st = AdamState::new(&p, AdamConfig::default());
        for g in [-3.0, 2.0, -0.5] {
            adam_step(&mut p, &grads(&[g]), &mut st).unwrap();
            assert!(st.v.get("p0").unwrap().item() >= 0.0);
        }
    }
}

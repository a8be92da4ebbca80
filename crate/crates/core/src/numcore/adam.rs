use super::tensor::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of every parameter, then clears the
/// gradients.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig) {
    store.step += 1;
    let t = store.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for p in store.iter_mut() {
        let value = p.value.data_mut();
        for (i, value) in value.iter_mut().enumerate() {
            let g = p.grad[i];
            p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
            p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = p.m[i] / bc1;
            let v_hat = p.v[i] / bc2;
            *value -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        p.grad.fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Init, Rng};

    fn scalar_store(w0: f64) -> (ParamStore, crate::numcore::ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("w", &[1], Init::Constant(w0), &mut Rng::seeded(0));
        (store, id)
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut store, id) = scalar_store(0.5);
        store.get_mut(id).grad[0] = 1.0;
        let cfg = AdamConfig::with_lr(1e-3);
        adam_step(&mut store, &cfg);
        let w = store.value(id).data()[0];
        assert!((0.5 - w - 1e-3).abs() < 1e-8, "{w}");
        assert_eq!(store.get(id).grad[0], 0.0);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let (mut store, id) = scalar_store(0.5);
        let cfg = AdamConfig::with_lr(1e-2);
        for _ in 0..10 {
            adam_step(&mut store, &cfg);
        }
        assert_eq!(store.value(id).data()[0], 0.5);
    }

    #[test]
    fn minimizes_a_quadratic_bowl() {
        let (mut store, id) = scalar_store(1.0);
        let cfg = AdamConfig::with_lr(1e-2);
        for _ in 0..500 {
            let w = store.value(id).data()[0];
            store.get_mut(id).grad[0] = 2.0 * w;
            adam_step(&mut store, &cfg);
        }
        assert!(store.value(id).data()[0].abs() < 1e-2);
    }
}

use crate::error::{NnError, Result};
use crate::params::ParameterSet;

/// Adam hyperparameters plus the shared step counter used for bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NnError::invalid("adam", format!("invalid hyperparameters {self:?}")))
        }
    }
}

/// One bias-corrected Adam update over every parameter, then zeroes the
/// gradients. Fails without mutating anything if a gradient is non-finite.
pub fn adam_step(params: &mut ParameterSet, cfg: &mut AdamConfig) -> Result<()> {
    cfg.validate()?;
    if let Some(bad) = params.iter().find(|p| !p.grad.is_finite()) {
        return Err(NnError::NonFiniteGradient { name: bad.name.clone() });
    }
    cfg.step_count += 1;
    let t = cfg.step_count as i32;
    let correction1 = 1.0 - cfg.beta1.powi(t);
    let correction2 = 1.0 - cfg.beta2.powi(t);
    for p in params.entries_mut() {
        let grads = p.grad.data();
        let m = p.first_moment.data_mut();
        for (m, g) in m.iter_mut().zip(grads) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        }
        let v = p.second_moment.data_mut();
        for (v, g) in v.iter_mut().zip(grads) {
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        }
        let (m, v) = (p.first_moment.data(), p.second_moment.data());
        for ((w, m), v) in p.value.data_mut().iter_mut().zip(m).zip(v) {
            let m_hat = m / correction1;
            let v_hat = v / correction2;
            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    params.zero_grads();
    Ok(())
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(params: &mut ParameterSet, max_norm: f64) -> f64 {
    let norm = params
        .iter()
        .flat_map(|p| p.grad.data())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for p in params.entries_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

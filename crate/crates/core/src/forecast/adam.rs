/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Gradients are rescaled so their global L2 norm does not exceed this.
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 5.0,
        }
    }
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamMoments {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// Rescales `grads` in place so that `||grads||_2 <= max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

/// One Adam update at step `t` (1-based). `grads` is consumed as scratch
/// space for clipping.
pub fn adam_step(
    params: &mut [f64],
    grads: &mut [f64],
    moments: &mut AdamMoments,
    t: u64,
    cfg: &AdamConfig,
) {
    assert!(t >= 1, "adam step index is 1-based");
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), moments.m.len());
    assert_eq!(params.len(), moments.v.len());
    clip_global_norm(grads, cfg.clip_norm);
    let bc1 = 1.0 - cfg.beta1.powf(t as f64);
    let bc2 = 1.0 - cfg.beta2.powf(t as f64);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(moments.m.iter_mut())
        .zip(moments.v.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_only_decays_moments() {
        let cfg = AdamConfig::default();
        let mut params = vec![1.0, -2.0];
        let mut moments = AdamMoments {
            m: vec![0.5, 0.5],
            v: vec![0.25, 0.25],
        };
        // With g = 0 the update is still driven by the stale moments, so
        // only the pure zero-moment case leaves params untouched.
        let mut fresh = AdamMoments::zeros(2);
        adam_step(&mut params, &mut [0.0, 0.0], &mut fresh, 1, &cfg);
        assert_eq!(params, vec![1.0, -2.0]);
        assert_eq!(fresh, AdamMoments::zeros(2));

        let mut p2 = params.clone();
        adam_step(&mut p2, &mut [0.0, 0.0], &mut moments, 2, &cfg);
        assert_eq!(moments.m, vec![0.45, 0.45]);
        assert!((moments.v[0] - 0.24975).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig::default();
        let mut params = vec![0.0];
        let mut moments = AdamMoments::zeros(1);
        adam_step(&mut params, &mut [1.0], &mut moments, 1, &cfg);
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((params[0] - expected).abs() < 1e-18);
        assert!((params[0] + 0.000999999990).abs() < 1e-15);
    }

    #[test]
    fn two_steps_match_direct_recurrence() {
        let cfg = AdamConfig {
            learning_rate: 0.01,
            ..AdamConfig::default()
        };
        let g = 0.3;
        let mut params = vec![1.0];
        let mut moments = AdamMoments::zeros(1);
        adam_step(&mut params, &mut [g], &mut moments, 1, &cfg);
        adam_step(&mut params, &mut [g], &mut moments, 2, &cfg);

        // m1 = 0.1 g, v1 = 0.001 g^2; m2 = 0.19 g, v2 = 0.001999 g^2
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 0.01);
        let m1 = (1.0 - b1) * g;
        let v1 = (1.0 - b2) * g * g;
        let theta1 = 1.0 - lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
        let m2 = b1 * m1 + (1.0 - b1) * g;
        let v2 = b2 * v1 + (1.0 - b2) * g * g;
        let theta2 = theta1 - lr * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + eps);
        assert!((params[0] - theta2).abs() < 1e-15);
        assert!((moments.m[0] - 0.19 * g).abs() < 1e-15);
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut g = vec![0.3, 0.4];
        clip_global_norm(&mut g, 1.0);
        assert_eq!(g, vec![0.3, 0.4]);
    }
}

use serde::{Deserialize, Serialize};

use super::{ParamGroup, Params};

/// Adamax hyperparameters (the infinity-norm variant of Adam).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamaxConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamaxConfig {
    fn default() -> Self {
        AdamaxConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First moment `m`, infinity-norm accumulator `u`, and step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamaxState {
    pub config: AdamaxConfig,
    pub m: Params,
    pub u: Params,
    pub t: u64,
}

impl AdamaxState {
    pub fn new(like: &Params, config: AdamaxConfig) -> AdamaxState {
        let mut m = like.clone();
        m.fill(0.0);
        AdamaxState {
            config,
            u: m.clone(),
            m,
            t: 0,
        }
    }

    /// One update:
    /// m ← β₁m + (1−β₁)g, u ← max(β₂u, |g|), θ ← θ − lr/(1−β₁ᵗ) · m/(u+ε).
    /// Frozen groups keep their values and moments.
    pub fn step(&mut self, params: &mut Params, grads: &Params, lr: f64, frozen: &[ParamGroup]) {
        self.t += 1;
        let AdamaxConfig {
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let step_size = lr / (1.0 - beta1.powi(self.t as i32));
        let groups = params
            .groups_mut()
            .into_iter()
            .zip(grads.groups())
            .zip(self.m.groups_mut())
            .zip(self.u.groups_mut());
        for ((((group, theta), (_, g)), (_, m)), (_, u)) in groups {
            if frozen.contains(&group) {
                continue;
            }
            for i in 0..theta.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                u[i] = (beta2 * u[i]).max(g[i].abs());
                if m[i] != 0.0 {
                    theta[i] -= step_size * m[i] / (u[i] + epsilon);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Params {
        Params {
            w_x: vec![],
            u_h: vec![],
            b_h: vec![],
            w_o: vec![],
            b_o: v,
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Params::zeros(3, 2);
        p.w_x[1] = 0.25;
        let before = p.clone();
        let mut s = AdamaxState::new(&p, AdamaxConfig::default());
        s.step(&mut p, &Params::zeros(3, 2), 0.0007, &[]);
        assert_eq!(p, before);
    }

    #[test]
    fn unit_gradient_steps() {
        let cfg = AdamaxConfig::default();
        let mut p = scalar(0.0);
        let mut s = AdamaxState::new(&p, cfg);
        s.step(&mut p, &scalar(1.0), 0.0007, &[]);
        // m̂ = 1, u = 1
        let expected = -0.0007 / (1.0 + 1e-8);
        assert!((p.b_o - expected).abs() < 1e-12, "{}", p.b_o);
        assert!((p.b_o + 0.0007).abs() < 1e-11);
        let first = p.b_o;
        s.step(&mut p, &scalar(1.0), 0.0007, &[]);
        assert_eq!(s.u.b_o, 1.0);
        assert!((p.b_o - first + 0.0007).abs() < 1e-9);
    }

    #[test]
    fn frozen_groups_untouched() {
        let mut p = Params::zeros(2, 2);
        let mut g = Params::zeros(2, 2);
        g.fill(1.0);
        let mut s = AdamaxState::new(&p, AdamaxConfig::default());
        s.step(&mut p, &g, 0.01, &[ParamGroup::UH, ParamGroup::BO]);
        assert!(p.u_h.iter().all(|v| *v == 0.0));
        assert_eq!(p.b_o, 0.0);
        assert!(p.w_x.iter().all(|v| *v < 0.0));
    }
}

//! Inner-loop SGD (functional, differentiable) and AdamW with a linear schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{GradientMap, ParamSet, ParamVars};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
}

impl SgdConfig {
    pub fn new(lr: f64) -> Result<Self> {
        if !(lr > 0.0) {
            return Err(Error::InvalidInput(format!("SGD learning rate must be > 0, got {lr}")));
        }
        Ok(SgdConfig { lr })
    }
}

/// `θ′ = θ − α·g` as new graph nodes; the inputs are left untouched.
///
/// `alpha` may be zero here (identity step), unlike [`SgdConfig`].
pub fn sgd_functional_step(params: &ParamVars, grads: &GradientMap, alpha: f64) -> Result<ParamVars> {
    params
        .iter()
        .map(|(name, p)| {
            let g = grads.get(name)?;
            Ok((name.to_string(), p.sub(&g.scale(alpha))?))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

impl AdamWConfig {
    pub fn with_weight_decay(self, weight_decay: f64) -> Self {
        AdamWConfig { weight_decay, ..self }
    }
}

/// Adam moments with decoupled weight decay. The base rate lives with the
/// schedule; each step receives its own `lr_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: ParamSet,
    v: ParamSet,
}

#[derive(Serialize, Deserialize)]
struct AdamWStateJson {
    config: AdamWConfig,
    step: u64,
    m: serde_json::Value,
    v: serde_json::Value,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        AdamW { config, step: 0, m: ParamSet::new(), v: ParamSet::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// In-place update:
    /// `θ ← θ − lr_t·m̂/(√v̂ + ε) − lr_t·λ·θ`, both terms computed from the old `θ`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet, lr_t: f64) -> Result<()> {
        if !(lr_t >= 0.0) {
            return Err(Error::InvalidInput(format!("learning rate must be >= 0, got {lr_t}")));
        }
        let AdamWConfig { beta1, beta2, eps, weight_decay } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (name, theta) in params.iter_mut() {
            let g = grads.get(name).map_err(|_| Error::MissingGradient(name.to_string()))?;
            if g.shape() != theta.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adamw_step",
                    lhs: theta.shape().to_string(),
                    rhs: g.shape().to_string(),
                });
            }
            if !self.m.contains(name) {
                self.m.insert(name, Tensor::zeros(theta.shape()));
                self.v.insert(name, Tensor::zeros(theta.shape()));
            }
            let m = self.m.get_mut(name)?.data_mut();
            let v = self.v.get_mut(name)?.data_mut();
            for (((th, &gi), mi), vi) in theta.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *th -= lr_t * (m_hat / (v_hat.sqrt() + eps) + weight_decay * *th);
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(AdamWStateJson {
            config: self.config,
            step: self.step,
            m: self.m.to_json(),
            v: self.v.to_json(),
        })
        .expect("optimizer state serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let s: AdamWStateJson = serde_json::from_value(value.clone())?;
        Ok(AdamW { config: s.config, step: s.step, m: ParamSet::from_json(&s.m)?, v: ParamSet::from_json(&s.v)? })
    }
}

/// `base·(1 − step/total)`, clamped to zero past the end.
pub fn linear_lr(step: usize, total: usize, base: f64) -> f64 {
    let total = total.max(1);
    if step >= total {
        return 0.0;
    }
    base * (1.0 - step as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Var;
    use crate::tensor::Shape;

    fn scalar_set(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::scalar(v));
        p
    }

    #[test]
    fn sgd_examples() {
        let vars = scalar_set(1.0).to_vars();
        let grads: GradientMap = [("w".to_string(), Var::scalar(0.5))].into_iter().collect();
        let next = sgd_functional_step(&vars, &grads, 0.1).unwrap();
        assert!((next.get("w").unwrap().item().unwrap() - 0.95).abs() < 1e-15);
        assert_eq!(vars.get("w").unwrap().item().unwrap(), 1.0);
        let same = sgd_functional_step(&vars, &grads, 0.0).unwrap();
        assert_eq!(same.get("w").unwrap().item().unwrap(), 1.0);
        let empty: GradientMap = std::iter::empty().collect();
        assert!(matches!(sgd_functional_step(&vars, &empty, 0.1), Err(Error::MissingGradient(_))));
        assert!(SgdConfig::new(0.0).is_err());
    }

    #[test]
    fn sgd_step_jacobian_on_quadratic() {
        // L0 = ½·a(θ−s)², a=2, s=0.3 → dθ′/dθ = 1 − αa = 0.8 for α = 0.1
        let vars = scalar_set(0.7).to_vars();
        let theta = vars.get("w").unwrap().clone();
        let l0 = theta.add_scalar(-0.3).mul(&theta.add_scalar(-0.3)).unwrap().scale(1.0);
        let g = vars.grad(&l0, true).unwrap();
        let next = sgd_functional_step(&vars, &g, 0.1).unwrap();
        let d = vars.grad(next.get("w").unwrap(), false).unwrap();
        assert!((d.get("w").unwrap().item().unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn adamw_first_step_closed_form() {
        let mut p = scalar_set(1.0);
        let mut opt = AdamW::new(AdamWConfig { eps: 0.0, ..AdamWConfig::default() });
        opt.step(&mut p, &scalar_set(0.5), 0.01).unwrap();
        // update lr·m̂/√v̂ = 0.01, decay lr·λ·θ = 0.0001
        assert!((p.get("w").unwrap().item().unwrap() - 0.9899).abs() < 1e-12);
    }

    #[test]
    fn adamw_zero_gradient_no_decay_is_identity() {
        let mut p = scalar_set(2.5);
        let mut opt = AdamW::new(AdamWConfig::default().with_weight_decay(0.0));
        for _ in 0..5 {
            opt.step(&mut p, &scalar_set(0.0), 0.1).unwrap();
        }
        assert_eq!(p.get("w").unwrap().item().unwrap(), 2.5);
    }

    #[test]
    fn adamw_without_decay_matches_reference_adam() {
        let grads = [0.3, -1.2, 0.8, 0.05, -0.4];
        let cfg = AdamWConfig::default().with_weight_decay(0.0);
        let mut p = scalar_set(0.6);
        let mut opt = AdamW::new(cfg);
        // hand-rolled bias-corrected Adam
        let (mut theta, mut m, mut v) = (0.6f64, 0.0f64, 0.0f64);
        for (t, &g) in grads.iter().enumerate() {
            opt.step(&mut p, &scalar_set(g), 0.05).unwrap();
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let vh = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            theta -= 0.05 * mh / (vh.sqrt() + 1e-8);
            assert!((p.get("w").unwrap().item().unwrap() - theta).abs() < 1e-14);
        }
    }

    #[test]
    fn adamw_state_roundtrip() {
        let mut p = scalar_set(1.0);
        let mut opt = AdamW::new(AdamWConfig::default());
        opt.step(&mut p, &scalar_set(0.2), 0.01).unwrap();
        let back = AdamW::from_json(&opt.to_json()).unwrap();
        assert_eq!(back, opt);
        let mut a = p.clone();
        let mut b = p;
        let mut o2 = back;
        opt.step(&mut a, &scalar_set(-0.7), 0.01).unwrap();
        o2.step(&mut b, &scalar_set(-0.7), 0.01).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn adamw_rejects_shape_mismatch() {
        let mut p = scalar_set(1.0);
        let mut g = ParamSet::new();
        g.insert("w", Tensor::zeros(Shape::new(1, 2)));
        assert!(AdamW::new(AdamWConfig::default()).step(&mut p, &g, 0.1).is_err());
    }

    #[test]
    fn linear_lr_examples() {
        assert_eq!(linear_lr(0, 500, 1e-5), 1e-5);
        assert!((linear_lr(250, 500, 1e-5) - 5e-6).abs() < 1e-20);
        assert_eq!(linear_lr(500, 500, 1e-5), 0.0);
        assert_eq!(linear_lr(900, 500, 1e-5), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn linear_lr_nonincreasing(total in 1usize..2000, base in 1e-6f64..1.0) {
                let mut prev = f64::INFINITY;
                for s in 0..=total {
                    let lr = linear_lr(s, total, base);
                    prop_assert!(lr <= prev);
                    prev = lr;
                }
                prop_assert_eq!(linear_lr(total, total, base), 0.0);
            }

            #[test]
            fn adamw_descends_quadratic(theta0 in -5.0f64..5.0, target in -5.0f64..5.0) {
                prop_assume!((theta0 - target).abs() > 0.5);
                // L = ½(θ − target)²; after warm-in the loss keeps falling
                let mut p = scalar_set(theta0);
                let mut opt = AdamW::new(AdamWConfig::default().with_weight_decay(0.0));
                let loss = |p: &ParamSet| 0.5 * (p.get("w").unwrap().item().unwrap() - target).powi(2);
                let mut prev = loss(&p);
                for t in 0..200 {
                    let g = p.get("w").unwrap().item().unwrap() - target;
                    opt.step(&mut p, &scalar_set(g), 0.01).unwrap();
                    let l = loss(&p);
                    if t >= 5 && prev > 1e-3 {
                        prop_assert!(l <= prev + 1e-12, "step {t}: {l} > {prev}");
                    }
                    prev = l;
                }
                prop_assert!(loss(&p) < 0.5 * (theta0 - target).powi(2));
            }
        }
    }
}

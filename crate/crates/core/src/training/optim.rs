//! Decoupled-weight-decay adaptive-moment optimizer (AdamW) over all
//! parameter groups, hash tables included.

use crate::error::{Error, Result};
use crate::field::{NeuralField, ParamBuf};
use crate::scalar::Real;

/// Consecutive non-finite-gradient steps tolerated before aborting.
pub const MAX_CONSECUTIVE_SKIPS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub m: ParamBuf<T>,
    pub v: ParamBuf<T>,
    /// Applied update count (bias-correction time step).
    pub step: u64,
    /// Consecutive skipped steps due to non-finite gradients.
    pub consecutive_skips: u64,
    pub total_skips: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    SkippedNonFinite,
}

impl<T: Real> AdamState<T> {
    pub fn new(field: &NeuralField<T>) -> Self {
        AdamState {
            m: ParamBuf::zeros_like(field),
            v: ParamBuf::zeros_like(field),
            step: 0,
            consecutive_skips: 0,
            total_skips: 0,
        }
    }

    /// One decoupled-weight-decay update. Non-finite gradients skip the step
    /// (parameters, moments, and the step count stay untouched); after
    /// `MAX_CONSECUTIVE_SKIPS` consecutive skips training aborts.
    pub fn step(
        &mut self,
        field: &mut NeuralField<T>,
        grads: &ParamBuf<T>,
        lr: T,
        cfg: &AdamConfig,
    ) -> Result<StepOutcome> {
        if !grads.is_finite() {
            self.consecutive_skips += 1;
            self.total_skips += 1;
            if self.consecutive_skips >= MAX_CONSECUTIVE_SKIPS {
                return Err(Error::OptimizerDiverged(self.consecutive_skips));
            }
            return Ok(StepOutcome::SkippedNonFinite);
        }
        self.consecutive_skips = 0;
        self.step += 1;
        let t = self.step as i32;
        let beta1 = T::lit(cfg.beta1);
        let beta2 = T::lit(cfg.beta2);
        let eps = T::lit(cfg.eps);
        let decay = T::lit(cfg.weight_decay);
        let one = T::one();
        let bc1 = one - beta1.powi(t);
        let bc2 = one - beta2.powi(t);
        let mut g_slices = grads.slices();
        let mut m_slices = self.m.slices_mut();
        let mut v_slices = self.v.slices_mut();
        for (((p, g), m), v) in field
            .param_slices_mut()
            .into_iter()
            .zip(g_slices.drain(..))
            .zip(m_slices.drain(..))
            .zip(v_slices.drain(..))
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (one - beta1) * gi;
                v[i] = beta2 * v[i] + (one - beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] = p[i] - lr * (m_hat / (v_hat.sqrt() + eps) + decay * p[i]);
            }
        }
        Ok(StepOutcome::Applied)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::EncodingConfig;
    use crate::field::FieldConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_field() -> NeuralField<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        NeuralField::init(
            EncodingConfig {
                levels: 1,
                v_min: 2,
                v_max: 2,
                channels: 1,
                max_table_entries: 1 << 8,
            },
            FieldConfig {
                sdf_hidden: 4,
                geo_features: 2,
                color_hidden: 4,
                color_layers: 4,
                embed_dim: 0,
                n_images: 0,
            },
            0.5,
            &mut rng,
        )
        .unwrap()
    }

    fn snapshot(field: &mut NeuralField<f64>) -> Vec<f64> {
        field
            .param_slices_mut()
            .iter()
            .flat_map(|s| s.iter().copied())
            .collect()
    }

    #[test]
    fn zero_grads_no_decay_leaves_params_unchanged() {
        let mut field = tiny_field();
        let before = snapshot(&mut field);
        let grads = ParamBuf::zeros_like(&field);
        let mut state = AdamState::new(&field);
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        state.step(&mut field, &grads, 0.01, &cfg).unwrap();
        assert_eq!(snapshot(&mut field), before);
    }

    #[test]
    fn zero_grads_with_decay_scales_params() {
        let mut field = tiny_field();
        let before = snapshot(&mut field);
        let grads = ParamBuf::zeros_like(&field);
        let mut state = AdamState::new(&field);
        let cfg = AdamConfig {
            weight_decay: 0.5,
            ..AdamConfig::default()
        };
        let lr = 0.01;
        state.step(&mut field, &grads, lr, &cfg).unwrap();
        let after = snapshot(&mut field);
        for (b, a) in before.iter().zip(&after) {
            assert!((a - b * (1.0 - lr * 0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_gradient_limit_is_signed_lr_step() {
        // drive a single scalar parameter with constant gradient; updates
        // approach -lr * sign(g) once the moments saturate
        let mut field = tiny_field();
        let mut state = AdamState::new(&field);
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut grads = ParamBuf::zeros_like(&field);
        let g = 0.37;
        let lr = 0.005;
        let mut prev = field.variance.log_s;
        for step in 0..1000 {
            grads.log_s = g;
            state.step(&mut field, &grads, lr, &cfg).unwrap();
            let delta = field.variance.log_s - prev;
            prev = field.variance.log_s;
            if step > 100 {
                assert!(
                    (delta + lr).abs() < lr * 0.02,
                    "step {step}: delta {delta} should approach -lr"
                );
            }
        }
    }

    #[test]
    fn non_finite_grads_skip_and_eventually_abort() {
        let mut field = tiny_field();
        let before = snapshot(&mut field);
        let mut state = AdamState::new(&field);
        let cfg = AdamConfig::default();
        let mut grads = ParamBuf::zeros_like(&field);
        grads.log_s = f64::NAN;
        for i in 0..MAX_CONSECUTIVE_SKIPS - 1 {
            let outcome = state.step(&mut field, &grads, 0.01, &cfg).unwrap();
            assert_eq!(outcome, StepOutcome::SkippedNonFinite, "skip {i}");
        }
        assert_eq!(snapshot(&mut field), before, "skipped steps must not touch params");
        assert!(state.step(&mut field, &grads, 0.01, &cfg).is_err());
    }

    #[test]
    fn finite_step_resets_skip_counter() {
        let mut field = tiny_field();
        let mut state = AdamState::new(&field);
        let cfg = AdamConfig::default();
        let mut bad = ParamBuf::zeros_like(&field);
        bad.log_s = f64::INFINITY;
        let good = ParamBuf::zeros_like(&field);
        for _ in 0..50 {
            state.step(&mut field, &bad, 0.01, &cfg).unwrap();
        }
        state.step(&mut field, &good, 0.01, &cfg).unwrap();
        assert_eq!(state.consecutive_skips, 0);
        assert_eq!(state.total_skips, 50);
    }
}

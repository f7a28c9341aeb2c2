//! The progressive level-of-detail controller: step size `epsilon`, hash
//! level activation, curvature warmup/decay, and the learning-rate plan.
//!
//! Every quantity is a pure function of the iteration count given a config,
//! so replaying the schedule from any checkpoint reproduces it exactly.

use crate::encoding::EncodingConfig;
use crate::mode::GradientMode;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub total_iters: u64,
    /// Iterations between epsilon decays / level activations.
    pub activation_interval: u64,
    /// Linear warmup window for the learning rate and curvature weight.
    pub warmup_iters: u64,
    /// Iterations at which the learning rate decays by 10x.
    pub lr_milestones: [u64; 2],
    pub base_lr: f64,
    /// Hash levels active at iteration zero (progressive modes).
    pub initial_active_levels: usize,
    pub w_eik: f64,
    pub w_curv_peak: f64,
    /// Topology warmup: ramp the curvature weight linearly over the warmup
    /// window instead of applying it at full strength from iteration zero.
    pub curvature_warmup: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleState<T> {
    pub iteration: u64,
    /// Numerical-gradient step size in scene units; never increases.
    pub epsilon: T,
    pub active_levels: usize,
    pub learning_rate: T,
    pub w_curv_current: T,
    /// Number of epsilon decreases so far.
    pub decay_count: u64,
}

/// Schedule state at an absolute iteration (pure).
pub fn schedule_state_at<T: Real>(
    cfg: &ScheduleConfig,
    encoding: &EncodingConfig,
    mode: GradientMode,
    iteration: u64,
) -> ScheduleState<T> {
    let levels = encoding.levels as u64;
    let b = encoding.growth_factor();
    let eps0 = 2.0 / encoding.v_min as f64;
    let eps_floor = 2.0 / encoding.v_max as f64;
    let max_decays = levels.saturating_sub(1);
    let raw_intervals = if cfg.activation_interval == 0 {
        0
    } else {
        iteration / cfg.activation_interval
    };
    let decay_count = raw_intervals.min(max_decays);
    let epsilon = (eps0 * b.powi(-(decay_count as i32))).max(eps_floor);

    let active_levels = if mode.is_progressive() {
        (cfg.initial_active_levels as u64 + decay_count).min(levels) as usize
    } else {
        encoding.levels
    };

    let ramp = if cfg.warmup_iters == 0 {
        1.0
    } else {
        ((iteration + 1) as f64 / cfg.warmup_iters as f64).min(1.0)
    };
    let curv_ramp = if cfg.curvature_warmup { ramp } else { 1.0 };
    let mut lr = cfg.base_lr * ramp;
    for &m in &cfg.lr_milestones {
        if m > 0 && iteration >= m {
            lr *= 0.1;
        }
    }

    // Curvature weight: linear ramp to the peak, then one 1/b decay per
    // epsilon decrease occurring after the warmup window. The ramp reaches
    // the peak at iteration warmup-1, so a decay landing exactly at
    // `warmup_iters` already counts as post-warmup.
    let decays_within_warmup = if cfg.activation_interval == 0 || cfg.warmup_iters == 0 {
        0
    } else {
        ((cfg.warmup_iters - 1) / cfg.activation_interval).min(max_decays)
    };
    let post_warmup_decays = decay_count.saturating_sub(decays_within_warmup);
    let w_curv = cfg.w_curv_peak * curv_ramp * b.powi(-(post_warmup_decays as i32));

    ScheduleState {
        iteration,
        epsilon: T::lit(epsilon),
        active_levels,
        learning_rate: T::lit(lr),
        w_curv_current: T::lit(w_curv),
        decay_count,
    }
}

/// Advances the schedule by one iteration. Implemented as a pure recompute
/// so that replays from checkpoints are bit-exact.
pub fn schedule_step<T: Real>(
    state: &ScheduleState<T>,
    cfg: &ScheduleConfig,
    encoding: &EncodingConfig,
    mode: GradientMode,
) -> ScheduleState<T> {
    schedule_state_at(cfg, encoding, mode, state.iteration + 1)
}

/// Desk-scale default; see [`ScheduleConfig::paper`] for the paper plan.
impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            total_iters: 5000,
            activation_interval: 500,
            warmup_iters: 50,
            lr_milestones: [3000, 4000],
            base_lr: 1e-3,
            initial_active_levels: 2,
            w_eik: 0.1,
            w_curv_peak: 5e-4,
            curvature_warmup: true,
        }
    }
}

impl ScheduleConfig {
    /// Paper-scale defaults: 500k iterations, 5k interval and warmup,
    /// decays at 300k/400k.
    pub fn paper() -> Self {
        ScheduleConfig {
            total_iters: 500_000,
            activation_interval: 5_000,
            warmup_iters: 5_000,
            lr_milestones: [300_000, 400_000],
            base_lr: 1e-3,
            initial_active_levels: 4,
            w_eik: 0.1,
            w_curv_peak: 5e-4,
            curvature_warmup: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_encoding() -> EncodingConfig {
        EncodingConfig {
            levels: 16,
            v_min: 32,
            v_max: 2048,
            channels: 8,
            max_table_entries: 1 << 22,
        }
    }

    #[test]
    fn epsilon_starts_at_coarsest_cell() {
        let s = schedule_state_at::<f64>(
            &ScheduleConfig::paper(),
            &paper_encoding(),
            GradientMode::NgP,
            0,
        );
        assert_eq!(s.epsilon, 0.0625); // 2/32
        assert_eq!(s.active_levels, 4);
        assert_eq!(s.decay_count, 0);
    }

    #[test]
    fn epsilon_after_first_decay() {
        let s = schedule_state_at::<f64>(
            &ScheduleConfig::paper(),
            &paper_encoding(),
            GradientMode::NgP,
            5_000,
        );
        // 0.0625 / b with b = 2^(6/15), frozen from independent evaluation
        assert!((s.epsilon - 0.047366142703449944).abs() < 1e-15);
        assert_eq!(s.decay_count, 1);
    }

    #[test]
    fn activation_increments_exactly_at_intervals() {
        let cfg = ScheduleConfig::paper();
        let enc = paper_encoding();
        let active = |iter| {
            schedule_state_at::<f64>(&cfg, &enc, GradientMode::NgP, iter).active_levels
        };
        assert_eq!(active(0), 4);
        assert_eq!(active(4_999), 4);
        assert_eq!(active(5_000), 5);
        assert_eq!(active(9_999), 5);
        assert_eq!(active(10_000), 6);
        // capped at the level count
        assert_eq!(active(400_000), 16);
    }

    #[test]
    fn non_progressive_modes_activate_everything() {
        let cfg = ScheduleConfig::paper();
        let enc = paper_encoding();
        for mode in [GradientMode::Ag, GradientMode::Ng] {
            let s = schedule_state_at::<f64>(&cfg, &enc, mode, 0);
            assert_eq!(s.active_levels, 16);
        }
    }

    #[test]
    fn epsilon_monotone_and_floored() {
        let cfg = ScheduleConfig::paper();
        let enc = paper_encoding();
        let mut prev = f64::INFINITY;
        for iter in (0..200_000).step_by(1000) {
            let s = schedule_state_at::<f64>(&cfg, &enc, GradientMode::NgP, iter);
            assert!(s.epsilon <= prev, "epsilon must never increase");
            assert!(s.epsilon >= 2.0 / 2048.0 - 1e-12);
            prev = s.epsilon;
        }
        // far beyond all decays: pinned at the finest cell size
        let end = schedule_state_at::<f64>(&cfg, &enc, GradientMode::NgP, 500_000);
        assert!((end.epsilon - 2.0 / 2048.0).abs() < 1e-12);
    }

    #[test]
    fn epsilon_at_least_finest_active_cell() {
        let cfg = ScheduleConfig::paper();
        let enc = paper_encoding();
        let res = enc.level_resolutions();
        for iter in (0..200_000).step_by(500) {
            let s = schedule_state_at::<f64>(&cfg, &enc, GradientMode::NgP, iter);
            if s.active_levels < enc.levels {
                let finest_active_cell = 2.0 / res[s.active_levels - 1] as f64;
                assert!(
                    s.epsilon >= finest_active_cell - 1e-9,
                    "iter {iter}: eps {} < active cell {finest_active_cell}",
                    s.epsilon
                );
            }
        }
    }

    #[test]
    fn learning_rate_warmup_and_milestones() {
        let cfg = ScheduleConfig::paper();
        let enc = paper_encoding();
        let lr = |iter| {
            schedule_state_at::<f64>(&cfg, &enc, GradientMode::NgP, iter).learning_rate
        };
        assert!((lr(2_499) - 1e-3 * 0.5).abs() < 1e-9);
        assert!((lr(4_999) - 1e-3).abs() < 1e-12);
        assert!((lr(100_000) - 1e-3).abs() < 1e-12);
        assert!((lr(300_000) - 1e-4).abs() < 1e-12);
        assert!((lr(400_000) - 1e-5).abs() < 1e-12);
    }

    #[test]
    fn curvature_ramps_then_decays_by_growth_factor() {
        let cfg = ScheduleConfig::paper();
        let enc = paper_encoding();
        let b = enc.growth_factor();
        let w = |iter| {
            schedule_state_at::<f64>(&cfg, &enc, GradientMode::NgP, iter).w_curv_current
        };
        assert!(w(0) < 1e-6); // ramp starts near zero
        assert!((w(2_499) - 5e-4 * 0.5).abs() < 1e-9);
        // first decay coincides with warmup end here (interval == warmup);
        // the decay applies only to post-warmup decreases
        let before = w(4_999);
        let after = w(5_000);
        assert!((before - 5e-4).abs() < 1e-9);
        assert!((after - 5e-4 / b).abs() < 1e-9);
        let after2 = w(10_000);
        assert!((after2 - 5e-4 / (b * b)).abs() < 1e-9);
    }

    #[test]
    fn disabling_topology_warmup_applies_full_strength_immediately() {
        let mut cfg = ScheduleConfig::paper();
        cfg.curvature_warmup = false;
        let enc = paper_encoding();
        let s0 = schedule_state_at::<f64>(&cfg, &enc, GradientMode::NgP, 0);
        assert!((s0.w_curv_current - 5e-4).abs() < 1e-9);
        // learning-rate warmup is unaffected
        assert!(s0.learning_rate < 1e-5);
    }

    #[test]
    fn replay_is_deterministic() {
        let cfg = ScheduleConfig::paper();
        let enc = paper_encoding();
        let mut s = schedule_state_at::<f32>(&cfg, &enc, GradientMode::NgP, 0);
        for _ in 0..100 {
            s = schedule_step(&s, &cfg, &enc, GradientMode::NgP);
        }
        let direct = schedule_state_at::<f32>(&cfg, &enc, GradientMode::NgP, 100);
        assert_eq!(s, direct);
    }
}

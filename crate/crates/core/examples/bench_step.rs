//! Timing probe for one training step at the desk-scale configuration.
//!
//! ```sh
//! cargo run --release -p carve-core --example bench_step
//! ```

use std::time::Instant;

use carve_core::encoding::EncodingConfig;
use carve_core::field::{FieldConfig, NeuralField};
use carve_core::geometry::{Camera, Vec3};
use carve_core::mode::GradientMode;
use carve_core::renderer::SamplerConfig;
use carve_core::training::{
    forward_backward, prepare_rays, schedule_state_at, AdamConfig, AdamState, LossWeights,
    ScheduleConfig, StepSettings, StepWorkspace, TrainView,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let encoding = EncodingConfig {
        levels: 6,
        v_min: 16,
        v_max: 64,
        channels: 4,
        max_table_entries: 1 << 16,
    };
    let field_cfg = FieldConfig {
        sdf_hidden: 64,
        geo_features: 15,
        color_hidden: 64,
        color_layers: 4,
        embed_dim: 0,
        n_images: 16,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut field = NeuralField::<f32>::init(encoding, field_cfg, 0.5, &mut rng).unwrap();
    println!("params: {}", field.param_count());

    let views: Vec<TrainView<f32>> = (0..16)
        .map(|i| {
            let angle = i as f32 * 0.39;
            let eye = Vec3::new(2.5 * angle.cos(), 2.5 * angle.sin(), 1.2);
            let camera = Camera::look_at(
                77.0,
                77.0,
                32.0,
                32.0,
                64,
                64,
                eye,
                Vec3::zero(),
                Vec3::new(0.0, 0.0, 1.0),
            );
            let pixels = (0..64 * 64)
                .map(|p| {
                    let v = (p % 97) as f32 / 96.0;
                    [v, 1.0 - v, 0.3]
                })
                .collect();
            TrainView {
                camera,
                pixels,
                image_id: i,
            }
        })
        .collect();

    let sched_cfg = ScheduleConfig {
        total_iters: 5000,
        activation_interval: 500,
        warmup_iters: 50,
        lr_milestones: [3000, 4000],
        base_lr: 1e-3,
        initial_active_levels: 2,
        w_eik: 0.1,
        w_curv_peak: 5e-4,
        curvature_warmup: true,
    };
    let mode = GradientMode::NgP;
    let settings = StepSettings {
        sampler: SamplerConfig {
            n_uniform: 24,
            n_importance: 16,
            rounds: 1,
        },
        rays_per_step: 128,
        background: [0.1, 0.1, 0.1],
        seed: 0,
        mode,
    };
    let mut ws = StepWorkspace::new(&field);
    let mut adam = AdamState::new(&field);
    let adam_cfg = AdamConfig::default();

    // warm up and then time
    for phase in 0..2 {
        let iters = if phase == 0 { 5 } else { 50 };
        let start = Instant::now();
        let mut sample_time = std::time::Duration::ZERO;
        for k in 0..iters {
            let iter = 2600 + k; // mid-training: 5 extra levels active
            let schedule = schedule_state_at::<f32>(&sched_cfg, &encoding, mode, iter);
            let weights = LossWeights {
                w_eik: 0.1,
                w_curv_peak: 5e-4,
                w_curv_current: schedule.w_curv_current,
            };
            let t0 = Instant::now();
            let rays = prepare_rays(&field, &views, &schedule, &settings, iter);
            sample_time += t0.elapsed();
            let (parts, total, stats) =
                forward_backward(&field, &rays, &schedule, &settings, &weights, &mut ws).unwrap();
            adam.step(&mut field, &ws.grads, schedule.learning_rate, &adam_cfg)
                .unwrap();
            if phase == 1 && k == 0 {
                println!(
                    "loss {total:.5} (rgb {:.5} eik {:.5} curv {:.5}) points {} missed {}",
                    parts.rgb, parts.eikonal, parts.curvature, stats.points, stats.missed_rays
                );
            }
        }
        if phase == 1 {
            let per = start.elapsed().as_secs_f64() / iters as f64;
            println!(
                "per-step: {:.1} ms (sampling {:.1} ms)  -> 5000 iters ~ {:.1} min",
                per * 1e3,
                sample_time.as_secs_f64() / iters as f64 * 1e3,
                per * 5000.0 / 60.0
            );
        }
    }
}

//! SDF-based volume rendering: hierarchical ray sampling, the logistic
//! SDF-to-opacity conversion, and front-to-back compositing into pixel
//! colors, depths, and normals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::{numerical_gradient, FieldSample, NeuralField, SdfEvalCache};
use crate::geometry::{generate_ray, ray_sphere_bounds, Camera, Ray, Vec3};
use crate::mlp::sigmoid;
use crate::mode::GradientMode;
use crate::scalar::Real;

/// Radius of the rendering domain sphere. Scenes are normalized to fit
/// inside radius 0.95, leaving a margin inside the sampling domain.
pub const DOMAIN_RADIUS: f64 = 1.0;

/// Upper clamp on per-segment opacity; transmittance would hit exact zero
/// and kill gradients downstream without it.
pub const ALPHA_MAX_GAP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Stratified-uniform base samples per ray.
    pub n_uniform: usize,
    /// Importance samples added per round.
    pub n_importance: usize,
    /// Importance resampling rounds.
    pub rounds: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_uniform: 24,
            n_importance: 16,
            rounds: 1,
        }
    }
}

/// Monotone sample positions along one ray.
#[derive(Debug, Clone)]
pub struct RaySamples<T> {
    pub t: Vec<T>,
    pub x: Vec<Vec3<T>>,
    /// Gaps `delta_i = t_{i+1} - t_i` (one shorter than `t`).
    pub delta: Vec<T>,
}

impl<T: Real> RaySamples<T> {
    fn from_sorted(ray: &Ray<T>, t: Vec<T>) -> Self {
        let x = t.iter().map(|&ti| ray.point_at(ti)).collect();
        let delta = t.windows(2).map(|w| w[1] - w[0]).collect();
        RaySamples { t, x, delta }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Composited output of one pixel.
#[derive(Debug, Clone)]
pub struct RenderOutput<T> {
    pub rgb: [T; 3],
    pub weights: Vec<T>,
    pub weight_sum: T,
    /// Expected depth `sum(w t) / sum(w)`; zero for background-only rays.
    pub depth: T,
    /// Expected (unnormalized) normal `sum(w n)`.
    pub normal: Vec3<T>,
    /// Residual transmittance multiplying the background.
    pub residual: T,
}

impl<T: Real> RenderOutput<T> {
    pub fn background(rgb: [T; 3]) -> Self {
        RenderOutput {
            rgb,
            weights: Vec::new(),
            weight_sum: T::zero(),
            depth: T::zero(),
            normal: Vec3::zero(),
            residual: T::one(),
        }
    }
}

/// Converts a consecutive SDF pair into a segment opacity through the
/// logistic CDF with sharpness `s`, clamped to `[0, 1 - ALPHA_MAX_GAP]`.
pub fn sdf_to_alpha<T: Real>(f_i: T, f_next: T, s: T) -> T {
    let phi_i = sigmoid(s * f_i);
    if phi_i <= T::zero() {
        // deep-inside-surface underflow
        return T::zero();
    }
    let phi_next = sigmoid(s * f_next);
    ((phi_i - phi_next) / phi_i)
        .max(T::zero())
        .min(T::one() - T::lit(ALPHA_MAX_GAP))
}

/// Front-to-back compositing: `rgb = sum T_i alpha_i c_i + T_res background`.
/// Returns the output with per-segment weights and residual transmittance.
pub fn composite<T: Real>(alphas: &[T], colors: &[[T; 3]], background: [T; 3]) -> RenderOutput<T> {
    debug_assert_eq!(alphas.len(), colors.len());
    let mut rgb = [T::zero(); 3];
    let mut weights = Vec::with_capacity(alphas.len());
    let mut transmittance = T::one();
    let mut weight_sum = T::zero();
    for (&alpha, color) in alphas.iter().zip(colors) {
        let w = transmittance * alpha;
        for (o, &c) in rgb.iter_mut().zip(color) {
            *o += w * c;
        }
        weights.push(w);
        weight_sum += w;
        transmittance *= T::one() - alpha;
    }
    for (o, &b) in rgb.iter_mut().zip(&background) {
        *o += transmittance * b;
    }
    RenderOutput {
        rgb,
        weights,
        weight_sum,
        depth: T::zero(),
        normal: Vec3::zero(),
        residual: transmittance,
    }
}

/// Deterministic per-pixel random stream derived from `(seed, image, pixel)`
/// so parallel scheduling never changes results.
pub fn pixel_rng(seed: u64, image_id: u64, pixel_id: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&image_id.to_le_bytes());
    key[16..24].copy_from_slice(&pixel_id.to_le_bytes());
    key[24..32].copy_from_slice(&0x9e37_79b9_7f4a_7c15u64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Stratified-uniform samples in `[near, far]` followed by importance
/// resampling rounds proportional to the current weight estimates. The SDF
/// closure is evaluated without gradients (sampling is detached).
pub fn sample_ray<T: Real>(
    ray: &Ray<T>,
    bounds: (T, T),
    cfg: &SamplerConfig,
    sharpness: T,
    mut sdf: impl FnMut(Vec3<T>) -> T,
    rng: &mut impl Rng,
) -> RaySamples<T> {
    let (near, far) = bounds;
    debug_assert!(cfg.n_uniform >= 2, "need at least two base samples");
    let span = far - near;
    let n = cfg.n_uniform;
    let mut t: Vec<T> = (0..n)
        .map(|j| {
            let jitter = T::lit(rng.gen_range(0.0..1.0));
            near + span * (T::from_usize(j).unwrap() + jitter) / T::from_usize(n).unwrap()
        })
        .collect();

    if cfg.n_importance > 0 && cfg.rounds > 0 {
        let mut values: Vec<T> = t.iter().map(|&ti| sdf(ray.point_at(ti))).collect();
        for _ in 0..cfg.rounds {
            // weights of the current segment estimate
            let mut cdf = Vec::with_capacity(t.len() - 1);
            let mut transmittance = T::one();
            let mut total = T::zero();
            for i in 0..t.len() - 1 {
                let alpha = sdf_to_alpha(values[i], values[i + 1], sharpness);
                total += transmittance * alpha;
                transmittance *= T::one() - alpha;
                cdf.push(total);
            }
            let mut new_t = Vec::with_capacity(cfg.n_importance);
            for _ in 0..cfg.n_importance {
                let u = T::lit(rng.gen_range(0.0..1.0));
                let seg = if total > T::lit(1e-12) {
                    let target = u * total;
                    cdf.partition_point(|&c| c < target).min(t.len() - 2)
                } else {
                    // no surface evidence yet: uniform over segments
                    (u.to_f64() * (t.len() - 1) as f64) as usize
                }
                .min(t.len() - 2);
                let frac = T::lit(rng.gen_range(0.0..1.0));
                new_t.push(t[seg] + (t[seg + 1] - t[seg]) * frac);
            }
            for ti in new_t {
                let v = sdf(ray.point_at(ti));
                let pos = t.partition_point(|&existing| existing < ti);
                t.insert(pos, ti);
                values.insert(pos, v);
            }
        }
    }

    // enforce strictly increasing positions
    let min_gap = span * T::lit(1e-9);
    let mut filtered = Vec::with_capacity(t.len());
    for ti in t {
        if filtered.last().map_or(true, |&last: &T| ti - last > min_gap) {
            filtered.push(ti);
        }
    }
    RaySamples::from_sorted(ray, filtered)
}

/// A neural field bound to its schedule-dependent evaluation settings.
pub struct BoundField<'a, T> {
    pub field: &'a NeuralField<T>,
    pub active_levels: usize,
    pub epsilon: T,
    pub mode: GradientMode,
}

impl<'a, T: Real> BoundField<'a, T> {
    pub fn sdf(&self, x: Vec3<T>) -> T {
        let mut cache = SdfEvalCache::default();
        self.field.sdf_forward(x, self.active_levels, &mut cache)
    }

    /// SDF, surface normal (numerical or analytic per mode), Laplacian, and
    /// geometric features at `x`.
    pub fn sample(&self, x: Vec3<T>) -> FieldSample<T> {
        let mut cache = SdfEvalCache::default();
        let sdf = self.field.sdf_forward(x, self.active_levels, &mut cache);
        let features = cache.features().to_vec();
        if self.mode.is_numerical() {
            let mut scratch = SdfEvalCache::default();
            let (normal, offsets) = numerical_gradient(
                |p| self.field.sdf_forward(p, self.active_levels, &mut scratch),
                x,
                self.epsilon,
            );
            let laplacian = crate::field::numerical_laplacian(sdf, &offsets, self.epsilon);
            FieldSample {
                sdf,
                normal,
                laplacian,
                features,
            }
        } else {
            let mut ag = crate::field::AgCache::default();
            let normal = self.field.analytic_grad_forward(&cache, &mut ag);
            FieldSample {
                sdf,
                normal,
                laplacian: T::zero(),
                features,
            }
        }
    }

    pub fn radiance(
        &self,
        x: Vec3<T>,
        normal: Vec3<T>,
        view: Vec3<T>,
        features: &[T],
        image: Option<usize>,
    ) -> [T; 3] {
        self.field.color_eval(x, normal, view, features, image)
    }

    pub fn sharpness(&self) -> T {
        self.field.variance.s()
    }
}

/// Settings for a single rendered pixel or image.
#[derive(Debug, Clone, Copy)]
pub struct RenderSettings<T> {
    pub sampler: SamplerConfig,
    pub background: [T; 3],
    pub seed: u64,
}

/// Full pipeline for one pixel: ray, sphere bounds, hierarchical samples,
/// SDF + normals, radiance, compositing. The normals passed to the color
/// network are the same (mode-dependent) normals the eikonal loss uses.
pub fn render_pixel<T: Real>(
    camera: &Camera<T>,
    u: T,
    v: T,
    field: &BoundField<'_, T>,
    settings: &RenderSettings<T>,
    image: Option<usize>,
    rng: &mut impl Rng,
) -> crate::error::Result<RenderOutput<T>> {
    let ray = generate_ray(camera, u, v)?;
    let Some(bounds) = ray_sphere_bounds(&ray, T::lit(DOMAIN_RADIUS)) else {
        return Ok(RenderOutput::background(settings.background));
    };
    let samples = sample_ray(
        &ray,
        bounds,
        &settings.sampler,
        field.sharpness(),
        |p| field.sdf(p),
        rng,
    );
    Ok(render_samples(&ray, &samples, field, settings.background, image))
}

/// Shades pre-sampled positions and composites them.
pub fn render_samples<T: Real>(
    ray: &Ray<T>,
    samples: &RaySamples<T>,
    field: &BoundField<'_, T>,
    background: [T; 3],
    image: Option<usize>,
) -> RenderOutput<T> {
    let n = samples.len();
    if n < 2 {
        return RenderOutput::background(background);
    }
    let s = field.sharpness();
    let mut field_samples = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        field_samples.push(field.sample(samples.x[i]));
    }
    let last_sdf = field.sdf(samples.x[n - 1]);
    let mut alphas = Vec::with_capacity(n - 1);
    let mut colors = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let next = if i + 1 < n - 1 {
            field_samples[i + 1].sdf
        } else {
            last_sdf
        };
        alphas.push(sdf_to_alpha(field_samples[i].sdf, next, s));
        colors.push(field.radiance(
            samples.x[i],
            field_samples[i].normal,
            ray.direction,
            &field_samples[i].features,
            image,
        ));
    }
    let mut out = composite(&alphas, &colors, background);
    let mut depth_acc = T::zero();
    let mut normal_acc = Vec3::zero();
    for (i, &w) in out.weights.iter().enumerate() {
        depth_acc += w * samples.t[i];
        normal_acc += field_samples[i].normal * w;
    }
    out.depth = if out.weight_sum > T::zero() {
        depth_acc / out.weight_sum
    } else {
        T::zero()
    };
    out.normal = normal_acc;
    out
}

/// Renders a full image in parallel. Pixel order never affects results:
/// each pixel draws from its own `(seed, image_id, pixel)` stream.
pub fn render_image<T: Real>(
    camera: &Camera<T>,
    field: &BoundField<'_, T>,
    settings: &RenderSettings<T>,
    image_id: u64,
    embed_image: Option<usize>,
) -> crate::error::Result<Vec<RenderOutput<T>>> {
    use rayon::prelude::*;
    let (w, h) = (camera.width as usize, camera.height as usize);
    (0..w * h)
        .into_par_iter()
        .map(|idx| {
            let (px, py) = (idx % w, idx / w);
            let mut rng = pixel_rng(settings.seed, image_id, idx as u64);
            render_pixel(
                camera,
                T::from_usize(px).unwrap(),
                T::from_usize(py).unwrap(),
                field,
                settings,
                embed_image,
                &mut rng,
            )
        })
        .collect()
}

//! Ground-truth data factory: analytic CSG scenes with exact or
//! bounded-error SDFs, a sphere-traced shader, and multi-view dataset
//! generation at desk scale.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{generate_ray, sensor_ray, Camera, Ray, Vec3};
use crate::scalar::Real;

/// Sphere-tracing step cap and hit threshold.
pub const TRACE_MAX_STEPS: usize = 256;
pub const TRACE_HIT_EPS: f64 = 1e-4;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum Primitive {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
    },
    Torus {
        center: [f64; 3],
        major_radius: f64,
        minor_radius: f64,
    },
}

/// CSG tree over primitives: union is `min`, intersection `max`, difference
/// `max(a, -b)`. Single primitives are exact SDFs; combinations are exact
/// for unions outside overlap regions and bounded elsewhere.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum CsgNode {
    Leaf {
        shape: Primitive,
        albedo: [f64; 3],
    },
    Union(Box<CsgNode>, Box<CsgNode>),
    Intersection(Box<CsgNode>, Box<CsgNode>),
    Difference(Box<CsgNode>, Box<CsgNode>),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AnalyticScene {
    pub root: CsgNode,
    pub background: [f64; 3],
    /// Direction the light travels toward the scene (normalized on use).
    pub light_dir: [f64; 3],
    pub ambient: f64,
    /// Optional Blinn-Phong lobe `(strength, exponent)` for the
    /// view-dependence test scene.
    pub specular: Option<(f64, f64)>,
    /// Per-image exposure gains of the EXPOSURE dataset variant.
    pub exposure_gains: Option<Vec<f64>>,
}

/// The canonical desk-scale scenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SceneKind {
    Sphere,
    Box,
    Torus,
    CsgDiff,
}

impl SceneKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sphere" => Ok(SceneKind::Sphere),
            "box" => Ok(SceneKind::Box),
            "torus" => Ok(SceneKind::Torus),
            "csgdiff" | "csg-diff" | "csg_diff" => Ok(SceneKind::CsgDiff),
            other => Err(Error::invalid(format!(
                "unknown scene '{other}' (expected sphere, box, torus, csgdiff)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SceneKind::Sphere => "sphere",
            SceneKind::Box => "box",
            SceneKind::Torus => "torus",
            SceneKind::CsgDiff => "csgdiff",
        }
    }
}

impl AnalyticScene {
    pub fn canonical(kind: SceneKind) -> Self {
        let base = AnalyticScene {
            root: CsgNode::Leaf {
                shape: Primitive::Sphere {
                    center: [0.0; 3],
                    radius: 0.5,
                },
                albedo: [0.85, 0.25, 0.2],
            },
            background: [0.08, 0.08, 0.1],
            light_dir: [-0.5, 0.35, -0.8],
            ambient: 0.25,
            specular: None,
            exposure_gains: None,
        };
        match kind {
            SceneKind::Sphere => base,
            SceneKind::Box => AnalyticScene {
                root: CsgNode::Leaf {
                    shape: Primitive::Box {
                        center: [0.0; 3],
                        half_extents: [0.42, 0.34, 0.3],
                    },
                    albedo: [0.25, 0.55, 0.85],
                },
                ..base
            },
            SceneKind::Torus => AnalyticScene {
                root: CsgNode::Leaf {
                    shape: Primitive::Torus {
                        center: [0.0; 3],
                        major_radius: 0.42,
                        minor_radius: 0.16,
                    },
                    albedo: [0.35, 0.75, 0.3],
                },
                ..base
            },
            SceneKind::CsgDiff => AnalyticScene {
                root: CsgNode::Difference(
                    Box::new(CsgNode::Leaf {
                        shape: Primitive::Sphere {
                            center: [0.0; 3],
                            radius: 0.5,
                        },
                        albedo: [0.85, 0.65, 0.2],
                    }),
                    Box::new(CsgNode::Leaf {
                        shape: Primitive::Box {
                            center: [0.3, 0.0, 0.3],
                            half_extents: [0.34, 0.34, 0.34],
                        },
                        albedo: [0.6, 0.3, 0.75],
                    }),
                ),
                ..base
            },
        }
    }
}

fn primitive_sdf<T: Real>(shape: &Primitive, x: Vec3<T>) -> T {
    match shape {
        Primitive::Sphere { center, radius } => {
            let c = Vec3::new(T::lit(center[0]), T::lit(center[1]), T::lit(center[2]));
            (x - c).norm() - T::lit(*radius)
        }
        Primitive::Box {
            center,
            half_extents,
        } => {
            let c = Vec3::new(T::lit(center[0]), T::lit(center[1]), T::lit(center[2]));
            let h = Vec3::new(
                T::lit(half_extents[0]),
                T::lit(half_extents[1]),
                T::lit(half_extents[2]),
            );
            let q = (x - c).abs() - h;
            let outside = Vec3::new(
                q.x.max(T::zero()),
                q.y.max(T::zero()),
                q.z.max(T::zero()),
            )
            .norm();
            let inside = q.max_component().min(T::zero());
            outside + inside
        }
        Primitive::Torus {
            center,
            major_radius,
            minor_radius,
        } => {
            let c = Vec3::new(T::lit(center[0]), T::lit(center[1]), T::lit(center[2]));
            let p = x - c;
            let ring = (p.x * p.x + p.y * p.y).sqrt() - T::lit(*major_radius);
            (ring * ring + p.z * p.z).sqrt() - T::lit(*minor_radius)
        }
    }
}

fn node_sdf<T: Real>(node: &CsgNode, x: Vec3<T>) -> (T, [f64; 3]) {
    match node {
        CsgNode::Leaf { shape, albedo } => (primitive_sdf(shape, x), *albedo),
        CsgNode::Union(a, b) => {
            let (da, aa) = node_sdf(a, x);
            let (db, ab) = node_sdf(b, x);
            if da <= db {
                (da, aa)
            } else {
                (db, ab)
            }
        }
        CsgNode::Intersection(a, b) => {
            let (da, aa) = node_sdf(a, x);
            let (db, ab) = node_sdf(b, x);
            if da >= db {
                (da, aa)
            } else {
                (db, ab)
            }
        }
        CsgNode::Difference(a, b) => {
            let (da, aa) = node_sdf(a, x);
            let (db, ab) = node_sdf(b, x);
            let neg = -db;
            if da >= neg {
                (da, aa)
            } else {
                (neg, ab)
            }
        }
    }
}

/// Signed distance of the scene at `x` (exact for single primitives,
/// bounded for CSG combinations).
pub fn scene_sdf<T: Real>(scene: &AnalyticScene, x: Vec3<T>) -> T {
    node_sdf(&scene.root, x).0
}

/// Signed distance plus the albedo of the primitive owning the nearest
/// surface at `x`.
pub fn scene_sdf_albedo<T: Real>(scene: &AnalyticScene, x: Vec3<T>) -> (T, [f64; 3]) {
    node_sdf(&scene.root, x)
}

/// Central-difference surface normal of the analytic scene.
pub fn scene_normal<T: Real>(scene: &AnalyticScene, x: Vec3<T>) -> Vec3<T> {
    let h = T::lit(1e-5);
    let mut n = Vec3::zero();
    for ax in 0..3 {
        let mut xp = x;
        let mut xm = x;
        xp[ax] += h;
        xm[ax] -= h;
        n[ax] = scene_sdf(scene, xp) - scene_sdf(scene, xm);
    }
    let norm = n.norm();
    if norm > T::zero() {
        n / norm
    } else {
        Vec3::new(T::zero(), T::zero(), T::one())
    }
}

/// Sphere traces the scene along `ray`; returns the hit distance.
pub fn sphere_trace<T: Real>(scene: &AnalyticScene, ray: &Ray<T>, t_max: T) -> Option<T> {
    let hit_eps = T::lit(TRACE_HIT_EPS);
    let mut t = T::zero();
    for _ in 0..TRACE_MAX_STEPS {
        let d = scene_sdf(scene, ray.point_at(t));
        if d < hit_eps {
            return Some(t);
        }
        t += d;
        if t > t_max {
            return None;
        }
    }
    None
}

/// Shades a single hit point: Lambertian with a fixed directional light and
/// ambient term, plus the optional Blinn-Phong lobe.
fn shade<T: Real>(scene: &AnalyticScene, x: Vec3<T>, view_dir: Vec3<T>) -> [f64; 3] {
    let (_, albedo) = scene_sdf_albedo(scene, x);
    let n = scene_normal(scene, x).cast::<f64>();
    let l = -Vec3::new(scene.light_dir[0], scene.light_dir[1], scene.light_dir[2]).normalized();
    let diffuse = n.dot(l).max(0.0);
    let mut rgb = [0.0; 3];
    let spec = match scene.specular {
        Some((strength, exponent)) => {
            let v = -view_dir.cast::<f64>();
            let half = (l + v).normalized();
            strength * n.dot(half).max(0.0).powf(exponent)
        }
        None => 0.0,
    };
    for ch in 0..3 {
        rgb[ch] = (albedo[ch] * (scene.ambient + (1.0 - scene.ambient) * diffuse) + spec)
            .clamp(0.0, 1.0);
    }
    rgb
}

/// Ground-truth render of one camera view: sphere-traced hits with
/// Lambertian shading, supersampled `ss x ss` per pixel; misses get the
/// background color. Returns row-major RGB plus the center-ray hit mask
/// and depth map.
pub fn render_ground_truth<T: Real>(
    scene: &AnalyticScene,
    camera: &Camera<T>,
    supersample: u32,
) -> (Vec<[f64; 3]>, Vec<bool>, Vec<f64>) {
    let (w, h) = (camera.width as usize, camera.height as usize);
    let ss = supersample.max(1);
    let t_max = T::lit(6.0);
    let results: Vec<([f64; 3], bool, f64)> = (0..w * h)
        .into_par_iter()
        .map(|idx| {
            let (px, py) = (idx % w, idx / w);
            let mut acc = [0.0f64; 3];
            for sy in 0..ss {
                for sx in 0..ss {
                    // sub-pixel positions form an ss x ss grid over the pixel
                    let u = T::lit(px as f64 + (sx as f64 + 0.5) / ss as f64);
                    let v = T::lit(py as f64 + (sy as f64 + 0.5) / ss as f64);
                    let ray = sensor_ray(camera, u, v);
                    let rgb = match sphere_trace(scene, &ray, t_max) {
                        Some(t) => shade(scene, ray.point_at(t), ray.direction),
                        None => scene.background,
                    };
                    for ch in 0..3 {
                        acc[ch] += rgb[ch];
                    }
                }
            }
            let inv = 1.0 / (ss * ss) as f64;
            for ch in acc.iter_mut() {
                *ch *= inv;
            }
            // mask and depth from the center ray
            let ray = generate_ray(
                camera,
                T::from_usize(px).unwrap(),
                T::from_usize(py).unwrap(),
            )
            .expect("in-bounds pixel");
            match sphere_trace(scene, &ray, t_max) {
                Some(t) => (acc, true, t.to_f64()),
                None => (acc, false, 0.0),
            }
        })
        .collect();
    let mut rgb = Vec::with_capacity(w * h);
    let mut mask = Vec::with_capacity(w * h);
    let mut depth = Vec::with_capacity(w * h);
    for (c, m, d) in results {
        rgb.push(c);
        mask.push(m);
        depth.push(d);
    }
    (rgb, mask, depth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CameraRig {
    /// Equally spaced azimuths on a circle at fixed elevation.
    Orbit,
    /// Fibonacci-spread directions over the upper hemisphere.
    Hemisphere,
}

impl CameraRig {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "orbit" => Ok(CameraRig::Orbit),
            "hemisphere" => Ok(CameraRig::Hemisphere),
            other => Err(Error::invalid(format!(
                "unknown rig '{other}' (expected orbit or hemisphere)"
            ))),
        }
    }
}

/// Camera ring/dome looking at the origin from the given distance.
pub fn rig_cameras<T: Real>(
    rig: CameraRig,
    n_views: usize,
    width: u32,
    height: u32,
    distance: f64,
) -> Vec<Camera<T>> {
    // ~45 degree horizontal field of view
    let focal = T::lit(width as f64 / (2.0 * (22.5f64).to_radians().tan()));
    let cx = T::lit(width as f64 * 0.5);
    let cy = T::lit(height as f64 * 0.5);
    let up = Vec3::new(T::zero(), T::zero(), T::one());
    (0..n_views)
        .map(|i| {
            let eye = match rig {
                CameraRig::Orbit => {
                    let azim: f64 = 2.0 * std::f64::consts::PI * i as f64 / n_views as f64;
                    let elev: f64 = 0.52; // ~30 degrees
                    Vec3::new(
                        T::lit(distance * elev.cos() * azim.cos()),
                        T::lit(distance * elev.cos() * azim.sin()),
                        T::lit(distance * elev.sin()),
                    )
                }
                CameraRig::Hemisphere => {
                    // z in [0.15, 0.85] avoids both the pole and grazing views
                    let z: f64 = 0.15 + 0.7 * (i as f64 + 0.5) / n_views as f64;
                    let r = (1.0 - z * z).sqrt();
                    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
                    let azim: f64 = golden * i as f64;
                    Vec3::new(
                        T::lit(distance * r * azim.cos()),
                        T::lit(distance * r * azim.sin()),
                        T::lit(distance * z),
                    )
                }
            };
            Camera::look_at(focal, focal, cx, cy, width, height, eye, Vec3::zero(), up)
        })
        .collect()
}

/// Samples `n` points on the zero level set by projecting near-surface
/// points along the SDF gradient (`x -= f(x) grad`) until `|f| < eps`.
pub fn surface_points(scene: &AnalyticScene, n: usize, seed: u64) -> Vec<Vec3<f64>> {
    let mut points = Vec::with_capacity(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = TRACE_HIT_EPS * 0.5;
    while points.len() < n {
        let mut x = Vec3::new(
            rng.gen_range(-0.95f64..0.95),
            rng.gen_range(-0.95..0.95),
            rng.gen_range(-0.95..0.95),
        );
        let mut ok = false;
        for _ in 0..64 {
            let d = scene_sdf(scene, x);
            if d.abs() < eps {
                ok = true;
                break;
            }
            let g = scene_normal(scene, x);
            x = x - g * d;
            if x.norm() > 1.5 {
                break;
            }
        }
        if ok {
            points.push(x);
        }
    }
    points
}

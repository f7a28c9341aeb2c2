//! On-disk dataset layout and loading.
//!
//! A dataset directory contains:
//! - `cameras.ron` — one record per image: intrinsics (`fx`, `fy`, `cx`,
//!   `cy`, `width`, `height`) and the camera-to-world pose as a row-major
//!   3x4 matrix (`pose`, rows of `[r r r t]`).
//! - `images/NNN.png` — 8-bit RGB views.
//! - `masks/NNN.png` — 8-bit foreground masks (255 = object), from the
//!   ground-truth tracer's center-ray hits.
//! - `gt_points.bin` — little-endian `f32` triples sampled on the analytic
//!   surface, for Chamfer evaluation.
//! - `scene.ron` — the analytic CSG scene descriptor (including per-image
//!   exposure gains when the EXPOSURE variant is generated).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Camera, Vec3};
use crate::scalar::Real;
use crate::synthetic::{
    render_ground_truth, rig_cameras, surface_points, AnalyticScene, CameraRig,
};
use crate::training::TrainView;

pub const CAMERAS_FILE: &str = "cameras.ron";
pub const SCENE_FILE: &str = "scene.ron";
pub const GT_POINTS_FILE: &str = "gt_points.bin";
pub const IMAGES_DIR: &str = "images";
pub const MASKS_DIR: &str = "masks";

/// Ground-truth surface samples written by `generate`.
pub const GT_POINT_COUNT: usize = 100_000;

/// Supersampling factor of the ground-truth tracer; box-filtered edges keep
/// the targets consistent with volume-rendered soft silhouettes.
pub const GT_SUPERSAMPLE: u32 = 2;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Camera-to-world `[R | t]`, row-major.
    pub pose: [[f64; 4]; 3],
}

impl CameraRecord {
    pub fn from_camera(cam: &Camera<f64>) -> Self {
        let mut pose = [[0.0; 4]; 3];
        for r in 0..3 {
            for c in 0..3 {
                pose[r][c] = cam.rotation[r][c];
            }
            pose[r][3] = cam.translation[r];
        }
        CameraRecord {
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            width: cam.width,
            height: cam.height,
            pose,
        }
    }

    pub fn to_camera(&self) -> Camera<f64> {
        let mut rotation = [[0.0; 3]; 3];
        let mut translation = Vec3::zero();
        for r in 0..3 {
            for c in 0..3 {
                rotation[r][c] = self.pose[r][c];
            }
            translation[r] = self.pose[r][3];
        }
        Camera {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
            rotation,
            translation,
        }
    }
}

/// One loaded view: camera, linear RGB in `[0,1]`, and foreground mask.
#[derive(Debug, Clone)]
pub struct View {
    pub camera: Camera<f64>,
    pub rgb: Vec<[f64; 3]>,
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct SceneDataset {
    pub views: Vec<View>,
    pub gt_points: Vec<Vec3<f64>>,
    pub scene: AnalyticScene,
    pub dir: PathBuf,
}

impl SceneDataset {
    pub fn background(&self) -> [f64; 3] {
        self.scene.background
    }

    /// Views converted to the training scalar type, excluding `holdout`
    /// (indices from the end of the view list).
    pub fn train_views<T: Real>(&self, holdout: usize) -> Vec<TrainView<T>> {
        let n = self.views.len().saturating_sub(holdout);
        self.views[..n]
            .iter()
            .enumerate()
            .map(|(i, v)| TrainView {
                camera: v.camera.cast(),
                pixels: v
                    .rgb
                    .iter()
                    .map(|p| [T::lit(p[0]), T::lit(p[1]), T::lit(p[2])])
                    .collect(),
                image_id: i,
            })
            .collect()
    }

    pub fn holdout_views(&self, holdout: usize) -> &[View] {
        let n = self.views.len().saturating_sub(holdout);
        &self.views[n..]
    }
}

#[derive(Debug, Clone)]
pub struct GenerateConfig {
    pub n_views: usize,
    pub width: u32,
    pub height: u32,
    pub rig: CameraRig,
    pub camera_distance: f64,
    pub seed: u64,
    /// Per-image exposure gains in `[0.8, 1.25]` (the EXPOSURE variant).
    pub exposure: bool,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            n_views: 16,
            width: 64,
            height: 64,
            rig: CameraRig::Orbit,
            camera_distance: 2.5,
            seed: 0,
            exposure: false,
        }
    }
}

/// Renders and writes a complete dataset directory. Deterministic: a fixed
/// seed reproduces every byte.
pub fn make_dataset(
    scene: &AnalyticScene,
    config: &GenerateConfig,
    out_dir: &Path,
) -> Result<SceneDataset> {
    if config.n_views < 2 {
        return Err(Error::invalid("need at least two views"));
    }
    fs::create_dir_all(out_dir.join(IMAGES_DIR)).map_err(|e| Error::io(out_dir, e))?;
    fs::create_dir_all(out_dir.join(MASKS_DIR)).map_err(|e| Error::io(out_dir, e))?;

    let cameras = rig_cameras::<f64>(
        config.rig,
        config.n_views,
        config.width,
        config.height,
        config.camera_distance,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let gains: Option<Vec<f64>> = config.exposure.then(|| {
        (0..config.n_views)
            .map(|_| rng.gen_range(0.8..1.25))
            .collect()
    });
    let mut scene_out = scene.clone();
    scene_out.exposure_gains = gains.clone();

    let mut views = Vec::with_capacity(config.n_views);
    for (i, camera) in cameras.iter().enumerate() {
        let (mut rgb, mask, _) = render_ground_truth(&scene_out, camera, GT_SUPERSAMPLE);
        if let Some(gains) = &gains {
            for px in rgb.iter_mut() {
                for ch in px.iter_mut() {
                    *ch = (*ch * gains[i]).clamp(0.0, 1.0);
                }
            }
        }
        write_png_rgb(
            &out_dir.join(IMAGES_DIR).join(format!("{i:03}.png")),
            config.width,
            config.height,
            &rgb,
        )?;
        write_png_mask(
            &out_dir.join(MASKS_DIR).join(format!("{i:03}.png")),
            config.width,
            config.height,
            &mask,
        )?;
        // the in-memory copy goes through the same 8-bit quantization as the
        // files so that generate-then-train equals load-then-train
        let rgb_q = rgb
            .iter()
            .map(|p| {
                [
                    quantize(p[0]) as f64 / 255.0,
                    quantize(p[1]) as f64 / 255.0,
                    quantize(p[2]) as f64 / 255.0,
                ]
            })
            .collect();
        views.push(View {
            camera: camera.clone(),
            rgb: rgb_q,
            mask,
        });
    }

    let gt_points = surface_points(&scene_out, GT_POINT_COUNT, config.seed ^ 0x9e3779b97f4a7c15);
    let mut buf = Vec::with_capacity(gt_points.len() * 12);
    for p in &gt_points {
        for c in [p.x, p.y, p.z] {
            buf.extend_from_slice(&(c as f32).to_le_bytes());
        }
    }
    fs::write(out_dir.join(GT_POINTS_FILE), &buf)
        .map_err(|e| Error::io(out_dir.join(GT_POINTS_FILE), e))?;

    let records: Vec<CameraRecord> = cameras.iter().map(CameraRecord::from_camera).collect();
    let ron_cfg = ron::ser::PrettyConfig::new();
    let cam_text = ron::ser::to_string_pretty(&records, ron_cfg.clone())
        .map_err(|e| Error::Config(e.to_string()))?;
    fs::write(out_dir.join(CAMERAS_FILE), cam_text)
        .map_err(|e| Error::io(out_dir.join(CAMERAS_FILE), e))?;
    let scene_text = ron::ser::to_string_pretty(&scene_out, ron_cfg)
        .map_err(|e| Error::Config(e.to_string()))?;
    fs::write(out_dir.join(SCENE_FILE), scene_text)
        .map_err(|e| Error::io(out_dir.join(SCENE_FILE), e))?;

    Ok(SceneDataset {
        views,
        gt_points: gt_points.iter().map(|p| Vec3::new(p.x, p.y, p.z)).collect(),
        scene: scene_out,
        dir: out_dir.to_path_buf(),
    })
}

/// Loads a dataset directory written by [`make_dataset`].
pub fn load_dataset(dir: &Path) -> Result<SceneDataset> {
    let cam_text = fs::read_to_string(dir.join(CAMERAS_FILE))
        .map_err(|e| Error::io(dir.join(CAMERAS_FILE), e))?;
    let records: Vec<CameraRecord> =
        ron::from_str(&cam_text).map_err(|e| Error::parse(dir.join(CAMERAS_FILE), e.to_string()))?;
    let scene_text = fs::read_to_string(dir.join(SCENE_FILE))
        .map_err(|e| Error::io(dir.join(SCENE_FILE), e))?;
    let scene: AnalyticScene =
        ron::from_str(&scene_text).map_err(|e| Error::parse(dir.join(SCENE_FILE), e.to_string()))?;

    let mut views = Vec::with_capacity(records.len());
    for (i, record) in records.iter().enumerate() {
        let camera = record.to_camera();
        camera.validate()?;
        let img_path = dir.join(IMAGES_DIR).join(format!("{i:03}.png"));
        let rgb = read_png_rgb(&img_path, record.width, record.height)?;
        let mask_path = dir.join(MASKS_DIR).join(format!("{i:03}.png"));
        let mask = if mask_path.exists() {
            read_png_mask(&mask_path, record.width, record.height)?
        } else {
            vec![true; (record.width * record.height) as usize]
        };
        views.push(View { camera, rgb, mask });
    }

    let bytes = fs::read(dir.join(GT_POINTS_FILE))
        .map_err(|e| Error::io(dir.join(GT_POINTS_FILE), e))?;
    if bytes.len() % 12 != 0 {
        return Err(Error::parse(
            dir.join(GT_POINTS_FILE),
            "length not a multiple of 12 bytes",
        ));
    }
    let gt_points = bytes
        .chunks_exact(12)
        .map(|c| {
            Vec3::new(
                f32::from_le_bytes(c[0..4].try_into().unwrap()) as f64,
                f32::from_le_bytes(c[4..8].try_into().unwrap()) as f64,
                f32::from_le_bytes(c[8..12].try_into().unwrap()) as f64,
            )
        })
        .collect();

    Ok(SceneDataset {
        views,
        gt_points,
        scene,
        dir: dir.to_path_buf(),
    })
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_png_rgb(path: &Path, width: u32, height: u32, rgb: &[[f64; 3]]) -> Result<()> {
    let mut buf = image::RgbImage::new(width, height);
    for (idx, px) in rgb.iter().enumerate() {
        let (x, y) = (idx as u32 % width, idx as u32 / width);
        buf.put_pixel(
            x,
            y,
            image::Rgb([quantize(px[0]), quantize(px[1]), quantize(px[2])]),
        );
    }
    buf.save(path)
        .map_err(|e| Error::parse(path, format!("png write: {e}")))
}

fn write_png_mask(path: &Path, width: u32, height: u32, mask: &[bool]) -> Result<()> {
    let mut buf = image::GrayImage::new(width, height);
    for (idx, &m) in mask.iter().enumerate() {
        let (x, y) = (idx as u32 % width, idx as u32 / width);
        buf.put_pixel(x, y, image::Luma([if m { 255 } else { 0 }]));
    }
    buf.save(path)
        .map_err(|e| Error::parse(path, format!("png write: {e}")))
}

fn read_png_rgb(path: &Path, width: u32, height: u32) -> Result<Vec<[f64; 3]>> {
    let img = image::open(path)
        .map_err(|e| Error::parse(path, format!("png read: {e}")))?
        .to_rgb8();
    if img.width() != width || img.height() != height {
        return Err(Error::parse(path, "image size mismatch with camera record"));
    }
    Ok(img
        .pixels()
        .map(|p| {
            [
                p.0[0] as f64 / 255.0,
                p.0[1] as f64 / 255.0,
                p.0[2] as f64 / 255.0,
            ]
        })
        .collect())
}

fn read_png_mask(path: &Path, width: u32, height: u32) -> Result<Vec<bool>> {
    let img = image::open(path)
        .map_err(|e| Error::parse(path, format!("png read: {e}")))?
        .to_luma8();
    if img.width() != width || img.height() != height {
        return Err(Error::parse(path, "mask size mismatch with camera record"));
    }
    Ok(img.pixels().map(|p| p.0[0] >= 128).collect())
}

/// Raw little-endian `f32` map writer (depth or packed normals) used by the
/// render command; layout is row-major with `channels` floats per pixel.
pub fn write_flat_f32(path: &Path, values: &[f32]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::SceneKind;

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("carve_ds_{tag}_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        dir
    }

    fn small_config() -> GenerateConfig {
        GenerateConfig {
            n_views: 4,
            width: 16,
            height: 16,
            rig: CameraRig::Orbit,
            camera_distance: 2.5,
            seed: 11,
            exposure: false,
        }
    }

    #[test]
    fn generate_load_round_trip() {
        let dir = temp_dir("round");
        let scene = AnalyticScene::canonical(SceneKind::Sphere);
        let written = {
            let mut cfg = small_config();
            cfg.seed = 3;
            make_dataset(&scene, &cfg, &dir).unwrap()
        };
        let loaded = load_dataset(&dir).unwrap();
        assert_eq!(loaded.views.len(), 4);
        assert_eq!(loaded.gt_points.len(), GT_POINT_COUNT);
        for (a, b) in written.views.iter().zip(&loaded.views) {
            assert_eq!(a.mask, b.mask);
            assert!((a.camera.fx - b.camera.fx).abs() < 1e-9);
            // loaded pixels equal the quantized in-memory copy exactly
            for (pa, pb) in a.rgb.iter().zip(&b.rgb) {
                for ch in 0..3 {
                    assert_eq!(pa[ch], pb[ch]);
                }
            }
        }
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn fixed_seed_reproduces_files_byte_for_byte() {
        let scene = AnalyticScene::canonical(SceneKind::Box);
        let cfg = small_config();
        let dir_a = temp_dir("det_a");
        let dir_b = temp_dir("det_b");
        make_dataset(&scene, &cfg, &dir_a).unwrap();
        make_dataset(&scene, &cfg, &dir_b).unwrap();
        for name in [CAMERAS_FILE, SCENE_FILE, GT_POINTS_FILE] {
            let a = fs::read(dir_a.join(name)).unwrap();
            let b = fs::read(dir_b.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between runs");
        }
        for i in 0..cfg.n_views {
            let a = fs::read(dir_a.join(IMAGES_DIR).join(format!("{i:03}.png"))).unwrap();
            let b = fs::read(dir_b.join(IMAGES_DIR).join(format!("{i:03}.png"))).unwrap();
            assert_eq!(a, b, "image {i} differs between runs");
        }
        fs::remove_dir_all(&dir_a).ok();
        fs::remove_dir_all(&dir_b).ok();
    }

    #[test]
    fn exposure_variant_records_gains() {
        let dir = temp_dir("expo");
        let scene = AnalyticScene::canonical(SceneKind::Sphere);
        let cfg = GenerateConfig {
            exposure: true,
            ..small_config()
        };
        let ds = make_dataset(&scene, &cfg, &dir).unwrap();
        let gains = ds.scene.exposure_gains.as_ref().unwrap();
        assert_eq!(gains.len(), 4);
        for &g in gains {
            assert!((0.8..1.25).contains(&g));
        }
        // the descriptor on disk carries them too
        let loaded = load_dataset(&dir).unwrap();
        assert_eq!(loaded.scene.exposure_gains.as_ref().unwrap(), gains);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn train_views_respect_holdout() {
        let dir = temp_dir("hold");
        let scene = AnalyticScene::canonical(SceneKind::Sphere);
        let ds = make_dataset(&scene, &small_config(), &dir).unwrap();
        let train = ds.train_views::<f32>(1);
        assert_eq!(train.len(), 3);
        assert_eq!(ds.holdout_views(1).len(), 1);
        assert_eq!(train[0].pixels.len(), 16 * 16);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn gt_points_match_scene_surface() {
        let dir = temp_dir("gt");
        let scene = AnalyticScene::canonical(SceneKind::Sphere);
        let ds = make_dataset(&scene, &small_config(), &dir).unwrap();
        for p in ds.gt_points.iter().step_by(1000) {
            // f32 storage adds quantization on top of the projection bound
            let d: f64 = crate::synthetic::scene_sdf(&scene, *p);
            assert!(d.abs() < 2e-4, "|sdf| = {}", d.abs());
        }
        fs::remove_dir_all(&dir).ok();
    }
}

//! Operational layer tying the pieces together: the training loop with
//! metrics logging and checkpointing, mesh extraction, view rendering,
//! metric evaluation, and the gradient-mode ablation harness.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::RunConfig;
use crate::dataset::SceneDataset;
use crate::error::{Error, Result};
use crate::eval::{chamfer, psnr, sample_mesh_points, PointSet};
use crate::field::NeuralField;
use crate::geometry::Vec3;
use crate::mesh::{marching_cubes, MarchingCubesConfig, TriangleMesh};
use crate::mode::GradientMode;
use crate::renderer::{render_image, BoundField, RenderOutput, RenderSettings};
use crate::training::{
    forward_backward, prepare_rays, schedule_state_at, AdamState, LossParts, LossWeights,
    ScheduleState, StepSettings, StepWorkspace,
};

/// Guards a run directory against concurrent writers; the lock file is
/// removed on drop.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(dir.to_path_buf()))
            }
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// One metrics-log record (JSON lines, one per `log_interval`).
#[derive(Debug, Serialize)]
struct MetricsRecord {
    iteration: u64,
    rgb: f32,
    eikonal: f32,
    curvature: f32,
    total: f32,
    epsilon: f32,
    active_levels: usize,
    lr: f32,
    s: f32,
}

#[derive(Debug)]
pub struct TrainSummary {
    pub iterations: u64,
    pub final_losses: LossParts<f32>,
    pub final_total: f32,
    pub checkpoint_path: PathBuf,
    pub metrics_path: PathBuf,
    pub seconds: f64,
}

pub fn checkpoint_name(iteration: u64) -> String {
    format!("ckpt_{iteration:07}.bin")
}

/// Runs (or resumes) training: sample pixels, render differentiably, apply
/// the three losses, step AdamW, advance the schedule. Checkpoints land in
/// `out_dir` every `checkpoint_interval` iterations and at the end; metrics
/// append to `metrics.jsonl`.
pub fn train(
    config: &RunConfig,
    dataset: &SceneDataset,
    out_dir: &Path,
    resume: Option<&Path>,
    verbose: bool,
) -> Result<TrainSummary> {
    config.validate()?;
    let mode = config.gradient_mode()?;
    let _lock = RunLock::acquire(out_dir)?;
    let start_time = Instant::now();

    let views = dataset.train_views::<f32>(config.train.holdout_views);
    if views.is_empty() {
        return Err(Error::invalid("no training views after holdout"));
    }

    let (mut field, mut adam, start_iter) = match resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            if ckpt.config.hash() != config.hash() {
                return Err(Error::Checkpoint(
                    "resume config does not match checkpoint config".into(),
                ));
            }
            (ckpt.field, ckpt.adam, ckpt.iteration)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let field = NeuralField::<f32>::init(
                config.encoding,
                config.field_config(views.len()),
                config.network.sphere_radius as f32,
                &mut rng,
            )?;
            let adam = AdamState::new(&field);
            (field, adam, 0)
        }
    };

    let settings = StepSettings {
        sampler: config.sampler,
        rays_per_step: config.train.rays_per_step,
        background: [
            config.background[0] as f32,
            config.background[1] as f32,
            config.background[2] as f32,
        ],
        seed: config.seed,
        mode,
    };
    let mut ws = StepWorkspace::new(&field);
    let metrics_path = out_dir.join("metrics.jsonl");
    let mut metrics = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&metrics_path)
        .map_err(|e| Error::io(&metrics_path, e))?;
    if start_iter == 0 {
        // fresh runs start with an empty log; resumed runs append
        metrics.set_len(0).map_err(|e| Error::io(&metrics_path, e))?;
        save_checkpoint(
            &out_dir.join(checkpoint_name(0)),
            &Checkpoint {
                config: config.clone(),
                iteration: 0,
                field: field.clone(),
                adam: adam.clone(),
            },
        )?;
    }

    let total = config.schedule.total_iters;
    let mut completed = start_iter;
    let mut last_parts = LossParts::default();
    let mut last_total = 0.0f32;
    while completed < total {
        let schedule: ScheduleState<f32> =
            schedule_state_at(&config.schedule, &config.encoding, mode, completed);
        let weights = LossWeights {
            w_eik: config.schedule.w_eik as f32,
            w_curv_peak: config.schedule.w_curv_peak as f32,
            w_curv_current: schedule.w_curv_current,
        };
        let rays = prepare_rays(&field, &views, &schedule, &settings, completed);
        let (parts, total_loss, _stats) =
            forward_backward(&field, &rays, &schedule, &settings, &weights, &mut ws)?;
        adam.step(&mut field, &ws.grads, schedule.learning_rate, &config.optim)?;
        completed += 1;
        last_parts = parts;
        last_total = total_loss;

        let is_last = completed == total;
        if completed % config.train.log_interval.max(1) == 0 || is_last {
            let record = MetricsRecord {
                iteration: completed,
                rgb: parts.rgb,
                eikonal: parts.eikonal,
                curvature: parts.curvature,
                total: total_loss,
                epsilon: schedule.epsilon,
                active_levels: schedule.active_levels,
                lr: schedule.learning_rate,
                s: field.variance.s(),
            };
            let line = serde_json::to_string(&record)
                .map_err(|e| Error::Config(format!("metrics serialization: {e}")))?;
            writeln!(metrics, "{line}").map_err(|e| Error::io(&metrics_path, e))?;
            if verbose {
                eprintln!(
                    "iter {completed}/{total}  total {total_loss:.5}  rgb {:.5}  eik {:.5}  curv {:.4}  eps {:.4}  levels {}  s {:.1}",
                    parts.rgb,
                    parts.eikonal,
                    parts.curvature,
                    schedule.epsilon,
                    schedule.active_levels,
                    field.variance.s()
                );
            }
        }
        if completed % config.train.checkpoint_interval.max(1) == 0 || is_last {
            save_checkpoint(
                &out_dir.join(checkpoint_name(completed)),
                &Checkpoint {
                    config: config.clone(),
                    iteration: completed,
                    field: field.clone(),
                    adam: adam.clone(),
                },
            )?;
        }
    }

    Ok(TrainSummary {
        iterations: completed,
        final_losses: last_parts,
        final_total: last_total,
        checkpoint_path: out_dir.join(checkpoint_name(completed)),
        metrics_path,
        seconds: start_time.elapsed().as_secs_f64(),
    })
}

/// End-of-training evaluation state for a checkpoint.
pub fn bound_field(ckpt: &Checkpoint) -> Result<(GradientMode, ScheduleState<f32>)> {
    let mode = ckpt.config.gradient_mode()?;
    let schedule =
        schedule_state_at::<f32>(&ckpt.config.schedule, &ckpt.config.encoding, mode, ckpt.iteration);
    Ok((mode, schedule))
}

/// Marching cubes over the checkpointed SDF.
pub fn extract_mesh(ckpt: &Checkpoint, resolution: u32, refine: bool) -> Result<TriangleMesh<f32>> {
    let (mode, schedule) = bound_field(ckpt)?;
    let _ = mode;
    let field = &ckpt.field;
    let active = schedule.active_levels;
    let cfg = MarchingCubesConfig {
        resolution,
        bounds: 1.0,
        refine,
    };
    Ok(marching_cubes(
        |x| {
            let mut cache = crate::field::SdfEvalCache::default();
            field.sdf_forward(x, active, &mut cache)
        },
        &cfg,
    ))
}

/// Renders one camera view from a checkpoint. `embed_image` selects a
/// training image's appearance embedding; novel views pass `None`.
pub fn render_view(
    ckpt: &Checkpoint,
    camera: &crate::geometry::Camera<f32>,
    embed_image: Option<usize>,
) -> Result<Vec<RenderOutput<f32>>> {
    let (mode, schedule) = bound_field(ckpt)?;
    let bound = BoundField {
        field: &ckpt.field,
        active_levels: schedule.active_levels,
        epsilon: schedule.epsilon,
        mode,
    };
    let settings = RenderSettings {
        sampler: ckpt.config.sampler,
        background: [
            ckpt.config.background[0] as f32,
            ckpt.config.background[1] as f32,
            ckpt.config.background[2] as f32,
        ],
        seed: ckpt.config.seed,
    };
    render_image(camera, &bound, &settings, 0, embed_image)
}

/// Masked PSNR of rendered holdout views against their ground truth.
pub fn holdout_psnr(ckpt: &Checkpoint, dataset: &SceneDataset, holdout: usize) -> Result<f64> {
    let views = dataset.holdout_views(holdout);
    if views.is_empty() {
        return Err(Error::invalid("no holdout views to evaluate"));
    }
    let mut rendered_all = Vec::new();
    let mut target_all = Vec::new();
    let mut mask_all = Vec::new();
    for view in views {
        let camera = view.camera.cast::<f32>();
        let outputs = render_view(ckpt, &camera, None)?;
        for (out, (target, &m)) in outputs
            .iter()
            .zip(view.rgb.iter().zip(view.mask.iter()))
        {
            rendered_all.push([
                out.rgb[0] as f64,
                out.rgb[1] as f64,
                out.rgb[2] as f64,
            ]);
            target_all.push(*target);
            mask_all.push(m);
        }
    }
    psnr(&rendered_all, &target_all, Some(&mask_all))
}

/// Chamfer distance between mesh surface samples and the dataset's
/// ground-truth points.
pub fn mesh_chamfer(mesh: &TriangleMesh<f32>, dataset: &SceneDataset) -> Result<f64> {
    let samples = sample_mesh_points(mesh, crate::dataset::GT_POINT_COUNT, 0)?;
    let pred: PointSet<f64> = PointSet::new(samples.points.iter().map(|p| p.cast()).collect());
    let gt = PointSet::new(dataset.gt_points.clone());
    chamfer(&pred, &gt)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub mode: String,
    pub chamfer: Option<f64>,
    pub psnr_db: Option<f64>,
    pub train_seconds: f64,
    pub error: Option<String>,
}

/// Trains every requested mode with an identical seed and budget, extracts
/// and scores each, and returns a table ranked by Chamfer distance
/// (failures sink to the bottom with their error recorded).
pub fn ablate(
    base: &RunConfig,
    dataset: &SceneDataset,
    modes: &[GradientMode],
    out_root: &Path,
    verbose: bool,
) -> Result<Vec<AblationRow>> {
    if modes.len() < 2 && modes.len() != 1 {
        return Err(Error::invalid("ablation needs at least one mode"));
    }
    let mut rows = Vec::new();
    for (index, &mode) in modes.iter().enumerate() {
        let mut config = base.clone();
        config.mode = mode.name().to_string();
        // index prefix keeps repeated modes in separate run directories
        let dir = out_root.join(format!(
            "{index:02}_{}",
            mode.name().to_lowercase().replace('+', "_")
        ));
        let started = Instant::now();
        let result = (|| -> Result<(f64, f64)> {
            let summary = train(&config, dataset, &dir, None, verbose)?;
            let ckpt = load_checkpoint(&summary.checkpoint_path)?;
            let mesh = extract_mesh(&ckpt, config.extract.resolution, config.extract.refine)?;
            if mesh.triangles.is_empty() {
                return Err(Error::invalid("extracted mesh is empty"));
            }
            let cd = mesh_chamfer(&mesh, dataset)?;
            let db = holdout_psnr(&ckpt, dataset, config.train.holdout_views)?;
            Ok((cd, db))
        })();
        let seconds = started.elapsed().as_secs_f64();
        match result {
            Ok((cd, db)) => rows.push(AblationRow {
                mode: mode.name().to_string(),
                chamfer: Some(cd),
                psnr_db: Some(db),
                train_seconds: seconds,
                error: None,
            }),
            Err(e) => rows.push(AblationRow {
                mode: mode.name().to_string(),
                chamfer: None,
                psnr_db: None,
                train_seconds: seconds,
                error: Some(e.to_string()),
            }),
        }
    }
    rows.sort_by(|a, b| match (a.chamfer, b.chamfer) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.mode.cmp(&b.mode),
    });
    Ok(rows)
}

/// Renders the ranked ablation table as text.
pub fn ablation_report(rows: &[AblationRow], config_hash: &str) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# ablation report (config {config_hash})\n# rank mode chamfer psnr_db train_seconds status\n"
    ));
    for (i, row) in rows.iter().enumerate() {
        let cd = row
            .chamfer
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| "-".into());
        let db = row
            .psnr_db
            .map(|v| format!("{v:.2}"))
            .unwrap_or_else(|| "-".into());
        let status = row.error.as_deref().unwrap_or("ok");
        out.push_str(&format!(
            "{} {} {} {} {:.1} {}\n",
            i + 1,
            row.mode,
            cd,
            db,
            row.train_seconds,
            status
        ));
    }
    out
}

/// Converts render outputs into a [0,1] RGB buffer.
pub fn outputs_to_rgb(outputs: &[RenderOutput<f32>]) -> Vec<[f64; 3]> {
    outputs
        .iter()
        .map(|o| [o.rgb[0] as f64, o.rgb[1] as f64, o.rgb[2] as f64])
        .collect()
}

/// Flattens depth (1 float per pixel) and normals (3 floats per pixel) for
/// the documented raw little-endian `f32` map layout.
pub fn outputs_to_depth_normals(outputs: &[RenderOutput<f32>]) -> (Vec<f32>, Vec<f32>) {
    let mut depth = Vec::with_capacity(outputs.len());
    let mut normals = Vec::with_capacity(outputs.len() * 3);
    for o in outputs {
        depth.push(o.depth);
        let n: Vec3<f32> = o.normal;
        normals.extend_from_slice(&[n.x, n.y, n.z]);
    }
    (depth, normals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_lock_blocks_second_acquire() {
        let dir = std::env::temp_dir().join(format!("carve_lock_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let lock = RunLock::acquire(&dir).unwrap();
        assert!(matches!(RunLock::acquire(&dir), Err(Error::Locked(_))));
        drop(lock);
        let relock = RunLock::acquire(&dir);
        assert!(relock.is_ok());
        drop(relock);
        fs::remove_dir_all(&dir).ok();
    }
}

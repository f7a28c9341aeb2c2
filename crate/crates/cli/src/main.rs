//! `carve`: neural SDF surface reconstruction from posed multi-view images.
//!
//! Subcommands: `generate` (synthetic datasets), `train`, `extract`
//! (marching cubes), `render`, `eval` (Chamfer/F1/PSNR report), and
//! `ablate` (the AG / AG+P / NG / NG+P comparison).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use carve_core::checkpoint::load_checkpoint;
use carve_core::config::RunConfig;
use carve_core::dataset::{load_dataset, make_dataset, write_flat_f32, write_png_rgb, GenerateConfig};
use carve_core::driver;
use carve_core::error::Error;
use carve_core::eval::{f1_score, sample_mesh_points, PointSet};
use carve_core::mesh::{export_mesh, import_mesh, MeshFormat, TriangleMesh};
use carve_core::mode::GradientMode;
use carve_core::synthetic::{AnalyticScene, CameraRig, SceneKind};

#[derive(Parser)]
#[command(name = "carve", version, about = "Neural SDF surface reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML run configuration (defaults apply when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the gradient mode (AG, AG+P, NG, NG+P).
    #[arg(long)]
    mode: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> carve_core::Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => {
                // environment overrides apply to the defaults too
                let env: Vec<(String, String)> = std::env::vars().collect();
                RunConfig::from_toml("", &env)?
            }
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(mode) = &self.mode {
            GradientMode::parse(mode)?;
            config.mode = mode.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset (cameras, images, masks, surface points).
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Scene: sphere, box, torus, csgdiff.
        #[arg(long)]
        scene: Option<String>,
        /// Apply random per-image exposure gains.
        #[arg(long)]
        exposure: bool,
    },
    /// Optimize the neural SDF on a dataset.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset directory from `generate`.
        #[arg(long)]
        data: PathBuf,
        /// Run directory for checkpoints and the metrics log.
        #[arg(long)]
        out: PathBuf,
        /// Resume from a checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Suppress progress lines.
        #[arg(long)]
        quiet: bool,
    },
    /// Extract a triangle mesh from a checkpoint via marching cubes.
    Extract {
        /// Checkpoint file.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output mesh path (.obj or .ply).
        #[arg(long)]
        out: PathBuf,
        /// Lattice resolution (default from the checkpoint config).
        #[arg(long)]
        resolution: Option<u32>,
        /// One bisection refinement of crossing edges.
        #[arg(long)]
        refine: bool,
    },
    /// Render dataset views from a checkpoint.
    Render {
        /// Checkpoint file.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory providing the cameras.
        #[arg(long)]
        data: PathBuf,
        /// Output directory for `render_NNN.png` files.
        #[arg(long)]
        out: PathBuf,
        /// Render a single view index (all views when omitted).
        #[arg(long)]
        view: Option<usize>,
        /// Also write `render_NNN.depth.f32` (row-major little-endian f32).
        #[arg(long)]
        depth: bool,
        /// Also write `render_NNN.normal.f32` (3 floats per pixel).
        #[arg(long)]
        normals: bool,
    },
    /// Score a mesh and/or checkpoint against dataset ground truth.
    Eval {
        /// Dataset directory with `gt_points.bin`.
        #[arg(long)]
        data: PathBuf,
        /// Mesh to score (Chamfer and F1).
        #[arg(long)]
        mesh: Option<PathBuf>,
        /// Checkpoint to score (masked holdout PSNR).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// F1 distance threshold in scene units.
        #[arg(long, default_value_t = 0.01)]
        tau: f64,
    },
    /// Train several gradient modes with one seed/budget and rank them.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Output root; one run directory per mode plus `report.txt`.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated modes (default: NG+P,NG,AG+P,AG).
        #[arg(long, default_value = "NG+P,NG,AG+P,AG")]
        modes: String,
        /// Override the iteration budget for every run.
        #[arg(long)]
        budget: Option<u64>,
        /// Suppress per-run progress lines.
        #[arg(long)]
        quiet: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = err
                .downcast_ref::<Error>()
                .map(Error::code)
                .unwrap_or("E_UNKNOWN");
            eprintln!("error[{code}]: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate {
            config,
            out,
            scene,
            exposure,
        } => {
            let mut cfg = config.load()?;
            if let Some(scene) = scene {
                SceneKind::parse(&scene)?;
                cfg.generate.scene = scene;
            }
            if exposure {
                cfg.generate.exposure = true;
            }
            let kind = SceneKind::parse(&cfg.generate.scene)?;
            let scene = AnalyticScene::canonical(kind);
            let gen = GenerateConfig {
                n_views: cfg.generate.n_views,
                width: cfg.generate.width,
                height: cfg.generate.height,
                rig: CameraRig::parse(&cfg.generate.rig)?,
                camera_distance: cfg.generate.camera_distance,
                seed: cfg.seed,
                exposure: cfg.generate.exposure,
            };
            let dataset = make_dataset(&scene, &gen, &out)?;
            println!(
                "wrote {} views of '{}' to {} ({} ground-truth points)",
                dataset.views.len(),
                kind.name(),
                out.display(),
                dataset.gt_points.len()
            );
            Ok(())
        }
        Command::Train {
            config,
            data,
            out,
            resume,
            quiet,
        } => {
            let cfg = config.load()?;
            let dataset = load_dataset(&data)?;
            let summary = driver::train(&cfg, &dataset, &out, resume.as_deref(), !quiet)?;
            println!(
                "trained {} iterations in {:.1}s (total loss {:.5}); checkpoint {}",
                summary.iterations,
                summary.seconds,
                summary.final_total,
                summary.checkpoint_path.display()
            );
            Ok(())
        }
        Command::Extract {
            checkpoint,
            out,
            resolution,
            refine,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let resolution = resolution.unwrap_or(ckpt.config.extract.resolution);
            let refine = refine || ckpt.config.extract.refine;
            let mesh = driver::extract_mesh(&ckpt, resolution, refine)?;
            let format = MeshFormat::from_path(&out)?;
            export_mesh(&mesh, &out, format)?;
            println!(
                "extracted {} vertices / {} triangles at resolution {} to {}",
                mesh.vertices.len(),
                mesh.triangles.len(),
                resolution,
                out.display()
            );
            Ok(())
        }
        Command::Render {
            checkpoint,
            data,
            out,
            view,
            depth,
            normals,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let dataset = load_dataset(&data)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let indices: Vec<usize> = match view {
                Some(i) => {
                    if i >= dataset.views.len() {
                        return Err(Error::invalid(format!(
                            "view {i} out of range ({} views)",
                            dataset.views.len()
                        ))
                        .into());
                    }
                    vec![i]
                }
                None => (0..dataset.views.len()).collect(),
            };
            let n_train = dataset
                .views
                .len()
                .saturating_sub(ckpt.config.train.holdout_views);
            for i in indices {
                let camera = dataset.views[i].camera.cast::<f32>();
                // training views keep their appearance embedding; holdout
                // views render through the novel-view (zero) path
                let embed = (i < n_train).then_some(i);
                let outputs = driver::render_view(&ckpt, &camera, embed)?;
                let rgb = driver::outputs_to_rgb(&outputs);
                let png = out.join(format!("render_{i:03}.png"));
                write_png_rgb(&png, camera.width, camera.height, &rgb)?;
                if depth || normals {
                    let (d, n) = driver::outputs_to_depth_normals(&outputs);
                    if depth {
                        write_flat_f32(&out.join(format!("render_{i:03}.depth.f32")), &d)?;
                    }
                    if normals {
                        write_flat_f32(&out.join(format!("render_{i:03}.normal.f32")), &n)?;
                    }
                }
                println!("rendered view {i} to {}", png.display());
            }
            Ok(())
        }
        Command::Eval {
            data,
            mesh,
            checkpoint,
            tau,
        } => {
            if mesh.is_none() && checkpoint.is_none() {
                return Err(
                    Error::invalid("eval needs --mesh and/or --checkpoint").into()
                );
            }
            let dataset = load_dataset(&data)?;
            let hash = checkpoint
                .as_deref()
                .map(|p| load_checkpoint(p).map(|c| c.config.hash_hex()))
                .transpose()?
                .unwrap_or_else(|| RunConfig::default().hash_hex());
            if let Some(mesh_path) = &mesh {
                let mesh: TriangleMesh<f64> = import_mesh(mesh_path)?;
                if mesh.triangles.is_empty() {
                    return Err(Error::invalid("mesh is empty").into());
                }
                let samples = sample_mesh_points(&mesh, carve_core::dataset::GT_POINT_COUNT, 0)?;
                let gt = PointSet::new(dataset.gt_points.clone());
                let cd = carve_core::eval::chamfer(&samples, &gt)?;
                let (precision, recall, f1) = f1_score(&samples, &gt, tau)?;
                print_metric("chamfer", cd, "scene_units", &hash);
                print_metric(&format!("precision_tau_{tau}"), precision, "ratio", &hash);
                print_metric(&format!("recall_tau_{tau}"), recall, "ratio", &hash);
                print_metric(&format!("f1_tau_{tau}"), f1, "ratio", &hash);
            }
            if let Some(ckpt_path) = &checkpoint {
                let ckpt = load_checkpoint(ckpt_path)?;
                let db =
                    driver::holdout_psnr(&ckpt, &dataset, ckpt.config.train.holdout_views)?;
                print_metric("psnr_masked_holdout", db, "dB", &hash);
            }
            Ok(())
        }
        Command::Ablate {
            config,
            data,
            out,
            modes,
            budget,
            quiet,
        } => {
            let mut cfg = config.load()?;
            if let Some(budget) = budget {
                cfg.schedule.total_iters = budget;
                cfg.validate()?;
            }
            let parsed: Vec<GradientMode> = modes
                .split(',')
                .map(|m| GradientMode::parse(m.trim()))
                .collect::<carve_core::Result<_>>()?;
            if parsed.is_empty() {
                return Err(Error::invalid("ablate needs at least one mode").into());
            }
            let dataset = load_dataset(&data)?;
            let rows = driver::ablate(&cfg, &dataset, &parsed, &out, !quiet)?;
            let report = driver::ablation_report(&rows, &cfg.hash_hex());
            let report_path = out.join("report.txt");
            std::fs::write(&report_path, &report).map_err(|e| Error::io(&report_path, e))?;
            print!("{report}");
            if rows.iter().any(|r| r.error.is_some()) {
                return Err(Error::invalid("one or more ablation runs failed").into());
            }
            Ok(())
        }
    }
}

fn print_metric(name: &str, value: f64, units: &str, config_hash: &str) {
    println!("metric {name} value {value} units {units} config {config_hash}");
}


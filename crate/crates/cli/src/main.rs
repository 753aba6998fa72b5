use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use noisesplat_core::benchmark::{self, evaluate, insert_infill, recolor, transmittance_map, EvalOptions, MaskFallback};
use noisesplat_core::io::{self, dataset::write_color_png, ply, AssetMeta, SceneKind, SynthParams};
use noisesplat_core::train::{noise_phase, train};
use noisesplat_core::{Dataset, Error, GaussianSet, RenderOptions, Role, TrainConfig, View};

#[derive(Parser)]
#[command(name = "noisesplat", version, about = "Gaussian splatting with interior noise infill and surface opacity audits")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Ablate {
    Erosion,
    Pruning,
    Lf,
    LrReset,
    ColorReset,
    /// Toggles the per-iteration random background, which is off by default.
    RandomBg,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset with exact masks and a ground-truth record.
    Synth {
        #[arg(long, value_parser = parse_kind)]
        kind: SceneKind,
        #[arg(long, default_value_t = 32)]
        views: usize,
        #[arg(long, default_value = "64x64", value_parser = parse_res)]
        res: (u32, u32),
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a surface (and an infill unless --ngs off) on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML config file, or `preset:desk` / `preset:full`.
        #[arg(long)]
        config: String,
        #[arg(long, value_enum)]
        ngs: Option<Switch>,
        #[arg(long, value_enum)]
        alpha_loss: Option<Switch>,
        /// Disable one mechanism; may be repeated or comma separated.
        #[arg(long, value_enum, value_delimiter = ',')]
        ablate: Vec<Ablate>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build and fine-tune an infill for a frozen surface asset.
    Infill {
        #[arg(long)]
        surface: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Infill parameters; defaults to the full schedule.
        #[arg(long)]
        config: Option<String>,
    },
    /// Transmittance maps and surface opacity scores of a surface against an infill.
    Audit {
        #[arg(long)]
        surface: PathBuf,
        #[arg(long)]
        infill: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render every view of a dataset, optionally with an inserted infill and flat recoloring.
    Render {
        #[arg(long)]
        surface: PathBuf,
        #[arg(long)]
        infill: Option<PathBuf>,
        #[arg(long, value_parser = parse_hex)]
        recolor_surface: Option<[f64; 3]>,
        #[arg(long, value_parser = parse_hex)]
        recolor_infill: Option<[f64; 3]>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR, SSIM, their infill-inserted counterparts and SOS on the test views.
    Eval {
        #[arg(long)]
        surface: PathBuf,
        #[arg(long)]
        infill: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Report file (JSON).
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_kind(s: &str) -> Result<SceneKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_res(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got `{s}`"))?;
    let w: u32 = w.parse().map_err(|_| format!("bad width in `{s}`"))?;
    let h: u32 = h.parse().map_err(|_| format!("bad height in `{s}`"))?;
    if w == 0 || h == 0 {
        return Err("resolution must be positive".into());
    }
    Ok((w, h))
}

fn parse_hex(s: &str) -> Result<[f64; 3], String> {
    let t = s.trim_start_matches('#');
    if t.len() != 6 || !t.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(format!("expected a color like #00ff00, got `{s}`"));
    }
    Ok(std::array::from_fn(|k| u8::from_str_radix(&t[2 * k..2 * k + 2], 16).expect("validated hex") as f64 / 255.0))
}

fn load_config(spec: &str) -> Result<TrainConfig, Error> {
    match spec {
        "preset:desk" => Ok(TrainConfig::desk()),
        "preset:full" => Ok(TrainConfig::default()),
        p if p.starts_with("preset:") => Err(Error::Config(format!("unknown preset `{p}` (expected preset:desk or preset:full)"))),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{path}: {e}")))?;
            TrainConfig::from_toml(&text)
        }
    }
}

fn eval_views(ds: &Dataset) -> Vec<&View> {
    let test: Vec<&View> = ds.test_views().collect();
    if test.is_empty() {
        log::warn!("dataset has no test views; evaluating on all views");
        ds.views.iter().collect()
    } else {
        test
    }
}

#[derive(Serialize)]
struct AuditView {
    name: String,
    sos: Option<f64>,
    transmittance_mean: f64,
    mask_pixels: usize,
}

#[derive(Serialize)]
struct AuditReport {
    sos: Option<f64>,
    surface_gaussians: usize,
    infill_gaussians: usize,
    views: Vec<AuditView>,
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth { kind, views, res, seed, out } => {
            let params = SynthParams { views, width: res.0, height: res.1, ..Default::default() };
            let (ds, gt) = io::synth_scene(kind, &params, seed)?;
            io::save_dataset(&ds, &out)?;
            io::write_json(&gt, &out.join("ground_truth.json"))?;
            println!("wrote {} views of {kind} to {}", ds.views.len(), out.display());
        }
        Command::Train { data, out, config, ngs, alpha_loss, ablate, seed } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = ngs {
                cfg.noise = s == Switch::On;
            }
            if let Some(s) = alpha_loss {
                cfg.alpha_loss = s == Switch::On;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            for a in ablate {
                let ab = &mut cfg.ablation;
                match a {
                    Ablate::Erosion => ab.erosion = false,
                    Ablate::Pruning => ab.pruning = false,
                    Ablate::Lf => ab.foreground_loss = false,
                    Ablate::LrReset => ab.lr_reset = false,
                    Ablate::ColorReset => ab.color_reset = false,
                    Ablate::RandomBg => ab.random_background = !ab.random_background,
                }
            }
            cfg.validate()?;
            let ds = io::load_dataset(&data)?;
            let result = train(&ds, &cfg)?;
            std::fs::create_dir_all(&out)?;
            ply::write(&result.surface, &out.join("surface.ply"))?;
            ply::write(&result.infill, &out.join("infill.ply"))?;
            std::fs::write(out.join("train_log.jsonl"), result.log_lines())?;
            std::fs::write(out.join("config.toml"), cfg.to_toml())?;
            io::write_json(
                &AssetMeta {
                    seed: cfg.seed,
                    config_digest: cfg.digest(),
                    iterations: cfg.iterations,
                    surface_gaussians: result.surface.len(),
                    infill_gaussians: result.infill.len(),
                },
                &out.join("meta.json"),
            )?;
            println!(
                "trained {} surface and {} infill Gaussians into {}",
                result.surface.len(),
                result.infill.len(),
                out.display()
            );
        }
        Command::Infill { surface, data, out, config } => {
            let cfg = match config {
                Some(c) => load_config(&c)?,
                None => TrainConfig::default(),
            };
            let surface = ply::read(&surface, Role::Surface)?;
            let ds = io::load_dataset(&data)?;
            let views: Vec<&View> = ds.train_views().collect();
            let noise = noise_phase(&surface, &views, &cfg)?;
            ply::write(&noise, &out)?;
            println!("wrote {} infill Gaussians to {}", noise.len(), out.display());
        }
        Command::Audit { surface, infill, data, out } => {
            let surface = ply::read(&surface, Role::Surface)?;
            let infill = ply::read(&infill, Role::Noise)?;
            let ds = io::load_dataset(&data)?;
            std::fs::create_dir_all(&out)?;
            let mut rows = Vec::new();
            let mut pairs = Vec::new();
            for v in &ds.views {
                let tm = transmittance_map(&surface, &infill, &v.camera, Some(&v.mask), MaskFallback::default())?;
                io::write_gray_png(&tm.t, &out.join(format!("transmittance_{}.png", v.name)))?;
                rows.push(AuditView {
                    name: v.name.clone(),
                    sos: benchmark::sos_view(&tm.t, &tm.m)?,
                    transmittance_mean: tm.t.mean(),
                    mask_pixels: v.mask_pixels(),
                });
                pairs.push((tm.t, tm.m));
            }
            let summary = benchmark::sos(&pairs)?;
            let report = AuditReport {
                sos: summary.mean,
                surface_gaussians: surface.len(),
                infill_gaussians: infill.len(),
                views: rows,
            };
            io::write_json(&report, &out.join("audit.json"))?;
            match summary.mean {
                Some(s) => println!("mean SOS {s:.6} over {} views", pairs.len()),
                None => println!("no view has a nonempty mask; SOS undefined"),
            }
        }
        Command::Render { surface, infill, recolor_surface, recolor_infill, data, out } => {
            let mut surface = ply::read(&surface, Role::Surface)?;
            let mut infill = infill.map(|p| ply::read(&p, Role::Noise)).transpose()?;
            if let Some(c) = recolor_surface {
                surface = recolor(&surface, c);
            }
            if let (Some(c), Some(i)) = (recolor_infill, infill.as_mut()) {
                *i = recolor(i, c);
            }
            let scene = insert_infill(&surface, infill.as_ref().unwrap_or(&GaussianSet::new(Role::Noise)));
            let ds = io::load_dataset(&data)?;
            std::fs::create_dir_all(&out)?;
            for v in &ds.views {
                let img = scene.render(&v.camera, &RenderOptions::default()).color_clamped();
                write_color_png(&img, &out.join(format!("{}.png", v.name)))?;
            }
            println!("rendered {} views into {}", ds.views.len(), out.display());
        }
        Command::Eval { surface, infill, data, out } => {
            let surface = ply::read(&surface, Role::Surface)?;
            let infill = infill.map(|p| ply::read(&p, Role::Noise)).transpose()?;
            let ds = io::load_dataset(&data)?;
            let report = evaluate(&surface, infill.as_ref(), &eval_views(&ds), &EvalOptions::default())?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            io::write_json(&report, &out)?;
            print_summary(&report, &out);
        }
    }
    Ok(())
}

fn print_summary(r: &benchmark::MetricsReport, out: &Path) {
    print!("PSNR {:.3} SSIM {:.4} PSNR* {:.3} SSIM* {:.4}", r.psnr, r.ssim, r.psnr_star, r.ssim_star);
    if let Some(s) = r.sos {
        print!(" SOS {s:.4}");
    }
    println!(" -> {}", out.display());
}

fn exit_code(category: &str) -> u8 {
    match category {
        "config" | "invalid-parameter" => 3,
        "dataset" | "image" => 4,
        c if c.starts_with("ply") => 5,
        "io" | "json" => 6,
        "degenerate-geometry" => 7,
        _ => 1,
    }
}

fn report(category: &str, message: &str) {
    eprintln!("{}", serde_json::json!({ "error": { "category": category, "message": message } }));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            report("usage", e.kind().as_str().unwrap_or("invalid arguments"));
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(e.category(), &e.to_string());
            ExitCode::from(exit_code(e.category()))
        }
    }
}

mod common;

use common::*;
use nalgebra::Vector3;
use noisesplat_core::config::DensifyConfig;
use noisesplat_core::gaussian::{Gaussian3D, GaussianSet, Role};
use noisesplat_core::io::{synth_scene, SceneKind, SynthParams};
use noisesplat_core::raster::{render, RenderOptions};
use noisesplat_core::train::{densify, train, train_with, Adam, DensifyStats, ExpDecay, GroupRates, Phase};
use noisesplat_core::{Dataset, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_scene(kind: SceneKind) -> Dataset {
    let p = SynthParams { views: 16, width: 24, height: 24, ..Default::default() };
    synth_scene(kind, &p, 5).unwrap().0
}

fn small_config() -> TrainConfig {
    let mut c = TrainConfig::desk();
    c.iterations = 120;
    c.noise_start_iteration = 60;
    c.noise_finetune_iterations = 10;
    c.voxel_levels = vec![8, 16];
    c.densify.start = 20;
    c.densify.interval = 20;
    c.densify.max_gaussians = 800;
    c.init.num_points = 300;
    c.init.scale = 0.05;
    c.lr.means_decay_iterations = 120;
    c
}

fn one(g: Gaussian3D) -> GaussianSet {
    GaussianSet::from_gaussians(Role::Surface, vec![g])
}

#[test]
fn adam_examples() {
    let rates = GroupRates { means: 0.1, scales: 0.1, rotations: 0.1, opacities: 0.1, colors: 0.1 };
    let g0 = Gaussian3D::isotropic(Vector3::new(0.5, 0.0, 0.0), 0.2, 0.5, [0.5; 3]);

    let mut s = one(g0.clone());
    let mut adam = Adam::new(1);
    adam.step(&mut s, &[Default::default()], &rates);
    assert_eq!(s.gaussians[0], g0);

    // First step from zero moments: m̂ = g, v̂ = g², so Δ = -lr·g/(|g| + ε).
    let mut s = one(g0.clone());
    let mut adam = Adam::new(1);
    let mut grad = noisesplat_core::raster::GaussianGrad::default();
    grad.mean[0] = 3.0;
    adam.step(&mut s, &[grad], &rates);
    let want = (0.5f32 as f64 - 0.1 * 3.0 / (3.0 + 1e-15)) as f32;
    assert_eq!(s.gaussians[0].mean[0], want);
    assert!(s.gaussians[0].mean[0] < g0.mean[0]);
}

#[test]
fn lr_reset_examples() {
    let mut d = ExpDecay { initial: 1.6e-4, final_: 1.6e-6, steps: 1000, start: 0 };
    assert!((d.at(0) - 1.6e-4).abs() < 1e-18);
    assert!((d.at(5000) - 1.6e-6).abs() < 1e-18);
    d.reset(700);
    assert!((d.at(700) - 1.6e-4).abs() < 1e-18);
    let once = d;
    d.reset(700);
    assert_eq!(d, once);
    let h = d.half_life();
    // Evaluate at a fractional iteration through the closed form.
    let t = h / 1000.0;
    let at_h = (1.6e-4f64.ln() * (1.0 - t) + 1.6e-6f64.ln() * t).exp();
    assert!((at_h - 0.8e-4).abs() < 1e-9);
    assert!((h - 1000.0 * 2f64.ln() / 100f64.ln()).abs() < 1e-9);
}

#[test]
fn split_roughly_preserves_appearance() {
    let cam = axis_camera(32, 40.0);
    let g = Gaussian3D::new(Vector3::new(0.0, 0.0, 5.0), Vector3::new(0.4, 0.25, 0.1), [1.0, 0.0, 0.0, 0.0], 0.8, [0.8, 0.4, 0.2]);
    let s = one(g);
    let before = render(&s, None, &cam, &RenderOptions::default());
    let stats = DensifyStats::from_averages(&[1.0]);
    let cfg = DensifyConfig { grad_threshold: 0.1, percent_dense: 0.01, ..Default::default() };
    let mut diffs = Vec::new();
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut split = s.clone();
        let o = densify(&mut split, &stats, &cfg, 1.0, &mut rng);
        assert_eq!((o.split, split.len()), (1, 2));
        let after = render(&split, None, &cam, &RenderOptions::default());
        let (mut sum, mut n) = (0.0, 0.0);
        for p in 0..before.alpha.data.len() {
            if before.alpha.data[p] > 0.0 {
                for k in 0..3 {
                    sum += (before.color.data[3 * p + k] - after.color.data[3 * p + k]).abs();
                    n += 1.0;
                }
            }
        }
        diffs.push(sum / n);
    }
    assert!(diffs.iter().all(|&d| d < 0.15), "{diffs:?}");
}

#[test]
fn noise_off_yields_empty_infill() {
    let ds = small_scene(SceneKind::OpaqueSphere);
    let mut cfg = small_config();
    cfg.noise = false;
    let r = train(&ds, &cfg).unwrap();
    assert!(r.infill.is_empty());
    assert!(r.log.iter().all(|l| l.phase == Phase::Surface));
    assert_eq!(r.log.len(), cfg.iterations);
}

#[test]
fn phases_touch_only_their_parameters() {
    let ds = small_scene(SceneKind::AmbiguityShells);
    let cfg = small_config();
    let mut first_guided: Option<GaussianSet> = None;
    let mut seen = Vec::new();
    let mut max_surface = 0;
    let r = train_with(&ds, &cfg, |s| {
        seen.push((s.iteration, s.phase));
        max_surface = max_surface.max(s.surface.len());
        match s.phase {
            Phase::Surface => assert!(s.noise.is_empty()),
            Phase::Guided => {
                let reference = first_guided.get_or_insert_with(|| s.noise.clone());
                assert_eq!(s.noise.len(), reference.len());
                for (a, b) in s.noise.gaussians.iter().zip(&reference.gaussians) {
                    assert_eq!((a.mean, a.log_scale, a.rotation, a.opacity_logit), (b.mean, b.log_scale, b.rotation, b.opacity_logit));
                }
            }
            Phase::Noise => unreachable!("no optimizer steps are observed during the noise phase"),
        }
    })
    .unwrap();
    assert!(max_surface <= cfg.densify.max_gaussians);
    assert!(!r.infill.is_empty());
    assert_eq!(r.infill.freeze, noisesplat_core::FreezeFlags::ALL);

    // Iterations: surface steps, then the guided steps after the finetune gap.
    let guided_start = cfg.noise_start_iteration + cfg.noise_finetune_iterations;
    let expected: Vec<usize> = (0..cfg.noise_start_iteration).chain(guided_start..cfg.iterations).collect();
    assert_eq!(seen.iter().map(|s| s.0).collect::<Vec<_>>(), expected);
    assert!(seen.iter().all(|&(i, p)| (p == Phase::Guided) == (i >= guided_start)));

    // The log holds one noise record between the phases.
    let noise_log: Vec<_> = r.log.iter().filter(|l| l.phase == Phase::Noise).collect();
    assert_eq!(noise_log.len(), 1);
    assert_eq!(noise_log[0].iteration, cfg.noise_start_iteration);
    assert!(r.log_lines().lines().count() == r.log.len());
}

#[test]
fn densify_stop_is_shared_by_noise_on_and_off() {
    let mut cfg = small_config();
    let on = cfg.densify_stop();
    cfg.noise = false;
    assert_eq!(cfg.densify_stop(), on);
    assert_eq!(on, cfg.noise_start_iteration);
}

#[test]
fn too_few_views_is_an_error() {
    let p = SynthParams { views: 3, width: 16, height: 16, ..Default::default() };
    let ds = synth_scene(SceneKind::OpaqueSphere, &p, 0).unwrap().0;
    assert!(train(&ds, &small_config()).is_err());
}

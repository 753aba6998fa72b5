use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::Vector3;
use noisesplat_core::gaussian::{Gaussian3D, GaussianSet, Role};
use noisesplat_core::image::{ColorImage, ScalarMap};
use noisesplat_core::raster::{render, render_backward, RenderOptions};
use noisesplat_core::Camera;

/// Golden-angle shell of small discs with a noise ball inside.
fn scene(n: usize) -> (GaussianSet, GaussianSet) {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let point = |i: usize, n: usize| {
        let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
        let r = (1.0 - y * y).sqrt();
        let t = golden * i as f64;
        Vector3::new(r * t.cos(), y, r * t.sin())
    };
    let surface = (0..n).map(|i| Gaussian3D::isotropic(point(i, n), 0.05, 0.8, [0.7, 0.5, 0.3])).collect();
    let noise = (0..n / 4).map(|i| Gaussian3D::isotropic(point(i, n / 4) * 0.5, 0.08, 0.9, [0.2, 0.6, 0.9])).collect();
    (GaussianSet::from_gaussians(Role::Surface, surface), GaussianSet::from_gaussians(Role::Noise, noise))
}

fn camera(size: u32) -> Camera {
    Camera::look_at(Vector3::new(3.0, 1.0, 1.5), Vector3::zeros(), Vector3::z(), 0.8, size, size).unwrap()
}

fn forward(c: &mut Criterion) {
    let mut g = c.benchmark_group("render");
    for &(n, size) in &[(1000, 64), (5000, 128)] {
        let (s, noise) = scene(n);
        let cam = camera(size);
        g.bench_with_input(BenchmarkId::from_parameter(format!("{n}x{size}")), &(), |b, _| {
            b.iter(|| render(&s, Some(&noise), &cam, &RenderOptions::default()))
        });
    }
    g.finish();
}

fn backward(c: &mut Criterion) {
    let mut g = c.benchmark_group("backward");
    for &(n, size) in &[(1000, 64), (5000, 128)] {
        let (s, noise) = scene(n);
        let cam = camera(size);
        let out = render(&s, Some(&noise), &cam, &RenderOptions::default().with_record());
        let px = size as usize;
        let mut d_color = ColorImage::new(px, px);
        d_color.data.iter_mut().enumerate().for_each(|(i, v)| *v = ((i % 7) as f64 - 3.0) * 0.1);
        let d_alpha = ScalarMap::new(px, px);
        g.bench_with_input(BenchmarkId::from_parameter(format!("{n}x{size}")), &(), |b, _| {
            b.iter(|| render_backward(&out, &s, Some(&noise), &d_color, Some(&d_alpha)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, forward, backward);
criterion_main!(benches);

//! Training objectives and the SSIM kernel shared with evaluation.
//!
//! SSIM uses an 11x11 Gaussian window (sigma 1.5) that is truncated and
//! renormalized at the image border, so constant images have exactly zero
//! local variance everywhere.

use crate::error::Result;
use crate::image::{ColorImage, ScalarMap};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn window() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - r;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable window filter with per-pixel border renormalization, plus its adjoint.
struct Filter {
    k: [f64; SSIM_WINDOW],
    zx: Vec<f64>,
    zy: Vec<f64>,
    w: usize,
    h: usize,
}

impl Filter {
    fn new(w: usize, h: usize) -> Self {
        let k = window();
        let norm = |n: usize| -> Vec<f64> {
            let r = (SSIM_WINDOW / 2) as isize;
            (0..n as isize)
                .map(|p| (-r..=r).filter(|o| (0..n as isize).contains(&(p + o))).map(|o| k[(o + r) as usize]).sum())
                .collect()
        };
        Filter { k, zx: norm(w), zy: norm(h), w, h }
    }

    fn conv_x(&self, src: &[f64], scale: Option<&[f64]>) -> Vec<f64> {
        let r = (SSIM_WINDOW / 2) as isize;
        let (w, h) = (self.w as isize, self.h as isize);
        let mut out = vec![0.0; src.len()];
        for y in 0..h {
            let row = &src[(y * w) as usize..((y + 1) * w) as usize];
            for x in 0..w {
                let mut acc = 0.0;
                for o in -r..=r {
                    let xx = x + o;
                    if (0..w).contains(&xx) {
                        acc += self.k[(o + r) as usize] * row[xx as usize];
                    }
                }
                out[(y * w + x) as usize] = match scale {
                    Some(z) => acc / z[x as usize],
                    None => acc,
                };
            }
        }
        out
    }

    fn conv_y(&self, src: &[f64], scale: Option<&[f64]>) -> Vec<f64> {
        let r = (SSIM_WINDOW / 2) as isize;
        let (w, h) = (self.w as isize, self.h as isize);
        let mut out = vec![0.0; src.len()];
        for y in 0..h {
            for o in -r..=r {
                let yy = y + o;
                if !(0..h).contains(&yy) {
                    continue;
                }
                let kv = self.k[(o + r) as usize];
                let srow = &src[(yy * w) as usize..((yy + 1) * w) as usize];
                let orow = &mut out[(y * w) as usize..((y + 1) * w) as usize];
                for (d, s) in orow.iter_mut().zip(srow) {
                    *d += kv * s;
                }
            }
            if let Some(z) = scale {
                for v in &mut out[(y * w) as usize..((y + 1) * w) as usize] {
                    *v /= z[y as usize];
                }
            }
        }
        out
    }

    /// Windowed local mean.
    fn apply(&self, src: &[f64]) -> Vec<f64> {
        let t = self.conv_x(src, Some(&self.zx));
        self.conv_y(&t, Some(&self.zy))
    }

    /// Adjoint of [`Filter::apply`].
    fn adjoint(&self, src: &[f64]) -> Vec<f64> {
        let w = self.w;
        let pre: Vec<f64> = src.iter().enumerate().map(|(i, v)| v / (self.zx[i % w] * self.zy[i / w])).collect();
        let t = self.conv_x(&pre, None);
        self.conv_y(&t, None)
    }
}

fn plane(img: &ColorImage, c: usize) -> Vec<f64> {
    img.data.iter().skip(c).step_by(3).copied().collect()
}

/// Mean SSIM over pixels and channels, and optionally its gradient w.r.t. `a`.
fn ssim_impl(a: &ColorImage, b: &ColorImage, want_grad: bool) -> Result<(f64, Option<ColorImage>)> {
    a.check_same_size(b)?;
    let (w, h) = (a.width, a.height);
    let n = w * h;
    if n == 0 {
        return Ok((1.0, want_grad.then(|| ColorImage::new(w, h))));
    }
    let f = Filter::new(w, h);
    let mut total = 0.0;
    let mut grad = want_grad.then(|| ColorImage::new(w, h));
    let norm = 1.0 / (3 * n) as f64;
    for c in 0..3 {
        let pa = plane(a, c);
        let pb = plane(b, c);
        let sq = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
        let mu_a = f.apply(&pa);
        let mu_b = f.apply(&pb);
        let e_aa = f.apply(&sq(&pa, &pa));
        let e_bb = f.apply(&sq(&pb, &pb));
        let e_ab = f.apply(&sq(&pa, &pb));
        let mut g_mu = vec![0.0; if want_grad { n } else { 0 }];
        let mut g_aa = g_mu.clone();
        let mut g_ab = g_mu.clone();
        for i in 0..n {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            let n1 = 2.0 * ma * mb + SSIM_C1;
            let n2 = 2.0 * cov + SSIM_C2;
            let d1 = ma * ma + mb * mb + SSIM_C1;
            let d2 = va + vb + SSIM_C2;
            let s = n1 * n2 / (d1 * d2);
            total += s;
            if want_grad {
                let ds_dmu = 2.0 * mb * n2 / (d1 * d2) - 2.0 * ma * s / d1;
                let ds_dva = -s / d2;
                let ds_dcov = 2.0 * n1 / (d1 * d2);
                g_mu[i] = (ds_dmu - 2.0 * ma * ds_dva - mb * ds_dcov) * norm;
                g_aa[i] = ds_dva * norm;
                g_ab[i] = ds_dcov * norm;
            }
        }
        if let Some(g) = grad.as_mut() {
            let t_mu = f.adjoint(&g_mu);
            let t_aa = f.adjoint(&g_aa);
            let t_ab = f.adjoint(&g_ab);
            for i in 0..n {
                g.data[3 * i + c] = t_mu[i] + 2.0 * pa[i] * t_aa[i] + pb[i] * t_ab[i];
            }
        }
    }
    Ok((total * norm, grad))
}

pub fn ssim(a: &ColorImage, b: &ColorImage) -> Result<f64> {
    Ok(ssim_impl(a, b, false)?.0)
}

/// SSIM and its gradient with respect to `a`.
pub fn ssim_with_grad(a: &ColorImage, b: &ColorImage) -> Result<(f64, ColorImage)> {
    let (s, g) = ssim_impl(a, b, true)?;
    Ok((s, g.expect("gradient requested")))
}

#[derive(Clone, Debug)]
pub struct PhotometricLoss {
    pub value: f64,
    pub l1: f64,
    pub ssim: f64,
    /// Gradient w.r.t. the rendered image.
    pub grad: ColorImage,
}

/// `(1 - lambda) * mean|C - I| + lambda * (1 - SSIM) / 2`.
pub fn photometric_loss(rendered: &ColorImage, target: &ColorImage, lambda: f64) -> Result<PhotometricLoss> {
    rendered.check_same_size(target)?;
    let n = rendered.data.len().max(1) as f64;
    let mut l1 = 0.0;
    let mut grad = ColorImage::new(rendered.width, rendered.height);
    for ((g, r), t) in grad.data.iter_mut().zip(&rendered.data).zip(&target.data) {
        let d = r - t;
        l1 += d.abs();
        *g = (1.0 - lambda) * sign(d) / n;
    }
    l1 /= n;
    let (s, value) = if lambda > 0.0 {
        let (s, gs) = ssim_with_grad(rendered, target)?;
        for (g, d) in grad.data.iter_mut().zip(&gs.data) {
            *g -= 0.5 * lambda * d;
        }
        (s, (1.0 - lambda) * l1 + lambda * (1.0 - s) * 0.5)
    } else {
        (f64::NAN, l1)
    };
    Ok(PhotometricLoss { value, l1, ssim: s, grad })
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug)]
pub struct AlphaLoss {
    /// Sum of the active terms.
    pub value: f64,
    /// `mean((1 - A) M)`: rewards full opacity inside the mask.
    pub foreground: f64,
    /// `mean(A (1 - M))`: suppresses opacity outside the mask.
    pub background: f64,
    pub grad: ScalarMap,
}

/// Alpha-consistency loss between rendered alpha and a binary mask. With
/// `use_foreground = false` only the background term is active.
pub fn alpha_consistency_loss(alpha: &ScalarMap, mask: &ScalarMap, use_foreground: bool) -> Result<AlphaLoss> {
    alpha.check_same_size(mask)?;
    let n = alpha.data.len().max(1) as f64;
    let (mut fg, mut bg) = (0.0, 0.0);
    let mut grad = ScalarMap::new(alpha.width, alpha.height);
    for ((g, a), m) in grad.data.iter_mut().zip(&alpha.data).zip(&mask.data) {
        fg += (1.0 - a) * m;
        bg += a * (1.0 - m);
        *g = ((1.0 - m) - if use_foreground { *m } else { 0.0 }) / n;
    }
    fg /= n;
    bg /= n;
    Ok(AlphaLoss { value: if use_foreground { fg + bg } else { bg }, foreground: fg, background: bg, grad })
}

//! Adam over the raw Gaussian parameters, with per-group learning rates.

use crate::gaussian::{FreezeFlags, Gaussian3D, GaussianSet};
use crate::raster::GaussianGrad;

pub const PARAMS: usize = 14;
pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-15;

/// Learning rate per parameter group.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GroupRates {
    pub means: f64,
    pub scales: f64,
    pub rotations: f64,
    pub opacities: f64,
    pub colors: f64,
}

impl GroupRates {
    fn for_param(&self, k: usize, freeze: &FreezeFlags) -> f64 {
        let (lr, frozen) = match k {
            0..=2 => (self.means, freeze.means),
            3..=5 => (self.scales, freeze.scales),
            6..=9 => (self.rotations, freeze.rotations),
            10 => (self.opacities, freeze.opacities),
            _ => (self.colors, freeze.colors),
        };
        if frozen {
            0.0
        } else {
            lr
        }
    }
}

pub fn grad_array(g: &GaussianGrad) -> [f64; PARAMS] {
    let mut a = [0.0; PARAMS];
    a[0..3].copy_from_slice(&g.mean);
    a[3..6].copy_from_slice(&g.log_scale);
    a[6..10].copy_from_slice(&g.rotation);
    a[10] = g.opacity_logit;
    a[11..14].copy_from_slice(&g.sh_dc);
    a
}

fn param_mut(g: &mut Gaussian3D, k: usize) -> &mut f32 {
    match k {
        0..=2 => &mut g.mean[k],
        3..=5 => &mut g.log_scale[k - 3],
        6..=9 => &mut g.rotation[k - 6],
        10 => &mut g.opacity_logit,
        _ => &mut g.sh_dc[k - 11],
    }
}

#[derive(Clone, Debug, Default)]
pub struct Adam {
    m: Vec<[f64; PARAMS]>,
    v: Vec<[f64; PARAMS]>,
    step: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam { m: vec![[0.0; PARAMS]; n], v: vec![[0.0; PARAMS]; n], step: 0 }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. Groups with a zero rate or frozen in `set` are left untouched,
    /// moments included.
    pub fn step(&mut self, set: &mut GaussianSet, grads: &[GaussianGrad], rates: &GroupRates) {
        assert_eq!(set.len(), self.m.len(), "optimizer state out of sync with the Gaussian set");
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        let lrs: [f64; PARAMS] = std::array::from_fn(|k| rates.for_param(k, &set.freeze));
        for ((g, grad), (m, v)) in set.gaussians.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let ga = grad_array(grad);
            for k in 0..PARAMS {
                if lrs[k] == 0.0 {
                    continue;
                }
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * ga[k];
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * ga[k] * ga[k];
                let upd = lrs[k] * (m[k] / bc1) / ((v[k] / bc2).sqrt() + EPSILON);
                let p = param_mut(g, k);
                *p = (*p as f64 - upd) as f32;
            }
        }
    }

    /// Rebuilds the state after the set was restructured: entry `i` of the new
    /// set takes the moments of `origin[i]`, or zeros.
    pub fn remap(&mut self, origin: &[Option<usize>]) {
        let pick = |src: &Vec<[f64; PARAMS]>| origin.iter().map(|o| o.map_or([0.0; PARAMS], |i| src[i])).collect();
        self.m = pick(&self.m);
        self.v = pick(&self.v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::Role;
    use nalgebra::Vector3;

    fn one() -> GaussianSet {
        GaussianSet::from_gaussians(Role::Surface, vec![Gaussian3D::isotropic(Vector3::zeros(), 0.1, 0.5, [0.5; 3])])
    }

    #[test]
    fn first_step_moves_by_the_learning_rate() {
        let mut set = one();
        let mut adam = Adam::new(1);
        let grad = GaussianGrad { mean: [2.0, -3.0, 0.0], ..Default::default() };
        adam.step(&mut set, &[grad], &GroupRates { means: 0.01, ..Default::default() });
        let m = set.gaussians[0].mean;
        assert!((m[0] as f64 + 0.01).abs() < 1e-7);
        assert!((m[1] as f64 - 0.01).abs() < 1e-7);
        assert_eq!(m[2], 0.0);
    }

    #[test]
    fn frozen_groups_do_not_move() {
        let mut set = one().with_freeze(FreezeFlags::OPACITY_ONLY);
        let before = set.clone();
        let mut adam = Adam::new(1);
        let grad = GaussianGrad { mean: [1.0; 3], opacity_logit: 1.0, sh_dc: [1.0; 3], ..Default::default() };
        let rates = GroupRates { means: 0.1, scales: 0.1, rotations: 0.1, opacities: 0.1, colors: 0.1 };
        adam.step(&mut set, &[grad], &rates);
        assert_eq!(set.gaussians[0].mean, before.gaussians[0].mean);
        assert_eq!(set.gaussians[0].sh_dc, before.gaussians[0].sh_dc);
        assert_ne!(set.gaussians[0].opacity_logit, before.gaussians[0].opacity_logit);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut set = one();
        let mut adam = Adam::new(1);
        let rates = GroupRates { means: 0.05, ..Default::default() };
        for _ in 0..500 {
            let m = set.gaussians[0].mean;
            let grad = GaussianGrad { mean: [2.0 * (m[0] as f64 - 1.0), 2.0 * (m[1] as f64 + 0.5), 0.0], ..Default::default() };
            adam.step(&mut set, &[grad], &rates);
        }
        let m = set.gaussians[0].mean;
        assert!((m[0] - 1.0).abs() < 1e-2 && (m[1] + 0.5).abs() < 1e-2, "{m:?}");
    }

    #[test]
    fn remap_copies_and_zeroes() {
        let mut set = one();
        let mut adam = Adam::new(1);
        adam.step(&mut set, &[GaussianGrad { mean: [1.0; 3], ..Default::default() }], &GroupRates { means: 0.1, ..Default::default() });
        adam.remap(&[Some(0), None, Some(0)]);
        assert_eq!(adam.len(), 3);
        assert_eq!(adam.m[0], adam.m[2]);
        assert_eq!(adam.m[1], [0.0; PARAMS]);
        assert_ne!(adam.m[0], [0.0; PARAMS]);
    }
}

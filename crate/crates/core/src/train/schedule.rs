//! View ordering and learning-rate schedules.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Visits every view once per epoch in an order drawn from `(seed, epoch)`.
#[derive(Clone, Debug)]
pub struct ViewSchedule {
    seed: u64,
    views: Vec<usize>,
    epoch: Option<(u64, Vec<usize>)>,
}

impl ViewSchedule {
    pub fn new(seed: u64, views: Vec<usize>) -> Self {
        assert!(!views.is_empty(), "view schedule needs at least one view");
        ViewSchedule { seed, views, epoch: None }
    }

    pub fn view_at(&mut self, iteration: usize) -> usize {
        let n = self.views.len();
        let epoch = (iteration / n) as u64;
        if self.epoch.as_ref().map(|e| e.0) != Some(epoch) {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_0f_7e_57);
            rng.set_stream(epoch);
            let mut order = self.views.clone();
            order.shuffle(&mut rng);
            self.epoch = Some((epoch, order));
        }
        self.epoch.as_ref().expect("set above").1[iteration % n]
    }
}

/// Log-linear decay from `initial` to `final_` over `steps` iterations counted
/// from `start`, held at `final_` afterwards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpDecay {
    pub initial: f64,
    pub final_: f64,
    pub steps: usize,
    pub start: usize,
}

impl ExpDecay {
    pub fn at(&self, iteration: usize) -> f64 {
        let t = (iteration.saturating_sub(self.start) as f64 / self.steps as f64).clamp(0.0, 1.0);
        (self.initial.ln() * (1.0 - t) + self.final_.ln() * t).exp()
    }

    /// Restarts the decay clock at `iteration`, as at the beginning of training.
    pub fn reset(&mut self, iteration: usize) {
        self.start = iteration;
    }

    /// Iterations for the rate to fall to half of `initial`.
    pub fn half_life(&self) -> f64 {
        self.steps as f64 * 2f64.ln() / (self.initial / self.final_).ln()
    }
}

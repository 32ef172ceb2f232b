use serde::{Deserialize, Serialize};

/// Reduce-on-plateau settings: after every `window` iterations the mean
/// loss is compared with the previous window's mean, and the rate is
/// multiplied by `factor` unless it improved by at least `min_improvement`
/// (relative). The rate never drops below `min_lr`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub factor: f64,
    pub window: usize,
    pub min_lr: f64,
    pub min_improvement: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self { factor: 0.5, window: 500, min_lr: 1e-5, min_improvement: 0.01 }
    }
}

/// Rate for the next window given the previous and latest window means.
pub fn lr_schedule_step(lr: f64, previous_mean: Option<f64>, recent_mean: f64, config: &SchedulerConfig) -> f64 {
    match previous_mean {
        Some(prev) if recent_mean > prev * (1.0 - config.min_improvement) => (lr * config.factor).max(config.min_lr),
        _ => lr,
    }
}

#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    config: SchedulerConfig,
    lr: f64,
    pending: Vec<f64>,
    previous_mean: Option<f64>,
}

impl PlateauScheduler {
    pub fn new(lr: f64, config: SchedulerConfig) -> Self {
        Self { config, lr, pending: Vec::with_capacity(config.window), previous_mean: None }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Records one iteration's loss and returns the rate for the next one.
    pub fn observe(&mut self, loss: f64) -> f64 {
        self.pending.push(loss);
        if self.config.window > 0 && self.pending.len() >= self.config.window {
            let mean = self.pending.iter().sum::<f64>() / self.pending.len() as f64;
            self.lr = lr_schedule_step(self.lr, self.previous_mean, mean, &self.config);
            self.previous_mean = Some(mean);
            self.pending.clear();
        }
        self.lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decays_only_on_plateau() {
        let c = SchedulerConfig::default();
        assert_eq!(lr_schedule_step(1e-3, None, 1.0, &c), 1e-3);
        assert_eq!(lr_schedule_step(1e-3, Some(1.0), 0.98, &c), 1e-3);
        assert_eq!(lr_schedule_step(1e-3, Some(1.0), 0.995, &c), 5e-4);
        assert_eq!(lr_schedule_step(1e-3, Some(1.0), 1.2, &c), 5e-4);
        assert_eq!(lr_schedule_step(1.5e-5, Some(1.0), 1.0, &c), 1e-5);
    }

    #[test]
    fn scheduler_windows() {
        let mut s = PlateauScheduler::new(1e-3, SchedulerConfig { window: 2, ..Default::default() });
        for _ in 0..4 {
            s.observe(1.0);
        }
        assert_eq!(s.lr(), 5e-4);
        s.observe(0.5);
        assert_eq!(s.observe(0.5), 5e-4);
    }
}

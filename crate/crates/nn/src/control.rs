/// Decision taken after an epoch's validation loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlAction {
    Continue,
    ReduceLr,
    Stop,
}

/// Plateau learning-rate reduction plus early stopping on validation loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainController {
    pub plateau_patience: usize,
    pub factor: f64,
    pub stop_patience: usize,
    /// Relative amount a loss must beat the best by to count as improvement.
    pub threshold: f64,
    best: f64,
    best_epoch: Option<usize>,
    epoch: usize,
    since_improvement: usize,
    since_reduction: usize,
    improved: bool,
}

impl Default for TrainController {
    fn default() -> Self {
        Self::new(3, 0.5, 10)
    }
}

impl TrainController {
    pub fn new(plateau_patience: usize, factor: f64, stop_patience: usize) -> Self {
        assert!(factor > 0.0 && factor < 1.0, "factor must lie in (0, 1)");
        assert!(plateau_patience >= 1 && stop_patience >= 1, "patience must be >= 1");
        Self {
            plateau_patience,
            factor,
            stop_patience,
            threshold: 1e-6,
            best: f64::INFINITY,
            best_epoch: None,
            epoch: 0,
            since_improvement: 0,
            since_reduction: 0,
            improved: false,
        }
    }

    /// Feeds one epoch's validation loss.
    pub fn step(&mut self, val_loss: f64) -> ControlAction {
        debug_assert!(val_loss.is_finite());
        self.epoch += 1;
        self.improved = val_loss < self.best * (1.0 - self.threshold) || self.best.is_infinite();
        if self.improved {
            self.best = val_loss;
            self.best_epoch = Some(self.epoch - 1);
            self.since_improvement = 0;
            self.since_reduction = 0;
            return ControlAction::Continue;
        }
        self.since_improvement += 1;
        self.since_reduction += 1;
        if self.since_improvement >= self.stop_patience {
            ControlAction::Stop
        } else if self.since_reduction >= self.plateau_patience {
            self.since_reduction = 0;
            ControlAction::ReduceLr
        } else {
            ControlAction::Continue
        }
    }

    /// Whether the most recent loss became the new best.
    pub fn improved(&self) -> bool {
        self.improved
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }

    /// Zero-based epoch index of the best loss so far.
    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }
}

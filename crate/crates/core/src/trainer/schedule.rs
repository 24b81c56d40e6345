use serde::{Deserialize, Serialize};

/// Learning-rate halving on plateaus and early stopping, both driven by the
/// streak of epochs whose validation loss is not strictly below the best so
/// far in the stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr_init: f64,
    pub lr: f64,
    pub best: f64,
    pub streak: usize,
    pub plateau_patience: usize,
    pub early_stop_patience: usize,
    pub stopped: bool,
}

/// What one [`PlateauScheduler::step`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleEvent {
    pub improved: bool,
    pub halved: bool,
    pub stop: bool,
}

impl PlateauScheduler {
    pub fn new(lr_init: f64, plateau_patience: usize, early_stop_patience: usize) -> Self {
        Self {
            lr_init,
            lr: lr_init,
            best: f64::INFINITY,
            streak: 0,
            plateau_patience,
            early_stop_patience,
            stopped: false,
        }
    }

    /// Fresh state for a new training stage.
    pub fn reset(&mut self) {
        *self = Self::new(self.lr_init, self.plateau_patience, self.early_stop_patience);
    }

    pub fn step(&mut self, val_loss: f64) -> ScheduleEvent {
        let improved = val_loss < self.best;
        let mut halved = false;
        if improved {
            self.best = val_loss;
            self.streak = 0;
        } else {
            self.streak += 1;
            if self.streak >= self.early_stop_patience {
                self.stopped = true;
            } else if self.streak % self.plateau_patience == 0 {
                self.lr /= 2.0;
                halved = true;
            }
        }
        ScheduleEvent {
            improved,
            halved,
            stop: self.stopped,
        }
    }
}

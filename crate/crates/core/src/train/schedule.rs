//! Learning-rate schedules: plateau-based decay for stage 1 and linear
//! decay for stage 2.

use crate::error::{Error, Result};

/// Relative improvement below which a validation loss counts as "no
/// progress" for the plateau schedule.
pub const PLATEAU_MIN_DELTA_REL: f64 = 1e-4;

/// Pure plateau rule: if the best loss inside the last `patience`
/// evaluations fails to improve on the best before them by more than
/// [`PLATEAU_MIN_DELTA_REL`] relative, the rate is multiplied by `factor`.
pub fn lr_plateau(history: &[f64], lr: f64, patience: usize, factor: f64) -> f64 {
    assert!((0.0..1.0).contains(&factor), "factor must be in (0, 1)");
    if patience == 0 || history.len() <= patience {
        return lr;
    }
    let (earlier, recent) = history.split_at(history.len() - patience);
    let prior_best = earlier.iter().cloned().fold(f64::INFINITY, f64::min);
    let recent_best = recent.iter().cloned().fold(f64::INFINITY, f64::min);
    if recent_best < prior_best * (1.0 - PLATEAU_MIN_DELTA_REL) {
        lr
    } else {
        lr * factor
    }
}

/// Stateful plateau schedule used by the training loops: decays once per
/// plateau window and resets its patience counter on improvement or decay.
#[derive(Debug, Clone)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub patience: usize,
    pub factor: f64,
    best: f64,
    wait: usize,
}

impl PlateauSchedule {
    pub fn new(lr_init: f64, patience: usize, factor: f64) -> Self {
        PlateauSchedule {
            lr: lr_init,
            patience,
            factor,
            best: f64::INFINITY,
            wait: 0,
        }
    }

    /// Feeds one validation loss; returns the rate to use next.
    pub fn observe(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best * (1.0 - PLATEAU_MIN_DELTA_REL) {
            self.best = val_loss;
            self.wait = 0;
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                self.lr *= self.factor;
                self.wait = 0;
            }
        }
        self.lr
    }
}

/// Linear decay from `lr_init` at iteration 0 to zero at `max_iters`.
pub fn lr_linear(iter: usize, max_iters: usize, lr_init: f64) -> Result<f64> {
    if iter > max_iters {
        return Err(Error::Range(format!(
            "iteration {iter} beyond max_iters {max_iters}"
        )));
    }
    Ok(lr_init * (1.0 - iter as f64 / max_iters as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improving_history_keeps_lr() {
        let history: Vec<f64> = (0..20).map(|i| 1.0 / (i + 1) as f64).collect();
        assert_eq!(lr_plateau(&history, 1e-4, 5, 0.5), 1e-4);
    }

    #[test]
    fn flat_history_halves_lr() {
        let history = vec![0.5; 12];
        assert_eq!(lr_plateau(&history, 1e-4, 5, 0.5), 5e-5);
    }

    #[test]
    fn short_history_untouched() {
        let history = vec![0.5; 3];
        assert_eq!(lr_plateau(&history, 1e-4, 5, 0.5), 1e-4);
    }

    #[test]
    fn stateful_schedule_halves_once_per_window() {
        let mut sched = PlateauSchedule::new(1e-4, 5, 0.5);
        sched.observe(1.0);
        // 10 stagnant evaluations -> exactly two decays (after 5 and 10).
        for _ in 0..10 {
            sched.observe(1.0);
        }
        assert!((sched.lr - 2.5e-5).abs() < 1e-20, "{}", sched.lr);
    }

    #[test]
    fn linear_decay_endpoints() {
        assert_eq!(lr_linear(0, 100, 5e-5).unwrap(), 5e-5);
        assert_eq!(lr_linear(100, 100, 5e-5).unwrap(), 0.0);
        assert!((lr_linear(50, 100, 5e-5).unwrap() - 2.5e-5).abs() < 1e-20);
        assert!(matches!(lr_linear(101, 100, 5e-5), Err(Error::Range(_))));
    }
}

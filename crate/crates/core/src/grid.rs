//! Uniform time discretization of `[0, T]`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::invalid("time grid needs at least one step"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node `t_k = k * T / K`, computed directly (not accumulated).
    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Same horizon, `factor` times as many steps.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("refinement factor must be >= 1"));
        }
        TimeGrid::new(self.horizon, self.steps * factor)
    }

    /// Integer ratio `fine.steps / self.steps` when `fine` refines this grid
    /// exactly (same horizon, step count an integer multiple).
    pub fn refinement_ratio(&self, fine: &TimeGrid) -> Result<usize> {
        if self.horizon != fine.horizon {
            return Err(Error::GridMismatch(format!(
                "horizons differ: {} vs {}",
                self.horizon, fine.horizon
            )));
        }
        if !fine.steps.is_multiple_of(self.steps) {
            return Err(Error::GridMismatch(format!(
                "{} steps is not a multiple of {} steps",
                fine.steps, self.steps
            )));
        }
        Ok(fine.steps / self.steps)
    }
}

use serde::{Deserialize, Serialize};

/// What a simulation records besides its final state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sampling {
    /// Sample the pre- and post-impact states of every event.
    pub events: bool,
    /// Number of uniform intervals on `[t0, t_end]`; `grid + 1` samples.
    pub grid: usize,
    /// Keep only every `stride`-th event sample pair.
    pub stride: usize,
    /// Keep the event log itself.
    pub keep_events: bool,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            events: true,
            grid: 10_000,
            stride: 1,
            keep_events: true,
        }
    }
}

impl Sampling {
    /// Event log only, no series.
    pub fn events_only() -> Self {
        Sampling {
            events: false,
            grid: 0,
            stride: 1,
            keep_events: true,
        }
    }

    pub(crate) fn grid_time(&self, t0: f64, t_end: f64, k: usize) -> f64 {
        if k >= self.grid {
            t_end
        } else {
            t0 + (t_end - t0) * (k as f64) / (self.grid as f64)
        }
    }
}

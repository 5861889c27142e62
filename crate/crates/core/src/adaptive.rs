//! Perception-on-demand early-exit controller.
//!
//! The exit octree level of timestep t is driven by whether the previous
//! observation detected anything inside the frontal region p': empty means
//! decode one level coarser, occupied means one level finer, clamped to
//! [1, L_level]. The controller starts at the finest level.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ProbPyramid;

/// The frontal region p' as per-axis index fractions of every level's grid;
/// defaults to the central half in x, full height in y, nearest half in z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontRegion {
    pub x_frac: (f64, f64),
    pub y_frac: (f64, f64),
    pub z_frac: (f64, f64),
}

impl Default for FrontRegion {
    fn default() -> Self {
        Self {
            x_frac: (0.25, 0.75),
            y_frac: (0.0, 1.0),
            z_frac: (0.0, 0.5),
        }
    }
}

impl FrontRegion {
    /// Index box at a given level resolution: half-open per-axis ranges.
    pub fn index_box(&self, res: usize) -> [(usize, usize); 3] {
        let r = res as f64;
        let rng = |f: (f64, f64)| {
            let lo = (f.0 * r).round().clamp(0.0, r) as usize;
            let hi = (f.1 * r).round().clamp(0.0, r) as usize;
            (lo, hi.max(lo))
        };
        [rng(self.x_frac), rng(self.y_frac), rng(self.z_frac)]
    }

    /// Count binarized hits inside p' at one level.
    pub fn occupied_count(&self, level_grid: &Array3<f32>, tau: f32) -> usize {
        let res = level_grid.dim().0;
        let [bx, by, bz] = self.index_box(res);
        let mut n = 0;
        for z in bz.0..bz.1 {
            for y in by.0..by.1 {
                for x in bx.0..bx.1 {
                    if level_grid[[z, y, x]] >= tau {
                        n += 1;
                    }
                }
            }
        }
        n
    }
}

/// Controller state: the exit level used for the previous decode.
#[derive(Debug, Clone)]
pub struct ExitState {
    pub level: usize,
    pub l_max: usize,
    pub region: FrontRegion,
    pub tau: f32,
}

impl ExitState {
    /// Start at the finest level (l^0 = L_level).
    pub fn new(l_max: usize, region: FrontRegion, tau: f32) -> Self {
        Self {
            level: l_max,
            l_max,
            region,
            tau,
        }
    }

    /// Advance the recurrence: with i the previous exit level, return i-1
    /// when p' was empty in the previous observation at level i, else i+1,
    /// clamped to [1, l_max]. Updates the state and reports the p' count.
    pub fn next_exit_level(&mut self, prev: &ProbPyramid) -> Result<(usize, usize)> {
        let i = self.level;
        if prev.num_levels() < i {
            return Err(Error::LevelMismatch {
                expected: i,
                got: prev.num_levels(),
            });
        }
        let count = self.region.occupied_count(prev.level(i), self.tau);
        let next = if count == 0 {
            i.saturating_sub(1).max(1)
        } else {
            (i + 1).min(self.l_max)
        };
        self.level = next;
        Ok((next, count))
    }
}

/// One row of the controller trace.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub t: usize,
    pub exit_level: usize,
    pub p_occupied_count: usize,
    pub decoder_macs: u64,
}

/// CSV encoding of a controller trace: t, exit_level, p'_occupied_count,
/// decoder_macs.
pub fn trace_to_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("t,exit_level,p_occupied_count,decoder_macs\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.t, r.exit_level, r.p_occupied_count, r.decoder_macs
        ));
    }
    out
}

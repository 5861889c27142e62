use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Spatial downsampling factor of the feature extractor. Disparity shifts
/// are applied on quarter-resolution feature maps, so one feature cell
/// spans this many image pixels.
pub const FEATURE_DOWNSAMPLE: usize = 4;

/// How a set of disparity levels was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PlanSource {
    /// Depth-uniform sampling aligned to voxel planes: z = alpha*l_v,
    /// 2*alpha*l_v, ..., z_max, mapped through d = c/z.
    Voxel { step_scale: f64 },
    /// Every integer disparity in (0, d_max], the dense baseline.
    Full { d_max: usize },
    /// Every k-th integer disparity in (0, d_max].
    EvenK { k: usize, d_max: usize },
}

/// Ordered disparity levels feeding the cost volume.
///
/// Voxel-source levels are ordered by increasing depth (strictly decreasing
/// disparity) and are quantized to the feature-map granularity — one feature
/// cell, i.e. [`FEATURE_DOWNSAMPLE`] image pixels — before deduplication.
/// Far depth steps map to nearly identical disparities, so quantization is
/// what collapses the n_z raw samples down to the usable level count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityPlan {
    /// Final disparity levels in pixels, as used by the cost volume.
    pub levels: Vec<f64>,
    /// Voxel source: raw d = c/z values before quantization/deduplication.
    /// Other sources: identical to `levels`.
    pub raw_levels: Vec<f64>,
    pub source: PlanSource,
}

impl DisparityPlan {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn step_scale(&self) -> f64 {
        match self.source {
            PlanSource::Voxel { step_scale } => step_scale,
            _ => 1.0,
        }
    }

    /// Dense baseline: integer disparities 1..=d_max.
    pub fn full(d_max: usize) -> Result<Self> {
        if d_max == 0 {
            return Err(Error::InvalidArg("d_max must be positive".into()));
        }
        let levels: Vec<f64> = (1..=d_max).map(|d| d as f64).collect();
        Ok(Self {
            raw_levels: levels.clone(),
            levels,
            source: PlanSource::Full { d_max },
        })
    }

    /// Every k-th integer disparity: k, 2k, ..., <= d_max.
    pub fn even_k(k: usize, d_max: usize) -> Result<Self> {
        if k == 0 || d_max == 0 {
            return Err(Error::InvalidArg("k and d_max must be positive".into()));
        }
        let levels: Vec<f64> = (1..=d_max / k).map(|i| (i * k) as f64).collect();
        if levels.is_empty() {
            return Err(Error::InvalidArg(format!("no levels: k={k} > d_max={d_max}")));
        }
        Ok(Self {
            raw_levels: levels.clone(),
            levels,
            source: PlanSource::EvenK { k, d_max },
        })
    }
}

/// Plan voxel-aligned disparity levels for a camera/ROI pair.
///
/// Walks depth planes z = alpha*l_v, 2*alpha*l_v, ..., z_max, converts each
/// to disparity via the rig constant, quantizes to feature-map granularity
/// and drops duplicates (and quantized zeros). Rejects cameras whose
/// nearest-plane disparity shift does not fit the feature-map width.
pub fn plan_disparity_levels(
    cam: &CameraModel,
    grid: &GridSpec,
    step_scale: f64,
) -> Result<DisparityPlan> {
    if !(step_scale > 0.0) || !step_scale.is_finite() {
        return Err(Error::InvalidArg(format!(
            "step scale alpha must be positive and finite, got {step_scale}"
        )));
    }
    let z_step = step_scale * grid.voxel_size_m;
    let z_max = grid.z_max_m();
    let steps = (z_max / z_step + 1e-9).floor() as usize;
    if steps == 0 {
        return Err(Error::InvalidArg(format!(
            "first depth plane {z_step} m is beyond z_max {z_max} m"
        )));
    }
    let c = cam.rig_constant();
    let granularity = FEATURE_DOWNSAMPLE as f64;

    let raw_levels: Vec<f64> = (1..=steps).map(|i| c / (i as f64 * z_step)).collect();

    if cell_of(raw_levels[0], granularity) >= (cam.image_width / FEATURE_DOWNSAMPLE) as i64 {
        return Err(Error::RoiTooClose {
            disparity: raw_levels[0],
            depth_m: z_step,
            width: cam.image_width,
        });
    }

    // Two raw disparities are duplicates when they round to the same feature
    // cell; the nearest-depth representative of each cell survives.
    let mut levels: Vec<f64> = Vec::with_capacity(steps);
    let mut last_cell = i64::MIN;
    for &d in &raw_levels {
        let cell = cell_of(d, granularity);
        if cell != last_cell {
            levels.push(d);
            last_cell = cell;
        }
    }
    Ok(DisparityPlan {
        levels,
        raw_levels,
        source: PlanSource::Voxel { step_scale },
    })
}

fn cell_of(d: f64, granularity: f64) -> i64 {
    (d / granularity).round() as i64
}

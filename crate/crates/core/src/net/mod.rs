//! The stereo-to-occupancy network: siamese feature extraction, a
//! voxel-aligned interlacing cost volume, a 2D encoder to a latent vector,
//! and the octree-structured 3D decoder with mask-pruned decode modes.

mod checkpoint;
mod costvol;
mod decoder;
mod encoder;
mod features;
mod macs;
mod model;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use costvol::{build_cost_volume, CostVolume};
pub use decoder::{upsample_mask, DecodeTape};
pub use encoder::EncodeTape;
pub use features::{FeatureMap, Side};
pub use macs::{count_macs, parameter_count, MacReport};
pub use model::{random_latent, ModelTape, VoxelNet};

use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::disparity::{DisparityPlan, FEATURE_DOWNSAMPLE};
use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// How the octree decoder runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// Single output at the finest level; no intermediate heads or masks.
    Straight,
    /// Hierarchical masking semantics, computed densely at every site.
    Dense,
    /// Masks taken from the ground-truth pyramid; computation pruned.
    SparseGt,
    /// Masks taken from the binarized predictions; computation pruned.
    SparsePred,
}

impl DecodeMode {
    pub fn is_sparse(&self) -> bool {
        matches!(self, DecodeMode::SparseGt | DecodeMode::SparsePred)
    }

    pub fn is_hierarchical(&self) -> bool {
        !matches!(self, DecodeMode::Straight)
    }
}

/// Octree decoder shape and behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// Latent vector length.
    pub n_latent: usize,
    /// Initial octree resolution; level l produces delta * 2^l per axis.
    pub delta: usize,
    /// Number of octree levels.
    pub l_level: usize,
    /// Mask binarization threshold in (0, 1).
    pub tau_mask: f32,
    pub mode: DecodeMode,
    /// Channels of the seed feature block at delta^3.
    pub base_channels: usize,
    /// Channels per level block, coarse to fine; length l_level.
    pub level_channels: Vec<usize>,
}

impl DecoderConfig {
    /// Resolution of 1-based level `l`.
    pub fn resolution(&self, l: usize) -> usize {
        self.delta << l
    }
}

/// Full network configuration; everything needed to rebuild the model
/// deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub camera: CameraModel,
    pub grid: GridSpec,
    pub plan: DisparityPlan,
    /// Unary feature channels C.
    pub feature_channels: usize,
    /// Channels of the two strided encoder convolutions.
    pub encoder_channels: (usize, usize),
    pub decoder: DecoderConfig,
    /// Weight initialization seed.
    pub init_seed: u64,
}

impl NetConfig {
    /// Desk-scale defaults for the given camera/grid/plan.
    pub fn desk(camera: CameraModel, grid: GridSpec, plan: DisparityPlan, seed: u64) -> Self {
        Self {
            camera,
            grid,
            plan,
            feature_channels: 8,
            encoder_channels: (48, 64),
            decoder: DecoderConfig {
                n_latent: 128,
                delta: 4,
                l_level: 3,
                tau_mask: 0.5,
                mode: DecodeMode::Dense,
                base_channels: 28,
                level_channels: vec![20, 10, 5],
            },
            init_seed: seed,
        }
    }

    /// Feature-map spatial dims (H/4, W/4).
    pub fn feature_dims(&self) -> (usize, usize) {
        (
            self.camera.image_height / FEATURE_DOWNSAMPLE,
            self.camera.image_width / FEATURE_DOWNSAMPLE,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.camera.image_width, self.camera.image_height);
        if w % 16 != 0 || h % 16 != 0 {
            return Err(Error::InvalidArg(format!(
                "image dims {w}x{h} must be divisible by 16 (two /2 stages after /4 features)"
            )));
        }
        let d = &self.decoder;
        if d.level_channels.len() != d.l_level {
            return Err(Error::InvalidArg(format!(
                "level_channels has {} entries for {} levels",
                d.level_channels.len(),
                d.l_level
            )));
        }
        if !(d.tau_mask > 0.0 && d.tau_mask < 1.0) {
            return Err(Error::InvalidArg(format!(
                "tau_mask must lie in (0,1), got {}",
                d.tau_mask
            )));
        }
        let (nx, ny, nz) = self.grid.counts;
        let finest = d.resolution(d.l_level);
        if nx != finest || ny != finest || nz != finest {
            return Err(Error::InvalidArg(format!(
                "decoder finest resolution {finest} must match the grid {nx}x{ny}x{nz}"
            )));
        }
        if self.plan.is_empty() {
            return Err(Error::InvalidArg("empty disparity plan".into()));
        }
        let (_, w4) = self.feature_dims();
        for &d_px in &self.plan.levels {
            let shift = (d_px / FEATURE_DOWNSAMPLE as f64).round() as isize;
            if shift < 0 || shift as usize >= w4 {
                return Err(Error::InvalidArg(format!(
                    "disparity level {d_px} px shifts {shift} cells, outside feature width {w4}"
                )));
            }
        }
        Ok(())
    }
}

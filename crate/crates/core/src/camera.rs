use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole stereo rig intrinsics for rectified pairs.
///
/// Depth and disparity are linked through the rig constant `c = f_u * b`:
/// `d = c / z`. Rows are aligned between the two views, so matching is a
/// horizontal search and the right-image column of a point at depth `z`
/// is `u - d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    /// Horizontal focal length in pixels (f_u).
    pub focal_length_px: f64,
    /// Stereo baseline in meters (b).
    pub baseline_m: f64,
    /// Image width in pixels.
    pub image_width: usize,
    /// Image height in pixels.
    pub image_height: usize,
    /// Principal point (c_x, c_y) in pixels.
    pub principal_point: (f64, f64),
}

impl CameraModel {
    pub fn new(
        focal_length_px: f64,
        baseline_m: f64,
        image_width: usize,
        image_height: usize,
        principal_point: (f64, f64),
    ) -> Result<Self> {
        if !(focal_length_px > 0.0) {
            return Err(Error::InvalidCamera(format!(
                "focal length must be positive, got {focal_length_px}"
            )));
        }
        if !(baseline_m > 0.0) {
            return Err(Error::InvalidCamera(format!(
                "baseline must be positive, got {baseline_m}"
            )));
        }
        if image_width == 0 || image_height == 0 {
            return Err(Error::InvalidCamera(format!(
                "image dims must be positive, got {image_width}x{image_height}"
            )));
        }
        Ok(Self {
            focal_length_px,
            baseline_m,
            image_width,
            image_height,
            principal_point,
        })
    }

    /// Rig constant `c = f_u * b`; disparity at depth `z` is `c / z`.
    pub fn rig_constant(&self) -> f64 {
        self.focal_length_px * self.baseline_m
    }

    /// Disparity in pixels of a point at `depth_m` meters.
    pub fn disparity_of(&self, depth_m: f64) -> f64 {
        self.rig_constant() / depth_m
    }

    /// Depth in meters corresponding to `disparity_px`.
    pub fn depth_of(&self, disparity_px: f64) -> f64 {
        self.rig_constant() / disparity_px
    }
}

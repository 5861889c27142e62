//! Stereo-to-occupancy perception at desk scale.
//!
//! From a rectified stereo pair, produce a coarse-to-fine octree pyramid of
//! obstacle occupancy voxels: unary features, a voxel-aligned cost volume
//! over depth-uniform disparity levels, a 2D encoder to a latent vector, and
//! an octree-structured 3D decoder whose per-level masks prune computation
//! on confident free space. Ships with a synthetic stereo scene generator,
//! a training/evaluation harness, and an early-exit controller for
//! perception on demand.

pub mod adaptive;
pub mod camera;
pub mod config;
pub mod disparity;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod net;
pub mod nn;
pub mod pfm;
pub mod pointcloud;
pub mod synth;
pub mod train;
pub mod viz;

pub use camera::CameraModel;
pub use disparity::{plan_disparity_levels, DisparityPlan, PlanSource, FEATURE_DOWNSAMPLE};
pub use error::{Error, Result};
pub use grid::{build_pyramid, BoolGrid, BoolPyramid, GridSpec, OccupancyPyramid, ProbGrid, ProbPyramid};
pub use pointcloud::{backproject_depth, pipeline_voxelize, voxelize, PointCloud};

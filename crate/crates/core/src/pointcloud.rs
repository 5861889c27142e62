use ndarray::Array2;

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::grid::{BoolGrid, GridSpec};

/// Back-projection output: one point per valid pixel, in the camera frame,
/// plus the count of skipped (non-positive or NaN) depths.
#[derive(Debug, Clone)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub skipped: usize,
}

/// Back-project a depth map through the pinhole model:
/// X = (u - c_x) * Z / f_u, Y = (v - c_y) * Z / f_u, Z = depth.
///
/// The camera frame maps to the grid frame by identity (camera at the grid
/// origin, centered laterally). Invalid depths are skipped and counted.
pub fn backproject_depth(depth: &Array2<f32>, cam: &CameraModel) -> PointCloud {
    let (h, w) = depth.dim();
    let (cx, cy) = cam.principal_point;
    let f = cam.focal_length_px;
    let mut points = Vec::new();
    let mut skipped = 0usize;
    for v in 0..h {
        for u in 0..w {
            let z = depth[[v, u]];
            if !(z > 0.0) || !z.is_finite() {
                skipped += 1;
                continue;
            }
            let z = z as f64;
            points.push([
                (u as f64 - cx) * z / f,
                (v as f64 - cy) * z / f,
                z,
            ]);
        }
    }
    PointCloud { points, skipped }
}

/// Mark voxels containing at least `min_points` points; points outside the
/// ROI are ignored.
pub fn voxelize(points: &[[f64; 3]], grid: &GridSpec, min_points: usize) -> Result<BoolGrid> {
    if min_points == 0 {
        return Err(Error::InvalidArg(
            "min_points must be at least 1 (0 would occupy every voxel)".into(),
        ));
    }
    let (nx, ny, nz) = grid.counts;
    let mut hits = vec![0u32; nx * ny * nz];
    for p in points {
        if let Some((ix, iy, iz)) = grid.voxel_of(p[0], p[1], p[2]) {
            hits[(iz * ny + iy) * nx + ix] += 1;
        }
    }
    let mut out = grid.empty_grid();
    for iz in 0..nz {
        for iy in 0..ny {
            for ix in 0..nx {
                out[[iz, iy, ix]] = hits[(iz * ny + iy) * nx + ix] as usize >= min_points;
            }
        }
    }
    Ok(out)
}

/// The classical obstacle-detection pipeline: disparity map -> depth map ->
/// point cloud -> voxel grid, in one pass. Invalid disparities (NaN or <= 0)
/// are skipped.
pub fn pipeline_voxelize(
    disparity: &Array2<f32>,
    cam: &CameraModel,
    grid: &GridSpec,
    min_points: usize,
) -> Result<BoolGrid> {
    let c = cam.rig_constant();
    let depth = disparity.mapv(|d| {
        if d > 0.0 && d.is_finite() {
            (c / d as f64) as f32
        } else {
            f32::NAN
        }
    });
    let cloud = backproject_depth(&depth, cam);
    voxelize(&cloud.points, grid, min_points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn cam() -> CameraModel {
        CameraModel::new(160.0, 0.4, 128, 64, (64.0, 0.0)).unwrap()
    }

    fn grid() -> GridSpec {
        GridSpec::cubic(0.5, 32).unwrap()
    }

    #[test]
    fn principal_point_ray() {
        let cam = cam();
        let mut depth = Array2::from_elem((64, 128), f32::NAN);
        depth[[0, 64]] = 2.0;
        let cloud = backproject_depth(&depth, &cam);
        assert_eq!(cloud.points.len(), 1);
        let p = cloud.points[0];
        assert_eq!(p, [0.0, 0.0, 2.0]);
        assert_eq!(cloud.skipped, 64 * 128 - 1);
    }

    #[test]
    fn all_invalid_depths() {
        let cam = cam();
        let mut depth = Array2::from_elem((4, 6), -1.0f32);
        depth[[1, 2]] = f32::NAN;
        depth[[0, 0]] = 0.0;
        let cloud = backproject_depth(&depth, &cam);
        assert!(cloud.points.is_empty());
        assert_eq!(cloud.skipped, 24);
    }

    #[test]
    fn random_map_matches_scalar_oracle() {
        let cam = cam();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let depth = Array2::from_shape_fn((4, 4), |_| rng.gen_range(0.5f32..10.0));
        let cloud = backproject_depth(&depth, &cam);
        assert_eq!(cloud.points.len(), 16);
        let mut k = 0;
        for v in 0..4 {
            for u in 0..4 {
                let z = depth[[v, u]] as f64;
                let ex = (u as f64 - 64.0) * z / 160.0;
                let ey = (v as f64 - 0.0) * z / 160.0;
                let p = cloud.points[k];
                assert!((p[0] - ex).abs() < 1e-12);
                assert!((p[1] - ey).abs() < 1e-12);
                assert_eq!(p[2], z);
                k += 1;
            }
        }
    }

    #[test]
    fn voxelize_single_center_point() {
        let g = grid();
        let p = g.voxel_center(10, 3, 20);
        let out = voxelize(&[[p.0, p.1, p.2]], &g, 1).unwrap();
        let occupied: Vec<_> = out.indexed_iter().filter(|(_, &v)| v).collect();
        assert_eq!(occupied.len(), 1);
        assert_eq!(occupied[0].0, (20, 3, 10));
    }

    #[test]
    fn voxelize_outside_roi_and_empty() {
        let g = grid();
        let out = voxelize(&[[0.0, 0.0, 16.0 + 1e-6]], &g, 1).unwrap();
        assert!(out.iter().all(|&v| !v));
        let out = voxelize(&[], &g, 1).unwrap();
        assert!(out.iter().all(|&v| !v));
    }

    #[test]
    fn voxelize_min_points_threshold() {
        let g = grid();
        let p = g.voxel_center(5, 5, 5);
        let pts = vec![[p.0, p.1, p.2]; 3];
        assert!(!voxelize(&pts, &g, 4).unwrap()[[5, 5, 5]]);
        assert!(voxelize(&pts, &g, 3).unwrap()[[5, 5, 5]]);
        assert!(voxelize(&pts, &g, 0).is_err());
    }

    #[test]
    fn voxelize_matches_brute_force_oracle() {
        let g = GridSpec::cubic(0.5, 8).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let (sx, sy, sz) = g.extents_m();
        let points: Vec<[f64; 3]> = (0..2000)
            .map(|_| {
                [
                    rng.gen_range(-0.6 * sx..0.6 * sx),
                    rng.gen_range(-0.1 * sy..1.1 * sy),
                    rng.gen_range(-0.1 * sz..1.1 * sz),
                ]
            })
            .collect();
        let fast = voxelize(&points, &g, 2).unwrap();
        // O(points x voxels) point-in-cube oracle with the same boundary rule.
        let lv = g.voxel_size_m;
        for iz in 0..8 {
            for iy in 0..8 {
                for ix in 0..8 {
                    let x0 = ix as f64 * lv - sx * 0.5;
                    let y0 = iy as f64 * lv;
                    let z0 = iz as f64 * lv;
                    let inside = |p: &[f64; 3]| {
                        let hi = |lo: f64, v: f64, last: bool, s: f64| {
                            if last {
                                v >= lo && v <= s
                            } else {
                                v >= lo && v < lo + lv
                            }
                        };
                        hi(x0, p[0], ix == 7, sx * 0.5)
                            && hi(y0, p[1], iy == 7, sy)
                            && hi(z0, p[2], iz == 7, sz)
                    };
                    let n = points.iter().filter(|p| inside(p)).count();
                    assert_eq!(fast[[iz, iy, ix]], n >= 2, "voxel ({ix},{iy},{iz})");
                }
            }
        }
    }

    #[test]
    fn pipeline_empty_disparity() {
        let disp = Array2::from_elem((8, 8), 0.0f32);
        let out = pipeline_voxelize(&disp, &cam(), &grid(), 1).unwrap();
        assert!(out.iter().all(|&v| !v));
    }

    #[test]
    fn pipeline_long_tail_artifact() {
        // A wall at z = 5 m with one corrupted far-range disparity produces at
        // most one spurious voxel, located beyond the wall.
        let cam = cam();
        let g = grid();
        let c = cam.rig_constant();
        let mut disp = Array2::from_elem((64, 128), (c / 5.0) as f32);
        disp[[10, 80]] = (c / 12.0) as f32;
        let out = pipeline_voxelize(&disp, &cam, &g, 1).unwrap();
        let wall_iz = (5.0 / 0.5) as usize;
        let spurious: Vec<_> = out
            .indexed_iter()
            .filter(|((iz, _, _), &v)| v && *iz > wall_iz)
            .collect();
        assert_eq!(spurious.len(), 1);
        assert_eq!(spurious[0].0 .0, (12.0 / 0.5) as usize);
    }

    #[test]
    fn pipeline_equals_gt_voxelization_on_exact_disparity() {
        let cam = cam();
        let g = grid();
        let c = cam.rig_constant();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let depth = Array2::from_shape_fn((64, 128), |_| {
            if rng.gen_bool(0.2) {
                f32::NAN
            } else {
                rng.gen_range(0.7f32..15.8)
            }
        });
        let disp = depth.mapv(|z| if z.is_finite() { (c / z as f64) as f32 } else { 0.0 });
        let via_pipeline = pipeline_voxelize(&disp, &cam, &g, 1).unwrap();
        let direct = voxelize(&backproject_depth(&depth, &cam).points, &g, 1).unwrap();
        assert_eq!(via_pipeline, direct);
    }
}

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boolean occupancy grid, dims `[z, y, x]` so x is the fastest axis.
pub type BoolGrid = Array3<bool>;
/// Probability occupancy grid in `[0, 1]`, dims `[z, y, x]`.
pub type ProbGrid = Array3<f32>;

/// The fixed volumetric region of interest in front of the camera.
///
/// Grid frame: x right in `[-s_x/2, s_x/2]`, y up in `[0, s_y]`, z forward
/// in `[0, s_z]`, with the camera at the origin, centered laterally. Voxels
/// are cubes of side `voxel_size_m`; extents are `counts * voxel_size_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Voxel side length l_v in meters.
    pub voxel_size_m: f64,
    /// Voxel counts (n_x, n_y, n_z).
    pub counts: (usize, usize, usize),
}

impl GridSpec {
    pub fn new(voxel_size_m: f64, counts: (usize, usize, usize)) -> Result<Self> {
        if !(voxel_size_m > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "voxel size must be positive, got {voxel_size_m}"
            )));
        }
        if counts.0 == 0 || counts.1 == 0 || counts.2 == 0 {
            return Err(Error::InvalidGrid(format!("zero voxel count: {counts:?}")));
        }
        Ok(Self {
            voxel_size_m,
            counts,
        })
    }

    /// Cubic grid of `n` voxels per axis, as used by the octree decoder.
    pub fn cubic(voxel_size_m: f64, n: usize) -> Result<Self> {
        let spec = Self::new(voxel_size_m, (n, n, n))?;
        if !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "octree grids need power-of-two resolution, got {n}"
            )));
        }
        Ok(spec)
    }

    /// Physical extents (s_x, s_y, s_z) in meters.
    pub fn extents_m(&self) -> (f64, f64, f64) {
        (
            self.counts.0 as f64 * self.voxel_size_m,
            self.counts.1 as f64 * self.voxel_size_m,
            self.counts.2 as f64 * self.voxel_size_m,
        )
    }

    /// Maximum sensing depth z_max = n_z * l_v.
    pub fn z_max_m(&self) -> f64 {
        self.counts.2 as f64 * self.voxel_size_m
    }

    /// Total voxel count N = n_x * n_y * n_z.
    pub fn total_voxels(&self) -> usize {
        self.counts.0 * self.counts.1 * self.counts.2
    }

    /// Diagonal of the ROI extents in meters.
    pub fn diagonal_m(&self) -> f64 {
        let (sx, sy, sz) = self.extents_m();
        (sx * sx + sy * sy + sz * sz).sqrt()
    }

    /// Allocate an empty finest-resolution grid, dims `[n_z, n_y, n_x]`.
    pub fn empty_grid(&self) -> BoolGrid {
        Array3::from_elem((self.counts.2, self.counts.1, self.counts.0), false)
    }

    /// Map a point in the grid frame to its voxel index `(ix, iy, iz)`.
    ///
    /// Boundary rule: each voxel owns its lower faces (`floor`), and the
    /// ROI max face belongs to the last voxel so the closed extents are
    /// covered. Returns `None` outside the ROI.
    pub fn voxel_of(&self, x: f64, y: f64, z: f64) -> Option<(usize, usize, usize)> {
        let (sx, sy, sz) = self.extents_m();
        let gx = x + sx * 0.5;
        if !(0.0..=sx).contains(&gx) || !(0.0..=sy).contains(&y) || !(0.0..=sz).contains(&z) {
            return None;
        }
        let clamp_axis = |v: f64, n: usize| -> usize {
            let i = (v / self.voxel_size_m).floor() as isize;
            (i.max(0) as usize).min(n - 1)
        };
        Some((
            clamp_axis(gx, self.counts.0),
            clamp_axis(y, self.counts.1),
            clamp_axis(z, self.counts.2),
        ))
    }

    /// Center of voxel `(ix, iy, iz)` in grid-frame meters.
    pub fn voxel_center(&self, ix: usize, iy: usize, iz: usize) -> (f64, f64, f64) {
        let (sx, _, _) = self.extents_m();
        (
            (ix as f64 + 0.5) * self.voxel_size_m - sx * 0.5,
            (iy as f64 + 0.5) * self.voxel_size_m,
            (iz as f64 + 0.5) * self.voxel_size_m,
        )
    }
}

/// Coarse-to-fine stack of occupancy grids; level `l` (1-based) has
/// resolution `delta * 2^l` per axis, doubling between levels.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyPyramid<T> {
    levels: Vec<Array3<T>>,
    pub grid_spec: GridSpec,
}

pub type BoolPyramid = OccupancyPyramid<bool>;
pub type ProbPyramid = OccupancyPyramid<f32>;

impl<T> OccupancyPyramid<T> {
    /// Build from coarse-to-fine grids; validates the doubling schedule.
    pub fn from_levels(levels: Vec<Array3<T>>, grid_spec: GridSpec) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidGrid("pyramid needs at least one level".into()));
        }
        for (i, g) in levels.iter().enumerate() {
            let d = g.dim();
            if d.0 != d.1 || d.1 != d.2 {
                return Err(Error::InvalidGrid(format!(
                    "pyramid level {} is not cubic: {:?}",
                    i + 1,
                    d
                )));
            }
            if i > 0 && d.0 != levels[i - 1].dim().0 * 2 {
                return Err(Error::InvalidGrid(format!(
                    "pyramid level {} resolution {} does not double level {}",
                    i + 1,
                    d.0,
                    levels[i - 1].dim().0
                )));
            }
        }
        Ok(Self { levels, grid_spec })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Grid at 1-based level `l` (coarse levels first).
    pub fn level(&self, l: usize) -> &Array3<T> {
        &self.levels[l - 1]
    }

    pub fn levels(&self) -> &[Array3<T>] {
        &self.levels
    }

    /// Per-axis resolution of 1-based level `l`.
    pub fn resolution(&self, l: usize) -> usize {
        self.levels[l - 1].dim().0
    }

    /// Initial octree resolution delta (half the coarsest level).
    pub fn delta(&self) -> usize {
        self.levels[0].dim().0 / 2
    }

    /// Keep only the first `k` levels.
    pub fn truncate(mut self, k: usize) -> Self {
        self.levels.truncate(k);
        self
    }
}

impl BoolPyramid {
    /// Parent occupied iff any of its 8 children is occupied, at every level.
    pub fn is_sound(&self) -> bool {
        for l in 1..self.levels.len() {
            let coarse = &self.levels[l - 1];
            let fine = &self.levels[l];
            let r = coarse.dim().0;
            for z in 0..r {
                for y in 0..r {
                    for x in 0..r {
                        if coarse[[z, y, x]] != or_children(fine, z, y, x) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    pub fn occupied_count(&self, l: usize) -> usize {
        self.level(l).iter().filter(|&&v| v).count()
    }
}

impl ProbPyramid {
    /// Binarize every level at `tau` (threshold is inclusive).
    pub fn binarize(&self, tau: f32) -> BoolPyramid {
        OccupancyPyramid {
            levels: self.levels.iter().map(|g| g.mapv(|p| p >= tau)).collect(),
            grid_spec: self.grid_spec,
        }
    }
}

fn or_children(fine: &BoolGrid, z: usize, y: usize, x: usize) -> bool {
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                if fine[[2 * z + dz, 2 * y + dy, 2 * x + dx]] {
                    return true;
                }
            }
        }
    }
    false
}

/// Reduce a boolean grid by one octree level: logical OR over 2x2x2 blocks.
pub fn or_reduce(fine: &BoolGrid) -> Result<BoolGrid> {
    let r = fine.dim().0;
    if fine.dim() != (r, r, r) || r % 2 != 0 {
        return Err(Error::InvalidGrid(format!(
            "OR-reduction needs a cubic even-resolution grid, got {:?}",
            fine.dim()
        )));
    }
    let h = r / 2;
    let mut out = Array3::from_elem((h, h, h), false);
    for z in 0..h {
        for y in 0..h {
            for x in 0..h {
                out[[z, y, x]] = or_children(fine, z, y, x);
            }
        }
    }
    Ok(out)
}

/// Build the full occupancy pyramid from the finest grid: each coarser level
/// is the OR over 2x2x2 child blocks; levels returned coarse to fine.
pub fn build_pyramid(finest: &BoolGrid, l_level: usize, grid_spec: GridSpec) -> Result<BoolPyramid> {
    let r = finest.dim().0;
    if finest.dim() != (r, r, r) {
        return Err(Error::InvalidGrid(format!(
            "pyramid construction needs a cubic grid, got {:?}",
            finest.dim()
        )));
    }
    if l_level == 0 {
        return Err(Error::InvalidGrid("l_level must be at least 1".into()));
    }
    let div = 1usize << (l_level - 1);
    if r % div != 0 {
        return Err(Error::InvalidGrid(format!(
            "resolution {r} not divisible by 2^{}",
            l_level - 1
        )));
    }
    let mut levels = vec![finest.clone()];
    for _ in 1..l_level {
        let next = or_reduce(levels.last().unwrap())?;
        levels.push(next);
    }
    levels.reverse();
    OccupancyPyramid::from_levels(levels, grid_spec)
}

/// One level of the JSON voxel export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelExport {
    pub level: usize,
    pub resolution: usize,
    pub voxel_size_m: f64,
    /// Occupied voxel indices as `[ix, iy, iz]`.
    pub occupied: Vec<[usize; 3]>,
}

/// Export a boolean pyramid as one JSON record per level.
pub fn pyramid_to_json(pyr: &BoolPyramid) -> Vec<LevelExport> {
    let finest = pyr.resolution(pyr.num_levels());
    (1..=pyr.num_levels())
        .map(|l| {
            let g = pyr.level(l);
            let r = pyr.resolution(l);
            let scale = (finest / r) as f64;
            let mut occupied = Vec::new();
            for z in 0..r {
                for y in 0..r {
                    for x in 0..r {
                        if g[[z, y, x]] {
                            occupied.push([x, y, z]);
                        }
                    }
                }
            }
            LevelExport {
                level: l,
                resolution: r,
                voxel_size_m: pyr.grid_spec.voxel_size_m * scale,
                occupied,
            }
        })
        .collect()
}

/// Rebuild a boolean pyramid from its JSON export.
pub fn pyramid_from_json(levels: &[LevelExport], grid_spec: GridSpec) -> Result<BoolPyramid> {
    let mut grids = Vec::with_capacity(levels.len());
    for le in levels {
        let r = le.resolution;
        let mut g = Array3::from_elem((r, r, r), false);
        for &[x, y, z] in &le.occupied {
            if x >= r || y >= r || z >= r {
                return Err(Error::InvalidGrid(format!(
                    "occupied index [{x},{y},{z}] outside resolution {r}"
                )));
            }
            g[[z, y, x]] = true;
        }
        grids.push(g);
    }
    OccupancyPyramid::from_levels(grids, grid_spec)
}

pub const BITMASK_MAGIC: &[u8; 4] = b"VOXB";

/// Flat binary bitmask of one level: 16-byte header (magic, resolution,
/// level, reserved zero), then row-major bits with x fastest.
pub fn grid_to_bitmask(grid: &BoolGrid, level: usize) -> Vec<u8> {
    let (nz, ny, nx) = grid.dim();
    let bits = nx * ny * nz;
    let mut out = Vec::with_capacity(16 + bits.div_ceil(8));
    out.extend_from_slice(BITMASK_MAGIC);
    out.extend_from_slice(&(nx as u32).to_le_bytes());
    out.extend_from_slice(&(level as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    let mut byte = 0u8;
    let mut nbits = 0usize;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if grid[[z, y, x]] {
                    byte |= 1 << (nbits % 8);
                }
                nbits += 1;
                if nbits % 8 == 0 {
                    out.push(byte);
                    byte = 0;
                }
            }
        }
    }
    if nbits % 8 != 0 {
        out.push(byte);
    }
    out
}

/// Parse a bitmask written by [`grid_to_bitmask`]; returns (grid, level).
pub fn grid_from_bitmask(data: &[u8]) -> Result<(BoolGrid, usize)> {
    let bad = |msg: &str| Error::BadFormat {
        path: "<bitmask>".into(),
        msg: msg.into(),
    };
    if data.len() < 16 || &data[0..4] != BITMASK_MAGIC {
        return Err(bad("missing VOXB header"));
    }
    let r = u32::from_le_bytes(data[4..8].try_into().unwrap()) as usize;
    let level = u32::from_le_bytes(data[8..12].try_into().unwrap()) as usize;
    let bits = r * r * r;
    if data.len() < 16 + bits.div_ceil(8) {
        return Err(bad("truncated bitmask payload"));
    }
    let mut g = Array3::from_elem((r, r, r), false);
    let mut nbits = 0usize;
    for z in 0..r {
        for y in 0..r {
            for x in 0..r {
                let b = data[16 + nbits / 8];
                g[[z, y, x]] = (b >> (nbits % 8)) & 1 == 1;
                nbits += 1;
            }
        }
    }
    Ok((g, level))
}

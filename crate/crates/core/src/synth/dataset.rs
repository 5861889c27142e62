//! Dataset generation and the on-disk sample layout.
//!
//! Layout: `<root>/<split>/<id>/left.png`, `right.png`, `depth.pfm`,
//! `scene.json`, `pyramid.json`, plus `<root>/manifest.json` carrying seeds
//! and the generation config. Any external dataset materialized in the same
//! layout loads through the same adapter.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::grid::{pyramid_from_json, pyramid_to_json, BoolPyramid, GridSpec, LevelExport};
use crate::pfm;
use crate::synth::{render_scene, GroundSlab, Obstacle, SceneSpec, Shape, StereoSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn dir_name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Random scene family: every sampled scene shares the camera/grid and
/// draws obstacles from the ranges below, rejected-and-resampled until the
/// scene validates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDistribution {
    pub camera: CameraModel,
    pub grid: GridSpec,
    pub l_level: usize,
    pub n_obstacles: (usize, usize),
    pub size_range_m: (f64, f64),
    pub depth_range_m: (f64, f64),
    pub sphere_prob: f64,
    pub ground_prob: f64,
}

impl SceneDistribution {
    /// Desk-scale defaults: 64x128 images, 32^3 half-meter ROI, 3 levels.
    pub fn desk_default() -> Self {
        Self {
            camera: CameraModel::new(160.0, 0.4, 128, 64, (64.0, 0.0)).unwrap(),
            grid: GridSpec::cubic(0.5, 32).unwrap(),
            l_level: 3,
            n_obstacles: (1, 4),
            size_range_m: (1.2, 3.6),
            depth_range_m: (2.6, 14.0),
            sphere_prob: 0.35,
            ground_prob: 0.5,
        }
    }

    /// Draw one valid scene.
    pub fn sample(&self, rng: &mut ChaCha12Rng) -> SceneSpec {
        let f = self.camera.focal_length_px;
        let (w, h) = (
            self.camera.image_width as f64,
            self.camera.image_height as f64,
        );
        let n = rng.gen_range(self.n_obstacles.0..=self.n_obstacles.1);
        let mut obstacles = Vec::with_capacity(n);
        let mut guard = 0;
        while obstacles.len() < n && guard < 1000 {
            guard += 1;
            let z = rng.gen_range(self.depth_range_m.0..self.depth_range_m.1);
            let size = rng.gen_range(self.size_range_m.0..self.size_range_m.1);
            // Keep centers inside the viewing frustum so scenes have content.
            let half_x = 0.8 * z * (w * 0.5) / f;
            let max_y = (0.75 * z * h / f).min(6.0);
            let center = [
                rng.gen_range(-half_x..half_x),
                rng.gen_range(0.15..max_y.max(0.3)),
                z,
            ];
            let shape = if rng.gen_bool(self.sphere_prob) {
                Shape::Sphere {
                    center,
                    radius: size * 0.5,
                }
            } else {
                Shape::Box {
                    center,
                    size: [
                        size * rng.gen_range(0.6..1.4),
                        size * rng.gen_range(0.6..1.4),
                        size * rng.gen_range(0.4..1.0),
                    ],
                }
            };
            let candidate = Obstacle {
                shape,
                albedo: rng.gen_range(0.55..1.0),
                texture_seed: rng.gen(),
            };
            let probe = SceneSpec {
                seed: 0,
                obstacles: vec![candidate],
                ground: None,
                camera: self.camera,
                grid: self.grid,
                l_level: self.l_level,
            };
            if probe.validate().is_ok() {
                obstacles.push(candidate);
            }
        }
        let ground = if rng.gen_bool(self.ground_prob) {
            Some(GroundSlab {
                height_m: rng.gen_range(0.1..0.45),
                z_start_m: rng.gen_range(2.4..3.5),
                albedo: rng.gen_range(0.55..1.0),
                texture_seed: rng.gen(),
            })
        } else {
            None
        };
        SceneSpec {
            seed: rng.gen(),
            obstacles,
            ground,
            camera: self.camera,
            grid: self.grid,
            l_level: self.l_level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_scenes: usize,
    pub master_seed: u64,
    pub distribution: SceneDistribution,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub seed: u64,
    pub dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub master_seed: u64,
    pub config: DatasetConfig,
    pub samples: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn split_entries(&self, split: Split) -> Vec<&ManifestEntry> {
        self.samples.iter().filter(|e| e.split == split).collect()
    }
}

/// 80/10/10 split by scene index.
pub fn split_of(index: usize, n_scenes: usize) -> Split {
    let train_end = n_scenes * 8 / 10;
    let val_end = n_scenes * 9 / 10;
    if index < train_end {
        Split::Train
    } else if index < val_end {
        Split::Val
    } else {
        Split::Test
    }
}

/// Generate `n_scenes` samples under `out_dir`. Deterministic in the master
/// seed: per-scene RNG streams are derived from (seed, scene index), so
/// parallel rendering cannot change any byte of the output.
pub fn generate_dataset(cfg: &DatasetConfig, out_dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let specs: Vec<(usize, SceneSpec)> = (0..cfg.n_scenes)
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.master_seed);
            rng.set_stream(i as u64 + 1);
            (i, cfg.distribution.sample(&mut rng))
        })
        .collect();

    let entries: Vec<Result<ManifestEntry>> = specs
        .par_iter()
        .map(|(i, spec)| {
            let split = split_of(*i, cfg.n_scenes);
            let id = format!("{i:06}");
            let dir = out_dir.join(split.dir_name()).join(&id);
            let sample = render_scene(spec)?;
            write_sample(&dir, &sample)?;
            Ok(ManifestEntry {
                dir: format!("{}/{id}", split.dir_name()),
                id,
                split,
                seed: spec.seed,
            })
        })
        .collect();

    let mut samples = Vec::with_capacity(cfg.n_scenes);
    for e in entries {
        samples.push(e?);
    }
    let manifest = Manifest {
        master_seed: cfg.master_seed,
        config: cfg.clone(),
        samples,
    };
    let path = out_dir.join("manifest.json");
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn write_sample(dir: &Path, sample: &StereoSample) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_png16(&dir.join("left.png"), &sample.left)?;
    save_png16(&dir.join("right.png"), &sample.right)?;
    pfm::write_pfm(&dir.join("depth.pfm"), &sample.gt_depth)?;
    write_json(&dir.join("scene.json"), &sample.scene)?;
    write_json(&dir.join("pyramid.json"), &pyramid_to_json(&sample.gt_pyramid))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_vec_pretty(value).expect("value serializes");
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&data).map_err(|e| Error::BadFormat {
        path: path.into(),
        msg: e.to_string(),
    })
}

/// Save a [0,1] image as 16-bit grayscale PNG.
pub fn save_png16(path: &Path, img: &Array2<f32>) -> Result<()> {
    let (h, w) = img.dim();
    let mut buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(w as u32, h as u32);
    for (v, row) in img.outer_iter().enumerate() {
        for (u, &val) in row.iter().enumerate() {
            buf.put_pixel(
                u as u32,
                v as u32,
                image::Luma([(val.clamp(0.0, 1.0) * 65535.0).round() as u16]),
            );
        }
    }
    buf.save(path).map_err(|e| Error::BadFormat {
        path: path.into(),
        msg: e.to_string(),
    })
}

/// Load a 16-bit grayscale PNG back to [0,1] floats.
pub fn load_png16(path: &Path) -> Result<Array2<f32>> {
    let img = image::open(path)
        .map_err(|e| Error::BadFormat {
            path: path.into(),
            msg: e.to_string(),
        })?
        .into_luma16();
    let (w, h) = img.dimensions();
    Ok(Array2::from_shape_fn((h as usize, w as usize), |(v, u)| {
        img.get_pixel(u as u32, v as u32).0[0] as f32 / 65535.0
    }))
}

/// A sample as read back from disk (images carry 16-bit quantization).
#[derive(Debug, Clone)]
pub struct LoadedSample {
    pub left: Array2<f32>,
    pub right: Array2<f32>,
    pub gt_depth: Array2<f32>,
    pub gt_pyramid: BoolPyramid,
    pub scene: SceneSpec,
}

pub fn load_sample(dir: &Path) -> Result<LoadedSample> {
    let scene: SceneSpec = read_json(&dir.join("scene.json"))?;
    let levels: Vec<LevelExport> = read_json(&dir.join("pyramid.json"))?;
    Ok(LoadedSample {
        left: load_png16(&dir.join("left.png"))?,
        right: load_png16(&dir.join("right.png"))?,
        gt_depth: pfm::read_pfm(&dir.join("depth.pfm"))?,
        gt_pyramid: pyramid_from_json(&levels, scene.grid)?,
        scene,
    })
}

pub fn load_manifest(root: &Path) -> Result<Manifest> {
    read_json(&root.join("manifest.json"))
}

/// Load every sample of a split, in manifest order.
pub fn load_split(root: &Path, split: Split) -> Result<Vec<LoadedSample>> {
    let manifest = load_manifest(root)?;
    manifest
        .split_entries(split)
        .iter()
        .map(|e| load_sample(&root.join(&e.dir)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;
    use tempfile::tempdir;

    fn tiny_config(n: usize, seed: u64) -> DatasetConfig {
        DatasetConfig {
            n_scenes: n,
            master_seed: seed,
            distribution: SceneDistribution::desk_default(),
        }
    }

    #[test]
    fn split_sizes_80_10_10() {
        let counts = |n: usize| {
            let mut c = [0usize; 3];
            for i in 0..n {
                match split_of(i, n) {
                    Split::Train => c[0] += 1,
                    Split::Val => c[1] += 1,
                    Split::Test => c[2] += 1,
                }
            }
            c
        };
        assert_eq!(counts(100), [80, 10, 10]);
        assert_eq!(counts(10), [8, 1, 1]);
        assert_eq!(counts(500), [400, 50, 50]);
    }

    #[test]
    fn generation_is_byte_reproducible() {
        let dir_a = tempdir().unwrap();
        let dir_b = tempdir().unwrap();
        let cfg = tiny_config(4, 99);
        generate_dataset(&cfg, dir_a.path()).unwrap();
        generate_dataset(&cfg, dir_b.path()).unwrap();
        for entry in ["manifest.json", "train/000000/left.png", "train/000001/depth.pfm"] {
            let a = fs::read(dir_a.path().join(entry)).unwrap();
            let b = fs::read(dir_b.path().join(entry)).unwrap();
            assert_eq!(a, b, "{entry} differs between identical runs");
        }
        // Walk everything for completeness.
        let walk = |root: &Path| {
            let mut files = Vec::new();
            let mut stack = vec![root.to_path_buf()];
            while let Some(d) = stack.pop() {
                let mut names: Vec<PathBuf> =
                    fs::read_dir(&d).unwrap().map(|e| e.unwrap().path()).collect();
                names.sort();
                for p in names {
                    if p.is_dir() {
                        stack.push(p);
                    } else {
                        files.push(p);
                    }
                }
            }
            files
        };
        let fa = walk(dir_a.path());
        let fb = walk(dir_b.path());
        assert_eq!(fa.len(), fb.len());
        for (a, b) in fa.iter().zip(fb.iter()) {
            assert_eq!(
                fs::read(a).unwrap(),
                fs::read(b).unwrap(),
                "{a:?} vs {b:?}"
            );
        }
    }

    #[test]
    fn loaded_sample_roundtrips_ground_truth() {
        let dir = tempdir().unwrap();
        let cfg = tiny_config(3, 1234);
        let manifest = generate_dataset(&cfg, dir.path()).unwrap();
        assert_eq!(manifest.samples.len(), 3);
        for entry in &manifest.samples {
            let s = load_sample(&dir.path().join(&entry.dir)).unwrap();
            // Stored pyramid equals the closure of the stored depth map.
            let cloud = crate::pointcloud::backproject_depth(&s.gt_depth, &s.scene.camera);
            let finest = crate::pointcloud::voxelize(&cloud.points, &s.scene.grid, 1).unwrap();
            let rebuilt =
                crate::grid::build_pyramid(&finest, s.scene.l_level, s.scene.grid).unwrap();
            assert_eq!(rebuilt, s.gt_pyramid);
            // PFM is bit-exact; PNGs round to 16-bit.
            assert_eq!(s.left.dim(), (64, 128));
        }
    }

    #[test]
    fn scene_sampler_produces_valid_scenes() {
        let dist = SceneDistribution::desk_default();
        for i in 0..40 {
            let mut rng = ChaCha12Rng::seed_from_u64(500);
            rng.set_stream(i);
            let spec = dist.sample(&mut rng);
            assert!(spec.validate().is_ok());
            assert!(!spec.obstacles.is_empty());
        }
    }
}

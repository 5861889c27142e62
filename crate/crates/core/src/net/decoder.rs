//! Octree-generating 3D decoder.
//!
//! The latent vector seeds a `delta^3` feature block; each level block runs
//! one stride-2 deconvolution, one 3x3x3 convolution, and a per-voxel
//! probability head. The binarized output of a level (threshold `tau_mask`)
//! is upsampled by child replication and gates both the feature tensor fed
//! to the next block and the set of sites the next block computes at all.
//! Dense mode keeps the identical masking semantics but visits every site;
//! sparse modes skip pruned sites, which is where the compute saving comes
//! from. Sites under a pruned ancestor hold probability exactly 0.

use ndarray::{Array3, Array4};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::grid::{BoolPyramid, GridSpec, OccupancyPyramid, ProbPyramid};
use crate::nn::{relu, relu_backward, Conv3d, Deconv3d, Linear, ParamSet};
use crate::net::{DecodeMode, DecoderConfig};

/// Replicate each mask bit to its 8 children.
pub fn upsample_mask(m: &Array3<bool>) -> Array3<bool> {
    let (d, h, w) = m.dim();
    Array3::from_shape_fn((2 * d, 2 * h, 2 * w), |(z, y, x)| m[[z / 2, y / 2, x / 2]])
}

/// Zero all channels at inactive sites (dense-mode semantic masking).
fn zero_inactive(x: &mut Array4<f32>, active: &Array3<bool>) {
    let (d, h, w, c) = x.dim();
    let xs = x.as_slice_mut().expect("standard layout");
    for z in 0..d {
        for y in 0..h {
            for xq in 0..w {
                if !active[[z, y, xq]] {
                    let base = ((z * h + y) * w + xq) * c;
                    xs[base..base + c].fill(0.0);
                }
            }
        }
    }
}

/// Sigmoid over the single-channel head output, restricted to active sites;
/// inactive sites become exactly 0.
fn sigmoid_masked(head: &Array4<f32>, active: Option<&Array3<bool>>) -> Array3<f32> {
    let (d, h, w, _) = head.dim();
    Array3::from_shape_fn((d, h, w), |(z, y, x)| {
        if active.map_or(true, |a| a[[z, y, x]]) {
            1.0 / (1.0 + (-head[[z, y, x, 0]]).exp())
        } else {
            0.0
        }
    })
}

fn mask_features(x: &mut Array4<f32>, m: &Array3<bool>) {
    let (d, h, w, c) = x.dim();
    let xs = x.as_slice_mut().expect("standard layout");
    for z in 0..d {
        for y in 0..h {
            for xq in 0..w {
                if !m[[z, y, xq]] {
                    let base = ((z * h + y) * w + xq) * c;
                    xs[base..base + c].fill(0.0);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Block {
    pub deconv: Deconv3d,
    pub conv: Conv3d,
    /// 1x1x1 probability head; absent on intermediate levels in straight
    /// mode, where only the finest output exists.
    pub head: Option<Conv3d>,
}

#[derive(Debug, Clone)]
pub(crate) struct Decoder {
    pub fc: Linear,
    pub blocks: Vec<Block>,
    pub cfg: DecoderConfig,
}

/// Per-level activations retained for the backward pass.
pub struct LevelTape {
    pub g_in: Array4<f32>,
    pub post_deconv: Array4<f32>,
    pub post_conv: Array4<f32>,
    pub prob: Option<Array3<f32>>,
    pub active: Option<Array3<bool>>,
    pub mask: Option<Array3<bool>>,
}

pub struct DecodeTape {
    pub base: Array4<f32>,
    pub latent: Vec<f32>,
    pub levels: Vec<LevelTape>,
}

impl Decoder {
    pub fn new(ps: &mut ParamSet, cfg: &DecoderConfig, rng: &mut ChaCha12Rng) -> Self {
        let seed_len = cfg.base_channels * cfg.delta.pow(3);
        let fc = Linear::new(ps, "decoder.fc", cfg.n_latent, seed_len, rng);
        let mut blocks = Vec::with_capacity(cfg.l_level);
        let mut cin = cfg.base_channels;
        for (i, &ch) in cfg.level_channels.iter().enumerate() {
            let l = i + 1;
            let deconv = Deconv3d::new(ps, &format!("decoder.l{l}.deconv"), cin, ch, rng);
            let conv = Conv3d::new(ps, &format!("decoder.l{l}.conv"), 3, ch, ch, rng);
            let supervised = cfg.mode.is_hierarchical() || l == cfg.l_level;
            let head = supervised
                .then(|| Conv3d::new(ps, &format!("decoder.l{l}.head"), 1, ch, 1, rng));
            blocks.push(Block { deconv, conv, head });
            cin = ch;
        }
        Self {
            fc,
            blocks,
            cfg: cfg.clone(),
        }
    }

    /// Decode through level `to_level` (1-based). Returns coarse-to-fine
    /// probability grids (only the finest in straight mode) plus the tape.
    pub fn decode(
        &self,
        ps: &[f32],
        latent: &[f32],
        mode: DecodeMode,
        gt: Option<&BoolPyramid>,
        to_level: usize,
        grid_spec: GridSpec,
    ) -> Result<(ProbPyramid, DecodeTape)> {
        let cfg = &self.cfg;
        if to_level == 0 || to_level > cfg.l_level {
            return Err(Error::InvalidLevel {
                level: to_level,
                max: cfg.l_level,
            });
        }
        if mode == DecodeMode::SparseGt {
            let gt = gt.ok_or(Error::MissingGroundTruth)?;
            if gt.num_levels() < to_level {
                return Err(Error::LevelMismatch {
                    expected: to_level,
                    got: gt.num_levels(),
                });
            }
            for l in 1..=to_level {
                if gt.resolution(l) != cfg.resolution(l) {
                    return Err(Error::ShapeMismatch {
                        expected: format!("gt level {l} at {}", cfg.resolution(l)),
                        got: format!("{}", gt.resolution(l)),
                    });
                }
            }
        }

        let mut seed = self.fc.forward(ps, latent);
        relu(&mut seed);
        let base = Array4::from_shape_vec(
            (cfg.delta, cfg.delta, cfg.delta, cfg.base_channels),
            seed,
        )
        .unwrap();

        let sparse = mode.is_sparse();
        let mut feats = base.clone();
        let mut next_active: Option<Array3<bool>> = None;
        let mut probs: Vec<Array3<f32>> = Vec::new();
        let mut levels: Vec<LevelTape> = Vec::new();

        for (i, block) in self.blocks.iter().take(to_level).enumerate() {
            let level = i + 1;
            let g_in = feats;
            let cur_active = next_active.take();
            let layer_active = if sparse { cur_active.as_ref() } else { None };

            let mut x = block.deconv.forward(ps, &g_in, layer_active);
            if !sparse {
                if let Some(a) = cur_active.as_ref() {
                    zero_inactive(&mut x, a);
                }
            }
            relu(x.as_slice_mut().unwrap());

            let mut y = block.conv.forward(ps, &x, layer_active);
            if !sparse {
                if let Some(a) = cur_active.as_ref() {
                    zero_inactive(&mut y, a);
                }
            }
            relu(y.as_slice_mut().unwrap());

            let prob = block.head.as_ref().map(|head| {
                let hv = head.forward(ps, &y, layer_active);
                sigmoid_masked(&hv, cur_active.as_ref())
            });
            if let Some(p) = &prob {
                probs.push(p.clone());
            }

            let mut mask = None;
            if mode.is_hierarchical() && level < to_level {
                let m = match mode {
                    DecodeMode::SparseGt => gt.unwrap().level(level).clone(),
                    _ => prob
                        .as_ref()
                        .expect("hierarchical levels have heads")
                        .mapv(|p| p >= cfg.tau_mask),
                };
                let mut gated = y.clone();
                mask_features(&mut gated, &m);
                feats = gated;
                next_active = Some(upsample_mask(&m));
                mask = Some(m);
            } else {
                feats = y.clone();
            }

            levels.push(LevelTape {
                g_in,
                post_deconv: x,
                post_conv: y,
                prob,
                active: cur_active,
                mask,
            });
        }

        let pyramid = OccupancyPyramid::from_levels(probs, grid_spec)?;
        Ok((
            pyramid,
            DecodeTape {
                base,
                latent: latent.to_vec(),
                levels,
            },
        ))
    }

    /// Backward: `grad_probs[i]` is dL/d(prob of block i), aligned with
    /// blocks (None for unsupervised levels). Accumulates parameter grads
    /// into `gp`; returns the latent gradient.
    pub fn backward(
        &self,
        ps: &[f32],
        tape: &DecodeTape,
        grad_probs: &[Option<Array3<f32>>],
        gp: &mut [f32],
    ) -> Vec<f32> {
        let n = tape.levels.len();
        let mut carry: Option<Array4<f32>> = None;
        let mut g_base: Option<Array4<f32>> = None;
        for i in (0..n).rev() {
            let lt = &tape.levels[i];
            let block = &self.blocks[i];
            let (d, h, w, c) = lt.post_conv.dim();
            let sparse_active = lt.active.as_ref();

            // Gradient w.r.t. the block's post-conv features.
            let mut gy = carry.take().unwrap_or_else(|| Array4::zeros((d, h, w, c)));
            if let (Some(head), Some(Some(gprob))) = (&block.head, grad_probs.get(i)) {
                let p = lt.prob.as_ref().expect("head implies prob");
                // Sigmoid backward; stored probs are 0 at pruned sites so
                // their gradient dies here.
                let ghead = Array4::from_shape_fn((d, h, w, 1), |(z, y, x, _)| {
                    let pv = p[[z, y, x]];
                    gprob[[z, y, x]] * pv * (1.0 - pv)
                });
                let gh = head.backward(ps, &lt.post_conv, &ghead, sparse_active, gp);
                gy += &gh;
            }
            relu_backward(
                gy.as_slice_mut().unwrap(),
                lt.post_conv.as_slice().unwrap(),
            );
            let mut gx = block.conv.backward(ps, &lt.post_deconv, &gy, sparse_active, gp);
            relu_backward(
                gx.as_slice_mut().unwrap(),
                lt.post_deconv.as_slice().unwrap(),
            );
            let g_gin = block.deconv.backward(ps, &lt.g_in, &gx, sparse_active, gp);

            if i == 0 {
                g_base = Some(g_gin);
            } else {
                // g_in of this block is prev features gated by prev mask.
                let mut g_prev = g_gin;
                if let Some(m) = tape.levels[i - 1].mask.as_ref() {
                    mask_features(&mut g_prev, m);
                }
                carry = Some(g_prev);
            }
        }

        let mut g_seed = g_base.expect("at least one block ran");
        relu_backward(
            g_seed.as_slice_mut().unwrap(),
            tape.base.as_slice().unwrap(),
        );
        let flat: Vec<f32> = g_seed.as_slice().unwrap().to_vec();
        self.fc.backward(ps, &tape.latent, &flat, gp)
    }
}

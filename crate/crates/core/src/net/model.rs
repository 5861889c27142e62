//! The assembled network and its training-time backward pass.

use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::Result;
use crate::grid::{BoolPyramid, ProbPyramid};
use crate::nn::ParamSet;
use crate::net::costvol::{build_cost_volume, cost_volume_backward};
use crate::net::decoder::{DecodeTape, Decoder};
use crate::net::encoder::{EncodeTape, Encoder};
use crate::net::features::{ExtractTape, Extractor, Side};
use crate::net::{DecodeMode, NetConfig};

pub struct VoxelNet {
    pub cfg: NetConfig,
    pub params: ParamSet,
    pub(crate) extractor: Extractor,
    pub(crate) encoder: Encoder,
    pub(crate) decoder: Decoder,
}

/// Everything the backward pass needs from one forward run.
pub struct ModelTape {
    pub(crate) ext_left: ExtractTape,
    pub(crate) ext_right: ExtractTape,
    pub(crate) cv_shifts: Vec<usize>,
    pub(crate) cv_channels: usize,
    pub(crate) enc: EncodeTape,
    pub(crate) dec: DecodeTape,
}

impl VoxelNet {
    /// Build with deterministic weight init from `cfg.init_seed`.
    pub fn new(cfg: NetConfig) -> Result<Self> {
        cfg.validate()?;
        let mut ps = ParamSet::new();
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.init_seed);
        let extractor = Extractor::new(&mut ps, cfg.feature_channels, &mut rng);
        let (h4, w4) = cfg.feature_dims();
        let cv_channels = cfg.plan.len() * 2 * cfg.feature_channels;
        let encoder = Encoder::new(
            &mut ps,
            (h4, w4, cv_channels),
            cfg.encoder_channels,
            cfg.decoder.n_latent,
            &mut rng,
        );
        let decoder = Decoder::new(&mut ps, &cfg.decoder, &mut rng);
        Ok(Self {
            cfg,
            params: ps,
            extractor,
            encoder,
            decoder,
        })
    }

    /// Full forward pass in the configured decode mode.
    pub fn forward(
        &self,
        left: &Array2<f32>,
        right: &Array2<f32>,
        gt: Option<&BoolPyramid>,
    ) -> Result<(ProbPyramid, ModelTape)> {
        self.forward_to_level(left, right, gt, self.cfg.decoder.l_level)
    }

    /// Forward pass decoding only through octree level `to_level`.
    pub fn forward_to_level(
        &self,
        left: &Array2<f32>,
        right: &Array2<f32>,
        gt: Option<&BoolPyramid>,
        to_level: usize,
    ) -> Result<(ProbPyramid, ModelTape)> {
        let ps = &self.params.data;
        let (fl, tl) = self.extractor.forward(ps, left, Side::Left)?;
        let (fr, tr) = self.extractor.forward(ps, right, Side::Right)?;
        let cv = build_cost_volume(&fl, &fr, &self.cfg.plan)?;
        let (latent, enc_tape) = self.encoder.forward(ps, &cv.data)?;
        let (pyr, dec_tape) = self.decoder.decode(
            ps,
            &latent,
            self.cfg.decoder.mode,
            gt,
            to_level,
            self.cfg.grid,
        )?;
        Ok((
            pyr,
            ModelTape {
                ext_left: tl,
                ext_right: tr,
                cv_shifts: cv.shifts,
                cv_channels: cv.channels,
                enc: enc_tape,
                dec: dec_tape,
            },
        ))
    }

    /// Inference without ground truth (sparse_gt checkpoints decode with
    /// predicted masks, which is all that exists at test time).
    pub fn infer(&self, left: &Array2<f32>, right: &Array2<f32>) -> Result<ProbPyramid> {
        self.infer_to_level(left, right, self.cfg.decoder.l_level)
    }

    pub fn infer_to_level(
        &self,
        left: &Array2<f32>,
        right: &Array2<f32>,
        to_level: usize,
    ) -> Result<ProbPyramid> {
        let mode = self.infer_mode();
        let ps = &self.params.data;
        let (fl, _) = self.extractor.forward(ps, left, Side::Left)?;
        let (fr, _) = self.extractor.forward(ps, right, Side::Right)?;
        let cv = build_cost_volume(&fl, &fr, &self.cfg.plan)?;
        let (latent, _) = self.encoder.forward(ps, &cv.data)?;
        let (pyr, _) = self
            .decoder
            .decode(ps, &latent, mode, None, to_level, self.cfg.grid)?;
        Ok(pyr)
    }

    /// Decode mode used at inference: sparse_gt falls back to predicted
    /// masks.
    pub fn infer_mode(&self) -> DecodeMode {
        match self.cfg.decoder.mode {
            DecodeMode::SparseGt => DecodeMode::SparsePred,
            m => m,
        }
    }

    /// Decode a raw latent vector (decoder-only path, used by tests and the
    /// early-exit controller experiments).
    pub fn decode_latent(
        &self,
        latent: &[f32],
        mode: DecodeMode,
        gt: Option<&BoolPyramid>,
        to_level: usize,
    ) -> Result<(ProbPyramid, DecodeTape)> {
        self.decoder
            .decode(&self.params.data, latent, mode, gt, to_level, self.cfg.grid)
    }

    /// Backward pass. `grad_probs[i]` aligns with decoded block `i` (None
    /// for unsupervised straight-mode intermediates). Returns flat
    /// parameter gradients.
    pub fn backward(&self, tape: &ModelTape, grad_probs: &[Option<Array3<f32>>]) -> Vec<f32> {
        let ps = &self.params.data;
        let mut gp = self.params.zeros_like();
        let g_latent = self.decoder.backward(ps, &tape.dec, grad_probs, &mut gp);
        let g_cv = self.encoder.backward(ps, &tape.enc, &g_latent, &mut gp);
        let (g_fl, g_fr) = cost_volume_backward(&g_cv, tape.cv_channels, &tape.cv_shifts);
        self.extractor
            .backward(ps, &tape.ext_left, g_fl, &mut gp);
        self.extractor
            .backward(ps, &tape.ext_right, g_fr, &mut gp);
        gp
    }

    /// Per-level prediction masks for MAC accounting.
    pub fn masks_of(&self, pyr: &ProbPyramid) -> Vec<Array3<bool>> {
        pyr.levels()
            .iter()
            .map(|g| g.mapv(|p| p >= self.cfg.decoder.tau_mask))
            .collect()
    }
}

/// Deterministic latent sampler for decoder-only experiments.
pub fn random_latent(n: usize, seed: u64) -> Vec<f32> {
    use rand::Rng;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}

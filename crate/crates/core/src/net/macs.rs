//! Analytic multiply-accumulate and parameter counting.
//!
//! Per conv-like layer: `k_d * k_h * k_w * C_in * C_out * active_output_sites`
//! (the same kernel-volume convention is applied to the stride-2
//! deconvolutions); fully connected layers count `C_in * C_out`. Dense
//! decoding counts every site; sparse decoding counts only sites whose
//! octree parent survived its mask.

use ndarray::Array3;

use crate::net::NetConfig;

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MacReport {
    pub feature_extraction: u64,
    /// The interlacing gather performs no multiplies.
    pub cost_volume: u64,
    pub encoder: u64,
    pub decoder: u64,
    pub decoder_by_level: Vec<u64>,
    pub total: u64,
}

fn conv2d_out(h: usize, w: usize, stride: usize) -> (usize, usize) {
    ((h + 2 - 3) / stride + 1, (w + 2 - 3) / stride + 1)
}

/// Count MACs for one forward pass of the configured network.
///
/// `masks`: per-level prediction/GT masks (coarse to fine) enabling sparse
/// decoder accounting; `None` counts densely. `to_level` truncates the
/// decoder for early-exit accounting.
pub fn count_macs(
    cfg: &NetConfig,
    masks: Option<&[Array3<bool>]>,
    to_level: Option<usize>,
) -> MacReport {
    let c = cfg.feature_channels as u64;
    let (h, w) = (cfg.camera.image_height, cfg.camera.image_width);

    // Feature extraction: stride 2, stride 1, stride 2 — run on both views.
    let (h2, w2) = conv2d_out(h, w, 2);
    let (h4, w4) = conv2d_out(h2, w2, 2);
    let extraction_one = 9 * 1 * c * (h2 * w2) as u64
        + 9 * c * c * (h2 * w2) as u64
        + 9 * c * c * (h4 * w4) as u64;
    let feature_extraction = 2 * extraction_one;

    // Encoder over the [H/4, W/4, |D| * 2C] cost volume.
    let cv_ch = (cfg.plan.len() as u64) * 2 * c;
    let (e0, e1) = (cfg.encoder_channels.0 as u64, cfg.encoder_channels.1 as u64);
    let (h8, w8) = conv2d_out(h4, w4, 2);
    let (h16, w16) = conv2d_out(h8, w8, 2);
    let encoder = 9 * cv_ch * e0 * (h8 * w8) as u64
        + 9 * e0 * e1 * (h16 * w16) as u64
        + e1 * (h16 * w16) as u64 * cfg.decoder.n_latent as u64;

    // Decoder.
    let d = &cfg.decoder;
    let levels = to_level.unwrap_or(d.l_level).min(d.l_level);
    let seed_len = (d.base_channels * d.delta.pow(3)) as u64;
    let mut decoder = d.n_latent as u64 * seed_len;
    let mut decoder_by_level = Vec::with_capacity(levels);
    let mut cin = d.base_channels as u64;
    for l in 1..=levels {
        let r = d.resolution(l) as u64;
        let all_sites = r * r * r;
        let sites = match (l, masks) {
            (1, _) | (_, None) => all_sites,
            (_, Some(ms)) => {
                let parent = &ms[l - 2];
                8 * parent.iter().filter(|&&b| b).count() as u64
            }
        };
        let ch = d.level_channels[l - 1] as u64;
        let mut lvl = 8 * cin * ch * sites + 27 * ch * ch * sites;
        let supervised = d.mode.is_hierarchical() || l == d.l_level;
        if supervised {
            lvl += ch * sites;
        }
        decoder += lvl;
        decoder_by_level.push(lvl);
        cin = ch;
    }

    let total = feature_extraction + encoder + decoder;
    MacReport {
        feature_extraction,
        cost_volume: 0,
        encoder,
        decoder,
        decoder_by_level,
        total,
    }
}

/// Analytic trainable-parameter count; matches the allocated store exactly.
pub fn parameter_count(cfg: &NetConfig) -> u64 {
    let c = cfg.feature_channels as u64;
    let mut n = (9 * c + c) + (9 * c * c + c) + (9 * c * c + c);

    let cv_ch = (cfg.plan.len() as u64) * 2 * c;
    let (e0, e1) = (cfg.encoder_channels.0 as u64, cfg.encoder_channels.1 as u64);
    let (h4, w4) = {
        let (h2, w2) = conv2d_out(cfg.camera.image_height, cfg.camera.image_width, 2);
        conv2d_out(h2, w2, 2)
    };
    let (h8, w8) = conv2d_out(h4, w4, 2);
    let (h16, w16) = conv2d_out(h8, w8, 2);
    n += 9 * cv_ch * e0 + e0 + 9 * e0 * e1 + e1;
    n += (h16 * w16) as u64 * e1 * cfg.decoder.n_latent as u64 + cfg.decoder.n_latent as u64;

    let d = &cfg.decoder;
    let seed_len = (d.base_channels * d.delta.pow(3)) as u64;
    n += d.n_latent as u64 * seed_len + seed_len;
    let mut cin = d.base_channels as u64;
    for l in 1..=d.l_level {
        let ch = d.level_channels[l - 1] as u64;
        n += 8 * cin * ch + ch;
        n += 27 * ch * ch + ch;
        if d.mode.is_hierarchical() || l == d.l_level {
            n += ch + 1;
        }
        cin = ch;
    }
    n
}

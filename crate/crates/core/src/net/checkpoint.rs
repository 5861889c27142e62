//! Single-file checkpoint archive: an 8-byte magic, a JSON header carrying
//! the full network config and the named tensor table, then the raw
//! little-endian f32 weights.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{NetConfig, VoxelNet};
use crate::nn::Segment;

const MAGIC: &[u8; 8] = b"VOXOCCK1";

#[derive(Serialize, Deserialize)]
struct Header {
    config: NetConfig,
    dtype: String,
    segments: Vec<Segment>,
    data_len: usize,
}

pub fn save_checkpoint(net: &VoxelNet, path: &Path) -> Result<()> {
    let header = Header {
        config: net.cfg.clone(),
        dtype: "f32".into(),
        segments: net.params.segments.clone(),
        data_len: net.params.data.len(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + net.params.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for &v in &net.params.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<VoxelNet> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::BadFormat {
        path: path.into(),
        msg,
    };
    if data.len() < 12 || &data[0..8] != MAGIC {
        return Err(bad("missing checkpoint magic".into()));
    }
    let json_len = u32::from_le_bytes(data[8..12].try_into().unwrap()) as usize;
    if data.len() < 12 + json_len {
        return Err(bad("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&data[12..12 + json_len])
        .map_err(|e| bad(format!("bad header: {e}")))?;
    if header.dtype != "f32" {
        return Err(bad(format!("unsupported dtype {}", header.dtype)));
    }
    let payload = &data[12 + json_len..];
    if payload.len() != header.data_len * 4 {
        return Err(bad(format!(
            "weight payload {} bytes, expected {}",
            payload.len(),
            header.data_len * 4
        )));
    }

    let mut net = VoxelNet::new(header.config)?;
    if net.params.segments != header.segments {
        return Err(Error::ConfigMismatch(
            "segment table does not match the rebuilt architecture".into(),
        ));
    }
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        net.params.data[i] = f32::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::CameraModel;
    use crate::disparity::plan_disparity_levels;
    use crate::grid::GridSpec;
    use crate::net::DecodeMode;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use tempfile::tempdir;

    #[test]
    fn roundtrip_bit_exact() {
        let camera = CameraModel::new(160.0, 0.4, 128, 64, (64.0, 0.0)).unwrap();
        let grid = GridSpec::cubic(0.5, 32).unwrap();
        let plan = plan_disparity_levels(&camera, &grid, 2.0).unwrap();
        let mut cfg = crate::net::NetConfig::desk(camera, grid, plan, 11);
        cfg.decoder.mode = DecodeMode::SparsePred;
        let net = VoxelNet::new(cfg).unwrap();

        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&net, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(net.params.data, loaded.params.data);
        assert_eq!(net.cfg, loaded.cfg);

        // Same outputs bit-exactly.
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let l = Array2::from_shape_fn((64, 128), |_| rng.gen::<f32>());
        let r = Array2::from_shape_fn((64, 128), |_| rng.gen::<f32>());
        let pa = net.infer(&l, &r).unwrap();
        let pb = loaded.infer(&l, &r).unwrap();
        for lvl in 1..=3 {
            assert_eq!(pa.level(lvl), pb.level(lvl));
        }
    }

    #[test]
    fn rejects_corrupt_files() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        fs::write(&path, b"not a checkpoint").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}

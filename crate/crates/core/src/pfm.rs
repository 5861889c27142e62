//! Portable Float Map I/O for depth and disparity maps.
//!
//! Grayscale `Pf` maps only, little-endian on disk (negative scale), with
//! scanlines stored bottom-to-top as the format prescribes. NaN or
//! non-positive samples mark invalid pixels.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub fn write_pfm(path: &Path, map: &Array2<f32>) -> Result<()> {
    fs::write(path, pfm_bytes(map)).map_err(|e| Error::io(path, e))
}

pub fn pfm_bytes(map: &Array2<f32>) -> Vec<u8> {
    let (h, w) = map.dim();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for v in (0..h).rev() {
        for u in 0..w {
            out.extend_from_slice(&map[[v, u]].to_le_bytes());
        }
    }
    out
}

pub fn read_pfm(path: &Path) -> Result<Array2<f32>> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    pfm_from_bytes(&data).map_err(|e| match e {
        Error::BadFormat { msg, .. } => Error::BadFormat {
            path: path.into(),
            msg,
        },
        other => other,
    })
}

pub fn pfm_from_bytes(data: &[u8]) -> Result<Array2<f32>> {
    let bad = |msg: &str| Error::BadFormat {
        path: "<pfm>".into(),
        msg: msg.into(),
    };
    // Header: magic, width, height, scale — whitespace separated tokens.
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        while pos < data.len() && data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        let end = pos;
        // Consume the single whitespace terminating the token.
        if pos < data.len() {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&data[start..end]).into_owned())
    };
    let magic = token()?;
    if magic == "PF" {
        return Err(bad("color PFM not supported, expected grayscale Pf"));
    }
    if magic != "Pf" {
        return Err(bad(&format!("bad magic {magic:?}")));
    }
    let w: usize = token()?.parse().map_err(|_| bad("bad width"))?;
    let h: usize = token()?.parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = token()?.parse().map_err(|_| bad("bad scale"))?;
    let little_endian = scale < 0.0;
    let payload = &data[pos..];
    if payload.len() < w * h * 4 {
        return Err(bad(&format!(
            "payload too short: {} bytes for {w}x{h}",
            payload.len()
        )));
    }
    let mut map = Array2::zeros((h, w));
    let mut k = 0usize;
    for v in (0..h).rev() {
        for u in 0..w {
            let b: [u8; 4] = payload[k..k + 4].try_into().unwrap();
            map[[v, u]] = if little_endian {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
            k += 4;
        }
    }
    Ok(map)
}

//! Interlacing cost volume over planned disparity levels.
//!
//! For each level d the slice interlaces left features with the right
//! features shifted by round(d / 4) cells: left channel i lands on output
//! channel 2i, right channel i on 2i+1. Columns shifted out of bounds are
//! zero-filled. Logical shape is 2C x |D| x H/4 x W/4; storage is
//! channels-last `[H/4, W/4, |D| * 2C]` so the encoder can treat the level
//! and channel dims as one channel axis.

use ndarray::Array3;

use crate::disparity::{DisparityPlan, FEATURE_DOWNSAMPLE};
use crate::error::{Error, Result};
use crate::net::features::FeatureMap;

#[derive(Debug, Clone)]
pub struct CostVolume {
    /// `[H/4, W/4, levels * 2C]`, level-major then interlaced channels.
    pub data: Array3<f32>,
    pub channels: usize,
    pub levels: usize,
    /// Per-level feature-cell shifts actually applied.
    pub shifts: Vec<usize>,
}

impl CostVolume {
    /// Logical dims (2C, |D|, H/4, W/4).
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let (h, w, _) = self.data.dim();
        (2 * self.channels, self.levels, h, w)
    }

    /// Element accessor in logical coordinates (2C-channel, level, y, x).
    pub fn get(&self, c2: usize, level: usize, y: usize, x: usize) -> f32 {
        self.data[[y, x, level * 2 * self.channels + c2]]
    }
}

/// Feature-cell shifts for a plan, validated against the feature width.
pub fn plan_shifts(plan: &DisparityPlan, feature_width: usize) -> Result<Vec<usize>> {
    plan.levels
        .iter()
        .map(|&d| {
            let s = (d / FEATURE_DOWNSAMPLE as f64).round() as isize;
            if s < 0 || s as usize >= feature_width {
                Err(Error::InvalidArg(format!(
                    "disparity {d} px shifts {s} cells, outside feature width {feature_width}"
                )))
            } else {
                Ok(s as usize)
            }
        })
        .collect()
}

pub fn build_cost_volume(
    left: &FeatureMap,
    right: &FeatureMap,
    plan: &DisparityPlan,
) -> Result<CostVolume> {
    let (h, w, c) = left.data.dim();
    if right.data.dim() != (h, w, c) {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", left.data.dim()),
            got: format!("{:?}", right.data.dim()),
        });
    }
    let shifts = plan_shifts(plan, w)?;
    let n = plan.len();
    let fl = left.data.as_slice().expect("standard layout");
    let fr = right.data.as_slice().expect("standard layout");
    let mut out = vec![0.0f32; h * w * n * 2 * c];
    let row_ch = n * 2 * c;
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * row_ch;
            let l_in = &fl[(y * w + x) * c..][..c];
            for (lvl, &shift) in shifts.iter().enumerate() {
                let slot = &mut out[base + lvl * 2 * c..][..2 * c];
                if x >= shift {
                    let r_in = &fr[(y * w + (x - shift)) * c..][..c];
                    for ci in 0..c {
                        slot[2 * ci] = l_in[ci];
                        slot[2 * ci + 1] = r_in[ci];
                    }
                } else {
                    for ci in 0..c {
                        slot[2 * ci] = l_in[ci];
                    }
                }
            }
        }
    }
    Ok(CostVolume {
        data: Array3::from_shape_vec((h, w, row_ch), out).unwrap(),
        channels: c,
        levels: n,
        shifts,
    })
}

/// Backward of the gather: route the cost-volume gradient back to the two
/// feature maps.
pub fn cost_volume_backward(
    gout: &Array3<f32>,
    channels: usize,
    shifts: &[usize],
) -> (Array3<f32>, Array3<f32>) {
    let (h, w, row_ch) = gout.dim();
    debug_assert_eq!(row_ch, shifts.len() * 2 * channels);
    let gs = gout.as_slice().expect("standard layout");
    let mut gl = vec![0.0f32; h * w * channels];
    let mut gr = vec![0.0f32; h * w * channels];
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * row_ch;
            for (lvl, &shift) in shifts.iter().enumerate() {
                let slot = &gs[base + lvl * 2 * channels..][..2 * channels];
                let gl_out = &mut gl[(y * w + x) * channels..][..channels];
                for ci in 0..channels {
                    gl_out[ci] += slot[2 * ci];
                }
                if x >= shift {
                    let gr_out = &mut gr[(y * w + (x - shift)) * channels..][..channels];
                    for ci in 0..channels {
                        gr_out[ci] += slot[2 * ci + 1];
                    }
                }
            }
        }
    }
    (
        Array3::from_shape_vec((h, w, channels), gl).unwrap(),
        Array3::from_shape_vec((h, w, channels), gr).unwrap(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::features::Side;
    use ndarray::Array3;

    fn fm(data: Array3<f32>, side: Side) -> FeatureMap {
        FeatureMap { data, side }
    }

    fn plan_of(levels: &[f64]) -> DisparityPlan {
        DisparityPlan {
            levels: levels.to_vec(),
            raw_levels: levels.to_vec(),
            source: crate::disparity::PlanSource::Full {
                d_max: levels.len(),
            },
        }
    }

    #[test]
    fn zero_shift_identity_interlace() {
        let f = Array3::from_shape_fn((2, 3, 2), |(y, x, c)| (y * 6 + x * 2 + c) as f32);
        let cv =
            build_cost_volume(&fm(f.clone(), Side::Left), &fm(f, Side::Right), &plan_of(&[0.0]))
                .unwrap();
        let (c2, d, h, w) = cv.dims();
        assert_eq!((c2, d, h, w), (4, 1, 2, 3));
        for y in 0..h {
            for x in 0..w {
                for ci in 0..2 {
                    assert_eq!(cv.get(2 * ci, 0, y, x), cv.get(2 * ci + 1, 0, y, x));
                }
            }
        }
    }

    #[test]
    fn hand_computed_shift_with_zero_fill() {
        // f_L = [1,2,3,4], f_R = [5,6,7,8], shift 1 (d = 4 px): right
        // contribution [0,5,6,7] interlaced with the left row.
        let fl = Array3::from_shape_vec((1, 4, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let fr = Array3::from_shape_vec((1, 4, 1), vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let cv =
            build_cost_volume(&fm(fl, Side::Left), &fm(fr, Side::Right), &plan_of(&[4.0])).unwrap();
        let left_row: Vec<f32> = (0..4).map(|x| cv.get(0, 0, 0, x)).collect();
        let right_row: Vec<f32> = (0..4).map(|x| cv.get(1, 0, 0, x)).collect();
        assert_eq!(left_row, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(right_row, vec![0.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn table_axes_level_counts() {
        // The four cost-volume flavors used by the ablation grid.
        assert_eq!(DisparityPlan::full(48).unwrap().len(), 48);
        assert_eq!(DisparityPlan::even_k(2, 48).unwrap().len(), 24);
        assert_eq!(DisparityPlan::even_k(4, 48).unwrap().len(), 12);
        // Voxel plan counts come from plan_disparity_levels; covered there.
    }

    #[test]
    fn rejects_shift_beyond_feature_width() {
        let fl = Array3::zeros((2, 4, 1));
        let fr = Array3::zeros((2, 4, 1));
        let err = build_cost_volume(
            &fm(fl, Side::Left),
            &fm(fr, Side::Right),
            &plan_of(&[100.0]),
        );
        assert!(err.is_err());
    }

    #[test]
    fn backward_routes_gradients() {
        let fl = Array3::from_shape_fn((1, 4, 1), |(_, x, _)| x as f32);
        let fr = fl.clone();
        let cv = build_cost_volume(
            &fm(fl, Side::Left),
            &fm(fr, Side::Right),
            &plan_of(&[4.0, 0.0]),
        )
        .unwrap();
        let mut g = Array3::zeros(cv.data.dim());
        g[[0, 2, 0]] = 1.0; // level 0 (shift 1), left channel at x=2
        g[[0, 2, 1]] = 2.0; // level 0, right channel at x=2 -> fr x=1
        g[[0, 2, 3]] = 4.0; // level 1 (shift 0), right channel at x=2 -> fr x=2
        let (gl, gr) = cost_volume_backward(&g, 1, &cv.shifts);
        assert_eq!(gl[[0, 2, 0]], 1.0);
        assert_eq!(gr[[0, 1, 0]], 2.0);
        assert_eq!(gr[[0, 2, 0]], 4.0);
    }
}

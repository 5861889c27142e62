//! Unary feature extraction: three small convolutions bringing the image to
//! quarter resolution, shared between the two views.

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::nn::{relu, relu_backward, Conv2d};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Quarter-resolution feature map, `[H/4, W/4, C]`.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub data: Array3<f32>,
    pub side: Side,
}

impl FeatureMap {
    pub fn channels(&self) -> usize {
        self.data.dim().2
    }
}

/// The extractor stack: stride 2, stride 1, stride 2.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Extractor {
    pub c1: Conv2d,
    pub c2: Conv2d,
    pub c3: Conv2d,
}

/// Forward activations kept for the backward pass.
pub(crate) struct ExtractTape {
    pub input: Array3<f32>,
    pub a1: Array3<f32>,
    pub a2: Array3<f32>,
    pub out: Array3<f32>,
}

impl Extractor {
    pub fn new(ps: &mut crate::nn::ParamSet, channels: usize, rng: &mut rand_chacha::ChaCha12Rng) -> Self {
        Self {
            c1: Conv2d::new(ps, "extract.c1", (3, 3), 1, channels, 2, 1, rng),
            c2: Conv2d::new(ps, "extract.c2", (3, 3), channels, channels, 1, 1, rng),
            c3: Conv2d::new(ps, "extract.c3", (3, 3), channels, channels, 2, 1, rng),
        }
    }

    pub fn forward(&self, ps: &[f32], image: &Array2<f32>, side: Side) -> Result<(FeatureMap, ExtractTape)> {
        let (h, w) = image.dim();
        if h % 4 != 0 || w % 4 != 0 {
            return Err(Error::ShapeMismatch {
                expected: "image dims divisible by 4".into(),
                got: format!("{h}x{w}"),
            });
        }
        let input = image
            .to_shape((h, w, 1))
            .expect("reshape to single channel")
            .to_owned();
        let mut a1 = self.c1.forward(ps, &input);
        relu(a1.as_slice_mut().unwrap());
        let mut a2 = self.c2.forward(ps, &a1);
        relu(a2.as_slice_mut().unwrap());
        let mut out = self.c3.forward(ps, &a2);
        relu(out.as_slice_mut().unwrap());
        let fm = FeatureMap {
            data: out.clone(),
            side,
        };
        Ok((
            fm,
            ExtractTape {
                input,
                a1,
                a2,
                out,
            },
        ))
    }

    /// Backward through the stack; accumulates parameter grads.
    pub fn backward(&self, ps: &[f32], tape: &ExtractTape, mut gout: Array3<f32>, gp: &mut [f32]) {
        relu_backward(gout.as_slice_mut().unwrap(), tape.out.as_slice().unwrap());
        let mut g2 = self.c3.backward(ps, &tape.a2, &gout, gp);
        relu_backward(g2.as_slice_mut().unwrap(), tape.a2.as_slice().unwrap());
        let mut g1 = self.c2.backward(ps, &tape.a1, &g2, gp);
        relu_backward(g1.as_slice_mut().unwrap(), tape.a1.as_slice().unwrap());
        let _ = self.c1.backward(ps, &tape.input, &g1, gp);
    }
}

//! 2D encoder: two strided convolutions over the cost volume, flattened
//! into a fully connected layer producing the latent vector.

use ndarray::Array3;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::nn::{relu, relu_backward, Conv2d, Linear, ParamSet};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Encoder {
    pub c1: Conv2d,
    pub c2: Conv2d,
    pub fc: Linear,
    in_dims: (usize, usize, usize),
}

pub struct EncodeTape {
    pub input: Array3<f32>,
    pub a1: Array3<f32>,
    pub a2: Array3<f32>,
    pub flat: Vec<f32>,
}

impl Encoder {
    pub fn new(
        ps: &mut ParamSet,
        in_dims: (usize, usize, usize),
        mid: (usize, usize),
        n_latent: usize,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let (h, w, cin) = in_dims;
        let c1 = Conv2d::new(ps, "encoder.c1", (3, 3), cin, mid.0, 2, 1, rng);
        let (h1, w1) = c1.out_dim(h, w);
        let c2 = Conv2d::new(ps, "encoder.c2", (3, 3), mid.0, mid.1, 2, 1, rng);
        let (h2, w2) = c2.out_dim(h1, w1);
        let fc = Linear::new(ps, "encoder.fc", h2 * w2 * mid.1, n_latent, rng);
        Self {
            c1,
            c2,
            fc,
            in_dims,
        }
    }

    pub fn forward(&self, ps: &[f32], cv: &Array3<f32>) -> Result<(Vec<f32>, EncodeTape)> {
        if cv.dim() != self.in_dims {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", self.in_dims),
                got: format!("{:?}", cv.dim()),
            });
        }
        let mut a1 = self.c1.forward(ps, cv);
        relu(a1.as_slice_mut().unwrap());
        let mut a2 = self.c2.forward(ps, &a1);
        relu(a2.as_slice_mut().unwrap());
        let flat = a2.as_slice().unwrap().to_vec();
        let latent = self.fc.forward(ps, &flat);
        Ok((
            latent,
            EncodeTape {
                input: cv.clone(),
                a1,
                a2,
                flat,
            },
        ))
    }

    /// Returns the gradient w.r.t. the cost volume.
    pub fn backward(
        &self,
        ps: &[f32],
        tape: &EncodeTape,
        g_latent: &[f32],
        gp: &mut [f32],
    ) -> Array3<f32> {
        let g_flat = self.fc.backward(ps, &tape.flat, g_latent, gp);
        let mut g2 = Array3::from_shape_vec(tape.a2.dim(), g_flat).unwrap();
        relu_backward(g2.as_slice_mut().unwrap(), tape.a2.as_slice().unwrap());
        let mut g1 = self.c2.backward(ps, &tape.a1, &g2, gp);
        relu_backward(g1.as_slice_mut().unwrap(), tape.a1.as_slice().unwrap());
        self.c1.backward(ps, &tape.input, &g1, gp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn latent_shape_and_determinism() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let enc = Encoder::new(&mut ps, (16, 32, 24), (32, 48), 128, &mut rng);
        let cv = Array3::from_shape_fn((16, 32, 24), |_| rng.gen_range(-1.0f32..1.0));
        let (la, _) = enc.forward(&ps.data, &cv).unwrap();
        let (lb, _) = enc.forward(&ps.data, &cv).unwrap();
        assert_eq!(la.len(), 128);
        assert_eq!(la, lb);
        let bad = Array3::zeros((16, 32, 23));
        assert!(enc.forward(&ps.data, &bad).is_err());
    }
}

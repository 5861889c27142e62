//! Minimal training substrate: a flat parameter store and hand-written
//! layers with explicit backward passes.
//!
//! All parameters live in one contiguous `Vec<f32>` addressed by named
//! segments; layers are small Copy descriptors holding offsets into it.
//! Gradients are a parallel flat vector, which keeps the optimizer, the
//! checkpoint format, and per-sample gradient reduction trivial and
//! deterministic.

mod layers;

pub use layers::{Conv2d, Conv3d, Deconv3d, Linear};

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// One named parameter tensor inside the flat store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub data: Vec<f32>,
    pub segments: Vec<Segment>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self {
            data: Vec::new(),
            segments: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Allocate a named segment initialized by `fill`.
    pub fn alloc(&mut self, name: &str, shape: &[usize], mut fill: impl FnMut() -> f32) -> usize {
        let offset = self.data.len();
        let n: usize = shape.iter().product();
        self.data.extend(std::iter::repeat_with(&mut fill).take(n));
        self.segments.push(Segment {
            name: name.to_string(),
            offset,
            shape: shape.to_vec(),
        });
        offset
    }

    /// He-style uniform init over `fan_in`, scaled by `gain`.
    pub fn alloc_uniform(
        &mut self,
        name: &str,
        shape: &[usize],
        fan_in: usize,
        gain: f32,
        rng: &mut ChaCha12Rng,
    ) -> usize {
        let limit = gain * (6.0 / fan_in as f32).sqrt();
        self.alloc(name, shape, || rng.gen_range(-limit..limit))
    }

    pub fn alloc_zeros(&mut self, name: &str, shape: &[usize]) -> usize {
        self.alloc(name, shape, || 0.0)
    }

    pub fn zeros_like(&self) -> Vec<f32> {
        vec![0.0; self.data.len()]
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn segment_data(&self, seg: &Segment) -> &[f32] {
        &self.data[seg.offset..seg.offset + seg.len()]
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

pub fn relu(x: &mut [f32]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Backward of relu given the forward *output*: gradient passes where the
/// output is positive.
pub fn relu_backward(grad: &mut [f32], out: &[f32]) {
    for (g, &y) in grad.iter_mut().zip(out) {
        if y <= 0.0 {
            *g = 0.0;
        }
    }
}

pub fn sigmoid(x: &mut [f32]) {
    for v in x {
        *v = 1.0 / (1.0 + (-*v).exp());
    }
}

/// Backward of sigmoid given the forward output y: dy/dx = y * (1 - y).
pub fn sigmoid_backward(grad: &mut [f32], out: &[f32]) {
    for (g, &y) in grad.iter_mut().zip(out) {
        *g *= y * (1.0 - y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn alloc_and_lookup() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let off_w = ps.alloc_uniform("w", &[3, 4], 3, 1.0, &mut rng);
        let off_b = ps.alloc_zeros("b", &[4]);
        assert_eq!(off_w, 0);
        assert_eq!(off_b, 12);
        assert_eq!(ps.len(), 16);
        let seg = ps.segment("b").unwrap();
        assert_eq!(seg.len(), 4);
        assert!(ps.segment_data(seg).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn activations_and_backwards() {
        let mut x = vec![-1.0f32, 0.0, 2.0];
        relu(&mut x);
        assert_eq!(x, vec![0.0, 0.0, 2.0]);
        let mut g = vec![1.0f32, 1.0, 1.0];
        relu_backward(&mut g, &x);
        assert_eq!(g, vec![0.0, 0.0, 1.0]);

        let mut s = vec![0.0f32];
        sigmoid(&mut s);
        assert!((s[0] - 0.5).abs() < 1e-7);
        let mut gs = vec![2.0f32];
        sigmoid_backward(&mut gs, &s);
        assert!((gs[0] - 0.5).abs() < 1e-6);
    }
}

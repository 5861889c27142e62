//! Layers over the flat parameter store. Tensors are channels-last
//! (`[H, W, C]` / `[D, H, W, C]`) so the inner accumulation runs over a
//! contiguous output-channel slice at every site.
//!
//! 3D layers accept an optional active-site mask on their *output* grid.
//! Masked variants visit active sites only and leave the rest exactly zero;
//! because the unmasked path gathers in the same per-site order over inputs
//! that are zero at inactive sites, masked and unmasked results agree
//! bitwise at active sites. That is the computation-pruning contract the
//! octree decoder builds on.

use ndarray::{Array3, Array4};
use rand_chacha::ChaCha12Rng;

use super::ParamSet;

#[inline]
fn axpy(acc: &mut [f32], a: f32, x: &[f32]) {
    for (r, &v) in acc.iter_mut().zip(x) {
        *r += a * v;
    }
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// 2D convolution, channels-last, weights `[kh, kw, cin, cout]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conv2d {
    pub w_off: usize,
    pub b_off: usize,
    pub kh: usize,
    pub kw: usize,
    pub cin: usize,
    pub cout: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        (kh, kw): (usize, usize),
        cin: usize,
        cout: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let fan_in = kh * kw * cin;
        let w_off = ps.alloc_uniform(&format!("{name}.w"), &[kh, kw, cin, cout], fan_in, 1.0, rng);
        let b_off = ps.alloc_zeros(&format!("{name}.b"), &[cout]);
        Self {
            w_off,
            b_off,
            kh,
            kw,
            cin,
            cout,
            stride,
            pad,
        }
    }

    pub fn out_dim(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kh) / self.stride + 1,
            (w + 2 * self.pad - self.kw) / self.stride + 1,
        )
    }

    pub fn forward(&self, ps: &[f32], x: &Array3<f32>) -> Array3<f32> {
        let (h, w, cin) = x.dim();
        debug_assert_eq!(cin, self.cin);
        let (ho, wo) = self.out_dim(h, w);
        let xs = x.as_slice().expect("standard layout");
        let ws = &ps[self.w_off..];
        let bs = &ps[self.b_off..self.b_off + self.cout];
        let mut out = vec![0.0f32; ho * wo * self.cout];
        for oy in 0..ho {
            for ox in 0..wo {
                let acc = &mut out[(oy * wo + ox) * self.cout..][..self.cout];
                acc.copy_from_slice(bs);
                for ky in 0..self.kh {
                    let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..self.kw {
                        let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let xin = &xs[(iy as usize * w + ix as usize) * cin..][..cin];
                        let wt = &ws[(ky * self.kw + kx) * cin * self.cout..];
                        for (ci, &xv) in xin.iter().enumerate() {
                            if xv != 0.0 {
                                axpy(acc, xv, &wt[ci * self.cout..][..self.cout]);
                            }
                        }
                    }
                }
            }
        }
        Array3::from_shape_vec((ho, wo, self.cout), out).unwrap()
    }

    /// Accumulates parameter grads into `gp`, returns the input gradient.
    pub fn backward(
        &self,
        ps: &[f32],
        x: &Array3<f32>,
        gout: &Array3<f32>,
        gp: &mut [f32],
    ) -> Array3<f32> {
        let (h, w, cin) = x.dim();
        let (ho, wo, cout) = gout.dim();
        debug_assert_eq!(cout, self.cout);
        let xs = x.as_slice().expect("standard layout");
        let gs = gout.as_slice().expect("standard layout");
        let mut gx = vec![0.0f32; h * w * cin];
        for oy in 0..ho {
            for ox in 0..wo {
                let go = &gs[(oy * wo + ox) * cout..][..cout];
                axpy(&mut gp[self.b_off..self.b_off + cout], 1.0, go);
                for ky in 0..self.kh {
                    let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..self.kw {
                        let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let in_base = (iy as usize * w + ix as usize) * cin;
                        let xin = &xs[in_base..][..cin];
                        let w_base = self.w_off + (ky * self.kw + kx) * cin * cout;
                        for ci in 0..cin {
                            axpy(&mut gp[w_base + ci * cout..][..cout], xin[ci], go);
                            gx[in_base + ci] += dot(&ps[w_base + ci * cout..][..cout], go);
                        }
                    }
                }
            }
        }
        Array3::from_shape_vec((h, w, cin), gx).unwrap()
    }
}

/// 3x3x3 3D convolution, stride 1, pad 1, channels-last, weights
/// `[3, 3, 3, cin, cout]`, optional output-site mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conv3d {
    pub w_off: usize,
    pub b_off: usize,
    pub k: usize,
    pub cin: usize,
    pub cout: usize,
}

impl Conv3d {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        k: usize,
        cin: usize,
        cout: usize,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let fan_in = k * k * k * cin;
        let w_off = ps.alloc_uniform(&format!("{name}.w"), &[k, k, k, cin, cout], fan_in, 1.0, rng);
        let b_off = ps.alloc_zeros(&format!("{name}.b"), &[cout]);
        Self {
            w_off,
            b_off,
            k,
            cin,
            cout,
        }
    }

    pub fn forward(
        &self,
        ps: &[f32],
        x: &Array4<f32>,
        active: Option<&Array3<bool>>,
    ) -> Array4<f32> {
        let (d, h, w, cin) = x.dim();
        debug_assert_eq!(cin, self.cin);
        let xs = x.as_slice().expect("standard layout");
        let bs = &ps[self.b_off..self.b_off + self.cout];
        let pad = (self.k / 2) as isize;
        let mut out = vec![0.0f32; d * h * w * self.cout];
        for z in 0..d {
            for y in 0..h {
                for xq in 0..w {
                    if let Some(a) = active {
                        if !a[[z, y, xq]] {
                            continue;
                        }
                    }
                    let acc = &mut out[((z * h + y) * w + xq) * self.cout..][..self.cout];
                    acc.copy_from_slice(bs);
                    for kz in 0..self.k {
                        let nz = z as isize + kz as isize - pad;
                        if nz < 0 || nz >= d as isize {
                            continue;
                        }
                        for ky in 0..self.k {
                            let ny = y as isize + ky as isize - pad;
                            if ny < 0 || ny >= h as isize {
                                continue;
                            }
                            for kx in 0..self.k {
                                let nx = xq as isize + kx as isize - pad;
                                if nx < 0 || nx >= w as isize {
                                    continue;
                                }
                                let xin = &xs
                                    [((nz as usize * h + ny as usize) * w + nx as usize) * cin..]
                                    [..cin];
                                let wt = &ps[self.w_off
                                    + ((kz * self.k + ky) * self.k + kx) * cin * self.cout..];
                                for (ci, &xv) in xin.iter().enumerate() {
                                    if xv != 0.0 {
                                        axpy(acc, xv, &wt[ci * self.cout..][..self.cout]);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Array4::from_shape_vec((d, h, w, self.cout), out).unwrap()
    }

    pub fn backward(
        &self,
        ps: &[f32],
        x: &Array4<f32>,
        gout: &Array4<f32>,
        active: Option<&Array3<bool>>,
        gp: &mut [f32],
    ) -> Array4<f32> {
        let (d, h, w, cin) = x.dim();
        let cout = self.cout;
        let xs = x.as_slice().expect("standard layout");
        let gs = gout.as_slice().expect("standard layout");
        let pad = (self.k / 2) as isize;
        let mut gx = vec![0.0f32; d * h * w * cin];
        for z in 0..d {
            for y in 0..h {
                for xq in 0..w {
                    if let Some(a) = active {
                        if !a[[z, y, xq]] {
                            continue;
                        }
                    }
                    let go = &gs[((z * h + y) * w + xq) * cout..][..cout];
                    if go.iter().all(|&g| g == 0.0) {
                        continue;
                    }
                    axpy(&mut gp[self.b_off..self.b_off + cout], 1.0, go);
                    for kz in 0..self.k {
                        let nz = z as isize + kz as isize - pad;
                        if nz < 0 || nz >= d as isize {
                            continue;
                        }
                        for ky in 0..self.k {
                            let ny = y as isize + ky as isize - pad;
                            if ny < 0 || ny >= h as isize {
                                continue;
                            }
                            for kx in 0..self.k {
                                let nx = xq as isize + kx as isize - pad;
                                if nx < 0 || nx >= w as isize {
                                    continue;
                                }
                                let in_base =
                                    ((nz as usize * h + ny as usize) * w + nx as usize) * cin;
                                let w_base = self.w_off
                                    + ((kz * self.k + ky) * self.k + kx) * cin * cout;
                                for ci in 0..cin {
                                    let xv = xs[in_base + ci];
                                    if xv != 0.0 {
                                        axpy(&mut gp[w_base + ci * cout..][..cout], xv, go);
                                    }
                                    gx[in_base + ci] += dot(&ps[w_base + ci * cout..][..cout], go);
                                }
                            }
                        }
                    }
                }
            }
        }
        Array4::from_shape_vec((d, h, w, cin), gx).unwrap()
    }
}

/// Transposed 3D convolution, kernel 2, stride 2: each input site expands
/// into a 2x2x2 output block, so every output site reads exactly one parent
/// through one kernel tap. Weights `[2, 2, 2, cin, cout]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deconv3d {
    pub w_off: usize,
    pub b_off: usize,
    pub cin: usize,
    pub cout: usize,
}

impl Deconv3d {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        cin: usize,
        cout: usize,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let w_off = ps.alloc_uniform(&format!("{name}.w"), &[2, 2, 2, cin, cout], cin, 1.0, rng);
        let b_off = ps.alloc_zeros(&format!("{name}.b"), &[cout]);
        Self {
            w_off,
            b_off,
            cin,
            cout,
        }
    }

    pub fn forward(
        &self,
        ps: &[f32],
        x: &Array4<f32>,
        active_out: Option<&Array3<bool>>,
    ) -> Array4<f32> {
        let (d, h, w, cin) = x.dim();
        debug_assert_eq!(cin, self.cin);
        let (od, oh, ow) = (d * 2, h * 2, w * 2);
        let xs = x.as_slice().expect("standard layout");
        let bs = &ps[self.b_off..self.b_off + self.cout];
        let mut out = vec![0.0f32; od * oh * ow * self.cout];
        for z in 0..od {
            for y in 0..oh {
                for xq in 0..ow {
                    if let Some(a) = active_out {
                        if !a[[z, y, xq]] {
                            continue;
                        }
                    }
                    let tap = ((z & 1) * 2 + (y & 1)) * 2 + (xq & 1);
                    let parent = (((z / 2) * h + y / 2) * w + xq / 2) * cin;
                    let xin = &xs[parent..][..cin];
                    let acc = &mut out[((z * oh + y) * ow + xq) * self.cout..][..self.cout];
                    acc.copy_from_slice(bs);
                    let wt = &ps[self.w_off + tap * cin * self.cout..];
                    for (ci, &xv) in xin.iter().enumerate() {
                        if xv != 0.0 {
                            axpy(acc, xv, &wt[ci * self.cout..][..self.cout]);
                        }
                    }
                }
            }
        }
        Array4::from_shape_vec((od, oh, ow, self.cout), out).unwrap()
    }

    pub fn backward(
        &self,
        ps: &[f32],
        x: &Array4<f32>,
        gout: &Array4<f32>,
        active_out: Option<&Array3<bool>>,
        gp: &mut [f32],
    ) -> Array4<f32> {
        let (d, h, w, cin) = x.dim();
        let cout = self.cout;
        let (od, oh, ow, _) = gout.dim();
        let xs = x.as_slice().expect("standard layout");
        let gs = gout.as_slice().expect("standard layout");
        let mut gx = vec![0.0f32; d * h * w * cin];
        for z in 0..od {
            for y in 0..oh {
                for xq in 0..ow {
                    if let Some(a) = active_out {
                        if !a[[z, y, xq]] {
                            continue;
                        }
                    }
                    let go = &gs[((z * oh + y) * ow + xq) * cout..][..cout];
                    if go.iter().all(|&g| g == 0.0) {
                        continue;
                    }
                    axpy(&mut gp[self.b_off..self.b_off + cout], 1.0, go);
                    let tap = ((z & 1) * 2 + (y & 1)) * 2 + (xq & 1);
                    let parent = (((z / 2) * h + y / 2) * w + xq / 2) * cin;
                    let w_base = self.w_off + tap * cin * cout;
                    for ci in 0..cin {
                        let xv = xs[parent + ci];
                        if xv != 0.0 {
                            axpy(&mut gp[w_base + ci * cout..][..cout], xv, go);
                        }
                        gx[parent + ci] += dot(&ps[w_base + ci * cout..][..cout], go);
                    }
                }
            }
        }
        Array4::from_shape_vec((d, h, w, cin), gx).unwrap()
    }
}

/// Fully connected layer, weights `[cin, cout]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub w_off: usize,
    pub b_off: usize,
    pub cin: usize,
    pub cout: usize,
}

impl Linear {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        cin: usize,
        cout: usize,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let w_off = ps.alloc_uniform(&format!("{name}.w"), &[cin, cout], cin, 1.0, rng);
        let b_off = ps.alloc_zeros(&format!("{name}.b"), &[cout]);
        Self {
            w_off,
            b_off,
            cin,
            cout,
        }
    }

    pub fn forward(&self, ps: &[f32], x: &[f32]) -> Vec<f32> {
        debug_assert_eq!(x.len(), self.cin);
        let mut out = ps[self.b_off..self.b_off + self.cout].to_vec();
        for (ci, &xv) in x.iter().enumerate() {
            if xv != 0.0 {
                axpy(
                    &mut out,
                    xv,
                    &ps[self.w_off + ci * self.cout..][..self.cout],
                );
            }
        }
        out
    }

    pub fn backward(&self, ps: &[f32], x: &[f32], gout: &[f32], gp: &mut [f32]) -> Vec<f32> {
        axpy(&mut gp[self.b_off..self.b_off + self.cout], 1.0, gout);
        let mut gx = vec![0.0f32; self.cin];
        for ci in 0..self.cin {
            let w_row = self.w_off + ci * self.cout;
            if x[ci] != 0.0 {
                axpy(&mut gp[w_row..][..self.cout], x[ci], gout);
            }
            gx[ci] = dot(&ps[w_row..][..self.cout], gout);
        }
        gx
    }
}

//! Training loss and evaluation metrics.
//!
//! The hierarchical loss is a weighted sum of per-level negative soft IoU.
//! Evaluation uses hard IoU at threshold 0.5 and symmetric Chamfer distance
//! between occupied-voxel centers in meters. All reductions run in f64 so
//! gradient checks against central finite differences hold tightly.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoolGrid, BoolPyramid, GridSpec, ProbGrid, ProbPyramid};
use crate::net::MacReport;

/// Denominator guard keeping empty-vs-empty soft IoU differentiable.
pub const SOFT_IOU_EPS: f64 = 1e-6;

/// Per-level loss weights, coarse to fine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights(pub Vec<f64>);

impl LossWeights {
    /// Defaults: the four-level vector [0.30, 0.27, 0.23, 0.20]; other level
    /// counts get a linearly descending profile over the same range,
    /// normalized to sum 1.
    pub fn default_for(l_level: usize) -> Self {
        if l_level == 4 {
            return Self(vec![0.30, 0.27, 0.23, 0.20]);
        }
        if l_level == 1 {
            return Self(vec![1.0]);
        }
        let raw: Vec<f64> = (0..l_level)
            .map(|i| 0.30 - 0.10 * i as f64 / (l_level - 1) as f64)
            .collect();
        let sum: f64 = raw.iter().sum();
        Self(raw.into_iter().map(|w| w / sum).collect())
    }

    pub fn validate(&self, l_level: usize) -> Result<()> {
        if self.0.len() != l_level {
            return Err(Error::LevelMismatch {
                expected: l_level,
                got: self.0.len(),
            });
        }
        if self.0.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidArg(format!("bad loss weights {:?}", self.0)));
        }
        Ok(())
    }
}

fn check_same_shape<T, U>(a: &Array3<T>, b: &Array3<U>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", a.dim()),
            got: format!("{:?}", b.dim()),
        });
    }
    Ok(())
}

/// Differentiable negative-IoU loss:
/// `1 - sum(p*y) / (sum(p) + sum(y) - sum(p*y) + eps)`.
pub fn soft_iou_loss(pred: &ProbGrid, gt: &BoolGrid) -> Result<f64> {
    Ok(soft_iou_parts(pred, gt)?.0)
}

/// Loss plus its exact gradient w.r.t. every prediction.
pub fn soft_iou_loss_grad(pred: &ProbGrid, gt: &BoolGrid) -> Result<(f64, ProbGrid)> {
    let (loss, inter, union) = soft_iou_parts(pred, gt)?;
    let u2 = union * union;
    let grad = Array3::from_shape_fn(pred.dim(), |idx| {
        let y = if gt[idx] { 1.0f64 } else { 0.0 };
        (-(y * union - inter * (1.0 - y)) / u2) as f32
    });
    Ok((loss, grad))
}

fn soft_iou_parts(pred: &ProbGrid, gt: &BoolGrid) -> Result<(f64, f64, f64)> {
    check_same_shape(pred, gt)?;
    let mut inter = 0.0f64;
    let mut p_sum = 0.0f64;
    let mut y_sum = 0.0f64;
    for (&p, &y) in pred.iter().zip(gt.iter()) {
        let p = p as f64;
        p_sum += p;
        if y {
            y_sum += 1.0;
            inter += p;
        }
    }
    let union = p_sum + y_sum - inter + SOFT_IOU_EPS;
    Ok((1.0 - inter / union, inter, union))
}

/// Weighted sum of per-level soft IoU losses.
pub fn total_loss(pred: &ProbPyramid, gt: &BoolPyramid, w: &LossWeights) -> Result<f64> {
    if pred.num_levels() != gt.num_levels() {
        return Err(Error::LevelMismatch {
            expected: gt.num_levels(),
            got: pred.num_levels(),
        });
    }
    w.validate(pred.num_levels())?;
    let mut loss = 0.0;
    for l in 1..=pred.num_levels() {
        loss += w.0[l - 1] * soft_iou_loss(pred.level(l), gt.level(l))?;
    }
    Ok(loss)
}

/// Total loss with per-level prediction gradients.
pub fn total_loss_grad(
    pred: &ProbPyramid,
    gt: &BoolPyramid,
    w: &LossWeights,
) -> Result<(f64, Vec<ProbGrid>)> {
    if pred.num_levels() != gt.num_levels() {
        return Err(Error::LevelMismatch {
            expected: gt.num_levels(),
            got: pred.num_levels(),
        });
    }
    w.validate(pred.num_levels())?;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(pred.num_levels());
    for l in 1..=pred.num_levels() {
        let (ll, mut g) = soft_iou_loss_grad(pred.level(l), gt.level(l))?;
        loss += w.0[l - 1] * ll;
        let wl = w.0[l - 1] as f32;
        g.mapv_inplace(|v| v * wl);
        grads.push(g);
    }
    Ok((loss, grads))
}

/// Hard intersection-over-union; defined as 1 when both grids are empty.
pub fn eval_iou(pred: &BoolGrid, gt: &BoolGrid) -> Result<f64> {
    check_same_shape(pred, gt)?;
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&p, &y) in pred.iter().zip(gt.iter()) {
        if p || y {
            union += 1;
            if p && y {
                inter += 1;
            }
        }
    }
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}

fn occupied_centers(grid: &BoolGrid, cell: [f64; 3], origin: [f64; 3]) -> Vec<([f64; 3], [i64; 3])> {
    let (nz, ny, nx) = grid.dim();
    let mut out = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if grid[[z, y, x]] {
                    out.push((
                        [
                            origin[0] + (x as f64 + 0.5) * cell[0],
                            origin[1] + (y as f64 + 0.5) * cell[1],
                            origin[2] + (z as f64 + 0.5) * cell[2],
                        ],
                        [x as i64, y as i64, z as i64],
                    ));
                }
            }
        }
    }
    out
}

fn sq_dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

/// Mean nearest-neighbor distance from every point of `from` into the
/// occupancy index `into`, exact, via expanding Chebyshev rings over the
/// voxel lattice.
fn directed_mean_nn(
    from: &[([f64; 3], [i64; 3])],
    into_grid: &BoolGrid,
    into: &[([f64; 3], [i64; 3])],
    cell: [f64; 3],
    origin: [f64; 3],
) -> f64 {
    let (nz, ny, nx) = into_grid.dim();
    let min_edge = cell[0].min(cell[1]).min(cell[2]);
    let max_ring = nx.max(ny).max(nz) as i64;
    let mut total = 0.0f64;
    for &(p, idx) in from {
        let mut best = f64::INFINITY;
        'rings: for k in 0..=max_ring {
            // No closer candidate can live in ring k or beyond once the ring
            // floor distance passes the best hit.
            if best.is_finite() {
                let ring_floor = (k - 1).max(0) as f64 * min_edge;
                if ring_floor * ring_floor > best {
                    break 'rings;
                }
            }
            for dz in -k..=k {
                let z = idx[2] + dz;
                if z < 0 || z >= nz as i64 {
                    continue;
                }
                for dy in -k..=k {
                    let y = idx[1] + dy;
                    if y < 0 || y >= ny as i64 {
                        continue;
                    }
                    let on_face = dz.abs() == k || dy.abs() == k;
                    let mut visit = |x: i64| {
                        if x < 0 || x >= nx as i64 {
                            return;
                        }
                        if into_grid[[z as usize, y as usize, x as usize]] {
                            let q = [
                                origin[0] + (x as f64 + 0.5) * cell[0],
                                origin[1] + (y as f64 + 0.5) * cell[1],
                                origin[2] + (z as f64 + 0.5) * cell[2],
                            ];
                            best = best.min(sq_dist(p, q));
                        }
                    };
                    if on_face {
                        for dx in -k..=k {
                            visit(idx[0] + dx);
                        }
                    } else {
                        visit(idx[0] - k);
                        if k > 0 {
                            visit(idx[0] + k);
                        }
                    }
                }
            }
        }
        debug_assert!(best.is_finite() || into.is_empty());
        total += best.sqrt();
    }
    total / from.len() as f64
}

/// Symmetric Chamfer distance between occupied-voxel center sets, meters:
/// the sum of the two directional mean nearest-neighbor distances. Both
/// grids empty gives 0; exactly one empty gives the ROI diagonal penalty.
pub fn chamfer_distance(pred: &BoolGrid, gt: &BoolGrid, spec: &GridSpec) -> Result<f64> {
    check_same_shape(pred, gt)?;
    let (nz, ny, nx) = pred.dim();
    let (sx, sy, sz) = spec.extents_m();
    let cell = [sx / nx as f64, sy / ny as f64, sz / nz as f64];
    let origin = [-sx * 0.5, 0.0, 0.0];
    let a = occupied_centers(pred, cell, origin);
    let b = occupied_centers(gt, cell, origin);
    match (a.is_empty(), b.is_empty()) {
        (true, true) => Ok(0.0),
        (true, false) | (false, true) => Ok(spec.diagonal_m()),
        (false, false) => Ok(directed_mean_nn(&a, gt, &b, cell, origin)
            + directed_mean_nn(&b, pred, &a, cell, origin)),
    }
}

/// Per-level evaluation numbers in the shape of the report interface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub level: usize,
    pub iou: f64,
    pub cd: f64,
}

/// One evaluation run: per-level metrics plus compute cost.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_level: Vec<LevelMetrics>,
    pub macs: MacReport,
    pub parameters: u64,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// CSV aggregate: one row per level.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,iou,cd,macs_total,parameters\n");
        for lm in &self.per_level {
            out.push_str(&format!(
                "{},{:.6},{:.6},{},{}\n",
                lm.level, lm.iou, lm.cd, self.macs.total, self.parameters
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_pyramid, GridSpec};
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn spec(n: usize) -> GridSpec {
        GridSpec::cubic(0.5, n).unwrap()
    }

    #[test]
    fn soft_iou_trivial_cases() {
        let mut gt = Array3::from_elem((2, 2, 2), false);
        gt[[0, 0, 0]] = true;
        gt[[1, 1, 1]] = true;
        let pred_same = gt.mapv(|b| if b { 1.0f32 } else { 0.0 });
        assert!(soft_iou_loss(&pred_same, &gt).unwrap() < 1e-5);

        let mut disjoint = Array3::from_elem((2, 2, 2), 0.0f32);
        disjoint[[0, 1, 0]] = 1.0;
        assert!((soft_iou_loss(&disjoint, &gt).unwrap() - 1.0).abs() < 1e-6);

        // Half of the support: intersection 1, union 2 -> loss 0.5.
        let mut half = Array3::from_elem((2, 2, 2), 0.0f32);
        half[[0, 0, 0]] = 1.0;
        assert!((soft_iou_loss(&half, &gt).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn soft_iou_range_and_complement() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..50 {
            let gt = Array3::from_shape_fn((4, 4, 4), |_| rng.gen_bool(0.3));
            let pred_bin = Array3::from_shape_fn((4, 4, 4), |_| rng.gen_bool(0.3));
            let pred = pred_bin.mapv(|b| if b { 1.0f32 } else { 0.0 });
            let loss = soft_iou_loss(&pred, &gt).unwrap();
            assert!((0.0..=1.0).contains(&loss));
            let iou = eval_iou(&pred_bin, &gt).unwrap();
            assert!(
                (loss - (1.0 - iou)).abs() < 1e-4,
                "complement violated: {loss} vs {}",
                1.0 - iou
            );
        }
    }

    #[test]
    fn total_loss_paper_weights() {
        let w = LossWeights::default_for(4);
        assert_eq!(w.0, vec![0.30, 0.27, 0.23, 0.20]);
        // Per-level losses of 1 combine to exactly 1.00.
        assert!((w.0.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let s = spec(16);
        // gt pyramid with some content; pred = perfect -> 0 loss.
        let mut finest = s.empty_grid();
        finest[[3, 3, 3]] = true;
        let gt = build_pyramid(&finest, 3, s).unwrap();
        let pred_levels: Vec<Array3<f32>> = gt
            .levels()
            .iter()
            .map(|g| g.mapv(|b| if b { 1.0f32 } else { 0.0 }))
            .collect();
        let pred = crate::grid::OccupancyPyramid::from_levels(pred_levels, s).unwrap();
        let w3 = LossWeights::default_for(3);
        assert!(total_loss(&pred, &gt, &w3).unwrap() < 1e-4);
        assert!((w3.0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn total_loss_gradient_matches_finite_differences() {
        let s = spec(8);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let finest = Array3::from_shape_fn((8, 8, 8), |_| rng.gen_bool(0.25));
        let gt = build_pyramid(&finest, 2, s).unwrap();
        let pred_levels: Vec<Array3<f32>> = (0..2)
            .map(|l| {
                let r = 4 << l;
                Array3::from_shape_fn((r, r, r), |_| rng.gen_range(0.05f32..0.95))
            })
            .collect();
        let pred = crate::grid::OccupancyPyramid::from_levels(pred_levels.clone(), s).unwrap();
        let w = LossWeights::default_for(2);
        let (_, grads) = total_loss_grad(&pred, &gt, &w).unwrap();

        // f64 shadow of the loss for tight finite differences.
        let loss_f64 = |levels: &[Array3<f64>]| -> f64 {
            let mut total = 0.0;
            for (l, g) in levels.iter().enumerate() {
                let gt_l = gt.level(l + 1);
                let mut inter = 0.0;
                let mut ps = 0.0;
                let mut ys = 0.0;
                for (&p, &y) in g.iter().zip(gt_l.iter()) {
                    ps += p;
                    if y {
                        ys += 1.0;
                        inter += p;
                    }
                }
                total += w.0[l] * (1.0 - inter / (ps + ys - inter + SOFT_IOU_EPS));
            }
            total
        };
        let levels64: Vec<Array3<f64>> = pred_levels.iter().map(|g| g.mapv(|v| v as f64)).collect();
        let h = 1e-6;
        let mut rng2 = ChaCha12Rng::seed_from_u64(9);
        for l in 0..2 {
            for _ in 0..20 {
                let r = 4 << l;
                let idx = (
                    rng2.gen_range(0..r),
                    rng2.gen_range(0..r),
                    rng2.gen_range(0..r),
                );
                let mut up = levels64.clone();
                up[l][idx] += h;
                let mut dn = levels64.clone();
                dn[l][idx] -= h;
                let fd = (loss_f64(&up) - loss_f64(&dn)) / (2.0 * h);
                let an = grads[l][idx] as f64;
                let rel = (an - fd).abs() / fd.abs().max(an.abs()).max(1e-9);
                assert!(rel <= 1e-4, "level {l} {idx:?}: analytic {an}, fd {fd}, rel {rel}");
            }
        }
    }

    #[test]
    fn eval_iou_cases() {
        let mut a = Array3::from_elem((2, 2, 2), false);
        let b = a.clone();
        assert_eq!(eval_iou(&a, &b).unwrap(), 1.0);
        a[[0, 0, 0]] = true;
        a[[0, 0, 1]] = true;
        let mut c = Array3::from_elem((2, 2, 2), false);
        c[[0, 0, 1]] = true;
        c[[1, 1, 1]] = true;
        // 1 shared of 3 in the union.
        assert!((eval_iou(&a, &c).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(eval_iou(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn chamfer_hand_cases() {
        let s = spec(8);
        let mut a = s.empty_grid();
        a[[0, 0, 0]] = true;
        assert_eq!(chamfer_distance(&a, &a, &s).unwrap(), 0.0);

        // Two single voxels one cell apart on x: 0.5 + 0.5 = 1.0.
        let mut b = s.empty_grid();
        b[[0, 0, 1]] = true;
        assert!((chamfer_distance(&a, &b, &s).unwrap() - 1.0).abs() < 1e-12);

        // Empty-side penalty: ROI diagonal.
        let empty = s.empty_grid();
        assert_eq!(
            chamfer_distance(&a, &empty, &s).unwrap(),
            s.diagonal_m()
        );
        assert_eq!(chamfer_distance(&empty, &empty, &s).unwrap(), 0.0);
    }

    #[test]
    fn chamfer_matches_brute_force_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for trial in 0..30 {
            let n = [4usize, 8, 16][trial % 3];
            let s = spec(n);
            let a = Array3::from_shape_fn((n, n, n), |_| rng.gen_bool(0.08));
            let b = Array3::from_shape_fn((n, n, n), |_| rng.gen_bool(0.08));
            let fast = chamfer_distance(&a, &b, &s).unwrap();
            let slow = brute_force_cd(&a, &b, &s);
            assert!(
                (fast - slow).abs() < 1e-12,
                "trial {trial}: {fast} vs {slow}"
            );
            let sym = chamfer_distance(&b, &a, &s).unwrap();
            assert!((fast - sym).abs() < 1e-12, "symmetry violated");
        }
    }

    fn brute_force_cd(a: &BoolGrid, b: &BoolGrid, s: &GridSpec) -> f64 {
        let centers = |g: &BoolGrid| -> Vec<[f64; 3]> {
            let mut v = Vec::new();
            let (nz, ny, nx) = g.dim();
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        if g[[z, y, x]] {
                            v.push([
                                (x as f64 + 0.5) * s.voxel_size_m - s.extents_m().0 * 0.5,
                                (y as f64 + 0.5) * s.voxel_size_m,
                                (z as f64 + 0.5) * s.voxel_size_m,
                            ]);
                        }
                    }
                }
            }
            v
        };
        let pa = centers(a);
        let pb = centers(b);
        match (pa.is_empty(), pb.is_empty()) {
            (true, true) => 0.0,
            (true, false) | (false, true) => s.diagonal_m(),
            _ => {
                let dir = |from: &[[f64; 3]], to: &[[f64; 3]]| -> f64 {
                    from.iter()
                        .map(|p| {
                            to.iter()
                                .map(|q| sq_dist(*p, *q))
                                .fold(f64::INFINITY, f64::min)
                                .sqrt()
                        })
                        .sum::<f64>()
                        / from.len() as f64
                };
                dir(&pa, &pb) + dir(&pb, &pa)
            }
        }
    }
}

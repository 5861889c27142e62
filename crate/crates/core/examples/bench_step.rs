//! Quick timing probe for one training step at desk scale.
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::time::Instant;
use voxocc::net::{DecodeMode, NetConfig, VoxelNet};
use voxocc::{plan_disparity_levels, CameraModel, GridSpec};

fn main() {
    let camera = CameraModel::new(160.0, 0.4, 128, 64, (64.0, 0.0)).unwrap();
    let grid = GridSpec::cubic(0.5, 32).unwrap();
    let plan = plan_disparity_levels(&camera, &grid, 2.0).unwrap();
    println!("plan levels: {}", plan.len());
    for mode in [DecodeMode::Dense, DecodeMode::SparsePred] {
        let mut cfg = NetConfig::desk(camera, grid, plan.clone(), 1);
        cfg.decoder.mode = mode;
        let net = VoxelNet::new(cfg).unwrap();
        println!("mode {:?}: params {}", mode, net.params.len());
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let l = Array2::from_shape_fn((64, 128), |_| rng.gen::<f32>());
        let r = Array2::from_shape_fn((64, 128), |_| rng.gen::<f32>());
        // warmup
        let (pyr, tape) = net.forward(&l, &r, None).unwrap();
        let t0 = Instant::now();
        let n = 6;
        for _ in 0..n {
            let _ = net.forward(&l, &r, None).unwrap();
        }
        let fwd = t0.elapsed().as_secs_f64() / n as f64;
        let grads: Vec<Option<Array3<f32>>> = (1..=pyr.num_levels())
            .map(|lv| {
                let rr = pyr.resolution(lv);
                Some(Array3::from_shape_fn((rr, rr, rr), |_| 0.1f32))
            })
            .collect();
        let t1 = Instant::now();
        for _ in 0..n {
            let _ = net.backward(&tape, &grads);
        }
        let bwd = t1.elapsed().as_secs_f64() / n as f64;
        println!(
            "  fwd {:.1} ms, bwd {:.1} ms, step(batch16) ~{:.2} s, 750 steps ~{:.1} min",
            fwd * 1e3,
            bwd * 1e3,
            (fwd + bwd) * 16.0,
            (fwd + bwd) * 16.0 * 750.0 / 60.0
        );
    }
}

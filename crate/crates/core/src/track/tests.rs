use super::*;
use crate::beamform::{BeamGrid, BfImage, Beamformer, ImageKind};
use crate::clutter::{svd_filter, ImageStack};
use crate::localize::{Detection, Method};
use ndarray::Array2;
use proptest::prelude::*;

const LAMBDA: f64 = 1540.0 / 15.625e6;

fn det(frame: usize, x: f64, z: f64) -> Detection {
    Detection { x, z, intensity: 1.0, frame_index: frame, method: Method::RadialSymmetry }
}

fn params(max_link: f64, min_len: usize) -> LinkParams {
    LinkParams { max_link_distance: max_link, max_gap: 0, min_track_length: min_len, frame_rate: 500.0 }
}

fn map_grid(nx: usize, nz: usize) -> BeamGrid {
    let p = 0.1 * LAMBDA;
    BeamGrid::new(0.5 * p, p, nx, 5e-3 + 0.5 * p, p, nz).unwrap()
}

#[test]
fn one_bubble_one_track() {
    let dets: Vec<_> = (0..10).map(|k| det(k, 1e-3, 8e-3 + k as f64 * 0.2 * LAMBDA)).collect();
    let tracks = link_detections(&dets, &params(0.5 * LAMBDA, 5)).unwrap();
    assert_eq!(tracks.len(), 1);
    assert_eq!(tracks[0].len(), 10);
    assert_eq!(tracks[0].velocities.len(), 9);
}

#[test]
fn two_bubbles_never_swap() {
    let mut dets = Vec::new();
    for k in 0..12 {
        let kf = k as f64;
        dets.push(det(k, 0.0 + 0.1 * LAMBDA * kf, 8e-3 + 0.2 * LAMBDA * kf));
        dets.push(det(k, 2.5 * LAMBDA - 0.05 * LAMBDA * kf, 8e-3 + 0.3 * LAMBDA * kf));
    }
    let tracks = link_detections(&dets, &params(0.5 * LAMBDA, 2)).unwrap();
    assert_eq!(tracks.len(), 2);
    // Exhaustive oracle: each track must keep the identity that minimizes total
    // link length over both possible assignments in every frame.
    for t in &tracks {
        let lateral_trend = t.detections.last().unwrap().x - t.detections[0].x;
        let going_right = lateral_trend > 0.0;
        for w in t.detections.windows(2) {
            assert_eq!(w[1].x > w[0].x, going_right);
        }
    }
}

#[test]
fn lone_detection_makes_no_track() {
    assert!(link_detections(&[det(0, 0.0, 1e-3)], &params(1e-4, 2)).unwrap().is_empty());
    assert!(link_detections(&[det(3, 0.0, 1e-3), det(1, 0.0, 1e-3)], &params(1e-4, 1)).is_err());
}

#[test]
fn gap_closes_tracks() {
    let dets = vec![det(0, 0.0, 1e-3), det(1, 0.0, 1e-3), det(3, 0.0, 1e-3), det(4, 0.0, 1e-3)];
    let tracks = link_detections(&dets, &params(1e-4, 1)).unwrap();
    assert_eq!(tracks.len(), 2);
    let coasting = LinkParams { max_gap: 1, ..params(1e-4, 1) };
    let tracks = link_detections(&dets, &coasting).unwrap();
    assert_eq!(tracks.len(), 1);
    assert_eq!(tracks[0].velocities[1], (0.0, 0.0));
}

#[test]
fn velocity_kinematics() {
    let dets: Vec<_> = (0..4).map(|k| det(k, 0.0, 5e-3 + 0.1e-3 * k as f64)).collect();
    for v in velocities(&dets, 500.0).unwrap() {
        assert!((v.0.hypot(v.1) - 50e-3).abs() < 1e-12);
    }
    let still = vec![det(0, 1e-3, 5e-3), det(1, 1e-3, 5e-3)];
    assert_eq!(velocities(&still, 500.0).unwrap(), vec![(0.0, 0.0)]);
    assert!(velocities(&still[..1], 500.0).is_err());
}

proptest! {
    #[test]
    fn linking_is_permutation_invariant(seed in 0u64..1000, shuffle in 0u64..1000) {
        use rand::{seq::SliceRandom, Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut frames: Vec<Vec<Detection>> = Vec::new();
        for k in 0..8 {
            let n = rng.gen_range(0..6);
            frames.push((0..n).map(|_| det(k, rng.gen_range(0.0..1e-3), rng.gen_range(5e-3..6e-3))).collect());
        }
        let flat: Vec<Detection> = frames.iter().flatten().copied().collect();
        let mut srng = rand_chacha::ChaCha8Rng::seed_from_u64(shuffle);
        let shuffled: Vec<Detection> = frames
            .into_iter()
            .flat_map(|mut f| { f.shuffle(&mut srng); f })
            .collect();
        let p = params(3e-4, 2);
        prop_assert_eq!(link_detections(&flat, &p).unwrap(), link_detections(&shuffled, &p).unwrap());
    }
}

fn straight_track(id: usize, x: f64, z0: f64, steps: usize, step: f64, speed_scale: f64) -> Track {
    let detections: Vec<_> = (0..=steps).map(|k| det(k, x, z0 + k as f64 * step)).collect();
    let velocities = velocities(&detections, 500.0 * speed_scale).unwrap();
    Track { id, detections, velocities }
}

#[test]
fn vertical_track_draws_contiguous_ridge() {
    let grid = map_grid(20, 140);
    // 10λ long, centered on column 7.
    let x = grid.x(7);
    let track = straight_track(0, x, grid.z(5), 20, 0.5 * LAMBDA, 1.0);
    let map = render_density(&[track.clone()], &grid).unwrap();
    let rows: Vec<usize> = (0..grid.nz).filter(|&r| map.values.row(r).sum() > 0.0).collect();
    assert_eq!(rows.first(), Some(&5));
    assert!(rows.windows(2).all(|w| w[1] == w[0] + 1));
    assert!(rows.len() >= 100);
    for c in 0..grid.nx {
        if c != 7 {
            assert_eq!(map.values.column(c).sum(), 0.0);
        }
    }
    // Counting oracle: total increments equal resampled points inside the grid.
    let samples = resample_track(&track, grid.dx);
    assert_eq!(map.total() as usize + map.out_of_grid, samples.len());
    assert_eq!(map.out_of_grid, 0);
}

#[test]
fn out_of_grid_points_are_counted() {
    let grid = map_grid(10, 10);
    let track = straight_track(0, grid.x(3), grid.z(2), 10, 0.5 * LAMBDA, 1.0);
    let map = render_density(&[track.clone()], &grid).unwrap();
    assert!(map.out_of_grid > 0);
    assert_eq!(map.total() as usize + map.out_of_grid, resample_track(&track, grid.dx).len());
    let empty = render_density(&[], &grid).unwrap();
    assert_eq!(empty.total(), 0.0);
}

#[test]
fn velocity_map_normalization() {
    let grid = map_grid(30, 120);
    let slow = straight_track(0, grid.x(5), grid.z(10), 10, 0.4 * LAMBDA, 1.0);
    let fast = straight_track(1, grid.x(20), grid.z(10), 10, 0.4 * LAMBDA, 2.0);
    let single = render_velocity(&[slow.clone()], &grid).unwrap();
    assert!(single.values.iter().all(|&v| v == 0.0 || (v - 1.0).abs() < 1e-12));
    let both = render_velocity(&[slow, fast], &grid).unwrap();
    let left: Vec<f64> = both.values.column(5).iter().copied().filter(|&v| v > 0.0).collect();
    let right: Vec<f64> = both.values.column(20).iter().copied().filter(|&v| v > 0.0).collect();
    assert!(left.iter().all(|v| (v - 0.5).abs() < 1e-12));
    assert!(right.iter().all(|v| (v - 1.0).abs() < 1e-12));
    assert_eq!(render_velocity(&[], &grid).unwrap().values.sum(), 0.0);
}

#[test]
fn velocity_map_matches_brute_force() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let grid = map_grid(12, 12);
    let tracks: Vec<Track> = (0..5)
        .map(|id| {
            let detections: Vec<_> = (0..4)
                .map(|k| det(k, rng.gen_range(0.0..1.2e-4), 5e-3 + rng.gen_range(0.0..1.2e-4)))
                .collect();
            let velocities = velocities(&detections, 500.0).unwrap();
            Track { id, detections, velocities }
        })
        .collect();
    let map = render_velocity(&tracks, &grid).unwrap();
    // Oracle: scan every bin and average the speeds of the samples inside it.
    let samples: Vec<(f64, f64, f64)> = tracks.iter().flat_map(|t| resample_track(t, grid.dx)).collect();
    let mut expected = Array2::<f64>::zeros(grid.shape());
    for r in 0..grid.nz {
        for c in 0..grid.nx {
            let (lo_x, lo_z) = (grid.x(c) - grid.dx / 2.0, grid.z(r) - grid.dz / 2.0);
            let inside: Vec<f64> = samples
                .iter()
                .filter(|s| s.0 >= lo_x && s.0 < lo_x + grid.dx && s.1 >= lo_z && s.1 < lo_z + grid.dz)
                .map(|s| s.2)
                .collect();
            if !inside.is_empty() {
                expected[[r, c]] = inside.iter().sum::<f64>() / inside.len() as f64;
            }
        }
    }
    let max = expected.iter().fold(0.0_f64, |m, &v| m.max(v));
    expected.mapv_inplace(|v| v / max);
    for (a, b) in map.values.iter().zip(expected.iter()) {
        assert!((a - b).abs() < 1e-9);
    }
    assert_eq!(map.values.iter().fold(0.0_f64, |m, &v| m.max(v)), 1.0);
}

fn stack(frames: Vec<Array2<f64>>) -> ImageStack {
    let (nz, nx) = frames[0].dim();
    let grid = BeamGrid::new(0.0, 1.0, nx, 1.0, 1.0, nz).unwrap();
    ImageStack::new(
        frames
            .into_iter()
            .map(|v| BfImage::new(v, grid, ImageKind::Envelope, Beamformer::Das).unwrap())
            .collect(),
    )
    .unwrap()
}

#[test]
fn power_doppler_cases() {
    let base = Array2::from_shape_fn((4, 5), |(r, c)| 1.0 + (r * 5 + c) as f64 * 0.1);
    let s = stack(vec![base.clone(); 6]);
    let input_power = power_doppler(&s).unwrap().power.iter().fold(0.0_f64, |m, &v| m.max(v));
    let filtered = svd_filter(&s, 1, 0).unwrap();
    let pd = power_doppler(&filtered).unwrap();
    let max = pd.power.iter().fold(0.0_f64, |m, &v| m.max(v));
    assert!(max <= 1e-6 * input_power);

    let frames: Vec<Array2<f64>> = (0..6)
        .map(|k| {
            let mut f = Array2::zeros((4, 5));
            f[[2, 3]] = if k % 2 == 0 { 1.0 } else { -1.0 };
            f
        })
        .collect();
    let pd = power_doppler(&stack(frames.clone())).unwrap();
    assert_eq!(pd.db[[2, 3]], 0.0);
    assert!(pd.power.iter().enumerate().all(|(i, &p)| i == 13 || p == 0.0));
    // Direct summation oracle.
    for (i, &p) in pd.power.iter().enumerate() {
        let naive: f64 = frames.iter().map(|f| f.iter().nth(i).unwrap().powi(2)).sum::<f64>() / 6.0;
        assert_eq!(p, naive);
    }
}

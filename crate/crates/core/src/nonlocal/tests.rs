use super::*;
use crate::model::AcquisitionGeometry;
use crate::random::Stream;
use approx::assert_relative_eq;
use ndarray::Array3;
use num_complex::Complex64;

fn geometry(n: usize) -> AcquisitionGeometry {
    let baselines = (0..n).map(|i| -60.0 + 130.0 * i as f64 / n as f64).collect();
    AcquisitionGeometry::new(0.031, 704_000.0, 0.7, baselines).unwrap()
}

fn random_stack(n: usize, rows: usize, cols: usize, seed: u64) -> InsarStack {
    let mut s = Stream::new(seed, 0);
    let images = Array3::from_shape_fn((n, rows, cols), |_| s.complex_normal(1.0));
    InsarStack::new(geometry(n), images, 0).unwrap()
}

/// Two half-planes with different phase ramps across acquisitions plus noise.
fn two_region_stack(rows: usize, cols: usize, snr: f64, seed: u64) -> InsarStack {
    let n = 6;
    let mut s = Stream::new(seed, 1);
    let images = Array3::from_shape_fn((n, rows, cols), |(k, _, c)| {
        let slope = if c < cols / 2 { 0.3 } else { 1.9 };
        Complex64::from_polar(1.0, slope * k as f64) + s.complex_normal(1.0 / snr)
    });
    InsarStack::new(geometry(n), images, 0).unwrap()
}

fn small_params() -> NlParams {
    NlParams {
        patch_radius: 1,
        search_radius: 3,
        h: 4.0,
    }
}

#[test]
fn params_validation() {
    assert!(NlParams::default().validate().is_ok());
    assert!(NlParams { patch_radius: 0, ..Default::default() }.validate().is_err());
    assert!(NlParams { search_radius: 2, ..Default::default() }.validate().is_err());
    assert!(NlParams { h: 0.0, ..Default::default() }.validate().is_err());
}

#[test]
fn tiles_partition_image() {
    let p = NlParams::default();
    let single = partition_tiles(40, 30, &p, 64).unwrap();
    assert_eq!(single.len(), 1);
    assert_eq!(single[0].core_rows, single[0].halo_rows);
    assert_eq!(single[0].core_cols, single[0].halo_cols);

    let tiles = partition_tiles(100, 100, &p, 32).unwrap();
    assert_eq!(tiles.len(), 16);
    let mut hits = vec![0u8; 100 * 100];
    for t in &tiles {
        for r in t.core_rows.clone() {
            for c in t.core_cols.clone() {
                hits[r * 100 + c] += 1;
            }
        }
        assert!(t.halo_rows.start <= t.core_rows.start && t.halo_rows.end >= t.core_rows.end);
        assert_eq!(t.halo_rows.start, t.core_rows.start.saturating_sub(p.halo()));
    }
    assert!(hits.iter().all(|&h| h == 1));
    assert!(partition_tiles(10, 10, &p, 0).is_err());
}

#[test]
fn constant_image_is_unchanged() {
    let n = 4;
    let images = Array3::from_shape_fn((n, 12, 15), |(k, _, _)| Complex64::from_polar(1.0, 0.4 * k as f64));
    let stack = InsarStack::new(geometry(n), images, 0).unwrap();
    let out = filter_stack(&stack, &small_params()).unwrap();
    assert_eq!(out.filtered.images, stack.images);
    // every candidate is equally similar in the interior
    assert_relative_eq!(out.wmle.enl[[6, 7]], 49.0, max_relative = 1e-9);
}

#[test]
fn zero_stack_is_degenerate() {
    let images = Array3::zeros((3, 6, 5));
    let stack = InsarStack::new(geometry(3), images, 0).unwrap();
    let out = filter_stack(&stack, &small_params()).unwrap();
    assert_eq!(out.filtered.images, stack.images);
    assert!(out.wmle.enl.iter().all(|&e| e == 1.0));
}

#[test]
fn kernel_matches_direct_weights() {
    let stack = two_region_stack(14, 16, 2.0, 5);
    let params = small_params();
    let out = filter_stack(&stack, &params).unwrap();
    let sr = params.search_radius as isize;
    for &(row, col) in &[(0usize, 0usize), (7, 8), (13, 3), (5, 15), (2, 7)] {
        let w = pixel_weights(&stack, &params, row, col).unwrap();
        let mut weights = Vec::new();
        let mut positions = Vec::new();
        for ((i, j), &wt) in w.indexed_iter() {
            if wt > 0.0 {
                weights.push(wt);
                positions.push(((row as isize + i as isize - sr) as usize, (col as isize + j as isize - sr) as usize));
            }
        }
        let total: f64 = weights.iter().sum();
        for k in 0..stack.acquisitions() {
            let mean: Complex64 = weights
                .iter()
                .zip(&positions)
                .map(|(&wt, &(r, c))| stack.images[[k, r, c]] * wt)
                .sum::<Complex64>()
                / total;
            assert!((mean - out.filtered.images[[k, row, col]]).norm() < 1e-10);
        }
        assert_relative_eq!(out.wmle.enl[[row, col]], equivalent_looks(&weights).unwrap(), max_relative = 1e-9);
        let g1: Vec<Complex64> = positions.iter().map(|&(r, c)| stack.images[[0, r, c]]).collect();
        let g2: Vec<Complex64> = positions.iter().map(|&(r, c)| stack.images[[3, r, c]]).collect();
        let est = wmle(&weights, &g1, &g2).unwrap();
        assert!((est.psi - out.wmle.psi[[2, row, col]]).abs() < 1e-9);
        assert!((est.mu - out.wmle.mu[[2, row, col]]).abs() < 1e-9);
        assert_relative_eq!(est.sigma2, out.wmle.sigma2[[2, row, col]], max_relative = 1e-9);
    }
}

#[test]
fn weights_are_symmetric() {
    let mut s = Stream::new(4, 0);
    let mut sample = || PatchSample {
        g1: s.complex_normal(1.0),
        g2: s.complex_normal(1.0),
        pilot: PairParams {
            psi: s.uniform() * 6.0 - 3.0,
            mu: s.uniform() * 0.9,
            sigma2: 0.2 + s.uniform(),
        },
    };
    let a: Vec<PatchSample> = (0..9).map(|_| sample()).collect();
    let b: Vec<PatchSample> = (0..9).map(|_| sample()).collect();
    assert_eq!(patch_log_weight(&a, &b, 3.0).unwrap(), patch_log_weight(&b, &a, 3.0).unwrap());
    assert!(patch_log_weight(&a, &b[..3], 3.0).is_err());
    let empty: Vec<PatchSample> = Vec::new();
    assert_eq!(patch_log_weight(&empty, &empty, 1.0).unwrap(), 0.0);
}

#[test]
fn tile_and_thread_invariance() {
    let stack = two_region_stack(23, 19, 1.0, 9);
    let params = small_params();
    let whole = filter_stack(&stack, &params).unwrap();
    for &tile in &[7usize, 5, 1] {
        for &threads in &[1usize, 3] {
            let tiled = filter_stack_tiled(&stack, &params, tile, Some(threads)).unwrap();
            assert_eq!(tiled, whole, "tile {tile} threads {threads}");
        }
    }
}

#[test]
fn similar_region_gets_larger_weights() {
    let stack = two_region_stack(20, 20, 4.0, 3);
    let params = NlParams { patch_radius: 1, search_radius: 4, h: 4.0 };
    let w = pixel_weights(&stack, &params, 10, 5).unwrap();
    let sr = params.search_radius;
    // the halves split at column 10; from (10, 8) a shift of +4 crosses over
    let w2 = pixel_weights(&stack, &params, 10, 8).unwrap();
    let same: f64 = (0..=2 * sr).map(|i| w[[i, sr - 2]]).sum();
    let cross: f64 = (0..=2 * sr).map(|i| w2[[i, sr + 4]]).sum();
    let inside: f64 = (0..=2 * sr).map(|i| w2[[i, sr - 4]]).sum();
    assert!(same > 0.0);
    assert!(cross < 1e-3 * inside, "cross {cross} inside {inside}");
    let out = filter_stack(&stack, &params).unwrap();
    assert!(out.wmle.enl[[10, 9]] < out.wmle.enl[[10, 4]]);
}

#[test]
fn field_invariants() {
    let stack = random_stack(4, 10, 9, 2);
    let out = filter_stack(&stack, &small_params()).unwrap();
    let f = &out.wmle;
    assert!(f.mu.iter().all(|&m| (0.0..=1.0).contains(&m)));
    assert!(f.sigma2.iter().all(|&v| v >= 0.0));
    assert!(f.psi.iter().all(|&p| p > -std::f64::consts::PI && p <= std::f64::consts::PI));
    assert!(f.enl.iter().all(|&e| e >= 1.0 - 1e-12 && e <= 49.0 + 1e-9));
}

use ndarray::Array2;
use num_complex::Complex64;
use tomosar_core::model::{build_steering_matrix, rayleigh_resolution, AcquisitionGeometry, ElevationGrid};
use tomosar_core::simulate::{baseline_distribution, simulate_stack};
use tomosar_core::slimmer::{Inverter, PipelineOptions};

fn geometry() -> AcquisitionGeometry {
    let baselines = baseline_distribution(29, 42, 100.0).unwrap();
    AcquisitionGeometry::new(0.031, 704_000.0, 39.36f64.to_radians(), baselines).unwrap()
}

fn inverter(geom: &AcquisitionGeometry) -> Inverter {
    let grid = ElevationGrid::for_geometry(geom, 4).unwrap();
    Inverter::new(build_steering_matrix(geom, &grid).unwrap(), PipelineOptions::default()).unwrap()
}

#[test]
fn noiseless_layover_pair_is_recovered_exactly() {
    let geom = geometry();
    let inv = inverter(&geom);
    let steering = inv.steering();
    let rho = rayleigh_resolution(&geom).unwrap();
    let low = 150;
    let high = low + (1.5 * rho / steering.grid().spacing()).round() as usize;
    let (a_low, a_high) = (Complex64::new(1.2, -0.4), Complex64::from_polar(0.8, 2.0));
    let g: Vec<Complex64> = steering
        .column(low)
        .iter()
        .zip(steering.column(high))
        .map(|(&x, &y)| a_low * x + a_high * y)
        .collect();

    let set = inv.invert_pixel(&g, 0).unwrap();
    assert_eq!(set.order(), 2);
    let (bottom, top) = (set.bottom().unwrap(), set.top().unwrap());
    assert_eq!((bottom.grid_index, top.grid_index), (low, high));
    assert_eq!(bottom.elevation, steering.grid().samples()[low]);
    assert!((bottom.amplitude - a_low).norm() < 1e-8);
    assert!((top.amplitude - a_high).norm() < 1e-8);
}

#[test]
fn masked_inversion_matches_full_image_on_the_mask() {
    let geom = geometry();
    let inv = inverter(&geom);
    let mut heights = Array2::zeros((4, 5));
    heights.slice_mut(ndarray::s![1..3, 1..4]).fill(20.0);
    let stack = simulate_stack(&heights, &geom, 5.0, 9).unwrap();

    let full = inv.invert_image(&stack).unwrap();
    assert_eq!(full.pixels, inv.invert_image(&stack).unwrap().pixels);

    let mask = heights.mapv(|h| h > 0.0);
    let part = inv.invert_masked(&stack, Some(&mask)).unwrap();
    for ((r, c), &inside) in mask.indexed_iter() {
        if inside {
            assert_eq!(part.pixel(r, c), full.pixel(r, c));
        } else {
            assert_eq!(part.pixel(r, c).order(), 0);
            assert!(part.top_height[[r, c]].is_nan());
        }
    }

    let sin = geom.incidence_angle.sin();
    for ((r, c), &h) in full.top_height.indexed_iter() {
        match full.pixel(r, c).top() {
            Some(s) => assert_eq!(h, s.elevation * sin),
            None => assert!(h.is_nan()),
        }
    }
}

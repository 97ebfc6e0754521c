//! Synthetic urban-like scenes and noisy multi-baseline stacks.
//!
//! Each pixel carries a unit-amplitude deterministic phasor per acquisition,
//! so the signal-to-noise ratio maps directly to the noise variance
//! `σ² = 10^(−snr_db/10)`.
//!
//! Noise for pixel `(row, col)` is drawn from [`Stream::new`]`(seed, row·cols + col)`,
//! N circular complex Gaussian samples in acquisition order. Serial and
//! parallel generation therefore agree bit for bit.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};
use crate::model::{height_to_phase, AcquisitionGeometry};
use crate::random::Stream;

/// Axis-aligned block of constant height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rectangle {
    pub origin_row: usize,
    pub origin_col: usize,
    pub rows: usize,
    pub cols: usize,
    /// Height above ground [m].
    pub height: f64,
}

/// Scene description: image size plus rectangles painted in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    /// Column count.
    pub width: usize,
    /// Row count.
    pub height: usize,
    #[serde(default)]
    pub rectangles: Vec<Rectangle>,
}

impl SceneSpec {
    /// The four-building scene used for the simulation study (200 rows × 170
    /// columns): 30 m (60×20 px), 25 m (30×70 px), 40 m (60×60 px) and a 50 m
    /// bracket made of two 20×50 bars joined by a 60×20 bar.
    pub fn urban_default() -> Self {
        let rect = |origin_row, origin_col, rows, cols, height| Rectangle {
            origin_row,
            origin_col,
            rows,
            cols,
            height,
        };
        Self {
            width: 170,
            height: 200,
            rectangles: vec![
                rect(20, 20, 60, 20, 30.0),
                rect(30, 80, 30, 70, 25.0),
                rect(110, 15, 60, 60, 40.0),
                rect(115, 95, 20, 50, 50.0),
                rect(155, 95, 20, 50, 50.0),
                rect(115, 145, 60, 20, 50.0),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(TomoError::InvalidParameter("scene has zero size".into()));
        }
        for (i, r) in self.rectangles.iter().enumerate() {
            if r.origin_row + r.rows > self.height || r.origin_col + r.cols > self.width {
                return Err(TomoError::OutOfRange(format!(
                    "rectangle {i} exceeds the {}×{} scene",
                    self.height, self.width
                )));
            }
            if !(r.height.is_finite() && r.height >= 0.0) {
                return Err(TomoError::InvalidParameter(format!(
                    "rectangle {i} has invalid height {}",
                    r.height
                )));
            }
        }
        Ok(())
    }
}

/// Paints the scene into a height map (rows × cols, metres). Background is
/// 0 m and later rectangles overwrite earlier ones.
pub fn generate_scene(spec: &SceneSpec) -> Result<Array2<f64>> {
    spec.validate()?;
    let mut heights = Array2::zeros((spec.height, spec.width));
    for r in &spec.rectangles {
        heights
            .slice_mut(ndarray::s![
                r.origin_row..r.origin_row + r.rows,
                r.origin_col..r.origin_col + r.cols
            ])
            .fill(r.height);
    }
    Ok(heights)
}

/// `n` baselines drawn from N(0, σ_b²) using stream 0 of `seed`; the first
/// (master) baseline is then set to 0.
pub fn baseline_distribution(n: usize, seed: u64, sigma_b: f64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(TomoError::InvalidParameter(format!(
            "need at least two baselines, got {n}"
        )));
    }
    if !(sigma_b >= 0.0 && sigma_b.is_finite()) {
        return Err(TomoError::InvalidParameter(format!(
            "baseline spread must be non-negative, got {sigma_b}"
        )));
    }
    let mut stream = Stream::new(seed, 0);
    let mut baselines: Vec<f64> = (0..n).map(|_| sigma_b * stream.normal()).collect();
    baselines[0] = 0.0;
    Ok(baselines)
}

/// N coregistered complex images with their geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct InsarStack {
    pub geometry: AcquisitionGeometry,
    /// Samples indexed `[acquisition, row, col]`.
    pub images: Array3<Complex64>,
    pub master_index: usize,
}

impl InsarStack {
    pub fn new(
        geometry: AcquisitionGeometry,
        images: Array3<Complex64>,
        master_index: usize,
    ) -> Result<Self> {
        geometry.validate()?;
        if images.shape()[0] != geometry.len() {
            return Err(TomoError::DimensionMismatch(format!(
                "{} images for {} baselines",
                images.shape()[0],
                geometry.len()
            )));
        }
        if master_index >= geometry.len() {
            return Err(TomoError::OutOfRange(format!(
                "master index {master_index} of {}",
                geometry.len()
            )));
        }
        Ok(Self {
            geometry,
            images,
            master_index,
        })
    }

    pub fn acquisitions(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn rows(&self) -> usize {
        self.images.shape()[1]
    }

    pub fn cols(&self) -> usize {
        self.images.shape()[2]
    }

    /// Measurement vector of one pixel.
    pub fn pixel(&self, row: usize, col: usize) -> Vec<Complex64> {
        (0..self.acquisitions())
            .map(|n| self.images[[n, row, col]])
            .collect()
    }
}

/// Noise variance for a signal-to-noise ratio in decibels (unit signal power).
pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Adds circular complex Gaussian noise with `E|ε|² = 10^(−snr_db/10)`.
///
/// `snr_db = +∞` leaves the stack unchanged.
pub fn add_noise(clean: &InsarStack, snr_db: f64, seed: u64) -> InsarStack {
    let mut noisy = clean.clone();
    if snr_db == f64::INFINITY {
        return noisy;
    }
    let variance = noise_variance(snr_db);
    let (n, rows, cols) = noisy.images.dim();
    let noise: Vec<Vec<Complex64>> = (0..rows * cols)
        .into_par_iter()
        .map(|pix| {
            let mut stream = Stream::new(seed, pix as u64);
            (0..n).map(|_| stream.complex_normal(variance)).collect()
        })
        .collect();
    for (pix, eps) in noise.iter().enumerate() {
        let (r, c) = (pix / cols, pix % cols);
        for (k, e) in eps.iter().enumerate() {
            noisy.images[[k, r, c]] += e;
        }
    }
    noisy
}

/// A layer of point scatterers: one per pixel at the given height.
#[derive(Debug, Clone)]
pub struct Layer {
    pub heights: Array2<f64>,
    pub amplitude: Complex64,
}

/// Simulates a stack where every pixel holds one scatterer per layer, then
/// adds noise at `snr_db` (relative to unit amplitude).
pub fn simulate_layers(
    layers: &[Layer],
    geom: &AcquisitionGeometry,
    snr_db: f64,
    seed: u64,
) -> Result<InsarStack> {
    geom.validate()?;
    let first = layers
        .first()
        .ok_or_else(|| TomoError::InvalidParameter("no layers to simulate".into()))?;
    let (rows, cols) = first.heights.dim();
    if layers.iter().any(|l| l.heights.dim() != (rows, cols)) {
        return Err(TomoError::DimensionMismatch("layer sizes differ".into()));
    }
    let n = geom.len();
    let mut images = Array3::<Complex64>::zeros((n, rows, cols));
    for layer in layers {
        for k in 0..n {
            for ((r, c), &h) in layer.heights.indexed_iter() {
                let phase = height_to_phase(geom, h, k)?;
                images[[k, r, c]] += layer.amplitude * Complex64::from_polar(1.0, phase);
            }
        }
    }
    let clean = InsarStack::new(geom.clone(), images, 0)?;
    Ok(add_noise(&clean, snr_db, seed))
}

/// Simulates a single-scatterer stack from a height map: unit-amplitude
/// phasors with the height-to-phase relation, plus noise.
pub fn simulate_stack(
    heights: &Array2<f64>,
    geom: &AcquisitionGeometry,
    snr_db: f64,
    seed: u64,
) -> Result<InsarStack> {
    simulate_layers(
        &[Layer {
            heights: heights.clone(),
            amplitude: Complex64::new(1.0, 0.0),
        }],
        geom,
        snr_db,
        seed,
    )
}

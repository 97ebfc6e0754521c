//! Multi-baseline imaging geometry and the discrete forward model.
//!
//! A pixel's stack measurement is modelled as `g = R·γ + ε`, where `γ` is the
//! reflectivity sampled on a uniform elevation grid and
//! `R[n, l] = exp(j·2π·ξ_n·s_l)` with spatial frequency `ξ_n = 2·b_n / (λ·r)`.
//!
//! All inversion happens in elevation `s`. Conversion to height
//! `h = s·sin θ_inc` is only done when producing outputs.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, ShapeBuilder};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};

/// Acquisition geometry of an interferometric stack.
///
/// Baselines are perpendicular baselines relative to the master acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionGeometry {
    /// Radar wavelength λ [m].
    pub wavelength: f64,
    /// Slant range r [m].
    pub range: f64,
    /// Incidence angle θ_inc [rad].
    pub incidence_angle: f64,
    /// Perpendicular baselines b_n [m].
    pub baselines: Vec<f64>,
}

impl AcquisitionGeometry {
    pub fn new(
        wavelength: f64,
        range: f64,
        incidence_angle: f64,
        baselines: Vec<f64>,
    ) -> Result<Self> {
        let geom = Self {
            wavelength,
            range,
            incidence_angle,
            baselines,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// Checks the geometry invariants.
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return Err(TomoError::InvalidGeometry(format!(
                "wavelength must be positive, got {}",
                self.wavelength
            )));
        }
        if !(self.range.is_finite() && self.range > 0.0) {
            return Err(TomoError::InvalidGeometry(format!(
                "range must be positive, got {}",
                self.range
            )));
        }
        if !(self.incidence_angle > 0.0 && self.incidence_angle < PI / 2.0) {
            return Err(TomoError::InvalidGeometry(format!(
                "incidence angle must lie in (0, π/2), got {}",
                self.incidence_angle
            )));
        }
        if self.baselines.len() < 2 {
            return Err(TomoError::InvalidGeometry(format!(
                "need at least two acquisitions, got {}",
                self.baselines.len()
            )));
        }
        if self.baselines.iter().any(|b| !b.is_finite()) {
            return Err(TomoError::InvalidGeometry("non-finite baseline".into()));
        }
        if self.aperture() <= 0.0 {
            return Err(TomoError::ZeroAperture);
        }
        Ok(())
    }

    /// Number of acquisitions N.
    pub fn len(&self) -> usize {
        self.baselines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.baselines.is_empty()
    }

    /// Elevation aperture Δb = max(b) − min(b).
    pub fn aperture(&self) -> f64 {
        let (lo, hi) = self
            .baselines
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &b| {
                (lo.min(b), hi.max(b))
            });
        if lo.is_finite() {
            hi - lo
        } else {
            0.0
        }
    }

    /// Converts an elevation s to height h = s·sin θ_inc.
    pub fn height_from_elevation(&self, s: f64) -> f64 {
        s * self.incidence_angle.sin()
    }

    /// Converts a height h to elevation s = h / sin θ_inc.
    pub fn elevation_from_height(&self, h: f64) -> f64 {
        h / self.incidence_angle.sin()
    }
}

/// Spatial frequencies ξ_n = 2·b_n / (λ·r) [1/m].
pub fn spatial_frequencies(geom: &AcquisitionGeometry) -> Vec<f64> {
    let scale = 2.0 / (geom.wavelength * geom.range);
    geom.baselines.iter().map(|b| scale * b).collect()
}

/// Rayleigh elevation resolution ρ_s = λ·r / (2·Δb).
pub fn rayleigh_resolution(geom: &AcquisitionGeometry) -> Result<f64> {
    let aperture = geom.aperture();
    if !(aperture > 0.0) {
        return Err(TomoError::ZeroAperture);
    }
    Ok(geom.wavelength * geom.range / (2.0 * aperture))
}

/// Interferometric phase of a point at height `h` in acquisition `n`:
/// `4π·b_n·h / (λ·r·sin θ_inc)`.
pub fn height_to_phase(geom: &AcquisitionGeometry, h: f64, n: usize) -> Result<f64> {
    let b = geom.baselines.get(n).ok_or_else(|| {
        TomoError::OutOfRange(format!(
            "acquisition {n} of {}",
            geom.baselines.len()
        ))
    })?;
    Ok(4.0 * PI * b * h / (geom.wavelength * geom.range * geom.incidence_angle.sin()))
}

/// Uniformly spaced elevation samples s_l.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElevationGrid {
    samples: Vec<f64>,
}

impl ElevationGrid {
    /// `count` samples starting at `start` with the given spacing.
    pub fn uniform(start: f64, spacing: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(TomoError::InvalidGrid(format!(
                "need at least two samples, got {count}"
            )));
        }
        if !(spacing.is_finite() && spacing > 0.0) || !start.is_finite() {
            return Err(TomoError::InvalidGrid(format!(
                "spacing must be positive and finite, got {spacing}"
            )));
        }
        let samples = (0..count).map(|l| start + spacing * l as f64).collect();
        Self::from_samples(samples)
    }

    /// `count` samples spanning `[min, max]` inclusive.
    pub fn spanning(min: f64, max: f64, count: usize) -> Result<Self> {
        if count < 2 || !(max > min) {
            return Err(TomoError::InvalidGrid(format!(
                "invalid span [{min}, {max}] with {count} samples"
            )));
        }
        Self::uniform(min, (max - min) / (count - 1) as f64, count)
    }

    /// Validates arbitrary samples: strictly increasing and uniform to 1e-12.
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(TomoError::InvalidGrid("fewer than two samples".into()));
        }
        let spacing = samples[1] - samples[0];
        if !(spacing > 0.0) {
            return Err(TomoError::InvalidGrid("samples not increasing".into()));
        }
        let scale = samples
            .iter()
            .fold(spacing, |acc, s| acc.max(s.abs()));
        for w in samples.windows(2) {
            let d = w[1] - w[0];
            if !(d > 0.0) {
                return Err(TomoError::InvalidGrid("samples not increasing".into()));
            }
            if (d - spacing).abs() > 1e-12 * scale {
                return Err(TomoError::InvalidGrid("samples not uniformly spaced".into()));
            }
        }
        Ok(Self { samples })
    }

    /// Default grid for a geometry: extent `[−2ρ_s, +4ρ_s]` with
    /// `L = 4·N·oversampling` samples.
    pub fn for_geometry(geom: &AcquisitionGeometry, oversampling: usize) -> Result<Self> {
        if oversampling == 0 {
            return Err(TomoError::InvalidGrid("oversampling must be ≥ 1".into()));
        }
        let rho = rayleigh_resolution(geom)?;
        let count = 4 * geom.len() * oversampling;
        Self::spanning(-2.0 * rho, 4.0 * rho, count)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.samples[1] - self.samples[0]
    }

    /// Extent Δs between the first and last sample.
    pub fn extent(&self) -> f64 {
        self.samples[self.samples.len() - 1] - self.samples[0]
    }

    pub fn min(&self) -> f64 {
        self.samples[0]
    }

    pub fn max(&self) -> f64 {
        self.samples[self.samples.len() - 1]
    }

    /// Index of the grid sample nearest to `s`, clamped to the grid.
    pub fn nearest_index(&self, s: f64) -> usize {
        let pos = ((s - self.min()) / self.spacing()).round();
        pos.clamp(0.0, (self.len() - 1) as f64) as usize
    }
}

/// The N×L irregular Fourier mapping matrix.
///
/// Entries are stored column-major so that a column (one elevation sample)
/// is a contiguous slice.
#[derive(Debug, Clone)]
pub struct SteeringMatrix {
    entries: Array2<Complex64>,
    geometry: AcquisitionGeometry,
    grid: ElevationGrid,
}

/// Builds `R[n, l] = exp(j·2π·ξ_n·s_l)`.
pub fn build_steering_matrix(
    geom: &AcquisitionGeometry,
    grid: &ElevationGrid,
) -> Result<SteeringMatrix> {
    geom.validate()?;
    let n = geom.len();
    let l = grid.len();
    if l <= n {
        return Err(TomoError::InvalidGrid(format!(
            "grid of {l} samples is not overcomplete for {n} acquisitions"
        )));
    }
    let xi = spatial_frequencies(geom);
    let mut entries = Array2::<Complex64>::zeros((n, l).f());
    for (col, &s) in grid.samples().iter().enumerate() {
        for (row, &f) in xi.iter().enumerate() {
            entries[[row, col]] = Complex64::from_polar(1.0, 2.0 * PI * f * s);
        }
    }
    Ok(SteeringMatrix {
        entries,
        geometry: geom.clone(),
        grid: grid.clone(),
    })
}

impl SteeringMatrix {
    pub fn entries(&self) -> &Array2<Complex64> {
        &self.entries
    }

    pub fn geometry(&self) -> &AcquisitionGeometry {
        &self.geometry
    }

    pub fn grid(&self) -> &ElevationGrid {
        &self.grid
    }

    /// Number of acquisitions N.
    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    /// Number of elevation samples L.
    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    /// Column `l` as a contiguous slice.
    pub fn column(&self, l: usize) -> &[Complex64] {
        let n = self.rows();
        &self.column_major()[l * n..(l + 1) * n]
    }

    /// All entries in column-major order.
    pub fn column_major(&self) -> &[Complex64] {
        self.entries
            .as_slice_memory_order()
            .expect("steering matrix is contiguous")
    }
}

/// Evaluates `g = R·γ + ε`.
pub fn forward_model(
    steering: &SteeringMatrix,
    gamma: ArrayView1<Complex64>,
    noise: Option<ArrayView1<Complex64>>,
) -> Result<Array1<Complex64>> {
    let (n, l) = (steering.rows(), steering.cols());
    if gamma.len() != l {
        return Err(TomoError::DimensionMismatch(format!(
            "reflectivity has {} samples, grid has {l}",
            gamma.len()
        )));
    }
    let mut g = match noise {
        Some(eps) if eps.len() != n => {
            return Err(TomoError::DimensionMismatch(format!(
                "noise has {} samples, stack has {n}",
                eps.len()
            )))
        }
        Some(eps) => eps.to_owned(),
        None => Array1::zeros(n),
    };
    for (col, &amp) in gamma.iter().enumerate() {
        if amp == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (gi, &r) in g.iter_mut().zip(steering.column(col)) {
            *gi += r * amp;
        }
    }
    Ok(g)
}

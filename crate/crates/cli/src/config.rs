//! JSON run configuration. Every section and field is optional; missing
//! values take the defaults below and unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tomosar_core::model::{AcquisitionGeometry, ElevationGrid};
use tomosar_core::nonlocal::NlParams;
use tomosar_core::simulate::{baseline_distribution, SceneSpec};
use tomosar_core::slimmer::PipelineOptions;
use tomosar_core::solver::SolverOptions;

use crate::error::{CliError, CliResult};
use crate::formats::read_text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneSpec,
    pub geometry: GeometryConfig,
    pub noise: NoiseConfig,
    pub nonlocal: NlParams,
    pub solver: SolverConfig,
    pub pipeline: PipelineConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: SceneSpec::urban_default(),
            geometry: GeometryConfig::default(),
            noise: NoiseConfig::default(),
            nonlocal: NlParams::default(),
            solver: SolverConfig::default(),
            pipeline: PipelineConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// [m]
    pub wavelength: f64,
    /// Slant range [m].
    pub range: f64,
    /// Incidence angle [degrees].
    pub incidence_deg: f64,
    /// Number of acquisitions when baselines are drawn.
    pub n: usize,
    /// Standard deviation of drawn baselines [m].
    pub sigma_b: f64,
    pub baseline_seed: u64,
    /// Explicit baselines [m]; overrides `n`, `sigma_b` and `baseline_seed`.
    pub baselines: Option<Vec<f64>>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            wavelength: 0.031,
            range: 704_000.0,
            incidence_deg: 39.36,
            n: 29,
            sigma_b: 100.0,
            baseline_seed: 42,
            baselines: None,
        }
    }
}

impl GeometryConfig {
    pub fn build(&self) -> CliResult<AcquisitionGeometry> {
        let baselines = match &self.baselines {
            Some(b) => b.clone(),
            None => baseline_distribution(self.n, self.baseline_seed, self.sigma_b)?,
        };
        Ok(AcquisitionGeometry::new(
            self.wavelength,
            self.range,
            self.incidence_deg.to_radians(),
            baselines,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Signal-to-noise ratio [dB]; absent means noiseless.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { snr_db: None, seed: 7 }
    }
}

/// Solver settings plus the regularisation factor. Defaults are those of
/// the inversion pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub block_count: Option<usize>,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub shrink: f64,
    pub initial_step: f64,
    pub acceleration: bool,
    /// λ = lambda_factor · ‖Rᴴ·g‖_∞.
    pub lambda_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let p = PipelineOptions::default();
        let s = p.solver;
        Self {
            block_count: s.block_count,
            max_iterations: s.max_iterations,
            tolerance: s.tolerance,
            seed: s.seed,
            shrink: s.shrink,
            initial_step: s.initial_step,
            acceleration: s.acceleration,
            lambda_factor: p.lambda_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub k_max: usize,
    pub support_threshold: f64,
    pub penalty_scale: f64,
    /// Elevation grid has `4·N·oversampling` samples over [−2ρ_s, 4ρ_s].
    pub oversampling: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let p = PipelineOptions::default();
        Self {
            k_max: p.k_max,
            support_threshold: p.support_threshold,
            penalty_scale: p.penalty_scale,
            oversampling: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Mask erosion [pixels].
    pub erosion: usize,
    /// Histogram bin width in units of ρ_s.
    pub bin_width: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { erosion: 2, bin_width: 0.1 }
    }
}

impl RunConfig {
    /// Parses a configuration, or the `config` section of a run manifest.
    pub fn from_json(text: &str) -> CliResult<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Usage(format!("invalid JSON: {e}")))?;
        let value = match value.get("config") {
            Some(inner) if value.get("tool").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            Some(p) => Self::from_json(&read_text(p)?)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))),
            None => Ok(Self::default()),
        }
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        let s = &self.solver;
        PipelineOptions {
            k_max: self.pipeline.k_max,
            support_threshold: self.pipeline.support_threshold,
            lambda_factor: s.lambda_factor,
            penalty_scale: self.pipeline.penalty_scale,
            solver: SolverOptions {
                block_count: s.block_count,
                max_iterations: s.max_iterations,
                tolerance: s.tolerance,
                seed: s.seed,
                shrink: s.shrink,
                initial_step: s.initial_step,
                acceleration: s.acceleration,
            },
        }
    }

    pub fn grid(&self, geom: &AcquisitionGeometry) -> CliResult<ElevationGrid> {
        Ok(ElevationGrid::for_geometry(geom, self.pipeline.oversampling)?)
    }
}

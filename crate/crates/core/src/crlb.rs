//! Closed-form elevation accuracy bounds for one and two scatterers.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyQuery {
    /// [m]
    pub wavelength: f64,
    /// Slant range [m].
    pub range: f64,
    /// Standard deviation of the baselines [m].
    pub sigma_b: f64,
    /// Number of acquisitions.
    pub n: usize,
    /// Linear signal-to-noise ratio.
    pub snr: f64,
    /// Scatterer separation in Rayleigh resolutions.
    pub kappa: f64,
    /// Phase difference between the two scatterers [rad].
    pub delta_phi: f64,
}

impl AccuracyQuery {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("wavelength", self.wavelength),
            ("range", self.range),
            ("sigma_b", self.sigma_b),
            ("snr", self.snr),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TomoError::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n < 2 {
            return Err(TomoError::InvalidParameter(format!(
                "need at least 2 acquisitions, got {}",
                self.n
            )));
        }
        Ok(())
    }
}

/// Single-scatterer bound `σ_s0 = λr / (4π·σ_b·√(2·N·SNR))` [m].
pub fn crlb_single(q: &AccuracyQuery) -> Result<f64> {
    q.validate()?;
    Ok(q.wavelength * q.range
        / (4.0 * std::f64::consts::PI * q.sigma_b * (2.0 * q.n as f64 * q.snr).sqrt()))
}

/// Degradation `c0 ≥ 1` of the bound caused by a second scatterer at
/// normalised distance `kappa` and phase offset `delta_phi`.
pub fn interference_factor(kappa: f64, delta_phi: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(TomoError::Domain(format!("kappa must be positive, got {kappa}")));
    }
    let factor = 1.0 - kappa / 3.0;
    if factor <= 0.0 {
        return Ok(1.0);
    }
    let a = 3.0 - 2.0 * kappa;
    let denom = 9.0 - 6.0 * a * (2.0 * delta_phi).cos() + a * a;
    if !(denom > 0.0) {
        return Err(TomoError::Domain(format!(
            "interference factor undefined at kappa {kappa}, delta_phi {delta_phi}"
        )));
    }
    Ok((40.0 * factor / (kappa * kappa * denom)).sqrt().max(1.0))
}

/// Double-scatterer bound `c0 · σ_s0` [m].
pub fn crlb_double(q: &AccuracyQuery) -> Result<f64> {
    Ok(interference_factor(q.kappa, q.delta_phi)? * crlb_single(q)?)
}

/// Sample standard deviation of a baseline vector.
pub fn baseline_std(baselines: &[f64]) -> Result<f64> {
    let n = baselines.len();
    if n < 2 {
        return Err(TomoError::InvalidParameter("need at least 2 baselines".into()));
    }
    let mean = baselines.iter().sum::<f64>() / n as f64;
    let ss: f64 = baselines.iter().map(|b| (b - mean).powi(2)).sum();
    Ok((ss / (n - 1) as f64).sqrt())
}

/// Linear SNR from decibels.
pub fn snr_from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn query() -> AccuracyQuery {
        AccuracyQuery {
            wavelength: 0.031,
            range: 704_000.0,
            sigma_b: 100.0,
            n: 29,
            snr: 10.0,
            kappa: 1.0,
            delta_phi: 0.0,
        }
    }

    #[test]
    fn single_reference_value() {
        let expect = 21_824.0 / (400.0 * std::f64::consts::PI * 580f64.sqrt());
        assert_relative_eq!(crlb_single(&query()).unwrap(), expect, max_relative = 1e-14);
        assert!((crlb_single(&query()).unwrap() - 0.721).abs() < 1e-3);
    }

    #[test]
    fn single_scaling() {
        let q = query();
        let base = crlb_single(&q).unwrap();
        let quad = AccuracyQuery { n: 58, snr: 20.0, ..q };
        assert_relative_eq!(crlb_single(&quad).unwrap(), base / 2.0, max_relative = 1e-14);
        let wide = AccuracyQuery { sigma_b: 200.0, ..q };
        assert_relative_eq!(crlb_single(&wide).unwrap(), base / 2.0, max_relative = 1e-14);
        assert!(crlb_single(&AccuracyQuery { n: 1, ..q }).is_err());
        assert!(crlb_single(&AccuracyQuery { snr: 0.0, ..q }).is_err());
    }

    #[test]
    fn interference_cases() {
        assert_eq!(interference_factor(3.0, 0.7).unwrap(), 1.0);
        assert_eq!(interference_factor(4.5, 0.0).unwrap(), 1.0);
        assert_relative_eq!(interference_factor(1.0, 0.0).unwrap(), (20.0f64 / 3.0).sqrt(), max_relative = 1e-14);
        assert!(interference_factor(0.0, 0.0).is_err());
        assert!(interference_factor(-1.0, 0.0).is_err());
    }

    #[test]
    fn double_cases() {
        let q = query();
        let single = crlb_single(&q).unwrap();
        assert_relative_eq!(crlb_double(&q).unwrap(), single * (20.0f64 / 3.0).sqrt(), max_relative = 1e-14);
        assert!((crlb_double(&q).unwrap() - 1.862).abs() < 1e-3);
        assert_eq!(crlb_double(&AccuracyQuery { kappa: 3.0, ..q }).unwrap(), single);
    }

    #[test]
    fn baseline_std_is_sample_std() {
        assert_relative_eq!(baseline_std(&[0.0, 2.0]).unwrap(), 2f64.sqrt(), max_relative = 1e-15);
        assert!(baseline_std(&[1.0]).is_err());
        assert_relative_eq!(snr_from_db(10.0), 10.0, max_relative = 1e-15);
    }
}

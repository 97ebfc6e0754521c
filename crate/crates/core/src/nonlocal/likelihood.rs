use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Result, TomoError};

/// Interferometric parameters of one master–slave pair at one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairParams {
    /// Interferometric phase ψ [rad], in (−π, π].
    pub psi: f64,
    /// Coherence magnitude μ ∈ [0, 1].
    pub mu: f64,
    /// Per-channel variance σ² (⟨I⟩ = 2σ²).
    pub sigma2: f64,
}

/// Joint density of two intensities and the interferometric phase of a
/// circular Gaussian pair:
///
/// `p = exp[−(I₁ + I₂ − 2√(I₁I₂)·μ·cos(φ − ψ)) / (2σ²(1 − μ²))] / (16π²σ⁴(1 − μ²))`
pub fn pair_likelihood(i1: f64, i2: f64, phi: f64, psi: f64, mu: f64, sigma2: f64) -> Result<f64> {
    Ok(pair_log_likelihood(i1, i2, phi, psi, mu, sigma2)?.exp())
}

/// Natural logarithm of [`pair_likelihood`].
pub fn pair_log_likelihood(i1: f64, i2: f64, phi: f64, psi: f64, mu: f64, sigma2: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&mu) {
        return Err(TomoError::Domain(format!("coherence must lie in [0, 1), got {mu}")));
    }
    if !(sigma2 > 0.0) {
        return Err(TomoError::Domain(format!("variance must be positive, got {sigma2}")));
    }
    if !(i1 >= 0.0 && i2 >= 0.0) {
        return Err(TomoError::Domain("intensities must be non-negative".into()));
    }
    let one_m = 1.0 - mu * mu;
    let norm = (16.0 * PI * PI * sigma2 * sigma2 * one_m).ln();
    let q = i1 + i2 - 2.0 * (i1 * i2).sqrt() * mu * (phi - psi).cos();
    Ok(-norm - q / (2.0 * sigma2 * one_m))
}

/// Log density of the pair `(g1, g2)` under `params`, written in complex
/// form: `√(I₁I₂)·cos(φ − ψ) = Re(g₁*·g₂·e^{−jψ})`. Non-finite for
/// degenerate parameters.
#[inline]
pub(crate) fn log_density(s: f64, z: Complex64, a: f64, b: f64, c: Complex64) -> f64 {
    -a - b * (s - 2.0 * (z.re * c.re - z.im * c.im))
}

/// Constants `(A, B, c)` such that `log p = −A − B·(S − 2·Re(z·c))` with
/// `S = I₁ + I₂` and `z = g₁*·g₂`.
#[inline]
pub(crate) fn density_constants(p: &PairParams) -> (f64, f64, Complex64) {
    let one_m = 1.0 - p.mu * p.mu;
    let a = (16.0 * PI * PI * p.sigma2 * p.sigma2 * one_m).ln();
    let b = 1.0 / (2.0 * p.sigma2 * one_m);
    (a, b, Complex64::from_polar(p.mu, -p.psi))
}

/// One pixel of a patch: a master–slave sample pair and the pilot parameters
/// estimated around it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchSample {
    pub g1: Complex64,
    pub g2: Complex64,
    pub pilot: PairParams,
}

/// Symmetric similarity of two samples: the mean of each sample's log
/// density under the other's pilot parameters.
pub fn sample_similarity(a: &PatchSample, b: &PatchSample) -> f64 {
    let (aa, ab, ac) = density_constants(&a.pilot);
    let (ba, bb, bc) = density_constants(&b.pilot);
    let (sa, za) = (a.g1.norm_sqr() + a.g2.norm_sqr(), a.g1.conj() * a.g2);
    let (sb, zb) = (b.g1.norm_sqr() + b.g2.norm_sqr(), b.g1.conj() * b.g2);
    0.5 * (log_density(sa, za, ba, bb, bc) + log_density(sb, zb, aa, ab, ac))
}

/// `(1/h)·Σ_m ℓ_m` over corresponding samples of two congruent patches;
/// `−∞` when any term is not finite.
pub fn patch_log_weight(center: &[PatchSample], candidate: &[PatchSample], h: f64) -> Result<f64> {
    if center.len() != candidate.len() {
        return Err(TomoError::DimensionMismatch(format!(
            "patches of {} and {} samples",
            center.len(),
            candidate.len()
        )));
    }
    if !(h > 0.0) {
        return Err(TomoError::InvalidParameter(format!("h must be positive, got {h}")));
    }
    let total: f64 = center.iter().zip(candidate).map(|(a, b)| sample_similarity(a, b)).sum();
    let lw = total / h;
    Ok(if lw.is_finite() { lw } else { f64::NEG_INFINITY })
}

/// Unnormalised patch weight `exp(patch_log_weight)`.
pub fn patch_weight(center: &[PatchSample], candidate: &[PatchSample], h: f64) -> Result<f64> {
    Ok(patch_log_weight(center, candidate, h)?.exp())
}

/// Weighted maximum-likelihood estimate of `(ψ, μ, σ²)` from sample pairs.
pub fn wmle(weights: &[f64], g1: &[Complex64], g2: &[Complex64]) -> Result<PairParams> {
    if weights.len() != g1.len() || g1.len() != g2.len() {
        return Err(TomoError::DimensionMismatch("weights and samples differ in length".into()));
    }
    let mut acc = WmleAccumulator::default();
    for ((&w, &a), &b) in weights.iter().zip(g1).zip(g2) {
        if w < 0.0 {
            return Err(TomoError::InvalidParameter(format!("negative weight {w}")));
        }
        acc.add(w, a, b);
    }
    if !(acc.weight > 0.0) {
        return Err(TomoError::InvalidParameter("weights sum to zero".into()));
    }
    Ok(acc.finish())
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct WmleAccumulator {
    pub weight: f64,
    pub cross: Complex64,
    pub amp: f64,
    pub power: f64,
}

impl WmleAccumulator {
    #[inline]
    pub fn add(&mut self, w: f64, g1: Complex64, g2: Complex64) {
        self.weight += w;
        self.cross += g1 * g2.conj() * w;
        self.amp += w * g1.norm() * g2.norm();
        self.power += w * (g1.norm_sqr() + g2.norm_sqr());
    }

    pub fn finish(&self) -> PairParams {
        PairParams {
            psi: wrap_phase(-self.cross.arg()),
            mu: if self.power > 0.0 {
                (2.0 * self.amp / self.power).min(1.0)
            } else {
                0.0
            },
            sigma2: self.power / (4.0 * self.weight),
        }
    }
}

/// Maps a phase in [−π, π] to (−π, π].
#[inline]
pub(crate) fn wrap_phase(p: f64) -> f64 {
    if p <= -PI {
        p + 2.0 * PI
    } else {
        p
    }
}

/// Equivalent number of looks `(Σw)² / Σw²`.
pub fn equivalent_looks(weights: &[f64]) -> Result<f64> {
    let sum: f64 = weights.iter().sum();
    if !(sum > 0.0) {
        return Err(TomoError::InvalidParameter("weights sum to zero".into()));
    }
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    Ok(sum * sum / sq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn likelihood_reference_values() {
        let p = pair_likelihood(2.0, 2.0, 0.3, 0.3, 0.5, 1.0).unwrap();
        assert_relative_eq!(p, (-4.0f64 / 3.0).exp() / (12.0 * PI * PI), max_relative = 1e-14);
        // decorrelated: independent of phase
        let a = pair_likelihood(1.0, 3.0, 0.1, 2.0, 0.0, 0.7).unwrap();
        let b = pair_likelihood(1.0, 3.0, -2.5, 2.0, 0.0, 0.7).unwrap();
        let expect = (-(4.0) / 1.4f64).exp() / (16.0 * PI * PI * 0.49);
        assert_relative_eq!(a, expect, max_relative = 1e-14);
        assert_relative_eq!(a, b, max_relative = 1e-14);
        assert!(pair_likelihood(1.0, 1.0, 0.0, 0.0, 1.0, 1.0).is_err());
        assert!(pair_likelihood(1.0, 1.0, 0.0, 0.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn likelihood_peaks_at_psi() {
        let psi = 0.8;
        let at = pair_likelihood(1.0, 1.5, psi, psi, 0.6, 0.5).unwrap();
        for k in 1..50 {
            let phi = psi + k as f64 * 0.12;
            assert!(pair_likelihood(1.0, 1.5, phi, psi, 0.6, 0.5).unwrap() < at);
        }
    }

    #[test]
    fn complex_form_matches_density() {
        let params = PairParams { psi: -1.1, mu: 0.7, sigma2: 0.8 };
        let g1 = Complex64::from_polar(1.3, 0.4);
        let g2 = Complex64::from_polar(0.6, -2.0);
        let (a, b, c) = density_constants(&params);
        let z = g1.conj() * g2;
        let direct = pair_log_likelihood(g1.norm_sqr(), g2.norm_sqr(), z.arg(), params.psi, params.mu, params.sigma2).unwrap();
        assert_relative_eq!(log_density(g1.norm_sqr() + g2.norm_sqr(), z, a, b, c), direct, max_relative = 1e-13);
    }

    #[test]
    fn weight_ratio_scales_with_patch_size() {
        let pilot = PairParams { psi: 0.0, mu: 0.5, sigma2: 1.0 };
        let s = |g2: Complex64| PatchSample { g1: Complex64::new(1.0, 0.0), g2, pilot };
        let center = vec![s(Complex64::new(1.0, 0.0)); 6];
        let near = vec![s(Complex64::new(0.9, 0.1)); 6];
        let far = vec![s(Complex64::new(-0.5, 0.6)); 6];
        let h = 3.0;
        let per_near = sample_similarity(&center[0], &near[0]);
        let per_far = sample_similarity(&center[0], &far[0]);
        let ratio = patch_weight(&center, &near, h).unwrap() / patch_weight(&center, &far, h).unwrap();
        assert_relative_eq!(ratio, ((per_near - per_far) * 6.0 / h).exp(), max_relative = 1e-10);
        assert!(ratio > 1.0);
        // degenerate pilot → zero weight
        let bad = vec![PatchSample { pilot: PairParams { sigma2: 0.0, ..pilot }, ..near[0] }; 6];
        assert_eq!(patch_weight(&center, &bad, h).unwrap(), 0.0);
    }

    #[test]
    fn wmle_cases() {
        let one = Complex64::new(1.0, 0.0);
        let j = Complex64::new(0.0, 1.0);
        let p = wmle(&[1.0], &[one], &[j]).unwrap();
        assert_relative_eq!(p.psi, PI / 2.0, max_relative = 1e-15);
        let g = [Complex64::new(0.3, 2.0), Complex64::new(-1.0, 0.5)];
        assert_relative_eq!(wmle(&[0.2, 3.0], &g, &g).unwrap().mu, 1.0, max_relative = 1e-15);
        let u = [Complex64::from_polar(1.0, 0.3), Complex64::from_polar(1.0, -2.0)];
        let v = [Complex64::from_polar(1.0, 1.3), Complex64::from_polar(1.0, 0.9)];
        assert_relative_eq!(wmle(&[1.0, 2.0], &u, &v).unwrap().sigma2, 0.5, max_relative = 1e-15);
        assert!(wmle(&[0.0, 0.0], &u, &v).is_err());
        // single sample reproduces the raw pixel phase
        let raw = wmle(&[1.0], &[u[1]], &[v[1]]).unwrap();
        assert_relative_eq!(raw.psi, -(u[1] * v[1].conj()).arg(), max_relative = 1e-14);
    }

    #[test]
    fn looks() {
        assert_eq!(equivalent_looks(&[0.0, 3.0, 0.0]).unwrap(), 1.0);
        assert_relative_eq!(equivalent_looks(&[0.5; 7]).unwrap(), 7.0, max_relative = 1e-14);
        assert_relative_eq!(equivalent_looks(&[1.0, 1.0, 2.0]).unwrap(), 16.0 / 6.0, max_relative = 1e-14);
        assert!(equivalent_looks(&[0.0]).is_err());
    }
}

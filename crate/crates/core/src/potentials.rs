//! Radial trap potentials and the length rescalings of the GP functional.
//!
//! A potential is either exactly homogeneous, `V(r) = r^s`, or a finite sum
//! `V(r) = Σ c_i r^{e_i}` carrying the constants `(kappa, c)` of the
//! asymptotic homogeneity bound
//! `|λ^{-s} V(λ r) - r^s| <= c λ^{-kappa} (1 + r^s)` for `λ >= 1`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_parameter, Error, Result};
use crate::gp::GpState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    Homogeneous,
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapPotential {
    pub kind: PotentialKind,
    pub s: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default)]
    pub c: f64,
    /// `(coefficient, exponent)` pairs; empty for homogeneous potentials.
    #[serde(default)]
    pub terms: Vec<(f64, f64)>,
}

impl TrapPotential {
    pub fn homogeneous(s: f64) -> Result<Self> {
        let v = Self {
            kind: PotentialKind::Homogeneous,
            s,
            kappa: 0.0,
            c: 0.0,
            terms: Vec::new(),
        };
        v.validate()?;
        Ok(v)
    }

    /// `V(r) = Σ coefficient · r^exponent` with declared homogeneity constants.
    pub fn polynomial(s: f64, kappa: f64, c: f64, terms: Vec<(f64, f64)>) -> Result<Self> {
        let v = Self {
            kind: PotentialKind::General,
            s,
            kappa,
            c,
            terms,
        };
        v.validate()?;
        Ok(v)
    }

    /// Checks parameter ranges and `V >= 0` on the default radial samples.
    pub fn validate(&self) -> Result<()> {
        if !(self.s.is_finite() && self.s > 2.0) {
            return Err(invalid_parameter(format!(
                "trap exponent must satisfy s > 2 (got {})",
                self.s
            )));
        }
        if self.kind == PotentialKind::General {
            if !(self.kappa > 0.0 && self.c > 0.0) {
                return Err(invalid_parameter(
                    "general potentials need kappa > 0 and c > 0",
                ));
            }
            if self.terms.is_empty() {
                return Err(invalid_parameter("general potential has no terms"));
            }
            if self
                .terms
                .iter()
                .any(|&(a, e)| !a.is_finite() || !e.is_finite() || e < 0.0)
            {
                return Err(invalid_parameter(
                    "potential terms need finite coefficients and exponents >= 0",
                ));
            }
            let radii = std::iter::once(0.0).chain(default_radii());
            for r in radii {
                let v = self.evaluate(r);
                if !(v.is_finite() && v >= 0.0) {
                    return Err(invalid_parameter(format!(
                        "potential must be finite and nonnegative (V({r}) = {v})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_homogeneous(&self) -> bool {
        self.kind == PotentialKind::Homogeneous
    }

    pub fn evaluate(&self, r: f64) -> f64 {
        match self.kind {
            PotentialKind::Homogeneous => r.powf(self.s),
            PotentialKind::General => self.terms.iter().map(|&(a, e)| a * pow(r, e)).sum(),
        }
    }

    /// `λ^{-s} V(λ r)`, evaluated term by term so that large `λ` does not
    /// overflow.
    pub fn rescaled(&self, lambda: f64, r: f64) -> f64 {
        match self.kind {
            PotentialKind::Homogeneous => r.powf(self.s),
            PotentialKind::General => self
                .terms
                .iter()
                .map(|&(a, e)| a * lambda.powf(e - self.s) * pow(r, e))
                .sum(),
        }
    }
}

/// `r^e` with `0^0 = 1`.
fn pow(r: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        r.powf(e)
    }
}

/// `λ = 1, 2, 4, ..., 2^10`.
pub fn default_lambdas() -> Vec<f64> {
    (0..=10).map(|k| 2f64.powi(k)).collect()
}

/// 200 log-spaced radii in `[1e-3, 1e3]`.
pub fn default_radii() -> Vec<f64> {
    let n = 200;
    (0..n)
        .map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / (n - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityReport {
    pub holds: bool,
    pub worst_ratio: f64,
    pub worst_lambda: f64,
    pub worst_r: f64,
    /// Set for exactly homogeneous potentials, for which the bound is trivial.
    pub vacuous: bool,
}

/// Evaluates the homogeneity bound on every `(λ, r)` sample.
pub fn asym_homogeneity_check(
    v: &TrapPotential,
    lambdas: &[f64],
    radii: &[f64],
) -> Result<HomogeneityReport> {
    if lambdas.iter().any(|&l| !(l >= 1.0 && l.is_finite())) {
        return Err(Error::InvalidInput("all lambdas must satisfy λ >= 1".into()));
    }
    if radii.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
        return Err(Error::InvalidInput("all radii must be >= 0".into()));
    }
    if v.is_homogeneous() {
        return Ok(HomogeneityReport {
            holds: true,
            worst_ratio: 0.0,
            worst_lambda: 1.0,
            worst_r: 0.0,
            vacuous: true,
        });
    }
    let mut report = HomogeneityReport {
        holds: true,
        worst_ratio: 0.0,
        worst_lambda: 1.0,
        worst_r: 0.0,
        vacuous: false,
    };
    for &lambda in lambdas {
        for &r in radii {
            let rs = r.powf(v.s);
            let deviation = (v.rescaled(lambda, r) - rs).abs();
            let bound = v.c * lambda.powf(-v.kappa) * (1.0 + rs);
            let ratio = deviation / bound;
            if ratio > report.worst_ratio {
                report.worst_ratio = ratio;
                report.worst_lambda = lambda;
                report.worst_r = r;
            }
        }
    }
    report.holds = report.worst_ratio <= 1.0;
    Ok(report)
}

/// Length and energy factors relating the original and scaled functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthScaling {
    pub s: f64,
    pub epsilon: f64,
    /// `k = ε^{-2/(s+2)}`: original lengths are `k` times scaled lengths.
    pub k: f64,
    /// `ε^{4/(s+2)}`: original energy = factor · scaled energy.
    pub energy_factor: f64,
}

pub fn rescale_lengths(epsilon: f64, s: f64) -> Result<LengthScaling> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(invalid_parameter(format!(
            "epsilon must lie in (0, 1] (got {epsilon})"
        )));
    }
    if !(s.is_finite() && s > 2.0) {
        return Err(invalid_parameter(format!("s must exceed 2 (got {s})")));
    }
    Ok(LengthScaling {
        s,
        epsilon,
        k: epsilon.powf(-2.0 / (s + 2.0)),
        energy_factor: epsilon.powf(4.0 / (s + 2.0)),
    })
}

impl LengthScaling {
    /// Maps a scaled state to original units: `Ψ̂(r) = Ψ(r/k)/k` on a box
    /// `k` times larger, with `Ω = ω/k²`.
    pub fn to_original(&self, state: &GpState) -> GpState {
        let k = self.k;
        let mut out = state.clone();
        out.grid.box_radius *= k;
        out.omega /= k * k;
        out.values.iter_mut().for_each(|v| *v /= k);
        out
    }

    pub fn to_scaled(&self, state: &GpState) -> GpState {
        let k = self.k;
        let mut out = state.clone();
        out.grid.box_radius /= k;
        out.omega *= k * k;
        out.values.iter_mut().for_each(|v| *v *= k);
        out
    }

    pub fn original_energy(&self, scaled_energy: f64) -> f64 {
        self.energy_factor * scaled_energy
    }
}

/// `λ = ε^{-2/(s-2)}`, the length scale used with asymptotically
/// homogeneous potentials at `ω ~ 1/ε`.
pub fn general_length_scale(epsilon: f64, s: f64) -> f64 {
    epsilon.powf(-2.0 / (s - 2.0))
}

/// Radial function `r ↦ λ^{-s} V(λ r)` with `λ = ε^{-2/(s-2)}`.
pub fn rescaled_general_potential(
    v: &TrapPotential,
    epsilon: f64,
) -> Result<impl Fn(f64) -> f64 + Send + Sync + Clone> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid_parameter(format!(
            "epsilon must lie in (0, 1) (got {epsilon})"
        )));
    }
    let lambda = general_length_scale(epsilon, v.s);
    let v = v.clone();
    Ok(move |r: f64| v.rescaled(lambda, r))
}

/// Like [`rescaled_general_potential`] but with the length scale
/// `k = ε^{-2/(s+2)}` of the homogeneous rescaling.
pub fn rescaled_potential_homogeneous_scale(
    v: &TrapPotential,
    epsilon: f64,
) -> Result<impl Fn(f64) -> f64 + Send + Sync + Clone> {
    let k = rescale_lengths(epsilon, v.s)?.k;
    let v = v.clone();
    Ok(move |r: f64| v.rescaled(k, r))
}

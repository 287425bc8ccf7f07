//! Trial states giving upper bounds on the GP energy.
//!
//! For `ω = ω₀/ε` the trial function is `c_ε √ρ_ε χ_ε g_ε`: a smoothed TF
//! density, a cutoff vanishing linearly within `ε^η` of each vortex, and
//! the phase of a square lattice of unit vortices with spacing `δ√ε`. For
//! `ω ≫ 1/ε` it is a giant vortex on a thin annulus around `R_m`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_parameter, Result};
use crate::gp::{EnergyBreakdown, GpFunctional, GpState, Grid};
use crate::potentials::TrapPotential;
use crate::quadrature::{breakpoints, integrate, integrate_with_breaks, Tolerance};
use crate::tf::{density_max_radius, TfSolution};

type C = Complex64;

/// Default cutoff exponent; any `η > 5/2` is admissible.
pub const DEFAULT_ETA: f64 = 3.0;

/// `j_ε ⋆ ρ^TF` tabulated on a uniform radial grid, with
/// `j_ε(r) = exp(-r/ε)/(2πε²)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularizedDensity {
    pub epsilon: f64,
    pub dr: f64,
    /// Values at `r = k·dr`; zero beyond the table.
    pub values: Vec<f64>,
}

/// Number of smoothing lengths kept beyond `R_out`; `e^{-40}` is below
/// double precision relative to the bulk.
const TAIL_LENGTHS: f64 = 40.0;

impl RegularizedDensity {
    pub fn r_max(&self) -> f64 {
        self.dr * (self.values.len() - 1) as f64
    }

    /// Catmull-Rom interpolation, using evenness in `r` at the origin.
    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        let pos = r / self.dr;
        let k = pos.floor() as usize;
        let last = self.values.len() - 1;
        if k >= last {
            return if pos <= last as f64 { self.values[last] } else { 0.0 };
        }
        let at = |i: isize| -> f64 {
            let i = i.unsigned_abs();
            if i > last {
                0.0
            } else {
                self.values[i]
            }
        };
        let t = pos - k as f64;
        let k = k as isize;
        let (p0, p1, p2, p3) = (at(k - 1), at(k), at(k + 1), at(k + 2));
        let v = p1
            + 0.5
                * t
                * (p2 - p0 + t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + t * (3.0 * (p1 - p2) + p3 - p0)));
        v.max(0.0)
    }

    /// `∫ ρ_ε` by Simpson's rule on the table.
    pub fn mass(&self) -> f64 {
        let f: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| 2.0 * PI * k as f64 * self.dr * v)
            .collect();
        crate::quadrature::simpson_uniform(&f, self.dr)
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// `‖∇√ρ_ε‖₂²` from centred differences on the table.
    pub fn sqrt_gradient_norm_squared(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v.sqrt()).collect();
        let n = sq.len();
        let f: Vec<f64> = (0..n)
            .map(|k| {
                let d = if k == 0 {
                    0.0
                } else if k + 1 == n {
                    (sq[k] - sq[k - 1]) / self.dr
                } else {
                    (sq[k + 1] - sq[k - 1]) / (2.0 * self.dr)
                };
                2.0 * PI * k as f64 * self.dr * d * d
            })
            .collect();
        crate::quadrature::simpson_uniform(&f, self.dr)
    }
}

/// Computes `ρ_ε = j_ε ⋆ ρ^TF` radially as
/// `ρ_ε(r) = ∫ ρ^TF(r') r' K(r, r') dr'` with the angular kernel
/// `K(r, r') = ∫₀^{2π} j_ε(|r - r' e^{iφ}|) dφ`. Both integrands are smooth
/// apart from a kink at `r' = r` and the edges of the TF support.
pub fn regularized_tf_density(tf: &TfSolution, epsilon: f64) -> Result<RegularizedDensity> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid_parameter(format!("epsilon must be positive (got {epsilon})")));
    }
    let dr = epsilon / 32.0;
    let r_max = tf.r_out + TAIL_LENGTHS * epsilon;
    let count = (r_max / dr).ceil() as usize + 1;
    let inner_tol = Tolerance::new(1e-300, 1e-13);
    let outer_tol = Tolerance::new(1e-300, 1e-12);
    let norm = 1.0 / (2.0 * PI * epsilon * epsilon);

    let kernel = |r: f64, rp: f64| -> f64 {
        let (sum, prod) = ((r - rp).powi(2), 2.0 * r * rp);
        let at = |phi: f64| {
            // |r - r'e^{iφ}|² = (r - r')² + 4rr' sin²(φ/2), without cancellation.
            let half = (0.5 * phi).sin();
            (-(sum + 2.0 * prod * half * half).sqrt() / epsilon).exp()
        };
        if prod == 0.0 {
            return 2.0 * PI * norm * at(0.0);
        }
        // The peak at φ = 0 has angular width about ε/√(rr').
        let width = epsilon / (r * rp).sqrt();
        let pts = breakpoints(0.0, PI, [width, 4.0 * width, 16.0 * width]);
        2.0 * norm * integrate_with_breaks(at, &pts, inner_tol).value
    };
    let values = (0..count)
        .into_par_iter()
        .map(|k| {
            let r = k as f64 * dr;
            let lo = tf.r_in.max(r - TAIL_LENGTHS * epsilon);
            let hi = tf.r_out.min(r + TAIL_LENGTHS * epsilon);
            if lo >= hi {
                return 0.0;
            }
            let pts = breakpoints(lo, hi, [r]);
            integrate_with_breaks(|rp| tf.density(rp) * rp * kernel(r, rp), &pts, outer_tol)
                .value
        })
        .collect();
    Ok(RegularizedDensity {
        epsilon,
        dr,
        values,
    })
}

/// Square vortex lattice `{(mℓ, nℓ)}` clipped to a disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexLattice {
    pub spacing: f64,
    pub delta: f64,
    pub eta: f64,
    pub clip_radius: f64,
    pub points: Vec<(f64, f64)>,
}

/// Lattice with spacing `ℓ = δ√ε` (default `δ = √(2π/ω₀)`, one vortex per
/// area `2πε/ω₀`) inside the disk of radius `2R_out - 2√2 ℓ`.
pub fn build_vortex_lattice(
    omega0: f64,
    epsilon: f64,
    r_out: f64,
    delta: Option<f64>,
    eta: f64,
) -> Result<VortexLattice> {
    if !(omega0 > 0.0 && omega0.is_finite()) {
        return Err(invalid_parameter(format!("lattice needs omega0 > 0 (got {omega0})")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid_parameter(format!("epsilon must be positive (got {epsilon})")));
    }
    if !(eta > 2.5) {
        return Err(invalid_parameter(format!("cutoff exponent must exceed 5/2 (got {eta})")));
    }
    let delta = delta.unwrap_or_else(|| (2.0 * PI / omega0).sqrt());
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid_parameter(format!("lattice parameter must be positive (got {delta})")));
    }
    let spacing = delta * epsilon.sqrt();
    if spacing >= r_out {
        return Err(invalid_parameter(format!(
            "lattice spacing {spacing} is not below the TF radius {r_out}"
        )));
    }
    let clip_radius = 2.0 * r_out - 2.0 * 2f64.sqrt() * spacing;
    let m_max = (clip_radius / spacing).floor() as i64;
    let mut points = Vec::new();
    for n in -m_max..=m_max {
        for m in -m_max..=m_max {
            let (x, y) = (m as f64 * spacing, n as f64 * spacing);
            if x.hypot(y) <= clip_radius {
                points.push((x, y));
            }
        }
    }
    Ok(VortexLattice {
        spacing,
        delta,
        eta,
        clip_radius,
        points,
    })
}

impl VortexLattice {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn cutoff_radius(&self, epsilon: f64) -> f64 {
        epsilon.powf(self.eta)
    }

    /// The site that the nearest lattice node rounds to, if it belongs to
    /// the clipped lattice.
    fn nearest_site(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let m = (x / self.spacing).round();
        let n = (y / self.spacing).round();
        let (sx, sy) = (m * self.spacing, n * self.spacing);
        (sx.hypot(sy) <= self.clip_radius && !self.is_empty()).then_some((sx, sy))
    }

    /// `‖∇χ_ε‖₂² = π N`: each cutoff disk contributes `π a² · a^{-2}`.
    pub fn cutoff_gradient_norm_squared(&self) -> f64 {
        PI * self.len() as f64
    }
}

/// Phase `g_ε = Π_j (ζ - ζ_j)/|ζ - ζ_j|` and cutoff
/// `χ_ε = min(1, dist/ε^η)` at `(x, y)`. At a lattice site the phase is
/// undefined and `(1, 0)` is returned.
pub fn phase_and_cutoff(lattice: &VortexLattice, epsilon: f64, x: f64, y: f64) -> (C, f64) {
    let a = lattice.cutoff_radius(epsilon);
    let chi = match lattice.nearest_site(x, y) {
        Some((sx, sy)) => {
            let d = (x - sx).hypot(y - sy);
            if d == 0.0 {
                return (C::new(1.0, 0.0), 0.0);
            }
            (d / a).min(1.0)
        }
        None => 1.0,
    };
    (lattice_phase(lattice, x, y), chi)
}

fn lattice_phase(lattice: &VortexLattice, x: f64, y: f64) -> C {
    let mut g = C::new(1.0, 0.0);
    for (k, &(sx, sy)) in lattice.points.iter().enumerate() {
        let z = C::new(x - sx, y - sy);
        let norm = z.norm();
        if norm == 0.0 {
            return C::new(1.0, 0.0);
        }
        g *= z / norm;
        if k % 64 == 63 {
            g /= g.norm();
        }
    }
    g / g.norm()
}

/// Winding number of a closed sampled contour of nonzero complex values.
pub fn winding_number(samples: &[C]) -> f64 {
    let n = samples.len();
    let mut total = 0.0;
    for k in 0..n {
        let a = samples[k];
        let b = samples[(k + 1) % n];
        total += (b * a.conj()).arg();
    }
    total / (2.0 * PI)
}

/// Winding of `f` along the circle of given centre and radius.
pub fn winding_on_circle<F: Fn(f64, f64) -> C>(
    f: F,
    center: (f64, f64),
    radius: f64,
    samples: usize,
) -> f64 {
    let values: Vec<C> = (0..samples)
        .map(|k| {
            let th = 2.0 * PI * k as f64 / samples as f64;
            f(center.0 + radius * th.cos(), center.1 + radius * th.sin())
        })
        .collect();
    winding_number(&values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialProvenance {
    pub delta: f64,
    pub eta: f64,
    pub n_eps: usize,
    pub c_eps: f64,
    /// Smoothing length of `j_ε`.
    pub smoothing: f64,
}

#[derive(Debug, Clone)]
pub struct TrialState {
    pub state: GpState,
    pub lattice: VortexLattice,
    pub density: RegularizedDensity,
    pub provenance: TrialProvenance,
    /// `c_ε² = 1/∫ρ_ε χ_ε²` in the continuum.
    pub c_eps_squared: f64,
    /// Extra factor applied to normalize on the grid.
    pub grid_renormalization: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOptions {
    /// Lattice parameter; `None` selects `√(2π/ω₀)`.
    pub delta: Option<f64>,
    pub eta: f64,
}

impl Default for TrialOptions {
    fn default() -> Self {
        Self {
            delta: None,
            eta: DEFAULT_ETA,
        }
    }
}

/// `Ψ_ε = c_ε √ρ_ε χ_ε g_ε` sampled at the cell centres of `grid` and
/// normalized there.
///
/// `χ_ε` is sampled pointwise; when `ε^η` is far below the grid spacing it
/// equals 1 at every cell centre.
pub fn assemble_trial(
    tf: &TfSolution,
    epsilon: f64,
    omega0: f64,
    grid: Grid,
    options: &TrialOptions,
) -> Result<TrialState> {
    let density = regularized_tf_density(tf, epsilon)?;
    let lattice = if omega0 > 0.0 {
        build_vortex_lattice(omega0, epsilon, tf.r_out, options.delta, options.eta)?
    } else {
        VortexLattice {
            spacing: f64::INFINITY,
            delta: f64::INFINITY,
            eta: options.eta,
            clip_radius: 0.0,
            points: Vec::new(),
        }
    };
    let a = lattice.cutoff_radius(epsilon);
    // ∫ρ_ε(1 - χ²) over each disk: ρ_ε(site) · 2π ∫₀^a (1 - d²/a²) d dd.
    let removed: f64 = lattice
        .points
        .iter()
        .map(|&(x, y)| density.eval(x.hypot(y)) * 0.5 * PI * a * a)
        .sum();
    let c_eps_squared = 1.0 / (1.0 - removed);
    let c = c_eps_squared.sqrt();
    let values: Vec<C> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (x, y) = grid.point(k);
            let amp = c * density.eval(x.hypot(y)).sqrt();
            if amp == 0.0 {
                return C::new(0.0, 0.0);
            }
            if lattice.is_empty() {
                return C::new(amp, 0.0);
            }
            let (g, chi) = phase_and_cutoff(&lattice, epsilon, x, y);
            g * (amp * chi)
        })
        .collect();
    let omega = omega0 / epsilon;
    let mut state = GpState::new(grid, epsilon, omega, values)?;
    let before = state.norm_squared();
    state.normalize()?;
    let provenance = TrialProvenance {
        delta: lattice.delta,
        eta: lattice.eta,
        n_eps: lattice.len(),
        c_eps: c,
        smoothing: epsilon,
    };
    Ok(TrialState {
        state,
        lattice,
        density,
        provenance,
        c_eps_squared,
        grid_renormalization: before.sqrt().recip(),
    })
}

/// Energy of the assembled trial state: an upper bound on the discrete GP
/// ground-state energy for the same `(ε, ω, grid)`.
pub fn trial_energy_upper_bound(
    tf: &TfSolution,
    epsilon: f64,
    omega0: f64,
    grid: Grid,
    potential: &TrapPotential,
    options: &TrialOptions,
) -> Result<(TrialState, EnergyBreakdown)> {
    let trial = assemble_trial(tf, epsilon, omega0, grid, options)?;
    let f = GpFunctional::new(grid, epsilon, omega0 / epsilon, potential)?;
    let energy = f.energy(&trial.state)?;
    Ok((trial, energy))
}

/// Smooth bump `j(u) = C exp(-1/(1 - 4u²))` on `|u| < 1/2` with
/// `π ∫ j = 1`.
#[derive(Debug, Clone, Copy)]
pub struct Bump {
    scale: f64,
}

impl Bump {
    pub fn new() -> Self {
        let raw = integrate(
            Self::shape,
            -0.5,
            0.5,
            Tolerance::new(1e-15, 1e-14),
        )
        .value;
        Self {
            scale: 1.0 / (PI * raw),
        }
    }

    fn shape(u: f64) -> f64 {
        let w = 1.0 - 4.0 * u * u;
        if w <= 0.0 {
            0.0
        } else {
            (-1.0 / w).exp()
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.scale * Self::shape(u)
    }

    /// `d√j/du`.
    pub fn sqrt_derivative(&self, u: f64) -> f64 {
        let w = 1.0 - 4.0 * u * u;
        if w <= 0.0 {
            return 0.0;
        }
        // √j = √C exp(-1/(2w)), d/du = √j · (-(8u)/(2w²)).
        self.eval(u).sqrt() * (-4.0 * u / (w * w))
    }
}

impl Default for Bump {
    fn default() -> Self {
        Self::new()
    }
}

/// Scaled energy of the giant-vortex trial split as in
/// `Ẽ = ε² R_m^{-(s+2)} (K_radial + K_angular) + Ẽ^TF[ρ̃_ξ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GiantVortexComponents {
    /// `∫|∇√ρ̃_ξ|² dx`.
    pub kinetic_radial: f64,
    /// `∫ (n/x - ω R_m² x/2)² ρ̃_ξ dx`.
    pub kinetic_angular: f64,
    /// `ε² R_m^{-(s+2)}`.
    pub kinetic_prefactor: f64,
    /// `∫ (x^s - s x²/2) ρ̃_ξ dx`.
    pub potential: f64,
    /// `R_m^{-(s+2)} ∫ ρ̃_ξ² dx`.
    pub interaction: f64,
    pub scaled_energy: f64,
}

#[derive(Debug, Clone)]
pub struct GiantVortexTrial {
    pub xi: f64,
    pub winding: i64,
    pub r_m: f64,
    pub omega: f64,
    /// State in the scaled `r` variables, `Ψ(r) = Ψ̃(r/R_m)/R_m`.
    pub state: GpState,
    pub components: GiantVortexComponents,
}

/// `ξ` balancing the trial remainders: `ε^{2α(s+2)/(3(s-2))}` while
/// `α <= 3(s-2)/(s+2)`, and `√ε ε^{α(s+2)/(2(s-2))}` beyond.
pub fn optimal_xi(epsilon: f64, alpha: f64, s: f64) -> f64 {
    let q = (s + 2.0) / (s - 2.0);
    if alpha <= 3.0 * (s - 2.0) / (s + 2.0) {
        epsilon.powf(2.0 * alpha * q / 3.0)
    } else {
        epsilon.sqrt() * epsilon.powf(0.5 * alpha * q)
    }
}

fn check_giant_vortex(xi: f64, epsilon: f64, omega1: f64, alpha: f64, s: f64) -> Result<()> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(invalid_parameter(format!("xi must lie in (0, 1) (got {xi})")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid_parameter(format!("epsilon must lie in (0, 1) (got {epsilon})")));
    }
    if !(omega1 > 0.0 && alpha > 0.0 && s > 2.0) {
        return Err(invalid_parameter("need omega1 > 0, alpha > 0 and s > 2"));
    }
    Ok(())
}

struct GiantVortexProfile {
    bump: Bump,
    xi: f64,
    r_m: f64,
    omega: f64,
    flux: f64,
}

impl GiantVortexProfile {
    fn new(xi: f64, epsilon: f64, omega1: f64, alpha: f64, s: f64) -> Self {
        let omega0 = omega1 * epsilon.powf(-alpha);
        let omega = omega0 / epsilon;
        let r_m = density_max_radius(s, omega0);
        Self {
            bump: Bump::new(),
            xi,
            r_m,
            omega,
            flux: 0.5 * omega * r_m * r_m,
        }
    }

    fn winding(&self) -> i64 {
        self.flux.floor() as i64
    }

    fn rho(&self, x: f64) -> f64 {
        self.bump.eval((1.0 - x * x) / self.xi) / self.xi
    }

    fn components(&self, epsilon: f64, s: f64) -> GiantVortexComponents {
        let xi = self.xi;
        let lo = (1.0 - 0.5 * xi).sqrt();
        let hi = (1.0 + 0.5 * xi).sqrt();
        let tol = Tolerance::new(1e-15, 1e-12);
        let radial = |f: &dyn Fn(f64) -> f64| integrate(|x| 2.0 * PI * x * f(x), lo, hi, tol).value;
        // d√ρ̃/dx = ξ^{-1/2} (√j)'(u) · (-2x/ξ).
        let kinetic_radial = radial(&|x| {
            let u = (1.0 - x * x) / xi;
            let d = self.bump.sqrt_derivative(u) * (-2.0 * x / xi) / xi.sqrt();
            d * d
        });
        let n = self.winding() as f64;
        let kinetic_angular = radial(&|x| (n / x - self.flux * x).powi(2) * self.rho(x));
        let potential = radial(&|x| (x.powf(s) - 0.5 * s * x * x) * self.rho(x));
        let kappa = self.r_m.powf(-(s + 2.0));
        let interaction = kappa * radial(&|x| self.rho(x).powi(2));
        let kinetic_prefactor = epsilon * epsilon * kappa;
        GiantVortexComponents {
            kinetic_radial,
            kinetic_angular,
            kinetic_prefactor,
            potential,
            interaction,
            scaled_energy: kinetic_prefactor * (kinetic_radial + kinetic_angular)
                + potential
                + interaction,
        }
    }
}

/// Scaled energy components of the giant-vortex trial, by radial
/// quadrature.
pub fn giant_vortex_energy(
    xi: f64,
    epsilon: f64,
    omega1: f64,
    alpha: f64,
    s: f64,
) -> Result<GiantVortexComponents> {
    check_giant_vortex(xi, epsilon, omega1, alpha, s)?;
    Ok(GiantVortexProfile::new(xi, epsilon, omega1, alpha, s).components(epsilon, s))
}

/// `ξ` minimizing the scaled giant-vortex energy over `[0.01, 0.99]`
/// (golden-section search; the energy is unimodal in `ξ` in practice).
pub fn best_giant_vortex_xi(epsilon: f64, omega1: f64, alpha: f64, s: f64) -> Result<f64> {
    let f = |xi: f64| giant_vortex_energy(xi, epsilon, omega1, alpha, s).map(|c| c.scaled_energy);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.01, 0.99);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > 1e-6 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Giant-vortex trial `√ρ̃_ξ(x) e^{i[ωR_m²/2]θ}` for `ω = ω₁/ε^{1+α}`,
/// with `ρ̃_ξ(x) = ξ^{-1} j((1-x²)/ξ)`.
pub fn giant_vortex_trial(
    xi: f64,
    epsilon: f64,
    omega1: f64,
    alpha: f64,
    s: f64,
    grid: Grid,
) -> Result<GiantVortexTrial> {
    check_giant_vortex(xi, epsilon, omega1, alpha, s)?;
    let profile = GiantVortexProfile::new(xi, epsilon, omega1, alpha, s);
    let components = profile.components(epsilon, s);
    let (r_m, n) = (profile.r_m, profile.winding() as f64);
    let state = GpState::from_fn(grid, epsilon, profile.omega, |x, y| {
        let amp = profile.rho(x.hypot(y) / r_m).sqrt() / r_m;
        if amp == 0.0 {
            C::new(0.0, 0.0)
        } else {
            C::from_polar(amp, n * y.atan2(x))
        }
    })?;
    Ok(GiantVortexTrial {
        xi,
        winding: profile.winding(),
        r_m,
        omega: profile.omega,
        state,
        components,
    })
}

/// Scaled GP energy `ε² R_m^{-s} E` for the fast-rotation regime.
pub fn scaled_energy(epsilon: f64, r_m: f64, s: f64, energy: f64) -> f64 {
    epsilon * epsilon * r_m.powf(-s) * energy
}

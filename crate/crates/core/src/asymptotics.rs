//! Regime classification, ε-sweeps of the GP minimizer and rate fits
//! against the asymptotic error laws.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid_parameter, Error, Result};
use crate::gp::{
    density_l2_distance, tail_diagnostics, ConvergenceStatus, GpFunctional, GpState, Grid,
    MinimizeOptions, MinimizeOutcome,
};
use crate::potentials::TrapPotential;
use crate::tf::{density_max_radius, h_shifted, scaled_tf, solve_tf, ScaledTfSolution, TfSolution};
use crate::trial::{
    assemble_trial, best_giant_vortex_xi, giant_vortex_trial, TrialOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeKind {
    Sub,
    Linear,
    Super,
}

/// Bounds on `ω₀ = εω` separating the regimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeThresholds {
    pub sub: f64,
    pub sup: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self { sub: 0.1, sup: 10.0 }
    }
}

/// Classifies `(ε, ω)` by `ω₀ = εω`; returns the kind and `ω₀`.
pub fn classify_regime(
    epsilon: f64,
    omega: f64,
    thresholds: RegimeThresholds,
) -> Result<(RegimeKind, f64)> {
    check_epsilon(epsilon)?;
    if !(omega >= 0.0 && omega.is_finite()) {
        return Err(invalid_parameter(format!("omega must be finite and nonnegative (got {omega})")));
    }
    let omega0 = epsilon * omega;
    let kind = if omega0 < thresholds.sub {
        RegimeKind::Sub
    } else if omega0 > thresholds.sup {
        RegimeKind::Super
    } else {
        RegimeKind::Linear
    };
    Ok((kind, omega0))
}

/// `α` in `ω ∝ ε^{-(1+α)}` from two samples `(ε, ω)`.
pub fn estimate_alpha(a: (f64, f64), b: (f64, f64)) -> f64 {
    -(a.1 / b.1).ln() / (a.0 / b.0).ln() - 1.0
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid_parameter(format!("epsilon must lie in (0, 1) (got {epsilon})")));
    }
    Ok(())
}

/// How the rotation scales with `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Rotation {
    /// Fixed `ω`.
    Sub { omega: f64 },
    /// `ω = ω₀/ε`.
    Linear { omega0: f64 },
    /// `ω = ω₁/ε^{1+α}`.
    Super { omega1: f64, alpha: f64 },
}

impl Rotation {
    pub fn kind(&self) -> RegimeKind {
        match self {
            Rotation::Sub { .. } => RegimeKind::Sub,
            Rotation::Linear { .. } => RegimeKind::Linear,
            Rotation::Super { .. } => RegimeKind::Super,
        }
    }

    pub fn omega0(&self, epsilon: f64) -> f64 {
        match *self {
            Rotation::Sub { omega } => epsilon * omega,
            Rotation::Linear { omega0 } => omega0,
            Rotation::Super { omega1, alpha } => omega1 * epsilon.powf(-alpha),
        }
    }

    pub fn omega(&self, epsilon: f64) -> f64 {
        self.omega0(epsilon) / epsilon
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Rotation::Sub { omega } => omega >= 0.0 && omega.is_finite(),
            Rotation::Linear { omega0 } => omega0 > 0.0 && omega0.is_finite(),
            Rotation::Super { omega1, alpha } => {
                omega1 > 0.0 && omega1.is_finite() && alpha > 0.0 && alpha.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(invalid_parameter(format!("invalid rotation {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    #[serde(flatten)]
    pub rotation: Rotation,
    pub s: f64,
    pub epsilons: Vec<f64>,
}

impl RegimeSpec {
    pub fn validate(&self) -> Result<()> {
        self.rotation.validate()?;
        if !(self.s > 2.0 && self.s.is_finite()) {
            return Err(invalid_parameter(format!("trap exponent must satisfy s > 2 (got {})", self.s)));
        }
        if self.epsilons.len() < 3 {
            return Err(invalid_parameter(format!(
                "a sweep needs at least 3 values of epsilon (got {})",
                self.epsilons.len()
            )));
        }
        self.epsilons.iter().try_for_each(|&e| check_epsilon(e))
    }
}

/// Grid resolution as a function of `ε`: box `box_factor · R_out`, cell
/// size `ε / cells_per_epsilon`, clamped to `[min_n, max_n]` cells per
/// side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPolicy {
    pub box_factor: f64,
    pub cells_per_epsilon: f64,
    pub min_n: usize,
    pub max_n: usize,
}

impl Default for GridPolicy {
    fn default() -> Self {
        Self {
            box_factor: 2.0,
            cells_per_epsilon: 2.0,
            min_n: 128,
            max_n: 384,
        }
    }
}

impl GridPolicy {
    pub fn grid(&self, epsilon: f64, r_out: f64) -> Result<Grid> {
        if !(self.box_factor >= 1.0 && self.cells_per_epsilon > 0.0 && self.min_n <= self.max_n) {
            return Err(invalid_parameter(format!("invalid grid policy {self:?}")));
        }
        let box_radius = self.box_factor * r_out;
        let raw = (2.0 * box_radius * self.cells_per_epsilon / epsilon).ceil() as usize;
        let n = (raw + raw % 2).clamp(self.min_n, self.max_n);
        Grid::new(n + n % 2, box_radius)
    }
}

/// `∫(|x| - 1)²|Ψ̃|²` and the mass within `||x| - 1| <= shell`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    pub second_moment: f64,
    pub mass_in_shell: f64,
    pub shell: f64,
}

/// Exponent `β = min(4α(s+2)/(3(s-2)), 1 + α(s+2)/(s-2))` of the
/// fast-rotation energy remainder.
pub fn concentration_beta(alpha: f64, s: f64) -> f64 {
    let q = alpha * (s + 2.0) / (s - 2.0);
    (4.0 * q / 3.0).min(1.0 + q)
}

/// `Ψ̃(x) = R_m Ψ(R_m x)` on the correspondingly shrunk grid.
pub fn rescale_by_rm(state: &GpState, r_m: f64) -> Result<GpState> {
    if !(r_m > 0.0 && r_m.is_finite()) {
        return Err(invalid_parameter(format!("R_m must be positive (got {r_m})")));
    }
    let grid = Grid::new(state.grid.n, state.grid.box_radius / r_m)?;
    let values = state.values.iter().map(|v| v * r_m).collect();
    GpState::new(grid, state.epsilon, state.omega, values)
}

/// Concentration of an `R_m`-rescaled state around the unit circle, with
/// shell half-width `ε^{β/3}`.
pub fn delta_concentration_check(rescaled: &GpState, epsilon: f64, beta: f64) -> Concentration {
    let shell = epsilon.powf(beta / 3.0);
    let area = rescaled.grid.cell_area();
    let (mut second_moment, mut mass_in_shell) = (0.0, 0.0);
    for (k, v) in rescaled.values.iter().enumerate() {
        let d = rescaled.grid.radius(k) - 1.0;
        let rho = v.norm_sqr() * area;
        second_moment += d * d * rho;
        if d.abs() <= shell {
            mass_in_shell += rho;
        }
    }
    Concentration {
        second_moment,
        mass_in_shell,
        shell,
    }
}

/// `∫(|x| - 1)² ρ̃^TF` for the scaled TF density
/// `ρ̃^TF = (h(x_in) - h(x))₊ / (2κ)`, `κ = R_m^{-(s+2)}`.
pub fn tf_scaled_second_moment(sol: &ScaledTfSolution) -> f64 {
    let s = sol.s;
    let kappa = sol.r_m.powf(-(s + 2.0));
    let (a, b) = (sol.x_in - 1.0, sol.x_out - 1.0);
    let pts = [a, 0f64.clamp(a, b), b];
    let tol = crate::quadrature::Tolerance::new(0.0, 1e-12);
    PI / kappa
        * crate::quadrature::integrate_with_breaks(
            |u| u * u * (sol.level - h_shifted(s, u)).max(0.0) * (1.0 + u),
            &pts,
            tol,
        )
        .value
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    /// `y = C x^a`.
    Power,
    /// `y = C x^a |log x|`.
    PowerLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub model: RateModel,
    pub exponent: f64,
    pub stderr: f64,
    /// 95% Student-t interval for the exponent.
    pub ci95: (f64, f64),
    pub prefactor: f64,
    pub samples: usize,
    /// Set when the samples are not strictly monotone, e.g. constant.
    pub degenerate: bool,
}

/// Least-squares fit of `ln y` against `ln x` under `model`.
pub fn fit_rate(samples: &[(f64, f64)], model: RateModel) -> Result<RateFit> {
    if samples.len() < 3 {
        return Err(invalid_parameter(format!(
            "a rate fit needs at least 3 samples (got {})",
            samples.len()
        )));
    }
    let mut pts = Vec::with_capacity(samples.len());
    for &(x, y) in samples {
        if !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()) {
            return Err(invalid_parameter(format!("rate fit needs positive samples (got ({x}, {y}))")));
        }
        let lx = x.ln();
        let ly = match model {
            RateModel::Power => y.ln(),
            RateModel::PowerLog => {
                if lx == 0.0 {
                    return Err(invalid_parameter("power-log model is singular at x = 1"));
                }
                y.ln() - lx.abs().ln()
            }
        };
        pts.push((lx, ly, y.ln()));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(invalid_parameter("rate fit needs distinct abscissae"));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let dof = n - 2.0;
    let stderr = (ssr / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::Numerical(format!("t distribution: {e}")))?
        .inverse_cdf(0.975);
    let steps: Vec<f64> = pts.windows(2).map(|w| w[1].2 - w[0].2).collect();
    let scale = pts.iter().map(|p| p.2.abs()).fold(1.0, f64::max);
    let tol = 1e-9 * scale;
    let increasing = steps.iter().all(|&d| d > tol);
    let decreasing = steps.iter().all(|&d| d < -tol);
    Ok(RateFit {
        model,
        exponent: slope,
        stderr,
        ci95: (slope - t * stderr, slope + t * stderr),
        prefactor: intercept.exp(),
        samples: pts.len(),
        degenerate: !(increasing || decreasing),
    })
}

/// One `ε` of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub omega: f64,
    pub omega0: f64,
    pub grid_n: usize,
    /// Reference energy of the regime.
    pub e_tf: f64,
    /// GP energy in the units of the reference.
    pub e_gp_scaled: f64,
    pub gap: f64,
    /// Warm-start trial energy in the same units.
    pub e_trial_scaled: f64,
    /// `‖|Ψ|² - ρ^TF‖₂` against the TF density at this `ω₀` (the
    /// non-rotating one in the sub regime).
    pub l2_dist: f64,
    /// `max |Ψ|²` on `r >= R_out + ε^{1/3}`.
    pub tail_max: f64,
    pub outside_mass4: f64,
    pub concentration: Option<Concentration>,
    pub iterations: usize,
    pub status: Option<ConvergenceStatus>,
    pub valid: bool,
    pub error: Option<String>,
}

/// A single solve together with its final state.
#[derive(Debug, Clone)]
pub struct PointRun {
    pub row: SweepRow,
    pub outcome: MinimizeOutcome,
    /// TF solution the row is compared against.
    pub tf: TfSolution,
}

/// Scale factor taking `E^GP` to the units of the regime's reference:
/// `ε²` for sub and linear, `ε^{2 + 2αs/(s-2)}` for super.
pub fn energy_scale(rotation: &Rotation, s: f64, epsilon: f64) -> f64 {
    match *rotation {
        Rotation::Super { alpha, .. } => epsilon.powf(2.0 + 2.0 * alpha * s / (s - 2.0)),
        _ => epsilon * epsilon,
    }
}

/// Reference energy: `E^TF_*` (no rotation), `E^TF(ω₀)`, or
/// `(ω₁²/2s)^{s/(s-2)} (1 - s/2)`.
pub fn reference_energy(rotation: &Rotation, s: f64) -> Result<f64> {
    Ok(match *rotation {
        Rotation::Sub { .. } => solve_tf(s, 0.0)?.energy,
        Rotation::Linear { omega0 } => solve_tf(s, omega0)?.energy,
        Rotation::Super { omega1, .. } => {
            (omega1 * omega1 / (2.0 * s)).powf(s / (s - 2.0)) * (1.0 - 0.5 * s)
        }
    })
}

/// Initial state for `(rotation, ε)`: the vortex-lattice trial, and in the
/// super regime the giant vortex instead when its energy is lower.
pub fn warm_start(
    rotation: &Rotation,
    s: f64,
    epsilon: f64,
    grid: Grid,
    potential: &TrapPotential,
) -> Result<(GpState, f64)> {
    let omega0 = rotation.omega0(epsilon);
    let omega = rotation.omega(epsilon);
    let f = GpFunctional::new(grid, epsilon, omega, potential)?;
    let tf = solve_tf(s, omega0)?;
    let lattice = assemble_trial(&tf, epsilon, omega0, grid, &TrialOptions::default()).or_else(|_| {
        // Too few vortices fit: start from the vortex-free regularized profile.
        assemble_trial(&tf, epsilon, 0.0, grid, &TrialOptions::default()).map(|mut t| {
            t.state.omega = omega;
            t
        })
    })?;
    let mut best = (lattice.state, f64::INFINITY);
    best.1 = f.energy(&best.0)?.total;
    if let Rotation::Super { omega1, alpha } = *rotation {
        let xi = best_giant_vortex_xi(epsilon, omega1, alpha, s)?;
        let gv = giant_vortex_trial(xi, epsilon, omega1, alpha, s, grid)?;
        let e = f.energy(&gv.state)?.total;
        if e < best.1 {
            best = (gv.state, e);
        }
    }
    Ok(best)
}

/// Minimizer settings for sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub minimize: MinimizeOptions,
    /// The warm start is minimized after rotation by each of these angles
    /// and the lowest-energy result kept; vortex lattices have several
    /// nearby local minima.
    pub start_angles: Vec<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            minimize: MinimizeOptions::default(),
            start_angles: vec![0.0, 0.3],
        }
    }
}

/// Minimizes the GP functional at one `ε` from the regime's warm start (or
/// from `init` alone) and records the sweep diagnostics.
pub fn run_point(
    rotation: &Rotation,
    s: f64,
    epsilon: f64,
    policy: &GridPolicy,
    options: &SolveOptions,
    potential: &TrapPotential,
    init: Option<&GpState>,
) -> Result<PointRun> {
    rotation.validate()?;
    check_epsilon(epsilon)?;
    let omega0 = rotation.omega0(epsilon);
    let omega = rotation.omega(epsilon);
    let tf_here = solve_tf(s, omega0)?;
    let grid = match init {
        Some(state) => state.grid,
        None => policy.grid(epsilon, tf_here.r_out)?,
    };
    let functional = GpFunctional::new(grid, epsilon, omega, potential)?;
    let (start, e_start) = match init {
        Some(state) => (state.clone(), functional.energy(state)?.total),
        None => warm_start(rotation, s, epsilon, grid, potential)?,
    };
    let outcome = if init.is_some() || options.start_angles.is_empty() {
        functional.minimize(&start, &options.minimize)?
    } else {
        let mut best: Option<MinimizeOutcome> = None;
        for &angle in &options.start_angles {
            let rotated = if angle == 0.0 { start.clone() } else { start.rotated(angle)? };
            let run = functional.minimize(&rotated, &options.minimize)?;
            let better = best.as_ref().is_none_or(|b| {
                (run.converged(), -run.energy.total) > (b.converged(), -b.energy.total)
            });
            if better {
                best = Some(run);
            }
        }
        best.expect("at least one start angle")
    };
    let scale = energy_scale(rotation, s, epsilon);
    let e_tf = reference_energy(rotation, s)?;
    let tf = match rotation {
        Rotation::Sub { .. } => solve_tf(s, 0.0)?,
        _ => tf_here,
    };
    let tails = tail_diagnostics(&outcome.state, &tf);
    let concentration = match *rotation {
        Rotation::Super { alpha, .. } => {
            let r_m = density_max_radius(s, omega0);
            let rescaled = rescale_by_rm(&outcome.state, r_m)?;
            Some(delta_concentration_check(&rescaled, epsilon, concentration_beta(alpha, s)))
        }
        _ => None,
    };
    let e_gp_scaled = scale * outcome.energy.total;
    let row = SweepRow {
        epsilon,
        omega,
        omega0,
        grid_n: grid.n,
        e_tf,
        e_gp_scaled,
        gap: e_gp_scaled - e_tf,
        e_trial_scaled: scale * e_start,
        l2_dist: density_l2_distance(&outcome.state, &tf),
        tail_max: tails.max_density_out,
        outside_mass4: tails.outside_mass4,
        concentration,
        iterations: outcome.iterations,
        status: Some(outcome.status),
        valid: outcome.converged(),
        error: None,
    };
    Ok(PointRun { row, outcome, tf })
}

/// A fit of one sweep column with the exponents the theory predicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnFit {
    pub quantity: String,
    pub fit: RateFit,
    /// Predicted exponents; several when the theory leaves the dominant
    /// remainder open.
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub spec: RegimeSpec,
    pub policy: GridPolicy,
    /// Sorted by `ε` descending.
    pub rows: Vec<SweepRow>,
    pub fits: Vec<ColumnFit>,
    pub model: String,
}

impl SweepReport {
    pub fn valid_rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.valid)
    }

    /// CSV with columns `epsilon, e_tf, e_gp_scaled, gap, l2_dist,
    /// tail_max`, 17 significant digits; invalid rows are omitted.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epsilon", "e_tf", "e_gp_scaled", "gap", "l2_dist", "tail_max"])?;
        for r in self.valid_rows() {
            w.write_record(
                [r.epsilon, r.e_tf, r.e_gp_scaled, r.gap, r.l2_dist, r.tail_max].map(format_f64),
            )?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, csv_path: &Path, json_path: &Path) -> Result<()> {
        write_file(csv_path, &self.to_csv()?)?;
        write_file(json_path, &self.to_json()?)
    }
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    Ok(std::fs::File::create(path)?.write_all(text.as_bytes())?)
}

/// Full double precision: 17 significant digits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn failed_row(rotation: &Rotation, epsilon: f64, err: &Error) -> SweepRow {
    SweepRow {
        epsilon,
        omega: rotation.omega(epsilon),
        omega0: rotation.omega0(epsilon),
        grid_n: 0,
        e_tf: f64::NAN,
        e_gp_scaled: f64::NAN,
        gap: f64::NAN,
        e_trial_scaled: f64::NAN,
        l2_dist: f64::NAN,
        tail_max: f64::NAN,
        outside_mass4: f64::NAN,
        concentration: None,
        iterations: 0,
        status: None,
        valid: false,
        error: Some(err.to_string()),
    }
}

/// Runs every `ε` of `spec` concurrently and fits the gap and density
/// columns against the regime's error law.
pub fn run_sweep(
    spec: &RegimeSpec,
    policy: &GridPolicy,
    options: &SolveOptions,
) -> Result<SweepReport> {
    spec.validate()?;
    let potential = TrapPotential::homogeneous(spec.s)?;
    let mut rows: Vec<SweepRow> = spec
        .epsilons
        .par_iter()
        .map(|&eps| {
            run_point(&spec.rotation, spec.s, eps, policy, options, &potential, None)
                .map(|p| p.row)
                .unwrap_or_else(|e| failed_row(&spec.rotation, eps, &e))
        })
        .collect();
    rows.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));

    let s = spec.s;
    let valid: Vec<&SweepRow> = rows.iter().filter(|r| r.valid).collect();
    let column = |f: &dyn Fn(&SweepRow) -> f64| -> Vec<(f64, f64)> {
        valid.iter().map(|r| (r.epsilon, f(r))).collect()
    };
    let mut fits = Vec::new();
    let mut push = |quantity: &str, samples: Vec<(f64, f64)>, model, targets: Vec<f64>| {
        if let Ok(fit) = fit_rate(&samples, model) {
            fits.push(ColumnFit {
                quantity: quantity.to_string(),
                fit,
                targets,
            });
        }
    };
    let model = match spec.rotation {
        Rotation::Sub { .. } => {
            push("gap", column(&|r| r.gap), RateModel::Power, vec![2.0 / 3.0]);
            "gap = C eps^a against E_TF without rotation (bound a = 2/3)"
        }
        Rotation::Linear { .. } => {
            push("gap", column(&|r| r.gap), RateModel::PowerLog, vec![1.0]);
            push("l2_dist", column(&|r| r.l2_dist), RateModel::Power, vec![0.5]);
            "gap = C eps^a |log eps| against E_TF(omega0) (a = 1)"
        }
        Rotation::Super { alpha, .. } => {
            let q = alpha * (s + 2.0) / (s - 2.0);
            push("gap", column(&|r| r.gap), RateModel::Power, vec![4.0 * q / 3.0, 1.0 + q]);
            push(
                "second_moment",
                column(&|r| r.concentration.map_or(f64::NAN, |c| c.second_moment)),
                RateModel::Power,
                vec![],
            );
            "scaled gap = C eps^a against (omega1^2/2s)^(s/(s-2)) (1 - s/2)"
        }
    };
    Ok(SweepReport {
        spec: spec.clone(),
        policy: *policy,
        rows,
        fits,
        model: model.to_string(),
    })
}

/// Decay of `Ẽ^TF - (1 - s/2)` along increasing `ω₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfRateReport {
    pub s: f64,
    pub samples: Vec<(f64, f64)>,
    pub fit: RateFit,
    /// `-4(s+2)/(3(s-2))`.
    pub target: f64,
    /// Support half-width over its leading-order value at the largest `ω₀`.
    pub width_ratio: f64,
}

pub fn tf_rate_check(s: f64, omega0_list: &[f64]) -> Result<TfRateReport> {
    if omega0_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid_parameter("omega0 list must be strictly increasing"));
    }
    let omega_c = crate::tf::critical_velocity(s)?.omega_c;
    if let Some(&w) = omega0_list.iter().find(|&&w| !(w > omega_c)) {
        return Err(invalid_parameter(format!(
            "every omega0 must exceed the critical velocity {omega_c} (got {w})"
        )));
    }
    let sols = omega0_list
        .iter()
        .map(|&w| scaled_tf(s, w))
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<(f64, f64)> = sols.iter().map(|t| (t.omega0, t.energy_excess)).collect();
    let fit = fit_rate(&samples, RateModel::Power)?;
    let last = sols.last().ok_or_else(|| invalid_parameter("empty omega0 list"))?;
    let width_ratio =
        0.5 * (last.x_out - last.x_in) / crate::tf::hole_width_asymptote(s, last.omega0);
    Ok(TfRateReport {
        s,
        samples,
        fit,
        target: -4.0 * (s + 2.0) / (3.0 * (s - 2.0)),
        width_ratio,
    })
}

/// `ε² E` for `V` and for the pure `r^s` trap at the same `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityRow {
    pub epsilon: f64,
    pub e_pure_scaled: f64,
    pub e_general_scaled: f64,
    pub difference: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityReport {
    pub rows: Vec<HomogeneityRow>,
    pub fit: Option<RateFit>,
    /// `2κ/(s-2)`.
    pub target: f64,
}

/// Energy shift caused by replacing `r^s` with the asymptotically
/// homogeneous `V`, in the linear regime. Each `V` run starts from the
/// converged `r^s` state so that both runs share a vortex configuration.
pub fn homogeneity_sweep(
    potential: &TrapPotential,
    omega0: f64,
    epsilons: &[f64],
    policy: &GridPolicy,
    options: &SolveOptions,
) -> Result<HomogeneityReport> {
    potential.validate()?;
    let s = potential.s;
    let pure = TrapPotential::homogeneous(s)?;
    let rotation = Rotation::Linear { omega0 };
    rotation.validate()?;
    let mut rows = epsilons
        .par_iter()
        .map(|&eps| -> Result<HomogeneityRow> {
            let base = run_point(&rotation, s, eps, policy, options, &pure, None)?;
            let general = run_point(
                &rotation,
                s,
                eps,
                policy,
                options,
                potential,
                Some(&base.outcome.state),
            )?;
            let (a, b) = (base.row.e_gp_scaled, general.row.e_gp_scaled);
            Ok(HomogeneityRow {
                epsilon: eps,
                e_pure_scaled: a,
                e_general_scaled: b,
                difference: b - a,
                valid: base.row.valid && general.row.valid,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let samples: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.valid)
        .map(|r| (r.epsilon, r.difference.abs()))
        .collect();
    Ok(HomogeneityReport {
        fit: fit_rate(&samples, RateModel::Power).ok(),
        rows,
        target: 2.0 * potential.kappa / (s - 2.0),
    })
}

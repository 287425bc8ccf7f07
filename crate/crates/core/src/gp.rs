//! Discrete Gross-Pitaevskii functional in the rotating frame and its
//! minimization on the unit sphere.
//!
//! The field lives on a cell-centred `n × n` grid over `[-L, L]²` with zero
//! (Dirichlet) ghost cells outside. The magnetic kinetic term
//! `∫|(∇ - iA)Ψ|²`, `A = (ω/2)(-y, x)`, is discretized with link variables:
//! the phase carried across a grid link is the exact line integral of `A`
//! along it, so the discrete energy is gauge covariant and stays accurate
//! however large `ω h` is. The remaining terms use the midpoint rule.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_parameter, Error, Result};
use crate::potentials::TrapPotential;
use crate::tf::TfSolution;

type C = Complex64;

/// Cell-centred square grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub box_radius: f64,
}

impl Grid {
    pub fn new(n: usize, box_radius: f64) -> Result<Self> {
        if n < 16 || !n.is_multiple_of(2) {
            return Err(invalid_parameter(format!(
                "grid size must be even and at least 16 (got {n})"
            )));
        }
        if !(box_radius.is_finite() && box_radius > 0.0) {
            return Err(invalid_parameter(format!(
                "box radius must be positive (got {box_radius})"
            )));
        }
        Ok(Self { n, box_radius })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.box_radius / self.n as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing().powi(2)
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Coordinate of cell centre `i` along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        -self.box_radius + (i as f64 + 0.5) * self.spacing()
    }

    /// `(x, y)` of the flat index `j·n + i`.
    pub fn point(&self, index: usize) -> (f64, f64) {
        (self.coord(index % self.n), self.coord(index / self.n))
    }

    pub fn radius(&self, index: usize) -> f64 {
        let (x, y) = self.point(index);
        x.hypot(y)
    }

    fn same_as(&self, other: &Grid) -> bool {
        self.n == other.n && (self.box_radius - other.box_radius).abs() <= 1e-12 * self.box_radius
    }
}

/// Complex field on a grid together with the parameters it was computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct GpState {
    pub grid: Grid,
    pub epsilon: f64,
    pub omega: f64,
    /// Row-major: index `j·n + i` holds the value at `(coord(i), coord(j))`.
    pub values: Vec<C>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    n: usize,
    box_radius: f64,
    epsilon: f64,
    omega: f64,
    /// Interleaved real and imaginary parts, row-major.
    values: Vec<f64>,
}

impl GpState {
    pub fn new(grid: Grid, epsilon: f64, omega: f64, values: Vec<C>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid_parameter(format!("epsilon must be positive (got {epsilon})")));
        }
        if !(omega.is_finite() && omega >= 0.0) {
            return Err(invalid_parameter(format!("omega must be nonnegative (got {omega})")));
        }
        Ok(Self {
            grid,
            epsilon,
            omega,
            values,
        })
    }

    /// Samples `f(x, y)` at the cell centres and normalizes.
    pub fn from_fn<F: Fn(f64, f64) -> C + Sync>(
        grid: Grid,
        epsilon: f64,
        omega: f64,
        f: F,
    ) -> Result<Self> {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let (x, y) = grid.point(k);
                f(x, y)
            })
            .collect();
        let mut state = Self::new(grid, epsilon, omega, values)?;
        state.normalize()?;
        Ok(state)
    }

    /// Real state `√ρ^TF`, normalized on the grid.
    pub fn tf_seeded(grid: Grid, epsilon: f64, omega: f64, tf: &TfSolution) -> Result<Self> {
        Self::from_fn(grid, epsilon, omega, |x, y| C::new(tf.density(x.hypot(y)).sqrt(), 0.0))
    }

    /// `h² Σ |Ψ|²`.
    pub fn norm_squared(&self) -> f64 {
        self.grid.cell_area() * row_sums(self.grid.n, |j| {
            self.row(j).iter().map(|v| v.norm_sqr()).sum()
        })
    }

    pub fn normalize(&mut self) -> Result<()> {
        let norm2 = self.norm_squared();
        if !(norm2 > 0.0 && norm2.is_finite()) {
            return Err(Error::InvalidInput("cannot normalize a zero or non-finite field".into()));
        }
        let scale = norm2.sqrt().recip();
        self.values.iter_mut().for_each(|v| *v *= scale);
        Ok(())
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    fn row(&self, j: usize) -> &[C] {
        &self.values[j * self.grid.n..(j + 1) * self.grid.n]
    }

    /// Bilinear interpolation; zero outside the grid, matching the ghost cells.
    pub fn sample(&self, x: f64, y: f64) -> C {
        let n = self.grid.n;
        let h = self.grid.spacing();
        let fx = (x + self.grid.box_radius) / h - 0.5;
        let fy = (y + self.grid.box_radius) / h - 0.5;
        if !(fx > -1.0 && fy > -1.0 && fx < n as f64 && fy < n as f64) {
            return C::new(0.0, 0.0);
        }
        let i0 = fx.floor() as isize;
        let j0 = fy.floor() as isize;
        let wx = fx - i0 as f64;
        let wy = fy - j0 as f64;
        let at = |i: isize, j: isize| {
            if i < 0 || j < 0 || i >= n as isize || j >= n as isize {
                C::new(0.0, 0.0)
            } else {
                self.values[j as usize * n + i as usize]
            }
        };
        at(i0, j0) * ((1.0 - wx) * (1.0 - wy))
            + at(i0 + 1, j0) * (wx * (1.0 - wy))
            + at(i0, j0 + 1) * ((1.0 - wx) * wy)
            + at(i0 + 1, j0 + 1) * (wx * wy)
    }

    /// Interpolates onto another grid (not renormalized).
    pub fn resample(&self, grid: Grid) -> GpState {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let (x, y) = grid.point(k);
                self.sample(x, y)
            })
            .collect();
        GpState {
            grid,
            epsilon: self.epsilon,
            omega: self.omega,
            values,
        }
    }

    /// `Ψ(R_{-angle} r)` by interpolation, renormalized.
    pub fn rotated(&self, angle: f64) -> Result<GpState> {
        let (sin, cos) = angle.sin_cos();
        let values = (0..self.grid.len())
            .into_par_iter()
            .map(|k| {
                let (x, y) = self.grid.point(k);
                self.sample(cos * x + sin * y, -sin * x + cos * y)
            })
            .collect();
        let mut out = GpState::new(self.grid, self.epsilon, self.omega, values)?;
        out.normalize()?;
        Ok(out)
    }

    pub fn to_checkpoint_json(&self) -> Result<String> {
        let cp = Checkpoint {
            n: self.grid.n,
            box_radius: self.grid.box_radius,
            epsilon: self.epsilon,
            omega: self.omega,
            values: self.values.iter().flat_map(|v| [v.re, v.im]).collect(),
        };
        Ok(serde_json::to_string(&cp)?)
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_str(text)?;
        if !cp.values.len().is_multiple_of(2) {
            return Err(Error::InvalidInput("odd number of interleaved values".into()));
        }
        let values = cp.values.chunks(2).map(|p| C::new(p[0], p[1])).collect();
        GpState::new(Grid::new(cp.n, cp.box_radius)?, cp.epsilon, cp.omega, values)
    }

    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_checkpoint_json()?)?;
        Ok(())
    }

    pub fn read_checkpoint(path: &Path) -> Result<Self> {
        Self::from_checkpoint_json(&fs::read_to_string(path)?)
    }
}

/// Sums one value per row in parallel, then adds the rows in order so the
/// result does not depend on the thread count.
fn row_sums<F: Fn(usize) -> f64 + Sync + Send>(n: usize, f: F) -> f64 {
    let rows: Vec<f64> = (0..n).into_par_iter().map(f).collect();
    rows.iter().sum()
}

fn row_sums_array<const K: usize, F: Fn(usize) -> [f64; K] + Sync + Send>(n: usize, f: F) -> [f64; K] {
    let rows: Vec<[f64; K]> = (0..n).into_par_iter().map(f).collect();
    let mut acc = [0.0; K];
    for r in &rows {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub magnetic_kinetic: f64,
    pub potential: f64,
    pub interaction: f64,
    pub centrifugal: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn from_parts(magnetic_kinetic: f64, potential: f64, interaction: f64, centrifugal: f64) -> Self {
        Self {
            magnetic_kinetic,
            potential,
            interaction,
            centrifugal,
            total: magnetic_kinetic + potential + interaction + centrifugal,
        }
    }
}

/// The discrete functional for fixed grid, coupling, rotation and trap.
#[derive(Debug, Clone)]
pub struct GpFunctional {
    grid: Grid,
    epsilon: f64,
    omega: f64,
    inv_eps2: f64,
    /// `V(r)/ε²` per cell.
    trap: Vec<f64>,
    /// `-ω² r²/4` per cell.
    centrifugal: Vec<f64>,
    /// Link factor from `(i, j)` to `(i+1, j)`, one per row.
    link_x: Vec<C>,
    /// Link factor from `(i, j)` to `(i, j+1)`, one per column.
    link_y: Vec<C>,
}

impl GpFunctional {
    /// The trap enters in the scaled frame as `λ^{-s} V(λ r)` with
    /// `λ = ε^{-2/(s-2)}`, which is `r^s` for a homogeneous trap.
    pub fn new(grid: Grid, epsilon: f64, omega: f64, potential: &TrapPotential) -> Result<Self> {
        potential.validate()?;
        let v = potential.clone();
        let lambda = crate::potentials::general_length_scale(epsilon, v.s);
        Self::with_radial_potential(grid, epsilon, omega, move |r| v.rescaled(lambda, r))
    }

    /// Functional with an arbitrary radial trap `V(r)`.
    pub fn with_radial_potential<V: Fn(f64) -> f64 + Sync>(
        grid: Grid,
        epsilon: f64,
        omega: f64,
        potential: V,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid_parameter(format!("epsilon must be positive (got {epsilon})")));
        }
        if !(omega.is_finite() && omega >= 0.0) {
            return Err(invalid_parameter(format!("omega must be nonnegative (got {omega})")));
        }
        let inv_eps2 = 1.0 / (epsilon * epsilon);
        let h = grid.spacing();
        let trap: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|k| potential(grid.radius(k)) * inv_eps2)
            .collect();
        if trap.iter().any(|v| !v.is_finite()) {
            return Err(invalid_parameter("trap potential is not finite on the grid"));
        }
        let (centrifugal, link_x, link_y) = if omega == 0.0 {
            let one = C::new(1.0, 0.0);
            (vec![0.0; grid.len()], vec![one; grid.n], vec![one; grid.n])
        } else {
            let cent = (0..grid.len())
                .map(|k| -0.25 * omega * omega * grid.radius(k).powi(2))
                .collect();
            // exp(-i ∫ A·dl) with A = (ω/2)(-y, x).
            let lx = (0..grid.n)
                .map(|j| C::from_polar(1.0, 0.5 * omega * grid.coord(j) * h))
                .collect();
            let ly = (0..grid.n)
                .map(|i| C::from_polar(1.0, -0.5 * omega * grid.coord(i) * h))
                .collect();
            (cent, lx, ly)
        };
        Ok(Self {
            grid,
            epsilon,
            omega,
            inv_eps2,
            trap,
            centrifugal,
            link_x,
            link_y,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn check_state(&self, state: &GpState) -> Result<()> {
        if !self.grid.same_as(&state.grid) {
            return Err(Error::GridMismatch(format!(
                "state grid {:?} differs from functional grid {:?}",
                state.grid, self.grid
            )));
        }
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
        if !close(state.epsilon, self.epsilon) || !close(state.omega, self.omega) {
            return Err(Error::GridMismatch(format!(
                "state parameters (ε={}, ω={}) differ from functional (ε={}, ω={})",
                state.epsilon, state.omega, self.epsilon, self.omega
            )));
        }
        Ok(())
    }

    /// Energy components of `state`.
    pub fn energy(&self, state: &GpState) -> Result<EnergyBreakdown> {
        self.check_state(state)?;
        Ok(self.energy_of(&state.values))
    }

    pub fn energy_of(&self, psi: &[C]) -> EnergyBreakdown {
        let n = self.grid.n;
        let h2 = self.grid.cell_area();
        let [kin, pot, int, cent] = row_sums_array(n, |j| {
            let mut acc = [0.0; 4];
            let row = &psi[j * n..(j + 1) * n];
            let up = (j + 1 < n).then(|| &psi[(j + 1) * n..(j + 2) * n]);
            let lx = self.link_x[j];
            for i in 0..n {
                let a = row[i];
                let k = j * n + i;
                let ra = a.norm_sqr();
                let right = if i + 1 < n { row[i + 1] } else { C::new(0.0, 0.0) };
                let top = up.map_or(C::new(0.0, 0.0), |u| u[i]);
                acc[0] += (lx * right - a).norm_sqr() + (self.link_y[i] * top - a).norm_sqr();
                if i == 0 {
                    acc[0] += ra;
                }
                if j == 0 {
                    acc[0] += ra;
                }
                acc[1] += self.trap[k] * ra;
                acc[2] += ra * ra;
                acc[3] += self.centrifugal[k] * ra;
            }
            acc
        });
        EnergyBreakdown::from_parts(kin, h2 * pot, h2 * self.inv_eps2 * int, h2 * cent)
    }

    /// `out = H ψ`, the linear part of the Euler-Lagrange operator.
    pub fn apply_linear(&self, psi: &[C], out: &mut [C]) {
        let n = self.grid.n;
        let inv_h2 = 1.0 / self.grid.cell_area();
        let zero = C::new(0.0, 0.0);
        out.par_chunks_mut(n).enumerate().for_each(|(j, orow)| {
            let row = &psi[j * n..(j + 1) * n];
            let up = (j + 1 < n).then(|| &psi[(j + 1) * n..(j + 2) * n]);
            let down = (j > 0).then(|| &psi[(j - 1) * n..j * n]);
            let lx = self.link_x[j];
            let lxc = lx.conj();
            for i in 0..n {
                let right = if i + 1 < n { row[i + 1] } else { zero };
                let left = if i > 0 { row[i - 1] } else { zero };
                let ly = self.link_y[i];
                let top = up.map_or(zero, |u| u[i]);
                let bottom = down.map_or(zero, |d| d[i]);
                let hop = lx * right + lxc * left + ly * top + ly.conj() * bottom;
                let k = j * n + i;
                orow[i] = (row[i] * 4.0 - hop) * inv_h2
                    + row[i] * (self.trap[k] + self.centrifugal[k]);
            }
        });
    }

    /// Euclidean gradient `G` with `dE = Re Σ conj(G_k) dψ_k`.
    pub fn gradient(&self, psi: &[C]) -> Vec<C> {
        let mut out = vec![C::new(0.0, 0.0); psi.len()];
        self.apply_linear(psi, &mut out);
        let h2 = self.grid.cell_area();
        out.par_iter_mut().zip(psi.par_iter()).for_each(|(o, p)| {
            *o = (*o + *p * (2.0 * self.inv_eps2 * p.norm_sqr())) * (2.0 * h2);
        });
        out
    }

    /// `μ = E + ε^{-2} ∫|Ψ|⁴`.
    pub fn chemical_potential(&self, state: &GpState) -> Result<f64> {
        let e = self.energy(state)?;
        Ok(e.total + e.interaction)
    }

    /// `‖(H + 2ε^{-2}|Ψ|² - μ)Ψ‖₂` with `μ` from [`Self::chemical_potential`].
    pub fn residual_norm(&self, state: &GpState) -> Result<f64> {
        let mu = self.chemical_potential(state)?;
        let psi = &state.values;
        let mut hpsi = vec![C::new(0.0, 0.0); psi.len()];
        self.apply_linear(psi, &mut hpsi);
        let n = self.grid.n;
        let sum = row_sums(n, |j| {
            (j * n..(j + 1) * n)
                .map(|k| {
                    let p = psi[k];
                    (hpsi[k] + p * (2.0 * self.inv_eps2 * p.norm_sqr() - mu)).norm_sqr()
                })
                .sum()
        });
        Ok((self.grid.cell_area() * sum).sqrt())
    }

    /// Energy in the angular-momentum form
    /// `∫|∇Ψ|² - ω Ψ* L Ψ + |Ψ|²(V + |Ψ|²)/ε²`, with centred differences
    /// for `L = -i(x ∂_y - y ∂_x)`.
    pub fn angular_momentum_form_energy(&self, state: &GpState) -> Result<f64> {
        self.check_state(state)?;
        let n = self.grid.n;
        let h = self.grid.spacing();
        let h2 = h * h;
        let psi = &state.values;
        let zero = C::new(0.0, 0.0);
        let at = |i: isize, j: isize| {
            if i < 0 || j < 0 || i >= n as isize || j >= n as isize {
                zero
            } else {
                psi[j as usize * n + i as usize]
            }
        };
        let sum = row_sums(n, |j| {
            let mut acc = 0.0;
            for i in 0..n {
                let (ii, jj) = (i as isize, j as isize);
                let a = at(ii, jj);
                let k = j * n + i;
                // Forward links for |∇Ψ|², including the lower/left ghosts.
                acc += (at(ii + 1, jj) - a).norm_sqr() + (at(ii, jj + 1) - a).norm_sqr();
                if i == 0 {
                    acc += a.norm_sqr();
                }
                if j == 0 {
                    acc += a.norm_sqr();
                }
                let dx = (at(ii + 1, jj) - at(ii - 1, jj)) / (2.0 * h);
                let dy = (at(ii, jj + 1) - at(ii, jj - 1)) / (2.0 * h);
                let (x, y) = self.grid.point(k);
                let l_psi = (dy * x - dx * y) * C::new(0.0, -1.0);
                let rho = a.norm_sqr();
                acc += h2
                    * (-self.omega * (a.conj() * l_psi).re
                        + self.trap[k] * rho
                        + self.inv_eps2 * rho * rho);
            }
            acc
        });
        Ok(sum)
    }

    /// Largest pointwise excess of `ω|Ψ* LΨ|` over
    /// `|∇Ψ|² + ω² r² |Ψ|²/4` with centred differences; never positive up
    /// to rounding, by Cauchy-Schwarz.
    pub fn angular_momentum_bound_violation(&self, state: &GpState) -> Result<f64> {
        self.check_state(state)?;
        let n = self.grid.n;
        let h = self.grid.spacing();
        let psi = &state.values;
        let zero = C::new(0.0, 0.0);
        let at = |i: isize, j: isize| {
            if i < 0 || j < 0 || i >= n as isize || j >= n as isize {
                zero
            } else {
                psi[j as usize * n + i as usize]
            }
        };
        let rows: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut worst = f64::NEG_INFINITY;
                for i in 0..n {
                    let (ii, jj) = (i as isize, j as isize);
                    let a = at(ii, jj);
                    let dx = (at(ii + 1, jj) - at(ii - 1, jj)) / (2.0 * h);
                    let dy = (at(ii, jj + 1) - at(ii, jj - 1)) / (2.0 * h);
                    let (x, y) = self.grid.point(j * n + i);
                    let l_psi = (dy * x - dx * y) * C::new(0.0, -1.0);
                    let lhs = self.omega * (a.conj() * l_psi).norm();
                    let rhs = dx.norm_sqr()
                        + dy.norm_sqr()
                        + 0.25 * self.omega * self.omega * (x * x + y * y) * a.norm_sqr();
                    worst = worst.max(lhs - rhs);
                }
                worst
            })
            .collect();
        Ok(rows.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }
}

/// Energy of `state` for the trap `potential`, on the state's own grid.
pub fn gp_energy(state: &GpState, potential: &TrapPotential) -> Result<EnergyBreakdown> {
    GpFunctional::new(state.grid, state.epsilon, state.omega, potential)?.energy(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    /// Stop once the relative energy decrease per step stays below this.
    pub tolerance: f64,
    /// Number of consecutive small steps required.
    pub patience: usize,
    pub max_iterations: usize,
    /// Initial trial step of the line search.
    pub initial_step: f64,
    /// Recompute `Hψ` from scratch this often.
    pub refresh_every: usize,
    pub record_history: bool,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            patience: 5,
            max_iterations: 20_000,
            initial_step: 1e-3,
            refresh_every: 20,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceStatus {
    Converged,
    /// No step along the steepest-descent direction lowers the energy at
    /// machine precision.
    Stalled,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub state: GpState,
    pub energy: EnergyBreakdown,
    pub iterations: usize,
    pub status: ConvergenceStatus,
    pub chemical_potential: f64,
    pub residual_norm: f64,
    /// Largest `|‖ψ‖² - 1|` seen right after a step, before renormalization.
    pub max_norm_drift: f64,
    /// Largest relative energy increase over an accepted step.
    pub max_energy_increase: f64,
    /// Energy after every accepted step, when requested.
    pub history: Vec<f64>,
}

impl MinimizeOutcome {
    pub fn converged(&self) -> bool {
        self.status != ConvergenceStatus::MaxIterations
    }
}

/// Coefficients of the energy along `τ ↦ (ψ + τ d)/‖ψ + τ d‖`.
#[derive(Debug, Clone, Copy)]
struct LineCoefficients {
    quad: [f64; 3],
    norm: [f64; 2],
    quartic: [f64; 5],
}

impl LineCoefficients {
    fn energy(&self, t: f64) -> f64 {
        let nn = 1.0 + 2.0 * self.norm[0] * t + self.norm[1] * t * t;
        let q = self.quad[0] + 2.0 * self.quad[1] * t + self.quad[2] * t * t;
        let c = &self.quartic;
        let p = c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * c[4])));
        q / nn + p / (nn * nn)
    }

    fn norm_factor(&self, t: f64) -> f64 {
        1.0 + 2.0 * self.norm[0] * t + self.norm[1] * t * t
    }

    /// Approximate global minimizer over `t >= 0`: geometric scan around
    /// `guess`, then golden-section refinement of the best bracket.
    fn minimize(&self, guess: f64) -> (f64, f64) {
        let mut best_t = 0.0;
        let mut best_e = self.energy(0.0);
        let mut best_k: Option<i32> = None;
        for k in -40..=40 {
            let t = guess * 2f64.powi(k);
            let e = self.energy(t);
            if e < best_e {
                best_e = e;
                best_t = t;
                best_k = Some(k);
            }
        }
        let Some(k) = best_k else {
            return (0.0, best_e);
        };
        let mut lo = if k == -40 { 0.0 } else { guess * 2f64.powi(k - 1) };
        let mut hi = guess * 2f64.powi(k + 1);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = hi - phi * (hi - lo);
        let mut x2 = lo + phi * (hi - lo);
        let mut f1 = self.energy(x1);
        let mut f2 = self.energy(x2);
        for _ in 0..80 {
            if hi - lo <= 1e-10 * hi {
                break;
            }
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - phi * (hi - lo);
                f1 = self.energy(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + phi * (hi - lo);
                f2 = self.energy(x2);
            }
        }
        for (t, e) in [(x1, f1), (x2, f2)] {
            if e < best_e {
                best_e = e;
                best_t = t;
            }
        }
        (best_t, best_e)
    }
}

impl GpFunctional {
    fn weighted_re_dot(&self, a: &[C], b: &[C]) -> f64 {
        let n = self.grid.n;
        self.grid.cell_area()
            * row_sums(n, |j| {
                (j * n..(j + 1) * n).map(|k| (a[k].conj() * b[k]).re).sum()
            })
    }

    fn line_coefficients(&self, psi: &[C], hpsi: &[C], d: &[C], hd: &[C]) -> LineCoefficients {
        let n = self.grid.n;
        let h2 = self.grid.cell_area();
        let s = row_sums_array(n, |j| {
            let mut acc = [0.0; 10];
            for k in j * n..(j + 1) * n {
                let (p, dk) = (psi[k], d[k]);
                acc[0] += (p.conj() * hpsi[k]).re;
                acc[1] += (p.conj() * hd[k]).re;
                acc[2] += (dk.conj() * hd[k]).re;
                let pp = p.norm_sqr();
                let q = (p.conj() * dk).re;
                let r = dk.norm_sqr();
                acc[3] += q;
                acc[4] += r;
                acc[5] += pp * pp;
                acc[6] += 4.0 * pp * q;
                acc[7] += 4.0 * q * q + 2.0 * pp * r;
                acc[8] += 4.0 * q * r;
                acc[9] += r * r;
            }
            acc
        });
        let g = h2 * self.inv_eps2;
        LineCoefficients {
            quad: [h2 * s[0], h2 * s[1], h2 * s[2]],
            norm: [h2 * s[3], h2 * s[4]],
            quartic: [g * s[5], g * s[6], g * s[7], g * s[8], g * s[9]],
        }
    }

    /// Projects `v` onto the tangent space of the sphere at the normalized `psi`.
    fn project(&self, psi: &[C], v: &mut [C]) {
        let c = self.weighted_re_dot(psi, v);
        v.par_iter_mut().zip(psi.par_iter()).for_each(|(x, p)| *x -= *p * c);
    }

    /// Minimizes the energy on the unit sphere from `init`.
    ///
    /// Riemannian nonlinear conjugate gradients (Polak-Ribière+ with a
    /// diagonal preconditioner). Each step is a normalized move along the
    /// search direction, with the step length chosen by minimizing the
    /// energy along that curve exactly; the energy there is a rational
    /// function of the step with precomputed coefficients.
    pub fn minimize(&self, init: &GpState, opts: &MinimizeOptions) -> Result<MinimizeOutcome> {
        self.check_state(init)?;
        let len = self.grid.len();
        let n = self.grid.n;
        let h2 = self.grid.cell_area();
        let inv_h2 = 1.0 / h2;
        let zero = C::new(0.0, 0.0);

        let mut state = init.clone();
        state.normalize()?;
        let mut psi = state.values;
        let mut hpsi = vec![zero; len];
        self.apply_linear(&psi, &mut hpsi);

        let mut g = vec![zero; len];
        let mut z = vec![zero; len];
        let mut g_prev = vec![zero; len];
        let mut d = vec![zero; len];
        let mut hd = vec![zero; len];
        let mut zg_prev = 0.0;
        let mut have_prev = false;

        let quartic = |psi: &[C]| {
            h2 * self.inv_eps2
                * row_sums(n, |j| psi[j * n..(j + 1) * n].iter().map(|p| p.norm_sqr().powi(2)).sum())
        };
        let mut e_int = quartic(&psi);
        let mut energy = self.weighted_re_dot(&psi, &hpsi) + e_int;

        let mut step = opts.initial_step;
        let mut small_steps = 0;
        let mut iterations = 0;
        let mut status = ConvergenceStatus::MaxIterations;
        let mut max_norm_drift: f64 = 0.0;
        let mut max_energy_increase: f64 = 0.0;
        let mut history = Vec::new();

        while iterations < opts.max_iterations {
            let mu = energy + e_int;
            let inv_eps2 = self.inv_eps2;
            g.par_iter_mut()
                .zip(z.par_iter_mut())
                .enumerate()
                .for_each(|(k, (gk, zk))| {
                    let p = psi[k];
                    let rho = p.norm_sqr();
                    *gk = hpsi[k] + p * (2.0 * inv_eps2 * rho - mu);
                    let shift = self.trap[k] + self.centrifugal[k] - mu + 2.0 * inv_eps2 * rho;
                    *zk = *gk / (4.0 * inv_h2 + shift.max(0.0));
                });
            self.project(&psi, &mut z);
            let zg = self.weighted_re_dot(&z, &g);
            let mut beta = 0.0;
            if have_prev && zg_prev > 0.0 {
                let zgp = self.weighted_re_dot(&z, &g_prev);
                beta = ((zg - zgp) / zg_prev).max(0.0);
            }
            d.par_iter_mut().zip(z.par_iter()).for_each(|(dk, zk)| *dk = *dk * beta - *zk);
            self.project(&psi, &mut d);
            if beta > 0.0 && self.weighted_re_dot(&d, &g) >= 0.0 {
                beta = 0.0;
                d.par_iter_mut().zip(z.par_iter()).for_each(|(dk, zk)| *dk = -*zk);
            }

            let mut accepted = None;
            loop {
                self.apply_linear(&d, &mut hd);
                let coeffs = self.line_coefficients(&psi, &hpsi, &d, &hd);
                let (t, e_new) = coeffs.minimize(step);
                if t > 0.0 && e_new < energy {
                    accepted = Some((t, coeffs));
                    break;
                }
                if beta == 0.0 {
                    break;
                }
                beta = 0.0;
                d.par_iter_mut().zip(z.par_iter()).for_each(|(dk, zk)| *dk = -*zk);
            }
            let Some((t, coeffs)) = accepted else {
                status = ConvergenceStatus::Stalled;
                break;
            };
            iterations += 1;
            step = t;

            let scale = coeffs.norm_factor(t).sqrt().recip();
            psi.par_iter_mut()
                .zip(hpsi.par_iter_mut())
                .zip(d.par_iter().zip(hd.par_iter()))
                .for_each(|((p, hp), (dk, hdk))| {
                    *p = (*p + *dk * t) * scale;
                    *hp = (*hp + *hdk * t) * scale;
                });
            let norm2 = h2 * row_sums(n, |j| psi[j * n..(j + 1) * n].iter().map(|p| p.norm_sqr()).sum());
            max_norm_drift = max_norm_drift.max((norm2 - 1.0).abs());
            let renorm = norm2.sqrt().recip();
            psi.par_iter_mut()
                .zip(hpsi.par_iter_mut())
                .for_each(|(p, hp)| {
                    *p *= renorm;
                    *hp *= renorm;
                });
            if iterations % opts.refresh_every.max(1) == 0 {
                self.apply_linear(&psi, &mut hpsi);
            }
            e_int = quartic(&psi);
            let e_new = self.weighted_re_dot(&psi, &hpsi) + e_int;
            let change = (energy - e_new) / e_new.abs().max(f64::MIN_POSITIVE);
            max_energy_increase = max_energy_increase.max(-change);
            energy = e_new;
            if opts.record_history {
                history.push(energy);
            }

            std::mem::swap(&mut g, &mut g_prev);
            zg_prev = zg;
            have_prev = true;

            if change.abs() < opts.tolerance {
                small_steps += 1;
                if small_steps >= opts.patience {
                    status = ConvergenceStatus::Converged;
                    break;
                }
            } else {
                small_steps = 0;
            }
        }

        let state = GpState::new(self.grid, self.epsilon, self.omega, psi)?;
        let energy = self.energy(&state)?;
        let chemical_potential = energy.total + energy.interaction;
        let residual_norm = self.residual_norm(&state)?;
        Ok(MinimizeOutcome {
            state,
            energy,
            iterations,
            status,
            chemical_potential,
            residual_norm,
            max_norm_drift,
            max_energy_increase,
            history,
        })
    }
}

/// Minimizes the GP energy for a homogeneous or polynomial trap.
pub fn minimize_gp(
    potential: &TrapPotential,
    init: &GpState,
    options: &MinimizeOptions,
) -> Result<MinimizeOutcome> {
    GpFunctional::new(init.grid, init.epsilon, init.omega, potential)?.minimize(init, options)
}

/// `‖|Ψ|² - ρ^TF‖_{L²}` on the state's grid.
pub fn density_l2_distance(state: &GpState, tf: &TfSolution) -> f64 {
    let n = state.grid.n;
    let sum = row_sums(n, |j| {
        (j * n..(j + 1) * n)
            .map(|k| (state.values[k].norm_sqr() - tf.density(state.grid.radius(k))).powi(2))
            .sum()
    });
    (state.grid.cell_area() * sum).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailDiagnostics {
    /// `∫|Ψ|⁴` over the complement of the TF support.
    pub outside_mass4: f64,
    /// `max |Ψ|²` over `r >= R_out + ε^{1/3}`.
    pub max_density_out: f64,
    /// `max |Ψ|²` over `r <= R_in - ε^{1/3}`, when that region is nonempty.
    pub max_density_in: Option<f64>,
}

pub fn tail_diagnostics(state: &GpState, tf: &TfSolution) -> TailDiagnostics {
    let margin = state.epsilon.cbrt();
    let outer = tf.r_out + margin;
    let inner = tf.r_in - margin;
    let mut outside_mass4 = 0.0;
    let mut max_out: f64 = 0.0;
    let mut max_in: Option<f64> = None;
    for (k, v) in state.values.iter().enumerate() {
        let r = state.grid.radius(k);
        let rho = v.norm_sqr();
        if r < tf.r_in || r > tf.r_out {
            outside_mass4 += rho * rho;
        }
        if r >= outer {
            max_out = max_out.max(rho);
        }
        if tf.has_hole() && r <= inner {
            max_in = Some(max_in.unwrap_or(0.0).max(rho));
        }
    }
    TailDiagnostics {
        outside_mass4: outside_mass4 * state.grid.cell_area(),
        max_density_out: max_out,
        max_density_in: max_in,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, Tolerance};
    use crate::tf::solve_tf;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_state(grid: Grid, eps: f64, omega: f64, seed: u64) -> GpState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.len())
            .map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut st = GpState::new(grid, eps, omega, values).unwrap();
        st.normalize().unwrap();
        st
    }

    fn quartic() -> TrapPotential {
        TrapPotential::homogeneous(4.0).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(15, 1.0).is_err());
        assert!(Grid::new(8, 1.0).is_err());
        assert!(Grid::new(16, 0.0).is_err());
        let g = Grid::new(16, 2.0).unwrap();
        assert!((g.spacing() - 0.25).abs() < 1e-15);
        assert!((g.coord(0) + 1.875).abs() < 1e-15);
        assert!((g.coord(15) - 1.875).abs() < 1e-15);
    }

    #[test]
    fn nonrotating_real_state_has_plain_gradient_energy() {
        let grid = Grid::new(64, 3.0).unwrap();
        let st = GpState::from_fn(grid, 0.5, 0.0, |x, y| C::new((-(x * x + y * y)).exp(), 0.0))
            .unwrap();
        let e = gp_energy(&st, &quartic()).unwrap();
        assert_eq!(e.centrifugal, 0.0);
        // Plain forward-difference Dirichlet energy of the real samples.
        let n = grid.n;
        let at = |i: usize, j: usize| st.values[j * n + i].re;
        let mut k = 0.0;
        for j in 0..n {
            for i in 0..n {
                let a = at(i, j);
                let r = if i + 1 < n { at(i + 1, j) } else { 0.0 };
                let t = if j + 1 < n { at(i, j + 1) } else { 0.0 };
                k += (r - a).powi(2) + (t - a).powi(2);
                if i == 0 {
                    k += a * a;
                }
                if j == 0 {
                    k += a * a;
                }
            }
        }
        assert!((e.magnetic_kinetic - k).abs() < 1e-12 * k);
    }

    #[test]
    fn gaussian_energy_matches_radial_quadrature() {
        // Ψ = e^{-r²/(2σ²)}/(√π σ) e^{i m θ}-free Gaussian, ω > 0.
        let (eps, omega, sigma) = (0.7, 1.3, 0.6);
        let grid = Grid::new(256, 4.0).unwrap();
        let st = GpState::from_fn(grid, eps, omega, |x, y| {
            C::new((-(x * x + y * y) / (2.0 * sigma * sigma)).exp(), 0.0)
        })
        .unwrap();
        let e = gp_energy(&st, &quartic()).unwrap();
        let rho = |r: f64| (-(r * r) / (sigma * sigma)).exp() / (PI * sigma * sigma);
        let tol = Tolerance::new(1e-14, 1e-14);
        let radial = |f: &dyn Fn(f64) -> f64| integrate(|r| 2.0 * PI * r * f(r), 0.0, 12.0, tol).value;
        // |(∇ - iA)Ψ|² = |∇Ψ|² + |A|²|Ψ|² for real Ψ.
        let kin = radial(&|r| {
            let grad = r / (sigma * sigma);
            rho(r) * (grad * grad + 0.25 * omega * omega * r * r)
        });
        let pot = radial(&|r| r.powi(4) * rho(r)) / (eps * eps);
        let int = radial(&|r| rho(r).powi(2)) / (eps * eps);
        let cent = -0.25 * omega * omega * radial(&|r| r * r * rho(r));
        let total = kin + pot + int + cent;
        assert!((e.potential - pot).abs() / pot < 1e-4);
        assert!((e.magnetic_kinetic - kin).abs() / kin < 1e-3);
        assert!((e.total - total).abs() / total < 1e-3);
        // Second-order convergence: halving h cuts the error about fourfold.
        let fine = GpState::from_fn(Grid::new(512, 4.0).unwrap(), eps, omega, |x, y| {
            C::new((-(x * x + y * y) / (2.0 * sigma * sigma)).exp(), 0.0)
        })
        .unwrap();
        let e_fine = gp_energy(&fine, &quartic()).unwrap();
        let ratio = (e.total - total).abs() / (e_fine.total - total).abs();
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
        // Richardson extrapolation reaches 1e-6.
        let extrapolated = (4.0 * e_fine.total - e.total) / 3.0;
        assert!((extrapolated - total).abs() / total < 1e-6);
    }

    #[test]
    fn components_sum_to_total() {
        let grid = Grid::new(32, 2.0).unwrap();
        let st = random_state(grid, 0.3, 5.0, 3);
        let e = gp_energy(&st, &quartic()).unwrap();
        let sum = e.magnetic_kinetic + e.potential + e.interaction + e.centrifugal;
        assert!((sum - e.total).abs() <= 1e-9 * e.total.abs());
        assert!(e.magnetic_kinetic >= 0.0);
    }

    #[test]
    fn magnetic_and_angular_momentum_forms_agree_on_smooth_states() {
        let (eps, omega) = (0.5, 3.0);
        let errs: Vec<f64> = [128usize, 256]
            .iter()
            .map(|&n| {
                let grid = Grid::new(n, 3.5).unwrap();
                let st = GpState::from_fn(grid, eps, omega, |x, y| {
                    let r2 = x * x + y * y;
                    C::new(x + 0.3, y - 0.2 * x) * (-r2).exp()
                })
                .unwrap();
                let f = GpFunctional::new(grid, eps, omega, &quartic()).unwrap();
                let a = f.energy(&st).unwrap().total;
                let b = f.angular_momentum_form_energy(&st).unwrap();
                (a - b).abs() / a.abs()
            })
            .collect();
        assert!(errs[0] < 2e-3, "{errs:?}");
        assert!(errs[1] < 0.4 * errs[0], "{errs:?}");
    }

    #[test]
    fn gradient_matches_finite_differences_on_random_states() {
        for seed in 0..5 {
            let grid = Grid::new(16, 1.5).unwrap();
            let st = random_state(grid, 0.4, 6.0, seed);
            let f = GpFunctional::new(grid, 0.4, 6.0, &quartic()).unwrap();
            let grad = f.gradient(&st.values);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let dir: Vec<C> = (0..grid.len())
                .map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let t = 1e-5;
            let shifted = |s: f64| -> f64 {
                let v: Vec<C> = st.values.iter().zip(&dir).map(|(p, d)| p + d * s).collect();
                f.energy_of(&v).total
            };
            let fd = (shifted(t) - shifted(-t)) / (2.0 * t);
            let analytic: f64 = grad.iter().zip(&dir).map(|(g, d)| (g.conj() * d).re).sum();
            assert!((fd - analytic).abs() <= 1e-6 * analytic.abs(), "{fd} vs {analytic}");
        }
    }

    #[test]
    fn checkpoint_round_trip_and_mismatch() {
        let grid = Grid::new(16, 1.0).unwrap();
        let st = random_state(grid, 0.2, 1.0, 9);
        let text = st.to_checkpoint_json().unwrap();
        let back = GpState::from_checkpoint_json(&text).unwrap();
        assert_eq!(back, st);
        let f = GpFunctional::new(Grid::new(32, 1.0).unwrap(), 0.2, 1.0, &quartic()).unwrap();
        assert!(matches!(f.energy(&st), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn minimizer_nonrotating_converges_and_respects_tf_bound() {
        let eps = 0.1;
        let tf = solve_tf(4.0, 0.0).unwrap();
        let grid = Grid::new(96, 2.0 * tf.r_out).unwrap();
        let init = GpState::tf_seeded(grid, eps, 0.0, &tf).unwrap();
        let out = minimize_gp(&quartic(), &init, &MinimizeOptions::default()).unwrap();
        assert!(out.converged(), "{:?}", out.status);
        let scaled = eps * eps * out.energy.total;
        assert!(scaled >= tf.energy - 1e-6);
        assert!(scaled - tf.energy < 3.0 * eps.powf(2.0 / 3.0));
        assert!(out.chemical_potential >= out.energy.total);
        assert!(out.residual_norm < 1e-3 * out.chemical_potential, "{}", out.residual_norm);
        assert!(out.max_norm_drift < 1e-12);
        assert!(out.max_energy_increase <= 1e-12);
        assert!((out.state.norm_squared() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn minimizer_is_deterministic_and_monotone() {
        let grid = Grid::new(32, 2.5).unwrap();
        let init = random_state(grid, 0.3, 8.0, 11);
        let opts = MinimizeOptions {
            max_iterations: 200,
            refresh_every: 1,
            record_history: true,
            ..MinimizeOptions::default()
        };
        let a = minimize_gp(&quartic(), &init, &opts).unwrap();
        let b = minimize_gp(&quartic(), &init, &opts).unwrap();
        assert_eq!(a.state.values, b.state.values);
        assert_eq!(a.energy.total.to_bits(), b.energy.total.to_bits());
        for w in a.history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn rotation_covariance_of_smooth_converged_state() {
        let eps = 0.2;
        let tf = solve_tf(4.0, 1.0).unwrap();
        let omega = 1.0 / eps;
        let grid = Grid::new(128, 2.0 * tf.r_out).unwrap();
        let init = GpState::tf_seeded(grid, eps, omega, &tf).unwrap();
        let f = GpFunctional::new(grid, eps, omega, &quartic()).unwrap();
        let out = f.minimize(&init, &MinimizeOptions::default()).unwrap();
        let e0 = out.energy.total;
        for &angle in &[0.3, 1.0, 2.5] {
            let rot = out.state.rotated(angle).unwrap();
            let e = f.energy(&rot).unwrap().total;
            assert!((e - e0).abs() / e0.abs() < 1e-2, "angle {angle}: {e} vs {e0}");
        }
        assert!(f.angular_momentum_bound_violation(&out.state).unwrap() <= 1e-9);
    }

    #[test]
    fn tf_seed_has_no_outside_mass() {
        let tf = solve_tf(4.0, 4.0).unwrap();
        let grid = Grid::new(64, 2.0 * tf.r_out).unwrap();
        let st = GpState::tf_seeded(grid, 0.1, 40.0, &tf).unwrap();
        let tail = tail_diagnostics(&st, &tf);
        assert_eq!(tail.outside_mass4, 0.0);
        assert_eq!(tail.max_density_out, 0.0);
        assert_eq!(tail.max_density_in, Some(0.0));
        assert!(density_l2_distance(&st, &tf) < 0.05);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn angular_momentum_inequality_holds_pointwise(seed in 0u64..10_000, omega in 0.0f64..20.0) {
            let grid = Grid::new(16, 1.0).unwrap();
            let st = random_state(grid, 0.3, omega, seed);
            let f = GpFunctional::new(grid, 0.3, omega, &quartic()).unwrap();
            prop_assert!(f.angular_momentum_bound_violation(&st).unwrap() <= 1e-9);
        }

        #[test]
        fn energy_is_gauge_covariant_under_rotation_by_quarter_turn(seed in 0u64..10_000) {
            // Quarter turns map the grid onto itself, so no interpolation enters.
            let grid = Grid::new(16, 1.2).unwrap();
            let st = random_state(grid, 0.3, 7.0, seed);
            let n = grid.n;
            let mut rot = st.clone();
            for j in 0..n {
                for i in 0..n {
                    // (x, y) -> (-y, x): new(i, j) = old at (j, n-1-i)
                    rot.values[j * n + i] = st.values[(n - 1 - i) * n + j];
                }
            }
            let a = gp_energy(&st, &quartic()).unwrap().total;
            let b = gp_energy(&rot, &quartic()).unwrap().total;
            prop_assert!((a - b).abs() <= 1e-10 * a.abs());
        }
    }
}

//! Thomas-Fermi functional at fixed scaled rotation `omega0`.
//!
//! The minimizer is `rho(r) = ½[mu - r^s + omega0² r² / 4]_+`. Working in
//! `z = r²`, the bracket `f(z) = mu - z^{s/2} + t z` (`t = omega0²/4`) is
//! strictly concave, so the support is `[0, R_out]` below the critical
//! velocity and an annulus `[R_in, R_out]` above it.
//!
//! For `omega0 > 0` the profile is parametrized by its peak value
//! `F = f(z_m)` at `z_m = R_m²` and the relative offset `u = z/z_m - 1`:
//! `f = F - z_m^{s/2} φ(u)` with `φ(u) = (1+u)^{s/2} - 1 - (s/2)u`. In these
//! variables thin annuli (large `omega0`, or `s` close to 2) are resolved
//! without cancellation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_parameter, Error, Result};
use crate::quadrature::{integrate, integrate_with_breaks, Tolerance};

/// Solution of the TF problem for a given exponent and rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TfSolution {
    pub s: f64,
    pub omega0: f64,
    pub mu: f64,
    pub r_in: f64,
    pub r_out: f64,
    pub energy: f64,
    /// Peak value of the bracket at `R_m`, kept at full precision because
    /// `mu` alone fixes it only to `ulp(mu)`, which for thin annuli is far
    /// coarser than the peak height.
    #[serde(skip, default = "unset")]
    peak: f64,
}

fn unset() -> f64 {
    f64::NAN
}

/// Critical rotation for the appearance of a hole and the outer radius there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalVelocity {
    pub omega_c: f64,
    pub r_out_c: f64,
}

/// TF solution expressed in units of the density-maximum radius `R_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledTfSolution {
    pub s: f64,
    pub omega0: f64,
    pub x_in: f64,
    pub x_out: f64,
    pub mu_tilde: f64,
    pub energy_tilde: f64,
    /// `energy_tilde - (1 - s/2)`, computed without cancellation.
    pub energy_excess: f64,
    pub r_m: f64,
    /// Common level `h(x_in) = h(x_out) = mu_tilde + s/2 - 1`.
    pub level: f64,
}

fn check_exponent(s: f64) -> Result<()> {
    if !(s.is_finite() && s > 2.0) {
        return Err(invalid_parameter(format!(
            "trap exponent must satisfy s > 2 (got {s})"
        )));
    }
    Ok(())
}

fn check_omega0(omega0: f64) -> Result<()> {
    if !(omega0.is_finite() && omega0 >= 0.0) {
        return Err(invalid_parameter(format!(
            "rotation must be finite and nonnegative (got {omega0})"
        )));
    }
    Ok(())
}

/// `R_m = (omega0² / (2s))^{1/(s-2)}`.
pub fn density_max_radius(s: f64, omega0: f64) -> f64 {
    (omega0 * omega0 / (2.0 * s)).powf(1.0 / (s - 2.0))
}

// Kronrod error estimates bottom out near 1.1e-14 relative, so a tighter
// request would only exhaust the interval budget.
const TIGHT: Tolerance = Tolerance {
    abs: 0.0,
    rel: 1e-13,
    max_intervals: 2000,
};

/// The bracket `f(z)` in one of two parametrizations.
#[derive(Debug, Clone, Copy)]
enum Profile {
    /// `omega0 = 0`: `f(z) = mu - z^p`.
    Plain { p: f64, mu: f64 },
    /// `f = top - g φ(u)`, `z = z_m (1 + u)`, `g = z_m^p`.
    Centred { p: f64, z_m: f64, g: f64, top: f64 },
}

impl Profile {
    fn new(s: f64, omega0: f64, mu: f64) -> Self {
        let p = 0.5 * s;
        if omega0 == 0.0 {
            return Profile::Plain { p, mu };
        }
        let z_m = density_max_radius(s, omega0).powi(2);
        let g = z_m.powf(p);
        Profile::Centred {
            p,
            z_m,
            g,
            top: mu + (p - 1.0) * g,
        }
    }

    fn with_top(s: f64, omega0: f64, top: f64) -> Self {
        let p = 0.5 * s;
        let z_m = density_max_radius(s, omega0).powi(2);
        Profile::Centred {
            p,
            z_m,
            g: z_m.powf(p),
            top,
        }
    }

    fn mu(&self) -> f64 {
        match *self {
            Profile::Plain { mu, .. } => mu,
            Profile::Centred { p, g, top, .. } => top - (p - 1.0) * g,
        }
    }

    /// Support in the integration variable (`z` or `u`).
    fn support(&self) -> (f64, f64) {
        match *self {
            Profile::Plain { p, mu } => (0.0, mu.max(0.0).powf(1.0 / p)),
            Profile::Centred { p, g, top, .. } => {
                if top <= 0.0 {
                    return (0.0, 0.0);
                }
                let level = top / g;
                let f = |u: f64| (phi(p, u) - level, dphi(p, u));
                let guess = (2.0 * level / (p * (p - 1.0))).sqrt();
                let mut hi = (2.0 * guess).max(f64::MIN_POSITIVE);
                while f(hi).0 < 0.0 {
                    hi *= 2.0;
                }
                let u_out = bracketed_root(f, 0.0, hi);
                let u_in = if level >= p - 1.0 {
                    -1.0
                } else {
                    bracketed_root(f, -1.0, 0.0)
                };
                (u_in, u_out)
            }
        }
    }

    /// `(z_in, z_out)`; `z_in` is exactly 0 without a hole.
    fn z_support(&self) -> (f64, f64) {
        let (a, b) = self.support();
        match *self {
            Profile::Plain { .. } => (a, b),
            Profile::Centred { z_m, .. } => (z_m * (1.0 + a), z_m * (1.0 + b)),
        }
    }

    fn value(&self, v: f64) -> f64 {
        match *self {
            Profile::Plain { p, mu } => mu - v.powf(p),
            Profile::Centred { p, g, top, .. } => top - g * phi(p, v),
        }
    }

    /// `∫ f^k dz` over the support.
    fn moment(&self, k: i32) -> f64 {
        let (a, b) = self.support();
        let jac = match *self {
            Profile::Plain { .. } => 1.0,
            Profile::Centred { z_m, .. } => z_m,
        };
        let pts = [a, 0f64.clamp(a, b), b];
        jac * integrate_with_breaks(|v| self.value(v).max(0.0).powi(k), &pts, TIGHT).value
    }

    /// `∫ rho = (pi/2) ∫ f dz`.
    fn mass(&self) -> f64 {
        0.5 * PI * self.moment(1)
    }

    /// `∫ rho² = (pi/4) ∫ f² dz`.
    fn l2_squared(&self) -> f64 {
        0.25 * PI * self.moment(2)
    }

    fn density_at(&self, r: f64) -> f64 {
        let v = match *self {
            Profile::Plain { .. } => r * r,
            Profile::Centred { z_m, .. } => (r * r - z_m) / z_m,
        };
        0.5 * self.value(v).max(0.0)
    }
}

/// `φ(u) = (1+u)^p - 1 - p u`.
fn phi(p: f64, u: f64) -> f64 {
    (p * u.ln_1p()).exp_m1() - p * u
}

fn dphi(p: f64, u: f64) -> f64 {
    p * ((p - 1.0) * u.ln_1p()).exp_m1()
}

impl TfSolution {
    fn t(&self) -> f64 {
        0.25 * self.omega0 * self.omega0
    }

    fn profile(&self) -> Profile {
        if self.peak.is_finite() && self.omega0 > 0.0 {
            Profile::with_top(self.s, self.omega0, self.peak)
        } else {
            Profile::new(self.s, self.omega0, self.mu)
        }
    }

    /// Builds a solution from its chemical potential and radii.
    pub fn from_parts(s: f64, omega0: f64, mu: f64, r_in: f64, r_out: f64) -> Self {
        let mut sol = TfSolution {
            s,
            omega0,
            mu,
            r_in,
            r_out,
            energy: 0.0,
            peak: f64::NAN,
        };
        sol.energy = sol.energy_by_quadrature();
        sol
    }

    pub fn has_hole(&self) -> bool {
        self.r_in > 0.0
    }

    /// Radius of maximal density (0 without rotation).
    pub fn r_m(&self) -> f64 {
        if self.omega0 == 0.0 {
            0.0
        } else {
            density_max_radius(self.s, self.omega0)
        }
    }

    /// `½[mu - r^s + omega0² r²/4]_+`, exactly zero off `[r_in, r_out]`.
    pub fn density(&self, r: f64) -> f64 {
        if r < self.r_in || r > self.r_out {
            return 0.0;
        }
        self.profile().density_at(r)
    }

    /// Total mass, integrated in `z = r²`.
    pub fn mass(&self) -> f64 {
        self.profile().mass()
    }

    /// `‖rho‖₂²`, integrated in `z = r²`.
    pub fn density_l2_squared(&self) -> f64 {
        self.profile().l2_squared()
    }

    /// `mu - ‖rho‖₂²`, the second route to the TF energy.
    pub fn energy_from_mu(&self) -> f64 {
        self.mu - self.density_l2_squared()
    }

    /// Mass by adaptive quadrature in `r`.
    pub fn mass_by_quadrature(&self) -> f64 {
        integrate(
            |r| 2.0 * PI * r * self.density(r),
            self.r_in,
            self.r_out,
            Tolerance::new(1e-14, 1e-12),
        )
        .value
    }

    /// `∫ rho (r^s + rho) - (omega0² r²/4) rho` by adaptive quadrature in `r`.
    pub fn energy_by_quadrature(&self) -> f64 {
        let t = self.t();
        integrate(
            |r| {
                let rho = self.density(r);
                2.0 * PI * r * rho * (r.powf(self.s) + rho - t * r * r)
            },
            self.r_in,
            self.r_out,
            Tolerance::new(1e-14, 1e-12),
        )
        .value
    }
}

/// `tf_density` as a free function.
pub fn tf_density(sol: &TfSolution, r: f64) -> f64 {
    sol.density(r)
}

/// Safeguarded Newton iteration on a sign-changing bracket.
/// `f` returns the value and derivative.
pub(crate) fn bracketed_root<F: Fn(f64) -> (f64, f64)>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let (flo, _) = f(lo);
    if flo == 0.0 {
        return lo;
    }
    let (fhi, _) = f(hi);
    if fhi == 0.0 {
        return hi;
    }
    debug_assert!(flo.signum() != fhi.signum(), "root is not bracketed");
    let lo_negative = flo < 0.0;
    let mut x = 0.5 * (lo + hi);
    for _ in 0..300 {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return x;
        }
        if (fx < 0.0) == lo_negative {
            lo = x;
        } else {
            hi = x;
        }
        if (hi - lo).abs() <= 2.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        let newton = x - fx / dfx;
        let inside = newton.is_finite() && newton > lo.min(hi) && newton < lo.max(hi);
        let next = if inside { newton } else { 0.5 * (lo + hi) };
        if next == x {
            break;
        }
        x = next;
    }
    x
}

/// Solves the TF problem by bisection on the strictly increasing mass.
pub fn solve_tf(s: f64, omega0: f64) -> Result<TfSolution> {
    check_exponent(s)?;
    check_omega0(omega0)?;
    let profile = if omega0 == 0.0 {
        let r = (2.0 * (s + 2.0) / (PI * s)).powf(1.0 / (s + 2.0));
        Profile::Plain {
            p: 0.5 * s,
            mu: r.powf(s),
        }
    } else {
        let p = 0.5 * s;
        let g = density_max_radius(s, omega0).powi(2).powf(p);
        // d(mass)/d(top) = (pi/2) z_m |support in u|, as f = 0 at both ends.
        let mass = |top: f64| {
            let prof = Profile::with_top(s, omega0, top);
            let (a, b) = prof.support();
            let z_m = match prof {
                Profile::Centred { z_m, .. } => z_m,
                Profile::Plain { .. } => unreachable!(),
            };
            (prof.mass() - 1.0, 0.5 * PI * z_m * (b - a))
        };
        // Below the critical velocity the hole is excluded by construction,
        // so that the boundary case reports r_in = 0 exactly.
        let no_hole = omega0 <= critical_velocity(s)?.omega_c;
        let lo = if no_hole { (p - 1.0) * g } else { 0.0 };
        let top = if no_hole && mass(lo).0 >= 0.0 {
            lo
        } else {
            let mut width = lo.max(g).max(f64::MIN_POSITIVE);
            while mass(lo + width).0 < 0.0 {
                width *= 2.0;
            }
            bracketed_root(mass, lo, lo + width)
        };
        Profile::with_top(s, omega0, top)
    };
    let (z_in, z_out) = profile.z_support();
    let mut sol = TfSolution {
        s,
        omega0,
        mu: profile.mu(),
        r_in: z_in.sqrt(),
        r_out: z_out.sqrt(),
        energy: 0.0,
        peak: match profile {
            Profile::Centred { top, .. } => top,
            Profile::Plain { .. } => f64::NAN,
        },
    };
    sol.energy = sol.energy_from_mu();
    Ok(sol)
}

/// `omega_{0,c} = 2[4(s+2)/(pi(s-2))]^{(s-2)/(2(s+2))}`, `R_{out,c} = (omega_{0,c}/2)^{2/(s-2)}`.
pub fn critical_velocity(s: f64) -> Result<CriticalVelocity> {
    check_exponent(s)?;
    let base = 4.0 * (s + 2.0) / (PI * (s - 2.0));
    let omega_c = 2.0 * base.powf((s - 2.0) / (2.0 * (s + 2.0)));
    let r_out_c = (omega_c / 2.0).powf(2.0 / (s - 2.0));
    Ok(CriticalVelocity { omega_c, r_out_c })
}

/// Explicit quartic-trap (`s = 4`) solution.
pub fn quartic_closed_form(omega0: f64) -> Result<TfSolution> {
    check_omega0(omega0)?;
    let c = 12.0 / PI;
    let omega_c = 2.0 * c.powf(1.0 / 6.0);
    let w2 = omega0 * omega0;
    let w4 = w2 * w2;
    let (mu, r_in, r_out) = if omega0 <= omega_c {
        let w6 = w4 * w2;
        let q = 6144.0 + PI * w6 + 64.0 * 3f64.sqrt() * (3072.0 + PI * w6).sqrt();
        let a = (q / PI).cbrt();
        let b = w4 * (PI / q).cbrt();
        let bracket = 0.5 * a + 0.5 * b - 0.5 * w2;
        let mu = bracket * bracket / 64.0 - w4 / 64.0;
        let r_out = 0.25 * (a + b + w2).sqrt();
        (mu, 0.0, r_out)
    } else {
        let mu = 0.25 * c.powf(2.0 / 3.0) - w4 / 64.0;
        let r_in = (w2 / 8.0 - 0.5 * c.cbrt()).sqrt();
        let r_out = (w2 / 8.0 + 0.5 * c.cbrt()).sqrt();
        (mu, r_in, r_out)
    };
    Ok(TfSolution::from_parts(4.0, omega0, mu, r_in, r_out))
}

/// `h(1 + u) = (1+u)^s - (s/2)(1+u)² + s/2 - 1`, evaluated without
/// cancellation near `u = 0`.
pub(crate) fn h_shifted(s: f64, u: f64) -> f64 {
    let power_excess = if u == -1.0 {
        s - 1.0
    } else {
        (s * u.ln_1p()).exp_m1() - s * u
    };
    power_excess - 0.5 * s * u * u
}

/// `h'(1 + u) = s x (x^{s-2} - 1)` with `x = 1 + u`.
fn h_shifted_derivative(s: f64, u: f64) -> f64 {
    if u == -1.0 {
        return 0.0;
    }
    s * (1.0 + u) * ((s - 2.0) * u.ln_1p()).exp_m1()
}

/// TF solution in units of `R_m`, solved directly in the scaled variables
/// so that the approach `energy_tilde -> 1 - s/2` is resolved to full
/// relative precision at large `omega0`.
pub fn scaled_tf(s: f64, omega0: f64) -> Result<ScaledTfSolution> {
    check_exponent(s)?;
    check_omega0(omega0)?;
    if omega0 == 0.0 {
        return Err(invalid_parameter("scaled TF solution needs omega0 > 0"));
    }
    let lam = omega0 * omega0 / (2.0 * s);
    let r_m = lam.powf(1.0 / (s - 2.0));
    // Coefficient of the quadratic term in the scaled functional.
    let kappa = lam.powf(-(s + 2.0) / (s - 2.0));
    let target = kappa / PI;
    let h_zero = 0.5 * s - 1.0;

    let u_out = |level: f64| {
        let guess = (2.0 * level / (s * (s - 2.0))).sqrt();
        let mut hi = (2.0 * guess).max(f64::MIN_POSITIVE);
        while h_shifted(s, hi) < level {
            hi *= 2.0;
        }
        bracketed_root(
            |u| (h_shifted(s, u) - level, h_shifted_derivative(s, u)),
            0.0,
            hi,
        )
    };
    let u_in = |level: f64| {
        if level >= h_zero {
            -1.0
        } else {
            bracketed_root(
                |u| (h_shifted(s, u) - level, h_shifted_derivative(s, u)),
                -1.0,
                0.0,
            )
        }
    };
    let tol = Tolerance::new(0.0, 1e-13);
    let mass = |level: f64| {
        let (a, b) = (u_in(level), u_out(level));
        let pts = [a, 0f64.clamp(a, b), b];
        integrate_with_breaks(|u| (level - h_shifted(s, u)).max(0.0) * (1.0 + u), &pts, tol).value
    };

    let delta = hole_width_asymptote(s, omega0);
    let mut hi = (0.5 * s * (s - 2.0) * delta * delta).max(f64::MIN_POSITIVE);
    while mass(hi) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let level = if (mass(lo) - target).abs() <= (mass(hi) - target).abs() {
        lo
    } else {
        hi
    };
    let (a, b) = (u_in(level), u_out(level));
    let pts = [a, 0f64.clamp(a, b), b];
    let excess_integral = integrate_with_breaks(
        |u| {
            let h = h_shifted(s, u);
            (level - h).max(0.0) * (level + h) * (1.0 + u)
        },
        &pts,
        tol,
    )
    .value;
    let energy_excess = PI / (2.0 * kappa) * excess_integral;
    Ok(ScaledTfSolution {
        s,
        omega0,
        x_in: 1.0 + a,
        x_out: 1.0 + b,
        mu_tilde: level - h_zero,
        energy_tilde: (1.0 - 0.5 * s) + energy_excess,
        energy_excess,
        r_m,
        level,
    })
}

/// Leading-order half-width `delta` of the scaled support around `x = 1`.
///
/// Inserting `h(x) ≈ ½ s(s-2)(1-x)²` into the normalization
/// `∫(h(x_in) - h) x dx = κ/π` gives `(2/3) s(s-2) δ³ = κ/π`, i.e.
/// `δ = (3/(2π s(s-2)))^{1/3} (omega0²/(2s))^{-(s+2)/(3(s-2))}`.
pub fn hole_width_asymptote(s: f64, omega0: f64) -> f64 {
    let lam = omega0 * omega0 / (2.0 * s);
    (3.0 / (2.0 * PI * s * (s - 2.0))).cbrt() * lam.powf(-(s + 2.0) / (3.0 * (s - 2.0)))
}

/// Evaluates the TF functional on a radial density given as a closure,
/// integrating over the (sorted) `breakpoints`, outside of which the
/// density is taken to vanish.
pub fn tf_functional_eval<F: Fn(f64) -> f64>(
    density: F,
    breakpoints: &[f64],
    s: f64,
    omega0: f64,
) -> Result<f64> {
    check_exponent(s)?;
    check_omega0(omega0)?;
    if breakpoints.len() < 2 || breakpoints[0] < 0.0 {
        return Err(Error::InvalidInput(
            "radial breakpoints must start at r >= 0 and span an interval".into(),
        ));
    }
    let negative = std::cell::Cell::new(false);
    let rho = |r: f64| {
        let v = density(r);
        if v < 0.0 {
            negative.set(true);
        }
        v
    };
    let tol = Tolerance::new(1e-13, 1e-13);
    let mass = integrate_with_breaks(|r| 2.0 * PI * r * rho(r), breakpoints, tol).value;
    if negative.get() {
        return Err(Error::InvalidInput("density takes negative values".into()));
    }
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!(
            "density mass {mass} deviates from 1 by more than 1e-6"
        )));
    }
    let t = 0.25 * omega0 * omega0;
    Ok(integrate_with_breaks(
        |r| {
            let v = rho(r);
            2.0 * PI * r * v * (r.powf(s) + v - t * r * r)
        },
        breakpoints,
        tol,
    )
    .value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quartic_c() -> f64 {
        12.0 / PI
    }

    #[test]
    fn rejects_subquadratic_traps() {
        assert!(matches!(solve_tf(2.0, 1.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(solve_tf(1.5, 0.0), Err(Error::InvalidParameter(_))));
        assert!(critical_velocity(2.0).is_err());
        assert!(solve_tf(4.0, -1.0).is_err());
    }

    #[test]
    fn nonrotating_closed_form() {
        for &s in &[2.5, 3.0, 4.0, 6.0, 11.0] {
            let sol = solve_tf(s, 0.0).unwrap();
            let r_out = (2.0 * (s + 2.0) / (PI * s)).powf(1.0 / (s + 2.0));
            assert!((sol.r_out - r_out).abs() < 1e-12, "s={s}");
            assert!((sol.mu - r_out.powf(s)).abs() < 1e-12);
            assert_eq!(sol.r_in, 0.0);
        }
    }

    #[test]
    fn quartic_critical_point() {
        let cv = critical_velocity(4.0).unwrap();
        assert!((cv.omega_c - 2.0 * quartic_c().powf(1.0 / 6.0)).abs() < 1e-14);
        let sol = solve_tf(4.0, cv.omega_c).unwrap();
        assert_eq!(sol.r_in, 0.0);
        assert!((sol.r_out - quartic_c().powf(1.0 / 6.0)).abs() < 1e-10);
        assert!(sol.mu.abs() < 1e-12);
    }

    #[test]
    fn density_formula_above_critical() {
        let omega0 = 4.0;
        let sol = solve_tf(4.0, omega0).unwrap();
        for k in 0..50 {
            let r = sol.r_in + (sol.r_out - sol.r_in) * (k as f64 + 0.5) / 50.0;
            let closed = (omega0 * omega0 / 8.0 * (r * r - omega0 * omega0 / 16.0) - r.powi(4) / 2.0
                + quartic_c().powf(2.0 / 3.0) / 8.0)
                .max(0.0);
            assert!((sol.density(r) - closed).abs() < 1e-10);
        }
        assert_eq!(sol.density(sol.r_out + 1.0), 0.0);
        assert_eq!(sol.density(0.5 * sol.r_in), 0.0);
    }

    #[test]
    fn density_at_half_radius_matches_normalized_quadrature() {
        let sol = solve_tf(4.0, 1.0).unwrap();
        // Oracle: normalization by quadrature of the formula with this mu.
        let mass = integrate(
            |r| PI * r * (sol.mu - r.powi(4) + 0.25 * r * r).max(0.0),
            0.0,
            2.0,
            Tolerance::new(1e-13, 1e-13),
        );
        assert!((mass.value - 1.0).abs() < 1e-9);
        let expected = 0.5 * (sol.mu - 0.0625 + 0.0625);
        assert!((sol.density(0.5) - expected).abs() < 1e-15);
    }

    #[test]
    fn flat_trap_limit_of_critical_velocity() {
        let w = critical_velocity(1e4).unwrap().omega_c;
        let limit = 4.0 / PI.sqrt();
        assert!((w - limit).abs() / limit < 0.01);
    }

    #[test]
    fn critical_velocity_matches_hole_onset_bisection() {
        let s = 3.0;
        let (mut lo, mut hi) = (0.5, 6.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            // Hole onset is where the fitted mu changes sign.
            if solve_tf(s, mid).unwrap().mu > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let cv = critical_velocity(s).unwrap();
        assert!((0.5 * (lo + hi) - cv.omega_c).abs() < 1e-9);
        let above = solve_tf(s, cv.omega_c * (1.0 + 1e-6)).unwrap();
        assert!(above.r_in > 0.0);
        let below = solve_tf(s, cv.omega_c * (1.0 - 1e-6)).unwrap();
        assert_eq!(below.r_in, 0.0);
    }

    #[test]
    fn quartic_branches_agree_at_critical() {
        let omega_c = 2.0 * quartic_c().powf(1.0 / 6.0);
        let below = quartic_closed_form(omega_c).unwrap();
        let c = quartic_c();
        let mu_above = 0.25 * c.powf(2.0 / 3.0) - omega_c.powi(4) / 64.0;
        let r_out_above = (omega_c * omega_c / 8.0 + 0.5 * c.cbrt()).sqrt();
        assert!((below.mu - mu_above).abs() < 1e-12);
        assert!((below.r_out - r_out_above).abs() < 1e-12);
        assert_eq!(below.r_in, 0.0);
        assert!((omega_c * omega_c / 8.0 - 0.5 * c.cbrt()).abs() < 1e-14);
    }

    #[test]
    fn quartic_matches_general_solver() {
        for &w in &[0.0, 0.3, 1.0, 2.0, 2.5, 3.0, 4.0, 7.5] {
            let a = quartic_closed_form(w).unwrap();
            let b = solve_tf(4.0, w).unwrap();
            assert!((a.mu - b.mu).abs() < 1e-10, "w={w} {} {}", a.mu, b.mu);
            assert!((a.r_in - b.r_in).abs() < 1e-10, "w={w}");
            assert!((a.r_out - b.r_out).abs() < 1e-10, "w={w}");
            assert!((a.energy - b.energy).abs() < 1e-10);
        }
    }

    /// Thin annulus far out: reference from 60-digit quadrature of the same
    /// problem in `z = r²`.
    #[test]
    fn thin_annulus_energy_matches_high_precision_reference() {
        let sol = solve_tf(2.2, 6.42441686116150557).unwrap();
        let reference = -4947231694.3397174174;
        assert!(((sol.energy - reference) / reference).abs() < 1e-13);
        assert!(((sol.mu - -4947231694.339604828) / reference).abs() < 1e-13);
    }

    #[test]
    fn energy_routes_agree() {
        for &(s, w) in &[(3.0, 0.0), (3.0, 5.0), (4.0, 1.0), (4.0, 4.0), (6.0, 3.0), (8.0, 10.0)] {
            let sol = solve_tf(s, w).unwrap();
            assert!((sol.energy - sol.energy_by_quadrature()).abs() < 1e-9, "s={s} w={w}");
            assert!((sol.mass_by_quadrature() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn scaled_solution_matches_rescaled_direct_solution() {
        let (s, w) = (4.0, 10.0);
        let direct = solve_tf(s, w).unwrap();
        let scaled = scaled_tf(s, w).unwrap();
        let r_m = (w * w / 8.0).sqrt();
        assert!((scaled.r_m - r_m).abs() < 1e-12);
        assert!((scaled.x_in - direct.r_in / r_m).abs() < 1e-9);
        assert!((scaled.x_out - direct.r_out / r_m).abs() < 1e-9);
        let mu_tilde = direct.mu * (w * w / 8.0f64).powf(-2.0);
        assert!((scaled.mu_tilde - mu_tilde).abs() < 1e-9);
        let e_tilde = direct.energy * (w * w / 8.0f64).powf(-2.0);
        assert!((scaled.energy_tilde - e_tilde).abs() < 1e-9);
        // h(x_in) = h(x_out)
        let h = |x: f64| x.powf(s) - 0.5 * s * x * x + 0.5 * s - 1.0;
        assert!((h(scaled.x_in) - h(scaled.x_out)).abs() < 1e-8);
    }

    #[test]
    fn scaled_limits_at_large_rotation() {
        for &s in &[3.0, 4.0, 6.0] {
            let mut prev_gap = f64::INFINITY;
            for &w in &[10.0, 30.0, 100.0, 300.0] {
                let sc = scaled_tf(s, w).unwrap();
                assert!(-sc.mu_tilde < 0.5 * s - 1.0);
                assert!(sc.x_in < 1.0 && sc.x_out > 1.0);
                let gap = (sc.mu_tilde - (1.0 - 0.5 * s)).abs() + (sc.x_out - sc.x_in);
                assert!(gap < prev_gap);
                prev_gap = gap;
            }
            assert!(prev_gap < 0.05, "s={s}, gap {prev_gap}");
        }
    }

    #[test]
    fn hole_width_tracks_asymptote() {
        for &s in &[3.0, 4.0, 6.0] {
            let ratio = |w: f64| {
                let sc = scaled_tf(s, w).unwrap();
                (sc.x_out - sc.x_in) / (2.0 * hole_width_asymptote(s, w))
            };
            let near = ratio(20.0);
            let far = ratio(400.0);
            assert!((far - 1.0).abs() < (near - 1.0).abs().max(1e-3), "s={s}");
            assert!((far - 1.0).abs() < 0.02, "s={s} ratio {far}");
        }
    }

    #[test]
    fn support_area_exponent() {
        // pi (R_out² - R_in²) ~ omega0^{2(4-s)/(3(s-2))}
        for &s in &[3.0, 4.0, 6.0] {
            let area = |w: f64| {
                let sc = scaled_tf(s, w).unwrap();
                PI * sc.r_m * sc.r_m * (sc.x_out * sc.x_out - sc.x_in * sc.x_in)
            };
            let (w1, w2) = (200.0, 2000.0);
            let slope = (area(w2) / area(w1)).ln() / (w2 / w1).ln();
            let expected = 2.0 * (4.0 - s) / (3.0 * (s - 2.0));
            assert!((slope - expected).abs() < 0.02, "s={s}: {slope} vs {expected}");
        }
    }

    #[test]
    fn functional_on_minimizer_and_disk() {
        let sol = solve_tf(4.0, 2.0).unwrap();
        let e = tf_functional_eval(|r| sol.density(r), &[0.0, sol.r_out], 4.0, 2.0).unwrap();
        assert!((e - sol.energy).abs() < 1e-10);

        // Uniform disk of unit mass: closed-form integral.
        let (s, w, radius) = (4.0, 2.0, 1.3);
        let height = 1.0 / (PI * radius * radius);
        let e_disk = tf_functional_eval(|r| if r <= radius { height } else { 0.0 }, &[0.0, radius], s, w)
            .unwrap();
        let exact = 2.0 * radius.powf(s) / (s + 2.0) + height - 0.25 * w * w * radius * radius / 2.0;
        assert!((e_disk - exact).abs() < 1e-12);
        assert!(e_disk > sol.energy);
    }

    #[test]
    fn functional_rejects_bad_mass() {
        let err = tf_functional_eval(|_| 1.0, &[0.0, 1.0], 4.0, 0.0);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn solution_invariants(s in 2.2f64..10.0, scale in 0.0f64..3.0) {
            let omega_c = critical_velocity(s).unwrap().omega_c;
            let w = scale * omega_c;
            let sol = solve_tf(s, w).unwrap();
            prop_assert!(sol.r_in < sol.r_out);
            prop_assert!((sol.mass() - 1.0).abs() < 1e-10);
            prop_assert!((sol.mass_by_quadrature() - 1.0).abs() < 1e-10);
            // Sampling ρ at a radius r resolves the annulus only to ulp(r)/width.
            let e_quad = sol.energy_by_quadrature();
            let conditioning = f64::EPSILON * sol.r_out / (sol.r_out - sol.r_in);
            prop_assert!((sol.energy - e_quad).abs() <= (1e-11 + conditioning) * e_quad.abs().max(1.0));
            prop_assert_eq!(sol.r_in == 0.0, w <= omega_c);
            if sol.has_hole() {
                prop_assert!(sol.r_in < sol.r_m() && sol.r_m() < sol.r_out);
            }
            let mid = 0.5 * (sol.r_in + sol.r_out);
            prop_assert!(sol.density(mid) > 0.0);
        }
    }
}

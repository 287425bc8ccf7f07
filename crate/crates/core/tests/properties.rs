use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rotbec::asymptotics::{classify_regime, fit_rate, RateModel, RegimeKind, RegimeThresholds};
use rotbec::potentials::TrapPotential;
use rotbec::quadrature::{breakpoints, integrate_with_breaks, Tolerance};
use rotbec::tf::{critical_velocity, quartic_closed_form, solve_tf, tf_functional_eval};
use rotbec::trial::{build_vortex_lattice, regularized_tf_density};

/// Random admissible densities near the minimizer: smooth modulations of
/// `ρ^TF` and mixtures with a uniform annulus anywhere in `[0, 2R_out]`.
#[test]
fn tf_energy_is_minimal_among_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cases = [(4.0, 0.0), (4.0, 2.0), (4.0, 4.0), (3.0, 5.0)];
    let mut count = 0;
    for &(s, w) in &cases {
        let tf = solve_tf(s, w).unwrap();
        for _ in 0..250 {
            let (r1, r2) = {
                let a = rng.gen_range(0.0..2.0 * tf.r_out);
                let b = rng.gen_range(0.0..2.0 * tf.r_out);
                (a.min(b), a.max(b).max(a.min(b) + 1e-3))
            };
            let amp = rng.gen_range(-0.9..0.9);
            let k = rng.gen_range(0.5..6.0);
            let phase = rng.gen_range(0.0..2.0 * PI);
            let mix = rng.gen_range(0.0..0.5);
            let raw = |r: f64| {
                let modulated = tf.density(r) * (1.0 + amp * (k * PI * r / tf.r_out + phase).cos());
                let annulus = if (r1..=r2).contains(&r) { 1.0 / (PI * (r2 * r2 - r1 * r1)) } else { 0.0 };
                (1.0 - mix) * modulated + mix * annulus
            };
            let pts = breakpoints(0.0, 2.0 * tf.r_out, [tf.r_in, tf.r_out, r1, r2]);
            let tol = Tolerance::new(1e-14, 1e-13);
            let mass = integrate_with_breaks(|r| 2.0 * PI * r * raw(r), &pts, tol).value;
            let e = tf_functional_eval(|r| raw(r) / mass, &pts, s, w).unwrap();
            assert!(e >= tf.energy - 1e-9, "s={s} w={w}: {e} < {}", tf.energy);
            count += 1;
        }
    }
    assert_eq!(count, 1000);
}

#[test]
fn quartic_branches_agree_up_to_four_times_critical() {
    let wc = critical_velocity(4.0).unwrap().omega_c;
    for k in 0..=200 {
        let w = 4.0 * wc * k as f64 / 200.0;
        let (a, b) = (solve_tf(4.0, w).unwrap(), quartic_closed_form(w).unwrap());
        assert!((a.mu - b.mu).abs() < 1e-10, "w={w}");
        assert!((a.r_in - b.r_in).abs() < 1e-10, "w={w}");
        assert!((a.r_out - b.r_out).abs() < 1e-10, "w={w}");
    }
}

/// `ε‖∇√ρ_ε‖²` and `ε‖∇χ_ε‖²` stay bounded as `ε` decreases.
#[test]
fn trial_kinetic_budgets_are_order_one_over_epsilon() {
    let (s, w) = (4.0, 4.0);
    let tf = solve_tf(s, w).unwrap();
    let eps_list = [0.1, 0.05, 0.025, 0.0125];
    let mut density_budget = Vec::new();
    let mut cutoff_budget = Vec::new();
    for &eps in &eps_list {
        let rho = regularized_tf_density(&tf, eps).unwrap();
        density_budget.push(eps * rho.sqrt_gradient_norm_squared());
        let lattice = build_vortex_lattice(w, eps, tf.r_out, None, 3.0).unwrap();
        cutoff_budget.push(eps * lattice.cutoff_gradient_norm_squared());
    }
    for budget in [&density_budget, &cutoff_budget] {
        let hi = budget.iter().copied().fold(0.0, f64::max);
        let lo = budget.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(lo > 0.0 && hi / lo < 2.0, "{budget:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn tf_is_monotone_in_rotation(s in 2.5f64..8.0, a in 0.05f64..3.0, da in 1e-3f64..0.2) {
        let wc = critical_velocity(s).unwrap().omega_c;
        let (lo, hi) = (solve_tf(s, a * wc).unwrap(), solve_tf(s, (a + da) * wc).unwrap());
        prop_assert!(hi.mu < lo.mu);
        prop_assert!(hi.r_out > lo.r_out);
        prop_assert!(hi.r_in >= lo.r_in);
        if lo.has_hole() {
            prop_assert!(hi.r_in > lo.r_in);
        }
    }

    #[test]
    fn power_laws_are_recovered(a in -3.0f64..3.0, log_c in -3.0f64..3.0, decades in 1usize..4) {
        let n = 5 * decades + 1;
        let samples: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let x = 10f64.powf(-(k as f64) / 5.0);
                (x, log_c.exp() * x.powf(a))
            })
            .collect();
        prop_assume!(a.abs() > 1e-3);
        let fit = fit_rate(&samples, RateModel::Power).unwrap();
        prop_assert!((fit.exponent - a).abs() <= 0.01 * a.abs().max(1.0));
    }

    #[test]
    fn classification_depends_on_omega0_only(eps in 1e-4f64..0.999, omega0 in 0.1f64..10.0) {
        let (kind, w0) = classify_regime(eps, omega0 / eps, RegimeThresholds::default()).unwrap();
        prop_assert_eq!(kind, RegimeKind::Linear);
        prop_assert!((w0 - omega0).abs() <= 1e-12 * omega0);
    }

    #[test]
    fn homogeneous_rescaling_is_the_identity(s in 2.1f64..10.0, lambda in 1.0f64..1e3, r in 0.0f64..10.0) {
        let v = TrapPotential::homogeneous(s).unwrap();
        prop_assert_eq!(v.rescaled(lambda, r), v.evaluate(r));
    }
}

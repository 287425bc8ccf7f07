use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use rotbec::asymptotics::{
    energy_scale, format_f64, reference_energy, run_point, run_sweep, tf_rate_check, warm_start,
    RegimeSpec, Rotation, SolveOptions,
};
use rotbec::gp::{
    tail_diagnostics, ConvergenceStatus, EnergyBreakdown, GpFunctional, GpState, Grid,
};
use rotbec::potentials::{asym_homogeneity_check, default_lambdas, default_radii};
use rotbec::tf::{critical_velocity, quartic_closed_form, solve_tf, TfSolution};
use rotbec::trial::{best_giant_vortex_xi, giant_vortex_trial, trial_energy_upper_bound, TrialOptions};

use crate::config::RunConfig;
use crate::failure::Failure;

type Outcome = Result<(), Failure>;

fn write(dir: &Path, name: &str, text: &str) -> Outcome {
    fs::create_dir_all(dir)
        .and_then(|()| fs::write(dir.join(name), text))
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", dir.join(name).display())))
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable output")
}

/// CSV with a header and full-precision numeric rows.
fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Failure::Numerical(e.to_string());
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row.into_iter().map(format_f64)).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Numerical(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Records the resolved parameters next to the artifacts.
fn write_config(cfg: &RunConfig) -> Outcome {
    write(&cfg.out_dir(), "config.json", &cfg.emit())
}

pub fn tf(cfg: &RunConfig) -> Outcome {
    let sol = solve_tf(cfg.s()?, cfg.omega0()?)?;
    let n = 1000;
    let r_max = 1.5 * sol.r_out;
    let profile = (0..n).map(|k| {
        let r = r_max * k as f64 / (n - 1) as f64;
        vec![r, sol.density(r)]
    });
    let dir = cfg.out_dir();
    write(&dir, "tf.json", &json(&sol))?;
    write(&dir, "tf_profile.csv", &csv_table(&["r", "rho"], profile)?)?;
    println!("{}", json(&sol));
    Ok(())
}

pub fn critical(cfg: &RunConfig) -> Outcome {
    #[derive(Serialize)]
    struct Report {
        s: f64,
        omega_c: f64,
        r_out_c: f64,
    }
    let s = cfg.s()?;
    let c = critical_velocity(s)?;
    println!("{}", json(&Report { s, omega_c: c.omega_c, r_out_c: c.r_out_c }));
    Ok(())
}

pub fn quartic(cfg: &RunConfig) -> Outcome {
    #[derive(Serialize)]
    struct Report {
        closed_form: TfSolution,
        solver: TfSolution,
        max_deviation: f64,
    }
    let w = cfg.omega0()?;
    let closed_form = quartic_closed_form(w)?;
    let solver = solve_tf(4.0, w)?;
    let max_deviation = [
        closed_form.mu - solver.mu,
        closed_form.r_in - solver.r_in,
        closed_form.r_out - solver.r_out,
    ]
    .iter()
    .fold(0.0f64, |m, d| m.max(d.abs()));
    println!("{}", json(&Report { closed_form, solver, max_deviation }));
    Ok(())
}

#[derive(Serialize)]
struct GpSummary {
    s: f64,
    epsilon: f64,
    omega: f64,
    omega0: f64,
    grid_n: usize,
    box_radius: f64,
    energy: EnergyBreakdown,
    /// Energy in the units of the regime's reference.
    e_gp_scaled: f64,
    e_reference: f64,
    e_trial_scaled: Option<f64>,
    gap: f64,
    chemical_potential: f64,
    residual_norm: f64,
    iterations: usize,
    status: ConvergenceStatus,
    converged: bool,
}

fn random_state(grid: Grid, epsilon: f64, omega: f64, seed: u64) -> Result<GpState, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.len())
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let mut state = GpState::new(grid, epsilon, omega, values)?;
    state.normalize()?;
    Ok(state)
}

pub fn gp(cfg: &RunConfig) -> Outcome {
    let s = cfg.s()?;
    let eps = cfg.single_epsilon()?;
    let rotation = cfg.rotation()?;
    let potential = cfg.potential()?;
    let policy = cfg.policy();
    let (omega0, omega) = (rotation.omega0(eps), rotation.omega(eps));
    let init = match cfg.init.as_deref() {
        None | Some("trial") => None,
        Some("random") => {
            let grid = policy.grid(eps, solve_tf(s, omega0)?.r_out)?;
            Some(random_state(grid, eps, omega, cfg.seed.unwrap_or(0))?)
        }
        Some(path) => Some(
            GpState::read_checkpoint(Path::new(path))
                .map_err(|e| Failure::Usage(format!("cannot load checkpoint {path}: {e}")))?,
        ),
    };
    let run = run_point(&rotation, s, eps, &policy, &SolveOptions::default(), &potential, init.as_ref())?;
    let grid = run.outcome.state.grid;
    let scale = energy_scale(&rotation, s, eps);
    let e_trial_scaled = if omega == 0.0 {
        None
    } else if init.is_none() {
        Some(run.row.e_trial_scaled)
    } else {
        Some(scale * warm_start(&rotation, s, eps, grid, &potential)?.1)
    };
    let summary = GpSummary {
        s,
        epsilon: eps,
        omega,
        omega0,
        grid_n: grid.n,
        box_radius: grid.box_radius,
        energy: run.outcome.energy,
        e_gp_scaled: run.row.e_gp_scaled,
        e_reference: reference_energy(&rotation, s)?,
        e_trial_scaled,
        gap: run.row.gap,
        chemical_potential: run.outcome.chemical_potential,
        residual_norm: run.outcome.residual_norm,
        iterations: run.outcome.iterations,
        status: run.outcome.status,
        converged: run.outcome.converged(),
    };
    let state = &run.outcome.state;
    let diameter = (0..grid.n).map(|i| {
        let x = grid.coord(i);
        vec![x, state.sample(x, 0.0).norm_sqr(), run.tf.density(x.abs())]
    });
    let dir = cfg.out_dir();
    write_config(cfg)?;
    write(&dir, "checkpoint.json", &state.to_checkpoint_json()?)?;
    write(&dir, "energy.json", &json(&summary))?;
    write(&dir, "diameter.csv", &csv_table(&["x", "density", "tf_density"], diameter)?)?;
    write(&dir, "tails.json", &json(&tail_diagnostics(state, &run.tf)))?;

    let (lower, scaled) = match rotation {
        Rotation::Super { .. } => ("E_lim", "eps^pE"),
        _ => ("E_TF", "eps²E"),
    };
    match summary.e_trial_scaled {
        Some(t) => println!(
            "{lower} ≤ {scaled}_GP ≤ {scaled}_trial: {} ≤ {} ≤ {}",
            summary.e_reference, summary.e_gp_scaled, t
        ),
        None => println!("{lower} ≤ {scaled}_GP: {} ≤ {}", summary.e_reference, summary.e_gp_scaled),
    }
    println!(
        "grid {}x{}, {} iterations, status {:?}",
        grid.n, grid.n, summary.iterations, summary.status
    );
    if summary.converged {
        Ok(())
    } else {
        Err(Failure::Numerical(format!(
            "minimizer did not converge ({:?}); artifacts in {}",
            summary.status,
            dir.display()
        )))
    }
}

pub fn trial(cfg: &RunConfig) -> Outcome {
    let s = cfg.s()?;
    let eps = cfg.single_epsilon()?;
    let rotation = cfg.rotation()?;
    let potential = cfg.potential()?;
    let omega0 = rotation.omega0(eps);
    let tf = solve_tf(s, omega0)?;
    let grid = cfg.policy().grid(eps, tf.r_out)?;
    let f = GpFunctional::new(grid, eps, rotation.omega(eps), &potential)?;
    let scale = energy_scale(&rotation, s, eps);
    let dir = cfg.out_dir();
    write_config(cfg)?;
    if let Rotation::Super { omega1, alpha } = rotation {
        #[derive(Serialize)]
        struct Report {
            xi: f64,
            winding: i64,
            r_m: f64,
            omega: f64,
            components: rotbec::trial::GiantVortexComponents,
            energy: EnergyBreakdown,
            e_trial_scaled: f64,
            e_reference: f64,
        }
        let xi = best_giant_vortex_xi(eps, omega1, alpha, s)?;
        let gv = giant_vortex_trial(xi, eps, omega1, alpha, s, grid)?;
        let energy = f.energy(&gv.state)?;
        let report = Report {
            xi,
            winding: gv.winding,
            r_m: gv.r_m,
            omega: gv.omega,
            components: gv.components,
            energy,
            e_trial_scaled: scale * energy.total,
            e_reference: reference_energy(&rotation, s)?,
        };
        write(&dir, "giant_vortex.json", &json(&report))?;
        println!("{}", json(&report));
        return Ok(());
    }
    #[derive(Serialize)]
    struct Report {
        epsilon: f64,
        omega0: f64,
        grid_n: usize,
        vortices: usize,
        spacing: f64,
        provenance: rotbec::trial::TrialProvenance,
        c_eps_squared: f64,
        energy: EnergyBreakdown,
        e_trial_scaled: f64,
        e_tf: f64,
    }
    let (trial, energy) =
        trial_energy_upper_bound(&tf, eps, omega0, grid, &potential, &TrialOptions::default())?;
    let report = Report {
        epsilon: eps,
        omega0,
        grid_n: grid.n,
        vortices: trial.lattice.len(),
        spacing: trial.lattice.spacing,
        provenance: trial.provenance,
        c_eps_squared: trial.c_eps_squared,
        energy,
        e_trial_scaled: scale * energy.total,
        e_tf: reference_energy(&rotation, s)?,
    };
    let sites = trial.lattice.points.iter().map(|&(x, y)| vec![x, y]);
    write(&dir, "trial.json", &json(&report))?;
    write(&dir, "lattice.csv", &csv_table(&["x", "y"], sites)?)?;
    println!("{}", json(&report));
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> Outcome {
    let s = cfg.s()?;
    let dir = cfg.out_dir();
    if cfg.epsilon.is_empty() && !cfg.omega0_list.is_empty() {
        let report = tf_rate_check(s, &cfg.omega0_list)?;
        let rows = report.samples.iter().map(|&(w, e)| vec![w, e]);
        write_config(cfg)?;
        write(&dir, "tf_rate.json", &json(&report))?;
        write(&dir, "tf_rate.csv", &csv_table(&["omega0", "energy_excess"], rows)?)?;
        println!(
            "energy_excess: exponent {:.6} ± {:.2e} (target {:.6}), width ratio {:.6}",
            report.fit.exponent, report.fit.stderr, report.target, report.width_ratio
        );
        return Ok(());
    }
    if cfg.epsilon.is_empty() {
        return Err(Failure::Usage("the epsilon list is empty".into()));
    }
    let spec = RegimeSpec {
        rotation: cfg.rotation()?,
        s,
        epsilons: cfg.epsilon.clone(),
    };
    let report = run_sweep(&spec, &cfg.policy(), &SolveOptions::default())?;
    write_config(cfg)?;
    report.write(&dir.join("sweep.csv"), &dir.join("sweep.json"))?;
    println!("{}", report.model);
    for row in &report.rows {
        match &row.error {
            Some(e) => println!("eps {}: failed ({e})", row.epsilon),
            None => println!(
                "eps {}: gap {:.6e}, {} iterations, {}",
                row.epsilon,
                row.gap,
                row.iterations,
                if row.valid { "converged" } else { "not converged" }
            ),
        }
    }
    for fit in &report.fits {
        println!(
            "{}: exponent {:.4} ± {:.2e}, 95% CI [{:.4}, {:.4}], targets {:?}{}",
            fit.quantity,
            fit.fit.exponent,
            fit.fit.stderr,
            fit.fit.ci95.0,
            fit.fit.ci95.1,
            fit.targets,
            if fit.fit.degenerate { " (non-monotone data)" } else { "" }
        );
    }
    let valid = report.valid_rows().count();
    if valid < 3 {
        return Err(Failure::Numerical(format!(
            "only {valid} valid rows; at least 3 are needed for a rate fit"
        )));
    }
    Ok(())
}

pub fn check_potential(cfg: &RunConfig) -> Outcome {
    let v = cfg.potential()?;
    let report = asym_homogeneity_check(&v, &default_lambdas(), &default_radii())?;
    println!("{}", json(&report));
    if report.holds {
        println!("holds (worst ratio {})", report.worst_ratio);
    } else {
        println!(
            "fails: ratio {} at lambda = {}, r = {}",
            report.worst_ratio, report.worst_lambda, report.worst_r
        );
    }
    Ok(())
}

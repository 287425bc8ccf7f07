use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rotbec::tf::solve_tf;
use serde_json::Value;

fn rotbec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rotbec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Stdout up to the first line that is not part of the JSON document.
fn leading_json(o: &Output) -> Value {
    let text = stdout(o);
    let end = text.find("\n}\n").map_or(text.len(), |i| i + 2);
    serde_json::from_str(&text[..end]).unwrap()
}

#[test]
fn tf_at_the_critical_rotation_has_no_hole() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = rotbec(&["tf", "--s", "4", "--omega0", "2.5004", "--out", out]);
    assert!(o.status.success());
    let sol = read_json(&dir.path().join("tf.json"));
    assert_eq!(sol["r_in"].as_f64(), Some(0.0));
    let mut keys: Vec<&str> = sol.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["energy", "mu", "omega0", "r_in", "r_out", "s"]);

    let csv = fs::read_to_string(dir.path().join("tf_profile.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "r,rho");
    assert_eq!(lines.len(), 1001);
    let last: Vec<f64> = lines[1000].split(',').map(|x| x.parse().unwrap()).collect();
    let r_out = sol["r_out"].as_f64().unwrap();
    assert!((last[0] - 1.5 * r_out).abs() < 1e-12 * r_out);
    assert_eq!(last[1], 0.0);
    // 17 significant digits.
    let mantissa = lines[1].split(',').nth(1).unwrap().split('e').next().unwrap();
    assert_eq!(mantissa.replace('.', "").trim_start_matches('-').len(), 17);
}

#[test]
fn tf_profiles_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for (s, w) in [(4.0, 0.0), (3.0, 5.0)] {
        let o = rotbec(&["tf", "--s", &s.to_string(), "--omega0", &w.to_string(), "--out", out]);
        assert!(o.status.success());
        let sol = read_json(&dir.path().join("tf.json"));
        let direct = solve_tf(s, w).unwrap();
        assert_eq!(sol["r_out"].as_f64(), Some(direct.r_out));
        assert_eq!(sol["r_in"].as_f64(), Some(direct.r_in));
        assert_eq!(sol["r_in"].as_f64().unwrap() > 0.0, w == 5.0);
    }
}

#[test]
fn invalid_parameters_exit_with_code_2() {
    for args in [
        &["tf", "--s", "2", "--omega0", "1"][..],
        &["tf", "--s", "4"],
        &["tf", "--s", "4", "--omega0", "-1"],
        &["critical", "--s", "1.5"],
        &["gp", "--s", "4", "--omega0", "4"],
        &["gp", "--s", "4", "--omega1", "1", "--epsilon", "0.1"],
        &["tf", "--bogus"],
    ] {
        let o = rotbec(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!o.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn critical_and_quartic_reports() {
    let o = rotbec(&["critical", "--s", "4"]);
    let v = leading_json(&o);
    let k = (12.0 / std::f64::consts::PI).powf(1.0 / 6.0);
    assert!((v["omega_c"].as_f64().unwrap() - 2.0 * k).abs() < 1e-12);
    assert!((v["r_out_c"].as_f64().unwrap() - k).abs() < 1e-12);

    let o = rotbec(&["quartic", "--omega0", "3.7"]);
    assert!(o.status.success());
    assert!(leading_json(&o)["max_deviation"].as_f64().unwrap() < 1e-10);
}

#[test]
fn potential_checks() {
    let o = rotbec(&["check-potential", "--s", "4", "--kappa", "2", "--c", "1", "--term", "1:4", "--term", "1:2"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("\nholds"));

    let o = rotbec(&["check-potential", "--s", "4"]);
    assert!(o.status.success());
    assert_eq!(leading_json(&o)["vacuous"], Value::Bool(true));

    let o = rotbec(&["check-potential", "--s", "4", "--kappa", "2", "--c", "0.1", "--term", "1:4", "--term", "1:2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("fails: ratio"), "{text}");
    assert!(text.contains("lambda = 1024"), "{text}");

    let o = rotbec(&["check-potential", "--s", "4", "--kappa", "2", "--c", "1", "--term", "1,4"]);
    assert_eq!(o.status.code(), Some(2));
    let o = rotbec(&["check-potential", "--s", "4", "--kappa", "2", "--c", "1", "--term", "-1:4"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_sweep_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = rotbec(&["sweep", "--s", "4", "--omega0", "4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty"));
}

#[test]
fn tf_rate_sweep_reports_the_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("rate.json");
    fs::write(&cfg, r#"{"s": 4, "omega0_list": [20, 40, 80, 160]}"#).unwrap();
    let o = rotbec(&["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("target -4.000000"));
    let report = read_json(&dir.path().join("tf_rate.json"));
    assert!((report["fit"]["exponent"].as_f64().unwrap() + 4.0).abs() < 0.4);
}

#[test]
fn linear_sweep_writes_reproducible_reports() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let cfg = d.path().join("sweep.json.in");
        fs::write(&cfg, r#"{"s": 4, "omega0": 3, "epsilon": [0.3, 0.25, 0.2], "grid_n": 48}"#).unwrap();
        let o = rotbec(&["sweep", "--config", cfg.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("gap: exponent"));
    }
    let csv = |i: usize| fs::read(dirs[i].path().join("sweep.csv")).unwrap();
    assert_eq!(csv(0), csv(1));
    let text = String::from_utf8(csv(0)).unwrap();
    assert_eq!(text.lines().next(), Some("epsilon,e_tf,e_gp_scaled,gap,l2_dist,tail_max"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn gp_run_prints_the_sandwich_and_reproduces() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut energies = Vec::new();
    for d in &dirs {
        let out = d.path().to_str().unwrap();
        let o = rotbec(&[
            "gp", "--s", "4", "--omega0", "4", "--epsilon", "0.2", "--grid-n", "48", "--init", "random",
            "--seed", "11", "--out", out,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let line = stdout(&o).lines().next().unwrap().to_string();
        assert!(line.starts_with("E_TF ≤ eps²E_GP ≤ eps²E_trial: "), "{line}");
        let nums: Vec<f64> = line.rsplit(": ").next().unwrap().split(" ≤ ").map(|x| x.parse().unwrap()).collect();
        assert!(nums[0] <= nums[1] && nums[1] <= nums[2], "{nums:?}");
        for name in ["checkpoint.json", "energy.json", "diameter.csv", "tails.json", "config.json"] {
            assert!(d.path().join(name).exists(), "{name}");
        }
        energies.push(read_json(&d.path().join("energy.json"))["energy"]["total"].as_f64().unwrap());
    }
    assert!((energies[0] - energies[1]).abs() <= 1e-12 * energies[0].abs());
    let file = |i: usize, n: &str| fs::read(dirs[i].path().join(n)).unwrap();
    assert_eq!(file(0, "diameter.csv"), file(1, "diameter.csv"));
    assert_eq!(file(0, "checkpoint.json"), file(1, "checkpoint.json"));

    // Restarting from the checkpoint keeps the energy.
    let ck = dirs[0].path().join("checkpoint.json");
    let d = tempfile::tempdir().unwrap();
    let o = rotbec(&[
        "gp", "--s", "4", "--omega0", "4", "--epsilon", "0.2", "--init", ck.to_str().unwrap(), "--out",
        d.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let e = read_json(&d.path().join("energy.json"))["energy"]["total"].as_f64().unwrap();
    assert!(e <= energies[0] + 1e-9 * energies[0].abs());

    let o = rotbec(&["gp", "--s", "4", "--omega0", "4", "--epsilon", "0.2", "--init", "/nonexistent/ck.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn nonrotating_gp_run_omits_the_trial_bound() {
    let d = tempfile::tempdir().unwrap();
    let o = rotbec(&["gp", "--s", "4", "--omega0", "0", "--epsilon", "0.2", "--grid-n", "48", "--out", d.path().to_str().unwrap()]);
    assert!(o.status.success());
    let line = stdout(&o).lines().next().unwrap().to_string();
    assert!(line.starts_with("E_TF ≤ eps²E_GP: "), "{line}");
    assert_eq!(read_json(&d.path().join("energy.json"))["e_trial_scaled"], Value::Null);
}

#[test]
fn trial_states() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().to_str().unwrap();
    let o = rotbec(&["trial", "--s", "4", "--omega0", "4", "--epsilon", "0.1", "--grid-n", "128", "--out", out]);
    assert!(o.status.success());
    let report = read_json(&d.path().join("trial.json"));
    let sites = fs::read_to_string(d.path().join("lattice.csv")).unwrap().lines().count() - 1;
    assert_eq!(report["vortices"].as_u64(), Some(sites as u64));
    assert!(report["e_trial_scaled"].as_f64().unwrap() >= report["e_tf"].as_f64().unwrap());

    let o = rotbec(&["trial", "--s", "4", "--omega1", "1", "--alpha", "0.3", "--epsilon", "0.1", "--out", out]);
    assert!(o.status.success());
    let gv = read_json(&d.path().join("giant_vortex.json"));
    let (omega, r_m) = (gv["omega"].as_f64().unwrap(), gv["r_m"].as_f64().unwrap());
    assert_eq!(gv["winding"].as_f64(), Some((0.5 * omega * r_m * r_m).floor()));
}

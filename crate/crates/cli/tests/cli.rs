use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn plasmodyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plasmodyn"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Rows of a CSV text as (header, numeric rows); non-numeric cells become NaN.
fn table(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with("wrote "));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

fn column(text: &str, name: &str) -> Vec<f64> {
    let (header, rows) = table(text);
    let i = header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i]).collect()
}

/// P[Poisson(λ) < k] by direct summation of the probability mass.
fn poisson_below(k: usize, lambda: f64) -> f64 {
    let mut term = (-lambda).exp();
    let mut sum = 0.0;
    for j in 0..k {
        sum += term;
        term *= lambda / (j + 1) as f64;
    }
    sum
}

#[test]
fn survival_at_48_hours() {
    let out = stdout(&plasmodyn(&["survival", "--k", "1,10,50", "--at", "48"]));
    let (header, rows) = table(&out);
    assert_eq!(header, ["age_hours", "chain_k1", "chain_k10", "chain_k50", "pde"]);
    assert_eq!(rows.len(), 1);
    for (i, (k, approx)) in [(1usize, 0.37), (10, 0.45), (50, 0.48)].into_iter().enumerate() {
        let v = rows[0][i + 1];
        assert!((v - poisson_below(k, k as f64)).abs() < 1e-9, "K={k}: {v}");
        assert!((v - approx).abs() < 0.01, "K={k}: {v}");
    }
}

#[test]
fn survival_table_is_monotone_in_age() {
    let out = stdout(&plasmodyn(&["survival", "--k", "5"]));
    let chain = column(&out, "chain_k5");
    let pde = column(&out, "pde");
    assert_eq!(chain.len(), 55);
    assert!(chain.windows(2).all(|w| w[1] <= w[0]));
    assert!(pde.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(chain[0], 1.0);
}

#[test]
fn r0_breakdown_for_the_age_model() {
    let out = stdout(&plasmodyn(&["r0", "--model", "pde"]));
    let (_, rows) = table(&out);
    assert_eq!(rows.len(), 1);
    let production = column(&out, "production")[0];
    assert!((0.99..1.0).contains(&production), "{production}");
    let f = &rows[0];
    let product = f[2] * f[3] * f[4] * f[5] * f[6];
    assert!((product - f[7]).abs() <= 1e-12 * f[7]);
}

#[test]
fn r0_defaults_cover_both_models() {
    let out = stdout(&plasmodyn(&["r0"]));
    let (_, rows) = table(&out);
    assert_eq!(rows.len(), 2);
    let r0 = column(&out, "r0");
    assert!(r0.iter().all(|&v| v > 1.0));
    assert!((r0[0] - r0[1]).abs() / r0[1] < 1e-3);
}

#[test]
fn simulate_pde_writes_one_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    stdout(&plasmodyn(&[
        "simulate", "--model", "pde", "--t-end", "40d", "--out", out,
    ]));
    let files: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(files, ["pde.csv"]);
    let text = fs::read_to_string(dir.path().join("pde.csv")).unwrap();
    assert_eq!(column(&text, "t_hours").len(), 961);
}

#[test]
fn single_stage_chain_rises_earlier() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    stdout(&plasmodyn(&[
        "simulate", "--model", "ode", "--k", "1,100", "--t-end", "10d", "--out", out,
    ]));
    let read = |name: &str| column(&fs::read_to_string(dir.path().join(name)).unwrap(), "gametocytes");
    let (g1, g100) = (read("ode_k1.csv"), read("ode_k100.csv"));
    assert!(g1[5 * 24] > 10.0 * g100[5 * 24], "{} vs {}", g1[120], g100[120]);
}

#[test]
fn no_inoculum_gives_a_flat_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for model in ["ode", "pde"] {
        stdout(&plasmodyn(&[
            "simulate", "--model", model, "--m0", "0", "--t-end", "5d", "--out", out,
        ]));
    }
    for name in ["ode_k50.csv", "pde.csv"] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(column(&text, "gametocytes").iter().all(|&g| g == 0.0));
        assert!(column(&text, "parasitemia").iter().all(|&p| p == 0.0));
        let urbc = column(&text, "total_urbc");
        assert!(urbc.iter().all(|&u| (u - urbc[0]).abs() <= 1e-9 * urbc[0]));
    }
}

#[test]
fn config_file_sits_below_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "model = pde\nt-end = 2d\nout = results\n").unwrap();
    stdout(&plasmodyn(&[
        "simulate",
        "--config",
        conf.to_str().unwrap(),
        "--t-end",
        "1d",
    ]));
    let text = fs::read_to_string(dir.path().join("results/pde.csv")).unwrap();
    assert_eq!(column(&text, "t_hours").len(), 25);
}

#[test]
fn regression_recovers_generating_formula() {
    let (k1, theta1, k2, theta2, t0) = (3.843e7, 1.0304, 2.981e9, -0.0470, 14.5636);
    let parasitemia = |d: f64| 0.02 / (1.0 + 2000.0 * (-0.6 * d).exp());
    let mut csv = String::from("t_hours,gametocytes,merozoites,parasitemia,total_prbc,total_urbc\n");
    for h in 0..=960 {
        let d = h as f64 / 24.0;
        let p = parasitemia(d);
        let g = if d <= t0 {
            k1 * parasitemia(d - 2.0).powf(theta1)
        } else {
            k2 * p.powf(theta2)
        };
        csv.push_str(&format!("{h},{g},0,{p},{},{}\n", p * 5e9, (1.0 - p) * 5e9));
    }
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("clinical.csv");
    fs::write(&traj, csv).unwrap();
    let out = dir.path().to_str().unwrap();
    stdout(&plasmodyn(&[
        "regress",
        "--trajectory",
        traj.to_str().unwrap(),
        "--out",
        out,
    ]));
    let text = fs::read_to_string(dir.path().join("regression.csv")).unwrap();
    let get = |name: &str| column(&text, name)[0];
    assert!((get("log10_k1") - k1.log10()).abs() < 1e-6);
    assert!((get("theta1") - theta1).abs() < 1e-6);
    assert!((get("log10_k2") - k2.log10()).abs() < 1e-6);
    assert!((get("theta2") - theta2).abs() < 1e-6);
    assert!((get("t0_days") - t0).abs() <= 1.0 / 24.0, "{}", get("t0_days"));
}

#[test]
fn compare_reports_convergence_in_k() {
    let out = stdout(&plasmodyn(&["compare", "--k", "1,100"]));
    let g = column(&out, "rel_l2_gametocytes");
    assert!(g[1] < 0.10 && g[0] > g[1], "{g:?}");
}

#[test]
fn fit_on_noiseless_synthetic_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = [
        "fit",
        "--noise",
        "0",
        "--seed",
        "3",
        "--k",
        "50",
        "--alpha_g",
        "1e-7",
        "--m0",
        "1e7",
        "--out",
        out,
    ];
    let first = stdout(&plasmodyn(&args));
    let file = fs::read_to_string(dir.path().join("fit_ode.csv")).unwrap();
    assert_eq!(first, stdout(&plasmodyn(&args)));
    assert_eq!(file, fs::read_to_string(dir.path().join("fit_ode.csv")).unwrap());
    let rel = |name: &str, truth: f64| (column(&file, name)[0] - truth).abs() / truth;
    assert!(
        rel("alpha_g", 1e-7) < 0.1 && rel("m0", 1e7) < 0.1 && rel("mu_g", 1e-3) < 0.1,
        "{file}"
    );
    assert_eq!(column(&file, "k_opt")[0], 50.0);
}

#[test]
fn fit_without_data_is_a_config_error() {
    let out = plasmodyn(&["fit"]);
    assert_eq!(out.status.code(), Some(2));
}

fn assert_error_line(out: &Output, code: i32, kind: &str) {
    assert_eq!(out.status.code(), Some(code));
    let err = String::from_utf8_lossy(&out.stderr);
    let line = err.lines().last().unwrap();
    assert!(
        line.starts_with(&format!("error kind={kind} code={code} message=\"")),
        "{line}"
    );
}

#[test]
fn config_errors_exit_with_two() {
    assert_error_line(&plasmodyn(&["simulate", "--set", "nope=1"]), 2, "config");
    assert_error_line(&plasmodyn(&["simulate", "--model", "sde"]), 2, "config");
    assert_error_line(&plasmodyn(&["simulate", "--t-end", "3w"]), 2, "config");
    assert_error_line(&plasmodyn(&["compare", "--k", ""]), 2, "config");
    assert_error_line(&plasmodyn(&["simulate", "--bogus"]), 2, "config");
    assert_error_line(&plasmodyn(&["simulate", "--model", "pde", "--da", "0.07"]), 2, "config");
    assert_error_line(
        &plasmodyn(&["regress", "--trajectory", "/nonexistent/t.csv"]),
        2,
        "config",
    );
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_error_line(&plasmodyn(&["regress", "--m0", "0", "--out", out]), 3, "numerical");
}

#[test]
fn outputs_leave_no_temporary_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    stdout(&plasmodyn(&["survival", "--out", out]));
    stdout(&plasmodyn(&["r0", "--out", out]));
    let mut names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["r0.csv", "survival.csv"]);
    assert!(Path::new(&dir.path().join("r0.csv")).exists());
}

#[test]
fn fit_reads_patients_from_a_manifest() {
    use plasmodyn::data_io::{generate_synthetic, write_patient_csv};
    use plasmodyn::{default_params, ModelKind};

    let dir = tempfile::tempdir().unwrap();
    let mut truth = default_params();
    truth.alpha_g = 2e-7;
    truth.m0 = 5e6;
    truth.mu_g = 2e-3;
    for (id, seed) in [("a", 1), ("b", 2)] {
        let series = generate_synthetic(&truth, ModelKind::Pde, 0.0, seed).unwrap();
        write_patient_csv(&series, &dir.path().join(format!("{id}.csv"))).unwrap();
    }
    let manifest = dir.path().join("patients.txt");
    fs::write(&manifest, "units = per_ml\npatient.a = a.csv\npatient.b = b.csv\n").unwrap();
    let out = dir.path().join("out");
    let text = stdout(&plasmodyn(&[
        "fit",
        "--model",
        "pde",
        "--data",
        manifest.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    let file = fs::read_to_string(out.join("fit_pde.csv")).unwrap();
    assert!(file.lines().nth(1).unwrap().starts_with("a,") && file.lines().nth(2).unwrap().starts_with("b,"));
    assert!(text.contains("wrote"));
    for (name, t) in [("alpha_g", 2e-7), ("m0", 5e6), ("mu_g", 2e-3)] {
        for v in column(&file, name) {
            assert!((v - t).abs() / t < 0.1, "{name}: {v}");
        }
    }
}

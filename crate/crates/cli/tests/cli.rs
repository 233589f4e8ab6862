use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sepode"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap()
}

#[test]
fn simulate_fhn_grid_shape() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("fhn.csv");
    ok(&["simulate", "--config", p(&configs().join("fhn.toml")), "--out", p(&data)]);
    let text = fs::read_to_string(&data).unwrap();
    assert!(text.starts_with("t,replicate,y1,y2,seed\n"));
    assert!(!text.contains('\r'));
    let rows = csv_rows(&data);
    assert_eq!(rows.len(), 201);
    assert!(rows.iter().all(|r| r[1] == "0" && r[4] == "1"));
}

#[test]
fn simulate_lv_repeated_shape() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("lv.csv");
    ok(&["simulate", "--config", p(&configs().join("lv.toml")), "--out", p(&data)]);
    let rows = csv_rows(&data);
    assert_eq!(rows.len(), 180);
    assert_eq!(rows[0][0], "0.5");
    let reps: Vec<&str> = rows[..6].iter().map(|r| r[1].as_str()).collect();
    assert_eq!(reps, ["0", "1", "2", "3", "4", "5"]);
}

const LV_QUIET: &str = r#"
[model]
name = "lotka-volterra"
theta = [0.5, 0.5, 0.5, 0.5]
xi = [1.0, 0.5]

[design]
kind = "grid"
horizon = 15.0
n = 301

[noise]
variance = [1e-20, 1e-20]

[pipeline]
kind = "smooth"
bandwidth = 0.2
bandwidth_scale = "absolute"
"#;

#[test]
fn negligible_noise_returns_truth_and_fit_recovers_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lv.toml", LV_QUIET);
    let data = dir.path().join("lv.csv");
    ok(&["simulate", "--config", p(&cfg), "--out", p(&data)]);
    let rows = csv_rows(&data);
    // x(0) = xi and the data are the truth to within the noise scale
    assert!((rows[0][2].parse::<f64>().unwrap() - 1.0).abs() < 1e-8);
    assert!((rows[0][3].parse::<f64>().unwrap() - 0.5).abs() < 1e-8);

    let out = ok(&["fit", "--config", p(&cfg), "--data", p(&data)]);
    let v = json(&out.stdout);
    for (k, truth) in [0.5, 0.5, 0.5, 0.5].iter().enumerate() {
        let got = v["theta_hat"][k].as_f64().unwrap();
        assert!((got - truth).abs() < 1e-3, "theta {k}: {got}");
    }
    for (k, truth) in [1.0, 0.5].iter().enumerate() {
        let got = v["xi_hat"][k].as_f64().unwrap();
        assert!((got - truth).abs() < 1e-3, "xi {k}: {got}");
    }
    assert_eq!(v["nu_hat"], v["theta_hat"]);
}

#[test]
fn non_identifiable_fit_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("duplicated.toml");
    let data = dir.path().join("dup.csv");
    ok(&["simulate", "--config", p(&cfg), "--out", p(&data)]);
    let out = run(&["fit", "--config", p(&cfg), "--data", p(&data), "--out", p(&dir.path().join("fit.json"))]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("rank of C: 1"), "{err}");
    assert!(err.contains("null direction"), "{err}");
    assert!(!dir.path().join("fit.json").exists());

    // identify reports the same problem without failing
    let out = ok(&["identify", "--config", p(&cfg)]);
    let v = json(&out.stdout);
    assert_eq!(v["identifiable"], false);
    assert_eq!(v["rank"], 1);
    let null = &v["null_space"][0];
    let (a, b) = (null[0].as_f64().unwrap(), null[1].as_f64().unwrap());
    assert!((a + b).abs() < 1e-12 && (a.abs() - 0.5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn identify_benchmarks() {
    for name in ["fhn.toml", "lv.toml"] {
        let out = ok(&["identify", "--config", p(&configs().join(name))]);
        let v = json(&out.stdout);
        assert_eq!(v["identifiable"], true, "{name}");
        assert_eq!(v["rank"], 4, "{name}");
    }
}

const GOLDEN: &str = "golden/fhn_fit.json";

#[test]
fn fhn_fit_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("fhn.toml");
    let data = dir.path().join("fhn.csv");
    ok(&["simulate", "--config", p(&cfg), "--out", p(&data)]);
    let out = ok(&["fit", "--config", p(&cfg), "--data", p(&data)]);
    let golden_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join(GOLDEN);
    if std::env::var_os("SEPODE_BLESS").is_some() {
        fs::write(&golden_path, &out.stdout).unwrap();
    }
    let golden = json(&fs::read(&golden_path).expect("golden file present; set SEPODE_BLESS=1 to create"));
    let got = json(&out.stdout);
    // values, not bytes, so the check survives last-digit libm differences
    compare(&got, &golden, "");
}

fn compare(a: &serde_json::Value, b: &serde_json::Value, at: &str) {
    use serde_json::Value;
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            assert!((x - y).abs() <= 1e-9 * y.abs().max(1e-6), "{at}: {x} vs {y}");
        }
        (Value::Array(x), Value::Array(y)) => {
            assert_eq!(x.len(), y.len(), "{at}");
            for (i, (u, v)) in x.iter().zip(y).enumerate() {
                compare(u, v, &format!("{at}[{i}]"));
            }
        }
        (Value::Object(x), Value::Object(y)) => {
            assert_eq!(x.keys().collect::<Vec<_>>(), y.keys().collect::<Vec<_>>(), "{at}");
            for (k, u) in x {
                compare(u, &y[k], &format!("{at}.{k}"));
            }
        }
        _ => assert_eq!(a, b, "{at}"),
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("lv.toml");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&["mc", "--config", p(&cfg), "--replicates", "20", "--threads", "1", "--out", p(&a)]);
    ok(&["mc", "--config", p(&cfg), "--replicates", "20", "--threads", "3", "--out", p(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(dir.path().join("a.replicates.csv")).unwrap(),
        fs::read(dir.path().join("b.replicates.csv")).unwrap()
    );
    let s1 = ok(&["simulate", "--config", p(&configs().join("fhn.toml")), "--seed", "5"]).stdout;
    let s2 = ok(&["simulate", "--config", p(&configs().join("fhn.toml")), "--seed", "5"]).stdout;
    assert_eq!(s1, s2);
}

#[test]
fn single_replicate_has_zero_sd() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mc.csv");
    ok(&["mc", "--config", p(&configs().join("lv.toml")), "--replicates", "1", "--out", p(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("param,true,mean,sd,are_pct\n"));
    let rows = csv_rows(&out);
    let names: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["theta1", "theta2", "theta3", "theta4", "xi1", "xi2", "traj_l2", "traj_sup"]);
    for r in &rows[..6] {
        assert_eq!(r[3], "0", "{r:?}");
    }
    assert_eq!(csv_rows(&dir.path().join("mc.replicates.csv")).len(), 1);
}

#[test]
fn rate_output_has_slope_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("lv_rate.toml")).unwrap();
    let cfg = write_config(dir.path(), "rate.toml", &text.replace("[100, 200, 400, 800, 1600]", "[100, 400, 1600]"));
    let out = ok(&["rate", "--config", p(&cfg), "--replicates", "10"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,rmse_theta,rmse_xi");
    assert_eq!(lines.len(), 5);
    let slope: Vec<&str> = lines[4].split(',').collect();
    assert_eq!(slope[0], "slope");
    assert!(slope[1].parse::<f64>().unwrap() < 0.0);
    assert!(slope[2].parse::<f64>().unwrap() >= 0.0);
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("fhn.toml")).unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &text.replace("n = 201", "n = 201\nspacing = 0.1"));
    let out = run(&["mc", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("spacing"));

    let cfg = write_config(dir.path(), "step.toml", &text.replace("kind = \"smooth\"", "kind = \"step\""));
    assert_eq!(run(&["mc", "--config", p(&cfg)]).status.code(), Some(1));
}

#[test]
fn missing_files_exit_3() {
    let out = run(&["mc", "--config", "/nonexistent/cfg.toml"]);
    assert_eq!(out.status.code(), Some(3));
    let out = run(&["fit", "--config", p(&configs().join("fhn.toml")), "--data", "/nonexistent/data.csv"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn help_lists_config_keys() {
    let out = ok(&["mc", "--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("CONFIG KEYS") && text.contains("bandwidth_scale"));
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(n: u32) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../configs/example{n}.toml"))
}

fn comac(sub: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_comac"))
        .arg(sub)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

const SMALL: &[&str] = &[
    "--set",
    "experiment.n_trials=300",
    "--set",
    "experiment.analytic_samples=300",
];

#[test]
fn example1_writes_one_csv_per_shape() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = SMALL.to_vec();
    args.extend(["--set", "experiment.epsilon_grid=[0.01, 0.1]"]);
    let o = comac("simulate", &config(1), dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        listing(dir.path()),
        [
            "outage_example1_K150_M150.csv",
            "outage_example1_K250_M250.csv",
            "outage_example1_K25_M25.csv",
            "outage_example1_K50_M50.csv",
        ]
    );
    let text = std::fs::read_to_string(dir.path().join("outage_example1_K25_M25.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("epsilon,outage,ci_lo,ci_hi,analytic,n_trials,seed"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 7);
    assert_eq!(row[0].parse::<f64>().unwrap(), 0.01);
    assert!(!row[4].is_empty());
    assert_eq!(row[5], "300");
}

#[test]
fn empty_grid_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = comac("simulate", &config(1), dir.path(), &["--set", "experiment.epsilon_grid=[]"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epsilon_grid"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = comac("simulate", &config(1), dir.path(), &["--set", "network.sigma=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("network.sigma"), "{}", stderr(&o));
}

#[test]
fn bad_flags_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = comac("simulate", &config(1), dir.path(), &["--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = comac("simulate", &dir.path().join("nope.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut args = SMALL.to_vec();
    args.extend(["--set", "network.K=[25]", "--set", "network.M=[25]", "--seed", "42"]);
    let mut one = args.clone();
    one.extend(["--threads", "1"]);
    let mut three = args.clone();
    three.extend(["--threads", "3"]);
    assert!(comac("simulate", &config(2), a.path(), &one).status.success());
    assert!(comac("simulate", &config(2), b.path(), &three).status.success());
    let name = "outage_example2_K25_M25.csv";
    let x = std::fs::read(a.path().join(name)).unwrap();
    let y = std::fs::read(b.path().join(name)).unwrap();
    assert_eq!(x, y);
    assert!(String::from_utf8(x).unwrap().lines().nth(1).unwrap().ends_with(",42"));
}

#[test]
fn csv_floats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = SMALL.to_vec();
    args.extend(["--set", "network.K=[5]", "--set", "network.M=[5]"]);
    assert!(comac("simulate", &config(1), dir.path(), &args).status.success());
    let text = std::fs::read_to_string(dir.path().join("outage_example1_K5_M5.csv")).unwrap();
    for line in text.lines().skip(1) {
        for field in line.split(',').take(5) {
            let v: f64 = field.parse().unwrap();
            assert_eq!(v.to_string(), field);
        }
    }
}

#[test]
fn analyze_writes_only_analytic_columns() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--set", "network.K=[25]", "--set", "network.M=[25]", "--set", "experiment.analytic_samples=500"];
    let o = comac("analyze", &config(1), dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("analytic_example1_K25_M25.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("epsilon,analytic,analytic_ci_half_width,n_samples,seed"));
    let values: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 40);
    assert!(values.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn analyze_without_noise_is_zero() {
    // One node and no noise leave nothing to go wrong.
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--set",
        "network.K=[1]",
        "--set",
        "network.M=[7]",
        "--set",
        "network.sigma_N_sq=0.0",
        "--set",
        "experiment.analytic_samples=100",
    ];
    for n in [1, 2] {
        let o = comac("analyze", &config(n), dir.path(), &args);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = std::fs::read_to_string(dir.path().join(format!("analytic_example{n}_K1_M7.csv"))).unwrap();
        for line in text.lines().skip(1) {
            assert_eq!(line.split(',').nth(1), Some("0"), "{line}");
        }
    }
}

#[test]
fn geometric_existence_violation_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--set", "network.K=[5]", "--set", "network.M=[5]", "--set", "network.sigma_N_sq=1000.0"];
    let o = comac("analyze", &config(2), dir.path(), &args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sigma_N_sq * ln(a) < alpha_geo * K * M"), "{}", stderr(&o));
}

#[test]
fn compare_with_one_snr_point() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--set", "experiment.n_trials=200", "--set", "experiment.snr_db_list=[4.0]"];
    let o = comac("compare", &config(3), dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        listing(dir.path()),
        [
            "compare_example3_K25_M250_snr4dB_comac.csv",
            "compare_example3_K25_M250_snr4dB_tdma.csv",
            "summary_example3.csv",
        ]
    );
    let summary = std::fs::read_to_string(dir.path().join("summary_example3.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(summary.starts_with("K,M,snr_db,noise_var,comac_scheme,dominance,n_trials,seed\n"));
}

#[test]
fn compare_needs_snr_points() {
    let dir = tempfile::tempdir().unwrap();
    let o = comac("compare", &config(1), dir.path(), &["--set", "network.K=[5]", "--set", "network.M=[5]"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("snr_db_list"), "{}", stderr(&o));
}

#[test]
fn validate_reports_existence_violation() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--set", "network.K=[5]", "--set", "network.M=[5]", "--set", "network.sigma_N_sq=1000.0"];
    let o = comac("validate", &config(1), dir.path(), &args);
    assert_eq!(o.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(
        stdout.lines().any(|l| l.starts_with("FAIL bias constant") && l.contains("ln(a)")),
        "{stdout}"
    );
    assert!(dir.path().join("validation_example1.json").exists());
}

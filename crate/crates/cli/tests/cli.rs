use std::path::Path;
use std::process::{Command, Output};

use bandit_clusters::env::{load_features, parse_features, LoadOptions, NoiseModel};
use bandit_clusters::linalg;
use tempfile::TempDir;

fn cli(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bandit-clusters"))
        .args(args)
        .current_dir(dir)
        .env("BANDIT_CLUSTERS_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn files_with_ext(dir: &Path, ext: &str) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(ext))
        .collect();
    v.sort();
    v
}

const MINIMAL: &str = r#"
T = 100
seeds = [3]
policies = ["club"]

[env]
users = 12
selected_users = 8
clusters = 2
dim = 4
total_arms = 60
arms_per_round = 5

[params]
threshold_scale = 0.1
"#;

fn minimal(dir: &Path) -> String {
    std::fs::write(dir.join("min.toml"), MINIMAL).unwrap();
    "min.toml".into()
}

#[test]
fn missing_config_names_the_path() {
    let tmp = TempDir::new().unwrap();
    let o = cli(&["run", "--config", "nowhere.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere.toml"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = minimal(tmp.path());
    let o = cli(&["run", "-c", &cfg, "--set", "env.dimension=3"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("env.dimension"), "{}", stderr(&o));
    std::fs::write(tmp.path().join("bad.toml"), "[env]\ndim = \"four\"\n").unwrap();
    let o = cli(&["run", "-c", "bad.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("env.dim"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(cli(&["run", "--bogus"], tmp.path()).status.code(), Some(1));
    assert_eq!(cli(&["--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn minimal_run_writes_one_csv_and_one_json() {
    let tmp = TempDir::new().unwrap();
    let cfg = minimal(tmp.path());
    let o = cli(&["run", "-c", &cfg, "--out", "out"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = tmp.path().join("out");
    assert_eq!(files_with_ext(&out, ".csv"), ["club-seed3.csv"]);
    assert_eq!(files_with_ext(&out, ".json"), ["club.json"]);
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 1);
    assert!(lines[0].starts_with("club ") && lines[0].contains("final_regret") && lines[0].contains("recovery"));
    let csv = std::fs::read_to_string(out.join("club-seed3.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,user,arm,reward,regret,cum_regret"));
    assert_eq!(csv.lines().count(), 101);
}

#[test]
fn set_overrides_the_horizon() {
    let tmp = TempDir::new().unwrap();
    let cfg = minimal(tmp.path());
    let o = cli(&["run", "-c", &cfg, "--set", "T=10", "--out", "out"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("out/club-seed3.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn report_json_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = minimal(tmp.path());
    let o = cli(&["run", "-c", &cfg, "--exploration-scale", "0.5", "--out", "a"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("a/club.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["params"]["exploration_scale"], 0.5);
    assert_eq!(report["exploration_scale"], 0.5);
    let o = cli(&["run", "-c", "a/club.json", "--out", "b"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let a = std::fs::read(tmp.path().join("a/club-seed3.csv")).unwrap();
    let b = std::fs::read(tmp.path().join("b/club-seed3.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        std::fs::read(tmp.path().join("a/club.json")).unwrap(),
        std::fs::read(tmp.path().join("b/club.json")).unwrap()
    );
}

#[test]
fn k_sweep_writes_one_file_per_point() {
    let tmp = TempDir::new().unwrap();
    let cfg = minimal(tmp.path());
    let o = cli(&["sweep", "-c", &cfg, "-T", "50", "--axis", "K", "--values", "8,10,12,14", "--out", "s"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = tmp.path().join("s");
    assert_eq!(files_with_ext(&out, ".json"), ["sweep-K-10.json", "sweep-K-12.json", "sweep-K-14.json", "sweep-K-8.json"]);
    let table = std::fs::read_to_string(out.join("sweep-K.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    let point: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("sweep-K-12.json")).unwrap()).unwrap();
    assert_eq!(point["reports"][0]["config"]["env"]["arms_per_round"], 12);
}

#[test]
fn u_sweep_reports_recovery_per_point() {
    let tmp = TempDir::new().unwrap();
    let cfg = minimal(tmp.path());
    let o = cli(&["sweep", "-c", &cfg, "-T", "50", "--axis", "u", "--values", "4,6", "--out", "s"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("u=4 ") && l.contains("recovery")), "{text}");
    assert!(text.lines().any(|l| l.starts_with("u=6 ") && l.contains("recovery")), "{text}");
}

#[test]
fn empty_sweep_axis_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = minimal(tmp.path());
    let o = cli(&["sweep", "-c", &cfg, "--axis", "K", "--values", ""], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let o = cli(&["sweep", "-c", &cfg, "--axis", "K"], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn default_verify_passes() {
    let tmp = TempDir::new().unwrap();
    let o = cli(&["verify"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    for suite in ["eigengrowth", "coverage", "conservation"] {
        assert!(text.contains(&format!("PASS {suite}")), "{text}");
    }
}

#[test]
fn zero_beta_fails_coverage() {
    let tmp = TempDir::new().unwrap();
    let o = cli(&["verify", "--suite", "coverage", "--set", "params.beta=0"], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("FAIL coverage"));
}

#[test]
fn loose_delta_passes() {
    let tmp = TempDir::new().unwrap();
    let o = cli(&["verify", "--set", "params.delta=0.5"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn gen_data_round_trips() {
    let tmp = TempDir::new().unwrap();
    let cfg = minimal(tmp.path());
    let o = cli(&["gen-data", "-c", &cfg, "--out", "env.txt"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let f = parse_features(&std::fs::read_to_string(tmp.path().join("env.txt")).unwrap()).unwrap();
    assert_eq!((f.dim, f.clusters, f.assignment.len(), f.arms.len()), (4, 2, 8, 60));

    // The file drives a run through `env.source = "features"`.
    let o = cli(
        &["run", "-c", &cfg, "--set", "env.source=features", "--set", "env.path=\"env.txt\"", "-T", "20", "--out", "o"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

fn svd_prep(dir: &Path, log: &str, extra: &[&str]) -> Output {
    std::fs::write(dir.join("log.txt"), log).unwrap();
    let mut args = vec!["svd-prep", "--input", "log.txt", "--out", "feat.txt"];
    args.extend_from_slice(extra);
    cli(&args, dir)
}

#[test]
fn svd_prep_identity_feedback() {
    let tmp = TempDir::new().unwrap();
    let o = svd_prep(tmp.path(), "0 0 5\n1 1 4\n", &["--dim", "2", "--clusters", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let f = parse_features(&std::fs::read_to_string(tmp.path().join("feat.txt")).unwrap()).unwrap();
    for (i, theta) in f.user_vectors.iter().enumerate() {
        assert!((linalg::norm(theta) - 1.0).abs() < 1e-9);
        for j in 0..2 {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((linalg::dot(theta, f.arms.arm(j)) - expect).abs() < 1e-9);
        }
    }
}

#[test]
fn svd_prep_rejects_zero_and_malformed_input() {
    let tmp = TempDir::new().unwrap();
    let o = svd_prep(tmp.path(), "0 0 1\n1 1 2\n", &["--dim", "1", "--clusters", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("matrix has rank 0"), "{}", stderr(&o));
    let o = svd_prep(tmp.path(), "0 0 5\n# note\n1 1\n", &["--dim", "1", "--clusters", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn svd_prep_random_matrix_loads() {
    let tmp = TempDir::new().unwrap();
    let mut log = String::new();
    let mut state = 12345u64;
    for i in 0..20 {
        for j in 0..30 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            if (state >> 33).is_multiple_of(3) {
                log.push_str(&format!("{i} {j} 1\n"));
            }
        }
    }
    let o = svd_prep(tmp.path(), &log, &["--dim", "5", "--clusters", "4", "--selected", "12", "--no-binarize"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let opts = LoadOptions { arms_per_round: 5, noise: NoiseModel::default() };
    let (env, pool) = load_features(tmp.path().join("feat.txt"), &opts).unwrap();
    assert_eq!((env.users(), env.dim(), env.clusters(), pool.len()), (12, 5, 4, 30));
}

use proptest::prelude::*;

use super::*;
use crate::env::Sampler;

fn tiny(horizon: usize) -> RunConfig {
    RunConfig {
        horizon,
        seeds: vec![3, 1, 2],
        policies: vec![PolicyKind::LinUcbInd, PolicyKind::Club],
        env: EnvConfig { users: 12, selected_users: 6, clusters: 2, dim: 3, total_arms: 60, arms_per_round: 5, seed: 2, ..EnvConfig::default() },
        ..RunConfig::default()
    }
}

fn trace_with(seed: u64, finals: &[f64]) -> RunTrace {
    RunTrace {
        policy: PolicyKind::LinUcbOne,
        seed,
        params: crate::clusters::ConfidenceParams::new(2, 2, finals.len()),
        rows: finals
            .iter()
            .enumerate()
            .map(|(k, &c)| TraceRow { t: k + 1, user: 0, arm: 0, reward: 0.0, regret: 0.0, cum_regret: c })
            .collect(),
        snapshots: Vec::new(),
        final_partition: vec![vec![0, 1]],
        exploration_rounds: 0,
        uniform_rounds: 0,
        phase_records: None,
        wall_clock_secs: 0.0,
    }
}

#[test]
fn single_arm_has_no_regret() {
    let mut cfg = tiny(1);
    cfg.env.arms_per_round = 1;
    let env = Environment::build(&cfg.env).unwrap();
    let t = run_one(&cfg, &env, PolicyKind::UniClub, 1).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(t.final_regret(), 0.0);
}

#[test]
fn identical_seeds_identical_bytes() {
    let cfg = tiny(300);
    let env = Environment::build(&cfg.env).unwrap();
    for kind in [PolicyKind::UniSclub, PolicyKind::Club, PolicyKind::LinUcbOne] {
        let a = run_one(&cfg, &env, kind, 7).unwrap().csv_string().unwrap();
        let b = run_one(&cfg, &env, kind, 7).unwrap().csv_string().unwrap();
        assert_eq!(a, b);
        let c = run_one(&cfg, &env, kind, 8).unwrap().csv_string().unwrap();
        assert_ne!(a, c);
    }
}

#[test]
fn grid_is_thread_independent() {
    let cfg = tiny(200);
    let env = Environment::build(&cfg.env).unwrap();
    let one = run_grid(&cfg, &env, Some(1)).unwrap();
    let four = run_grid(&cfg, &env, Some(4)).unwrap();
    assert_eq!(one.len(), 2);
    for (a, b) in one.iter().zip(&four) {
        assert_eq!(a.iter().map(|t| t.seed).collect::<Vec<_>>(), vec![3, 1, 2]);
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.csv_string().unwrap(), y.csv_string().unwrap());
        }
        let truth = env.model.partition();
        let ra = serde_json::to_string(&aggregate(a, &truth).unwrap()).unwrap();
        let rb = serde_json::to_string(&aggregate(b, &truth).unwrap()).unwrap();
        assert_eq!(ra, rb);
    }
}

#[test]
fn csv_layout() {
    let cfg = tiny(4);
    let env = Environment::build(&cfg.env).unwrap();
    let s = run_one(&cfg, &env, PolicyKind::LinUcbInd, 1).unwrap().csv_string().unwrap();
    let lines: Vec<&str> = s.split('\n').collect();
    assert_eq!(lines[0], "t,user,arm,reward,regret,cum_regret");
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[5], "");
    assert!(!s.contains('\r'));
    assert!(lines[1].starts_with("1,"));
}

#[test]
fn regret_curve_properties() {
    let cfg = tiny(500);
    let env = Environment::build(&cfg.env).unwrap();
    let bound = 2.0 * env.model.contexts().norm_bound()
        * (0..env.model.clusters()).map(|j| crate::linalg::norm(env.model.preference(j))).fold(0.0, f64::max);
    for kind in [PolicyKind::UniClub, PolicyKind::Sclub, PolicyKind::LinUcbOne] {
        let t = run_one(&cfg, &env, kind, 2).unwrap();
        let mut sum = NeumaierSum::default();
        let mut prev = 0.0;
        for r in &t.rows {
            assert!(r.regret >= 0.0 && r.regret <= bound + 1e-12);
            sum.add(r.regret);
            assert_eq!(r.cum_regret, sum.value());
            assert!(r.cum_regret >= prev);
            prev = r.cum_regret;
        }
        assert_eq!(t.snapshots.len(), 100);
        assert_eq!(t.snapshots.last().unwrap().round, 500);
    }
}

#[test]
fn neumaier_recovers_small_terms() {
    let mut s = NeumaierSum::default();
    s.add(1e16);
    for _ in 0..10 {
        s.add(1.0);
    }
    s.add(-1e16);
    assert_eq!(s.value(), 10.0);
}

#[test]
fn recovery_examples() {
    let truth = vec![vec![0, 1, 2, 3]];
    assert_eq!(recovery_rate(&truth, &truth), 1.0);
    let singles: Vec<Vec<usize>> = (0..4).map(|i| vec![i]).collect();
    assert_eq!(recovery_rate(&singles, &truth), 0.0);
    assert_eq!(recovery_rate(&[vec![1, 0], vec![2, 3]], &[vec![2, 3], vec![0, 1]]), 1.0);
}

fn brute_rand(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut agree, mut all) = (0, 0);
    for i in 0..n {
        for j in 0..n {
            if i < j {
                all += 1;
                if (a[i] == a[j]) == (b[i] == b[j]) {
                    agree += 1;
                }
            }
        }
    }
    agree as f64 / all as f64
}

fn groups(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut g: Vec<Vec<usize>> = vec![Vec::new(); 6];
    labels.iter().enumerate().for_each(|(u, &l)| g[l].push(u));
    g.into_iter().filter(|c| !c.is_empty()).collect()
}

proptest! {
    #[test]
    fn rand_index_matches_pair_count(a in prop::collection::vec(0usize..6, 6), b in prop::collection::vec(0usize..6, 6)) {
        let r = recovery_rate(&groups(&a), &groups(&b));
        prop_assert!((r - brute_rand(&a, &b)).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&r));
    }
}

#[test]
fn aggregate_examples() {
    let truth = vec![vec![0, 1]];
    let one = aggregate(&[trace_with(1, &[0.5, 1.0])], &truth).unwrap();
    assert_eq!(one.halfwidth_curve, vec![0.0, 0.0]);
    let twin = aggregate(&[trace_with(1, &[0.5, 1.0]), trace_with(2, &[0.5, 1.0])], &truth).unwrap();
    assert_eq!(twin.final_halfwidth, 0.0);
    let three = aggregate(&[trace_with(3, &[3.0]), trace_with(1, &[1.0]), trace_with(2, &[2.0])], &truth).unwrap();
    assert_eq!(three.final_mean, 2.0);
    assert!((three.final_halfwidth - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    assert_eq!(three.seeds, vec![1, 2, 3]);
    assert_eq!(three.recovery_rate, 1.0);
    assert!(aggregate(&[trace_with(1, &[1.0]), trace_with(2, &[1.0, 2.0])], &truth).is_err());
    assert!(aggregate(&[], &truth).is_err());
    let json: serde_json::Value = serde_json::to_value(&three).unwrap();
    for key in ["policy", "T", "seeds", "mean_curve", "halfwidth_curve", "recovery_rate", "exploration_scale"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

#[test]
fn eigengrowth_guards() {
    let s = Sampler::Sphere { dim: 5 };
    let r = verify_eigengrowth(&s, 0.2, 1, 10, 20, Some(10), 0.1, 1).unwrap();
    assert!(!r.precondition_met);
    assert_eq!(r.passed, None);
    let pm = Sampler::PointMass(vec![1.0, 0.0]);
    assert!(verify_eigengrowth(&pm, 0.0, 1, 2, 5, Some(100), 0.1, 1).is_err());
}

#[test]
fn coverage_with_inflated_width() {
    let mut cfg = tiny(1500);
    cfg.params.threshold_scale = 0.1;
    cfg.params.exploration_scale = 500.0 / Environment::build(&cfg.env).unwrap().resolve(&cfg.params, 1).t0_raw().unwrap();
    let env = Environment::build(&cfg.env).unwrap();
    let base = env.resolve(&cfg.params, 1500).beta_for_round(1);
    let wide = ParamConfig { beta: Some(10.0 * base), ..cfg.params.clone() };
    let r = verify_coverage(&env, &wide, PolicyKind::UniClub, 1500, &[1, 2]).unwrap();
    assert!(r.checked > 0);
    assert_eq!(r.violations, 0);
    let zero = ParamConfig { beta: Some(0.0), ..cfg.params.clone() };
    let r = verify_coverage(&env, &zero, PolicyKind::UniClub, 1500, &[1, 2]).unwrap();
    assert!(!r.passed, "{r:?}");
}

#[test]
fn noiseless_coverage() {
    let mut cfg = tiny(1500);
    cfg.env.noise_sd = 0.0;
    cfg.params.threshold_scale = 0.1;
    let env = Environment::build(&cfg.env).unwrap();
    cfg.params.exploration_scale = 500.0 / env.resolve(&cfg.params, 1).t0_raw().unwrap();
    let r = verify_coverage(&env, &cfg.params, PolicyKind::UniClub, 1500, &[4]).unwrap();
    assert!(r.checked > 0);
    assert_eq!(r.violations, 0);
}

#[test]
fn conservation_fuzz_small() {
    let mut cfg = tiny(300);
    cfg.params.threshold_scale = 0.05;
    let env = Environment::build(&cfg.env).unwrap();
    cfg.params.exploration_scale = 60.0 / env.resolve(&cfg.params, 1).t0_raw().unwrap();
    let kinds: Vec<PolicyKind> = PolicyKind::ALL.into_iter().filter(|k| !k.is_smoothed()).collect();
    let r = verify_conservation(&env, &cfg.params, &kinds, 300, 5).unwrap();
    assert!(r.passed(), "{:?}", r.violations);
    assert_eq!(r.checks, 300 * kinds.len());
}

#[test]
fn config_serde() {
    let cfg = RunConfig::default();
    let v = serde_json::to_value(&cfg).unwrap();
    assert_eq!(v["T"], 30000);
    let back: RunConfig = serde_json::from_value(v).unwrap();
    assert_eq!(back, cfg);
    assert!(serde_json::from_str::<RunConfig>(r#"{"T": 5, "bogus": 1}"#).is_err());
    let partial: RunConfig = serde_json::from_str(r#"{"T": 5, "env": {"dim": 4}}"#).unwrap();
    assert_eq!(partial.env.dim, 4);
    assert_eq!(partial.env.users, EnvConfig::default().users);
    assert!(RunConfig { seeds: vec![], ..RunConfig::default() }.validate().is_err());
    assert!(RunConfig { horizon: 0, ..RunConfig::default() }.validate().is_err());
    assert_eq!(RunConfig::paper_scale().env.dim, 50);
}

use std::path::Path;

use bandit_clusters::env::{parse_triplets, svd_features, write_features, EnvError, Sampler};
use bandit_clusters::harness::{
    aggregate, run_grid, thread_cap, verify_conservation, verify_coverage, verify_eigengrowth, AggregateReport,
    ContextKind, EnvConfig, EnvSource, Environment, HarnessError, ParamConfig, RunTrace,
};
use bandit_clusters::rng::{stream, Purpose};
use bandit_clusters::{build_policy, PolicyKind, RunConfig};
use serde_json::json;

use crate::{Axis, Common, Failure, Suite};

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("writing {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("creating {}: {e}", dir.display())))
}

/// Builds the environment and every configured policy once, so that bad
/// settings surface as config errors before any round is played.
fn prepare(cfg: &RunConfig) -> Result<Environment, Failure> {
    let env = Environment::build(&cfg.env).map_err(config_err)?;
    let settings = env.settings(&cfg.params, cfg.horizon);
    for &kind in &cfg.policies {
        build_policy(kind, &settings).map_err(|e| Failure::Config(format!("policy {kind}: {e}")))?;
    }
    Ok(env)
}

/// Runs the grid and aggregates per policy, with the resolved config attached.
fn execute(
    cfg: &RunConfig,
    env: &Environment,
    verbose: u8,
) -> Result<(Vec<Vec<RunTrace>>, Vec<AggregateReport>), Failure> {
    if verbose > 0 {
        eprintln!(
            "running {} policies x {} seeds, T = {}, {} users, d = {}, K = {}",
            cfg.policies.len(),
            cfg.seeds.len(),
            cfg.horizon,
            env.model.users(),
            env.model.dim(),
            env.model.arms_per_round()
        );
    }
    let grid = run_grid(cfg, env, thread_cap()).map_err(runtime_err)?;
    let truth = env.model.partition();
    let mut reports = Vec::with_capacity(grid.len());
    for traces in &grid {
        let mut report = aggregate(traces, &truth).map_err(runtime_err)?;
        if verbose > 0 {
            eprintln!(
                "{}: {:.2}s per seed (max {:.2}s), {} exploration rounds",
                report.policy, report.runtime.mean_secs, report.runtime.max_secs, report.exploration_rounds
            );
        }
        report.config = Some(cfg.clone());
        reports.push(report);
    }
    Ok((grid, reports))
}

/// `<policy> final_regret <mean> ± <halfwidth> recovery <rate>`
fn summary(r: &AggregateReport) -> String {
    format!(
        "{:<14} final_regret {:.3} ± {:.3} recovery {:.3}",
        r.policy.name(),
        r.final_mean,
        r.final_halfwidth,
        r.recovery_rate
    )
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map_err(runtime_err)
}

pub fn run(common: &Common, out: &Path) -> Result<(), Failure> {
    let cfg = common.load(RunConfig::default())?;
    let env = prepare(&cfg)?;
    let (grid, reports) = execute(&cfg, &env, common.verbose())?;
    create_dir(out)?;
    for (traces, report) in grid.iter().zip(&reports) {
        for t in traces {
            let path = out.join(format!("{}-seed{}.csv", t.policy.name(), t.seed));
            write(&path, &t.csv_string().map_err(runtime_err)?)?;
        }
        write(&out.join(format!("{}.json", report.policy.name())), &to_json(report)?)?;
        println!("{}", summary(report));
    }
    Ok(())
}

fn axis_name(axis: Axis) -> &'static str {
    match axis {
        Axis::K => "K",
        Axis::U => "u",
        Axis::Sigma => "sigma",
    }
}

/// Config for one sweep point.
fn sweep_point(base: &RunConfig, axis: Axis, raw: &str) -> Result<(RunConfig, serde_json::Value), Failure> {
    let bad = || Failure::Config(format!("invalid {} value `{raw}`", axis_name(axis)));
    let mut cfg = base.clone();
    let value = match axis {
        Axis::K => {
            let k: usize = raw.trim().parse().map_err(|_| bad())?;
            cfg.env.arms_per_round = k;
            json!(k)
        }
        Axis::U => {
            let u: usize = raw.trim().parse().map_err(|_| bad())?;
            cfg.env.selected_users = u;
            json!(u)
        }
        Axis::Sigma => {
            let s: f64 = raw.trim().parse().map_err(|_| bad())?;
            if !s.is_finite() || s <= 0.0 {
                return Err(bad());
            }
            if cfg.env.contexts != ContextKind::Smoothed {
                return Err(Failure::Config("a sigma sweep needs env.contexts = \"smoothed\"".into()));
            }
            cfg.env.sigma = s;
            json!(s)
        }
    };
    cfg.validate().map_err(config_err)?;
    Ok((cfg, value))
}

pub fn sweep(common: &Common, axis: Axis, values: &[String], out: &Path) -> Result<(), Failure> {
    let base = common.load(RunConfig::default())?;
    let values: Vec<&String> = values.iter().filter(|v| !v.trim().is_empty()).collect();
    if values.is_empty() {
        return Err(Failure::Config(format!("the {} axis has no values", axis_name(axis))));
    }
    let points = values.iter().map(|raw| sweep_point(&base, axis, raw)).collect::<Result<Vec<_>, _>>()?;
    let envs = points.iter().map(|(cfg, _)| prepare(cfg)).collect::<Result<Vec<_>, _>>()?;
    create_dir(out)?;
    let name = axis_name(axis);
    let mut table = csv::Writer::from_path(out.join(format!("sweep-{name}.csv"))).map_err(runtime_err)?;
    table
        .write_record(["axis", "value", "policy", "final_mean", "final_halfwidth", "recovery_rate", "exploration_rounds"])
        .map_err(runtime_err)?;
    for ((cfg, value), env) in points.iter().zip(&envs) {
        let (_, reports) = execute(cfg, env, common.verbose())?;
        let doc = json!({ "axis": name, "value": value, "reports": reports });
        write(&out.join(format!("sweep-{name}-{value}.json")), &to_json(&doc)?)?;
        for r in &reports {
            table
                .write_record([
                    name.to_string(),
                    value.to_string(),
                    r.policy.name().to_string(),
                    r.final_mean.to_string(),
                    r.final_halfwidth.to_string(),
                    r.recovery_rate.to_string(),
                    r.exploration_rounds.to_string(),
                ])
                .map_err(runtime_err)?;
            println!("{name}={value} {}", summary(r));
        }
    }
    table.flush().map_err(runtime_err)?;
    Ok(())
}

/// Small well-separated problem on sphere contexts, with exploration and
/// deletion thresholds shrunk so clusters are found within the horizon.
pub fn verify_preset() -> RunConfig {
    RunConfig {
        horizon: 4000,
        seeds: (1..=5).collect(),
        policies: vec![PolicyKind::UniClub],
        snapshot_every: None,
        env: EnvConfig {
            users: 12,
            selected_users: 12,
            clusters: 3,
            dim: 5,
            arms_per_round: 10,
            contexts: ContextKind::Sphere,
            seed: 4,
            ..EnvConfig::default()
        },
        params: ParamConfig { threshold_scale: 0.1, exploration_scale: 2e-4, ..ParamConfig::default() },
    }
}

fn report_line(ok: bool, name: &str, detail: String) -> bool {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

pub fn verify(common: &Common, suites: &[Suite]) -> Result<(), Failure> {
    let cfg = common.load(verify_preset())?;
    let env = Environment::build(&cfg.env).map_err(config_err)?;
    let all = [Suite::Eigengrowth, Suite::Coverage, Suite::Conservation];
    let suites = if suites.is_empty() { &all[..] } else { suites };
    let seed = cfg.seeds[0];
    let delta = cfg.params.delta;
    if common.verbose() > 0 {
        let p = env.resolve(&cfg.params, cfg.horizon);
        eprintln!(
            "gap {:.4}, lambda_x {:.4}, T0 {}, beta {:.3}, radius at 100 pulls {:.4}",
            env.model.gap(),
            p.lambda_x,
            p.t0_budget().map_or_else(|e| e.to_string(), |t| t.to_string()),
            p.beta_for_round(1),
            p.radius(100)
        );
    }
    let mut ok = true;
    for suite in suites {
        match suite {
            Suite::Eigengrowth => {
                let sampler = Sampler::Sphere { dim: cfg.env.dim };
                let lambda_x = sampler.diversity().map_err(config_err)?.value();
                let r = verify_eigengrowth(&sampler, lambda_x, 1, cfg.env.arms_per_round, 200, None, delta, seed)
                    .map_err(config_err)?;
                ok &= report_line(
                    r.passed == Some(true),
                    "eigengrowth",
                    format!(
                        "{} of {} trials below lambda_x n / 2 after n = {} rounds (rate {:.3}, limit {delta})",
                        r.violations, r.trials, r.n_rounds, r.violation_rate
                    ),
                );
            }
            Suite::Coverage => {
                let r = verify_coverage(&env, &cfg.params, PolicyKind::UniClub, cfg.horizon, &cfg.seeds)
                    .map_err(|e| match e {
                        HarnessError::Agent(_) | HarnessError::Config(_) => config_err(e),
                        e => runtime_err(e),
                    })?;
                ok &= report_line(
                    r.passed,
                    "coverage",
                    format!(
                        "{} of {} checked rounds outside the confidence width (rate {:.4}, bound {:.4})",
                        r.violations, r.checked, r.violation_rate, r.bound
                    ),
                );
            }
            Suite::Conservation => {
                let kinds: Vec<PolicyKind> =
                    PolicyKind::ALL.into_iter().filter(|k| env.smoothing.is_some() || !k.is_smoothed()).collect();
                let r = verify_conservation(&env, &cfg.params, &kinds, cfg.horizon.min(2000), seed)
                    .map_err(runtime_err)?;
                let detail = match r.violations.first() {
                    None => format!("{} policy-rounds, no violations", r.checks),
                    Some(v) => format!("{} violations, first: {v}", r.violations.len()),
                };
                ok &= report_line(r.passed(), "conservation", detail);
            }
        }
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}

pub fn gen_data(common: &Common, out: &Path) -> Result<(), Failure> {
    let cfg = common.load(RunConfig::default())?;
    if cfg.env.source != EnvSource::Synthetic {
        return Err(Failure::Config("gen-data needs env.source = \"synthetic\"".into()));
    }
    let env = Environment::build(&cfg.env).map_err(config_err)?;
    write(out, &env.model.to_features(&env.pool))?;
    if common.verbose() > 0 {
        eprintln!("wrote {} users and {} arms to {}", env.model.users(), env.pool.len(), out.display());
    }
    Ok(())
}

pub fn svd_prep(
    input: &Path,
    out: &Path,
    dim: usize,
    threshold: Option<f64>,
    clusters: usize,
    selected: Option<usize>,
    seed: u64,
) -> Result<(), Failure> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", input.display())))?;
    let input_err = |e: EnvError| Failure::Config(format!("{}: {e}", input.display()));
    let feedback = parse_triplets(&text, threshold).map_err(input_err)?;
    let features = svd_features(&feedback.matrix, dim, clusters, selected, &mut stream(seed, 0, Purpose::Setup))
        .map_err(input_err)?;
    write(out, &write_features(&features.assignment, &features.user_vectors, &features.arms))
}

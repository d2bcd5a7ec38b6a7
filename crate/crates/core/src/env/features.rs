//! The `ENVV1` feature file.
//!
//! ```text
//! ENVV1 u=<int> d=<int> arms=<int> m=<int>
//! user <i> <cluster j> <d floats>      (u lines, i and j 0-based)
//! arm <a> <d floats>                   (arms lines, a 0-based)
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Floats may use
//! decimal or scientific notation. Errors carry 1-based line numbers.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use super::{ArmPool, ArmSet, ContextGen, EnvError, EnvModel, NoiseModel, Sampler, StochasticContextGen};
use crate::linalg;

/// Parsed contents of a feature file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub dim: usize,
    pub clusters: usize,
    pub assignment: Vec<usize>,
    pub user_vectors: Vec<Vec<f64>>,
    pub arms: ArmSet,
}

/// What a feature file does not carry but an environment needs.
#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub arms_per_round: usize,
    pub noise: NoiseModel,
}

impl FeatureFile {
    pub fn into_env(self, opts: &LoadOptions) -> Result<(EnvModel, Arc<ArmPool>), EnvError> {
        let pool = Arc::new(self.arms);
        let contexts = ContextGen::Stochastic(StochasticContextGen::new(opts.arms_per_round, Sampler::Pool(pool.clone()))?);
        let env = EnvModel::from_members(self.assignment, self.user_vectors, opts.noise, contexts)?;
        Ok((env, pool))
    }
}

fn perr(line: usize, message: impl Into<String>) -> EnvError {
    EnvError::Parse { line, message: message.into() }
}

fn header_field(tok: Option<&str>, key: &str, line: usize) -> Result<usize, EnvError> {
    let tok = tok.ok_or_else(|| perr(line, format!("header missing `{key}=`")))?;
    tok.strip_prefix(key)
        .and_then(|s| s.strip_prefix('='))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| perr(line, format!("malformed header field `{tok}`, expected `{key}=<int>`")))
}

fn parse_floats<'a>(toks: impl Iterator<Item = &'a str>, dim: usize, line: usize) -> Result<Vec<f64>, EnvError> {
    let vals = toks
        .map(|t| t.parse::<f64>().map_err(|_| perr(line, format!("invalid number `{t}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    if vals.len() != dim {
        return Err(perr(line, format!("expected {dim} values, found {}", vals.len())));
    }
    if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
        return Err(perr(line, format!("non-finite value {v}")));
    }
    Ok(vals)
}

pub fn parse_features(text: &str) -> Result<FeatureFile, EnvError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or_else(|| perr(1, "empty file, expected ENVV1 header"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("ENVV1") {
        return Err(perr(hline, "expected `ENVV1` header"));
    }
    let users = header_field(toks.next(), "u", hline)?;
    let dim = header_field(toks.next(), "d", hline)?;
    let arms = header_field(toks.next(), "arms", hline)?;
    let clusters = header_field(toks.next(), "m", hline)?;
    if toks.next().is_some() {
        return Err(perr(hline, "trailing tokens in header"));
    }
    if dim == 0 || users == 0 || clusters == 0 {
        return Err(perr(hline, "u, d and m must be positive"));
    }
    if arms == 0 {
        return Err(perr(hline, "empty arm section"));
    }

    let mut assignment = vec![usize::MAX; users];
    let mut user_vectors = vec![Vec::new(); users];
    let mut last = hline;
    for _ in 0..users {
        let (n, l) = lines.next().ok_or_else(|| perr(last + 1, format!("expected {users} user lines")))?;
        last = n;
        let mut toks = l.split_whitespace();
        if toks.next() != Some("user") {
            return Err(perr(n, "expected `user <i> <j> <floats>`"));
        }
        let i: usize = toks.next().and_then(|t| t.parse().ok()).ok_or_else(|| perr(n, "invalid user index"))?;
        let j: usize = toks.next().and_then(|t| t.parse().ok()).ok_or_else(|| perr(n, "invalid cluster index"))?;
        if i >= users {
            return Err(perr(n, format!("user index {i} out of range 0..{users}")));
        }
        if assignment[i] != usize::MAX {
            return Err(perr(n, format!("duplicate user {i}")));
        }
        if j >= clusters {
            return Err(perr(n, format!("cluster {j} out of range 0..{clusters}")));
        }
        let v = parse_floats(toks, dim, n)?;
        let norm = linalg::norm(&v);
        if norm > 1.0 + 1e-9 {
            return Err(perr(n, format!("user vector norm {norm} exceeds 1")));
        }
        assignment[i] = j;
        user_vectors[i] = v;
    }

    let mut data = vec![f64::NAN; arms * dim];
    let mut seen = vec![false; arms];
    for _ in 0..arms {
        let (n, l) = lines.next().ok_or_else(|| perr(last + 1, format!("expected {arms} arm lines")))?;
        last = n;
        let mut toks = l.split_whitespace();
        if toks.next() != Some("arm") {
            return Err(perr(n, "expected `arm <a> <floats>`"));
        }
        let a: usize = toks.next().and_then(|t| t.parse().ok()).ok_or_else(|| perr(n, "invalid arm index"))?;
        if a >= arms || seen[a] {
            return Err(perr(n, format!("arm index {a} out of range or duplicated")));
        }
        seen[a] = true;
        data[a * dim..(a + 1) * dim].copy_from_slice(&parse_floats(toks, dim, n)?);
    }
    if let Some((n, _)) = lines.next() {
        return Err(perr(n, "unexpected content after arm section"));
    }
    let mut used = vec![false; clusters];
    assignment.iter().for_each(|&j| used[j] = true);
    if let Some(j) = used.iter().position(|u| !u) {
        return Err(perr(hline, format!("cluster {j} has no members")));
    }
    Ok(FeatureFile { dim, clusters, assignment, user_vectors, arms: ArmSet::new(dim, data)? })
}

pub fn load_features(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<(EnvModel, Arc<ArmPool>), EnvError> {
    parse_features(&std::fs::read_to_string(path)?)?.into_env(opts)
}

/// Serializes users (with their own vectors and cluster labels) and a pool.
pub fn write_features(assignment: &[usize], user_vectors: &[Vec<f64>], arms: &ArmSet) -> String {
    let m = assignment.iter().max().map_or(0, |&j| j + 1);
    let mut out = String::new();
    let _ = writeln!(out, "ENVV1 u={} d={} arms={} m={}", assignment.len(), arms.dim(), arms.len(), m);
    for (i, (j, v)) in assignment.iter().zip(user_vectors).enumerate() {
        let _ = write!(out, "user {i} {j}");
        v.iter().for_each(|x| {
            let _ = write!(out, " {x:?}");
        });
        out.push('\n');
    }
    for (a, x) in arms.iter().enumerate() {
        let _ = write!(out, "arm {a}");
        x.iter().for_each(|v| {
            let _ = write!(out, " {v:?}");
        });
        out.push('\n');
    }
    out
}

impl EnvModel {
    /// `ENVV1` text for this environment's users together with `pool`.
    pub fn to_features(&self, pool: &ArmSet) -> String {
        write_features(self.assignment(), self.user_vectors(), pool)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_synthetic, SyntheticSpec};
    use crate::rng::{stream, Purpose};

    const OPTS: LoadOptions = LoadOptions { arms_per_round: 2, noise: NoiseModel { sd: 0.1, clamp: false } };

    #[test]
    fn round_trip_is_bit_identical() {
        let spec = SyntheticSpec { users: 30, dim: 7, total_arms: 50, clusters: 3, selected_users: 9, arms_per_round: 5 };
        let (env, pool) = make_synthetic(&spec, NoiseModel::default(), &mut stream(5, 0, Purpose::Setup)).unwrap();
        let text = env.to_features(&pool);
        let parsed = parse_features(&text).unwrap();
        assert_eq!(&parsed.arms, pool.as_ref());
        assert_eq!(parsed.assignment, env.assignment());
        assert_eq!(parsed.user_vectors, env.user_vectors());
        let (env2, _) = parsed.into_env(&OPTS).unwrap();
        for j in 0..3 {
            assert_eq!(env2.preference(j), env.preference(j));
        }
    }

    #[test]
    fn accepts_comments_and_scientific() {
        let text = "# test\nENVV1 u=2 d=2 arms=2 m=2\nuser 1 1 0 5e-1\n\nuser 0 0 1.0E-1 0\n# arms\narm 0 1 0\narm 1 0 1\n";
        let f = parse_features(text).unwrap();
        assert_eq!(f.user_vectors[1], vec![0.0, 0.5]);
        assert_eq!(f.assignment, vec![0, 1]);
    }

    fn err_line(text: &str) -> usize {
        match parse_features(text) {
            Err(EnvError::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn errors_report_line_numbers() {
        assert_eq!(err_line("ENVV1 u=1 d=2 arms=0 m=1\nuser 0 0 1 0\n"), 1);
        assert_eq!(err_line("ENVV2 u=1 d=2 arms=1 m=1\n"), 1);
        assert_eq!(err_line("# c\nENVV1 u=1 d=2 arms=1 m=1\nuser 0 0 1\narm 0 1 0\n"), 3);
        assert_eq!(err_line("ENVV1 u=1 d=2 arms=1 m=1\nuser 0 0 0 0\narm 0 1 NaN\n"), 3);
        assert_eq!(err_line("ENVV1 u=1 d=2 arms=1 m=1\nuser 0 0 0 0\narm 0 1 x\n"), 3);
        assert_eq!(err_line("ENVV1 u=1 d=2 arms=2 m=1\nuser 0 0 0 0\narm 0 1 0\n"), 4);
        assert_eq!(err_line("ENVV1 u=1 d=2 arms=1 m=1\nuser 0 0 2 0\narm 0 1 0\n"), 2);
        assert_eq!(err_line("ENVV1 u=1 d=two arms=1 m=1\n"), 1);
    }
}

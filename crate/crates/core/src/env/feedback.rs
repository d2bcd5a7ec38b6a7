//! Feature extraction from a user-item feedback log.
//!
//! The log is a whitespace-separated `user item value` triplet per line.
//! Ratings are optionally binarized, the dense feedback matrix is factored
//! with a truncated SVD, and a random subset of users is split into
//! planted clusters.

use std::collections::HashMap;

use rand::seq::index;

use super::synthetic::deal;
use super::{invalid, ArmSet, EnvError, FeatureFile};
use crate::linalg::{self, truncated_svd, DenseMat};
use crate::rng::StreamRng;

/// A parsed feedback matrix with the original user and item labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Feedback {
    /// Row labels in order of first appearance.
    pub users: Vec<String>,
    /// Column labels in order of first appearance.
    pub items: Vec<String>,
    pub matrix: DenseMat<f64>,
}

fn intern(labels: &mut Vec<String>, index: &mut HashMap<String, usize>, key: &str) -> usize {
    *index.entry(key.to_string()).or_insert_with(|| {
        labels.push(key.to_string());
        labels.len() - 1
    })
}

/// Parses `user item value` lines. With `threshold = Some(t)` a value above
/// `t` becomes 1 and anything else 0; with `None` values are kept. A
/// repeated pair keeps its last value. Blank lines and `#` comments are
/// skipped; errors carry 1-based line numbers.
pub fn parse_triplets(text: &str, threshold: Option<f64>) -> Result<Feedback, EnvError> {
    let (mut users, mut items) = (Vec::new(), Vec::new());
    let (mut user_index, mut item_index) = (HashMap::new(), HashMap::new());
    let mut entries = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let perr = |message: String| EnvError::Parse { line: n + 1, message };
        let toks: Vec<&str> = line.split_whitespace().collect();
        let [user, item, value] = toks[..] else {
            return Err(perr(format!("expected `user item value`, found {} fields", toks.len())));
        };
        let value: f64 = value.parse().map_err(|_| perr(format!("invalid value `{value}`")))?;
        if !value.is_finite() {
            return Err(perr(format!("non-finite value {value}")));
        }
        let value = match threshold {
            Some(t) => f64::from(u8::from(value > t)),
            None => value,
        };
        let i = intern(&mut users, &mut user_index, user);
        let j = intern(&mut items, &mut item_index, item);
        entries.push((i, j, value));
    }
    if entries.is_empty() {
        return Err(invalid("feedback log has no entries"));
    }
    let mut matrix = DenseMat::zeros(users.len(), items.len());
    for (i, j, v) in entries {
        matrix.set(i, j, v);
    }
    Ok(Feedback { users, items, matrix })
}

fn rescale(rows: &mut [Vec<f64>]) {
    let max = rows.iter().map(|r| linalg::norm(r)).fold(0.0, f64::max);
    if max > 0.0 {
        rows.iter_mut().flatten().for_each(|x| *x /= max);
    }
}

/// Rank-`dim` features of `r`: with `R ~ U S V^T`, users get rows of
/// `U S^(1/2)` and items rows of `V S^(1/2)`, each side divided by its
/// largest row norm so every vector has norm at most 1. `selected` users
/// (all when `None`) are sampled and dealt round-robin into `clusters`
/// groups.
pub fn svd_features(
    r: &DenseMat<f64>,
    dim: usize,
    clusters: usize,
    selected: Option<usize>,
    rng: &mut StreamRng,
) -> Result<FeatureFile, EnvError> {
    if r.is_zero() {
        return Err(invalid("matrix has rank 0"));
    }
    let selected = selected.unwrap_or(r.rows());
    if !(clusters >= 1 && clusters <= selected && selected <= r.rows()) {
        return Err(invalid(format!(
            "need 1 <= clusters <= selected <= users, got {clusters} / {selected} / {}",
            r.rows()
        )));
    }
    let svd = truncated_svd(r, dim)?;
    let root: Vec<f64> = svd.values.iter().map(|s| s.sqrt()).collect();
    let side = |m: &DenseMat<f64>| -> Vec<Vec<f64>> {
        let mut rows: Vec<Vec<f64>> =
            (0..m.rows()).map(|i| m.row(i).iter().zip(&root).map(|(a, s)| a * s).collect()).collect();
        rescale(&mut rows);
        rows
    };
    let users = side(&svd.left);
    let arms = side(&svd.right);

    let mut chosen = index::sample(rng, r.rows(), selected).into_vec();
    chosen.sort_unstable();
    let assignment = deal(selected, clusters, rng);
    let user_vectors = chosen.iter().map(|&i| users[i].clone()).collect();
    Ok(FeatureFile { dim, clusters, assignment, user_vectors, arms: ArmSet::from_vectors(dim, &arms)? })
}

//! Regression tree with variance-minimizing splits, shared by the random
//! forest and the gradient booster. Features are binary 0/1 values, so a
//! split tests `x[feature] > 0.5`.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        left: Box<Node>,
        right: Box<Node>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub root: Node,
}

impl Tree {
    pub fn predict(&self, features: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { value } => return *value,
                Node::Split { feature, left, right } => {
                    node = if features[*feature] > 0.5 { right } else { left };
                }
            }
        }
    }
}

pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Number of candidate features per split; `None` uses all.
    pub max_features: Option<usize>,
}

fn mean(rows: &[(Vec<f64>, f64)], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| rows[i].1).sum::<f64>() / idx.len() as f64
}

/// Sum of squared errors around the mean, times n (constant term dropped:
/// we compare sums of squares minus n*mean^2).
fn sse(rows: &[(Vec<f64>, f64)], idx: &[usize]) -> f64 {
    let m = mean(rows, idx);
    idx.iter().map(|&i| (rows[i].1 - m).powi(2)).sum()
}

fn grow(
    rows: &[(Vec<f64>, f64)],
    idx: &[usize],
    depth: usize,
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> Node {
    let leaf = || Node::Leaf { value: mean(rows, idx) };
    if depth >= params.max_depth || idx.len() < params.min_samples_split {
        return leaf();
    }
    let n_features = rows[0].0.len();
    let mut candidates: Vec<usize> = (0..n_features).collect();
    if let Some(k) = params.max_features {
        if k < n_features {
            candidates.partial_shuffle(rng, k);
            candidates.truncate(k);
            candidates.sort_unstable();
        }
    }
    let parent_sse = sse(rows, idx);
    let mut best: Option<(usize, f64)> = None;
    for &f in &candidates {
        let (left, right): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| rows[i].0[f] <= 0.5);
        if left.is_empty() || right.is_empty() {
            continue;
        }
        let child_sse = sse(rows, &left) + sse(rows, &right);
        let gain = parent_sse - child_sse;
        if gain > 1e-15 && best.map_or(true, |(_, g)| gain > g) {
            best = Some((f, gain));
        }
    }
    match best {
        None => leaf(),
        Some((f, _)) => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
                idx.iter().partition(|&&i| rows[i].0[f] <= 0.5);
            Node::Split {
                feature: f,
                left: Box::new(grow(rows, &left_idx, depth + 1, params, rng)),
                right: Box::new(grow(rows, &right_idx, depth + 1, params, rng)),
            }
        }
    }
}

/// Fits one tree on the indexed subset of rows.
pub fn fit_tree(
    rows: &[(Vec<f64>, f64)],
    idx: &[usize],
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> Tree {
    assert!(!idx.is_empty());
    Tree {
        root: grow(rows, idx, 0, params, rng),
    }
}

//! Depth-limited binary trees: second-order regression trees for boosting
//! and Gini classification trees for the forest.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    /// Rows with `x[feature] < threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] < threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

/// Candidate split found by a scan.
struct Best {
    feature: usize,
    threshold: f64,
    score: f64,
    cut: usize,
}

/// Sorts `rows` by feature `f` (ties by row index) and returns the order.
fn sorted_by(x: &[Vec<f64>], rows: &[usize], f: usize) -> Vec<usize> {
    let mut order = rows.to_vec();
    order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
    order
}

pub struct RegressionTreeParams {
    pub max_depth: usize,
    pub lambda: f64,
    pub min_child_weight: f64,
    /// Leaf values are multiplied by this.
    pub shrinkage: f64,
}

/// Fits one boosting tree on gradients `g` and hessians `h`. Leaf weight is
/// `-G / (H + lambda)`; a split must improve
/// `GL²/(HL+λ) + GR²/(HR+λ) - G²/(H+λ)` and keep both hessian sums at or
/// above `min_child_weight`.
pub fn fit_regression_tree(
    x: &[Vec<f64>],
    g: &[f64],
    h: &[f64],
    rows: &[usize],
    p: &RegressionTreeParams,
) -> Tree {
    let mut nodes = Vec::new();
    grow_regression(x, g, h, rows.to_vec(), 0, p, &mut nodes);
    Tree { nodes }
}

fn grow_regression(
    x: &[Vec<f64>],
    g: &[f64],
    h: &[f64],
    rows: Vec<usize>,
    depth: usize,
    p: &RegressionTreeParams,
    nodes: &mut Vec<Node>,
) -> usize {
    let gs: f64 = rows.iter().map(|&i| g[i]).sum();
    let hs: f64 = rows.iter().map(|&i| h[i]).sum();
    let id = nodes.len();
    nodes.push(Node::Leaf {
        value: -gs / (hs + p.lambda) * p.shrinkage,
    });
    if depth >= p.max_depth || rows.len() < 2 {
        return id;
    }
    let parent = gs * gs / (hs + p.lambda);
    let d = x[rows[0]].len();
    let mut best: Option<Best> = None;
    for f in 0..d {
        let order = sorted_by(x, &rows, f);
        let (mut gl, mut hl) = (0.0, 0.0);
        for k in 0..order.len() - 1 {
            let i = order[k];
            gl += g[i];
            hl += h[i];
            let (a, b) = (x[i][f], x[order[k + 1]][f]);
            if a == b {
                continue;
            }
            let (gr, hr) = (gs - gl, hs - hl);
            if hl < p.min_child_weight || hr < p.min_child_weight {
                continue;
            }
            let gain = gl * gl / (hl + p.lambda) + gr * gr / (hr + p.lambda) - parent;
            if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.score) {
                best = Some(Best { feature: f, threshold: a + (b - a) / 2.0, score: gain, cut: k + 1 });
            }
        }
    }
    let Some(b) = best else { return id };
    let order = sorted_by(x, &rows, b.feature);
    let (l, r) = order.split_at(b.cut);
    let left = grow_regression(x, g, h, l.to_vec(), depth + 1, p, nodes);
    let right = grow_regression(x, g, h, r.to_vec(), depth + 1, p, nodes);
    nodes[id] = Node::Split { feature: b.feature, threshold: b.threshold, left, right };
    id
}

pub struct ClassTreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features tried per split.
    pub max_features: usize,
}

/// Gini tree on 0/1 labels. `rows` may repeat (bootstrap). Leaves hold the
/// fraction of class 1.
pub fn fit_class_tree<R: Rng>(
    x: &[Vec<f64>],
    y: &[u8],
    rows: &[usize],
    p: &ClassTreeParams,
    rng: &mut R,
) -> Tree {
    let mut nodes = Vec::new();
    grow_class(x, y, rows.to_vec(), 0, p, rng, &mut nodes);
    Tree { nodes }
}

fn gini(pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let q = pos / n;
    2.0 * q * (1.0 - q)
}

fn grow_class<R: Rng>(
    x: &[Vec<f64>],
    y: &[u8],
    rows: Vec<usize>,
    depth: usize,
    p: &ClassTreeParams,
    rng: &mut R,
    nodes: &mut Vec<Node>,
) -> usize {
    let n = rows.len();
    let pos = rows.iter().filter(|&&i| y[i] == 1).count();
    let id = nodes.len();
    nodes.push(Node::Leaf {
        value: if n == 0 { 0.0 } else { pos as f64 / n as f64 },
    });
    if depth >= p.max_depth || pos == 0 || pos == n || n < 2 * p.min_samples_leaf {
        return id;
    }
    let d = x[rows[0]].len();
    let features = sample(rng, d, p.max_features.clamp(1, d)).into_vec();
    let parent = gini(pos as f64, n as f64) * n as f64;
    let mut best: Option<Best> = None;
    for &f in &features {
        let order = sorted_by(x, &rows, f);
        let mut left_pos = 0usize;
        for k in 0..n - 1 {
            left_pos += y[order[k]] as usize;
            let (a, b) = (x[order[k]][f], x[order[k + 1]][f]);
            let nl = k + 1;
            let nr = n - nl;
            if a == b || nl < p.min_samples_leaf || nr < p.min_samples_leaf {
                continue;
            }
            let impurity = gini(left_pos as f64, nl as f64) * nl as f64
                + gini((pos - left_pos) as f64, nr as f64) * nr as f64;
            let decrease = parent - impurity;
            if decrease > 1e-12 && best.as_ref().is_none_or(|b| decrease > b.score) {
                best = Some(Best { feature: f, threshold: a + (b - a) / 2.0, score: decrease, cut: nl });
            }
        }
    }
    let Some(b) = best else { return id };
    let order = sorted_by(x, &rows, b.feature);
    let (l, r) = order.split_at(b.cut);
    let left = grow_class(x, y, l.to_vec(), depth + 1, p, rng, nodes);
    let right = grow_class(x, y, r.to_vec(), depth + 1, p, rng, nodes);
    nodes[id] = Node::Split { feature: b.feature, threshold: b.threshold, left, right };
    id
}

//! Regression trees grown on gradient statistics, bagged into a random
//! forest or boosted sequentially.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, SeededRng};

const MIN_ROWS: usize = 10;

/// Nodes are stored flat and reference children by index; the root is
/// node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree { nodes: vec![Node::Leaf { value }] }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Schema("feature rows differ in length".into()));
        }
        Ok(Matrix { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

struct Grower<'a> {
    x: &'a Matrix,
    grad: &'a [f64],
    lambda: f64,
    max_depth: usize,
    min_leaf: usize,
    /// Features drawn per split, or all when `None`.
    subsample: Option<usize>,
    /// Added to every leaf weight.
    shift: f64,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn leaf_weight(&self, idx: &[usize]) -> f64 {
        let g: f64 = idx.iter().map(|&i| self.grad[i]).sum();
        self.shift - g / (idx.len() as f64 + self.lambda)
    }

    /// Best `(gain, feature, threshold, split position)` over candidate
    /// features; `idx` is reordered by the winning feature on return.
    fn best_split(&self, idx: &mut [usize], rng: &mut SeededRng) -> Option<(usize, f64, usize)> {
        let n = idx.len();
        let features: Vec<usize> = match self.subsample {
            Some(k) if k < self.x.cols => {
                let mut f = sample(rng, self.x.cols, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..self.x.cols).collect(),
        };
        let total: f64 = idx.iter().map(|&i| self.grad[i]).sum();
        let parent = total * total / (n as f64 + self.lambda);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for &f in &features {
            order.sort_by(|&a, &b| self.x.get(a, f).total_cmp(&self.x.get(b, f)).then(a.cmp(&b)));
            let mut left = 0.0;
            for k in 0..n - 1 {
                left += self.grad[order[k]];
                let (lo, hi) = (self.x.get(order[k], f), self.x.get(order[k + 1], f));
                if k + 1 < self.min_leaf || n - k - 1 < self.min_leaf || lo == hi {
                    continue;
                }
                let right = total - left;
                let nl = (k + 1) as f64;
                let nr = (n - k - 1) as f64;
                let gain = left * left / (nl + self.lambda) + right * right / (nr + self.lambda) - parent;
                if gain > best.map_or(1e-12 * (parent.abs() + 1e-300), |b| b.0) {
                    // Between adjacent floats the midpoint may round up to `hi`.
                    let mid = lo + (hi - lo) / 2.0;
                    best = Some((gain, f, if mid < hi { mid } else { lo }));
                }
            }
        }
        let (_, f, threshold) = best?;
        idx.sort_by(|&a, &b| self.x.get(a, f).total_cmp(&self.x.get(b, f)).then(a.cmp(&b)));
        let pos = idx.partition_point(|&i| self.x.get(i, f) <= threshold);
        (pos > 0 && pos < n).then_some((f, threshold, pos))
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut SeededRng) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: self.leaf_weight(idx) });
        if depth >= self.max_depth || idx.len() < 2 * self.min_leaf {
            return id;
        }
        let Some((feature, threshold, pos)) = self.best_split(idx, rng) else { return id };
        let (l, r) = idx.split_at_mut(pos);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

#[allow(clippy::too_many_arguments)]
fn grow_tree(
    x: &Matrix,
    grad: &[f64],
    idx: &mut [usize],
    lambda: f64,
    max_depth: usize,
    min_leaf: usize,
    subsample: Option<usize>,
    shift: f64,
    rng: &mut SeededRng,
) -> Tree {
    let mut g = Grower { x, grad, lambda, max_depth, min_leaf, subsample, shift, nodes: Vec::new() };
    g.grow(idx, 0, rng);
    Tree { nodes: g.nodes }
}

/// Reorders rows lexicographically by features then target, so fits do
/// not depend on the order rows were supplied in.
fn canonical(x: &Matrix, y: &[f64]) -> (Matrix, Vec<f64>) {
    let mut order: Vec<usize> = (0..x.rows).collect();
    order.sort_by(|&a, &b| {
        x.row(a)
            .iter()
            .zip(x.row(b))
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(y[a].total_cmp(&y[b]))
    });
    let data = order.iter().flat_map(|&r| x.row(r).iter().copied()).collect();
    let y = order.iter().map(|&r| y[r]).collect();
    (Matrix { rows: x.rows, cols: x.cols, data }, y)
}

/// Mean computed around the first value, exact for constant input.
fn anchored_mean(y: &[f64]) -> f64 {
    y[0] + y.iter().map(|v| v - y[0]).sum::<f64>() / y.len() as f64
}

fn check_training(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows != y.len() {
        return Err(Error::Schema(format!("{} feature rows for {} targets", x.rows, y.len())));
    }
    if y.len() < MIN_ROWS {
        return Err(Error::Range(format!("need at least {MIN_ROWS} rows, got {}", y.len())));
    }
    if x.data.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Range("training data contains non-finite values".into()));
    }
    Ok(())
}

fn check_columns(expected: usize, x: &Matrix) -> Result<()> {
    if x.cols != expected {
        return Err(Error::Schema(format!("{} feature columns, model expects {expected}", x.cols)));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` uses `⌈√m⌉`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    /// Worker threads. Results do not depend on this.
    pub threads: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 200, max_depth: 200, min_leaf: 1, max_features: None, bootstrap: true, threads: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

/// Bagged variance-reduction trees; tree `b` draws its bootstrap sample and
/// feature subsets from a stream derived from `(seed, b)`.
pub fn fit_random_forest(x: &Matrix, y: &[f64], cfg: &ForestConfig, seed: u64) -> Result<ForestModel> {
    check_training(x, y)?;
    if cfg.n_trees == 0 || cfg.max_depth == 0 || cfg.min_leaf == 0 {
        return Err(Error::Range("n_trees, max_depth and min_leaf must be positive".into()));
    }
    let (x, y) = canonical(x, y);
    let mean = anchored_mean(&y);
    // Leaves hold mean + average residual, so a constant target is reproduced exactly.
    let grad: Vec<f64> = y.iter().map(|v| mean - v).collect();
    let k = cfg.max_features.unwrap_or_else(|| (x.cols as f64).sqrt().ceil() as usize).clamp(1, x.cols.max(1));
    let build = |b: usize| {
        let mut r = rng::derived(seed, b as u64);
        let mut idx: Vec<usize> = if cfg.bootstrap {
            (0..x.rows).map(|_| r.random_range(0..x.rows)).collect()
        } else {
            (0..x.rows).collect()
        };
        grow_tree(&x, &grad, &mut idx, 0.0, cfg.max_depth, cfg.min_leaf, Some(k), mean, &mut r)
    };
    let threads = cfg.threads.max(1).min(cfg.n_trees);
    let trees = if threads == 1 {
        (0..cfg.n_trees).map(build).collect()
    } else {
        let mut slots: Vec<Option<Tree>> = vec![None; cfg.n_trees];
        let chunk = cfg.n_trees.div_ceil(threads);
        std::thread::scope(|s| {
            for (c, part) in slots.chunks_mut(chunk).enumerate() {
                let build = &build;
                s.spawn(move || {
                    for (j, slot) in part.iter_mut().enumerate() {
                        *slot = Some(build(c * chunk + j));
                    }
                });
            }
        });
        slots.into_iter().map(|t| t.expect("every tree built")).collect()
    };
    Ok(ForestModel { n_features: x.cols, trees })
}

impl ForestModel {
    /// Mean of the tree outputs for each row.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_columns(self.n_features, x)?;
        let b = self.trees.len() as f64;
        Ok((0..x.rows)
            .map(|r| self.trees.iter().map(|t| t.predict(x.row(r))).sum::<f64>() / b)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtConfig {
    /// Trees including the initial base-score tree.
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub min_leaf: usize,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self { n_trees: 200, max_depth: 6, learning_rate: 0.1, lambda: 1.0, min_leaf: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub n_features: usize,
    /// Tree outputs already include shrinkage.
    pub trees: Vec<Tree>,
}

/// Second-order boosting on squared loss: the first tree is the base score
/// `mean(y)`, each later tree fits `g_i = F(x_i) − y_i`, `h_i = 1` with
/// leaf weights `−η Σg / (Σh + λ)`.
pub fn fit_gbt(x: &Matrix, y: &[f64], cfg: &GbtConfig, seed: u64) -> Result<GbtModel> {
    check_training(x, y)?;
    if cfg.n_trees == 0 || cfg.max_depth == 0 || cfg.min_leaf == 0 {
        return Err(Error::Range("n_trees, max_depth and min_leaf must be positive".into()));
    }
    if cfg.learning_rate < 0.0 || cfg.lambda < 0.0 {
        return Err(Error::Range("learning_rate and lambda must be non-negative".into()));
    }
    let (x, y) = canonical(x, y);
    let n = y.len();
    let base = anchored_mean(&y);
    let mut trees = vec![Tree::leaf(base)];
    let mut f = vec![base; n];
    let mut r = rng::seeded(seed);
    for _ in 1..cfg.n_trees {
        let grad: Vec<f64> = f.iter().zip(&y).map(|(p, t)| p - t).collect();
        let mut idx: Vec<usize> = (0..n).collect();
        let mut tree = grow_tree(&x, &grad, &mut idx, cfg.lambda, cfg.max_depth, cfg.min_leaf, None, 0.0, &mut r);
        for node in &mut tree.nodes {
            if let Node::Leaf { value } = node {
                *value *= cfg.learning_rate;
            }
        }
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += tree.predict(x.row(i));
        }
        trees.push(tree);
    }
    Ok(GbtModel { n_features: x.cols, trees })
}

impl GbtModel {
    /// Sum of the tree outputs for each row.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_columns(self.n_features, x)?;
        Ok((0..x.rows).map(|r| self.trees.iter().map(|t| t.predict(x.row(r))).sum()).collect())
    }
}

//! CART regression trees and a bagged random forest.
//!
//! Trees are grown greedily: at each node a fresh subset of `max_features`
//! columns is drawn and the (column, threshold) pair with the lowest summed
//! squared error of the two children wins. Thresholds are midpoints between
//! consecutive distinct values and rows with `x <= threshold` go left.
//!
//! Each tree owns a random stream keyed by `(seed, tree index)`, so a forest
//! is bit-identical whether its trees are fitted serially or in parallel.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub n_trees: usize,
    pub max_features: usize,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            n_trees: 300,
            // ceil(22 / 3)
            max_features: 8,
            min_samples_leaf: 1,
            max_depth: None,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::config("n_trees must be at least 1"));
        }
        if self.max_features == 0 || self.max_features > n_features {
            return Err(Error::config(format!(
                "max_features must be in [1, {n_features}], got {}",
                self.max_features
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::config("min_samples_leaf must be at least 1"));
        }
        Ok(())
    }
}

/// Scale the trees were fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSpace {
    Raw,
    Log,
}

/// Tree node in a preorder array. The left child of a split at index `i`
/// is at `i + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_index(x)].leaf_value()
    }

    /// Index of the leaf `x` is routed to.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    right,
                } => {
                    i = if x[feature] <= threshold {
                        i + 1
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { right, .. } => 1 + walk(nodes, i + 1).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Structural sanity for trees read from disk.
    pub(crate) fn validate(&self, n_features: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::config(format!("malformed tree: {msg}")));
        if self.nodes.is_empty() {
            return bad("no nodes".into());
        }
        // Every subtree must occupy a contiguous preorder block.
        fn end_of(nodes: &[Node], i: usize, n_features: usize, depth: usize) -> Option<usize> {
            if i >= nodes.len() || depth > nodes.len() {
                return None;
            }
            match nodes[i] {
                Node::Leaf { value } => value.is_finite().then_some(i + 1),
                Node::Split {
                    feature,
                    threshold,
                    right,
                } => {
                    if feature >= n_features || threshold.is_nan() {
                        return None;
                    }
                    let left_end = end_of(nodes, i + 1, n_features, depth + 1)?;
                    if left_end != right {
                        return None;
                    }
                    end_of(nodes, right, n_features, depth + 1)
                }
            }
        }
        match end_of(&self.nodes, 0, n_features, 0) {
            Some(end) if end == self.nodes.len() => Ok(()),
            _ => bad("inconsistent preorder layout".into()),
        }
    }
}

impl Node {
    fn leaf_value(&self) -> f64 {
        match *self {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("routing ends at a leaf"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    sse: f64,
}

struct Grower<'a, R> {
    x: &'a Matrix,
    y: &'a [f64],
    hp: &'a Hyperparams,
    rng: &'a mut R,
    nodes: Vec<Node>,
    scratch: Vec<(f64, f64)>,
}

impl<R: Rng> Grower<'_, R> {
    fn grow(&mut self, rows: &mut [usize], depth: usize) {
        let n = rows.len();
        let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / n as f64;
        let first = self.y[rows[0]];
        let pure = rows.iter().all(|&r| self.y[r] == first);
        let depth_reached = self.hp.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_reached || n < 2 * self.hp.min_samples_leaf {
            self.nodes.push(Node::Leaf { value: mean });
            return;
        }

        let features = rng::choose_distinct(&mut *self.rng, self.x.n_cols(), self.hp.max_features);
        let node_sse: f64 = rows.iter().map(|&r| (self.y[r] - mean).powi(2)).sum();
        let Some(best) = self.best_split(rows, &features, mean, node_sse) else {
            self.nodes.push(Node::Leaf { value: mean });
            return;
        };

        let mut n_left = 0;
        for i in 0..n {
            if self.x.get(rows[i], best.feature) <= best.threshold {
                rows.swap(i, n_left);
                n_left += 1;
            }
        }
        debug_assert!(n_left > 0 && n_left < n);

        let at = self.nodes.len();
        self.nodes.push(Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            right: 0,
        });
        let (left, right) = rows.split_at_mut(n_left);
        self.grow(left, depth + 1);
        let right_at = self.nodes.len();
        if let Node::Split { right, .. } = &mut self.nodes[at] {
            *right = right_at;
        }
        self.grow(right, depth + 1);
    }

    /// Lowest-SSE split over the candidate columns. Candidates are scanned by
    /// ascending feature and threshold, and a later candidate only replaces
    /// the incumbent when it is better by more than rounding noise, so exact
    /// ties go to the lowest feature index, then the lowest threshold.
    fn best_split(
        &mut self,
        rows: &[usize],
        features: &[usize],
        mean: f64,
        node_sse: f64,
    ) -> Option<Candidate> {
        let n = rows.len();
        let min_leaf = self.hp.min_samples_leaf;
        let tol = 1e-12 * node_sse + f64::MIN_POSITIVE;
        let mut best: Option<Candidate> = None;

        for &feature in features {
            self.scratch.clear();
            self.scratch.extend(
                rows.iter()
                    .map(|&r| (self.x.get(r, feature), self.y[r] - mean)),
            );
            self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));

            let (total, total_sq) = self
                .scratch
                .iter()
                .fold((0.0, 0.0), |(s, q), &(_, d)| (s + d, q + d * d));
            let (mut sum_l, mut sq_l) = (0.0, 0.0);
            for i in 1..n {
                let (prev, d) = self.scratch[i - 1];
                sum_l += d;
                sq_l += d * d;
                let next = self.scratch[i].0;
                if i < min_leaf || n - i < min_leaf || !(prev < next) {
                    continue;
                }
                let (nl, nr) = (i as f64, (n - i) as f64);
                let sum_r = total - sum_l;
                let sse = (sq_l - sum_l * sum_l / nl) + ((total_sq - sq_l) - sum_r * sum_r / nr);
                if best.is_none_or(|b| sse < b.sse - tol) {
                    best = Some(Candidate {
                        feature,
                        threshold: midpoint(prev, next),
                        sse,
                    });
                }
            }
        }
        best
    }
}

/// Midpoint of `a < b` that still separates them after rounding.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = 0.5 * a + 0.5 * b;
    if a <= m && m < b {
        m
    } else {
        a
    }
}

/// Grow one tree on the rows listed in `sample` (repeats allowed, as in a
/// bootstrap draw). Feature subsets are drawn from `rng`.
pub fn fit_tree<R: Rng>(
    x: &Matrix,
    y: &[f64],
    sample: &[usize],
    hp: &Hyperparams,
    rng: &mut R,
) -> Tree {
    assert!(!sample.is_empty(), "fit_tree needs at least one row");
    assert_eq!(x.n_rows(), y.len());
    let mut rows = sample.to_vec();
    let mut grower = Grower {
        x,
        y,
        hp,
        rng,
        nodes: Vec::new(),
        scratch: Vec::with_capacity(rows.len()),
    };
    grower.grow(&mut rows, 0);
    Tree {
        nodes: grower.nodes,
    }
}

/// A fitted ensemble. Immutable and safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub target_space: TargetSpace,
    pub n_features: usize,
    trees: Vec<Tree>,
}

fn fit_one(x: &Matrix, y: &[f64], hp: &Hyperparams, seed: u64, t: usize) -> Tree {
    let mut rng = rng::substream(seed, Purpose::Tree, t as u64);
    let n = x.n_rows();
    let bootstrap: Vec<usize> = (0..n).map(|_| rng::index_below(&mut rng, n)).collect();
    fit_tree(x, y, &bootstrap, hp, &mut rng)
}

fn check_inputs(x: &Matrix, y: &[f64], hp: &Hyperparams) -> Result<()> {
    hp.validate(x.n_cols())?;
    if x.n_rows() == 0 {
        return Err(Error::config("cannot fit a forest on zero rows"));
    }
    if x.n_rows() != y.len() {
        return Err(Error::config(format!(
            "{} feature rows but {} targets",
            x.n_rows(),
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite training target".into()));
    }
    Ok(())
}

/// Bagged forest; trees are fitted on the current rayon pool.
pub fn fit_forest(
    x: &Matrix,
    y: &[f64],
    hp: &Hyperparams,
    seed: u64,
    target_space: TargetSpace,
) -> Result<ForestModel> {
    check_inputs(x, y, hp)?;
    let trees = (0..hp.n_trees)
        .into_par_iter()
        .map(|t| fit_one(x, y, hp, seed, t))
        .collect();
    Ok(ForestModel {
        hyperparams: *hp,
        seed,
        target_space,
        n_features: x.n_cols(),
        trees,
    })
}

/// Same result as [`fit_forest`], on the calling thread only.
pub fn fit_forest_serial(
    x: &Matrix,
    y: &[f64],
    hp: &Hyperparams,
    seed: u64,
    target_space: TargetSpace,
) -> Result<ForestModel> {
    check_inputs(x, y, hp)?;
    let trees = (0..hp.n_trees)
        .map(|t| fit_one(x, y, hp, seed, t))
        .collect();
    Ok(ForestModel {
        hyperparams: *hp,
        seed,
        target_space,
        n_features: x.n_cols(),
        trees,
    })
}

impl ForestModel {
    /// Assemble a model from already-built trees.
    pub fn from_trees(
        trees: Vec<Tree>,
        hyperparams: Hyperparams,
        seed: u64,
        target_space: TargetSpace,
        n_features: usize,
    ) -> Result<Self> {
        let model = Self {
            hyperparams,
            seed,
            target_space,
            n_features,
            trees,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::config("forest has no trees"));
        }
        if self.trees.len() != self.hyperparams.n_trees {
            return Err(Error::config(format!(
                "forest declares {} trees but holds {}",
                self.hyperparams.n_trees,
                self.trees.len()
            )));
        }
        self.trees
            .iter()
            .try_for_each(|t| t.validate(self.n_features))
    }

    fn check_width(&self, x: &[f64]) {
        assert_eq!(
            x.len(),
            self.n_features,
            "feature row has {} columns, model expects {}",
            x.len(),
            self.n_features
        );
    }

    /// Per-tree predictions, in tree order.
    pub fn tree_predictions(&self, x: &[f64]) -> Vec<f64> {
        self.check_width(x);
        self.trees.iter().map(|t| t.predict(x)).collect()
    }

    /// Ensemble mean of the tree predictions.
    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        mean(&self.tree_predictions(x))
    }

    /// Spread of the tree predictions, population form (divisor N).
    pub fn predict_std(&self, x: &[f64]) -> f64 {
        population_std(&self.tree_predictions(x))
    }

    /// `(mean, std)` from a single pass over the trees.
    pub fn predict_mean_std(&self, x: &[f64]) -> (f64, f64) {
        let preds = self.tree_predictions(x);
        (mean(&preds), population_std(&preds))
    }

    /// Uncalibrated band `mean ± k·std`.
    pub fn heuristic_interval(&self, x: &[f64], k: f64) -> Result<(f64, f64)> {
        let (m, s) = self.predict_mean_std(x);
        heuristic_band(m, s, k)
    }

    pub fn predict_rows(&self, x: &Matrix) -> Vec<f64> {
        x.rows().map(|r| self.predict_mean(r)).collect()
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

pub fn heuristic_band(mean: f64, std: f64, k: f64) -> Result<(f64, f64)> {
    if !(k >= 0.0) {
        return Err(Error::Domain(format!(
            "interval multiplier must be >= 0, got {k}"
        )));
    }
    Ok((mean - k * std, mean + k * std))
}

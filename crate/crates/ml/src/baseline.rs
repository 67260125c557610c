//! Classical baselines: CART decision tree, SAMME AdaBoost over stumps and a
//! one-vs-rest linear SVM.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::standardize::Standardizer;
use uwoc_core::seed::rng_from_seed;

fn check_training_set(x: &[&[f64]], y: &[usize], n_classes: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(contract(format!("{} rows vs {} labels", x.len(), y.len())));
    }
    if let Some(&l) = y.iter().find(|&&l| l >= n_classes) {
        return Err(contract(format!("label {l} outside 0..{n_classes}")));
    }
    let first = y.first().ok_or_else(|| contract("empty training set"))?;
    if y.iter().all(|l| l == first) {
        return Err(contract("training set contains a single class"));
    }
    Ok(())
}

fn weighted_argmax(w: &[f64]) -> usize {
    w.iter().enumerate().fold(0, |best, (i, &v)| if v > w[best] { i } else { best })
}

/// `W - sum(w_c^2) / W`, the Gini impurity scaled by the node weight.
fn gini_mass(w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    total - w.iter().map(|v| v * v).sum::<f64>() / total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: 12, min_leaf: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf { class: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Greedy binary tree on Gini impurity; `x <= threshold` goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

struct TreeBuilder<'a> {
    x: &'a [&'a [f64]],
    y: &'a [usize],
    w: &'a [f64],
    n_classes: usize,
    params: TreeParams,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn class_weights(&self, idx: &[usize]) -> Vec<f64> {
        let mut cw = vec![0.0; self.n_classes];
        for &i in idx {
            cw[self.y[i]] += self.w[i];
        }
        cw
    }

    /// Best `(feature, threshold, impurity)` over all admissible splits.
    fn best_split(&self, idx: &[usize], parent: &[f64]) -> Option<(usize, f64, f64)> {
        let n_features = self.x[0].len();
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order = idx.to_vec();
        for f in 0..n_features {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left = vec![0.0; self.n_classes];
            let mut right = parent.to_vec();
            for p in 0..order.len() - 1 {
                let i = order[p];
                left[self.y[i]] += self.w[i];
                right[self.y[i]] -= self.w[i];
                let (a, b) = (self.x[i][f], self.x[order[p + 1]][f]);
                if a == b || p + 1 < self.params.min_leaf || order.len() - p - 1 < self.params.min_leaf {
                    continue;
                }
                let imp = gini_mass(&left) + gini_mass(&right);
                if best.map_or(true, |(_, _, bi)| imp < bi - 1e-12) {
                    best = Some((f, a + (b - a) / 2.0, imp));
                }
            }
        }
        best
    }

    fn build(&mut self, idx: &[usize], depth: usize) -> usize {
        let cw = self.class_weights(idx);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { class: weighted_argmax(&cw) });
        let impurity = gini_mass(&cw);
        if depth >= self.params.max_depth || idx.len() < 2 * self.params.min_leaf.max(1) || impurity <= 1e-12 {
            return id;
        }
        let Some((feature, threshold, imp)) = self.best_split(idx, &cw) else {
            return id;
        };
        if imp >= impurity - 1e-12 {
            return id;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.build(&l, depth + 1);
        let right = self.build(&r, depth + 1);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

impl DecisionTree {
    pub fn fit(x: &[&[f64]], y: &[usize], n_classes: usize, params: TreeParams) -> Result<Self> {
        Self::fit_weighted(x, y, &vec![1.0; y.len()], n_classes, params)
    }

    pub fn fit_weighted(x: &[&[f64]], y: &[usize], w: &[f64], n_classes: usize, params: TreeParams) -> Result<Self> {
        check_training_set(x, y, n_classes)?;
        if w.len() != y.len() || w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(contract("sample weights must be finite, nonnegative, one per row"));
        }
        let mut b = TreeBuilder { x, y, w, n_classes, params, nodes: Vec::new() };
        let all: Vec<usize> = (0..y.len()).collect();
        b.build(&all, 0);
        Ok(Self { nodes: b.nodes })
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        let mut n = 0;
        loop {
            match self.nodes[n] {
                Node::Leaf { class } => return class,
                Node::Split { feature, threshold, left, right } => {
                    n = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], n: usize) -> usize {
            match nodes[n] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Multiclass AdaBoost (SAMME) over depth-1 trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoost {
    stumps: Vec<(DecisionTree, f64)>,
    n_classes: usize,
}

impl AdaBoost {
    pub fn fit(x: &[&[f64]], y: &[usize], n_classes: usize, rounds: usize, learning_rate: f64) -> Result<Self> {
        check_training_set(x, y, n_classes)?;
        if rounds == 0 || !(learning_rate > 0.0) {
            return Err(contract("AdaBoost needs at least one round and a positive learning rate"));
        }
        let stump = TreeParams { max_depth: 1, min_leaf: 1 };
        let k = n_classes as f64;
        let n = y.len();
        let mut w = vec![1.0 / n as f64; n];
        let mut stumps = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let tree = DecisionTree::fit_weighted(x, y, &w, n_classes, stump)?;
            let miss: Vec<bool> = x.iter().zip(y).map(|(r, &c)| tree.predict(r) != c).collect();
            let err = miss.iter().zip(&w).filter(|(m, _)| **m).map(|(_, v)| v).sum::<f64>() / w.iter().sum::<f64>();
            if err <= 0.0 {
                // A perfect stump decides alone.
                stumps.push((tree, 1.0));
                break;
            }
            if err >= 1.0 - 1.0 / k {
                if stumps.is_empty() {
                    stumps.push((tree, 1.0));
                }
                break;
            }
            let alpha = learning_rate * (((1.0 - err) / err).ln() + (k - 1.0).ln());
            for (wi, m) in w.iter_mut().zip(&miss) {
                if *m {
                    *wi *= alpha.exp();
                }
            }
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= total);
            stumps.push((tree, alpha));
        }
        Ok(Self { stumps, n_classes })
    }

    pub fn n_rounds(&self) -> usize {
        self.stumps.len()
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        let mut votes = vec![0.0; self.n_classes];
        for (t, a) in &self.stumps {
            votes[t.predict(row)] += a;
        }
        weighted_argmax(&votes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// L2 regularization strength.
    pub lambda: f64,
    pub epochs: usize,
    /// Initial step of the `eta0 / (1 + eta0 * lambda * t)` schedule.
    pub eta0: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { lambda: 1e-3, epochs: 50, eta0: 0.1 }
    }
}

/// One-vs-rest linear SVM trained by hinge-loss subgradient descent on
/// standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    scaler: Standardizer,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl LinearSvm {
    pub fn fit(x: &[&[f64]], y: &[usize], n_classes: usize, params: SvmParams, seed: u64) -> Result<Self> {
        check_training_set(x, y, n_classes)?;
        if params.epochs == 0 || !(params.lambda > 0.0) || !(params.eta0 > 0.0) {
            return Err(contract("SVM needs positive lambda, eta0 and epochs"));
        }
        let scaler = Standardizer::fit(x)?;
        let z: Vec<Vec<f64>> = x.iter().map(|r| scaler.transform(r)).collect();
        let d = z[0].len();
        let mut weights = vec![vec![0.0; d]; n_classes];
        let mut bias = vec![0.0; n_classes];
        let mut order: Vec<usize> = (0..y.len()).collect();
        let mut rng = rng_from_seed(seed);
        let mut t = 0usize;
        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let eta = params.eta0 / (1.0 + params.eta0 * params.lambda * t as f64);
                t += 1;
                for c in 0..n_classes {
                    let target = if y[i] == c { 1.0 } else { -1.0 };
                    let w = &mut weights[c];
                    let margin = target * (dot(w, &z[i]) + bias[c]);
                    let shrink = 1.0 - eta * params.lambda;
                    if margin < 1.0 {
                        for (wj, xj) in w.iter_mut().zip(&z[i]) {
                            *wj = shrink * *wj + eta * target * xj;
                        }
                        bias[c] += eta * target;
                    } else {
                        w.iter_mut().for_each(|wj| *wj *= shrink);
                    }
                }
            }
        }
        Ok(Self { scaler, weights, bias })
    }

    pub fn decision(&self, row: &[f64]) -> Vec<f64> {
        let z = self.scaler.transform(row);
        self.weights.iter().zip(&self.bias).map(|(w, b)| dot(w, &z) + b).collect()
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        weighted_argmax(&self.decision(row))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

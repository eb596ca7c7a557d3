//! Second-order gradient boosting over depth-limited regression trees.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::stats::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// Binary log-loss on labels in {0, 1}; the margin is a logit.
    Logistic,
    /// Half squared error; the margin is the prediction.
    Squared,
}

impl Loss {
    fn grad_hess(self, margin: f64, target: f64) -> (f64, f64) {
        match self {
            Loss::Logistic => {
                let p = sigmoid(margin);
                (p - target, (p * (1.0 - p)).max(1e-16))
            }
            Loss::Squared => (margin - target, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Shrinkage applied to every tree output at prediction time.
    pub eta: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    pub min_child_weight: f64,
    /// Row fraction sampled per tree; 1.0 uses every row.
    pub subsample: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 3,
            eta: 0.3,
            lambda: 1.0,
            min_child_weight: 1.0,
            subsample: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] < threshold` go to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A regression tree stored as a flat node list rooted at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] < *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    fn fit(x: &[Vec<f64>], grad: &[f64], hess: &[f64], rows: Vec<usize>, params: &TreeParams) -> Self {
        let mut tree = RegressionTree { nodes: Vec::new() };
        tree.grow(x, grad, hess, rows, 0, params);
        tree
    }

    fn grow(
        &mut self,
        x: &[Vec<f64>],
        grad: &[f64],
        hess: &[f64],
        rows: Vec<usize>,
        depth: usize,
        params: &TreeParams,
    ) -> usize {
        let g: f64 = rows.iter().map(|&i| grad[i]).sum();
        let h: f64 = rows.iter().map(|&i| hess[i]).sum();
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            value: -g / (h + params.lambda),
        });
        if depth >= params.max_depth || rows.len() < 2 {
            return id;
        }
        let Some((feature, threshold)) = best_split(x, grad, hess, &rows, g, h, params) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| x[i][feature] < threshold);
        let left = self.grow(x, grad, hess, left_rows, depth + 1, params);
        let right = self.grow(x, grad, hess, right_rows, depth + 1, params);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

fn leaf_objective(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

/// Exact greedy search; returns the split with the largest positive gain.
fn best_split(
    x: &[Vec<f64>],
    grad: &[f64],
    hess: &[f64],
    rows: &[usize],
    g_total: f64,
    h_total: f64,
    params: &TreeParams,
) -> Option<(usize, f64)> {
    let n_features = x.get(rows[0]).map_or(0, Vec::len);
    let parent = leaf_objective(g_total, h_total, params.lambda);
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = rows.to_vec();
    #[allow(clippy::needless_range_loop)]
    for f in 0..n_features {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let (mut gl, mut hl) = (0.0, 0.0);
        for k in 0..order.len() - 1 {
            let i = order[k];
            gl += grad[i];
            hl += hess[i];
            let (v, next) = (x[i][f], x[order[k + 1]][f]);
            if v == next {
                continue;
            }
            let (gr, hr) = (g_total - gl, h_total - hl);
            if hl < params.min_child_weight || hr < params.min_child_weight {
                continue;
            }
            let gain = 0.5
                * (leaf_objective(gl, hl, params.lambda) + leaf_objective(gr, hr, params.lambda)
                    - parent);
            if gain > 1e-12 && best.is_none_or(|(b, _, _)| gain > b) {
                best = Some((gain, f, v + (next - v) / 2.0));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

/// Additive tree ensemble: `margin = base_score + eta * sum(tree outputs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    pub loss: Loss,
    pub params: TreeParams,
    pub base_score: f64,
    pub trees: Vec<RegressionTree>,
}

impl BoostedTrees {
    pub fn new(loss: Loss, params: TreeParams) -> Self {
        Self {
            loss,
            params,
            base_score: 0.0,
            trees: Vec::new(),
        }
    }

    pub fn margin(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        self.base_score + self.params.eta * sum
    }

    /// Probability for logistic loss, raw prediction for squared loss.
    pub fn predict(&self, row: &[f64]) -> f64 {
        match self.loss {
            Loss::Logistic => sigmoid(self.margin(row)),
            Loss::Squared => self.margin(row),
        }
    }

    /// Appends `rounds` trees fitted to the current residual gradients. Prior
    /// trees are kept, so repeated calls continue from the existing ensemble.
    pub fn boost<R: Rng>(&mut self, x: &[Vec<f64>], y: &[f64], rounds: usize, rng: &mut R) {
        if x.is_empty() {
            return;
        }
        if self.trees.is_empty() && self.loss == Loss::Squared {
            self.base_score = crate::stats::mean(y);
        }
        let mut margins: Vec<f64> = x.iter().map(|r| self.margin(r)).collect();
        let mut grad = vec![0.0; x.len()];
        let mut hess = vec![0.0; x.len()];
        for _ in 0..rounds {
            for i in 0..x.len() {
                (grad[i], hess[i]) = self.loss.grad_hess(margins[i], y[i]);
            }
            let rows: Vec<usize> = if self.params.subsample < 1.0 {
                let picked: Vec<usize> =
                    (0..x.len()).filter(|_| rng.gen_bool(self.params.subsample)).collect();
                if picked.is_empty() {
                    (0..x.len()).collect()
                } else {
                    picked
                }
            } else {
                (0..x.len()).collect()
            };
            let tree = RegressionTree::fit(x, &grad, &hess, rows, &self.params);
            for (m, row) in margins.iter_mut().zip(x) {
                *m += self.params.eta * tree.predict(row);
            }
            self.trees.push(tree);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_logistic_tree_matches_newton_step() {
        // One feature, x<2 are all label 0, x>=2 label 1. At margin 0, p=0.5 so
        // g = 0.5 - y and h = 0.25; each side has 3 rows.
        let x: Vec<Vec<f64>> = [0.0, 0.5, 1.0, 2.0, 2.5, 3.0].iter().map(|&v| vec![v]).collect();
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let params = TreeParams {
            max_depth: 1,
            min_child_weight: 0.0,
            ..TreeParams::default()
        };
        let mut model = BoostedTrees::new(Loss::Logistic, params);
        model.boost(&x, &y, 1, &mut ChaCha8Rng::seed_from_u64(0));
        let tree = &model.trees[0];
        // left leaf: G = 1.5, H = 0.75 -> -1.5 / 1.75
        assert!((tree.predict(&[0.0]) - (-1.5 / 1.75)).abs() < 1e-12);
        assert!((tree.predict(&[3.0]) - (1.5 / 1.75)).abs() < 1e-12);
        match tree.nodes[0] {
            TreeNode::Split { threshold, .. } => assert_eq!(threshold, 1.5),
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn trees_respect_max_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.gen(), rng.gen(), rng.gen()]).collect();
        let y: Vec<f64> = x.iter().map(|r| ((r[0] * 7.0).sin() > r[1]) as u8 as f64).collect();
        let mut model = BoostedTrees::new(Loss::Logistic, TreeParams::default());
        model.boost(&x, &y, 20, &mut rng);
        assert_eq!(model.trees.len(), 20);
        assert!(model.trees.iter().all(|t| t.depth() <= 3));
    }

    #[test]
    fn squared_loss_fits_step_function() {
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..100).map(|i| if i < 50 { 1.0 } else { 5.0 }).collect();
        let mut model = BoostedTrees::new(Loss::Squared, TreeParams::default());
        model.boost(&x, &y, 50, &mut ChaCha8Rng::seed_from_u64(0));
        assert!((model.predict(&[10.0]) - 1.0).abs() < 0.05);
        assert!((model.predict(&[90.0]) - 5.0).abs() < 0.05);
    }
}

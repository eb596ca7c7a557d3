//! Real-vs-synthetic classifiers with warm-start updates.
//!
//! Label convention: real rows are 1, synthetic rows are 0. A model's held-out
//! accuracy is the score the optimizer tries to push down toward chance.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::learners::{BoostedTrees, Loss, LogisticParams, LogisticRegression, TreeParams};
use crate::table::{Encoder, FeatureMatrix, Table};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum DiscriminatorError {
    #[error("training batch contains a single class")]
    SingleClass,
    #[error("{0} labels for {1} feature rows")]
    LengthMismatch(usize, usize),
    #[error("synthetic table is empty")]
    EmptySynthetic,
    #[error("each class needs at least 2 rows for a train/test split (real {real}, synthetic {synthetic})")]
    TooFewRows { real: usize, synthetic: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorKind {
    Logistic,
    BoostedTrees,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorConfig {
    pub kind: DiscriminatorKind,
    pub max_depth: usize,
    pub eta: f64,
    pub lambda: f64,
    pub trees_per_update: usize,
    pub logistic: LogisticParams,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            kind: DiscriminatorKind::BoostedTrees,
            max_depth: 3,
            eta: 0.3,
            lambda: 1.0,
            trees_per_update: 10,
            logistic: LogisticParams::default(),
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelState {
    Logistic(LogisticRegression),
    BoostedTrees(BoostedTrees),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorModel {
    pub state: ModelState,
    pub trees_per_update: usize,
    pub rounds_seen: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub total: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub accuracy: f64,
    pub n_test: usize,
    pub correct: usize,
    pub synthetic: ClassCounts,
    pub real: ClassCounts,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    model: DiscriminatorModel,
}

impl DiscriminatorModel {
    pub fn new(config: &DiscriminatorConfig) -> Self {
        let state = match config.kind {
            DiscriminatorKind::Logistic => ModelState::Logistic(LogisticRegression::new(config.logistic)),
            DiscriminatorKind::BoostedTrees => ModelState::BoostedTrees(BoostedTrees::new(
                Loss::Logistic,
                TreeParams {
                    max_depth: config.max_depth,
                    eta: config.eta,
                    lambda: config.lambda,
                    ..TreeParams::default()
                },
            )),
        };
        Self {
            state,
            trees_per_update: config.trees_per_update,
            rounds_seen: 0,
        }
    }

    pub fn kind(&self) -> DiscriminatorKind {
        match self.state {
            ModelState::Logistic(_) => DiscriminatorKind::Logistic,
            ModelState::BoostedTrees(_) => DiscriminatorKind::BoostedTrees,
        }
    }

    /// Probability that `row` is real.
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        match &self.state {
            ModelState::Logistic(m) => m.predict(row),
            ModelState::BoostedTrees(m) => m.predict(row),
        }
    }

    /// Real iff the probability is strictly above one half.
    pub fn predict(&self, row: &[f64]) -> u8 {
        u8::from(self.predict_proba(row) > 0.5)
    }

    /// Returns a new model trained further on this batch; `self` is untouched.
    pub fn fit_update(
        &self,
        features: &FeatureMatrix,
        labels: &[u8],
    ) -> Result<DiscriminatorModel, DiscriminatorError> {
        if features.n_rows() != labels.len() {
            return Err(DiscriminatorError::LengthMismatch(labels.len(), features.n_rows()));
        }
        if !labels.contains(&0) || !labels.contains(&1) {
            return Err(DiscriminatorError::SingleClass);
        }
        let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
        let mut next = self.clone();
        match &mut next.state {
            ModelState::Logistic(m) => m.fit(&features.rows, &y),
            ModelState::BoostedTrees(m) => {
                // Boosting with subsample 1.0 never draws from the rng.
                let mut rng = ChaCha8Rng::seed_from_u64(self.rounds_seen as u64);
                m.boost(&features.rows, &y, self.trees_per_update, &mut rng);
            }
        }
        next.rounds_seen += 1;
        Ok(next)
    }

    /// 0/1 accuracy at threshold 0.5.
    pub fn evaluate(&self, features: &FeatureMatrix, labels: &[u8]) -> ScoreReport {
        let mut report = ScoreReport {
            accuracy: 0.0,
            n_test: labels.len(),
            correct: 0,
            synthetic: ClassCounts::default(),
            real: ClassCounts::default(),
        };
        for (row, &label) in features.rows.iter().zip(labels) {
            let hit = self.predict(row) == label;
            let class = if label == 1 { &mut report.real } else { &mut report.synthetic };
            class.total += 1;
            if hit {
                class.correct += 1;
                report.correct += 1;
            }
        }
        if report.n_test > 0 {
            report.accuracy = report.correct as f64 / report.n_test as f64;
        }
        report
    }

    /// Accuracy on `synthetic` (label 0) plus `real_test` (label 1) under this model.
    pub fn score_theta(
        &self,
        synthetic: &Table,
        real_test: &Table,
        encoder: &Encoder,
    ) -> Result<f64, DiscriminatorError> {
        if synthetic.is_empty() {
            return Err(DiscriminatorError::EmptySynthetic);
        }
        let mut rows = encoder.encode(synthetic).rows;
        rows.extend(encoder.encode(real_test).rows);
        let mut labels = vec![0u8; synthetic.len()];
        labels.extend(std::iter::repeat_n(1u8, real_test.len()));
        let features = FeatureMatrix {
            rows,
            encoder: encoder.clone(),
        };
        Ok(self.evaluate(&features, &labels).accuracy)
    }

    pub fn to_checkpoint(&self) -> String {
        serde_json::to_string_pretty(&Checkpoint {
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        })
        .expect("model serializes")
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, DiscriminatorError> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| DiscriminatorError::Checkpoint(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(DiscriminatorError::Checkpoint(format!(
                "unsupported version {}",
                ck.version
            )));
        }
        Ok(ck.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_checkpoint())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DiscriminatorError> {
        let text = std::fs::read_to_string(path).map_err(|e| DiscriminatorError::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(&text)
    }
}

/// Per-class shuffled split; each class contributes `round(frac * n)` test rows,
/// clamped to `[1, n - 1]`.
pub fn stratified_split(
    labels: &[u8],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DiscriminatorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    let real = labels.iter().filter(|&&l| l == 1).count();
    let synthetic = labels.len() - real;
    if real < 2 || synthetic < 2 {
        return Err(DiscriminatorError::TooFewRows { real, synthetic });
    }
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n_test = ((idx.len() as f64 * test_fraction).round() as usize).clamp(1, idx.len() - 1);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{RegressionTree, TreeNode};
    use crate::table::{ColumnSpec, Record, Schema, Value};
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn matrix(rows: Vec<Vec<f64>>) -> FeatureMatrix {
        let schema = Schema::new(vec![ColumnSpec::numeric("a")], "", "a").unwrap();
        FeatureMatrix {
            rows,
            encoder: Encoder::fit(&Table::empty(schema)),
        }
    }

    fn blobs(n: usize, gap: f64, seed: u64) -> (FeatureMatrix, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.25).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let label = (i % 2) as u8;
            let centre = if label == 1 { gap } else { 0.0 };
            rows.push(vec![centre + noise.sample(&mut rng), noise.sample(&mut rng)]);
            labels.push(label);
        }
        (matrix(rows), labels)
    }

    #[test]
    fn separable_blobs_reach_high_training_accuracy() {
        let (x, y) = blobs(200, 2.0, 1);
        for kind in [DiscriminatorKind::BoostedTrees, DiscriminatorKind::Logistic] {
            let config = DiscriminatorConfig { kind, ..Default::default() };
            let model = DiscriminatorModel::new(&config).fit_update(&x, &y).unwrap();
            assert!(model.evaluate(&x, &y).accuracy >= 0.99, "{kind:?}");
        }
    }

    #[test]
    fn accuracy_stays_high_after_further_updates() {
        let (x, y) = blobs(200, 2.0, 2);
        let mut model = DiscriminatorModel::new(&DiscriminatorConfig::default());
        for _ in 0..5 {
            model = model.fit_update(&x, &y).unwrap();
            assert!(model.evaluate(&x, &y).accuracy >= 0.99);
        }
    }

    #[test]
    fn boosted_rounds_add_trees() {
        let (x, y) = blobs(100, 2.0, 3);
        let config = DiscriminatorConfig::default();
        let once = DiscriminatorModel::new(&config).fit_update(&x, &y).unwrap();
        let twice = once.fit_update(&x, &y).unwrap();
        let count = |m: &DiscriminatorModel| match &m.state {
            ModelState::BoostedTrees(b) => b.trees.len(),
            _ => unreachable!(),
        };
        assert_eq!(count(&once), config.trees_per_update);
        assert_eq!(count(&twice), 2 * config.trees_per_update);
        assert_eq!(twice.rounds_seen, 2);
    }

    #[test]
    fn single_class_is_rejected() {
        let x = matrix(vec![vec![0.0], vec![1.0]]);
        let model = DiscriminatorModel::new(&DiscriminatorConfig::default());
        assert!(matches!(model.fit_update(&x, &[1, 1]), Err(DiscriminatorError::SingleClass)));
    }

    #[test]
    fn evaluate_extremes_and_ties() {
        let mut lr = LogisticRegression::new(LogisticParams::default());
        lr.weights = vec![1.0];
        let model = DiscriminatorModel {
            state: ModelState::Logistic(lr),
            trees_per_update: 0,
            rounds_seen: 1,
        };
        let x = matrix(vec![vec![2.0], vec![-2.0]]);
        assert_eq!(model.evaluate(&x, &[1, 0]).accuracy, 1.0);
        assert_eq!(model.evaluate(&x, &[0, 1]).accuracy, 0.0);
        // p == 0.5 exactly predicts synthetic.
        assert_eq!(model.predict(&[0.0]), 0);
    }

    #[test]
    fn hand_computed_logistic_accuracy() {
        // w = (1, -2), b = 0.5
        // (1, 0)  -> 1.5  -> real;   label 1  correct
        // (0, 1)  -> -1.5 -> synth;  label 1  wrong
        // (1, 1)  -> -0.5 -> synth;  label 0  correct
        let mut lr = LogisticRegression::new(LogisticParams::default());
        lr.weights = vec![1.0, -2.0];
        lr.bias = 0.5;
        let model = DiscriminatorModel {
            state: ModelState::Logistic(lr),
            trees_per_update: 0,
            rounds_seen: 0,
        };
        let x = matrix(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let report = model.evaluate(&x, &[1, 1, 0]);
        assert_eq!(report.correct, 2);
        assert_eq!(report.accuracy, 2.0 / 3.0);
        assert_eq!(report.real, ClassCounts { total: 2, correct: 1 });
    }

    #[test]
    fn boosted_prediction_matches_hand_trace() {
        // Tree 1 splits on x0 < 0.5 -> (-1.0 | 2.0)
        // Tree 2 splits on x1 < 0.0 -> (0.5 | (x0 < 1.5 -> -0.5 | 1.0))
        let t1 = RegressionTree {
            nodes: vec![
                TreeNode::Split { feature: 0, threshold: 0.5, left: 1, right: 2 },
                TreeNode::Leaf { value: -1.0 },
                TreeNode::Leaf { value: 2.0 },
            ],
        };
        let t2 = RegressionTree {
            nodes: vec![
                TreeNode::Split { feature: 1, threshold: 0.0, left: 1, right: 2 },
                TreeNode::Leaf { value: 0.5 },
                TreeNode::Split { feature: 0, threshold: 1.5, left: 3, right: 4 },
                TreeNode::Leaf { value: -0.5 },
                TreeNode::Leaf { value: 1.0 },
            ],
        };
        let mut bt = BoostedTrees::new(Loss::Logistic, TreeParams::default());
        bt.base_score = 0.1;
        bt.trees = vec![t1, t2];
        // (x0, x1, expected margin = 0.1 + 0.3 * (t1 + t2))
        let cases = [
            ([0.0, -1.0], 0.1 + 0.3 * (-1.0 + 0.5)),
            ([0.0, 1.0], 0.1 + 0.3 * (-1.0 - 0.5)),
            ([0.4, 0.0], 0.1 + 0.3 * (-1.0 - 0.5)),
            ([0.5, -0.1], 0.1 + 0.3 * (2.0 + 0.5)),
            ([1.0, 0.0], 0.1 + 0.3 * (2.0 - 0.5)),
            ([1.49, 3.0], 0.1 + 0.3 * (2.0 - 0.5)),
            ([1.5, 3.0], 0.1 + 0.3 * (2.0 + 1.0)),
            ([2.0, -5.0], 0.1 + 0.3 * (2.0 + 0.5)),
            ([-3.0, 0.2], 0.1 + 0.3 * (-1.0 - 0.5)),
            ([9.0, 9.0], 0.1 + 0.3 * (2.0 + 1.0)),
        ];
        for (row, expected) in cases {
            assert!((bt.margin(&row) - expected).abs() < 1e-12, "{row:?}");
            assert!((bt.predict(&row) - crate::stats::sigmoid(expected)).abs() < 1e-12);
        }
    }

    #[test]
    fn chance_level_on_identical_distributions() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.gen(), rng.gen()]).collect();
            let labels: Vec<u8> = (0..400).map(|_| rng.gen_bool(0.5) as u8).collect();
            let (train, test) = stratified_split(&labels, 0.2, seed).unwrap();
            let pick = |idx: &[usize]| matrix(idx.iter().map(|&i| rows[i].clone()).collect());
            let pick_y = |idx: &[usize]| idx.iter().map(|&i| labels[i]).collect::<Vec<_>>();
            let model = DiscriminatorModel::new(&DiscriminatorConfig::default())
                .fit_update(&pick(&train), &pick_y(&train))
                .unwrap();
            let acc = model.evaluate(&pick(&test), &pick_y(&test)).accuracy;
            assert!((0.35..=0.65).contains(&acc), "seed {seed}: {acc}");
        }
    }

    fn numeric_table(values: &[f64]) -> Table {
        let schema = Schema::new(vec![ColumnSpec::numeric("v")], "", "v").unwrap();
        Table::new(
            schema,
            values.iter().map(|&v| Record::new().with("v", Value::Number(v))).collect(),
        )
        .unwrap()
    }

    #[test]
    fn score_theta_flags_out_of_support_synthetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let real: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..1.0)).collect();
        let fake: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..1.0) + 0.5).collect();
        let real_t = numeric_table(&real);
        let encoder = Encoder::fit(&real_t);
        let mut rows = encoder.encode(&real_t).rows;
        rows.extend(encoder.encode(&numeric_table(&fake)).rows);
        let mut labels = vec![1u8; 200];
        labels.extend(vec![0u8; 200]);
        let model = DiscriminatorModel::new(&DiscriminatorConfig::default())
            .fit_update(&FeatureMatrix { rows, encoder: encoder.clone() }, &labels)
            .unwrap();
        let outliers = numeric_table(&vec![10.0; 50]);
        let held_out = numeric_table(&(0..50).map(|i| i as f64 / 100.0).collect::<Vec<_>>());
        let score = model.score_theta(&outliers, &held_out, &encoder).unwrap();
        assert!(score >= 0.9, "{score}");
        assert_eq!(score, model.score_theta(&outliers, &held_out, &encoder).unwrap());
        assert!(matches!(
            model.score_theta(&numeric_table(&[]), &held_out, &encoder),
            Err(DiscriminatorError::EmptySynthetic)
        ));
    }

    #[test]
    fn identical_rows_score_at_class_prior() {
        // The same encoded points carry both labels, so per-point predictions
        // are right for exactly one of the two copies.
        let real = numeric_table(&[0.1, 0.4, 0.7, 0.9]);
        let encoder = Encoder::fit(&real);
        let x = encoder.encode(&real).rows;
        let mut rows = x.clone();
        rows.extend(x);
        let model = DiscriminatorModel::new(&DiscriminatorConfig::default())
            .fit_update(&FeatureMatrix { rows, encoder: encoder.clone() }, &[1, 1, 1, 1, 0, 0, 0, 0])
            .unwrap();
        assert_eq!(model.score_theta(&real, &real, &encoder).unwrap(), 0.5);
    }

    #[test]
    fn checkpoint_replays_predictions_exactly() {
        let (x, y) = blobs(100, 1.0, 7);
        let model = DiscriminatorModel::new(&DiscriminatorConfig::default()).fit_update(&x, &y).unwrap();
        let back = DiscriminatorModel::from_checkpoint(&model.to_checkpoint()).unwrap();
        assert_eq!(back, model);
        for row in &x.rows {
            assert_eq!(back.predict_proba(row).to_bits(), model.predict_proba(row).to_bits());
        }
        assert!(DiscriminatorModel::from_checkpoint(r#"{"version":99,"model":null}"#).is_err());
    }

    #[test]
    fn stratified_split_keeps_both_classes() {
        let labels = [1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
        let (train, test) = stratified_split(&labels, 0.2, 3).unwrap();
        assert_eq!(train.len() + test.len(), 10);
        assert_eq!(test.iter().filter(|&&i| labels[i] == 1).count(), 1);
        assert_eq!(test.iter().filter(|&&i| labels[i] == 0).count(), 1);
        assert!(stratified_split(&[1, 0, 0], 0.2, 0).is_err());
    }
}

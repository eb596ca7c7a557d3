//! Utility (train on synthetic, test on real) and privacy (distance to closest record) metrics.

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::learners::{BoostedTrees, Loss, LogisticParams, LogisticRegression, RidgeRegression, TreeParams};
use crate::stats::{mean, quantile_sorted};
use crate::table::{ColumnKind, Encoder, Table, Value};

pub const MLE_BOOSTING_ROUNDS: usize = 50;
pub const MLE_SUBSAMPLE: f64 = 0.8;
pub const RIDGE_ALPHA: f64 = 1.0;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("reference table is empty")]
    EmptyReference,
    #[error("tables have different schemas")]
    SchemaMismatch,
    #[error("target column '{0}' is missing")]
    MissingTarget(String),
    #[error("degenerate target: {0}")]
    DegenerateTarget(String),
    #[error("no seeds given")]
    NoSeeds,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MleTask {
    Classification,
    Regression,
}

impl MleTask {
    /// Classification for a categorical target, regression for a numeric one.
    pub fn for_table(table: &Table) -> Result<Self, EvalError> {
        let target = &table.schema.target;
        let col = table
            .schema
            .column(target)
            .ok_or_else(|| EvalError::MissingTarget(target.clone()))?;
        Ok(match col.kind {
            ColumnKind::Categorical => MleTask::Classification,
            ColumnKind::Numeric => MleTask::Regression,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedScores {
    pub seed: u64,
    pub scores: BTreeMap<String, f64>,
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleReport {
    pub task: MleTask,
    /// Mean score per learner across seeds.
    pub per_learner: BTreeMap<String, f64>,
    pub best: f64,
    pub seeds_used: Vec<u64>,
    pub per_seed: Vec<SeedScores>,
    /// Mean over seeds of the best learner's score.
    pub mean_of_best: f64,
}

impl MleReport {
    /// One row per learner and seed.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["seed", "learner", "score"]).map_err(csv_io)?;
        for s in &self.per_seed {
            for (learner, score) in &s.scores {
                w.write_record([s.seed.to_string(), learner.clone(), score.to_string()])
                    .map_err(csv_io)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> EvalError {
    EvalError::Io(std::io::Error::other(e))
}

/// Binary F1 for the positive label.
pub fn f1_binary(truth: &[bool], predicted: &[bool]) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// Unweighted mean of per-class F1 over classes present in either vector.
pub fn f1_macro(truth: &[usize], predicted: &[usize]) -> f64 {
    let mut classes: Vec<usize> = truth.iter().chain(predicted).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.is_empty() {
        return 0.0;
    }
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let t: Vec<bool> = truth.iter().map(|&v| v == c).collect();
            let p: Vec<bool> = predicted.iter().map(|&v| v == c).collect();
            f1_binary(&t, &p)
        })
        .sum();
    total / classes.len() as f64
}

/// `1 - SS_res / SS_tot`; may be negative.
pub fn r2_score(truth: &[f64], predicted: &[f64]) -> f64 {
    let m = mean(truth);
    let ss_tot: f64 = truth.iter().map(|y| (y - m) * (y - m)).sum();
    let ss_res: f64 = truth.iter().zip(predicted).map(|(y, p)| (y - p) * (y - p)).sum();
    1.0 - ss_res / ss_tot
}

struct Prepared {
    x_train: Vec<Vec<f64>>,
    x_test: Vec<Vec<f64>>,
    y_train: Vec<f64>,
    y_test: Vec<f64>,
    n_classes: usize,
}

fn prepare(synthetic: &Table, real_test: &Table, task: MleTask) -> Result<Prepared, EvalError> {
    if synthetic.schema.columns != real_test.schema.columns {
        return Err(EvalError::SchemaMismatch);
    }
    let target = synthetic.schema.target.clone();
    let col = synthetic
        .schema
        .column(&target)
        .ok_or_else(|| EvalError::MissingTarget(target.clone()))?;
    let encoder = Encoder::fit_excluding(synthetic, &[target.as_str()]);
    let y_of = |t: &Table| -> Vec<f64> {
        t.rows
            .iter()
            .map(|r| match r.get(&target) {
                Some(Value::Number(v)) => *v,
                Some(Value::Category(c)) => col.category_index(c).map_or(f64::NAN, |i| i as f64),
                None => f64::NAN,
            })
            .collect()
    };
    let prepared = Prepared {
        x_train: encoder.encode(synthetic).rows,
        x_test: encoder.encode(real_test).rows,
        y_train: y_of(synthetic),
        y_test: y_of(real_test),
        n_classes: col.categories.len(),
    };
    if prepared.y_train.is_empty() || prepared.y_test.is_empty() {
        return Err(EvalError::DegenerateTarget("empty table".into()));
    }
    match task {
        MleTask::Classification => {
            let first = prepared.y_train[0];
            if prepared.y_train.iter().all(|&y| y == first) {
                return Err(EvalError::DegenerateTarget("training target has a single class".into()));
            }
        }
        MleTask::Regression => {
            let first = prepared.y_test[0];
            if prepared.y_test.iter().all(|&y| y == first) {
                return Err(EvalError::DegenerateTarget("test target has zero variance".into()));
            }
        }
    }
    Ok(prepared)
}

fn boosted_params() -> TreeParams {
    TreeParams {
        subsample: MLE_SUBSAMPLE,
        ..TreeParams::default()
    }
}

/// One-vs-rest scores per class, or one score column for two classes.
fn class_scores<F>(p: &Prepared, mut fit_predict: F) -> Vec<usize>
where
    F: FnMut(&[f64], usize) -> Vec<f64>,
{
    if p.n_classes == 2 {
        let y: Vec<f64> = p.y_train.iter().map(|&v| (v == 1.0) as u8 as f64).collect();
        return fit_predict(&y, 1).iter().map(|&s| usize::from(s > 0.5)).collect();
    }
    let per_class: Vec<Vec<f64>> = (0..p.n_classes)
        .map(|c| {
            let y: Vec<f64> = p.y_train.iter().map(|&v| (v == c as f64) as u8 as f64).collect();
            fit_predict(&y, c)
        })
        .collect();
    (0..p.x_test.len())
        .map(|i| {
            (0..p.n_classes)
                .max_by(|&a, &b| per_class[a][i].total_cmp(&per_class[b][i]).then(b.cmp(&a)))
                .unwrap_or(0)
        })
        .collect()
}

fn classification_score(p: &Prepared, predicted: &[usize]) -> f64 {
    let truth: Vec<usize> = p.y_test.iter().map(|&v| v as usize).collect();
    if p.n_classes == 2 {
        // The positive class is the second category in schema order.
        let t: Vec<bool> = truth.iter().map(|&v| v == 1).collect();
        let q: Vec<bool> = predicted.iter().map(|&v| v == 1).collect();
        f1_binary(&t, &q)
    } else {
        f1_macro(&truth, predicted)
    }
}

fn score_seed(p: &Prepared, task: MleTask, seed: u64) -> BTreeMap<String, f64> {
    let mut scores = BTreeMap::new();
    match task {
        MleTask::Classification => {
            let linear = class_scores(p, |y, _| {
                let mut m = LogisticRegression::new(LogisticParams::default());
                m.fit(&p.x_train, y);
                p.x_test.iter().map(|r| m.predict(r)).collect()
            });
            scores.insert("logistic_regression".to_string(), classification_score(p, &linear));
            let boosted = class_scores(p, |y, c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(c as u64));
                let mut m = BoostedTrees::new(Loss::Logistic, boosted_params());
                m.boost(&p.x_train, y, MLE_BOOSTING_ROUNDS, &mut rng);
                p.x_test.iter().map(|r| m.predict(r)).collect()
            });
            scores.insert("boosted_trees".to_string(), classification_score(p, &boosted));
        }
        MleTask::Regression => {
            let ridge = RidgeRegression::fit(&p.x_train, &p.y_train, RIDGE_ALPHA);
            let pred: Vec<f64> = p.x_test.iter().map(|r| ridge.predict(r)).collect();
            scores.insert("ridge_regression".to_string(), r2_score(&p.y_test, &pred));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = BoostedTrees::new(Loss::Squared, boosted_params());
            m.boost(&p.x_train, &p.y_train, MLE_BOOSTING_ROUNDS, &mut rng);
            let pred: Vec<f64> = p.x_test.iter().map(|r| m.predict(r)).collect();
            scores.insert("boosted_trees".to_string(), r2_score(&p.y_test, &pred));
        }
    }
    scores
}

/// Trains each learner on `synthetic` and scores it on `real_test`, once per seed.
pub fn mle(synthetic: &Table, real_test: &Table, task: MleTask, seeds: &[u64]) -> Result<MleReport, EvalError> {
    if seeds.is_empty() {
        return Err(EvalError::NoSeeds);
    }
    let prepared = prepare(synthetic, real_test, task)?;
    let per_seed: Vec<SeedScores> = seeds
        .par_iter()
        .map(|&seed| {
            let scores = score_seed(&prepared, task, seed);
            let best = scores.values().copied().fold(f64::NEG_INFINITY, f64::max);
            SeedScores { seed, scores, best }
        })
        .collect();
    let mut per_learner = BTreeMap::new();
    for name in per_seed[0].scores.keys() {
        let values: Vec<f64> = per_seed.iter().map(|s| s.scores[name]).collect();
        per_learner.insert(name.clone(), mean(&values));
    }
    let best = per_learner.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let bests: Vec<f64> = per_seed.iter().map(|s| s.best).collect();
    Ok(MleReport {
        task,
        per_learner,
        best,
        seeds_used: seeds.to_vec(),
        mean_of_best: mean(&bests),
        per_seed,
    })
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    let mut d = 0.0;
    for (x, y) in a.iter().zip(b) {
        d += (x - y).abs();
    }
    d
}

/// Minimum l1 distance in encoded space from each synthetic row to `reference`.
///
/// Numeric columns are min-max scaled by `encoder`; a categorical mismatch adds 2.
pub fn dcr(synthetic: &Table, reference: &Table, encoder: &Encoder) -> Result<Vec<f64>, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    if synthetic.schema.columns != reference.schema.columns {
        return Err(EvalError::SchemaMismatch);
    }
    let refs = encoder.encode(reference).rows;
    let syn = encoder.encode(synthetic).rows;
    Ok(syn
        .par_iter()
        .map(|s| refs.iter().map(|r| l1(s, r)).fold(f64::INFINITY, f64::min))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            q25: quantile_sorted(&sorted, 0.25),
            q50: quantile_sorted(&sorted, 0.5),
            q75: quantile_sorted(&sorted, 0.75),
        }
    }

    /// `5, 6, 10`: up to two decimals, trailing zeros dropped.
    pub fn format(&self) -> String {
        [self.q25, self.q50, self.q75]
            .iter()
            .map(|v| {
                let s = format!("{v:.2}");
                s.trim_end_matches('0').trim_end_matches('.').to_string()
            })
            .collect::<Vec<_>>()
            .join(", ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcrReport {
    pub distances_to_train: Vec<f64>,
    pub distances_to_holdout: Vec<f64>,
    pub train_quantiles: Quantiles,
    pub holdout_quantiles: Quantiles,
}

impl DcrReport {
    /// One row per synthetic record.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "dcr_train", "dcr_holdout"]).map_err(csv_io)?;
        for (i, (a, b)) in self.distances_to_train.iter().zip(&self.distances_to_holdout).enumerate() {
            w.write_record([i.to_string(), a.to_string(), b.to_string()]).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Distances to `train` and to `holdout`, both under `encoder`.
pub fn dcr_report(synthetic: &Table, train: &Table, holdout: &Table, encoder: &Encoder) -> Result<DcrReport, EvalError> {
    let to_train = dcr(synthetic, train, encoder)?;
    let to_holdout = dcr(synthetic, holdout, encoder)?;
    Ok(DcrReport {
        train_quantiles: Quantiles::of(&to_train),
        holdout_quantiles: Quantiles::of(&to_holdout),
        distances_to_train: to_train,
        distances_to_holdout: to_holdout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{ColumnSpec, Record, Schema};
    use proptest::prelude::*;

    fn numeric(values: &[f64]) -> Table {
        let schema = Schema::new(vec![ColumnSpec::numeric("v")], "", "v").unwrap();
        Table::new(schema, values.iter().map(|&v| Record::new().with("v", Value::Number(v))).collect()).unwrap()
    }

    #[test]
    fn hand_computed_distance() {
        let reference = numeric(&[0.0, 10.0]);
        let enc = Encoder::fit(&reference);
        let d = dcr(&numeric(&[4.0]), &reference, &enc).unwrap();
        assert!((d[0] - 0.4).abs() < 1e-15);
        assert_eq!(dcr(&numeric(&[10.0]), &reference, &enc).unwrap(), vec![0.0]);
        assert!(matches!(dcr(&numeric(&[1.0]), &numeric(&[]), &enc), Err(EvalError::EmptyReference)));
    }

    #[test]
    fn category_mismatch_costs_two() {
        let schema = Schema::new(vec![ColumnSpec::categorical("c", ["a", "b", "z"])], "", "c").unwrap();
        let t = |v: &str| Table::new(schema.clone(), vec![Record::new().with("c", Value::Category(v.into()))]).unwrap();
        let enc = Encoder::fit(&t("a"));
        assert_eq!(dcr(&t("b"), &t("a"), &enc).unwrap(), vec![2.0]);
    }

    #[test]
    fn quantile_formatting() {
        let q = Quantiles { q25: 5.0, q50: 6.0, q75: 10.0 };
        assert_eq!(q.format(), "5, 6, 10");
        let q = Quantiles::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((q.q25, q.q50, q.q75), (1.75, 2.5, 3.25));
        assert_eq!(q.format(), "1.75, 2.5, 3.25");
    }

    #[test]
    fn f1_edges() {
        assert_eq!(f1_binary(&[true, false], &[false, false]), 0.0);
        assert_eq!(f1_binary(&[true, false], &[true, false]), 1.0);
        // tp 1, fp 1, fn 1
        assert!((f1_binary(&[true, true, false], &[true, false, true]) - 0.5).abs() < 1e-15);
        assert_eq!(f1_macro(&[0, 1, 2], &[0, 1, 2]), 1.0);
    }

    #[test]
    fn mean_predictor_has_zero_r2() {
        let y = [1.5, 2.0, 7.25, -3.0, 0.1];
        let m = mean(&y);
        assert_eq!(r2_score(&y, &[m; 5]), 0.0);
    }

    proptest! {
        #[test]
        fn mean_predictor_r2_is_exactly_zero(y in prop::collection::vec(-1e3f64..1e3, 2..50)) {
            prop_assume!(y.iter().any(|v| *v != y[0]));
            let m = mean(&y);
            prop_assert_eq!(r2_score(&y, &vec![m; y.len()]), 0.0);
        }

        #[test]
        fn dcr_never_grows_with_more_reference(
            base in prop::collection::vec(0.0f64..100.0, 1..20),
            extra in prop::collection::vec(0.0f64..100.0, 0..20),
            syn in prop::collection::vec(0.0f64..100.0, 1..20),
        ) {
            let small = numeric(&base);
            let mut all = base.clone();
            all.extend(&extra);
            let big = numeric(&all);
            let enc = Encoder::fit(&small);
            let a = dcr(&numeric(&syn), &small, &enc).unwrap();
            let b = dcr(&numeric(&syn), &big, &enc).unwrap();
            prop_assert!(a.iter().zip(&b).all(|(x, y)| y <= x));
        }

        #[test]
        fn quantiles_are_monotone(v in prop::collection::vec(0.0f64..50.0, 1..60)) {
            let q = Quantiles::of(&v);
            prop_assert!(q.q25 <= q.q50 && q.q50 <= q.q75);
        }
    }

    fn labelled(rows: &[(f64, &str)]) -> Table {
        let schema = Schema::new(
            vec![ColumnSpec::numeric("x"), ColumnSpec::categorical("y", ["neg", "pos"])],
            "",
            "y",
        )
        .unwrap();
        Table::new(
            schema,
            rows.iter()
                .map(|&(x, y)| Record::new().with("x", Value::Number(x)).with("y", Value::Category(y.into())))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_wrong_classifier_scores_zero() {
        // Training data puts "pos" only where the test set has none.
        let train = labelled(&[(0.0, "neg"), (1.0, "neg"), (10.0, "pos"), (11.0, "pos")]);
        let test = labelled(&[(10.0, "neg"), (11.0, "neg"), (0.0, "pos"), (1.0, "pos")]);
        let report = mle(&train, &test, MleTask::Classification, &[1]).unwrap();
        assert_eq!(report.best, 0.0);
    }

    #[test]
    fn single_class_training_is_degenerate() {
        let train = labelled(&[(0.0, "neg"), (1.0, "neg")]);
        assert!(matches!(
            mle(&train, &train, MleTask::Classification, &[1]),
            Err(EvalError::DegenerateTarget(_))
        ));
    }

    #[test]
    fn reports_are_deterministic_per_seed() {
        let train = labelled(&[(0.0, "neg"), (1.0, "neg"), (2.0, "pos"), (3.0, "pos"), (0.5, "pos")]);
        let a = mle(&train, &train, MleTask::Classification, &[3, 4]).unwrap();
        let b = mle(&train, &train, MleTask::Classification, &[3, 4]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.best, a.per_learner.values().copied().fold(f64::MIN, f64::max));
    }
}

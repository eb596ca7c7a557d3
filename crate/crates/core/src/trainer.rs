//! The adversarial loop: generate, discriminate, optimize, per batch and epoch.

use std::io::Write;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::causal::{ged, hill_climb, Dag, DEFAULT_MAX_ITERS, DEFAULT_MAX_PARENTS};
use crate::discriminator::{stratified_split, DiscriminatorConfig, DiscriminatorError, DiscriminatorModel};
use crate::generator::{
    compile_condition, generate, generate_with, score_line, DataGenProcess, GenConfig, GenerateError,
};
use crate::llm::{ChatClient, LlmError};
use crate::optimizer::{
    aim_for, build_optimizer_prompt, parse_theta_update, prune, rescore, ScoredCandidate, Trajectory,
    DEFAULT_K,
};
use crate::table::{Encoder, FeatureMatrix, Record, Schema, Table};

/// Consecutive skipped batches that abort a run.
pub const MAX_CONSECUTIVE_SKIPS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("provider failure: {0}")]
    Provider(#[source] LlmError),
    #[error("aborted after {count} consecutive skipped batches; last: {last}")]
    Aborted { count: usize, last: String },
    #[error("no batch completed")]
    NoIterations,
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Discriminator(#[from] DiscriminatorError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Convergence {
    pub enabled: bool,
    pub window: usize,
    pub epsilon: f64,
    pub floor: f64,
}

impl Default for Convergence {
    fn default() -> Self {
        Self {
            enabled: true,
            window: 3,
            epsilon: 0.02,
            floor: 0.55,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum StructureInit {
    HillClimb,
    Empty,
    Given { dag: Dag },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub gen: GenConfig,
    pub disc: DiscriminatorConfig,
    pub k: usize,
    pub seed: u64,
    pub convergence: Convergence,
    pub init: StructureInit,
    pub reference_dag: Option<Dag>,
    /// Append "strive for a quality score" with an aim derived from the last score.
    pub score_line: bool,
    /// Rows in the final synthetic table; defaults to the training size.
    pub final_rows: Option<usize>,
    /// Extra generator calls allowed when sampling falls short.
    pub sample_retry_budget: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_epochs: 10,
            batch_size: 50,
            gen: GenConfig::default(),
            disc: DiscriminatorConfig::default(),
            k: DEFAULT_K,
            seed: 0,
            convergence: Convergence::default(),
            init: StructureInit::HillClimb,
            reference_dag: None,
            score_line: false,
            final_rows: None,
            sample_retry_budget: 10,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.convergence.window < 2 {
            return bad("convergence window must be at least 2".into());
        }
        if !(0.0 < self.disc.test_fraction && self.disc.test_fraction < 1.0) {
            return bad(format!("test_fraction {} outside (0, 1)", self.disc.test_fraction));
        }
        let mut gen = self.gen.clone();
        gen.batch_size = self.batch_size;
        gen.validate().map_err(TrainError::Config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub epoch: usize,
    pub batch_index: usize,
    /// Held-out discriminator accuracy for this batch.
    pub score: f64,
    pub theta_digest: String,
    pub theta_text: String,
    pub ged_to_reference: Option<usize>,
    pub rejected: usize,
    pub copies_of_examples: usize,
    pub n_synthetic: usize,
    /// Adjusted scores of the surviving candidates, in insertion order.
    pub adjusted_scores: Vec<f64>,
    pub optimizer_parse_failed: bool,
    pub rounds_seen: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipLog {
    pub epoch: usize,
    pub batch_index: usize,
    pub reason: String,
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunEvent {
    Header { config: Box<RunConfig>, n_train: usize, schema: Schema },
    Iteration(IterationLog),
    Skipped(SkipLog),
    Final { best_score: f64, theta_digest: String, n_synthetic: usize },
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub initial_theta: DataGenProcess,
    pub final_theta: DataGenProcess,
    pub best_score: f64,
    pub synthetic: Table,
    pub history: Vec<IterationLog>,
    pub skipped: Vec<SkipLog>,
    pub trajectory: Trajectory,
    pub model: DiscriminatorModel,
    pub epochs_ran: usize,
    pub converged: bool,
}

pub fn theta_digest(theta: &DataGenProcess) -> String {
    let digest = Sha256::digest(theta.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn converged_scores(scores: &[f64], c: &Convergence) -> bool {
    let Some(&last) = scores.last() else { return false };
    if last <= c.floor {
        return true;
    }
    if scores.len() < c.window {
        return false;
    }
    let tail = &scores[scores.len() - c.window..];
    let max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    max - min < c.epsilon
}

/// True once the last `window` scores span less than `epsilon`, or the latest is at most `floor`.
pub fn converged(history: &[IterationLog], c: &Convergence) -> bool {
    let scores: Vec<f64> = history.iter().map(|h| h.score).collect();
    converged_scores(&scores, c)
}

fn is_fatal(e: &LlmError) -> bool {
    matches!(e, LlmError::Auth { .. } | LlmError::MissingApiKey(_) | LlmError::InvalidRequest(_))
}

pub fn initial_theta(train: &Table, config: &RunConfig) -> DataGenProcess {
    let dag = match &config.init {
        StructureInit::HillClimb => hill_climb(train, DEFAULT_MAX_PARENTS, DEFAULT_MAX_ITERS, config.seed),
        StructureInit::Empty => Dag::new(train.schema.names()),
        StructureInit::Given { dag } => dag.clone(),
    };
    DataGenProcess::initial(&train.schema, dag)
}

/// Outcome of one batch that reached the discriminator.
struct Step {
    log: IterationLog,
    theta: DataGenProcess,
    trajectory: Trajectory,
    model: DiscriminatorModel,
}

struct Loop<'a, C: ?Sized> {
    train: &'a Table,
    config: &'a RunConfig,
    client: &'a C,
    encoder: Encoder,
}

impl<C: ChatClient + ?Sized> Loop<'_, C> {
    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        iteration: usize,
        epoch: usize,
        batch_index: usize,
        batch: &[Record],
        theta: &DataGenProcess,
        trajectory: &Trajectory,
        model: &DiscriminatorModel,
        last_score: Option<f64>,
    ) -> Result<Step, (String, Option<TrainError>)> {
        let schema = &self.train.schema;
        let mut gen = self.config.gen.clone();
        gen.batch_size = self.config.batch_size;
        if self.config.score_line {
            gen.target_score_line = last_score.map(|s| score_line(aim_for(s)));
        }

        // Step 1: generate.
        let synthetic = match generate(theta, batch, schema, self.client, &gen) {
            Ok(s) => s,
            Err(GenerateError::Provider(e)) if is_fatal(&e) => {
                return Err((e.to_string(), Some(TrainError::Provider(e))))
            }
            Err(e) => return Err((e.to_string(), None)),
        };

        // Step 2: label, split, update and score the discriminator.
        let mut rows: Vec<Vec<f64>> = self.encoder.encode(&synthetic.rows).rows;
        let n_syn = rows.len();
        rows.extend(batch.iter().map(|r| self.encoder.encode_record(r)));
        let mut labels = vec![0u8; n_syn];
        labels.extend(std::iter::repeat_n(1u8, batch.len()));
        let split_seed = self.config.seed.wrapping_mul(1_000_003).wrapping_add(iteration as u64);
        let (tr, te) = stratified_split(&labels, self.config.disc.test_fraction, split_seed)
            .map_err(|e| (e.to_string(), None))?;
        let pick = |idx: &[usize]| FeatureMatrix {
            rows: idx.iter().map(|&i| rows[i].clone()).collect(),
            encoder: self.encoder.clone(),
        };
        let pick_labels = |idx: &[usize]| idx.iter().map(|&i| labels[i]).collect::<Vec<u8>>();
        let model = model
            .fit_update(&pick(&tr), &pick_labels(&tr))
            .map_err(|e| (e.to_string(), None))?;
        let report = model.evaluate(&pick(&te), &pick_labels(&te));

        // Step 3: record the candidate, rescore, prune and ask for a revision.
        let held_out_syn: Vec<Record> = te
            .iter()
            .filter(|&&i| i < n_syn)
            .map(|&i| synthetic.rows.rows[i].clone())
            .collect();
        let real_test = Table {
            schema: schema.clone(),
            rows: te.iter().filter(|&&i| i >= n_syn).map(|&i| batch[i - n_syn].clone()).collect(),
        };
        let mut traj = trajectory.clone();
        traj.push(ScoredCandidate {
            theta: theta.clone(),
            synthetic_cache: synthetic.rows.with_rows(held_out_syn),
            adjusted_score: report.accuracy,
            created_iteration: iteration,
        });
        let traj = rescore(&traj, &model, &real_test, &self.encoder).map_err(|e| (e.to_string(), None))?;
        let traj = prune(&traj);

        let request = build_optimizer_prompt(&traj, &schema.names(), Some(&schema.target))
            .map_err(|e| (e.to_string(), None))?;
        let (next, parse_failed) = match self.client.complete(&request) {
            Ok(text) => {
                let update = parse_theta_update(&text, schema, theta);
                if update.parse_failed {
                    warn!("optimizer output unusable; keeping the current process");
                }
                (update.theta, update.parse_failed)
            }
            Err(e) if is_fatal(&e) => return Err((e.to_string(), Some(TrainError::Provider(e)))),
            Err(e) => {
                warn!("optimizer call failed: {e}");
                let mut same = theta.clone();
                same.iteration += 1;
                (same, true)
            }
        };

        let ged_to_reference = self
            .config
            .reference_dag
            .as_ref()
            .and_then(|r| ged(&theta.causal, r).ok());
        let log = IterationLog {
            iteration,
            epoch,
            batch_index,
            score: report.accuracy,
            theta_digest: theta_digest(theta),
            theta_text: theta.to_string(),
            ged_to_reference,
            rejected: synthetic.rejected,
            copies_of_examples: synthetic.copies_of_examples,
            n_synthetic: n_syn,
            adjusted_scores: traj.candidates.iter().map(|c| c.adjusted_score).collect(),
            optimizer_parse_failed: parse_failed,
            rounds_seen: model.rounds_seen,
        };
        Ok(Step {
            log,
            theta: next,
            trajectory: traj,
            model,
        })
    }
}

pub fn run<C: ChatClient + ?Sized>(train: &Table, config: &RunConfig, client: &C) -> Result<RunResult, TrainError> {
    run_with_observer(train, config, client, &mut |_| {})
}

/// [`run`], reporting each run-log event as it happens.
pub fn run_with_observer<C: ChatClient + ?Sized>(
    train: &Table,
    config: &RunConfig,
    client: &C,
    observer: &mut dyn FnMut(&RunEvent),
) -> Result<RunResult, TrainError> {
    config.validate()?;
    if train.len() < 2 * config.gen.n_examples_per_call {
        return Err(TrainError::Config(format!(
            "need at least {} training rows, got {}",
            2 * config.gen.n_examples_per_call,
            train.len()
        )));
    }
    observer(&RunEvent::Header {
        config: Box::new(config.clone()),
        n_train: train.len(),
        schema: train.schema.clone(),
    });

    let initial = initial_theta(train, config);
    let state = Loop {
        train,
        config,
        client,
        encoder: Encoder::fit(train),
    };
    let mut theta = initial.clone();
    let mut model = DiscriminatorModel::new(&config.disc);
    let mut trajectory = Trajectory::new(config.k);
    let mut history: Vec<IterationLog> = Vec::new();
    let mut skipped = Vec::new();
    let mut streak = 0;
    let mut iteration = 0;
    let mut epochs_ran = 0;
    let mut is_converged = false;

    'epochs: for epoch in 0..config.max_epochs {
        epochs_ran = epoch + 1;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64)));
        for (batch_index, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<Record> = idx.iter().map(|&i| train.rows[i].clone()).collect();
            let last = history.last().map(|h| h.score);
            match state.step(iteration, epoch, batch_index, &batch, &theta, &trajectory, &model, last) {
                Ok(step) => {
                    info!(
                        "epoch {epoch} batch {batch_index}: accuracy {:.3}, {} candidates",
                        step.log.score,
                        step.trajectory.candidates.len()
                    );
                    observer(&RunEvent::Iteration(step.log.clone()));
                    history.push(step.log);
                    theta = step.theta;
                    theta.iteration = iteration + 1;
                    trajectory = step.trajectory;
                    model = step.model;
                    streak = 0;
                    iteration += 1;
                    if config.convergence.enabled && converged(&history, &config.convergence) {
                        info!("converged after {iteration} iterations");
                        is_converged = true;
                        break 'epochs;
                    }
                }
                Err((reason, fatal)) => {
                    if let Some(e) = fatal {
                        return Err(e);
                    }
                    warn!("epoch {epoch} batch {batch_index} skipped: {reason}");
                    let entry = SkipLog {
                        epoch,
                        batch_index,
                        reason: reason.clone(),
                    };
                    observer(&RunEvent::Skipped(entry.clone()));
                    skipped.push(entry);
                    streak += 1;
                    if streak >= MAX_CONSECUTIVE_SKIPS {
                        return Err(TrainError::Aborted { count: streak, last: reason });
                    }
                }
            }
        }
    }

    let best = trajectory.best().ok_or(TrainError::NoIterations)?;
    let final_theta = best.theta.clone();
    let best_score = best.adjusted_score;
    let n = config.final_rows.unwrap_or(train.len());
    let synthetic = sample(&final_theta, train, n, None, client, config)?;
    observer(&RunEvent::Final {
        best_score,
        theta_digest: theta_digest(&final_theta),
        n_synthetic: synthetic.len(),
    });
    Ok(RunResult {
        initial_theta: initial,
        final_theta,
        best_score,
        synthetic,
        history,
        skipped,
        trajectory,
        model,
        epochs_ran,
        converged: is_converged,
    })
}

/// Draws exactly `n` rows from `theta`, taking few-shot examples round-robin
/// from `train` (only rows meeting a compiled condition, when there are any).
pub fn sample<C: ChatClient + ?Sized>(
    theta: &DataGenProcess,
    train: &Table,
    n: usize,
    condition: Option<&str>,
    client: &C,
    config: &RunConfig,
) -> Result<Table, GenerateError> {
    if n == 0 {
        return Ok(train.with_rows(Vec::new()));
    }
    if train.is_empty() {
        return Err(GenerateError::EmptyBatch);
    }
    let schema = &train.schema;
    let pool: Vec<&Record> = match compile_condition(condition, schema) {
        Some(cond) => {
            let matching: Vec<&Record> = train.rows.iter().filter(|r| cond.holds(r)).collect();
            if matching.is_empty() {
                train.rows.iter().collect()
            } else {
                matching
            }
        }
        None => train.rows.iter().collect(),
    };
    let mut gen = config.gen.clone();
    gen.batch_size = config.batch_size;
    let n_ex = gen.n_examples_per_call.clamp(1, pool.len());
    gen.n_examples_per_call = n_ex;
    let per_call = gen.samples_per_call.unwrap_or(n_ex).max(1);
    gen.samples_per_call = Some(per_call);

    let needed_calls = n.div_ceil(per_call);
    let max_calls = needed_calls + config.sample_retry_budget;
    let mut calls = 0;
    let mut cursor = 0;
    let mut rows: Vec<Record> = Vec::with_capacity(n);
    let mut last_error = None;
    while rows.len() < n && calls < max_calls {
        let round = (n - rows.len()).div_ceil(per_call).min(max_calls - calls);
        let examples: Vec<Record> = (0..round * n_ex)
            .map(|i| pool[(cursor + i) % pool.len()].clone())
            .collect();
        cursor = (cursor + round * n_ex) % pool.len();
        calls += round;
        match generate_with(theta, &examples, schema, client, &gen, condition) {
            Ok(batch) => rows.extend(batch.rows.rows),
            Err(GenerateError::Provider(e)) if is_fatal(&e) => return Err(GenerateError::Provider(e)),
            Err(e) => {
                warn!("sampling round failed: {e}");
                last_error = Some(e);
            }
        }
    }
    if rows.len() < n {
        if rows.is_empty() {
            if let Some(e) = last_error {
                return Err(e);
            }
        }
        return Err(GenerateError::Exhausted {
            wanted: n,
            got: rows.len(),
        });
    }
    rows.truncate(n);
    Ok(train.with_rows(rows))
}

/// Writes events as JSON lines.
pub struct RunLogWriter<W: Write> {
    out: W,
}

impl<W: Write> RunLogWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, event: &RunEvent) -> std::io::Result<()> {
        let line = serde_json::to_string(event).map_err(std::io::Error::other)?;
        writeln!(self.out, "{line}")?;
        self.out.flush()
    }

    /// Writes an already-built line, e.g. an event with extra fields merged in.
    pub fn write_value(&mut self, value: &serde_json::Value) -> std::io::Result<()> {
        writeln!(self.out, "{value}")?;
        self.out.flush()
    }
}

//! Generator prompts, chunked generation and conditional validation.

use std::fmt;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::causal::{to_pairs_text, Dag};
use crate::llm::{ChatClient, ChatRequest, LlmError, GENERATOR_MARKER};
use crate::table::{parse_records, serialize_records, ColumnKind, Record, Schema, Table, Value};

pub const DEFAULT_TASK: &str =
    "The ultimate goal is to produce accurate and convincing synthetic data that dutifully represents these causal relationships.";

const GENERATOR_PREAMBLE: &str =
    "Your task is to understand the instruction below and generate tabular data.";
const CAUSAL_PREAMBLE: &str =
    "Consider this causal graph of the data, where a pair (A, B) is used to represent a scenario where A affects B:";
const JSON_FORMAT: &str = "formatted strictly as a list in JSON format, suitable for direct use in data processing scripts such as conversion to a DataFrame in Python. No additional text or numbers should precede the JSON data.";
const CORRECTIVE: &str = "Your previous reply could not be parsed. Reply with only a JSON list of objects whose keys are exactly the schema's column names.";

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("provider failure: {0}")]
    Provider(#[source] LlmError),
    #[error("every chunk failed: {}", .0.join("; "))]
    AllChunksFailed(Vec<String>),
    #[error("could not produce {wanted} rows within the retry budget (got {got})")]
    Exhausted { wanted: usize, got: usize },
}

/// The text parameter being optimized: context, schema, causal structure and task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataGenProcess {
    pub context: String,
    pub schema_text: String,
    pub categories_text: String,
    pub causal: Dag,
    pub task: String,
    #[serde(default)]
    pub iteration: usize,
}

/// `age (numerical), workclass (categorical), ...`
pub fn render_schema_text(schema: &Schema) -> String {
    schema
        .columns
        .iter()
        .map(|c| {
            let kind = match c.kind {
                ColumnKind::Numeric => "numerical",
                ColumnKind::Categorical => "categorical",
            };
            match &c.description {
                Some(d) if !d.is_empty() => format!("{} ({kind}; {d})", c.name),
                _ => format!("{} ({kind})", c.name),
            }
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// `workclass: {'Private', 'Local-gov'}, sex: {'Male', 'Female'}`
pub fn render_categories_text(schema: &Schema) -> String {
    schema
        .columns
        .iter()
        .filter(|c| c.is_categorical())
        .map(|c| {
            let cats: Vec<String> = c.categories.iter().map(|v| format!("'{v}'")).collect();
            format!("{}: {{{}}}", c.name, cats.join(", "))
        })
        .collect::<Vec<_>>()
        .join(", ")
}

impl DataGenProcess {
    pub fn initial(schema: &Schema, causal: Dag) -> Self {
        Self {
            context: schema.context.clone(),
            schema_text: render_schema_text(schema),
            categories_text: render_categories_text(schema),
            causal,
            task: DEFAULT_TASK.to_string(),
            iteration: 0,
        }
    }

    /// The four blocks in order: context, schema (with categories), causal structure, task.
    pub fn render_blocks(&self, score_line: Option<&str>) -> String {
        let task = match score_line {
            Some(line) if !line.is_empty() => format!("{} As such, {line}", self.task),
            _ => self.task.clone(),
        };
        format!(
            "<context>{}</context>\n\n<schema> {} </schema>\n\n<categorical variables> {}\n</categorical variables>\n\n<causal structure> {CAUSAL_PREAMBLE} {}\n</causal structure>\n\n<task> {task} </task>",
            self.context,
            self.schema_text,
            self.categories_text,
            to_pairs_text(&self.causal),
        )
    }
}

impl fmt::Display for DataGenProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render_blocks(None))
    }
}

/// `strive for a quality score that is less than 70.0`, with the aim as a percentage.
pub fn score_line(aim_percent: f64) -> String {
    format!("strive for a quality score that is less than {aim_percent:.1}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    /// Few-shot examples per call; also the chunk size.
    pub n_examples_per_call: usize,
    pub temperature: f64,
    /// Records requested per call; `None` asks for as many as the chunk holds.
    pub samples_per_call: Option<usize>,
    pub batch_size: usize,
    pub target_score_line: Option<String>,
    /// Concurrent chunk requests.
    pub parallelism: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_examples_per_call: 5,
            temperature: 0.5,
            samples_per_call: None,
            batch_size: 50,
            target_score_line: None,
            parallelism: 4,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_examples_per_call == 0 || self.n_examples_per_call > self.batch_size {
            return Err(format!(
                "n_examples_per_call must be in 1..={} (got {})",
                self.batch_size, self.n_examples_per_call
            ));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.samples_per_call == Some(0) {
            return Err("samples_per_call must be at least 1".into());
        }
        if self.parallelism == 0 {
            return Err("parallelism must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

/// A compiled `<column> <op> <value>` condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub column: String,
    pub op: CmpOp,
    pub value: Value,
}

impl Condition {
    /// Compiles `text` against `schema`; `None` for free text the grammar does not cover.
    pub fn parse(text: &str, schema: &Schema) -> Option<Self> {
        let at = text.find(['<', '>', '=', '!'])?;
        let rest = &text[at..];
        let (op, len) = [
            ("==", CmpOp::Eq),
            ("!=", CmpOp::Ne),
            ("<=", CmpOp::Le),
            (">=", CmpOp::Ge),
            ("=", CmpOp::Eq),
            ("<", CmpOp::Lt),
            (">", CmpOp::Gt),
        ]
        .iter()
        .find(|(s, _)| rest.starts_with(s))
        .map(|(s, op)| (*op, s.len()))?;
        let name = text[..at].trim();
        let raw = rest[len..].trim().trim_matches(|c| c == '\'' || c == '"');
        let col = schema
            .columns
            .iter()
            .find(|c| c.name == name)
            .or_else(|| schema.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name)))?;
        let value = match col.kind {
            ColumnKind::Numeric => Value::Number(raw.parse().ok()?),
            ColumnKind::Categorical => {
                if !matches!(op, CmpOp::Eq | CmpOp::Ne) {
                    return None;
                }
                let cat = col
                    .categories
                    .iter()
                    .find(|c| c.as_str() == raw)
                    .or_else(|| col.categories.iter().find(|c| c.eq_ignore_ascii_case(raw)))?;
                Value::Category(cat.clone())
            }
        };
        Some(Self {
            column: col.name.clone(),
            op,
            value,
        })
    }

    pub fn holds(&self, record: &Record) -> bool {
        match (record.get(&self.column), &self.value) {
            (Some(Value::Number(x)), Value::Number(v)) => match self.op {
                CmpOp::Eq => x == v,
                CmpOp::Ne => x != v,
                CmpOp::Lt => x < v,
                CmpOp::Le => x <= v,
                CmpOp::Gt => x > v,
                CmpOp::Ge => x >= v,
            },
            (Some(Value::Category(x)), Value::Category(v)) => match self.op {
                CmpOp::Eq => x == v,
                CmpOp::Ne => x != v,
                _ => false,
            },
            _ => false,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.column, self.op.symbol(), self.value)
    }
}

/// Builds the generator request. With a condition, the instruction asks for
/// `n_samples` rows meeting it; examples may then be empty.
pub fn render_generator_prompt(
    theta: &DataGenProcess,
    examples: &[Record],
    schema: &Schema,
    n_samples: usize,
    condition: Option<&str>,
    config: &GenConfig,
) -> Result<ChatRequest, LlmError> {
    let system = format!(
        "{GENERATOR_MARKER}. {GENERATOR_PREAMBLE}\n\n{}",
        theta.render_blocks(config.target_score_line.as_deref())
    );
    let instruction = match condition {
        Some(cond) => format!("Generate {n_samples} synthetic samples with {cond}. Response should be {JSON_FORMAT}"),
        None => format!(
            "Generate {n_samples} synthetic samples mimic the provided samples. DO NOT COPY the samples and try to make the generated samples diverse. The response should be {JSON_FORMAT}"
        ),
    };
    let mut user = String::new();
    if !examples.is_empty() {
        user.push_str(&format!(
            "<example> Here are examples from real data: \n{}\n</example>\n\n",
            serialize_records(examples, schema)
        ));
    }
    user.push_str(&format!("<instruction>\n{instruction}\n</instruction>"));
    ChatRequest::new(system, user, config.temperature)
}

/// Splits `batch` into consecutive chunks of `n` (the last may be shorter).
///
/// Panics when `n` is zero.
pub fn batches_in_batch<T>(batch: &[T], n: usize) -> Vec<&[T]> {
    assert!(n >= 1, "chunk size must be at least 1");
    batch.chunks(n).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBatch {
    pub rows: Table,
    /// Requested rows that did not arrive as valid records.
    pub rejected: usize,
    pub requested: usize,
    /// Rows identical to one of the examples shown in their prompt.
    pub copies_of_examples: usize,
    pub source_iteration: usize,
    /// One message per chunk that produced nothing.
    pub failures: Vec<String>,
}

enum ChunkOutcome {
    Rows(Vec<Record>),
    Failed(String, Option<LlmError>),
}

fn run_chunk<C: ChatClient + ?Sized>(
    client: &C,
    request: &ChatRequest,
    schema: &Schema,
    wanted: usize,
    condition: Option<&Condition>,
) -> ChunkOutcome {
    let mut request = request.clone();
    let mut last = String::new();
    for attempt in 0..2 {
        let text = match client.complete(&request) {
            Ok(t) => t,
            Err(e) => return ChunkOutcome::Failed(e.to_string(), Some(e)),
        };
        match parse_records(&text, schema) {
            Ok(parsed) if !parsed.records.is_empty() => {
                let mut rows = parsed.records;
                if let Some(cond) = condition {
                    let before = rows.len();
                    rows.retain(|r| cond.holds(r));
                    if rows.len() < before {
                        debug!("dropped {} rows violating '{cond}'", before - rows.len());
                    }
                }
                rows.truncate(wanted);
                return ChunkOutcome::Rows(rows);
            }
            Ok(_) => last = "response held no valid records".into(),
            Err(e) => last = e.to_string(),
        }
        if attempt == 0 {
            debug!("retrying chunk after parse failure: {last}");
            request.user = format!("{}\n\n{CORRECTIVE}", request.user);
        }
    }
    ChunkOutcome::Failed(last, None)
}

/// Compiles `condition` when it fits the grammar, warning otherwise.
pub fn compile_condition(condition: Option<&str>, schema: &Schema) -> Option<Condition> {
    let text = condition?;
    let compiled = Condition::parse(text, schema);
    if compiled.is_none() {
        warn!("condition '{text}' is free text; generated rows will not be validated");
    }
    compiled
}

/// One call per chunk of `batch`, collated in chunk order.
pub fn generate<C: ChatClient + ?Sized>(
    theta: &DataGenProcess,
    batch: &[Record],
    schema: &Schema,
    client: &C,
    config: &GenConfig,
) -> Result<SyntheticBatch, GenerateError> {
    generate_with(theta, batch, schema, client, config, None)
}

/// [`generate`] with an optional condition passed to every chunk.
pub fn generate_with<C: ChatClient + ?Sized>(
    theta: &DataGenProcess,
    batch: &[Record],
    schema: &Schema,
    client: &C,
    config: &GenConfig,
    condition: Option<&str>,
) -> Result<SyntheticBatch, GenerateError> {
    if batch.is_empty() {
        return Err(GenerateError::EmptyBatch);
    }
    let compiled = compile_condition(condition, schema);
    let chunks = batches_in_batch(batch, config.n_examples_per_call.max(1));
    let jobs: Vec<(&[Record], usize, ChatRequest)> = chunks
        .into_iter()
        .map(|chunk| {
            let wanted = config.samples_per_call.unwrap_or(chunk.len());
            let req = render_generator_prompt(theta, chunk, schema, wanted, condition, config)
                .map_err(GenerateError::Provider)?;
            Ok((chunk, wanted, req))
        })
        .collect::<Result<_, GenerateError>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism.max(1))
        .build()
        .expect("thread pool");
    let outcomes: Vec<ChunkOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|(_, wanted, req)| run_chunk(client, req, schema, *wanted, compiled.as_ref()))
            .collect()
    });

    let requested: usize = jobs.iter().map(|(_, w, _)| w).sum();
    let mut rows = Vec::with_capacity(requested);
    let mut copies = 0;
    let mut failures = Vec::new();
    let mut provider_error = None;
    for ((chunk, _, _), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            ChunkOutcome::Rows(kept) => {
                copies += kept.iter().filter(|r| chunk.contains(r)).count();
                rows.extend(kept);
            }
            ChunkOutcome::Failed(msg, err) => {
                warn!("chunk skipped: {msg}");
                failures.push(msg);
                if provider_error.is_none() {
                    provider_error = err;
                }
            }
        }
    }
    if rows.is_empty() {
        return Err(match provider_error {
            Some(e) => GenerateError::Provider(e),
            None => GenerateError::AllChunksFailed(failures),
        });
    }
    Ok(SyntheticBatch {
        rejected: requested - rows.len(),
        requested,
        rows: Table {
            schema: schema.clone(),
            rows,
        },
        copies_of_examples: copies,
        source_iteration: theta.iteration,
        failures,
    })
}

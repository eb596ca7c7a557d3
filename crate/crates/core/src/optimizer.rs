//! Scored-candidate trajectory and the optimizer meta-prompt.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::causal::{pair_list_span, parse_pairs_text, to_pairs_text};
use crate::discriminator::{DiscriminatorError, DiscriminatorModel};
use crate::generator::DataGenProcess;
use crate::llm::{ChatRequest, LlmError, OPTIMIZER_MARKER};
use crate::table::{Encoder, Schema, Table};

pub const DEFAULT_K: usize = 3;
pub const OPTIMIZER_TEMPERATURE: f64 = 1.0;
/// Lowest aim written into a pair, in percent.
pub const AIM_FLOOR: f64 = 50.0;
/// How far below the current best score the aim is set, in percentage points.
pub const AIM_MARGIN: f64 = 5.0;

const PAIR_HEADER: &str = "Here is the causal graph of the data, where a tuple (A, B) indicates A causes B:";
const CLOSING: &str = "Your updated prompt should explicitly include any modifications to the causal graph and guidance. The aim is to create a prompt that leads to the lowest possible score.";
const OUTPUT_FORMAT: &str = "Write the revised causal graph as a list of (cause, effect) tuples inside <Causal structure></Causal structure> tags, then the revised guidance inside <Task></Task> tags.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub theta: DataGenProcess,
    /// Synthetic rows generated under `theta`, reused at every rescore.
    pub synthetic_cache: Table,
    pub adjusted_score: f64,
    pub created_iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Insertion order; later entries are newer.
    pub candidates: Vec<ScoredCandidate>,
    pub k: usize,
}

impl Trajectory {
    pub fn new(k: usize) -> Self {
        Self {
            candidates: Vec::new(),
            k: k.max(1),
        }
    }

    pub fn push(&mut self, candidate: ScoredCandidate) {
        self.candidates.push(candidate);
    }

    /// Indices from most to least desirable: lowest score first, newer first on ties.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.candidates.len()).collect();
        idx.sort_by(|&a, &b| {
            let (ca, cb) = (&self.candidates[a], &self.candidates[b]);
            ca.adjusted_score
                .total_cmp(&cb.adjusted_score)
                .then(cb.created_iteration.cmp(&ca.created_iteration))
                .then(b.cmp(&a))
        });
        idx
    }

    pub fn best(&self) -> Option<&ScoredCandidate> {
        self.ranking().first().map(|&i| &self.candidates[i])
    }
}

/// Recomputes every candidate's score under `model`; caches are not regenerated.
pub fn rescore(
    trajectory: &Trajectory,
    model: &DiscriminatorModel,
    real_test: &Table,
    encoder: &Encoder,
) -> Result<Trajectory, DiscriminatorError> {
    let scores: Vec<f64> = trajectory
        .candidates
        .par_iter()
        .map(|c| model.score_theta(&c.synthetic_cache, real_test, encoder))
        .collect::<Result<_, _>>()?;
    let mut next = trajectory.clone();
    for (c, s) in next.candidates.iter_mut().zip(scores) {
        c.adjusted_score = s;
    }
    Ok(next)
}

/// Keeps the `k` most desirable candidates, preserving insertion order.
pub fn prune(trajectory: &Trajectory) -> Trajectory {
    let mut keep = trajectory.ranking();
    keep.truncate(trajectory.k);
    keep.sort_unstable();
    Trajectory {
        candidates: keep.into_iter().map(|i| trajectory.candidates[i].clone()).collect(),
        k: trajectory.k,
    }
}

/// Aim in percent for a best score given as a fraction.
pub fn aim_for(best_score: f64) -> f64 {
    (best_score * 100.0 - AIM_MARGIN).max(AIM_FLOOR)
}

fn python_list(items: &[String]) -> String {
    let quoted: Vec<String> = items.iter().map(|c| format!("'{c}'")).collect();
    format!("[{}]", quoted.join(", "))
}

/// Pair blocks run from least to most desirable, so the best candidate is last.
pub fn build_optimizer_prompt(
    trajectory: &Trajectory,
    columns: &[String],
    target_hint: Option<&str>,
) -> Result<ChatRequest, LlmError> {
    if trajectory.candidates.is_empty() {
        return Err(LlmError::InvalidRequest("optimizer prompt needs at least one candidate".into()));
    }
    let mut system = format!(
        "{OPTIMIZER_MARKER} for generating high-quality synthetic data. Aim to lower the scores associated with each causal structure and prompt, where a lower score reflects better quality. Here are the steps:\n\
         1. Examine the existing prompt-score pairs.\n\
         2. Adjust the causal graph to better represent the underlying relationships by adding or removing connections, and consider incorporating new features from the list {}.\n\
         3. Modify the prompt guidance to align with the revised causal graph, ensuring it aids in reducing the score.\n",
        python_list(columns)
    );
    if let Some(target) = target_hint {
        system.push_str(&format!("The prediction target is '{target}'.\n"));
    }
    system.push_str(OUTPUT_FORMAT);

    let mut order = trajectory.ranking();
    order.reverse();
    let best = trajectory.candidates[*order.last().expect("non-empty")].adjusted_score;
    let aim = aim_for(best);
    let pairs: Vec<String> = order
        .iter()
        .map(|&i| {
            let c = &trajectory.candidates[i];
            format!(
                "<pair>\n{PAIR_HEADER}\n{}\n{}\nSet your aim to achieve a score below {aim:.1}\nScore: {:.2}%\n</pair>",
                to_pairs_text(&c.theta.causal),
                c.theta.task.trim(),
                c.adjusted_score * 100.0
            )
        })
        .collect();
    let user = format!("{}\n\n{CLOSING}\n\nThe updated prompt:", pairs.join("\n\n"));
    ChatRequest::new(system, user, OPTIMIZER_TEMPERATURE)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaUpdate {
    pub theta: DataGenProcess,
    /// Neither a structure nor a task could be recovered.
    pub parse_failed: bool,
    pub structure_found: bool,
    pub task_found: bool,
    /// Pairs dropped for unknown names or cycles.
    pub dropped_pairs: usize,
}

/// Byte range of the content between `<tag>` and `</tag>`, case-insensitively.
fn tagged_block(text: &str, tag: &str) -> Option<(usize, usize)> {
    let lower = text.to_ascii_lowercase();
    let open = format!("<{}>", tag.to_ascii_lowercase());
    let close = format!("</{}>", tag.to_ascii_lowercase());
    let start = lower.find(&open)? + open.len();
    let end = lower[start..].find(&close).map_or(text.len(), |e| start + e);
    Some((start, end))
}

fn strip_tags(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(i) = rest.find('<') {
        out.push_str(&rest[..i]);
        match rest[i..].find('>') {
            Some(j) if !rest[i + 1..i + j].contains(char::is_whitespace) => rest = &rest[i + j + 1..],
            _ => {
                out.push('<');
                rest = &rest[i + 1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn clean_task(text: &str) -> String {
    strip_tags(text)
        .trim()
        .trim_matches(|c: char| c == '"' || c == '\'' || c.is_whitespace())
        .to_string()
}

/// Reads a revised structure and task from optimizer output. Missing pieces come
/// from `previous`; context and schema text are always carried over unchanged.
pub fn parse_theta_update(text: &str, schema: &Schema, previous: &DataGenProcess) -> ThetaUpdate {
    let names = schema.names();
    let structure_region = tagged_block(text, "causal structure");
    let (search_start, search_end) = structure_region.unwrap_or((0, text.len()));
    let region = &text[search_start..search_end];

    let mut causal = None;
    let mut dropped = 0;
    let mut list_end = None;
    if let Some(list) = pair_list_span(region) {
        if let Ok(parsed) = parse_pairs_text(list, &names) {
            let offset = list.as_ptr() as usize - text.as_ptr() as usize;
            list_end = Some(offset + list.len());
            dropped = parsed.warnings();
            if parsed.dag.edge_count() > 0 || parsed.unknown == 0 {
                causal = Some(parsed.dag);
            }
        }
    }

    let task = match tagged_block(text, "task") {
        Some((s, e)) => Some(clean_task(&text[s..e])),
        None => {
            // Prose after the structure, when there is any.
            let after = match structure_region {
                Some((_, e)) => Some(text[e..].find('>').map_or(e, |j| e + j + 1)),
                None => list_end,
            };
            after.map(|i| clean_task(&text[i..]))
        }
    }
    .filter(|t| !t.is_empty());

    let structure_found = causal.is_some();
    let task_found = task.is_some();
    ThetaUpdate {
        theta: DataGenProcess {
            context: previous.context.clone(),
            schema_text: previous.schema_text.clone(),
            categories_text: previous.categories_text.clone(),
            causal: causal.unwrap_or_else(|| previous.causal.clone()),
            task: task.unwrap_or_else(|| previous.task.clone()),
            iteration: previous.iteration + 1,
        },
        parse_failed: !structure_found && !task_found,
        structure_found,
        task_found,
        dropped_pairs: dropped,
    }
}

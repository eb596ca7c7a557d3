//! Causal structure over schema columns: DAGs, their pair-list text form,
//! BIC-driven hill climbing and structural Hamming distance.

mod bic;
mod dag;
mod hill_climb;
mod text;

pub use bic::{bic_score, Discretized, NUMERIC_BINS};
pub use dag::{ged, Dag, EdgeEdit};
pub use hill_climb::{hill_climb, DEFAULT_MAX_ITERS, DEFAULT_MAX_PARENTS};
pub use text::{pair_list_span, parse_pairs_text, scan_pairs, to_pairs_text, ParsedDag};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DagError {
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error("edge {0} -> {1} would create a cycle")]
    Cycle(String, String),
    #[error("graphs are defined over different node sets")]
    NodeMismatch,
    #[error("no (cause, effect) pairs found")]
    NoPairs,
}

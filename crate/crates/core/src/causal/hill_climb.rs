use std::collections::HashMap;

use crate::table::Table;

use super::bic::Discretized;
use super::Dag;

pub const DEFAULT_MAX_PARENTS: usize = 3;
pub const DEFAULT_MAX_ITERS: usize = 1000;

/// Moves must beat the incumbent by this much; equal-score (Markov-equivalent)
/// alternatives keep the first candidate in scan order, which follows column order.
const IMPROVEMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
enum Move {
    Add(usize, usize),
    Delete(usize, usize),
    Reverse(usize, usize),
}

struct FamilyCache<'a> {
    data: &'a Discretized,
    scores: HashMap<(usize, Vec<usize>), f64>,
}

impl FamilyCache<'_> {
    fn score(&mut self, node: usize, parents: &[usize]) -> f64 {
        let mut key_parents = parents.to_vec();
        key_parents.sort_unstable();
        let data = self.data;
        *self
            .scores
            .entry((node, key_parents.clone()))
            .or_insert_with(|| data.family_score(node, &key_parents))
    }
}

fn without(parents: &[usize], p: usize) -> Vec<usize> {
    parents.iter().copied().filter(|&x| x != p).collect()
}

fn with(parents: &[usize], p: usize) -> Vec<usize> {
    let mut v = parents.to_vec();
    v.push(p);
    v
}

/// Greedy BIC hill climbing from the empty graph over single-edge additions,
/// deletions and reversals.
///
/// Node pairs are scanned in column order, so ties between equivalent
/// orientations favour the earlier column as the cause. The search has no random
/// component; `_seed` is accepted so callers can pass a run seed uniformly.
pub fn hill_climb(table: &Table, max_parents: usize, max_iters: usize, _seed: u64) -> Dag {
    let data = Discretized::from_table(table);
    let n = data.names.len();
    let mut dag = Dag::new(data.names.clone());
    if n < 2 || table.is_empty() {
        return dag;
    }
    let mut cache = FamilyCache {
        data: &data,
        scores: HashMap::new(),
    };
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();

    for _ in 0..max_iters {
        let mut best: Option<(f64, Move)> = None;
        let mut consider = |delta: f64, mv: Move| {
            if delta > IMPROVEMENT_TOL && best.is_none_or(|(d, _)| delta > d + IMPROVEMENT_TOL) {
                best = Some((delta, mv));
            }
        };
        for &(a, b) in &pairs {
            let pa_b = dag.parents(b);
            if dag.has_edge(a, b) {
                let base_b = cache.score(b, &pa_b);
                let removed = cache.score(b, &without(&pa_b, a));
                consider(removed - base_b, Move::Delete(a, b));

                let pa_a = dag.parents(a);
                if pa_a.len() < max_parents {
                    let mut probe = dag.clone();
                    probe.remove_edge(a, b);
                    if !probe.would_cycle(b, a) {
                        let delta = removed - base_b + cache.score(a, &with(&pa_a, b))
                            - cache.score(a, &pa_a);
                        consider(delta, Move::Reverse(a, b));
                    }
                }
            } else if !dag.has_edge(b, a) && pa_b.len() < max_parents && !dag.would_cycle(a, b) {
                let delta = cache.score(b, &with(&pa_b, a)) - cache.score(b, &pa_b);
                consider(delta, Move::Add(a, b));
            }
        }
        let Some((_, mv)) = best else { break };
        match mv {
            Move::Add(a, b) => dag.add_edge(a, b).expect("checked acyclic"),
            Move::Delete(a, b) => {
                dag.remove_edge(a, b);
            }
            Move::Reverse(a, b) => dag.reverse_edge(a, b).expect("checked acyclic"),
        }
        debug_assert!(dag.nodes().iter().enumerate().all(|(i, _)| dag.parents(i).len() <= max_parents));
    }
    dag
}

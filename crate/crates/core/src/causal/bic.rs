//! BIC scoring over discretized columns.

use std::collections::HashMap;

use crate::table::{ColumnKind, Table, Value};

use super::Dag;

/// Numeric columns are cut into this many equal-frequency bins.
pub const NUMERIC_BINS: usize = 4;

/// Integer-coded view of a table, one state vector per column.
#[derive(Debug, Clone)]
pub struct Discretized {
    pub names: Vec<String>,
    pub states: Vec<Vec<usize>>,
    pub cardinality: Vec<usize>,
    pub n_rows: usize,
}

fn quantile_cuts(values: &[f64], bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cuts: Vec<f64> = (1..bins)
        .map(|k| crate::stats::quantile_sorted(&sorted, k as f64 / bins as f64))
        .collect();
    cuts.dedup();
    cuts
}

impl Discretized {
    pub fn from_table(table: &Table) -> Self {
        let mut names = Vec::new();
        let mut states = Vec::new();
        let mut cardinality = Vec::new();
        for col in &table.schema.columns {
            names.push(col.name.clone());
            match col.kind {
                ColumnKind::Categorical => {
                    cardinality.push(col.categories.len());
                    states.push(
                        table
                            .rows
                            .iter()
                            .map(|r| match r.get(&col.name) {
                                Some(Value::Category(s)) => col.category_index(s).unwrap_or(0),
                                _ => 0,
                            })
                            .collect(),
                    );
                }
                ColumnKind::Numeric => {
                    let values = table.column_values(&col.name).unwrap_or_default();
                    let cuts = quantile_cuts(&values, NUMERIC_BINS);
                    cardinality.push(cuts.len() + 1);
                    states.push(
                        values
                            .iter()
                            .map(|v| cuts.iter().filter(|c| **c < *v).count())
                            .collect(),
                    );
                }
            }
        }
        Self {
            names,
            states,
            cardinality,
            n_rows: table.len(),
        }
    }

    /// BIC contribution of `node` given `parents`: log-likelihood minus
    /// `ln(n)/2` per free parameter.
    pub fn family_score(&self, node: usize, parents: &[usize]) -> f64 {
        let r = self.cardinality[node];
        let mut counts: HashMap<u64, Vec<u32>> = HashMap::new();
        let mut q: f64 = 1.0;
        for &p in parents {
            q *= self.cardinality[p] as f64;
        }
        for row in 0..self.n_rows {
            let mut config = 0u64;
            for &p in parents {
                config = config
                    .wrapping_mul(self.cardinality[p] as u64)
                    .wrapping_add(self.states[p][row] as u64);
            }
            counts.entry(config).or_insert_with(|| vec![0; r])[self.states[node][row]] += 1;
        }
        let mut configs: Vec<_> = counts.into_iter().collect();
        configs.sort_by_key(|(k, _)| *k);
        let mut log_likelihood = 0.0;
        for (_, row_counts) in &configs {
            let total: u32 = row_counts.iter().sum();
            for &c in row_counts {
                if c > 0 {
                    log_likelihood += c as f64 * (c as f64 / total as f64).ln();
                }
            }
        }
        let free_params = (r as f64 - 1.0) * q;
        let n = self.n_rows.max(1) as f64;
        log_likelihood - 0.5 * n.ln() * free_params
    }
}

/// Sum of family scores over the DAG's nodes, in node order.
pub fn bic_score(dag: &Dag, table: &Table) -> f64 {
    let data = Discretized::from_table(table);
    score_with(dag, &data)
}

pub(crate) fn score_with(dag: &Dag, data: &Discretized) -> f64 {
    let mut total = 0.0;
    for (i, name) in dag.nodes().iter().enumerate() {
        let node = data.names.iter().position(|n| n == name).expect("dag nodes are table columns");
        let parents: Vec<usize> = dag
            .parents(i)
            .iter()
            .map(|&p| {
                let pname = &dag.nodes()[p];
                data.names.iter().position(|n| n == pname).expect("dag nodes are table columns")
            })
            .collect();
        total += data.family_score(node, &parents);
    }
    total
}

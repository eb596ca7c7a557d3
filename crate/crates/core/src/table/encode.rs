use serde::{Deserialize, Serialize};

use super::{ColumnKind, Record, Table, Value};

/// What one encoded coordinate represents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnRole {
    Numeric { source: String },
    OneHot { source: String, category: String },
}

impl ColumnRole {
    pub fn source(&self) -> &str {
        match self {
            ColumnRole::Numeric { source } | ColumnRole::OneHot { source, .. } => source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericRange {
    pub min: f64,
    pub max: f64,
}

impl NumericRange {
    /// Min-max scaling; a degenerate range maps everything to 0.0. Values
    /// outside the fitted range are not clamped.
    pub fn scale(&self, v: f64) -> f64 {
        if self.max > self.min {
            (v - self.min) / (self.max - self.min)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Slot {
    Numeric { column: String, range: NumericRange },
    Categorical { column: String, categories: Vec<String> },
}

/// Fitted feature layout: min-max ranges for numeric columns, one-hot groups for
/// categorical ones, in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    slots: Vec<Slot>,
}

impl Encoder {
    pub fn fit(table: &Table) -> Self {
        Self::fit_excluding(table, &[])
    }

    /// Fits on every column except those named in `skip`.
    pub fn fit_excluding(table: &Table, skip: &[&str]) -> Self {
        let slots = table
            .schema
            .columns
            .iter()
            .filter(|c| !skip.contains(&c.name.as_str()))
            .map(|col| match col.kind {
                ColumnKind::Numeric => {
                    let mut range = NumericRange {
                        min: f64::INFINITY,
                        max: f64::NEG_INFINITY,
                    };
                    for row in &table.rows {
                        if let Some(Value::Number(v)) = row.get(&col.name) {
                            range.min = range.min.min(*v);
                            range.max = range.max.max(*v);
                        }
                    }
                    if !range.min.is_finite() {
                        range = NumericRange { min: 0.0, max: 0.0 };
                    }
                    Slot::Numeric {
                        column: col.name.clone(),
                        range,
                    }
                }
                ColumnKind::Categorical => Slot::Categorical {
                    column: col.name.clone(),
                    categories: col.categories.clone(),
                },
            })
            .collect();
        Self { slots }
    }

    pub fn width(&self) -> usize {
        self.slots
            .iter()
            .map(|s| match s {
                Slot::Numeric { .. } => 1,
                Slot::Categorical { categories, .. } => categories.len(),
            })
            .sum()
    }

    pub fn roles(&self) -> Vec<ColumnRole> {
        let mut roles = Vec::with_capacity(self.width());
        for slot in &self.slots {
            match slot {
                Slot::Numeric { column, .. } => roles.push(ColumnRole::Numeric {
                    source: column.clone(),
                }),
                Slot::Categorical { column, categories } => {
                    roles.extend(categories.iter().map(|c| ColumnRole::OneHot {
                        source: column.clone(),
                        category: c.clone(),
                    }))
                }
            }
        }
        roles
    }

    /// `(column, range)` for every numeric slot.
    pub fn normalization(&self) -> Vec<(String, NumericRange)> {
        self.slots
            .iter()
            .filter_map(|s| match s {
                Slot::Numeric { column, range } => Some((column.clone(), *range)),
                Slot::Categorical { .. } => None,
            })
            .collect()
    }

    pub fn encode_record(&self, record: &Record) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width());
        for slot in &self.slots {
            match slot {
                Slot::Numeric { column, range } => {
                    let v = record.get(column).and_then(Value::as_f64).unwrap_or(range.min);
                    out.push(range.scale(v));
                }
                Slot::Categorical { column, categories } => {
                    let value = record.get(column).and_then(Value::as_str);
                    out.extend(
                        categories
                            .iter()
                            .map(|c| if Some(c.as_str()) == value { 1.0 } else { 0.0 }),
                    );
                }
            }
        }
        out
    }

    pub fn encode(&self, table: &Table) -> FeatureMatrix {
        FeatureMatrix {
            rows: table.rows.iter().map(|r| self.encode_record(r)).collect(),
            encoder: self.clone(),
        }
    }
}

/// Dense encoded rows plus the layout that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub rows: Vec<Vec<f64>>,
    pub encoder: Encoder,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.encoder.width()
    }

    pub fn column_map(&self) -> Vec<ColumnRole> {
        self.encoder.roles()
    }
}

/// Encodes `table`, reusing `fit_on`'s normalization when supplied.
pub fn encode_features(table: &Table, fit_on: Option<&FeatureMatrix>) -> FeatureMatrix {
    match fit_on {
        Some(fitted) => fitted.encoder.encode(table),
        None => Encoder::fit(table).encode(table),
    }
}

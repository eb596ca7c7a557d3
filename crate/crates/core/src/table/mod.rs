//! Typed tabular data: schemas, records, tables and their encodings.

mod encode;
mod io;
mod records;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use encode::{encode_features, ColumnRole, Encoder, FeatureMatrix, NumericRange};
pub use io::{infer_schema, load_csv, load_schema, write_csv, DEFAULT_MAX_CATEGORIES};
pub use records::{parse_records, serialize_record, serialize_records, ParsedRecords};

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("row {row}, column '{column}': {reason}")]
    Value {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("no JSON array found in generator output")]
    NoJsonArray,
    #[error("split size {n_train} out of range for {n_rows} rows")]
    SplitRange { n_train: usize, n_rows: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub categories: Vec<String>,
}

impl ColumnSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Numeric,
            description: None,
            categories: Vec::new(),
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical,
            description: None,
            categories: categories.into_iter().map(Into::into).collect(),
        }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = Some(description.into());
        self
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == ColumnKind::Categorical
    }

    pub fn category_index(&self, value: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == value)
    }
}

/// Ordered column metadata plus the dataset context and prediction target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(default)]
    pub context: String,
    pub target: String,
    pub columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn new(
        columns: Vec<ColumnSpec>,
        context: impl Into<String>,
        target: impl Into<String>,
    ) -> Result<Self, TableError> {
        let schema = Self {
            context: context.into(),
            target: target.into(),
            columns,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), TableError> {
        let mut seen = HashSet::new();
        for col in &self.columns {
            if !seen.insert(col.name.as_str()) {
                return Err(TableError::Schema(format!("duplicate column '{}'", col.name)));
            }
            match col.kind {
                ColumnKind::Categorical => {
                    if col.categories.is_empty() {
                        return Err(TableError::Schema(format!(
                            "categorical column '{}' has no categories",
                            col.name
                        )));
                    }
                    let distinct: HashSet<_> = col.categories.iter().collect();
                    if distinct.len() != col.categories.len() {
                        return Err(TableError::Schema(format!(
                            "categorical column '{}' lists a category twice",
                            col.name
                        )));
                    }
                }
                ColumnKind::Numeric => {
                    if !col.categories.is_empty() {
                        return Err(TableError::Schema(format!(
                            "numeric column '{}' declares categories",
                            col.name
                        )));
                    }
                }
            }
        }
        if self.column(&self.target).is_none() {
            return Err(TableError::Schema(format!(
                "target '{}' is not a column",
                self.target
            )));
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// Schema without the target column, used for supervised feature matrices.
    pub fn without_target(&self) -> Schema {
        Schema {
            context: self.context.clone(),
            target: String::new(),
            columns: self
                .columns
                .iter()
                .filter(|c| c.name != self.target)
                .cloned()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Category(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Number(v) => Some(*v),
            Value::Category(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Category(s) => Some(s),
            Value::Number(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(v) => write!(f, "{v}"),
            Value::Category(s) => f.write_str(s),
        }
    }
}

/// One row. Values are keyed by column name; ordering comes from the schema.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Record {
    pub values: BTreeMap<String, Value>,
}

impl Record {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, column: impl Into<String>, value: Value) -> Self {
        self.values.insert(column.into(), value);
        self
    }

    pub fn get(&self, column: &str) -> Option<&Value> {
        self.values.get(column)
    }

    /// Checks the record against `schema`, returning the first offending column.
    pub fn check(&self, schema: &Schema) -> Result<(), (String, String)> {
        for col in &schema.columns {
            match (col.kind, self.values.get(&col.name)) {
                (_, None) => return Err((col.name.clone(), "missing value".into())),
                (ColumnKind::Numeric, Some(Value::Number(v))) => {
                    if !v.is_finite() {
                        return Err((col.name.clone(), format!("non-finite number {v}")));
                    }
                }
                (ColumnKind::Numeric, Some(Value::Category(s))) => {
                    return Err((col.name.clone(), format!("expected a number, got '{s}'")))
                }
                (ColumnKind::Categorical, Some(Value::Category(s))) => {
                    if col.category_index(s).is_none() {
                        return Err((col.name.clone(), format!("'{s}' is not a declared category")));
                    }
                }
                (ColumnKind::Categorical, Some(Value::Number(v))) => {
                    return Err((col.name.clone(), format!("expected a category, got {v}")))
                }
            }
        }
        if self.values.len() != schema.columns.len() {
            let extra = self
                .values
                .keys()
                .find(|k| schema.column(k).is_none())
                .cloned()
                .unwrap_or_default();
            return Err((extra, "column not in schema".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub schema: Schema,
    pub rows: Vec<Record>,
}

impl Table {
    /// Builds a table, validating every row.
    pub fn new(schema: Schema, rows: Vec<Record>) -> Result<Self, TableError> {
        schema.validate()?;
        for (i, row) in rows.iter().enumerate() {
            row.check(&schema).map_err(|(column, reason)| TableError::Value {
                row: i + 1,
                column,
                reason,
            })?;
        }
        Ok(Self { schema, rows })
    }

    pub fn empty(schema: Schema) -> Self {
        Self {
            schema,
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Same schema, subset of rows by index.
    pub fn select(&self, indices: &[usize]) -> Table {
        Table {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn with_rows(&self, rows: Vec<Record>) -> Table {
        Table {
            schema: self.schema.clone(),
            rows,
        }
    }

    /// Numeric view of one column; categorical columns yield their category index.
    pub fn column_values(&self, name: &str) -> Option<Vec<f64>> {
        let col = self.schema.column(name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match r.get(name) {
                    Some(Value::Number(v)) => *v,
                    Some(Value::Category(s)) => col.category_index(s).unwrap_or(0) as f64,
                    None => f64::NAN,
                })
                .collect(),
        )
    }
}

/// Seeded random partition into `n_train` and the remaining rows.
pub fn split(table: &Table, n_train: usize, seed: u64) -> Result<(Table, Table), TableError> {
    let n = table.len();
    if n_train == 0 || n_train >= n {
        return Err(TableError::SplitRange { n_train, n_rows: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, test) = idx.split_at(n_train);
    Ok((table.select(train), table.select(test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Table {
        let schema = Schema::new(
            vec![
                ColumnSpec::numeric("x"),
                ColumnSpec::categorical("c", ["a", "b"]),
            ],
            "toy",
            "c",
        )
        .unwrap();
        let rows = (0..n)
            .map(|i| {
                Record::new()
                    .with("x", Value::Number(i as f64))
                    .with("c", Value::Category(if i % 2 == 0 { "a" } else { "b" }.into()))
            })
            .collect();
        Table::new(schema, rows).unwrap()
    }

    #[test]
    fn split_is_deterministic() {
        let t = toy(10);
        let a = split(&t, 8, 1).unwrap();
        let b = split(&t, 8, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.len(), 8);
        assert_eq!(a.1.len(), 2);
    }

    #[test]
    fn split_rejects_full_or_empty_train() {
        let t = toy(10);
        assert!(matches!(split(&t, 10, 1), Err(TableError::SplitRange { .. })));
        assert!(matches!(split(&t, 0, 1), Err(TableError::SplitRange { .. })));
    }

    #[test]
    fn schema_rejects_missing_target_and_empty_categories() {
        assert!(Schema::new(vec![ColumnSpec::numeric("x")], "", "y").is_err());
        let empty = ColumnSpec::categorical("c", Vec::<String>::new());
        assert!(Schema::new(vec![empty], "", "c").is_err());
        let dup = vec![ColumnSpec::numeric("x"), ColumnSpec::numeric("x")];
        assert!(Schema::new(dup, "", "x").is_err());
    }

    #[test]
    fn record_check_flags_bad_category() {
        let t = toy(1);
        let bad = Record::new()
            .with("x", Value::Number(1.0))
            .with("c", Value::Category("z".into()));
        let (col, _) = bad.check(&t.schema).unwrap_err();
        assert_eq!(col, "c");
    }
}

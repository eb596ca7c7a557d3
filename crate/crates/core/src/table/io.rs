use std::collections::BTreeSet;
use std::path::Path;

use super::{ColumnKind, ColumnSpec, Record, Schema, Table, TableError, Value};

/// Integer-like columns with at most this many distinct values become categorical.
pub const DEFAULT_MAX_CATEGORIES: usize = 10;

fn parse_number(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn io_err(path: &Path, source: std::io::Error) -> TableError {
    TableError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads a JSON schema sidecar (`context`, `target`, `columns[]`).
pub fn load_schema(path: impl AsRef<Path>) -> Result<Schema, TableError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let schema: Schema = serde_json::from_str(&text)
        .map_err(|e| TableError::Schema(format!("{}: {e}", path.display())))?;
    schema.validate()?;
    Ok(schema)
}

/// Decides column kinds from raw string cells.
///
/// A column is categorical when any cell is non-numeric or when it has at most
/// `max_categories` distinct values. The last column becomes the target.
pub fn infer_schema(
    header: &[String],
    rows: &[Vec<String>],
    max_categories: usize,
) -> Result<Schema, TableError> {
    if rows.is_empty() {
        return Err(TableError::Schema("cannot infer a schema from zero rows".into()));
    }
    let mut columns = Vec::with_capacity(header.len());
    for (j, name) in header.iter().enumerate() {
        let cells: Vec<&str> = rows
            .iter()
            .filter_map(|r| r.get(j).map(|s| s.trim()))
            .filter(|s| !s.is_empty())
            .collect();
        if cells.is_empty() {
            return Err(TableError::Schema(format!("column '{name}' has no parseable values")));
        }
        let all_numeric = cells.iter().all(|c| parse_number(c).is_some());
        let distinct: BTreeSet<&str> = cells.iter().copied().collect();
        let spec = if all_numeric && distinct.len() > max_categories {
            ColumnSpec::numeric(name.clone())
        } else if all_numeric {
            // Merge spellings such as "1" and "1.0", then order numerically.
            let mut values: Vec<(f64, &str)> = Vec::new();
            for c in distinct {
                let v = parse_number(c).unwrap_or(f64::NAN);
                if !values.iter().any(|(u, _)| *u == v) {
                    values.push((v, c));
                }
            }
            values.sort_by(|a, b| a.0.total_cmp(&b.0));
            ColumnSpec::categorical(name.clone(), values.into_iter().map(|(_, c)| c.to_string()))
        } else {
            ColumnSpec::categorical(name.clone(), distinct.into_iter().map(str::to_string))
        };
        columns.push(spec);
    }
    let target = header.last().cloned().unwrap_or_default();
    Schema::new(columns, "", target)
}

fn convert_cell(spec: &ColumnSpec, raw: &str, row: usize) -> Result<Value, TableError> {
    let raw = raw.trim();
    let fail = |reason: String| TableError::Value {
        row,
        column: spec.name.clone(),
        reason,
    };
    if raw.is_empty() {
        return Err(fail("missing value".into()));
    }
    match spec.kind {
        ColumnKind::Numeric => parse_number(raw)
            .map(Value::Number)
            .ok_or_else(|| fail(format!("'{raw}' is not a number"))),
        ColumnKind::Categorical => {
            if spec.category_index(raw).is_some() {
                return Ok(Value::Category(raw.to_string()));
            }
            // "1.0" in the file against a declared "1".
            if let Some(v) = parse_number(raw) {
                if let Some(c) = spec.categories.iter().find(|c| parse_number(c) == Some(v)) {
                    return Ok(Value::Category(c.clone()));
                }
            }
            Err(fail(format!("'{raw}' is not a declared category")))
        }
    }
}

/// Loads a headered CSV file. Without a schema, one is inferred from the data.
pub fn load_csv(path: impl AsRef<Path>, schema: Option<&Schema>) -> Result<Table, TableError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut raw_rows = Vec::new();
    for rec in reader.records() {
        raw_rows.push(rec?.iter().map(str::to_string).collect::<Vec<_>>());
    }
    let schema = match schema {
        Some(s) => s.clone(),
        None => infer_schema(&header, &raw_rows, DEFAULT_MAX_CATEGORIES)?,
    };
    schema.validate()?;
    let mut positions = Vec::with_capacity(schema.columns.len());
    for col in &schema.columns {
        let pos = header.iter().position(|h| h == &col.name).ok_or_else(|| {
            TableError::Schema(format!("column '{}' missing from CSV header", col.name))
        })?;
        positions.push(pos);
    }
    let mut rows = Vec::with_capacity(raw_rows.len());
    for (i, raw) in raw_rows.iter().enumerate() {
        let mut record = Record::new();
        for (col, &pos) in schema.columns.iter().zip(&positions) {
            let cell = raw.get(pos).map(String::as_str).unwrap_or("");
            record
                .values
                .insert(col.name.clone(), convert_cell(col, cell, i + 1)?);
        }
        rows.push(record);
    }
    Ok(Table { schema, rows })
}

/// Writes rows with the schema's column order as header.
pub fn write_csv(table: &Table, path: impl AsRef<Path>) -> Result<(), TableError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record(table.schema.columns.iter().map(|c| c.name.as_str()))?;
    for row in &table.rows {
        writer.write_record(
            table
                .schema
                .columns
                .iter()
                .map(|c| row.get(&c.name).map(|v| v.to_string()).unwrap_or_default()),
        )?;
    }
    writer.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

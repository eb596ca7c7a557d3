//! JSON (de)serialization of records as they appear in generator prompts and replies.

use serde_json::Value as Json;

use super::{ColumnKind, ColumnSpec, Record, Schema, TableError, Value};

fn render_number(v: f64) -> String {
    // Debug keeps a trailing ".0" on integral values and round-trips exactly.
    format!("{v:?}")
}

/// One JSON object, keys in schema order: `{"age": 53.0, "sex": "Male"}`.
pub fn serialize_record(record: &Record, schema: &Schema) -> String {
    let mut out = String::from("{");
    for (i, col) in schema.columns.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&Json::String(col.name.clone()).to_string());
        out.push_str(": ");
        match record.get(&col.name) {
            Some(Value::Number(v)) => out.push_str(&render_number(*v)),
            Some(Value::Category(s)) => out.push_str(&Json::String(s.clone()).to_string()),
            None => out.push_str("null"),
        }
    }
    out.push('}');
    out
}

/// A JSON array of serialized records.
pub fn serialize_records(records: &[Record], schema: &Schema) -> String {
    let body: Vec<String> = records.iter().map(|r| serialize_record(r, schema)).collect();
    format!("[{}]", body.join(", "))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRecords {
    pub records: Vec<Record>,
    /// Array elements that failed validation.
    pub rejected: usize,
}

fn first_json_array(text: &str) -> Option<Vec<Json>> {
    for (start, _) in text.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Json>();
        if let Some(Ok(Json::Array(items))) = stream.next() {
            return Some(items);
        }
    }
    None
}

fn strip_fences(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn coerce(spec: &ColumnSpec, value: &Json) -> Option<Value> {
    match spec.kind {
        ColumnKind::Numeric => {
            let v = match value {
                Json::Number(n) => n.as_f64()?,
                Json::String(s) => s.trim().parse::<f64>().ok()?,
                _ => return None,
            };
            v.is_finite().then_some(Value::Number(v))
        }
        ColumnKind::Categorical => {
            let text = match value {
                Json::String(s) => s.trim().to_string(),
                Json::Number(n) => n.to_string(),
                Json::Bool(b) => b.to_string(),
                _ => return None,
            };
            if let Some(i) = spec.category_index(&text) {
                return Some(Value::Category(spec.categories[i].clone()));
            }
            if let Ok(v) = text.parse::<f64>() {
                if let Some(c) = spec
                    .categories
                    .iter()
                    .find(|c| c.trim().parse::<f64>().ok() == Some(v))
                {
                    return Some(Value::Category(c.clone()));
                }
            }
            spec.categories
                .iter()
                .find(|c| c.eq_ignore_ascii_case(&text))
                .map(|c| Value::Category(c.clone()))
        }
    }
}

fn to_record(item: &Json, schema: &Schema) -> Option<Record> {
    let obj = item.as_object()?;
    let mut record = Record::new();
    for col in &schema.columns {
        let raw = obj.get(&col.name)?;
        record.values.insert(col.name.clone(), coerce(col, raw)?);
    }
    Some(record)
}

/// Extracts the first JSON array from free-form model output and validates each element.
///
/// Code fences and leading prose are ignored. When no strict JSON array exists, a
/// single-quote variant (Python-literal style) is tried before giving up.
pub fn parse_records(text: &str, schema: &Schema) -> Result<ParsedRecords, TableError> {
    let cleaned = strip_fences(text);
    let items = first_json_array(&cleaned)
        .or_else(|| first_json_array(&cleaned.replace('\'', "\"")))
        .ok_or(TableError::NoJsonArray)?;
    let mut records = Vec::with_capacity(items.len());
    let mut rejected = 0;
    for item in &items {
        match to_record(item, schema) {
            Some(r) => records.push(r),
            None => rejected += 1,
        }
    }
    Ok(ParsedRecords { records, rejected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn adult() -> Schema {
        Schema::new(
            vec![
                ColumnSpec::numeric("age"),
                ColumnSpec::categorical("workclass", ["Private", "Self-emp-not-inc"]),
                ColumnSpec::numeric("hours-per-week"),
            ],
            "",
            "workclass",
        )
        .unwrap()
    }

    fn adult_row() -> Record {
        Record::new()
            .with("age", Value::Number(53.0))
            .with("workclass", Value::Category("Self-emp-not-inc".into()))
            .with("hours-per-week", Value::Number(60.0))
    }

    #[test]
    fn serializes_in_schema_order() {
        assert_eq!(
            serialize_record(&adult_row(), &adult()),
            r#"{"age": 53.0, "workclass": "Self-emp-not-inc", "hours-per-week": 60.0}"#
        );
    }

    #[test]
    fn serializes_zero_with_decimal() {
        let s = Schema::new(vec![ColumnSpec::numeric("v")], "", "v").unwrap();
        let r = Record::new().with("v", Value::Number(0.0));
        assert_eq!(serialize_record(&r, &s), r#"{"v": 0.0}"#);
    }

    #[test]
    fn parses_fenced_output() {
        let text = format!("```json\n[{}]\n```", serialize_record(&adult_row(), &adult()));
        let parsed = parse_records(&text, &adult()).unwrap();
        assert_eq!(parsed.records, vec![adult_row()]);
        assert_eq!(parsed.rejected, 0);
    }

    #[test]
    fn drops_and_counts_bad_rows_after_prose() {
        let text = r#"Here you go: [{"age": 53, "workclass": "Private", "hours-per-week": "40"},
            {"age": 20, "workclass": "Astronaut", "hours-per-week": 40}]"#;
        let parsed = parse_records(text, &adult()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.rejected, 1);
        assert_eq!(parsed.records[0].get("hours-per-week"), Some(&Value::Number(40.0)));
    }

    #[test]
    fn refusal_is_a_parse_failure() {
        assert!(matches!(
            parse_records("Sorry, I cannot", &adult()),
            Err(TableError::NoJsonArray)
        ));
    }

    #[test]
    fn accepts_python_literal_style() {
        let text = "[{'age': 23.0, 'workclass': 'Private', 'hours-per-week': 40.0}]";
        let parsed = parse_records(text, &adult()).unwrap();
        assert_eq!(parsed.records.len(), 1);
    }

    #[test]
    fn all_rejected_is_not_a_parse_failure() {
        let parsed = parse_records(r#"[{"age": "x"}, 3]"#, &adult()).unwrap();
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.rejected, 2);
    }

    fn arb_record() -> impl Strategy<Value = Record> {
        (
            prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), -1e6..1e6f64],
            0usize..2,
            -1e-9..1e9f64,
        )
            .prop_map(|(age, wc, hours)| {
                Record::new()
                    .with("age", Value::Number(age))
                    .with(
                        "workclass",
                        Value::Category(["Private", "Self-emp-not-inc"][wc].into()),
                    )
                    .with("hours-per-week", Value::Number(hours))
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn serialize_parse_round_trip(record in arb_record()) {
            let schema = adult();
            let text = serialize_records(std::slice::from_ref(&record), &schema);
            let parsed = parse_records(&text, &schema).unwrap();
            prop_assert_eq!(parsed.rejected, 0);
            prop_assert_eq!(&parsed.records, &vec![record]);
        }
    }
}

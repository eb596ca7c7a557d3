//! Pair-list text form of a DAG: `[('age', 'workclass'), ('education', 'Income')]`.

use log::warn;

use super::{Dag, DagError};

/// Renders edges sorted by cause then effect (node order).
pub fn to_pairs_text(dag: &Dag) -> String {
    let pairs: Vec<String> = dag
        .named_edges()
        .iter()
        .map(|(a, b)| format!("({}, {})", quote(a), quote(b)))
        .collect();
    format!("[{}]", pairs.join(", "))
}

fn quote(name: &str) -> String {
    if name.contains('\'') {
        format!("\"{name}\"")
    } else {
        format!("'{name}'")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDag {
    pub dag: Dag,
    /// Pairs naming a node outside the schema.
    pub unknown: usize,
    /// Pairs dropped because an earlier pair already implied the opposite direction.
    pub cyclic: usize,
}

impl ParsedDag {
    pub fn warnings(&self) -> usize {
        self.unknown + self.cyclic
    }
}

struct Scanner {
    chars: Vec<char>,
    pos: usize,
}

impl Scanner {
    fn new(src: &str) -> Self {
        Self {
            chars: src.chars().collect(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn token(&mut self) -> Option<String> {
        self.skip_ws();
        let c = *self.chars.get(self.pos)?;
        if matches!(c, '\'' | '"' | '`' | '\u{2018}' | '\u{201c}') {
            let close = match c {
                '\u{2018}' => '\u{2019}',
                '\u{201c}' => '\u{201d}',
                other => other,
            };
            let start = self.pos + 1;
            let end = (start..self.chars.len()).find(|&i| self.chars[i] == close)?;
            self.pos = end + 1;
            let name: String = self.chars[start..end].iter().collect();
            Some(name.trim().to_string())
        } else {
            let start = self.pos;
            while self.pos < self.chars.len() && !matches!(self.chars[self.pos], ',' | ')' | '(') {
                self.pos += 1;
            }
            let name: String = self.chars[start..self.pos].iter().collect();
            let name = name.trim().to_string();
            (!name.is_empty()).then_some(name)
        }
    }

    fn expect(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.chars.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    /// Attempts `(a, b)` at the current position.
    fn pair(&mut self) -> Option<(String, String)> {
        if !self.expect('(') {
            return None;
        }
        let a = self.token()?;
        if !self.expect(',') {
            return None;
        }
        let b = self.token()?;
        if !self.expect(')') {
            return None;
        }
        Some((a, b))
    }
}

/// Every syntactically valid `(a, b)` pair in reading order.
pub fn scan_pairs(text: &str) -> Vec<(String, String)> {
    let mut scanner = Scanner::new(text);
    let mut out = Vec::new();
    while scanner.pos < scanner.chars.len() {
        if scanner.chars[scanner.pos] == '(' {
            let start = scanner.pos;
            match scanner.pair() {
                Some(p) => out.push(p),
                None => scanner.pos = start + 1,
            }
        } else {
            scanner.pos += 1;
        }
    }
    out
}

/// The first bracketed pair list (`[(...), ...]` or `[]`) in `text`.
pub fn pair_list_span(text: &str) -> Option<&str> {
    let mut from = 0;
    while let Some(off) = text[from..].find('[') {
        let start = from + off;
        let rest = text[start + 1..].trim_start();
        if rest.starts_with(']') {
            let end = start + text[start..].find(']')? + 1;
            return Some(&text[start..end]);
        }
        if rest.starts_with('(') {
            let end = match text[start..].find(")]") {
                Some(p) => start + p + 2,
                None => start + text[start..].find(']').map_or(text.len() - start, |e| e + 1),
            };
            return Some(&text[start..end]);
        }
        from = start + 1;
    }
    None
}

fn resolve(nodes: &[String], name: &str) -> Option<usize> {
    nodes
        .iter()
        .position(|n| n == name)
        .or_else(|| nodes.iter().position(|n| n.eq_ignore_ascii_case(name)))
}

fn is_empty_list(text: &str) -> bool {
    text.trim().is_empty() || text.split_whitespace().collect::<String>().contains("[]")
}

/// Parses pairs over `nodes`, dropping unknown names and cycle-closing pairs.
///
/// Earlier pairs win cycle conflicts. Text that is non-empty but contains no pair
/// and no empty list is an error.
pub fn parse_pairs_text<S: AsRef<str>>(text: &str, nodes: &[S]) -> Result<ParsedDag, DagError> {
    let nodes: Vec<String> = nodes.iter().map(|s| s.as_ref().to_string()).collect();
    let pairs = scan_pairs(text);
    if pairs.is_empty() && !is_empty_list(text) {
        return Err(DagError::NoPairs);
    }
    let mut dag = Dag::new(nodes.clone());
    let (mut unknown, mut cyclic) = (0, 0);
    for (a, b) in pairs {
        let (Some(i), Some(j)) = (resolve(&nodes, &a), resolve(&nodes, &b)) else {
            warn!("dropping pair ({a}, {b}): unknown column");
            unknown += 1;
            continue;
        };
        if dag.has_edge(i, j) {
            continue;
        }
        if dag.add_edge(i, j).is_err() {
            warn!("dropping pair ({a}, {b}): would create a cycle");
            cyclic += 1;
        }
    }
    Ok(ParsedDag { dag, unknown, cyclic })
}

//! Offline backends.
//!
//! [`MockWorld`] is a discrete Bayesian network with a ground-truth DAG. Its
//! generator answers by sampling from a network whose structure is whatever
//! causal graph the prompt carries, with CPTs taken from the true joint
//! distribution (or fitted to the prompt's examples when there are enough of
//! them). A prompt graph closer to the truth therefore yields data closer to
//! the real distribution. Its optimizer walks a fixed script of edge edits.

use std::path::Path;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatClient, ChatRequest, LlmError};
use crate::causal::{pair_list_span, parse_pairs_text, to_pairs_text, Dag, EdgeEdit};
use crate::generator::Condition;
use crate::table::{parse_records, serialize_records, ColumnSpec, Record, Schema, Value};

/// Phrase identifying a generator system prompt.
pub const GENERATOR_MARKER: &str = "You are a data generation model";
/// Phrase identifying an optimizer system prompt.
pub const OPTIMIZER_MARKER: &str = "Your task is to optimize prompts";

/// Examples needed in a prompt before the mock fits CPTs to them.
const EXAMPLE_FIT_THRESHOLD: usize = 20;
const MAX_JOINT_STATES: usize = 1 << 22;
const CONDITION_TRIES_PER_ROW: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockNode {
    pub name: String,
    pub categories: Vec<String>,
    #[serde(default)]
    pub parents: Vec<String>,
    /// One distribution per parent configuration; the first parent is the most
    /// significant digit.
    pub cpt: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockWorld {
    #[serde(default)]
    pub context: String,
    pub target: String,
    pub seed: u64,
    pub nodes: Vec<MockNode>,
    /// Edits the optimizer applies, one more per call.
    #[serde(default)]
    pub script: Vec<EdgeEdit>,
    #[serde(default)]
    pub script_position: usize,
}

fn config_index(cards: &[usize], states: &[usize]) -> usize {
    cards.iter().zip(states).fold(0, |acc, (c, s)| acc * c + s)
}

fn draw<R: Rng>(rng: &mut R, dist: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.len() - 1
}

fn between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = text.find(open)? + open.len();
    let end = text[start..].find(close).map_or(text.len(), |e| start + e);
    Some(&text[start..end])
}

/// The sample count from a "Generate N synthetic samples" instruction.
fn requested_count(text: &str) -> Option<usize> {
    text.match_indices("Generate ").find_map(|(i, m)| {
        let digits: String = text[i + m.len()..].chars().take_while(char::is_ascii_digit).collect();
        digits.parse().ok()
    })
}

/// Conditional CPTs for an arbitrary structure, indexed like [`MockNode::cpt`]
/// with parents in node order.
type Cpts = Vec<Vec<Vec<f64>>>;

impl MockWorld {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| LlmError::Mock(format!("{}: {e}", path.as_ref().display())))?;
        let world: MockWorld =
            serde_json::from_str(&text).map_err(|e| LlmError::Mock(format!("world spec: {e}")))?;
        world.validate()?;
        Ok(world)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |m: String| Err(LlmError::Mock(m));
        let mut states = 1usize;
        for node in &self.nodes {
            if node.categories.is_empty() {
                return bad(format!("node '{}' has no categories", node.name));
            }
            states = states.saturating_mul(node.categories.len());
            let mut rows = 1usize;
            for p in &node.parents {
                match self.node_index(p) {
                    Some(i) => rows *= self.nodes[i].categories.len(),
                    None => return bad(format!("node '{}' has unknown parent '{p}'", node.name)),
                }
            }
            if node.cpt.len() != rows {
                return bad(format!("node '{}' needs {rows} CPT rows, has {}", node.name, node.cpt.len()));
            }
            for row in &node.cpt {
                let sum: f64 = row.iter().sum();
                if row.len() != node.categories.len() || (sum - 1.0).abs() > 1e-9 || row.iter().any(|p| *p < 0.0) {
                    return bad(format!("node '{}' has an invalid CPT row {row:?}", node.name));
                }
            }
        }
        if states > MAX_JOINT_STATES {
            return bad(format!("joint state space {states} exceeds {MAX_JOINT_STATES}"));
        }
        if self.node_index(&self.target).is_none() {
            return bad(format!("target '{}' is not a node", self.target));
        }
        let mut dag = Dag::new(self.nodes.iter().map(|n| n.name.clone()));
        for node in &self.nodes {
            for p in &node.parents {
                dag.add_named_edge(p, &node.name)
                    .map_err(|e| LlmError::Mock(format!("ground truth: {e}")))?;
            }
        }
        Ok(())
    }

    fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    fn cards(&self) -> Vec<usize> {
        self.nodes.iter().map(|n| n.categories.len()).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.name.clone()).collect()
    }

    pub fn ground_truth(&self) -> Dag {
        let mut dag = Dag::new(self.names());
        for node in &self.nodes {
            for p in &node.parents {
                dag.add_named_edge(p, &node.name).expect("validated world");
            }
        }
        dag
    }

    pub fn schema(&self) -> Schema {
        let columns = self
            .nodes
            .iter()
            .map(|n| ColumnSpec::categorical(n.name.clone(), n.categories.clone()))
            .collect();
        Schema::new(columns, self.context.clone(), self.target.clone()).expect("validated world")
    }

    fn true_cpts(&self) -> Cpts {
        let truth = self.ground_truth();
        let cards = self.cards();
        let mut cpts = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            // Ground-truth CPT rows follow the declared parent order; re-index to node order.
            let parents = truth.parents(i);
            let declared: Vec<usize> = node.parents.iter().map(|p| self.node_index(p).unwrap()).collect();
            let pcards: Vec<usize> = parents.iter().map(|&p| cards[p]).collect();
            let n_rows: usize = pcards.iter().product();
            let mut table = Vec::with_capacity(n_rows);
            for row in 0..n_rows {
                let mut states = vec![0; parents.len()];
                let mut rem = row;
                for k in (0..parents.len()).rev() {
                    states[k] = rem % pcards[k];
                    rem /= pcards[k];
                }
                let declared_states: Vec<usize> = declared
                    .iter()
                    .map(|d| states[parents.iter().position(|p| p == d).unwrap()])
                    .collect();
                let declared_cards: Vec<usize> = declared.iter().map(|&d| cards[d]).collect();
                table.push(node.cpt[config_index(&declared_cards, &declared_states)].clone());
            }
            cpts.push(table);
        }
        cpts
    }

    /// Full joint distribution by enumeration, indexed in mixed radix over nodes.
    fn joint(&self) -> Vec<f64> {
        let cards = self.cards();
        let truth = self.ground_truth();
        let cpts = self.true_cpts();
        let total: usize = cards.iter().product();
        let mut joint = vec![0.0; total];
        let mut states = vec![0usize; cards.len()];
        for (idx, p) in joint.iter_mut().enumerate() {
            let mut rem = idx;
            for k in (0..cards.len()).rev() {
                states[k] = rem % cards[k];
                rem /= cards[k];
            }
            let mut prob = 1.0;
            for (i, cpt) in cpts.iter().enumerate() {
                let parents = truth.parents(i);
                let pc: Vec<usize> = parents.iter().map(|&q| cards[q]).collect();
                let ps: Vec<usize> = parents.iter().map(|&q| states[q]).collect();
                prob *= cpt[config_index(&pc, &ps)][states[i]];
                if prob == 0.0 {
                    break;
                }
            }
            *p = prob;
        }
        joint
    }

    /// `P(node | parents in dag)` under the true joint. Parent configurations
    /// with zero mass fall back to the node's marginal.
    fn structure_cpts(&self, dag: &Dag) -> Cpts {
        let cards = self.cards();
        let joint = self.joint();
        let mut cpts = Vec::with_capacity(cards.len());
        let mut states = vec![0usize; cards.len()];
        for i in 0..cards.len() {
            let parents = dag.parents(i);
            let pc: Vec<usize> = parents.iter().map(|&q| cards[q]).collect();
            let rows: usize = pc.iter().product();
            let mut mass = vec![vec![0.0; cards[i]]; rows];
            let mut marginal = vec![0.0; cards[i]];
            for (idx, &p) in joint.iter().enumerate() {
                let mut rem = idx;
                for k in (0..cards.len()).rev() {
                    states[k] = rem % cards[k];
                    rem /= cards[k];
                }
                let ps: Vec<usize> = parents.iter().map(|&q| states[q]).collect();
                mass[config_index(&pc, &ps)][states[i]] += p;
                marginal[states[i]] += p;
            }
            for row in &mut mass {
                let total: f64 = row.iter().sum();
                if total > 0.0 {
                    row.iter_mut().for_each(|v| *v /= total);
                } else {
                    row.clone_from(&marginal);
                }
            }
            cpts.push(mass);
        }
        cpts
    }

    /// Laplace-smoothed CPTs estimated from records under `dag`.
    fn fitted_cpts(&self, dag: &Dag, examples: &[Record]) -> Cpts {
        let cards = self.cards();
        let coded: Vec<Vec<usize>> = examples
            .iter()
            .map(|r| {
                self.nodes
                    .iter()
                    .map(|n| {
                        r.get(&n.name)
                            .and_then(Value::as_str)
                            .and_then(|s| n.categories.iter().position(|c| c == s))
                            .unwrap_or(0)
                    })
                    .collect()
            })
            .collect();
        (0..cards.len())
            .map(|i| {
                let parents = dag.parents(i);
                let pc: Vec<usize> = parents.iter().map(|&q| cards[q]).collect();
                let rows: usize = pc.iter().product();
                let mut counts = vec![vec![1.0; cards[i]]; rows];
                for row in &coded {
                    let ps: Vec<usize> = parents.iter().map(|&q| row[q]).collect();
                    counts[config_index(&pc, &ps)][row[i]] += 1.0;
                }
                for row in &mut counts {
                    let total: f64 = row.iter().sum();
                    row.iter_mut().for_each(|v| *v /= total);
                }
                counts
            })
            .collect()
    }

    fn sample_with<R: Rng>(&self, dag: &Dag, cpts: &Cpts, rng: &mut R) -> Record {
        let cards = self.cards();
        let mut states = vec![0usize; cards.len()];
        for i in dag.topological_order() {
            let parents = dag.parents(i);
            let pc: Vec<usize> = parents.iter().map(|&q| cards[q]).collect();
            let ps: Vec<usize> = parents.iter().map(|&q| states[q]).collect();
            states[i] = draw(rng, &cpts[i][config_index(&pc, &ps)]);
        }
        let mut record = Record::new();
        for (node, &s) in self.nodes.iter().zip(&states) {
            record
                .values
                .insert(node.name.clone(), Value::Category(node.categories[s].clone()));
        }
        record
    }

    /// Ancestral samples from the ground-truth network.
    pub fn sample_truth(&self, n: usize, seed: u64) -> Vec<Record> {
        let dag = self.ground_truth();
        let cpts = self.true_cpts();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample_with(&dag, &cpts, &mut rng)).collect()
    }

    /// Samples from the network with `dag`'s structure and CPTs implied by the truth.
    pub fn sample_structured(&self, dag: &Dag, n: usize, seed: u64) -> Vec<Record> {
        let cpts = self.structure_cpts(dag);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample_with(dag, &cpts, &mut rng)).collect()
    }

    /// Eight-node chest-clinic network with its standard probabilities. The
    /// optimizer script adds the eight true edges in order.
    pub fn asia(seed: u64) -> Self {
        let yn = || vec!["no".to_string(), "yes".to_string()];
        let node = |name: &str, parents: &[&str], cpt: Vec<Vec<f64>>| MockNode {
            name: name.into(),
            categories: yn(),
            parents: parents.iter().map(|p| p.to_string()).collect(),
            cpt,
        };
        let p = |yes: f64| vec![1.0 - yes, yes];
        let nodes = vec![
            node("asia", &[], vec![p(0.01)]),
            node("tub", &["asia"], vec![p(0.01), p(0.05)]),
            node("smoke", &[], vec![p(0.5)]),
            node("lung", &["smoke"], vec![p(0.01), p(0.1)]),
            node("bronc", &["smoke"], vec![p(0.3), p(0.6)]),
            node("either", &["tub", "lung"], vec![p(0.0), p(1.0), p(1.0), p(1.0)]),
            node("xray", &["either"], vec![p(0.05), p(0.98)]),
            node("dysp", &["bronc", "either"], vec![p(0.1), p(0.7), p(0.8), p(0.9)]),
        ];
        let add = |a: &str, b: &str| EdgeEdit::Add {
            from: a.into(),
            to: b.into(),
        };
        MockWorld {
            context: "Patients seen at a chest clinic: recent visit to Asia, smoking status, \
                      tuberculosis, lung cancer, bronchitis, chest X-ray result and dyspnea."
                .into(),
            target: "dysp".into(),
            seed,
            nodes,
            script: vec![
                add("bronc", "dysp"),
                add("smoke", "bronc"),
                add("either", "dysp"),
                add("either", "xray"),
                add("lung", "either"),
                add("tub", "either"),
                add("smoke", "lung"),
                add("asia", "tub"),
            ],
            script_position: 0,
        }
    }
}

fn request_seed(world_seed: u64, request: &ChatRequest) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(world_seed.to_le_bytes());
    hasher.update(request.system.as_bytes());
    hasher.update([0u8]);
    hasher.update(request.user.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Answers a generator prompt with exactly the requested number of records.
///
/// Deterministic in the world seed and the request text.
pub fn mock_generate(world: &MockWorld, request: &ChatRequest) -> Result<String, LlmError> {
    let schema = world.schema();
    let names = world.names();
    let instruction = between(&request.user, "<instruction>", "</instruction>").unwrap_or(&request.user);
    let count = requested_count(instruction)
        .ok_or_else(|| LlmError::Mock("no sample count in instruction".into()))?;
    let dag = between(&request.system, "<causal structure>", "</causal structure>")
        .and_then(|block| parse_pairs_text(pair_list_span(block).unwrap_or(block), &names).ok())
        .map(|p| p.dag)
        .unwrap_or_else(|| Dag::new(names.clone()));
    let examples = between(&request.user, "<example>", "</example>")
        .and_then(|block| parse_records(block, &schema).ok())
        .map(|p| p.records)
        .unwrap_or_default();
    let cpts = if examples.len() >= EXAMPLE_FIT_THRESHOLD {
        world.fitted_cpts(&dag, &examples)
    } else {
        world.structure_cpts(&dag)
    };
    let condition = between(instruction, "synthetic samples with ", ". Response should")
        .and_then(|text| Condition::parse(text.trim(), &schema));

    let mut rng = ChaCha8Rng::seed_from_u64(request_seed(world.seed, request));
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        let mut record = world.sample_with(&dag, &cpts, &mut rng);
        if let Some(cond) = &condition {
            for _ in 0..CONDITION_TRIES_PER_ROW {
                if cond.holds(&record) {
                    break;
                }
                record = world.sample_with(&dag, &cpts, &mut rng);
            }
        }
        rows.push(record);
    }
    Ok(format!("```json\n{}\n```", serialize_records(&rows, &schema)))
}

/// Parsed `<pair>` block: its graph and task text.
fn pair_blocks(user: &str, names: &[String]) -> Vec<(Dag, String)> {
    let mut out = Vec::new();
    let mut rest = user;
    while let Some(start) = rest.find("<pair>") {
        let body_start = start + "<pair>".len();
        let end = rest[body_start..].find("</pair>").map_or(rest.len(), |e| body_start + e);
        let body = &rest[body_start..end];
        rest = &rest[end.min(rest.len())..];
        if let Some(rest_after) = rest.strip_prefix("</pair>") {
            rest = rest_after;
        }
        let Some(list) = pair_list_span(body) else { continue };
        let Ok(parsed) = parse_pairs_text(list, names) else { continue };
        let mut task_lines = Vec::new();
        let mut after_graph = false;
        for line in body.lines() {
            let t = line.trim();
            if !after_graph {
                after_graph = t.starts_with('[');
                continue;
            }
            if t.is_empty() || t.starts_with("Set your aim") || t.starts_with("Score:") {
                continue;
            }
            task_lines.push(t);
        }
        out.push((parsed.dag, task_lines.join(" ")));
    }
    out
}

/// Applies the next scripted edit to the best (last-listed) candidate.
///
/// Call `k` replays edits `0..=k` on that graph, so edits already present are
/// no-ops. Once the script is exhausted the best candidate is echoed back.
pub fn mock_optimize(world: &mut MockWorld, request: &ChatRequest) -> Result<String, LlmError> {
    let names = world.names();
    let (mut dag, task) = pair_blocks(&request.user, &names)
        .pop()
        .ok_or_else(|| LlmError::Mock("optimizer prompt has no <pair> block".into()))?;
    if world.script_position < world.script.len() {
        for edit in &world.script[..=world.script_position] {
            if let Err(e) = dag.apply(edit) {
                log::debug!("mock optimizer skipped {edit:?}: {e}");
            }
        }
        world.script_position += 1;
    }
    Ok(format!(
        "<Causal structure> The optimized causal network, suggesting the influence of variable A \
         on variable B, includes the following relationships: {}</Causal structure>\n\n<Task> {} </Task>",
        to_pairs_text(&dag),
        task
    ))
}

/// A [`MockWorld`] behind the [`ChatClient`] interface. Generator prompts are
/// answered concurrently; optimizer prompts serialize on the script cursor.
pub struct MockBackend {
    world: Mutex<MockWorld>,
    snapshot: MockWorld,
}

impl MockBackend {
    pub fn new(world: MockWorld) -> Self {
        Self {
            snapshot: world.clone(),
            world: Mutex::new(world),
        }
    }

    pub fn script_position(&self) -> usize {
        self.world.lock().expect("mock world lock").script_position
    }

    pub fn world(&self) -> &MockWorld {
        &self.snapshot
    }
}

impl ChatClient for MockBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        if request.system.contains(GENERATOR_MARKER) {
            mock_generate(&self.snapshot, request)
        } else if request.system.contains(OPTIMIZER_MARKER) {
            mock_optimize(&mut self.world.lock().expect("mock world lock"), request)
        } else {
            Err(LlmError::Mock("unrecognized prompt".into()))
        }
    }
}

/// Wraps a closure as a client; handy for scripted failures in tests.
pub struct FnClient<F> {
    f: F,
}

impl<F> FnClient<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<F> ChatClient for FnClient<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (self.f)(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen_request(structure: &str, count: usize) -> ChatRequest {
        let system = format!(
            "{GENERATOR_MARKER}.\n<causal structure> graph: {structure}\n</causal structure>"
        );
        let user = format!(
            "<example> Here are examples from real data: \n[]\n</example>\n\n<instruction>\nGenerate {count} synthetic samples mimic the provided samples.\n</instruction>"
        );
        ChatRequest::new(system, user, 0.5).unwrap()
    }

    #[test]
    fn asia_world_is_valid() {
        let w = MockWorld::asia(1);
        w.validate().unwrap();
        assert_eq!(w.ground_truth().edge_count(), 8);
        let total: f64 = w.joint().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_cpt_is_rejected() {
        let mut w = MockWorld::asia(1);
        w.nodes[0].cpt[0] = vec![0.5, 0.6];
        assert!(w.validate().is_err());
    }

    #[test]
    fn returns_requested_count_deterministically() {
        let w = MockWorld::asia(3);
        let req = gen_request("[]", 4);
        let a = mock_generate(&w, &req).unwrap();
        assert_eq!(a, mock_generate(&w, &req).unwrap());
        let parsed = parse_records(&a, &w.schema()).unwrap();
        assert_eq!(parsed.records.len(), 4);
        assert_eq!(parsed.rejected, 0);
    }

    #[test]
    fn true_structure_reproduces_true_cpts() {
        let w = MockWorld::asia(3);
        let from_joint = w.structure_cpts(&w.ground_truth());
        for (a, b) in from_joint.iter().zip(w.true_cpts()) {
            for (ra, rb) in a.iter().zip(&b) {
                for (x, y) in ra.iter().zip(rb) {
                    assert!((x - y).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn empty_structure_gives_independent_marginals() {
        let w = MockWorld::asia(3);
        let cpts = w.structure_cpts(&Dag::new(w.names()));
        // P(smoke = yes) = 0.5, P(bronc = yes) = 0.5 * 0.6 + 0.5 * 0.3
        assert_eq!(cpts[2].len(), 1);
        assert!((cpts[2][0][1] - 0.5).abs() < 1e-12);
        assert!((cpts[4][0][1] - 0.45).abs() < 1e-12);
    }

    fn opt_request(pairs: &[&str]) -> ChatRequest {
        let blocks: Vec<String> = pairs
            .iter()
            .map(|p| format!("<pair>\nHere is the causal graph, where (A, B) means A causes B:\n{p}\nKeep it real.\nScore: 80.00%\n</pair>"))
            .collect();
        ChatRequest::new(OPTIMIZER_MARKER, blocks.join("\n\n"), 1.0).unwrap()
    }

    #[test]
    fn optimizer_walks_the_script() {
        let mut w = MockWorld::asia(0);
        w.script = vec![
            EdgeEdit::Add { from: "smoke".into(), to: "lung".into() },
            EdgeEdit::Add { from: "asia".into(), to: "tub".into() },
        ];
        let req = opt_request(&["[('bronc', 'dysp')]", "[('either', 'xray')]"]);
        let first = mock_optimize(&mut w, &req).unwrap();
        let g1 = parse_pairs_text(between(&first, "<Causal structure>", "</Causal structure>").unwrap(), &w.names()).unwrap();
        let mut expected = Dag::new(w.names());
        expected.add_named_edge("either", "xray").unwrap();
        expected.add_named_edge("smoke", "lung").unwrap();
        assert_eq!(g1.dag, expected);
        assert!(first.contains("<Task> Keep it real. </Task>"));

        let second = mock_optimize(&mut w, &req).unwrap();
        expected.add_named_edge("asia", "tub").unwrap();
        let g2 = parse_pairs_text(&second, &w.names()).unwrap();
        assert_eq!(g2.dag, expected);

        // Exhausted: the best candidate comes back unchanged.
        let third = mock_optimize(&mut w, &req).unwrap();
        let g3 = parse_pairs_text(&third, &w.names()).unwrap();
        assert_eq!(g3.dag.named_edges(), vec![("either".to_string(), "xray".to_string())]);
    }

    #[test]
    fn optimizer_needs_a_pair() {
        let mut w = MockWorld::asia(0);
        let req = ChatRequest::new(OPTIMIZER_MARKER, "nothing here", 1.0).unwrap();
        assert!(mock_optimize(&mut w, &req).is_err());
    }

    #[test]
    fn backend_dispatches_on_system_prompt() {
        let backend = MockBackend::new(MockWorld::asia(0));
        assert!(backend.complete(&gen_request("[]", 2)).is_ok());
        let other = ChatRequest::new("hello", "world", 0.0).unwrap();
        assert!(backend.complete(&other).is_err());
    }

    #[test]
    fn world_spec_round_trips_through_json() {
        let w = MockWorld::asia(9);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("world.json");
        std::fs::write(&path, serde_json::to_string_pretty(&w).unwrap()).unwrap();
        assert_eq!(MockWorld::load(&path).unwrap(), w);
    }
}

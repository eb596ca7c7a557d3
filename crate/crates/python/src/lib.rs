//! Python module `mallm_gan`.
//!
//! Tables cross the boundary as `Table` objects; structured results (run
//! history, reports, records) come back as JSON strings for `json.loads`.

use std::collections::BTreeMap;

use mallm_gan_core::causal::{self, parse_pairs_text, to_pairs_text, Dag, DEFAULT_MAX_ITERS, DEFAULT_MAX_PARENTS};
use mallm_gan_core::evaluation::{self, MleTask, Quantiles};
use mallm_gan_core::generator::{self as gen, DataGenProcess, GenConfig};
use mallm_gan_core::llm::{ChatClient, MockBackend, OpenAiClient, ProviderConfig};
use mallm_gan_core::table::{self, Encoder};
use mallm_gan_core::trainer::{self, Convergence, RunConfig, StructureInit};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(runtime_err)
}

/// A typed table with its schema.
#[pyclass(module = "mallm_gan", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Table {
    inner: table::Table,
}

#[pymethods]
impl Table {
    /// Loads a CSV, with a JSON schema sidecar or an inferred schema.
    #[staticmethod]
    #[pyo3(signature = (path, schema_path=None))]
    fn from_csv(path: &str, schema_path: Option<&str>) -> PyResult<Self> {
        let schema = schema_path.map(table::load_schema).transpose().map_err(value_err)?;
        let inner = table::load_csv(path, schema.as_ref()).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Parses records as JSON (a list of objects) against this table's schema.
    fn with_records_json(&self, text: &str) -> PyResult<Self> {
        let parsed = table::parse_records(text, &self.inner.schema).map_err(value_err)?;
        Ok(Self {
            inner: self.inner.with_rows(parsed.records),
        })
    }

    fn to_csv(&self, path: &str) -> PyResult<()> {
        table::write_csv(&self.inner, path).map_err(runtime_err)
    }

    fn records_json(&self) -> String {
        table::serialize_records(&self.inner.rows, &self.inner.schema)
    }

    fn schema_json(&self) -> PyResult<String> {
        to_json(&self.inner.schema)
    }

    #[getter]
    fn columns(&self) -> Vec<String> {
        self.inner.schema.names()
    }

    #[getter]
    fn target(&self) -> String {
        self.inner.schema.target.clone()
    }

    /// Random train/test split of `n_train` rows.
    #[pyo3(signature = (n_train, seed=0))]
    fn split(&self, n_train: usize, seed: u64) -> PyResult<(Table, Table)> {
        let (a, b) = table::split(&self.inner, n_train, seed).map_err(value_err)?;
        Ok((Table { inner: a }, Table { inner: b }))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Table({} rows, columns={:?})", self.inner.len(), self.inner.schema.names())
    }
}

/// Offline world: a discrete Bayesian network plus a scripted optimizer.
#[pyclass(module = "mallm_gan", skip_from_py_object)]
#[derive(Clone)]
pub struct MockWorld {
    inner: mallm_gan_core::llm::MockWorld,
}

#[pymethods]
impl MockWorld {
    #[staticmethod]
    #[pyo3(signature = (seed=0))]
    fn asia(seed: u64) -> Self {
        Self {
            inner: mallm_gan_core::llm::MockWorld::asia(seed),
        }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = mallm_gan_core::llm::MockWorld::load(path).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn sample_truth(&self, n: usize, seed: u64) -> PyResult<Table> {
        let inner = table::Table::new(self.inner.schema(), self.inner.sample_truth(n, seed)).map_err(runtime_err)?;
        Ok(Table { inner })
    }

    /// The ground-truth graph as a pair list.
    fn ground_truth(&self) -> String {
        to_pairs_text(&self.inner.ground_truth())
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.inner)
    }
}

fn read_dag(text: &str, names: &[String]) -> PyResult<Dag> {
    Ok(parse_pairs_text(text, names).map_err(value_err)?.dag)
}

/// Learns a structure by hill climbing on BIC; returns a pair list.
#[pyfunction]
fn hill_climb(table: &Table) -> String {
    to_pairs_text(&causal::hill_climb(&table.inner, DEFAULT_MAX_PARENTS, DEFAULT_MAX_ITERS, 0))
}

/// Graph edit distance between two pair lists over `columns`.
#[pyfunction]
fn ged(a: &str, b: &str, columns: Vec<String>) -> PyResult<usize> {
    causal::ged(&read_dag(a, &columns)?, &read_dag(b, &columns)?).map_err(value_err)
}

/// The generator prompt as (system, user) for an initial θ with the given structure.
#[pyfunction]
#[pyo3(signature = (table, structure, n, n_examples=5))]
fn generator_prompt(table: &Table, structure: &str, n: usize, n_examples: usize) -> PyResult<(String, String)> {
    let schema = &table.inner.schema;
    let theta = DataGenProcess::initial(schema, read_dag(structure, &schema.names())?);
    let k = n_examples.min(table.inner.len());
    let req = gen::render_generator_prompt(&theta, &table.inner.rows[..k], schema, n, None, &GenConfig::default())
        .map_err(value_err)?;
    Ok((req.system, req.user))
}

/// Result of a training run.
#[pyclass(module = "mallm_gan", frozen)]
pub struct RunResult {
    #[pyo3(get)]
    best_score: f64,
    #[pyo3(get)]
    epochs_ran: usize,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    synthetic: Table,
    #[pyo3(get)]
    theta_text: String,
    #[pyo3(get)]
    theta_json: String,
    #[pyo3(get)]
    history_json: String,
}

#[allow(clippy::too_many_arguments)]
fn run_config(
    epochs: usize,
    batch_size: usize,
    n_examples: usize,
    k: usize,
    seed: u64,
    init: &str,
    convergence: bool,
    names: &[String],
    reference: Option<&str>,
) -> PyResult<RunConfig> {
    let init = match init {
        "hill_climb" => StructureInit::HillClimb,
        "empty" => StructureInit::Empty,
        other => StructureInit::Given { dag: read_dag(other, names)? },
    };
    Ok(RunConfig {
        max_epochs: epochs,
        batch_size,
        gen: GenConfig {
            n_examples_per_call: n_examples,
            ..GenConfig::default()
        },
        k,
        seed,
        init,
        reference_dag: reference.map(|r| read_dag(r, names)).transpose()?,
        convergence: Convergence {
            enabled: convergence,
            ..Convergence::default()
        },
        ..RunConfig::default()
    })
}

fn finish(py: Python<'_>, train: &Table, config: &RunConfig, client: &dyn ChatClient) -> PyResult<RunResult> {
    let result = py
        .detach(|| trainer::run(&train.inner, config, client))
        .map_err(runtime_err)?;
    Ok(RunResult {
        best_score: result.best_score,
        epochs_ran: result.epochs_ran,
        converged: result.converged,
        synthetic: Table { inner: result.synthetic },
        theta_text: result.final_theta.to_string(),
        theta_json: to_json(&result.final_theta)?,
        history_json: to_json(&result.history)?,
    })
}

/// Trains against a mock world. `init` is "hill_climb", "empty" or a pair list.
#[pyfunction]
#[pyo3(signature = (train, world, epochs=6, batch_size=50, n_examples=5, k=3, seed=0, init="hill_climb", convergence=true, reference=None))]
#[allow(clippy::too_many_arguments)]
fn train_mock(
    py: Python<'_>,
    train: &Table,
    world: &MockWorld,
    epochs: usize,
    batch_size: usize,
    n_examples: usize,
    k: usize,
    seed: u64,
    init: &str,
    convergence: bool,
    reference: Option<&str>,
) -> PyResult<RunResult> {
    let names = train.inner.schema.names();
    let config = run_config(epochs, batch_size, n_examples, k, seed, init, convergence, &names, reference)?;
    let client = MockBackend::new(world.inner.clone());
    finish(py, train, &config, &client)
}

/// Trains against an OpenAI-compatible endpoint. The key comes from MALLMGAN_API_KEY.
#[pyfunction]
#[pyo3(signature = (train, base_url=None, model=None, epochs=10, batch_size=50, n_examples=5, k=3, seed=0, init="hill_climb"))]
#[allow(clippy::too_many_arguments)]
fn train_live(
    py: Python<'_>,
    train: &Table,
    base_url: Option<String>,
    model: Option<String>,
    epochs: usize,
    batch_size: usize,
    n_examples: usize,
    k: usize,
    seed: u64,
    init: &str,
) -> PyResult<RunResult> {
    let names = train.inner.schema.names();
    let config = run_config(epochs, batch_size, n_examples, k, seed, init, true, &names, None)?;
    let mut provider = ProviderConfig::default();
    if let Some(u) = base_url {
        provider.base_url = u;
    }
    if let Some(m) = model {
        provider.model = m;
    }
    let client = OpenAiClient::new(provider).map_err(runtime_err)?;
    finish(py, train, &config, &client)
}

/// Distance from each synthetic row to its closest reference row.
#[pyfunction]
fn dcr(synthetic: &Table, reference: &Table) -> PyResult<Vec<f64>> {
    let encoder = Encoder::fit(&reference.inner);
    evaluation::dcr(&synthetic.inner, &reference.inner, &encoder).map_err(value_err)
}

/// 25th, 50th and 75th percentiles.
#[pyfunction]
fn quantiles(values: Vec<f64>) -> (f64, f64, f64) {
    let q = Quantiles::of(&values);
    (q.q25, q.q50, q.q75)
}

/// Train on synthetic, test on real. Returns per-learner means and the mean of best.
#[pyfunction]
#[pyo3(signature = (synthetic, real_test, seeds=vec![0, 1, 2, 3, 4]))]
fn mle(synthetic: &Table, real_test: &Table, seeds: Vec<u64>) -> PyResult<(BTreeMap<String, f64>, f64)> {
    let task = MleTask::for_table(&synthetic.inner).map_err(value_err)?;
    let report = evaluation::mle(&synthetic.inner, &real_test.inner, task, &seeds).map_err(value_err)?;
    Ok((report.per_learner, report.mean_of_best))
}

#[pymodule]
fn mallm_gan(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Table>()?;
    m.add_class::<MockWorld>()?;
    m.add_class::<RunResult>()?;
    m.add_function(wrap_pyfunction!(hill_climb, m)?)?;
    m.add_function(wrap_pyfunction!(ged, m)?)?;
    m.add_function(wrap_pyfunction!(generator_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(train_mock, m)?)?;
    m.add_function(wrap_pyfunction!(train_live, m)?)?;
    m.add_function(wrap_pyfunction!(dcr, m)?)?;
    m.add_function(wrap_pyfunction!(quantiles, m)?)?;
    m.add_function(wrap_pyfunction!(mle, m)?)?;
    Ok(())
}

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mallm_gan_core::causal::{ged, hill_climb, to_pairs_text, DEFAULT_MAX_ITERS, DEFAULT_MAX_PARENTS};
use mallm_gan_core::evaluation::{dcr_report, mle, MleTask};
use mallm_gan_core::generator::DataGenProcess;
use mallm_gan_core::llm::MockWorld;
use mallm_gan_core::table::{load_csv, load_schema, write_csv, Encoder, Schema, Table};
use mallm_gan_core::trainer::{run_with_observer, sample, theta_digest, RunEvent, RunLogWriter, StructureInit};

use crate::config::{read_dag, CliConfig};
use crate::error::CliError;
use crate::{BackendArgs, DataArgs, EvaluateArgs, GenerateArgs, InitArgs, InitMethod, Metric, MockSampleArgs, TrainArgs};

fn load_table(data: &Path, schema: Option<&Path>) -> Result<Table, CliError> {
    let schema: Option<Schema> = schema.map(load_schema).transpose()?;
    Ok(load_csv(data, schema.as_ref())?)
}

fn required<'a>(value: Option<&'a PathBuf>, flag: &str) -> Result<&'a PathBuf, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing {flag}")))
}

fn save_csv(table: &Table, path: &Path) -> Result<(), CliError> {
    write_csv(table, path).map_err(|e| CliError::Runtime(e.to_string()))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(&path.display().to_string(), e))
}

/// File config, then flags on top.
fn resolve(backend: &BackendArgs, data: &DataArgs) -> Result<CliConfig, CliError> {
    let mut cfg = match &backend.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    if let Some(b) = backend.backend {
        cfg.backend = b;
    }
    if let Some(w) = &backend.world {
        cfg.world = Some(w.clone());
    }
    if let Some(u) = &backend.base_url {
        cfg.provider.base_url = u.clone();
    }
    if let Some(m) = &backend.model {
        cfg.provider.model = m.clone();
    }
    if let Some(n) = backend.n_examples {
        cfg.run.gen.n_examples_per_call = n;
    }
    if let Some(s) = backend.seed {
        cfg.run.seed = s;
    }
    if let Some(d) = &data.data {
        cfg.data = Some(d.clone());
    }
    if let Some(s) = &data.schema {
        cfg.schema = Some(s.clone());
    }
    Ok(cfg)
}

pub fn init_structure(args: &InitArgs) -> Result<(), CliError> {
    let data = required(args.data.data.as_ref(), "--data")?;
    let table = load_table(data, args.data.schema.as_deref())?;
    let dag = hill_climb(&table, DEFAULT_MAX_PARENTS, DEFAULT_MAX_ITERS, 0);
    write_text(&args.out, &format!("{}\n", to_pairs_text(&dag)))?;
    println!("{} edge(s) written to {}", dag.edge_count(), args.out.display());
    if let Some(path) = &args.reference_dag {
        let reference = read_dag(path, &table.schema.names())?;
        let d = ged(&dag, &reference).map_err(|e| CliError::Usage(e.to_string()))?;
        println!("ged to reference: {d}");
    }
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let mut cfg = resolve(&args.backend, &args.data)?;
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    if let Some(e) = args.epochs {
        cfg.run.max_epochs = e;
    }
    if let Some(b) = args.batch_size {
        cfg.run.batch_size = b;
    }
    if let Some(k) = args.k {
        cfg.run.k = k;
    }
    if let Some(n) = args.final_rows {
        cfg.run.final_rows = Some(n);
    }
    if args.no_convergence {
        cfg.run.convergence.enabled = false;
    }
    match args.init {
        Some(InitMethod::HillClimb) => cfg.run.init = StructureInit::HillClimb,
        Some(InitMethod::Empty) => cfg.run.init = StructureInit::Empty,
        None => {}
    }

    let data = required(cfg.data.as_ref(), "--data")?.clone();
    let out = required(cfg.out.as_ref(), "--out")?.clone();
    let train = load_table(&data, cfg.schema.as_deref())?;
    let names = train.schema.names();
    if let Some(p) = &args.init_dag {
        cfg.run.init = StructureInit::Given { dag: read_dag(p, &names)? };
    }
    if let Some(p) = &args.reference_dag {
        cfg.run.reference_dag = Some(read_dag(p, &names)?);
    }
    cfg.run.validate()?;
    let client = cfg.client()?;

    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out.display().to_string(), e))?;
    write_text(&out.join("config.toml"), &cfg.to_toml())?;
    let log_path = out.join("run_log.jsonl");
    let file = File::create(&log_path).map_err(|e| CliError::io(&log_path.display().to_string(), e))?;
    let mut log = RunLogWriter::new(BufWriter::new(file));
    let cli_echo = serde_json::to_value(&cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut log_error = None;
    let mut observer = |event: &RunEvent| {
        let written = match event {
            // The header also carries the command-level settings.
            RunEvent::Header { .. } => {
                let mut value = serde_json::to_value(event).expect("run events serialize");
                value["cli"] = cli_echo.clone();
                log.write_value(&value)
            }
            RunEvent::Iteration(it) => {
                eprintln!(
                    "epoch {} batch {}: score {:.4}{}",
                    it.epoch,
                    it.batch_index,
                    it.score,
                    it.ged_to_reference.map(|g| format!(", ged {g}")).unwrap_or_default()
                );
                log.write(event)
            }
            _ => log.write(event),
        };
        if let Err(e) = written {
            log_error.get_or_insert(e);
        }
    };
    let result = run_with_observer(&train, &cfg.run, &client, &mut observer)?;
    if let Some(e) = log_error {
        return Err(CliError::io("writing run log", e));
    }

    let synthetic = match &args.condition {
        Some(cond) => {
            let n = cfg.run.final_rows.unwrap_or(train.len());
            sample(&result.final_theta, &train, n, Some(cond), &client, &cfg.run)?
        }
        None => result.synthetic.clone(),
    };
    let theta_json = serde_json::to_string_pretty(&result.final_theta).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_text(&out.join("theta.json"), &theta_json)?;
    write_text(&out.join("theta.txt"), &result.final_theta.to_string())?;
    save_csv(&synthetic, &out.join("synthetic.csv"))?;

    println!(
        "best score {:.4} after {} epoch(s){}; theta {}; {} rows in {} ({:.1?})",
        result.best_score,
        result.epochs_ran,
        if result.converged { " (converged)" } else { "" },
        &theta_digest(&result.final_theta)[..12],
        synthetic.len(),
        out.display(),
        started.elapsed()
    );
    Ok(())
}

pub fn generate(args: &GenerateArgs) -> Result<(), CliError> {
    let cfg = resolve(&args.backend, &args.data)?;
    let data = required(cfg.data.as_ref(), "--data")?;
    let train = load_table(data, cfg.schema.as_deref())?;
    let text = std::fs::read_to_string(&args.theta)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.theta.display())))?;
    let theta: DataGenProcess = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: not a theta file: {e}", args.theta.display())))?;
    let client = cfg.client()?;
    let rows = sample(&theta, &train, args.n, args.condition.as_deref(), &client, &cfg.run)?;
    save_csv(&rows, &args.out)?;
    println!("{} rows written to {}", rows.len(), args.out.display());
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let schema = match &args.schema {
        Some(p) => load_schema(p)?,
        None => load_csv(&args.train, None)?.schema,
    };
    let train = load_csv(&args.train, Some(&schema))?;
    let synthetic = load_csv(&args.synthetic, Some(&schema))?;
    let test = load_csv(&args.test, Some(&schema))?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out.display().to_string(), e))?;
    let create = |name: &str| {
        let path = args.out.join(name);
        File::create(&path).map_err(|e| CliError::io(&path.display().to_string(), e))
    };
    match args.metric {
        Metric::Mle => {
            let task = MleTask::for_table(&train)?;
            let report = mle(&synthetic, &test, task, &args.seeds)?;
            report.write_csv(create("mle.csv")?)?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
            write_text(&args.out.join("mle.json"), &json)?;
            let metric = match task {
                MleTask::Classification => "F1",
                MleTask::Regression => "R2",
            };
            for (learner, score) in &report.per_learner {
                println!("{learner}: mean {metric} {score:.4}");
            }
            println!("mean of best {metric}: {:.4}", report.mean_of_best);
        }
        Metric::Dcr => {
            let encoder = Encoder::fit(&train);
            let report = dcr_report(&synthetic, &train, &test, &encoder)?;
            report.write_csv(create("dcr.csv")?)?;
            let summary = serde_json::json!({
                "train_quantiles": report.train_quantiles,
                "holdout_quantiles": report.holdout_quantiles,
            });
            write_text(&args.out.join("dcr_summary.json"), &summary.to_string())?;
            println!("dcr to train (q25, q50, q75): {}", report.train_quantiles.format());
            println!("dcr to holdout (q25, q50, q75): {}", report.holdout_quantiles.format());
        }
    }
    Ok(())
}

pub fn mock_sample(args: &MockSampleArgs) -> Result<(), CliError> {
    let world = MockWorld::load(&args.world).map_err(|e| CliError::Usage(e.to_string()))?;
    let table = Table::new(world.schema(), world.sample_truth(args.n, args.seed))?;
    save_csv(&table, &args.out)?;
    println!("{} rows written to {}", table.len(), args.out.display());
    Ok(())
}

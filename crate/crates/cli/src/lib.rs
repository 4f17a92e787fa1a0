//! `treebranch` command-line driver.

pub mod config;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;
use treebranch_core::branching::Brancher;
use treebranch_core::mdp::{read_buffer_file, write_buffer_file};
use treebranch_core::metrics::{aggregate, RunStatus};
use treebranch_core::milp::{generate, read_instance, write_instance};
use treebranch_learn::checkpoint::{self, Checkpoint};
use treebranch_learn::eval::{evaluate, NamedInstance};
use treebranch_learn::offline::{collect_demonstrations, pretrain, DemoBuffer};
use treebranch_learn::online::{finetune, FinetuneSetup};
use treebranch_learn::policy::registry;

use crate::config::RunConfig;
use crate::report::FORMAT_VERSION;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or configuration; exit code 1.
    #[error("{0}")]
    Usage(String),
    /// Anything that fails while running; exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "treebranch", version, about = "Branch-and-bound with learned branching policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat key = value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write random instances and a seed manifest.
    Generate {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Record demonstration trees with the mixed heuristic.
    Collect {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Offline actor-critic training on a demonstration buffer.
    Pretrain {
        #[arg(long)]
        buffer: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint instead of a fresh network.
        #[arg(long)]
        init: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// PPO and self-imitation finetuning on a fixed instance pool.
    Finetune {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        validation: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Plain tree PPO without self-imitation.
        #[arg(long)]
        no_sil: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Solve every (instance, seed) pair with one policy.
    Evaluate {
        /// random, fsb, pb, rpb, vhb or checkpoint:<path>
        #[arg(long)]
        policy: String,
        #[arg(long)]
        instances: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seeds; defaults to `eval_seeds` from the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Side-by-side table of evaluation reports.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn resolve(args: &ConfigArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    for pair in &args.overrides {
        cfg.apply_override(pair)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(runtime)? + "\n";
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Provenance file written by every command that produces artifacts.
fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig, extra: Value) -> Result<(), CliError> {
    let mut v = json!({
        "format_version": FORMAT_VERSION,
        "command": command,
        "config": cfg.entries(),
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut v, extra) {
        m.extend(e);
    }
    write_json(&dir.join("run.json"), &v)
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// All `*.milp` files of a directory, sorted by file name.
pub fn load_instances(dir: &Path) -> Result<Vec<NamedInstance>, CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "milp"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Runtime(format!("{}: no .milp instances", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            Ok(NamedInstance {
                name: p.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                instance: read_instance(&text).map_err(|e| CliError::io(p, e))?,
            })
        })
        .collect()
}

fn cmd_generate(count: usize, out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let spec = cfg.generator()?;
    create_dir(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed()?);
    let mut manifest = Vec::with_capacity(count);
    for i in 0..count {
        let seed: u64 = rng.gen();
        let name = format!("inst_{i:05}");
        let inst = generate(&spec.with_seed(seed)).map_err(runtime)?;
        let path = out.join(format!("{name}.milp"));
        fs::write(&path, write_instance(&inst)).map_err(|e| CliError::io(&path, e))?;
        manifest.push((name, seed));
    }
    write_csv(&out.join("manifest.csv"), &["name", "seed"], &manifest)?;
    write_manifest(out, "generate", cfg, json!({ "count": count, "manifest": "manifest.csv" }))
}

fn cmd_collect(out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    create_dir(out)?;
    let buffer = collect_demonstrations(
        &cfg.generator()?,
        cfg.count("transitions")?,
        &cfg.solve_options()?,
        &cfg.brancher()?,
        cfg.seed()?,
    )
    .map_err(runtime)?;
    let path = out.join("buffer.bin");
    write_buffer_file(&path, &buffer.trees).map_err(|e| CliError::io(&path, e))?;
    write_manifest(
        out,
        "collect",
        cfg,
        json!({ "buffer": "buffer.bin", "trees": buffer.trees.len(), "transitions": buffer.len() }),
    )
}

fn load_checkpoint(path: &Path, cfg: &RunConfig) -> Result<Checkpoint, CliError> {
    checkpoint::load_file(path, Some(&cfg.train()?.layer_sizes())).map_err(|e| CliError::io(path, e))
}

fn cmd_pretrain(buffer: &Path, out: &Path, init: Option<&Path>, cfg: &RunConfig) -> Result<(), CliError> {
    let trees = read_buffer_file(buffer).map_err(|e| CliError::io(buffer, e))?;
    let demo = DemoBuffer::new(trees).map_err(|e| CliError::io(buffer, e))?;
    let init = init.map(|p| load_checkpoint(p, cfg)).transpose()?;
    create_dir(out)?;
    let (ck, logs) =
        pretrain(&demo, cfg.count("epochs")?, &cfg.train()?, cfg.seed()?, init, cfg.to_text()).map_err(runtime)?;
    let path = out.join("offline.ckpt");
    checkpoint::save_file(&path, &ck).map_err(|e| CliError::io(&path, e))?;
    let rows: Vec<_> = logs
        .iter()
        .map(|l| (l.epoch, l.critic_loss, l.actor_loss, l.bc_loss, l.mean_abs_q))
        .collect();
    write_csv(
        &out.join("pretrain.csv"),
        &["epoch", "critic_loss", "actor_loss", "bc_loss", "mean_abs_q"],
        &rows,
    )?;
    write_manifest(
        out,
        "pretrain",
        cfg,
        json!({ "checkpoint": "offline.ckpt", "curve": "pretrain.csv", "transitions": demo.len() }),
    )
}

fn cmd_finetune(
    ck_path: &Path,
    pool_dir: &Path,
    val_dir: &Path,
    out: &Path,
    no_sil: bool,
    cfg: &RunConfig,
) -> Result<(), CliError> {
    let ck = load_checkpoint(ck_path, cfg)?;
    let pool: Vec<_> = load_instances(pool_dir)?.into_iter().map(|n| n.instance).collect();
    let val = load_instances(val_dir)?;
    create_dir(out)?;
    let val_seeds = cfg.val_seeds()?;
    let opts = cfg.solve_options()?;
    let setup = FinetuneSetup {
        pool: &pool,
        validation: &val,
        val_seeds: &val_seeds,
        iterations: cfg.count("iterations")?,
        solve_opts: &opts,
        use_sil: !no_sil,
        seed: cfg.seed()?,
    };
    let (mut best, logs) = finetune(ck, &setup, &cfg.train()?).map_err(runtime)?;
    best.meta = cfg.to_text();
    let path = out.join("finetuned.ckpt");
    checkpoint::save_file(&path, &best).map_err(|e| CliError::io(&path, e))?;
    let rows: Vec<_> = logs
        .iter()
        .map(|l| (l.iteration, l.mean_return, l.ppo_loss, l.value_loss, l.sil_actor_loss, l.val_geomean_nodes))
        .collect();
    write_csv(
        &out.join("finetune.csv"),
        &["iteration", "mean_return", "ppo_loss", "value_loss", "sil_actor_loss", "val_geomean_nodes"],
        &rows,
    )?;
    write_manifest(
        out,
        "finetune",
        cfg,
        json!({
            "checkpoint": "finetuned.ckpt",
            "curve": "finetune.csv",
            "sil": !no_sil,
            "pool_size": pool.len(),
            "validation_size": val.len(),
            "val_seeds": val_seeds,
        }),
    )
}

fn cmd_evaluate(policy: &str, inst_dir: &Path, out: &Path, seeds: Option<Vec<u64>>, cfg: &RunConfig) -> Result<(), CliError> {
    let reg = Arc::new(registry());
    let bcfg = cfg.brancher()?;
    reg.create(policy, &bcfg).map_err(|e| CliError::Usage(e.to_string()))?;
    let seeds = match seeds {
        Some(s) if !s.is_empty() => s,
        Some(_) => return Err(CliError::Usage("--seeds is empty".into())),
        None => cfg.eval_seeds()?,
    };
    let instances = load_instances(inst_dir)?;
    create_dir(out)?;
    let make = || -> Result<Box<dyn Brancher + Send>, String> { reg.create(policy, &bcfg).map_err(|e| e.to_string()) };
    let rows = evaluate(policy, make, &instances, &seeds, &cfg.solve_options()?);
    let failures = rows.iter().filter(|r| r.status == RunStatus::Failed).count();
    if failures > 0 {
        eprintln!("warning: {failures} run(s) failed and are excluded from the aggregates");
    }
    report::write_rows(&out.join("eval.csv"), &rows)?;
    write_json(&out.join("eval.json"), &report::report_json(policy, "eval.csv", &seeds, &rows, cfg))?;
    let a = aggregate(&rows);
    println!(
        "{policy}: geomean nodes {:.4}, geomean time {:.4}s, rel std {:.4}, {} runs, {} failures",
        a.geomean_nodes, a.geomean_time, a.per_instance_rel_std, a.runs, a.failures
    );
    Ok(())
}

fn cmd_compare(reports: &[PathBuf], csv_out: Option<&Path>) -> Result<(), CliError> {
    let summaries = reports.iter().map(|p| report::load_summary(p)).collect::<Result<Vec<_>, _>>()?;
    print!("{}", report::render_table(&summaries));
    if let Some(p) = csv_out {
        report::write_table_csv(p, &summaries)?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { count, out, cfg } => cmd_generate(count, &out, &resolve(&cfg)?),
        Command::Collect { out, cfg } => cmd_collect(&out, &resolve(&cfg)?),
        Command::Pretrain { buffer, out, init, cfg } => cmd_pretrain(&buffer, &out, init.as_deref(), &resolve(&cfg)?),
        Command::Finetune {
            checkpoint,
            pool,
            validation,
            out,
            no_sil,
            cfg,
        } => cmd_finetune(&checkpoint, &pool, &validation, &out, no_sil, &resolve(&cfg)?),
        Command::Evaluate {
            policy,
            instances,
            out,
            seeds,
            cfg,
        } => cmd_evaluate(&policy, &instances, &out, seeds, &resolve(&cfg)?),
        Command::Compare { reports, csv } => cmd_compare(&reports, csv.as_deref()),
    }
}

/// Parses `args` (program name first) and runs the command. Returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use samgc::config::RunConfig;
use samgc::data::format_metrics_csv;
use samgc::gradcheck::layer_suite;
use samgc::layer::Variant;
use samgc::run;
use samgc::SamgcError;

/// Gradients must agree with finite differences to this relative error.
const GRADCHECK_TOLERANCE: f64 = 1e-3;

#[derive(Parser)]
#[command(name = "samgc", version, about = "Structure-aware multi-hop graph convolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the node classifier; writes metrics.csv and model.ckpt to --out.
    TrainNode(Common),
    /// Evaluate a node-classifier checkpoint on its validation and test sets.
    EvalNode(Common),
    /// Train the point-cloud classifier on synthetic shapes.
    TrainPc(Common),
    /// Evaluate a point-cloud checkpoint on the synthetic test set.
    EvalPc(Common),
    /// Train every layer variant over several seeds and print a comparison.
    Ablation {
        #[command(flatten)]
        common: Common,
        /// Seeds per variant.
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
    /// Run the finite-difference gradient suite.
    Gradcheck(Common),
    /// Write per-edge structural features of the first layer as CSV.
    DumpFeatures(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Node dataset: cora or synthetic.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    data_dir: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hops: Option<usize>,
    #[arg(long, value_parser = ["graphsage", "sagc", "nwa_sagc", "samgc"])]
    variant: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Model file to read (eval, dump) or write (train).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Override any configuration key, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    /// Defaults, then the config file, then `--set`, then dedicated flags.
    /// `epochs_key` names the key `--epochs` controls.
    fn resolve(&self, epochs_key: &str) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        self.apply(&mut cfg, epochs_key)?;
        Ok(cfg)
    }

    fn apply(&self, cfg: &mut RunConfig, epochs_key: &str) -> Result<()> {
        for kv in &self.overrides {
            let Some((k, v)) = kv.split_once('=') else {
                bail!(SamgcError::Config(format!("--set expects KEY=VALUE, got {kv:?}")));
            };
            cfg.set(k.trim(), v.trim())?;
        }
        let flags = [
            ("dataset", self.dataset.clone()),
            ("data_dir", self.data_dir.clone()),
            ("seed", self.seed.map(|s| s.to_string())),
            (epochs_key, self.epochs.map(|e| e.to_string())),
            ("hops", self.hops.map(|h| h.to_string())),
            ("variant", self.variant.clone()),
            ("out", self.out.clone()),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        Ok(())
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.out);
    fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    Ok(dir)
}

fn io_error(path: &Path, source: std::io::Error) -> anyhow::Error {
    anyhow::Error::new(source).context(format!("i/o error on {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_error(path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn require_checkpoint(common: &Common) -> Result<&Path> {
    match &common.checkpoint {
        Some(p) => Ok(p),
        None => bail!(SamgcError::Config("--checkpoint is required".into())),
    }
}

fn print_metrics(label: &str, m: &samgc::models::Metrics) {
    println!("{label} oa={:.4} macc={:.4} loss={:.4}", m.oa, m.macc, m.loss);
}

fn train_node(common: &Common) -> Result<()> {
    let cfg = common.resolve("epochs")?;
    let data = run::load_node_dataset(&cfg)?;
    let dir = out_dir(&cfg)?;
    let result = run::run_node(&cfg, &data)?;
    for r in &result.report.history {
        println!(
            "epoch {} train_loss={:.4} train_oa={:.4} val_oa={:.4} test_oa={:.4}",
            r.epoch, r.train.loss, r.train.oa, r.val.oa, r.test.oa
        );
    }
    println!("best_epoch={}", result.report.best_epoch);
    print_metrics("val", &result.report.val);
    print_metrics("test", &result.report.test);
    write(&dir.join("metrics.csv"), &format_metrics_csv(&result.rows, cfg.precision))?;
    let ckpt = common.checkpoint.clone().unwrap_or_else(|| dir.join("model.ckpt"));
    run::save_checkpoint(&result.model.store, &cfg, &ckpt)?;
    println!("wrote {}", ckpt.display());
    Ok(())
}

fn eval_node(common: &Common) -> Result<()> {
    let path = require_checkpoint(common)?;
    let ckpt = samgc::data::Checkpoint::load(path)?;
    let mut cfg = RunConfig::from_text(&ckpt.config)?;
    common.apply(&mut cfg, "epochs")?;
    let data = run::load_node_dataset(&cfg)?;
    let (model, _) = run::load_node_model(path, &data)?;
    let (val, test) = run::evaluate_node(&model, &cfg, &data)?;
    print_metrics("val", &val);
    print_metrics("test", &test);
    Ok(())
}

fn train_pc(common: &Common) -> Result<()> {
    let cfg = common.resolve("pc_epochs")?;
    let dir = out_dir(&cfg)?;
    let result = run::run_cloud(&cfg, |e| {
        let test = e.test.as_ref().map_or(f64::NAN, |m| m.oa);
        println!(
            "epoch {} train_loss={:.4} train_oa={:.4} test_oa={:.4}",
            e.epoch, e.train.loss, e.train.oa, test
        );
    })?;
    print_metrics("test", &result.report.test);
    write(&dir.join("pc_metrics.csv"), &format_metrics_csv(&result.rows, cfg.precision))?;
    let ckpt = common.checkpoint.clone().unwrap_or_else(|| dir.join("pc_model.ckpt"));
    run::save_checkpoint(&result.model.store, &cfg, &ckpt)?;
    println!("wrote {}", ckpt.display());
    Ok(())
}

fn eval_pc(common: &Common) -> Result<()> {
    let path = require_checkpoint(common)?;
    let (model, mut cfg) = run::load_cloud_model(path)?;
    common.apply(&mut cfg, "pc_epochs")?;
    print_metrics("test", &run::evaluate_cloud_model(&model, &cfg)?);
    Ok(())
}

fn ablation(common: &Common, seeds: usize) -> Result<()> {
    let cfg = common.resolve("epochs")?;
    let data = run::load_node_dataset(&cfg)?;
    let dir = out_dir(&cfg)?;
    let mut csv = String::from("variant,seed,best_epoch,val_oa,test_oa\n");
    let rows = run::run_ablation(&cfg, &data, seeds, |variant: Variant, seed, report| {
        println!(
            "{variant} seed={seed} best_epoch={} test_oa={:.4}",
            report.best_epoch, report.test.oa
        );
        csv.push_str(&format!(
            "{variant},{seed},{},{:.p$},{:.p$}\n",
            report.best_epoch,
            report.val.oa,
            report.test.oa,
            p = cfg.precision
        ));
    })?;
    print!("{}", run::format_ablation(&rows, 4));
    write(&dir.join("ablation.csv"), &csv)?;
    Ok(())
}

fn gradcheck(common: &Common) -> Result<()> {
    let cfg = common.resolve("epochs")?;
    let mut worst: f64 = 0.0;
    for case in layer_suite(cfg.seed)? {
        let r = &case.report;
        println!(
            "{} checked={} kinks={} max_rel_error={:.3e}",
            case.name, r.checked, r.kinks, r.max_rel_error
        );
        worst = worst.max(r.max_rel_error);
    }
    println!("max_rel_error={worst:.3e}");
    if worst >= GRADCHECK_TOLERANCE {
        bail!(SamgcError::Contract(format!(
            "max relative error {worst:.3e} is not below {GRADCHECK_TOLERANCE:e}"
        )));
    }
    Ok(())
}

fn dump_features(common: &Common) -> Result<()> {
    let (model, cfg, data) = match &common.checkpoint {
        Some(path) => {
            let ckpt = samgc::data::Checkpoint::load(path)?;
            let mut cfg = RunConfig::from_text(&ckpt.config)?;
            common.apply(&mut cfg, "epochs")?;
            let data = run::load_node_dataset(&cfg)?;
            let (model, _) = run::load_node_model(path, &data)?;
            (model, cfg, data)
        }
        None => {
            let cfg = common.resolve("epochs")?;
            let data = run::load_node_dataset(&cfg)?;
            (run::new_node_model(&cfg, &data)?, cfg, data)
        }
    };
    let rows = run::dump_edge_features(&model, &data)?;
    let dir = out_dir(&cfg)?;
    write(&dir.join("edge_features.csv"), &run::format_edge_features(&rows, cfg.precision))
}

/// `error kind=<kind>: <message>` on a single line.
fn error_line(err: &anyhow::Error) -> String {
    let kind = err
        .chain()
        .find_map(|e| {
            e.downcast_ref::<SamgcError>()
                .map(SamgcError::kind)
                .or_else(|| e.downcast_ref::<std::io::Error>().map(|_| "io"))
        })
        .unwrap_or("other");
    let message = format!("{err:#}").replace(['\n', '\r'], " ");
    format!("error kind={kind}: {message}")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::TrainNode(c) => train_node(c),
        Command::EvalNode(c) => eval_node(c),
        Command::TrainPc(c) => train_pc(c),
        Command::EvalPc(c) => eval_pc(c),
        Command::Ablation { common, seeds } => ablation(common, *seeds),
        Command::Gradcheck(c) => gradcheck(c),
        Command::DumpFeatures(c) => dump_features(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}

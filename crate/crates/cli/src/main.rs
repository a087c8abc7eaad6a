use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use tbr::experiments::{run_recipe, ExperimentSpec, Recipe};
use tbr::identifiability::run_property_battery;
use tbr::io::{load_checkpoint, load_dataset, save_checkpoint, save_dataset, save_truth, CheckpointMeta};
use tbr::metrics::{evaluate, write_rows, RunLabel};
use tbr::simulator::simulate;
use tbr::trainer::{paper_grid, sweep, train};
use tbr::{EnvTree, ModelKind, MultiEnvDataset, SimConfig, TrainConfig, TrainReport};

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "tbr", version, about = "Tree-based regularization for multi-environment representation learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    common: Common,
    /// Start from the paper-scale preset instead of the desk preset.
    #[arg(long)]
    paper: bool,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long = "s")]
    s_sparsity: Option<usize>,
    #[arg(long)]
    pi: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    d_x: Option<usize>,
    #[arg(long)]
    n_per_env: Option<usize>,
    #[arg(long)]
    leaves_only: bool,
    #[arg(long)]
    linear: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    model: Option<ModelKind>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    k_hat: Option<usize>,
    #[arg(long)]
    run_id: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Trials of the brute-force matching comparison.
    #[arg(long, default_value_t = 200)]
    lemma_trials: usize,
}

#[derive(Args)]
struct RecipeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(value_parser = parse_recipe)]
    recipe: Recipe,
    /// Number of seeds, starting at `--seed` (default 0).
    #[arg(long)]
    seeds: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a tree, ground truth and dataset.
    Simulate(SimArgs),
    /// Train one model on a dataset file.
    Train(TrainArgs),
    /// Re-evaluate a checkpoint on a dataset file.
    Eval(EvalArgs),
    /// Grid search λ × learning rate by validation MSE.
    Sweep(TrainArgs),
    /// Run the identifiability property battery.
    CheckTheory(CheckArgs),
    /// Run an experiment recipe.
    Recipe(RecipeArgs),
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: tbr::TbrError| e.to_string())
}

fn parse_recipe(s: &str) -> Result<Recipe, String> {
    s.parse().map_err(|e: tbr::TbrError| e.to_string())
}

fn load_config<T: DeserializeOwned>(path: &Option<PathBuf>, default: T) -> CliResult<T> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            Ok(serde_json::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?)
        }
        None => Ok(default),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn label_for(data: &MultiEnvDataset, run_id: String, seed: u64) -> RunLabel {
    RunLabel {
        run_id,
        seed,
        s: data.config.sparsity_label(),
    }
}

fn cmd_simulate(a: SimArgs) -> CliResult<ExitCode> {
    let preset = if a.paper { SimConfig::paper() } else { SimConfig::desk() };
    let mut cfg = load_config(&a.common.config, preset)?;
    if let Some(v) = a.depth {
        cfg.depth = v;
    }
    if let Some(v) = a.s_sparsity {
        cfg.s_sparsity = v;
    }
    if let Some(v) = a.pi {
        cfg.bernoulli_pi = Some(v);
    }
    if let Some(v) = a.k {
        cfg.k = v;
    }
    if let Some(v) = a.d_x {
        cfg.d_x = v;
    }
    if let Some(v) = a.n_per_env {
        cfg.n_per_env = v;
    }
    if let Some(v) = a.common.seed {
        cfg.seed = v;
    }
    cfg.observe_leaves_only |= a.leaves_only;
    cfg.linear_psi |= a.linear;
    let (tree, truth, data) = simulate(&cfg)?;
    std::fs::create_dir_all(&a.common.out)?;
    save_dataset(&a.common.out.join("dataset.bin"), &tree, &data)?;
    save_truth(&a.common.out.join("truth.json"), &truth)?;
    std::fs::write(a.common.out.join("tree.tsv"), tree.to_edge_list_string())?;
    println!(
        "{} samples, {} environments, {} arcs -> {}",
        data.len(),
        data.observed.len(),
        tree.num_arcs(),
        a.common.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn train_config(a: &TrainArgs) -> CliResult<TrainConfig> {
    let mut cfg = load_config(&a.common.config, TrainConfig::default())?;
    if let Some(v) = a.model {
        cfg.kind = v;
    }
    if let Some(v) = a.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = a.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.k_hat {
        cfg.k_hat = Some(v);
    }
    if let Some(v) = a.common.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes checkpoint, report JSON and a one-row metrics CSV.
fn finish_training(out: &Path, tree: &EnvTree, data: &MultiEnvDataset, report: &TrainReport, run_id: String) -> CliResult<()> {
    std::fs::create_dir_all(out)?;
    let cfg = &report.config;
    let meta = CheckpointMeta {
        lambda: cfg.lambda,
        seed: cfg.seed,
        run_id: run_id.clone(),
    };
    save_checkpoint(&out.join("checkpoint.bin"), &report.params, tree, &meta)?;
    write_json(&out.join("report.json"), report)?;
    let eval = evaluate(&report.params, tree, data, &label_for(data, run_id, cfg.seed))?;
    write_rows(std::fs::File::create(out.join("metrics.csv"))?, std::slice::from_ref(&eval.row))?;
    println!(
        "{} epoch {} val_mse {:.6} test_mse {:.6} mcc {:.4}",
        cfg.kind,
        report.selected_epoch,
        report.best_val_mse(),
        eval.row.test_mse,
        eval.row.mcc
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> CliResult<ExitCode> {
    let cfg = train_config(&a)?;
    let (tree, data) = load_dataset(&a.dataset)?;
    let report = train(&data, &tree, &cfg)?;
    let run_id = a.run_id.clone().unwrap_or_else(|| format!("{}-seed{}", cfg.kind, cfg.seed));
    finish_training(&a.common.out, &tree, &data, &report, run_id)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(a: TrainArgs) -> CliResult<ExitCode> {
    let base = train_config(&a)?;
    let (tree, data) = load_dataset(&a.dataset)?;
    let result = sweep(&data, &tree, &paper_grid(&base))?;
    for e in &result.table {
        match (e.val_mse, &e.error) {
            (Some(v), _) => println!("lambda {:<8} lr {:<8} val_mse {v:.6}", e.config.lambda, e.config.learning_rate),
            (None, Some(err)) => println!("lambda {:<8} lr {:<8} failed: {err}", e.config.lambda, e.config.learning_rate),
            (None, None) => {}
        }
    }
    std::fs::create_dir_all(&a.common.out)?;
    write_json(&a.common.out.join("sweep.json"), &result.table)?;
    let best = &result.best;
    let run_id = a.run_id.clone().unwrap_or_else(|| format!("{}-sweep-seed{}", best.config.kind, best.config.seed));
    finish_training(&a.common.out, &tree, &data, best, run_id)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(a: EvalArgs) -> CliResult<ExitCode> {
    let (tree, data) = load_dataset(&a.dataset)?;
    let (params, header) = load_checkpoint(&a.checkpoint, &tree)?;
    let seed = a.common.seed.unwrap_or(header.seed);
    let eval = evaluate(&params, &tree, &data, &label_for(&data, header.run_id, seed))?;
    std::fs::create_dir_all(&a.common.out)?;
    write_rows(std::fs::File::create(a.common.out.join("eval.csv"))?, std::slice::from_ref(&eval.row))?;
    write_rows(std::io::stdout().lock(), std::slice::from_ref(&eval.row))?;
    Ok(ExitCode::SUCCESS)
}

#[derive(serde::Deserialize, Default)]
#[serde(default)]
struct TheoryConfig {
    trials: Option<usize>,
    lemma_trials: Option<usize>,
}

fn cmd_check_theory(a: CheckArgs) -> CliResult<ExitCode> {
    let file: TheoryConfig = load_config(&a.common.config, TheoryConfig::default())?;
    let trials = file.trials.unwrap_or(a.trials);
    let lemma_trials = file.lemma_trials.unwrap_or(a.lemma_trials);
    let report = run_property_battery(trials, lemma_trials, a.common.seed.unwrap_or(0))?;
    std::fs::create_dir_all(&a.common.out)?;
    write_json(&a.common.out.join("theory_report.json"), &report)?;
    let violations = report.violations();
    println!("{trials} trials, {lemma_trials} matching trials, {violations} violations");
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_recipe(a: RecipeArgs) -> CliResult<ExitCode> {
    let mut spec = load_config(&a.common.config, ExperimentSpec::desk(a.recipe))?;
    spec.recipe = a.recipe;
    if a.seeds.is_some() || a.common.seed.is_some() {
        let start = a.common.seed.unwrap_or(0);
        let n = a.seeds.unwrap_or(spec.seeds.len() as u64);
        spec.seeds = (start..start + n).collect();
    }
    spec.out_dir = Some(a.common.out.clone());
    let out = run_recipe(&spec)?;
    for g in &out.groups {
        println!(
            "{:<36} {:<8} n={} mcc {:.3}±{:.3} test_mse {:.4}±{:.4} ate {:.4}±{:.4}",
            g.setting, g.model, g.n, g.mcc_mean, g.mcc_std, g.test_mse_mean, g.test_mse_std, g.ate_mse_mean, g.ate_mse_std
        );
    }
    for f in &out.failures {
        println!("FAILED CELL {} {}: {}", f.run_id, f.model, f.error);
    }
    for c in &out.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.criterion, c.detail);
    }
    Ok(if out.succeeded() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::CheckTheory(a) => cmd_check_theory(a),
        Command::Recipe(a) => cmd_recipe(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

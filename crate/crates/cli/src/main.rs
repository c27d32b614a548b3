use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use csdnn_core::experiment::{
    cmd_audit, cmd_beta_sweep, cmd_gen_costs, cmd_make_imbalanced, cmd_run, AuditConfig, ExperimentConfig,
    ExperimentError, OUTPUT_DIR_ENV,
};
use csdnn_core::losses::Beta;
use csdnn_core::pretrain::CorruptionSpec;

#[derive(Parser)]
#[command(name = "csdnn", version, about = "Cost-sensitive deep network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate the algorithm grid; writes runs.csv and summary.json.
    Run(ExperimentArgs),
    /// Train CSDNN at every β of the grid; writes sweep.csv.
    BetaSweep(ExperimentArgs),
    /// Check the cost bound of a regression checkpoint on the test split.
    Audit(AuditArgs),
    /// Emit a randomized proportional cost matrix as CSV.
    GenCosts(GenCostsArgs),
    /// Emit a manifest for an imbalanced variant of a dataset.
    MakeImbalanced(ImbalanceArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Comma-separated algorithm names, e.g. DNN_blind,DNN_SOSR,CSDNN.
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    cost_seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    run_seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    beta_grid: Option<Vec<f64>>,
    /// Thin training classes per cost seed.
    #[arg(long)]
    imbalance: bool,
    #[arg(long)]
    imbalance_classes: Option<usize>,
    #[arg(long)]
    imbalance_fraction: Option<f64>,
    #[arg(long, env = OUTPUT_DIR_ENV)]
    output_dir: Option<PathBuf>,
    /// Comma-separated hidden layer widths.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// β for algorithms run outside the grid search.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    corruption: Option<f64>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    pretrain_learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Early-stop NLL models on validation error rate.
    #[arg(long)]
    error_rate_stopping: bool,
    /// Write a checkpoint for every run.
    #[arg(long)]
    checkpoints: bool,
    /// Run cells one at a time.
    #[arg(long)]
    sequential: bool,
}

fn config_err(e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Config(e.to_string())
}

impl ExperimentArgs {
    fn resolve(self) -> Result<ExperimentConfig, ExperimentError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { cfg.$($field).+ = v; })*
            };
        }
        set!(
            dataset => dataset,
            algorithms => algorithms,
            cost_seeds => cost_seeds,
            run_seeds => run_seeds,
            beta_grid => beta_grid,
            imbalance_classes => imbalance_classes,
            imbalance_fraction => imbalance_fraction,
            output_dir => output_dir,
            hidden => train.hidden,
            batch_size => train.batch_size,
            max_epochs => train.max_epochs,
            patience => train.patience,
            pretrain_epochs => train.pretrain.epochs,
            pretrain_learning_rate => train.pretrain.learning_rate,
            seed => train.seed,
        );
        if let Some(lr) = self.learning_rate {
            cfg.train.learning_rate = Some(lr);
        }
        if let Some(b) = self.beta {
            cfg.train.beta = Beta::new(b).map_err(config_err)?;
        }
        if let Some(c) = self.corruption {
            cfg.train.pretrain.corruption = CorruptionSpec::new(c).map_err(config_err)?;
        }
        cfg.imbalance |= self.imbalance;
        cfg.train.error_rate_stopping |= self.error_rate_stopping;
        cfg.checkpoints |= self.checkpoints;
        if self.sequential {
            cfg.parallel_runs = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Unscaled cost matrix CSV; regenerated from --cost-seed when omitted.
    #[arg(long)]
    costs: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    cost_seed: u64,
    #[arg(long, env = OUTPUT_DIR_ENV, default_value = "results")]
    output_dir: PathBuf,
}

#[derive(Args)]
struct GenCostsArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 0)]
    cost_seed: u64,
    /// Divide by the largest entry.
    #[arg(long)]
    scaled: bool,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ImbalanceArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 0.7)]
    fraction: f64,
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Run(args) => {
            let out = cmd_run(&args.resolve()?)?;
            print!(
                "{}",
                csdnn_core::experiment::format_table(&out.summary.algorithms)
            );
            eprintln!(
                "wrote {} and {}",
                out.csv_path.display(),
                out.summary_path.display()
            );
        }
        Command::BetaSweep(args) => {
            let cfg = args.resolve()?;
            let report = cmd_beta_sweep(&cfg)?;
            print!("{}", report.to_csv());
            eprintln!("wrote {}", cfg.output_dir.join("sweep.csv").display());
        }
        Command::Audit(args) => {
            let cfg = AuditConfig {
                checkpoint: args.checkpoint,
                dataset: args.dataset,
                costs: args.costs,
                cost_seed: args.cost_seed,
                output_dir: args.output_dir,
            };
            let report = cmd_audit(&cfg)?;
            println!("{} examples, {} violations", report.rows.len(), report.violations);
        }
        Command::GenCosts(args) => {
            let c = cmd_gen_costs(&args.dataset, args.cost_seed, args.scaled)?;
            match args.out {
                Some(path) => std::fs::write(&path, c.to_csv()).map_err(|source| ExperimentError::Io {
                    path: path.display().to_string(),
                    source,
                })?,
                None => print!("{}", c.to_csv()),
            }
        }
        Command::MakeImbalanced(args) => {
            let (_, chosen) =
                cmd_make_imbalanced(&args.dataset, &args.out, args.seed, args.classes, args.fraction)?;
            println!("thinned classes {chosen:?}; wrote {}", args.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

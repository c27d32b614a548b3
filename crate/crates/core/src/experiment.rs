//! Experiment runner: cost generation, imbalanced variants, the algorithm
//! grid, β sweeps, bound audits, and the CSV/JSON reports they emit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{gen_randomized_proportional, row_as_cost_vector, scale_by_max, CostError, CostMatrix};
use crate::data::{
    load_dataset, make_imbalanced, DataError, Dataset, Manifest, PartSource, Source,
    DEFAULT_IMBALANCED_CLASSES, DEFAULT_REMOVAL_FRACTION,
};
use crate::eval::{bound_audit, AuditReport, EvalError, EvalReport};
use crate::losses::Beta;
use crate::nn::{Checkpoint, NnError};
use crate::par::{map_collect, Exec};
use crate::rng::CsRng;
use crate::train::{
    history_json_lines, train_algorithm, AlgorithmSpec, TaskData, TrainConfig, TrainError, TrainedModel,
};

/// Bumped whenever the report columns change.
pub const SCHEMA_VERSION: u32 = 1;
/// Environment variable that overrides the output directory.
pub const OUTPUT_DIR_ENV: &str = "CSDNN_OUTPUT_DIR";
/// The β grid used for model selection.
pub const BETA_GRID: [f64; 7] = [0.0, 0.05, 0.1, 0.25, 0.4, 0.75, 1.0];

const COST_STREAM: u64 = 0x636f_7374;
const IMBALANCE_STREAM: u64 = 0x696d_6261;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("cost seed {cost_seed}: {source}")]
    Cost {
        cost_seed: u64,
        #[source]
        source: CostError,
    },
    #[error("{algorithm} (cost seed {cost_seed}, run seed {run_seed}, beta {beta}): {source}")]
    Run {
        algorithm: String,
        cost_seed: u64,
        run_seed: u64,
        beta: f64,
        #[source]
        source: Box<TrainError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Checkpoint(#[from] NnError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("bound audit found {violations} violation(s)")]
    AuditViolation { violations: usize },
}

impl ExperimentError {
    /// Process exit status: 1 config, 2 data, 3 divergence, 4 audit violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 1,
            ExperimentError::Data(_) | ExperimentError::Cost { .. } | ExperimentError::Io { .. } => 2,
            ExperimentError::Run { source, .. } => match source.as_ref() {
                e if e.is_divergence() => 3,
                TrainError::Cost(_) => 2,
                _ => 1,
            },
            ExperimentError::Checkpoint(NnError::Io(_)) => 2,
            ExperimentError::Checkpoint(_) | ExperimentError::Eval(_) => 1,
            ExperimentError::AuditViolation { .. } => 4,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Everything a run needs besides the data files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub algorithms: Vec<String>,
    pub cost_seeds: Vec<u64>,
    pub run_seeds: Vec<u64>,
    pub train: TrainConfig,
    pub beta_grid: Vec<f64>,
    /// Thin `imbalance_classes` training classes per cost seed.
    pub imbalance: bool,
    pub imbalance_classes: usize,
    pub imbalance_fraction: f64,
    pub output_dir: PathBuf,
    /// Also write a checkpoint per run.
    pub checkpoints: bool,
    /// Worker pool for independent runs.
    pub parallel_runs: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: PathBuf::new(),
            algorithms: vec!["DNN_blind".into(), "DNN_SOSR".into(), "CSDNN".into()],
            cost_seeds: vec![0],
            run_seeds: (0..5).collect(),
            train: TrainConfig::default(),
            beta_grid: BETA_GRID.to_vec(),
            imbalance: false,
            imbalance_classes: DEFAULT_IMBALANCED_CLASSES,
            imbalance_fraction: DEFAULT_REMOVAL_FRACTION,
            output_dir: PathBuf::from("results"),
            checkpoints: false,
            parallel_runs: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    /// Reads a JSON config. A relative `dataset` path resolves against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if cfg.dataset.is_relative() && !cfg.dataset.as_os_str().is_empty() {
            if let Some(dir) = path.parent() {
                cfg.dataset = dir.join(&cfg.dataset);
            }
        }
        Ok(cfg)
    }

    pub fn specs(&self) -> Result<Vec<AlgorithmSpec>, ExperimentError> {
        self.algorithms
            .iter()
            .map(|a| {
                a.parse()
                    .map_err(|e: TrainError| ExperimentError::Config(e.to_string()))
            })
            .collect()
    }

    pub fn betas(&self) -> Result<Vec<Beta>, ExperimentError> {
        self.beta_grid
            .iter()
            .map(|&b| Beta::new(b).map_err(|e| ExperimentError::Config(e.to_string())))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.into()));
        if self.algorithms.is_empty() {
            return bad("at least one algorithm is required");
        }
        if self.cost_seeds.is_empty() || self.run_seeds.is_empty() {
            return bad("at least one cost seed and one run seed are required");
        }
        if self.beta_grid.is_empty() {
            return bad("beta grid is empty");
        }
        if self.dataset.as_os_str().is_empty() {
            return bad("dataset manifest path is required");
        }
        self.specs()?;
        self.betas()?;
        self.train
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))
    }

    /// Applies the output-directory environment override, if set.
    pub fn with_env_overrides(mut self) -> Self {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()) {
            self.output_dir = PathBuf::from(dir);
        }
        self
    }
}

/// The dataset variant and cost matrix belonging to one cost seed.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTask {
    pub cost_seed: u64,
    pub dataset: Dataset,
    /// Classes thinned for this seed, when the imbalance flag is on.
    pub chosen: Option<Vec<usize>>,
    /// Unscaled.
    pub costs: CostMatrix,
}

impl CostTask {
    pub fn data(&self) -> TaskData<'_> {
        TaskData {
            train_x: &self.dataset.train.x,
            train_labels: &self.dataset.train.labels,
            val_x: &self.dataset.validation.x,
            val_labels: &self.dataset.validation.labels,
            costs: &self.costs,
        }
    }
}

/// Builds the per-seed variant (if requested) and draws its cost matrix from
/// the variant's training labels.
pub fn prepare_task(
    base: &Dataset,
    manifest_chosen: Option<Vec<usize>>,
    config: &ExperimentConfig,
    cost_seed: u64,
) -> Result<CostTask, ExperimentError> {
    let (dataset, chosen) = if config.imbalance {
        let mut rng = CsRng::stream(cost_seed, IMBALANCE_STREAM);
        let (ds, chosen) = make_imbalanced(
            base,
            config.imbalance_classes,
            config.imbalance_fraction,
            &mut rng,
        )?;
        (ds, Some(chosen))
    } else {
        (base.clone(), manifest_chosen)
    };
    let costs = gen_randomized_proportional(
        &dataset.train.labels,
        dataset.classes,
        &mut CsRng::stream(cost_seed, COST_STREAM),
    )
    .map_err(|source| ExperimentError::Cost { cost_seed, source })?;
    Ok(CostTask {
        cost_seed,
        dataset,
        chosen,
        costs,
    })
}

fn prepare_tasks(config: &ExperimentConfig) -> Result<Vec<CostTask>, ExperimentError> {
    let (base, chosen) = load_dataset(&config.dataset)?;
    config
        .cost_seeds
        .iter()
        .map(|&s| prepare_task(&base, chosen.clone(), config, s))
        .collect()
}

/// Outcome of one (algorithm, cost seed, run seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: String,
    pub cost_seed: u64,
    pub run_seed: u64,
    /// Selected β; 0 for algorithms that ignore it.
    pub beta: f64,
    /// Validation metric at the selected epoch.
    pub validation_cost: f64,
    pub best_epoch: Option<usize>,
    pub test: EvalReport,
}

impl RunRecord {
    pub const CSV_HEADER: &'static str =
        "schema_version,algorithm,cost_seed,run_seed,beta,validation_cost,best_epoch,mean_cost,std_error,error_rate,n";

    pub fn csv_row(&self) -> String {
        format!(
            "{SCHEMA_VERSION},{},{},{},{},{},{},{}",
            self.algorithm,
            self.cost_seed,
            self.run_seed,
            self.beta,
            self.validation_cost,
            self.best_epoch.map_or(String::new(), |e| e.to_string()),
            self.test.csv_row()
        )
    }
}

pub fn runs_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(RunRecord::CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

fn validation_cost(model: &TrainedModel) -> f64 {
    model
        .best_epoch
        .map_or(f64::INFINITY, |e| model.history[e].validation_metric)
}

/// Trains one cell. β-dependent algorithms are trained at every grid value
/// and the lowest validation cost wins; ties keep the smaller β.
pub fn train_cell(
    spec: AlgorithmSpec,
    task: &CostTask,
    train: &TrainConfig,
    betas: &[Beta],
    run_seed: u64,
) -> Result<TrainedModel, ExperimentError> {
    let mut grid: Vec<Beta> = if spec.uses_beta() {
        betas.to_vec()
    } else {
        vec![train.beta]
    };
    grid.sort_by(|a, b| a.get().total_cmp(&b.get()));
    grid.dedup();
    let mut best: Option<TrainedModel> = None;
    for beta in grid {
        let cfg = TrainConfig {
            beta,
            seed: run_seed,
            ..train.clone()
        };
        let model = train_algorithm(spec, task.data(), &cfg).map_err(|e| ExperimentError::Run {
            algorithm: spec.name(),
            cost_seed: task.cost_seed,
            run_seed,
            beta: beta.get(),
            source: Box::new(e),
        })?;
        if best
            .as_ref()
            .map_or(true, |b| validation_cost(&model) < validation_cost(b))
        {
            best = Some(model);
        }
    }
    Ok(best.expect("grid is non-empty"))
}

fn cell_record(model: &TrainedModel, task: &CostTask, run_seed: u64) -> Result<RunRecord, ExperimentError> {
    let test = model.evaluate(&task.dataset.test.x, &task.dataset.test.labels, &task.costs)?;
    Ok(RunRecord {
        algorithm: model.spec.name(),
        cost_seed: task.cost_seed,
        run_seed,
        beta: model.beta.get(),
        validation_cost: validation_cost(model),
        best_epoch: model.best_epoch,
        test,
    })
}

fn exec_for(config: &ExperimentConfig) -> Exec {
    if config.parallel_runs {
        Exec::default()
    } else {
        Exec::Sequential
    }
}

/// Per-algorithm aggregate over every (cost seed, run seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub runs: usize,
    /// Mean over runs of the per-run test mean cost.
    pub mean_cost: f64,
    /// Standard error of that mean across runs (N − 1 denominator).
    pub std_error: f64,
    pub mean_error_rate: f64,
    /// Mean over runs of each run's own test-set standard error.
    pub mean_within_run_std_error: f64,
}

/// Mean and across-sample standard error.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt() / n.sqrt())
}

pub fn summarize(records: &[RunRecord]) -> Vec<AlgorithmSummary> {
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.algorithm.as_str()) {
            order.push(&r.algorithm);
        }
    }
    order
        .into_iter()
        .map(|alg| {
            let rows: Vec<&RunRecord> = records.iter().filter(|r| r.algorithm == alg).collect();
            let costs: Vec<f64> = rows.iter().map(|r| r.test.mean_cost).collect();
            let (mean_cost, std_error) = mean_and_se(&costs);
            let n = rows.len() as f64;
            AlgorithmSummary {
                algorithm: alg.to_string(),
                runs: rows.len(),
                mean_cost,
                std_error,
                mean_error_rate: rows.iter().map(|r| r.test.error_rate).sum::<f64>() / n,
                mean_within_run_std_error: rows.iter().map(|r| r.test.std_error).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Fixed-width table with four decimals.
pub fn format_table(summaries: &[AlgorithmSummary]) -> String {
    let mut out = format!(
        "{:<12} {:>5} {:>10} {:>9} {:>10}\n",
        "algorithm", "runs", "mean_cost", "std_err", "error_rate"
    );
    for s in summaries {
        out.push_str(&format!(
            "{:<12} {:>5} {:>10.4} {:>9.4} {:>10.4}\n",
            s.algorithm, s.runs, s.mean_cost, s.std_error, s.mean_error_rate
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSeedInfo {
    pub cost_seed: u64,
    pub chosen_classes: Option<Vec<usize>>,
    pub train_class_counts: Vec<usize>,
    pub cost_matrix_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub dataset: String,
    pub cost_seeds: Vec<CostSeedInfo>,
    pub algorithms: Vec<AlgorithmSummary>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<RunRecord>,
    pub summary: RunSummary,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

fn file_stem(algorithm: &str, cost_seed: u64, run_seed: u64) -> String {
    format!("{algorithm}_c{cost_seed}_r{run_seed}")
}

fn write_cost_files(tasks: &[CostTask], out: &Path) -> Result<Vec<CostSeedInfo>, ExperimentError> {
    tasks
        .iter()
        .map(|t| {
            let file = format!("costs_c{}.csv", t.cost_seed);
            write_file(&out.join(&file), &t.costs.to_csv())?;
            Ok(CostSeedInfo {
                cost_seed: t.cost_seed,
                chosen_classes: t.chosen.clone(),
                train_class_counts: t.dataset.class_counts(crate::data::Split::Train),
                cost_matrix_file: file,
            })
        })
        .collect()
}

/// Trains and evaluates every (algorithm, cost seed, run seed) cell, then
/// writes `runs.csv`, `summary.json`, `table.txt`, one cost matrix per cost
/// seed, per-run histories, and optionally checkpoints. Rows are ordered by
/// algorithm (config order), cost seed, then run seed.
pub fn cmd_run(config: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
    config.validate()?;
    let specs = config.specs()?;
    let betas = config.betas()?;
    let tasks = prepare_tasks(config)?;
    let out = config.output_dir.clone();
    let cost_seeds = write_cost_files(&tasks, &out)?;

    let mut cells = Vec::new();
    for spec in &specs {
        for (t, _) in tasks.iter().enumerate() {
            for &run_seed in &config.run_seeds {
                cells.push((*spec, t, run_seed));
            }
        }
    }
    let results = map_collect(&cells, exec_for(config), |&(spec, t, run_seed)| {
        let model = train_cell(spec, &tasks[t], &config.train, &betas, run_seed)?;
        let record = cell_record(&model, &tasks[t], run_seed)?;
        Ok::<_, ExperimentError>((model, record))
    });

    let mut records = Vec::with_capacity(results.len());
    for res in results {
        let (model, record) = res?;
        let stem = file_stem(&record.algorithm, record.cost_seed, record.run_seed);
        write_file(
            &out.join("history").join(format!("{stem}.jsonl")),
            &history_json_lines(&model.history),
        )?;
        if config.checkpoints {
            let path = out.join("checkpoints").join(format!("{stem}.json"));
            write_file(&path, &Checkpoint::from_net(&model.net).to_json()?)?;
        }
        records.push(record);
    }

    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        dataset: config.dataset.display().to_string(),
        cost_seeds,
        algorithms: summarize(&records),
        config: config.clone(),
    };
    let csv_path = out.join("runs.csv");
    let summary_path = out.join("summary.json");
    write_file(&csv_path, &runs_csv(&records))?;
    write_file(
        &summary_path,
        &(serde_json::to_string_pretty(&summary).expect("plain data") + "\n"),
    )?;
    write_file(&out.join("table.txt"), &format_table(&summary.algorithms))?;
    Ok(RunOutput {
        records,
        summary,
        csv_path,
        summary_path,
    })
}

/// One (β, cost seed, run seed) sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub beta: f64,
    pub cost_seed: u64,
    pub run_seed: u64,
    pub validation_cost: f64,
    pub test_cost: f64,
}

/// Seed-averaged sweep row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub runs: usize,
    pub validation_cost: f64,
    pub validation_std_error: f64,
    pub test_cost: f64,
    pub test_std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub runs: Vec<SweepRun>,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub const CSV_HEADER: &'static str =
        "schema_version,beta,runs,validation_cost,validation_std_error,test_cost,test_std_error";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{SCHEMA_VERSION},{},{},{},{},{},{}\n",
                r.beta, r.runs, r.validation_cost, r.validation_std_error, r.test_cost, r.test_std_error
            ));
        }
        out
    }

    /// Row with the lowest mean validation cost (smallest β on ties).
    pub fn best(&self) -> Option<&SweepRow> {
        self.rows
            .iter()
            .fold(None, |acc: Option<&SweepRow>, r| match acc {
                Some(b) if b.validation_cost <= r.validation_cost => Some(b),
                _ => Some(r),
            })
    }
}

/// Trains CSDNN at every grid β with shared seeds. Writes `sweep.csv` (one
/// row per β, in grid order) and `sweep_runs.json`.
pub fn cmd_beta_sweep(config: &ExperimentConfig) -> Result<SweepReport, ExperimentError> {
    config.validate()?;
    let betas = config.betas()?;
    let tasks = prepare_tasks(config)?;
    let mut cells = Vec::new();
    for &beta in &betas {
        for (t, _) in tasks.iter().enumerate() {
            for &run_seed in &config.run_seeds {
                cells.push((beta, t, run_seed));
            }
        }
    }
    let runs = map_collect(&cells, exec_for(config), |&(beta, t, run_seed)| {
        let task = &tasks[t];
        let cfg = TrainConfig {
            beta,
            seed: run_seed,
            ..config.train.clone()
        };
        let model =
            train_algorithm(AlgorithmSpec::CSDNN, task.data(), &cfg).map_err(|e| ExperimentError::Run {
                algorithm: AlgorithmSpec::CSDNN.name(),
                cost_seed: task.cost_seed,
                run_seed,
                beta: beta.get(),
                source: Box::new(e),
            })?;
        let test = model.evaluate(&task.dataset.test.x, &task.dataset.test.labels, &task.costs)?;
        Ok::<_, ExperimentError>(SweepRun {
            beta: beta.get(),
            cost_seed: task.cost_seed,
            run_seed,
            validation_cost: validation_cost(&model),
            test_cost: test.mean_cost,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let mut grouped: BTreeMap<usize, Vec<&SweepRun>> = BTreeMap::new();
    let per_beta = tasks.len() * config.run_seeds.len();
    for (i, r) in runs.iter().enumerate() {
        grouped.entry(i / per_beta).or_default().push(r);
    }
    let rows = grouped
        .values()
        .map(|group| {
            let (validation_cost, validation_std_error) =
                mean_and_se(&group.iter().map(|r| r.validation_cost).collect::<Vec<_>>());
            let (test_cost, test_std_error) =
                mean_and_se(&group.iter().map(|r| r.test_cost).collect::<Vec<_>>());
            SweepRow {
                beta: group[0].beta,
                runs: group.len(),
                validation_cost,
                validation_std_error,
                test_cost,
                test_std_error,
            }
        })
        .collect();
    let report = SweepReport { runs, rows };
    let out = &config.output_dir;
    write_file(&out.join("sweep.csv"), &report.to_csv())?;
    write_file(
        &out.join("sweep_runs.json"),
        &(serde_json::to_string_pretty(&report.runs).expect("plain data") + "\n"),
    )?;
    Ok(report)
}

/// Inputs of a bound audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    /// Unscaled cost matrix CSV; when absent it is regenerated from `cost_seed`.
    pub costs: Option<PathBuf>,
    pub cost_seed: u64,
    pub output_dir: PathBuf,
}

/// Audits `c[argmin r] ≤ Σξ ≤ Σδ` over the test split with the max-scaled
/// cost vectors the network was trained to regress. Writes `audit.csv`; any
/// violation is returned as [`ExperimentError::AuditViolation`] after the
/// report is written.
pub fn cmd_audit(config: &AuditConfig) -> Result<AuditReport, ExperimentError> {
    if !config.checkpoint.exists() {
        return Err(ExperimentError::Config(format!(
            "checkpoint {} not found",
            config.checkpoint.display()
        )));
    }
    let net = Checkpoint::load(&config.checkpoint)?.into_net()?;
    let (ds, _) = load_dataset(&config.dataset)?;
    let costs = match &config.costs {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            CostMatrix::from_csv(&text).map_err(|source| ExperimentError::Cost {
                cost_seed: config.cost_seed,
                source,
            })?
        }
        None => gen_randomized_proportional(
            &ds.train.labels,
            ds.classes,
            &mut CsRng::stream(config.cost_seed, COST_STREAM),
        )
        .map_err(|source| ExperimentError::Cost {
            cost_seed: config.cost_seed,
            source,
        })?,
    };
    let cost_err = |source| ExperimentError::Cost {
        cost_seed: config.cost_seed,
        source,
    };
    let (scaled, _) = scale_by_max(&costs).map_err(cost_err)?;
    let vectors = ds
        .test
        .labels
        .iter()
        .map(|&y| row_as_cost_vector(&scaled, y))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| ExperimentError::Cost {
            cost_seed: config.cost_seed,
            source,
        })?;
    let report = bound_audit(&net, &ds.test.x, &vectors)?;
    write_file(&config.output_dir.join("audit.csv"), &report.to_csv())?;
    if report.violations > 0 {
        return Err(ExperimentError::AuditViolation {
            violations: report.violations,
        });
    }
    Ok(report)
}

/// Draws the cost matrix for `cost_seed` from the dataset's training labels.
pub fn cmd_gen_costs(dataset: &Path, cost_seed: u64, scaled: bool) -> Result<CostMatrix, ExperimentError> {
    let (ds, _) = load_dataset(dataset)?;
    let err = |source| ExperimentError::Cost { cost_seed, source };
    let c = gen_randomized_proportional(
        &ds.train.labels,
        ds.classes,
        &mut CsRng::stream(cost_seed, COST_STREAM),
    )
    .map_err(err)?;
    if scaled {
        Ok(scale_by_max(&c).map_err(err)?.0)
    } else {
        Ok(c)
    }
}

/// Writes a variant manifest that thins `classes` training classes of the
/// base dataset. File paths become absolute so the variant can live anywhere,
/// and the drawn classes are pinned in the output.
pub fn cmd_make_imbalanced(
    base: &Path,
    out: &Path,
    seed: u64,
    classes: usize,
    fraction: f64,
) -> Result<(Manifest, Vec<usize>), ExperimentError> {
    let mut manifest = Manifest::load(base)?;
    let base_dir = base.parent().unwrap_or(Path::new("."));
    let base_dir = base_dir.canonicalize().map_err(io_err(base_dir))?;
    let absolute = |p: &str| -> String {
        let path = Path::new(p);
        if path.is_absolute() {
            p.to_string()
        } else {
            base_dir.join(path).display().to_string()
        }
    };
    for part in [&mut manifest.train, &mut manifest.validation, &mut manifest.test]
        .into_iter()
        .flatten()
    {
        *part = PartSource {
            files: match &part.files {
                Source::Idx { images, labels } => Source::Idx {
                    images: absolute(images),
                    labels: absolute(labels),
                },
                Source::Csv(f) => Source::Csv(absolute(f)),
            },
            limit: part.limit,
        };
    }
    manifest.imbalance = Some(crate::data::Imbalance {
        classes,
        fraction,
        seed,
        chosen: None,
    });
    let (_, chosen) = manifest.realize(&base_dir)?;
    if let Some(imb) = manifest.imbalance.as_mut() {
        imb.chosen = chosen.clone();
    }
    manifest.name = format!("{}-imbalanced-s{seed}", manifest.name);
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    manifest.save(out)?;
    Ok((manifest, chosen.unwrap_or_default()))
}

//! `datl` command line.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{run_dir, RunConfig};
use crate::data::{dedup_relaxation, load_dataset_with, synth_generate, write_dataset, Dataset, Windowing, RELAXATION_LABEL};
use crate::error::{Error, Result};
use crate::eval::{
    emit_reports, fit_fold, read_grid_file, read_per_subject, read_sweep_table, run_loso, select_config,
    sweep_repeated, write_repeats, GridPoint, ReportRow, RunOptions, SweepRow, PER_SUBJECT_FILE, SWEEP_TABLE_FILE,
    TABLE1_GRID,
};
use crate::model::ConditioningMode;
use crate::training::random_model_grad_check;

/// Largest gradient-check relative error accepted by `datl gradcheck`.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset in the canonical CSV layout.
    Synth,
    /// Train and score one held-out subject; saves the model.
    Train,
    /// Leave-one-subject-out evaluation at one hyperparameter point.
    Loso,
    /// Leave-one-subject-out evaluation over a hyperparameter grid.
    Sweep,
    /// Finite-difference check of the analytic gradients.
    Gradcheck,
    /// Summarize the report files of a finished sweep.
    Report,
}

#[derive(Debug, Clone, PartialEq, Default, Args)]
pub struct Options {
    /// Dataset manifest (CSV).
    #[arg(long, global = true, value_name = "MANIFEST")]
    pub data: Option<PathBuf>,
    /// Use the synthetic generator instead of recorded data.
    #[arg(long, global = true, conflicts_with = "data")]
    pub synth: bool,
    #[arg(long = "lambda-a", global = true)]
    pub lambda_a: Option<f64>,
    #[arg(long = "lambda-n", global = true)]
    pub lambda_n: Option<f64>,
    #[arg(long = "r-n", global = true)]
    pub r_n: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for folds and grid rows.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Repeat the sweep with shifted seeds and report the mean.
    #[arg(long, global = true, default_value_t = 1)]
    pub repeats: usize,
    /// Classifier conditioning at evaluation time.
    #[arg(long = "cond-mode", global = true)]
    pub cond_mode: Option<ConditioningMode>,
    /// Sliding-window length in samples.
    #[arg(long, global = true, requires = "stride")]
    pub window: Option<usize>,
    #[arg(long, global = true, requires = "window")]
    pub stride: Option<usize>,
    /// Output root; each run writes into its own subdirectory.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,
    /// Named grid; only `table1` is built in.
    #[arg(long, global = true, conflicts_with = "grid_file")]
    pub grid: Option<String>,
    /// Grid CSV with header `lambda_a,lambda_n,r_n`.
    #[arg(long = "grid-file", global = true)]
    pub grid_file: Option<PathBuf>,
    /// Subject held out by `train`.
    #[arg(long = "held-out", global = true)]
    pub held_out: Option<usize>,
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Configuration override, `dotted.key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Run directory read by `report`.
    #[arg(long, global = true)]
    pub run: Option<PathBuf>,
}

#[derive(Debug, Parser)]
#[command(name = "datl", version, about = "Subject-disentangled stress classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    options: Options,
}

/// A parsed command line.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub command: Command,
    pub options: Options,
}

impl RunSpec {
    /// Layered configuration: defaults, `--config`, `--set`, then flags.
    pub fn config(&self) -> Result<RunConfig> {
        let o = &self.options;
        let mut cfg = RunConfig::layered(o.config.as_deref(), &o.overrides)?;
        if let Some(v) = o.lambda_a {
            cfg.train.lambda_a = v;
        }
        if let Some(v) = o.lambda_n {
            cfg.train.lambda_n = v;
        }
        if let Some(v) = o.r_n {
            cfg.train.r_n = v;
        }
        if let Some(v) = o.seed {
            cfg.train.seed = v;
            cfg.synth.seed = v;
        }
        if let Some(v) = o.cond_mode {
            cfg.train.conditioning_mode = v;
        }
        if let (Some(window), Some(stride)) = (o.window, o.stride) {
            cfg.windowing = Some(Windowing { window, stride });
        }
        if let Some(v) = o.epsilon {
            cfg.epsilon = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<Vec<GridPoint>> {
        match (&self.options.grid, &self.options.grid_file) {
            (_, Some(path)) => read_grid_file(path),
            (Some(name), None) if name == "table1" => Ok(TABLE1_GRID.to_vec()),
            (Some(name), None) => Err(Error::Validation(format!("unknown grid `{name}`; use table1 or --grid-file"))),
            (None, None) => Ok(TABLE1_GRID.to_vec()),
        }
    }
}

/// Parses `argv` (program name first). `--help` and `--version` come back as
/// errors whose [`clap::Error::exit_code`] is 0.
pub fn parse_args<I, T>(argv: I) -> std::result::Result<RunSpec, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    Ok(RunSpec {
        command: cli.command,
        options: cli.options,
    })
}

/// Exit status for an error: 1 for bad input, 2 for failures while running.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        1
    } else {
        2
    }
}

fn load(spec: &RunSpec, cfg: &RunConfig) -> Result<(Dataset, String)> {
    match (&spec.options.data, spec.options.synth) {
        (Some(path), _) => {
            let raw = load_dataset_with(path, cfg.samples)?;
            Ok((dedup_relaxation(&raw, RELAXATION_LABEL), path.display().to_string()))
        }
        (None, true) => Ok((synth_generate(&cfg.synth)?, format!("synth:{}", serde_json::to_string(&cfg.synth)?))),
        (None, false) => Err(Error::Validation("no data source: pass --data <manifest> or --synth".into())),
    }
}

fn metric_line(row: &SweepRow) -> String {
    format!(
        "lambda_a={} lambda_n={} r_n={} main_acc={:.4} adv_acc={:.4} nuis_acc={:.4} n_folds_failed={}",
        row.point.lambda_a, row.point.lambda_n, row.point.r_n, row.main_acc, row.adv_acc, row.nuis_acc, row.n_folds_failed
    )
}

fn prepare_dir(dir: &Path, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json()? + "\n").map_err(|e| Error::io(&path, e))
}

/// Runs a parsed command, printing metric lines to standard output.
pub fn execute(spec: &RunSpec) -> Result<()> {
    let o = &spec.options;
    match spec.command {
        Command::Gradcheck => {
            let seed = o.seed.unwrap_or(0);
            let err = random_model_grad_check(seed, 1e-5)?;
            println!("max_rel_error={err:e}");
            if err < GRADCHECK_TOLERANCE {
                Ok(())
            } else {
                Err(Error::State(format!("gradient check failed: {err:e} >= {GRADCHECK_TOLERANCE:e}")))
            }
        }
        Command::Report => {
            let dir = o
                .run
                .as_ref()
                .ok_or_else(|| Error::Validation("report needs --run <run directory>".into()))?;
            let cfg = spec.config()?;
            report(dir, cfg.epsilon)
        }
        Command::Synth => {
            let cfg = spec.config()?;
            let data = synth_generate(&cfg.synth)?;
            let dir = run_dir(&o.out, &cfg, &[], "synth")?;
            prepare_dir(&dir, &cfg)?;
            let manifest = write_dataset(&data, &dir.join("data"))?;
            println!("trials={} subjects={} manifest={}", data.len(), data.num_subjects, manifest.display());
            Ok(())
        }
        Command::Train => {
            let cfg = spec.config()?;
            let (data, source) = load(spec, &cfg)?;
            let loso = cfg.loso();
            let held_out = match o.held_out {
                Some(s) => s,
                None => *data.subjects().first().ok_or_else(|| Error::Validation("dataset is empty".into()))?,
            };
            let dir = run_dir(&o.out, &cfg, &[loso.point()], &format!("{source}#train{held_out}"))?;
            prepare_dir(&dir, &cfg)?;
            let (fitted, fold) = fit_fold(&data, &loso, held_out, Some(&dir))?;
            if let Some(reason) = &fold.failed {
                return Err(Error::NonFinite(format!("training diverged: {reason}")));
            }
            if let Some((model, _)) = fitted {
                model.save(&dir.join("model.json"))?;
            }
            println!(
                "held_out={} main_acc={:.4} adv_acc={:.4} nuis_acc={:.4} best_epoch={} run_dir={}",
                held_out,
                fold.main_acc,
                fold.adv_acc,
                fold.nuis_acc,
                fold.best_epoch,
                dir.display()
            );
            Ok(())
        }
        Command::Loso => {
            let cfg = spec.config()?;
            let (data, source) = load(spec, &cfg)?;
            let loso = cfg.loso();
            let dir = run_dir(&o.out, &cfg, &[loso.point()], &source)?;
            prepare_dir(&dir, &cfg)?;
            let row = run_loso(&data, &loso, &RunOptions { jobs: o.jobs, log_dir: Some(dir.join("logs")) })?;
            emit_reports(&[ReportRow::from(&row)], &dir)?;
            println!("{}", metric_line(&row));
            println!("run_dir={}", dir.display());
            Ok(())
        }
        Command::Sweep => {
            let cfg = spec.config()?;
            let grid = spec.grid()?;
            let (data, source) = load(spec, &cfg)?;
            let dir = run_dir(&o.out, &cfg, &grid, &format!("{source}#repeats{}", o.repeats))?;
            prepare_dir(&dir, &cfg)?;
            let options = RunOptions { jobs: o.jobs, log_dir: Some(dir.join("logs")) };
            let repeats = sweep_repeated(&data, &grid, &cfg.loso(), &options, o.repeats.max(1))?;
            if repeats.len() > 1 {
                write_repeats(&repeats, &dir)?;
            }
            let report_rows: Vec<ReportRow> = (0..grid.len())
                .map(|i| ReportRow::mean_over_repeats(&repeats.iter().map(|r| &r[i]).collect::<Vec<_>>()))
                .collect::<Result<_>>()?;
            let rows: Vec<SweepRow> = report_rows.iter().map(summary).collect();
            emit_reports(&report_rows, &dir)?;
            for (i, row) in rows.iter().enumerate() {
                if repeats.len() > 1 {
                    let sd = |f: fn(&SweepRow) -> f64| {
                        let v: Vec<f64> = repeats.iter().map(|r| f(&r[i])).collect();
                        let m = v.iter().sum::<f64>() / v.len() as f64;
                        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
                    };
                    println!(
                        "{} main_sd={:.4} adv_sd={:.4} nuis_sd={:.4}",
                        metric_line(row),
                        sd(|r| r.main_acc),
                        sd(|r| r.adv_acc),
                        sd(|r| r.nuis_acc)
                    );
                } else {
                    println!("{}", metric_line(row));
                }
            }
            if let Some(best) = select_config(&rows, cfg.epsilon) {
                println!(
                    "selected lambda_a={} lambda_n={} r_n={}",
                    best.point.lambda_a, best.point.lambda_n, best.point.r_n
                );
            }
            println!("run_dir={}", dir.display());
            Ok(())
        }
    }
}

fn summary(r: &ReportRow) -> SweepRow {
    SweepRow {
        point: r.point,
        main_acc: r.main_acc,
        adv_acc: r.adv_acc,
        nuis_acc: r.nuis_acc,
        n_folds_failed: r.n_folds_failed,
        folds: Vec::new(),
    }
}

fn report(dir: &Path, epsilon: f64) -> Result<()> {
    let table = read_sweep_table(&dir.join(SWEEP_TABLE_FILE))?;
    let per = read_per_subject(&dir.join(PER_SUBJECT_FILE))?;
    let rows: Vec<SweepRow> = table.iter().map(summary).collect();
    for (row, (_, folds, stats)) in rows.iter().zip(&per) {
        match stats {
            Some(b) => println!(
                "{} folds={} median={:.4} q1={:.4} q3={:.4} min={:.4} max={:.4}",
                metric_line(row),
                folds.len(),
                b.median,
                b.q1,
                b.q3,
                b.min,
                b.max
            ),
            None => println!("{} folds={}", metric_line(row), folds.len()),
        }
    }
    if let Some(best) = select_config(&rows, epsilon) {
        println!(
            "selected lambda_a={} lambda_n={} r_n={}",
            best.point.lambda_a, best.point.lambda_n, best.point.r_n
        );
    }
    Ok(())
}

/// Parses `argv`, runs it, and returns the process exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let spec = match parse_args(argv) {
        Ok(spec) => spec,
        Err(e) => {
            let code = if e.exit_code() == 0 { 0 } else { 1 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&spec) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

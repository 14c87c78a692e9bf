//! Command-line driver: config parsing, subcommands and exit codes.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::approx::{shift_approx_sweep, shift_error_orders, SweepRow};
use crate::discovery::{
    gen_angle_pairs_dataset, gen_fixed_angle_dataset, train_angle_regression_on, train_fixed_angle_on, write_outcome,
    AnglePairs, AngleModel, AngleRegressionTask, Checkpoint, FixedAngleData, FixedAngleTask, OptimizerConfig,
    TrainOutcome,
};
use crate::error::{Error, Result};
use crate::numerics::{io, Matrix, SeededRng};
use crate::theory::{
    convergence_orders, field_terms, helmholtz_table, mse_loss_decomposed, mse_loss_direct, symmetric_instance,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Environment variable that overrides `out_dir` from the config file.
pub const OUT_ENV: &str = "LCONV_OUT";

/// Exit code for an error: 2 for configuration problems, 3 for numeric
/// failures, 4 for file and format problems.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::UnsupportedGroup(_) | Error::UnsupportedSize(_) | Error::Dimension { .. } => EXIT_CONFIG,
        Error::Degenerate(_) | Error::Singular { .. } | Error::NonFinite(_) | Error::TrainingDiverged { .. } => {
            EXIT_NUMERIC
        }
        Error::Io { .. } | Error::Format { .. } | Error::Serde(_) => EXIT_IO,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[default]
    FixedAngle,
    AngleRegression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxSection {
    pub d: usize,
    pub z: f64,
    pub ns: Vec<usize>,
    /// When non-empty, one CSV per line length.
    #[serde(default)]
    pub d_sweep: Vec<usize>,
    #[serde(default = "default_etas")]
    pub order_etas: Vec<f64>,
}

fn default_etas() -> Vec<f64> {
    vec![1e-1, 5e-2, 2.5e-2, 1.25e-2]
}

impl Default for ApproxSection {
    fn default() -> Self {
        ApproxSection {
            d: 20,
            z: 2.0,
            ns: vec![4, 8, 16, 32, 64, 256],
            d_sweep: Vec::new(),
            order_etas: default_etas(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySection {
    /// Only `"translations"` is supported by the field diagnostics.
    pub group: String,
    pub sizes: Vec<usize>,
    pub mass: f64,
    pub eps: f64,
    pub decomposition_instances: usize,
    pub ring_size: usize,
    pub channels: usize,
}

impl Default for TheorySection {
    fn default() -> Self {
        TheorySection {
            group: "translations".into(),
            sizes: vec![32, 64, 128],
            mass: 1.0,
            eps: 1.0,
            decomposition_instances: 10,
            ring_size: 16,
            channels: 3,
        }
    }
}

/// Parsed config file. Every section is optional and falls back to its
/// defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub task: TaskKind,
    pub fixed_angle: Option<FixedAngleTask>,
    pub angle_regression: Option<AngleRegressionTask>,
    pub optimizer: Option<OptimizerConfig>,
    pub approx: Option<ApproxSection>,
    pub theory: Option<TheorySection>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Fills every section with its effective values so the echo records
    /// exactly what ran.
    fn resolved(mut self) -> Self {
        let seed = self.seed;
        let mut fa = self.fixed_angle.unwrap_or_default();
        let mut ar = self.angle_regression.unwrap_or_default();
        if let Some(s) = seed {
            fa.seed = s;
            ar.seed = s;
        }
        self.optimizer = Some(self.optimizer.unwrap_or(match self.task {
            TaskKind::FixedAngle => OptimizerConfig::adam(1e-2, 64, 20),
            TaskKind::AngleRegression => OptimizerConfig::adam(1e-3, 16, 30),
        }));
        self.fixed_angle = Some(fa);
        self.angle_regression = Some(ar);
        self.approx = Some(self.approx.unwrap_or_default());
        self.theory = Some(self.theory.unwrap_or_default());
        self.threads = Some(self.threads.unwrap_or(1).max(1));
        self
    }
}

#[derive(Debug, Parser)]
#[command(name = "lconv", version, about = "Lie algebra convolution experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML config file; every section is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides LCONV_OUT and the config file).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset as matrix files with a hashed manifest.
    GenData(Common),
    /// Train the configured discovery task.
    Train {
        #[command(flatten)]
        common: Common,
        /// Read the dataset written by gen-data instead of generating it.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Continue from a checkpoint directory written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the configured task's test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Finite shifts from products of near-identity steps.
    Approx(Common),
    /// Loss decomposition and Euler-Lagrange / Noether convergence tables.
    Theory(Common),
    /// Print the library version.
    Version,
}

/// A resolved config plus the output directory it writes to.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub out_dir: PathBuf,
}

impl Context {
    /// File config, then `LCONV_OUT`, then command-line flags.
    pub fn new(common: &Common) -> Result<Self> {
        let mut config = match &common.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = common.seed {
            config.seed = Some(s);
        }
        if let Some(t) = common.threads {
            config.threads = Some(t);
        }
        let env_out = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        let out_dir = common
            .out_dir
            .clone()
            .or(env_out)
            .or_else(|| config.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("lconv-out"));
        config.out_dir = Some(out_dir.clone());
        Ok(Context {
            config: config.resolved(),
            out_dir,
        })
    }

    fn fixed_angle(&self) -> FixedAngleTask {
        self.config.fixed_angle.expect("resolved")
    }

    fn angle_regression(&self) -> AngleRegressionTask {
        self.config.angle_regression.expect("resolved")
    }

    fn optimizer(&self) -> OptimizerConfig {
        self.config.optimizer.expect("resolved")
    }

    /// Writes `config.toml` and `version.json` into the output directory.
    fn echo(&self) -> Result<String> {
        io::ensure_dir(&self.out_dir)?;
        let mut echo = self.config.clone();
        // the output location is not part of what is computed
        echo.out_dir = None;
        let text = echo.to_toml()?;
        io::write_text(self.out_dir.join("config.toml"), &text)?;
        io::write_json(self.out_dir.join("version.json"), &version_info())?;
        Ok(sha256_hex(text.as_bytes()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VersionInfo {
    pub name: String,
    pub version: String,
}

pub fn version_info() -> VersionInfo {
    VersionInfo {
        name: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Serialize, Deserialize)]
struct DataManifest {
    task: TaskKind,
    seed: u64,
    config_sha256: String,
    files: BTreeMap<String, String>,
}

fn write_hashed(dir: &Path, files: &[(&str, &Matrix)], manifest: &mut DataManifest) -> Result<()> {
    for (name, m) in files {
        let path = dir.join(name);
        io::write_matrix(&path, m)?;
        manifest.files.insert(name.to_string(), file_sha256(&path)?);
    }
    Ok(())
}

fn theta_row(theta: &[f64]) -> Matrix {
    Matrix::from_vec(1, theta.len(), theta.to_vec()).expect("row of labels")
}

fn read_pairs(dir: &Path, split: &str) -> Result<AnglePairs> {
    let f = io::read_matrix(dir.join(format!("F_{split}.mat")))?;
    let rotated = io::read_matrix(dir.join(format!("R_{split}.mat")))?;
    let theta = io::read_matrix(dir.join(format!("theta_{split}.mat")))?.into_vec();
    if theta.len() != f.cols() || rotated.shape() != f.shape() {
        return Err(Error::dim(format!("angle pairs in {}", dir.display()), f.cols(), theta.len()));
    }
    Ok(AnglePairs { f, rotated, theta })
}

fn read_fixed(dir: &Path) -> Result<FixedAngleData> {
    let r = |n: &str| io::read_matrix(dir.join(n));
    Ok(FixedAngleData {
        x_train: r("X_train.mat")?,
        y_train: r("Y_train.mat")?,
        x_test: r("X_test.mat")?,
        y_test: r("Y_test.mat")?,
    })
}

pub fn cmd_gen_data(ctx: &Context) -> Result<()> {
    let config_sha256 = ctx.echo()?;
    let task = ctx.config.task;
    let mut manifest = DataManifest {
        task,
        seed: 0,
        config_sha256,
        files: BTreeMap::new(),
    };
    let dir = &ctx.out_dir;
    match task {
        TaskKind::FixedAngle => {
            let t = ctx.fixed_angle();
            manifest.seed = t.seed;
            let d = gen_fixed_angle_dataset(&t)?;
            let files = [
                ("X_train.mat", &d.x_train),
                ("Y_train.mat", &d.y_train),
                ("X_test.mat", &d.x_test),
                ("Y_test.mat", &d.y_test),
            ];
            write_hashed(dir, &files, &mut manifest)?;
        }
        TaskKind::AngleRegression => {
            let t = ctx.angle_regression();
            manifest.seed = t.seed;
            let (train, test) = gen_angle_pairs_dataset(&t)?;
            let (th_train, th_test) = (theta_row(&train.theta), theta_row(&test.theta));
            let files = [
                ("F_train.mat", &train.f),
                ("R_train.mat", &train.rotated),
                ("theta_train.mat", &th_train),
                ("F_test.mat", &test.f),
                ("R_test.mat", &test.rotated),
                ("theta_test.mat", &th_test),
            ];
            write_hashed(dir, &files, &mut manifest)?;
        }
    }
    io::write_json(dir.join("manifest.json"), &manifest)
}

fn task_name(task: TaskKind) -> &'static str {
    match task {
        TaskKind::FixedAngle => "fixed_angle",
        TaskKind::AngleRegression => "angle_regression",
    }
}

/// Runs training and writes `report.json`, `loss.csv`, `timing.json`,
/// `generator.mat` and `checkpoint/`. On divergence a `failure.json` with
/// the failing epoch is written before the error is returned.
pub fn cmd_train(ctx: &Context, data: Option<&Path>, resume: Option<&Path>) -> Result<TrainOutcome> {
    ctx.echo()?;
    let opt = ctx.optimizer();
    let name = task_name(ctx.config.task);
    let resume = resume.map(|p| Checkpoint::load(p, name)).transpose()?;
    let result = match ctx.config.task {
        TaskKind::FixedAngle => {
            let t = ctx.fixed_angle();
            let d = match data {
                Some(dir) => read_fixed(dir)?,
                None => gen_fixed_angle_dataset(&t)?,
            };
            train_fixed_angle_on(&t, &opt, &d, resume)
        }
        TaskKind::AngleRegression => {
            let t = ctx.angle_regression();
            let (train, test) = match data {
                Some(dir) => (read_pairs(dir, "train")?, read_pairs(dir, "test")?),
                None => gen_angle_pairs_dataset(&t)?,
            };
            train_angle_regression_on(&t, &opt, &train, &test, resume)
        }
    };
    match result {
        Ok(outcome) => {
            write_outcome(&outcome, &ctx.out_dir)?;
            io::write_matrix(ctx.out_dir.join("generator.mat"), &outcome.checkpoint.layer.generators[0].materialize()?)?;
            Ok(outcome)
        }
        Err(e) => {
            if let Error::TrainingDiverged { epoch, last_finite_epoch } = &e {
                io::write_json(
                    ctx.out_dir.join("failure.json"),
                    &serde_json::json!({
                        "task": name,
                        "error": e.to_string(),
                        "epoch": epoch,
                        "last_finite_epoch": last_finite_epoch,
                    }),
                )?;
            }
            Err(e)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub test_mse: f64,
    pub epochs_completed: usize,
}

pub fn cmd_eval(ctx: &Context, checkpoint: &Path) -> Result<EvalReport> {
    ctx.echo()?;
    let name = task_name(ctx.config.task);
    let c = Checkpoint::load(checkpoint, name)?;
    let test_mse = match ctx.config.task {
        TaskKind::FixedAngle => {
            let d = gen_fixed_angle_dataset(&ctx.fixed_angle())?;
            let q = c.layer.forward(&d.x_test)?;
            q.sub(&d.y_test)?.sum_of_squares() / q.as_slice().len() as f64
        }
        TaskKind::AngleRegression => {
            let t = ctx.angle_regression();
            let (_, test) = gen_angle_pairs_dataset(&t)?;
            let mut model = AngleModel::init(&t, 0)?;
            let mut flat: Vec<f64> = c.layer.params().iter().flat_map(|p| p.as_slice().to_vec()).collect();
            for n in ["fc1_w", "fc1_b", "fc2_w", "fc2_b"] {
                let m = c
                    .extras
                    .iter()
                    .find(|(k, _)| k == n)
                    .ok_or_else(|| Error::Config(format!("checkpoint is missing '{n}'")))?;
                flat.extend_from_slice(m.1.as_slice());
            }
            model.set_flat_params(&flat)?;
            model.mse(&test)?
        }
    };
    let report = EvalReport {
        task: name.into(),
        test_mse,
        epochs_completed: c.epochs_completed(),
    };
    io::write_json(ctx.out_dir.join("eval.json"), &report)?;
    Ok(report)
}

fn sweep_rows(rows: &[SweepRow]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| vec![r.n as f64, r.eta, r.frobenius_error, r.correlation])
        .collect()
}

const SWEEP_HEADER: [&str; 4] = ["n", "eta", "frobenius_error", "correlation"];

/// Writes `approx.csv`, `orders.json` and, with a d-sweep, one
/// `approx_d{d}.csv` per size. The sweep runs on `threads` workers.
pub fn cmd_approx(ctx: &Context) -> Result<Vec<SweepRow>> {
    ctx.echo()?;
    let a = ctx.config.approx.clone().expect("resolved");
    if a.ns.is_empty() {
        return Err(Error::Config("approx.ns must not be empty".into()));
    }
    let rows = shift_approx_sweep(a.d, a.z, &a.ns)?;
    io::write_csv(ctx.out_dir.join("approx.csv"), &SWEEP_HEADER, &sweep_rows(&rows))?;
    let (single, total) = shift_error_orders(a.d, &a.order_etas, a.z, &a.ns)?;
    io::write_json(
        ctx.out_dir.join("orders.json"),
        &serde_json::json!({ "single_step_order": single, "fixed_total_order": total }),
    )?;
    if !a.d_sweep.is_empty() {
        let threads = ctx.config.threads.unwrap_or(1).min(a.d_sweep.len());
        let chunk = a.d_sweep.len().div_ceil(threads);
        let results: Vec<Result<Vec<(usize, Vec<SweepRow>)>>> = std::thread::scope(|s| {
            let handles: Vec<_> = a
                .d_sweep
                .chunks(chunk)
                .map(|ds| {
                    let (z, ns) = (a.z, &a.ns);
                    s.spawn(move || ds.iter().map(|&d| Ok((d, shift_approx_sweep(d, z, ns)?))).collect())
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
        });
        for part in results {
            for (d, rows) in part? {
                io::write_csv(ctx.out_dir.join(format!("approx_d{d}.csv")), &SWEEP_HEADER, &sweep_rows(&rows))?;
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheorySummary {
    pub max_decomposition_rel_diff: f64,
    pub max_divergence_term: f64,
    pub el_order: f64,
    pub noether_order: f64,
}

/// Writes `helmholtz.csv`, `decomposition.csv` and `theory.json`.
pub fn cmd_theory(ctx: &Context) -> Result<TheorySummary> {
    ctx.echo()?;
    let t = ctx.config.theory.clone().expect("resolved");
    if t.group != "translations" {
        return Err(Error::UnsupportedGroup(format!(
            "theory diagnostics support group = \"translations\" only, got \"{}\"",
            t.group
        )));
    }
    let table = helmholtz_table(t.mass, t.eps, &t.sizes)?;
    let rows: Vec<Vec<f64>> = table
        .iter()
        .map(|r| vec![r.grid_size as f64, r.el_residual, r.noether_divergence])
        .collect();
    io::write_csv(ctx.out_dir.join("helmholtz.csv"), &["grid_size", "el_residual", "noether_divergence"], &rows)?;
    let (el_order, noether_order) = if table.len() >= 2 {
        convergence_orders(&table)
    } else {
        (f64::NAN, f64::NAN)
    };

    let mut rng = SeededRng::new(ctx.config.seed.unwrap_or(0));
    let mut dec_rows = Vec::with_capacity(t.decomposition_instances);
    let (mut worst, mut worst_div) = (0.0f64, 0.0f64);
    for k in 0..t.decomposition_instances {
        let (layer, sample) = symmetric_instance(&mut rng, t.ring_size, t.channels)?;
        let dec = mse_loss_decomposed(&sample, &field_terms(&layer), &sample.translation_generators()?)?;
        let direct = mse_loss_direct(&sample, &layer)?;
        let rel = (dec.total() - direct).abs() / direct.max(1e-300);
        worst = worst.max(rel);
        worst_div = worst_div.max(dec.divergence.abs());
        dec_rows.push(vec![k as f64, direct, dec.total(), rel, dec.divergence]);
    }
    io::write_csv(
        ctx.out_dir.join("decomposition.csv"),
        &["instance", "direct", "decomposed", "rel_diff", "divergence_term"],
        &dec_rows,
    )?;
    let summary = TheorySummary {
        max_decomposition_rel_diff: worst,
        max_divergence_term: worst_div,
        el_order,
        noether_order,
    };
    io::write_json(ctx.out_dir.join("theory.json"), &summary)?;
    Ok(summary)
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Version => {
            let v = version_info();
            println!("{} {}", v.name, v.version);
        }
        Command::GenData(c) => {
            let ctx = Context::new(&c)?;
            cmd_gen_data(&ctx)?;
            println!("dataset written to {}", ctx.out_dir.display());
        }
        Command::Train { common, data, resume } => {
            let ctx = Context::new(&common)?;
            let out = cmd_train(&ctx, data.as_deref(), resume.as_deref())?;
            println!("final test MSE {:.4e}", out.report.final_test_mse);
            for (k, v) in &out.report.metrics {
                println!("{k} {v:.6}");
            }
        }
        Command::Eval { common, checkpoint } => {
            let ctx = Context::new(&common)?;
            let r = cmd_eval(&ctx, &checkpoint)?;
            println!("test MSE {:.4e} after {} epochs", r.test_mse, r.epochs_completed);
        }
        Command::Approx(c) => {
            let ctx = Context::new(&c)?;
            for r in cmd_approx(&ctx)? {
                println!("n={:<4} error {:.4e} corr {:.4}", r.n, r.frobenius_error, r.correlation);
            }
        }
        Command::Theory(c) => {
            let ctx = Context::new(&c)?;
            let s = cmd_theory(&ctx)?;
            println!("decomposition max rel diff {:.3e}", s.max_decomposition_rel_diff);
            println!("divergence term max {:.3e}", s.max_divergence_term);
            println!("EL order {:.3}, Noether order {:.3}", s.el_order, s.noether_order);
        }
    }
    Ok(())
}

//! Command-line front end. Every subcommand is a thin wrapper around the
//! library; exit codes are 0 on success, 1 on usage errors, 2 on bad input
//! or configuration and 3 on numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use csbm_core::csbm::{mask_count, sample_mask_counts};
use csbm_core::{
    ansatz_loss_rate, certify_subset, convolve, gamma_snr, ood_loss_rate, raw_loss_lower_bound,
    sample_csbm, solve_opt, thresholds, CsbmParams, StepMode, TheoryContext, TrainConfig,
};
use serde::Serialize;

use crate::datasets::{binary_task, load_dataset_with, LoadOptions};
use crate::error::{Error, Result};
use crate::experiments::{run_to_dir, ExperimentConfig};
use crate::io::{self, hex, prepare_output, write_dir, Meta};

#[derive(Debug, Parser)]
#[command(name = "csbm", version, about = "Graph convolution and linear separability on the contextual stochastic block model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a CSBM sample and its label mask into a graph directory.
    Sample(SampleArgs),
    /// Replace a directory's features by D⁻¹(A + I)X.
    Convolve(ConvolveArgs),
    /// Fit the norm-constrained logistic classifier on the masked nodes.
    Train(TrainArgs),
    /// Decide strict linear separability with an LP certificate.
    Certify(CertifyArgs),
    /// Run a sweep described by a JSON config.
    Experiment(ExperimentArgs),
    /// Evaluate closed-form quantities.
    #[command(subcommand)]
    Theory(TheoryCommand),
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub q: f64,
    /// Distance between the class means, placed symmetrically on the first axis.
    #[arg(long)]
    pub distance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub beta0: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta1: f64,
    /// Defaults to a seed derived from --seed.
    #[arg(long)]
    pub mask_seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Graph directory.
    #[arg(long)]
    pub input: PathBuf,
    /// Class to separate from the rest when labels are multiclass.
    #[arg(long)]
    pub class_id: Option<u32>,
    /// Scale feature rows to unit L1 norm on load.
    #[arg(long)]
    pub normalize_rows: bool,
}

#[derive(Debug, Args)]
pub struct ConvolveArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StepArg {
    Fixed,
    Backtracking,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Norm bound on w; defaults to d.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Convolve the features before training.
    #[arg(long)]
    pub convolve: bool,
    #[arg(long, value_enum, default_value_t = StepArg::Backtracking)]
    pub step: StepArg,
    #[arg(long, default_value_t = 200_000)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    /// Directory for classifier.json and trace.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SubsetArg {
    Mask,
    All,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = SubsetArg::Mask)]
    pub subset: SubsetArg,
    #[arg(long)]
    pub convolve: bool,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; all cores by default.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum TheoryCommand {
    /// Γ(p, q) = (p - q)/(p + q).
    Gamma {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
    },
    /// Raw and convolved separability scales.
    Thresholds {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        /// Constant of the raw scale K/√d.
        #[arg(long, default_value_t = 1.0)]
        k: f64,
    },
    /// exp(-R·γ·Γ(p, q)) for the mid-point classifier.
    Rate {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        distance: f64,
        #[arg(long)]
        radius: f64,
    },
    /// Lower bound on the raw-feature loss for K = distance·√d.
    LowerBound {
        #[arg(long)]
        k: f64,
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        #[arg(long, default_value_t = 0.5)]
        beta0: f64,
        #[arg(long, default_value_t = 0.5)]
        beta1: f64,
    },
    /// exp(-(R/2)·distance·Γ(p', q')) on shifted test graphs.
    OodRate {
        #[arg(long)]
        distance: f64,
        #[arg(long)]
        radius: f64,
        #[arg(long)]
        p_test: f64,
        #[arg(long)]
        q_test: f64,
    },
}

/// Parses `args` and runs the command, writing results to `out`.
/// Returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match run(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn emit(out: &mut dyn Write, text: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{text}").map_err(Error::io("<stdout>"))
}

pub fn run(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Sample(a) => sample(a, out),
        Command::Convolve(a) => convolve_dir(a, out),
        Command::Train(a) => train(a, out),
        Command::Certify(a) => certify(a, out),
        Command::Experiment(a) => experiment(a, out),
        Command::Theory(t) => theory(t, out),
    }
}

fn sample(a: SampleArgs, out: &mut dyn Write) -> Result<()> {
    if !(a.beta0 > 0.0 && a.beta0 <= 0.5 && a.beta1 > 0.0 && a.beta1 <= 0.5) {
        return Err(Error::Usage("--beta0 and --beta1 must lie in (0, 1/2]".into()));
    }
    let params = CsbmParams::symmetric(a.n, a.d, a.p, a.q, a.distance);
    let drawn = sample_csbm(&params, a.seed)?;
    let mask_seed = a
        .mask_seed
        .unwrap_or_else(|| csbm_core::rng::derive_seed(a.seed, &[2]));
    let (c0, c1) = drawn.class_sizes();
    let counts = [mask_count(a.beta0, a.n).min(c0), mask_count(a.beta1, a.n).min(c1)];
    let drawn = sample_mask_counts(&drawn, counts, mask_seed)?;
    io::save_sample(&a.out, &drawn, a.force)?;
    emit(
        out,
        format_args!(
            "wrote {} (n={}, edges={}, masked={})",
            a.out.display(),
            drawn.n(),
            drawn.adjacency.edge_count(),
            drawn.mask.len()
        ),
    )
}

fn convolve_dir(a: ConvolveArgs, out: &mut dyn Write) -> Result<()> {
    let ds = load_dataset_with(&a.input, &LoadOptions::default())?;
    let conv = convolve(&ds.adjacency, &ds.features)?;
    let mut meta = ds.meta.clone().unwrap_or(Meta {
        n: ds.n(),
        d: ds.d(),
        ..Meta::default()
    });
    meta.convolved = true;
    meta.source_graph_hash = Some(hex(&conv.source_graph_hash));
    write_dir(&a.out, &ds.labels, &ds.adjacency, &conv.values, &ds.mask, &meta, a.force)?;
    emit(out, format_args!("wrote {}", a.out.display()))
}

fn load_task(input: &InputArgs) -> Result<crate::datasets::BinaryTask> {
    let options = LoadOptions {
        normalize_rows: input.normalize_rows,
    };
    let ds = load_dataset_with(&input.input, &options)?;
    binary_task(&ds, input.class_id)
}

#[derive(Serialize)]
struct ClassifierFile<'a> {
    w: &'a [f64],
    b: f64,
    radius: f64,
    converged: bool,
    iterations: usize,
    train_loss: f64,
    train_error: f64,
    convolved: bool,
    class_id: u32,
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let task = load_task(&a.input)?;
    if task.mask.is_empty() {
        return Err(Error::Config(format!("{} has no labelled nodes", a.input.input.display())));
    }
    let features = if a.convolve {
        convolve(&task.adjacency, &task.features)?.values
    } else {
        task.features.clone()
    };
    let radius = a.radius.unwrap_or(features.cols() as f64);
    let mut config = TrainConfig::new(radius).with_step_mode(match a.step {
        StepArg::Fixed => StepMode::Fixed,
        StepArg::Backtracking => StepMode::Backtracking,
    });
    config.max_iterations = a.max_iterations;
    config.tolerance = a.tolerance;
    config.validate().map_err(|e| Error::Usage(e.to_string()))?;

    prepare_output(&a.out, &["classifier.json", "trace.csv"], a.force)?;
    let solution = solve_opt(&features, &task.labels, &task.mask, &config)?;
    let c = &solution.classifier;
    let train_error = c.error_rate(&features, &task.labels, &task.mask);

    let mut trace = csv::Writer::from_path(a.out.join("trace.csv"))?;
    trace.write_record(["iteration", "loss", "grad_norm", "w_norm"])?;
    for t in &solution.trace {
        trace.write_record([
            t.iteration.to_string(),
            t.loss.to_string(),
            t.grad_norm.to_string(),
            t.w_norm.to_string(),
        ])?;
    }
    trace.flush().map_err(Error::io(a.out.join("trace.csv")))?;

    let file = ClassifierFile {
        w: &c.w,
        b: c.b,
        radius,
        converged: solution.converged,
        iterations: solution.trace.len().saturating_sub(1),
        train_loss: solution.final_loss(),
        train_error,
        convolved: a.convolve,
        class_id: task.class_id,
    };
    let mut json = serde_json::to_string_pretty(&file)?;
    json.push('\n');
    let path = a.out.join("classifier.json");
    std::fs::write(&path, json).map_err(Error::io(&path))?;
    emit(
        out,
        format_args!(
            "loss={} error={} converged={} w_norm={}",
            solution.final_loss(),
            train_error,
            solution.converged,
            c.w_norm()
        ),
    )
}

fn certify(a: CertifyArgs, out: &mut dyn Write) -> Result<()> {
    let task = load_task(&a.input)?;
    let features = if a.convolve {
        convolve(&task.adjacency, &task.features)?.values
    } else {
        task.features.clone()
    };
    let nodes: Vec<usize> = match a.subset {
        SubsetArg::Mask => task.mask.clone(),
        SubsetArg::All => (0..task.n()).collect(),
    };
    if nodes.is_empty() {
        return Err(Error::Config("no nodes to certify; the mask is empty".into()));
    }
    let cert = certify_subset(&features, &task.labels, &nodes)?;
    if cert.separable {
        emit(out, format_args!("separable=true margin={}", cert.margin))
    } else {
        emit(out, "separable=false")
    }
}

fn experiment(a: ExperimentArgs, out: &mut dyn Write) -> Result<()> {
    let mut config = ExperimentConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if a.jobs == Some(0) {
        return Err(Error::Usage("--jobs must be at least 1".into()));
    }
    let manifest = run_to_dir(&config, &a.out, a.jobs, a.force)?;
    emit(
        out,
        format_args!(
            "{}: {} rows in {:.1}s -> {}",
            manifest.experiment,
            manifest.rows,
            manifest.wall_time_seconds,
            a.out.display()
        ),
    )
}

fn domain(e: csbm_core::Error) -> Error {
    Error::Usage(e.to_string())
}

fn theory(t: TheoryCommand, out: &mut dyn Write) -> Result<()> {
    match t {
        TheoryCommand::Gamma { p, q } => emit(out, gamma_snr(p, q).map_err(domain)?),
        TheoryCommand::Thresholds { n, d, p, q, k } => {
            let params = CsbmParams::symmetric(n, d, p, q, 0.0);
            let t = thresholds(&TheoryContext::new(params, d as f64, 0.5, 0.5), k);
            emit(out, format_args!("raw_scale={}", t.raw_scale))?;
            emit(out, format_args!("convolved_lower={}", t.convolved_lower))?;
            emit(out, format_args!("convolved_upper={}", t.convolved_upper))?;
            emit(out, format_args!("convolved_lower_unhalved={}", t.convolved_lower_unhalved))?;
            emit(out, format_args!("convolved_upper_unhalved={}", t.convolved_upper_unhalved))
        }
        TheoryCommand::Rate { p, q, distance, radius } => {
            let params = CsbmParams::symmetric(2, 1, p, q, distance);
            let rate = ansatz_loss_rate(&TheoryContext::new(params, radius, 0.5, 0.5)).map_err(domain)?;
            emit(out, rate)
        }
        TheoryCommand::LowerBound { k, t, beta0, beta1 } => emit(out, raw_loss_lower_bound(k, t, beta0, beta1)),
        TheoryCommand::OodRate {
            distance,
            radius,
            p_test,
            q_test,
        } => {
            let mu = [-distance / 2.0];
            let nu = [distance / 2.0];
            emit(out, ood_loss_rate(radius, &mu, &nu, p_test, q_test).map_err(domain)?)
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Unlocked handles: worker threads log to stderr while a command runs.
    main_with(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr())
}

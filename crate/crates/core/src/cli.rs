//! Batch command-line surface. [`run`] is the whole program; the binary only
//! forwards process arguments and streams to it.

use std::error::Error;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};

use crate::datagen::{make_denoise_dataset, pixel_error, BaseImage, BitImage, DenoiseSpec, NoiseModel, Tying};
use crate::inference::Tempering;
use crate::io::{parse_counts, parse_labels, parse_model_bytes, parse_weights, write_labels, ModelFile, WeightsFile};
use crate::learner::{predict, train_with, Counting, IterationLog, LineSearch, Problem, TrainStatus, TrainerConfig};
use crate::model::{CountingNumbers, CountingScheme, ValidationReport};

type CliResult<T> = Result<T, Box<dyn Error>>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "blendsp", version, about = "Blended learning and inference for region-graph models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a noisy binary-image denoising corpus.
    GenDenoise(GenArgs),
    /// Train weights on a model file.
    Train(TrainArgs),
    /// Decode labels for every sample of a model file.
    Infer(InferArgs),
    /// Compare predicted labels with ground truth.
    Eval(EvalArgs),
    /// Report primal, dual and duality gap at fixed weights.
    Gap(GapArgs),
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("noise").required(true).args(["flip_prob", "gaussian_sigma", "bimodal"])))]
struct GenArgs {
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    #[arg(long)]
    flip_prob: Option<f64>,
    #[arg(long)]
    gaussian_sigma: Option<f64>,
    /// Two-component Gaussian mixture per class with the default parameters.
    #[arg(long)]
    bimodal: bool,
    #[arg(long, default_value_t = 10)]
    num_train: usize,
    #[arg(long, default_value_t = 10)]
    num_test: usize,
    #[arg(long, default_value = "full")]
    tying: Tying,
    /// Base image as rows of 0/1 characters; overrides --pattern.
    #[arg(long)]
    base_image: Option<PathBuf>,
    #[arg(long, default_value = "cross", value_parser = ["cross", "random"])]
    pattern: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CountArgs {
    /// Defaults to `file` when the model has a COUNTS section, else `ones`.
    #[arg(long)]
    c_scheme: Option<CountingScheme>,
    #[arg(long)]
    c_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long = "C", default_value_t = 1.0)]
    c_reg: f64,
    #[command(flatten)]
    counts: CountArgs,
    #[arg(long, default_value_t = 1)]
    sweeps_per_step: usize,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    /// Relative primal decrease threshold.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    residual_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    grad_tol: f64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    /// Defaults to the training temperature recorded in the weights file.
    #[arg(long)]
    eps_infer: Option<f64>,
    #[command(flatten)]
    counts: CountArgs,
    #[arg(long, default_value_t = 1000)]
    max_sweeps: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct GapArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long = "C")]
    c_reg: Option<f64>,
    #[command(flatten)]
    counts: CountArgs,
    /// Inference sweeps at fixed weights before reporting; 0 keeps fresh messages.
    #[arg(long, default_value_t = 1000)]
    max_sweeps: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    let result = match cli.command {
        Command::GenDenoise(a) => gen_denoise(a, out),
        Command::Train(a) => train_cmd(a, out, err),
        Command::Infer(a) => infer_cmd(a, out),
        Command::Eval(a) => eval_cmd(a, out),
        Command::Gap(a) => gap_cmd(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn read_text(path: &Path) -> CliResult<String> {
    String::from_utf8(read(path)?).map_err(|_| format!("{}: invalid UTF-8", path.display()).into())
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn load_model(path: &Path) -> CliResult<(ModelFile, ValidationReport)> {
    parse_model_bytes(&read(path)?).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn load_weights(path: &Path, feature_count: usize) -> CliResult<WeightsFile> {
    parse_weights(&read_text(path)?, feature_count).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn resolve_counting(args: &CountArgs, file: &ModelFile, fallback: Option<CountingScheme>) -> CliResult<Counting> {
    let scheme = args
        .c_scheme
        .or(args.c_file.as_ref().map(|_| CountingScheme::File))
        .or(file.counts.as_ref().map(|_| CountingScheme::File))
        .or(fallback)
        .unwrap_or(CountingScheme::Ones);
    Ok(match scheme {
        CountingScheme::Ones => Counting::Ones,
        CountingScheme::Bethe => Counting::Bethe,
        CountingScheme::File => {
            let counts = match (&args.c_file, &file.counts) {
                (Some(path), _) => parse_counts(&read_text(path)?, file.model.graph())
                    .map_err(|e| format!("{}: {e}", path.display()))?,
                (None, Some(c)) => c.clone(),
                (None, None) => return Err("c-scheme file needs --c-file or a COUNTS section in the model".into()),
            };
            Counting::Explicit(counts.values().to_vec())
        }
    })
}

fn gen_denoise(a: GenArgs, out: &mut dyn Write) -> CliResult<i32> {
    let noise = match (a.flip_prob, a.gaussian_sigma, a.bimodal) {
        (Some(p), None, false) => NoiseModel::Flip(p),
        (None, Some(s), false) => NoiseModel::Gaussian(s),
        (None, None, true) => NoiseModel::bimodal_default(),
        _ => return Err("exactly one noise model must be selected".into()),
    };
    let base = match (&a.base_image, a.pattern.as_str()) {
        (Some(path), _) => BaseImage::Provided(BitImage::parse(&read_text(path)?).map_err(|e| format!("{}: {e}", path.display()))?),
        (None, "random") => BaseImage::Random,
        (None, _) => BaseImage::Cross,
    };
    let spec = DenoiseSpec {
        width: a.width,
        height: a.height,
        noise,
        num_train: a.num_train,
        num_test: a.num_test,
        base,
        tying: a.tying,
        seed: a.seed,
    };
    let data = make_denoise_dataset(&spec)?;
    fs::create_dir_all(&a.out).map_err(|e| format!("{}: {e}", a.out.display()))?;
    let graph = data.model.graph();
    let train = ModelFile {
        model: data.model.clone(),
        samples: data.train.clone(),
        counts: None,
    };
    let test = ModelFile {
        model: data.model.clone(),
        samples: data.test.clone(),
        counts: None,
    };
    let truth: Vec<(usize, Vec<usize>)> = data.test.iter().map(|s| (s.id, s.variable_truth(graph))).collect();
    let paths = [
        ("train.bsp", train.to_text()),
        ("test.bsp", test.to_text()),
        ("test_truth.labels", write_labels(&truth)),
        ("base.txt", data.base.to_string()),
    ];
    writeln!(out, "seed={}", a.seed)?;
    writeln!(
        out,
        "grid {}x{}: {} singleton + {} pairwise regions, {} edges",
        a.width,
        a.height,
        data.singleton_count(),
        data.pairwise_count(),
        graph.edges().len()
    )?;
    writeln!(out, "features={} tying={}", data.model.feature_count(), a.tying)?;
    writeln!(out, "train={} test={}", data.train.len(), data.test.len())?;
    for (name, text) in &paths {
        let path = a.out.join(name);
        write_file(&path, text)?;
        writeln!(out, "wrote {}", path.display())?;
    }
    Ok(EXIT_OK)
}

fn train_cmd(a: TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<i32> {
    let (file, report) = load_model(&a.model)?;
    let counting = resolve_counting(&a.counts, &file, None)?;
    writeln!(out, "seed={}", a.seed)?;
    for w in &report.warnings {
        writeln!(err, "warning: {w}")?;
    }
    if counting.scheme() == CountingScheme::Bethe {
        writeln!(err, "warning: bethe counting numbers run in non-convex mode; the upper bound is not guaranteed")?;
    }
    let config = TrainerConfig {
        eps: a.eps,
        c_reg: a.c_reg,
        counting,
        sweeps_per_step: a.sweeps_per_step,
        max_outer_iters: a.max_iters,
        primal_rel_tol: a.tol,
        residual_tol: a.residual_tol,
        grad_norm_tol: a.grad_tol,
        line_search: LineSearch::default(),
        worker_count: a.threads,
        seed: a.seed,
    };
    let mut log = String::new();
    if a.log.is_some() {
        log.push_str(IterationLog::HEADER);
        log.push('\n');
    }
    let state = train_with(&file.model, &file.samples, &config, None, |entry| {
        if a.log.is_some() {
            log.push_str(&entry.to_string());
            log.push('\n');
        }
    })?;
    if let Some(path) = &a.log {
        write_file(path, &log)?;
    }
    let weights = WeightsFile {
        weights: state.w.clone(),
        eps: a.eps,
        c_reg: a.c_reg,
        scheme: config.counting.scheme(),
    };
    write_file(&a.out, &weights.to_text())?;

    let status = match state.status {
        TrainStatus::Converged => "converged",
        TrainStatus::MaxIterations => "max-iters",
        TrainStatus::Stalled => "stalled",
    };
    writeln!(out, "status={status}")?;
    writeln!(out, "iterations={}", state.iterations)?;
    write!(out, "{}", state.report)?;
    if a.eps == 0.0 {
        writeln!(out, "gap uncertified (eps = 0: optimality cannot be certified)")?;
    } else if !state.report.certified {
        writeln!(out, "gap uncertified")?;
    }
    Ok(if state.converged() { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn infer_cmd(a: InferArgs, out: &mut dyn Write) -> CliResult<i32> {
    let (file, _) = load_model(&a.model)?;
    let weights = load_weights(&a.weights, file.model.feature_count())?;
    let counting = resolve_counting(&a.counts, &file, Some(weights.scheme).filter(|s| *s != CountingScheme::File))?;
    let counts: CountingNumbers = counting.resolve(file.model.graph())?;
    let eps = a.eps_infer.unwrap_or(weights.eps);
    writeln!(out, "seed={}", a.seed)?;
    writeln!(out, "eps_infer={eps} scheme={}", counts.scheme())?;
    let mut labels = Vec::new();
    for s in &file.samples {
        let p = predict(&file.model, s, &weights.weights, eps, &counts, a.max_sweeps, a.tol);
        writeln!(out, "sample={} residual={} sweeps={}", s.id, p.residual, p.sweeps)?;
        labels.push((s.id, p.labels));
    }
    write_file(&a.out, &write_labels(&labels))?;
    Ok(EXIT_OK)
}

fn eval_cmd(a: EvalArgs, out: &mut dyn Write) -> CliResult<i32> {
    let parse = |path: &Path| -> CliResult<Vec<(usize, Vec<usize>)>> {
        parse_labels(&read_text(path)?).map_err(|e| format!("{}: {e}", path.display()).into())
    };
    let pred = parse(&a.pred)?;
    let truth = parse(&a.truth)?;
    let mut aligned = Vec::with_capacity(truth.len());
    for (id, _) in &truth {
        let p = pred
            .iter()
            .find(|(pid, _)| pid == id)
            .ok_or_else(|| format!("dimension mismatch: no prediction for sample {id}"))?;
        aligned.push(p.1.clone());
    }
    if pred.len() != truth.len() {
        return Err(format!("dimension mismatch: {} predictions, {} ground-truth samples", pred.len(), truth.len()).into());
    }
    let truth: Vec<Vec<usize>> = truth.into_iter().map(|(_, l)| l).collect();
    let e = pixel_error(&aligned, &truth)?;
    writeln!(out, "seed={}", a.seed)?;
    writeln!(out, "{e}")?;
    Ok(EXIT_OK)
}

fn gap_cmd(a: GapArgs, out: &mut dyn Write) -> CliResult<i32> {
    let (file, _) = load_model(&a.model)?;
    let weights = load_weights(&a.weights, file.model.feature_count())?;
    let counting = resolve_counting(&a.counts, &file, Some(weights.scheme).filter(|s| *s != CountingScheme::File))?;
    let counts = counting.resolve(file.model.graph())?;
    let eps = a.eps.unwrap_or(weights.eps);
    let c_reg = a.c_reg.unwrap_or(weights.c_reg);
    if !(eps.is_finite() && eps >= 0.0 && c_reg.is_finite() && c_reg >= 0.0) {
        return Err("eps and C must be finite and nonnegative".into());
    }
    let problem = Problem::new(&file.model, &file.samples, Tempering::new(eps, &counts), c_reg);
    let mut states: Vec<_> = file
        .samples
        .iter()
        .map(|_| crate::inference::MessageState::new(file.model.graph()))
        .collect();
    let w = &weights.weights;
    let mut sweeps = 0;
    while sweeps < a.max_sweeps {
        problem.sweep(w, &mut states, 1);
        sweeps += 1;
        if problem.report(w, &states).marginal_residual < a.tol {
            break;
        }
    }
    let report = problem.report(w, &states);
    writeln!(out, "seed={}", a.seed)?;
    writeln!(out, "sweeps={sweeps}")?;
    write!(out, "{report}")?;
    if !report.certified {
        writeln!(out, "gap uncertified")?;
    }
    Ok(EXIT_OK)
}

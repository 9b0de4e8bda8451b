mod plot;
mod report;

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tubescreen::detector::{self, DetectError, FitConfig, FitMode};
use tubescreen::metrics::{self, MetricsError};
use tubescreen::pca::PcaError;
use tubescreen::store::{self, StoreError};
use tubescreen::synth::{self, SynthConfig, SynthError};
use tubescreen::tube::{TubeConfig, TubeVariant};

/// Directory inside a model container holding the validation bank.
const BANK_DIR: &str = "bank";

#[derive(Parser)]
#[command(
    name = "tubescreen",
    version,
    about = "Screen inputs by their layerwise rank trajectories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic validation bundle, test bundle and ground truth.
    Gen(GenArgs),
    /// Fit a detector on a validation bundle.
    Fit(FitArgs),
    /// Score a test bundle with a fitted detector.
    Score(ScoreArgs),
    /// Compute AUROC and F1 from scores and ground truth.
    Eval(EvalArgs),
    /// Write the ROC curve and trajectory plots.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 12)]
    layers: usize,
    /// Ambient dimension of every layer.
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    intrinsic_dim: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 2.0)]
    drift: f64,
    /// Four comma-separated phase lengths; defaults to an even split.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    phases: Option<Vec<usize>>,
    #[arg(long, default_value_t = 5)]
    per_class: usize,
    #[arg(long, default_value_t = 200)]
    n_clean: usize,
    #[arg(long, default_value_t = 200)]
    n_poisoned: usize,
    #[arg(long, default_value_t = 0)]
    source: usize,
    #[arg(long, default_value_t = 1)]
    target: usize,
    #[arg(long, default_value_t = 0.0)]
    missing_fraction: f64,
    #[arg(long, default_value_t = 0.5)]
    extent: f64,
    #[arg(long, default_value_t = 0.5)]
    separation: f64,
    /// Zero drift with all layers in the first phase.
    #[arg(long)]
    null: bool,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    validation: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = TubeVariant::Pairwise)]
    variant: TubeVariant,
    #[arg(long, default_value_t = 0.95)]
    var_ratio: f64,
    #[arg(long, default_value_t = 0.95)]
    fpr_quantile: f64,
    /// Rank each validation sample with its own row removed.
    #[arg(long)]
    leave_one_out: bool,
    /// Project trajectories without centring them.
    #[arg(long)]
    uncentered: bool,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Validation bundle to rank against; defaults to the copy inside the model.
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Worker threads; output order does not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Metrics CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "svg", value_parser = ["svg"])]
    format: String,
}

#[derive(Debug)]
struct CliError {
    code: u8,
    kind: &'static str,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            kind: "usage",
            message: message.into(),
        }
    }

    fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self {
            code: 3,
            kind: "io",
            message: format!("{}: {e}", path.display()),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: 4,
            kind: "data",
            message: message.into(),
        }
    }

    fn numeric(message: impl Into<String>) -> Self {
        Self {
            code: 5,
            kind: "numeric",
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    /// One line: `error code=<n> kind=<kind> message=<json string>`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = serde_json::to_string(&self.message).expect("string serialises");
        write!(f, "error code={} kind={} message={msg}", self.code, self.kind)
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io { .. } => Self {
                code: 3,
                kind: "io",
                message: e.to_string(),
            },
            other => Self::data(other.to_string()),
        }
    }
}

impl From<DetectError> for CliError {
    fn from(e: DetectError) -> Self {
        match e {
            DetectError::Store(s) => s.into(),
            DetectError::InvalidConfig(_) => Self::usage(e.to_string()),
            DetectError::Pca(PcaError::NoConvergence | PcaError::NonFinite) => Self::numeric(e.to_string()),
            other => Self::data(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Store(s) => s.into(),
            SynthError::Infeasible(_) => Self::usage(e.to_string()),
            other => Self::data(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        Self::data(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let body = text.split("\n\nUsage:").next().unwrap_or(&text);
            let body = body.split("\n\nFor more").next().unwrap_or(body);
            let line: Vec<&str> = body.split_whitespace().collect();
            eprintln!("{}", CliError::usage(line.join(" ").trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Score(a) => cmd_score(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Plot(a) => cmd_plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let phases = match a.phases {
        Some(p) => [p[0], p[1], p[2], p[3]],
        None => {
            let q = a.layers / 4;
            let r = a.layers % 4;
            // Leftover layers go to the middle phases first.
            [
                q,
                q + usize::from(r > 1),
                q + usize::from(r > 0),
                q + usize::from(r > 2),
            ]
        }
    };
    let mut cfg = SynthConfig {
        num_classes: a.classes,
        dims: vec![a.dim; a.layers],
        intrinsic_dim: a.intrinsic_dim,
        tube_noise: a.noise,
        drift: a.drift,
        phases,
        per_class: a.per_class,
        n_clean: a.n_clean,
        n_poisoned: a.n_poisoned,
        source: a.source,
        target: a.target,
        missing_fraction: a.missing_fraction,
        extent: a.extent,
        separation: a.separation,
        seed: a.seed,
    };
    if a.null {
        cfg = cfg.null();
    }
    let data = synth::generate(&cfg)?;
    synth::write_synth(&data, &cfg, &a.out)?;
    log::info!(
        "wrote {} validation and {} test samples to {}",
        data.validation.num_samples(),
        data.test.num_samples(),
        a.out.display()
    );
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let cfg = FitConfig {
        tube: TubeConfig::new(a.beta, a.variant).map_err(|e| CliError::usage(e.to_string()))?,
        var_ratio: a.var_ratio,
        fpr_quantile: a.fpr_quantile,
        mode: if a.leave_one_out {
            FitMode::LeaveOneOut
        } else {
            FitMode::SelfInclusive
        },
        centered: !a.uncentered,
        ..FitConfig::default()
    };
    cfg.validate()?;
    let bundle = store::load_bundle(&a.validation)?;
    let bank = store::build_bank(bundle)?;
    let model = detector::fit(&bank, &cfg)?;
    detector::save_model(&model, &a.out)?;
    store::write_bundle(bank.bundle(), &a.out.join(BANK_DIR))?;
    log::info!(
        "fit {} components on {} validation samples, theta {}",
        model.num_components(),
        bank.len(),
        model.theta
    );
    Ok(())
}

fn cmd_score(a: ScoreArgs) -> Result<()> {
    let model = detector::load_model(&a.model)?;
    let bank_dir = a.bank.clone().unwrap_or_else(|| a.model.join(BANK_DIR));
    let bank = store::build_bank(store::load_bundle(&bank_dir)?)?;
    let test = store::load_bundle(&a.test)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = a.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be positive"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::usage(e.to_string()))?;
    let reports = pool.install(|| detector::score_batch(&model, &test, &bank))?;
    let failed = reports.iter().filter(|r| r.outcome.is_err()).count();
    for r in reports.iter() {
        if let Err(e) = &r.outcome {
            log::warn!("sample {} not scored: {e}", r.index);
        }
    }
    let mut out = create(&a.out)?;
    report::write_scores(&reports, &model.layer_names, &mut out).map_err(|e| CliError::io(&a.out, e))?;
    out.flush().map_err(|e| CliError::io(&a.out, e))?;
    if failed > 0 {
        log::warn!("{failed} of {} samples could not be scored", reports.len());
    }
    Ok(())
}

fn load_inputs(scores: &Path, truth: &Path) -> Result<(Vec<String>, Vec<report::ScoreRow>, Vec<bool>)> {
    let (layers, rows) =
        report::read_scores(open(scores)?).map_err(|e| CliError::data(format!("{}: {e}", scores.display())))?;
    let is_poisoned =
        synth::read_ground_truth(open(truth)?).map_err(|e| CliError::data(format!("{}: {e}", truth.display())))?;
    if rows.len() != is_poisoned.len() {
        return Err(CliError::data(format!(
            "{} score rows but {} ground-truth rows",
            rows.len(),
            is_poisoned.len()
        )));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(i, r)| r.index != *i) {
        return Err(CliError::data(format!("score row {i} has index {}", r.index)));
    }
    if let Some(r) = rows.iter().find(|r| !r.error.is_finite()) {
        return Err(CliError::data(format!("sample {} has no finite score", r.index)));
    }
    Ok((layers, rows, is_poisoned))
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let (_, rows, is_poisoned) = load_inputs(&a.scores, &a.truth)?;
    let scores: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let flags: Vec<bool> = rows.iter().map(|r| r.flagged).collect();
    let result = metrics::evaluate(&scores, &flags, &is_poisoned)?;
    match &a.out {
        Some(path) => {
            let mut out = create(path)?;
            result.write_csv(&mut out).map_err(|e| CliError::io(path, e))?;
            out.flush().map_err(|e| CliError::io(path, e))?;
        }
        None => {
            let stdout = std::io::stdout();
            result
                .write_csv(stdout.lock())
                .map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
        }
    }
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let (layers, rows, is_poisoned) = load_inputs(&a.scores, &a.truth)?;
    let scores: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let roc = metrics::roc_curve(&scores, &is_poisoned)?;
    let auroc = metrics::auroc(&scores, &is_poisoned)?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let roc_path = a.out.join("roc.csv");
    let mut out = create(&roc_path)?;
    metrics::write_roc_csv(&roc, &mut out).map_err(|e| CliError::io(&roc_path, e))?;
    out.flush().map_err(|e| CliError::io(&roc_path, e))?;
    let trajectories: Vec<Vec<usize>> = rows.into_iter().map(|r| r.ranks).collect();
    let svg = plot::render(&roc, auroc, &layers, &trajectories, &is_poisoned);
    let svg_path = a.out.join(format!("plot.{}", a.format));
    fs::write(&svg_path, svg).map_err(|e| CliError::io(&svg_path, e))?;
    Ok(())
}

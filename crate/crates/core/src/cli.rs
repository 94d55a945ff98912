//! Command-line front end.
//!
//! Exit codes: 0 success (including `--help`), 1 usage error, 2 data error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::attack::{self, AttackConfig, DEFAULT_EPSILONS, DEFAULT_SEED};
use crate::eval::{self, ConfusionMatrix, MetricsReport, PositiveClass};
use crate::features;
use crate::frame_io::{self, DatasetManifest, MANIFEST_FILE};
use crate::isoforest::{self, ForestParams, IsoForest};
use crate::parallel;
use crate::pipeline::{self, DetectionRecord, Mode, StreamConfig, DETECTIONS_FILE};
use crate::report;
use crate::rng::SplitMix64;
use crate::tinynet::{self, ModelInput, ModelParams, INPUT_LEN};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

pub const DATASET_DIR: &str = "dataset";
pub const DETECT_DIR: &str = "detect";
pub const REPORT_DIR: &str = "report";
pub const FILTERED_DIR: &str = "filtered";
pub const METRICS_FILE: &str = "metrics.json";
pub const FEATURES_FILE: &str = "features.csv";
pub const FOREST_FILE: &str = "forest.isof";

#[derive(Debug, Parser)]
#[command(
    name = "advfilter",
    version,
    about = "Generate FGSM-perturbed video frames and filter them with an isolation forest"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decode a Y4M video into PPM frames plus manifest.json
    Extract(ExtractArgs),
    /// Write FGSM-perturbed copies of every clean frame of a dataset
    Attack(AttackArgs),
    /// Score a dataset and write detections.csv and the filtered frames
    Detect(DetectArgs),
    /// Confusion matrix and metrics from detections.csv
    Eval(EvalArgs),
    /// Render the result charts and decorated frames
    Report(ReportArgs),
    /// extract, attack, detect, eval and report into one output tree
    RunAll(RunAllArgs),
    /// Run the built-in oracle checks
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
struct WorkerArgs {
    /// Worker threads [default: available cores]
    #[arg(long, env = "ADVFILTER_WORKERS")]
    workers: Option<usize>,
}

impl WorkerArgs {
    fn resolve(&self) -> usize {
        self.workers.unwrap_or_else(parallel::default_workers)
    }
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Input .y4m file
    #[arg(long)]
    input: PathBuf,
    /// Output dataset directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AttackOpts {
    /// Model seed
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Comma-separated perturbation budgets
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_EPSILONS.to_vec())]
    epsilons: Vec<f64>,
    /// Keep one entry per frame, attacking this seeded fraction of them
    #[arg(long)]
    attack_fraction: Option<f64>,
}

#[derive(Debug, Args)]
struct AttackArgs {
    /// Dataset directory containing manifest.json
    #[arg(long)]
    input: PathBuf,
    /// Output dataset directory (may equal --input)
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    attack: AttackOpts,
    #[command(flatten)]
    workers: WorkerArgs,
}

#[derive(Debug, Args)]
struct DetectOpts {
    /// Expected fraction of attacked frames
    #[arg(long, default_value_t = isoforest::DEFAULT_CONTAMINATION)]
    contamination: f64,
    /// batch or stream
    #[arg(long, default_value = "batch")]
    mode: Mode,
    /// Presumed-clean frames used to fit in stream mode
    #[arg(long, default_value_t = pipeline::DEFAULT_WARMUP)]
    warmup: usize,
    /// Refit on the trailing window every N frames (stream mode)
    #[arg(long)]
    refit_every: Option<usize>,
    /// Trees in the forest
    #[arg(long, default_value_t = isoforest::DEFAULT_TREES)]
    trees: usize,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Dataset directory containing manifest.json
    #[arg(long)]
    input: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Forest seed
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[command(flatten)]
    detect: DetectOpts,
    #[command(flatten)]
    workers: WorkerArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// detections.csv to evaluate
    #[arg(long)]
    detections: PathBuf,
    /// attacked or clean
    #[arg(long, default_value = "attacked")]
    positive: PositiveClass,
    /// Directory for metrics.json
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// detections.csv to plot
    #[arg(long)]
    detections: PathBuf,
    /// Output directory for the charts
    #[arg(long)]
    out: PathBuf,
    /// Dataset directory; when given, decorated frames are written too
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    workers: WorkerArgs,
}

#[derive(Debug, Args)]
struct RunAllArgs {
    /// Input .y4m file
    #[arg(long)]
    input: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    attack: AttackOpts,
    #[command(flatten)]
    detect: DetectOpts,
    /// attacked or clean
    #[arg(long, default_value = "attacked")]
    positive: PositiveClass,
    #[command(flatten)]
    workers: WorkerArgs,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

/// A failure tied to input data rather than to the command line.
struct DataError(String);

impl<E: std::fmt::Display> From<E> for DataError {
    fn from(e: E) -> Self {
        DataError(e.to_string())
    }
}

type Outcome = Result<(), DataError>;

fn check_attack(opts: &AttackOpts, problems: &mut Vec<String>) {
    let cfg = AttackConfig::with_epsilons(opts.epsilons.clone(), opts.seed);
    if let Err(e) = cfg.validate() {
        problems.push(format!("--epsilons: {e}"));
    }
    if let Some(f) = opts.attack_fraction {
        if !(0.0..=1.0).contains(&f) {
            problems.push(format!("--attack-fraction: {f} is outside [0, 1]"));
        }
    }
}

fn check_detect(opts: &DetectOpts, problems: &mut Vec<String>) {
    if !(opts.contamination > 0.0 && opts.contamination <= 0.5) {
        problems.push(format!(
            "--contamination: {} is outside (0, 0.5]",
            opts.contamination
        ));
    }
    if opts.mode == Mode::Stream && opts.warmup < 2 {
        problems.push(format!(
            "--warmup: {} is too short (need at least 2)",
            opts.warmup
        ));
    }
    if opts.refit_every == Some(0) {
        problems.push("--refit-every: must be positive".into());
    }
    if opts.trees == 0 {
        problems.push("--trees: must be positive".into());
    }
}

fn check_workers(w: &WorkerArgs, problems: &mut Vec<String>) {
    if w.workers == Some(0) {
        problems.push("--workers: must be at least 1".into());
    }
}

fn validate(cmd: &Command) -> Vec<String> {
    let mut p = Vec::new();
    match cmd {
        Command::Extract(_) | Command::Eval(_) | Command::Selftest(_) => {}
        Command::Attack(a) => {
            check_attack(&a.attack, &mut p);
            check_workers(&a.workers, &mut p);
        }
        Command::Detect(a) => {
            check_detect(&a.detect, &mut p);
            check_workers(&a.workers, &mut p);
        }
        Command::Report(a) => check_workers(&a.workers, &mut p),
        Command::RunAll(a) => {
            check_attack(&a.attack, &mut p);
            check_detect(&a.detect, &mut p);
            check_workers(&a.workers, &mut p);
        }
    }
    p
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return EXIT_OK;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                let _ = write!(err, "{}", e.render());
                return EXIT_USAGE;
            }
            let text = e.render().to_string();
            let line = text
                .lines()
                .find(|l| l.starts_with("error:"))
                .unwrap_or("error: invalid arguments");
            let _ = writeln!(err, "{line}");
            return EXIT_USAGE;
        }
    };
    let problems = validate(&cli.command);
    if !problems.is_empty() {
        for p in problems {
            let _ = writeln!(err, "error: {p}");
        }
        return EXIT_USAGE;
    }
    let result = match cli.command {
        Command::Extract(a) => cmd_extract(&a, out, err),
        Command::Attack(a) => cmd_attack(&a, out, err),
        Command::Detect(a) => cmd_detect(&a, out, err),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Report(a) => cmd_report(&a, out, err),
        Command::RunAll(a) => cmd_run_all(&a, out, err),
        Command::Selftest(a) => return cmd_selftest(&a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(DataError(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_DATA
        }
    }
}

fn log_header(err: &mut dyn Write, command: &str, seed: Option<u64>, workers: Option<usize>) {
    let mut line = format!("advfilter {} {command}", env!("CARGO_PKG_VERSION"));
    if let Some(s) = seed {
        line.push_str(&format!(" seed={s}"));
    }
    if let Some(w) = workers {
        line.push_str(&format!(" workers={w}"));
    }
    let _ = writeln!(err, "{line}");
}

fn extract(input: &Path, out_dir: &Path) -> Result<DatasetManifest, DataError> {
    let bytes = std::fs::read(input).map_err(|e| DataError(format!("{}: {e}", input.display())))?;
    let source = input
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(frame_io::extract_dataset(&bytes, &source, out_dir)?)
}

fn cmd_extract(a: &ExtractArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    log_header(err, "extract", None, None);
    let m = extract(&a.input, &a.out)?;
    let _ = writeln!(
        out,
        "extracted {} frames to {}",
        m.entries.len(),
        a.out.display()
    );
    Ok(())
}

fn load_dataset(dir: &Path) -> Result<DatasetManifest, DataError> {
    Ok(frame_io::load_manifest(&dir.join(MANIFEST_FILE))?)
}

fn attack(
    input: &Path,
    out_dir: &Path,
    opts: &AttackOpts,
    workers: usize,
) -> Result<DatasetManifest, DataError> {
    let manifest = load_dataset(input)?;
    let cfg = AttackConfig::with_epsilons(opts.epsilons.clone(), opts.seed);
    let mut full = attack::attack_dataset(&manifest, input, out_dir, &cfg, workers)?;
    if let Some(fraction) = opts.attack_fraction {
        full = attack::mixed_stream(&full, fraction, &opts.epsilons, opts.seed)?;
        frame_io::write_manifest(&full, &out_dir.join(MANIFEST_FILE))?;
    }
    Ok(full)
}

fn cmd_attack(a: &AttackArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let workers = a.workers.resolve();
    log_header(err, "attack", Some(a.attack.seed), Some(workers));
    let m = attack(&a.input, &a.out, &a.attack, workers)?;
    let _ = writeln!(
        out,
        "wrote {} manifest entries to {}",
        m.entries.len(),
        a.out.display()
    );
    Ok(())
}

fn stream_config(opts: &DetectOpts, seed: u64, workers: usize) -> StreamConfig {
    StreamConfig {
        mode: opts.mode,
        warmup: opts.warmup,
        refit_every: opts.refit_every,
        workers,
        contamination: opts.contamination,
        seed,
        trees: opts.trees,
    }
}

/// Runs detection on `input` and writes detections, features, forest and the
/// filtered dataset under `out_dir`.
fn detect(
    input: &Path,
    out_dir: &Path,
    cfg: &StreamConfig,
    err: &mut dyn Write,
) -> Result<Vec<DetectionRecord>, DataError> {
    let manifest = load_dataset(input)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| DataError(format!("{}: {e}", out_dir.display())))?;
    let started = Instant::now();
    let (records, forest): (Vec<DetectionRecord>, Option<IsoForest>) = match cfg.mode {
        Mode::Batch => {
            let output = pipeline::run_batch(&manifest, input, cfg)?;
            let mut csv = Vec::new();
            features::write_features_csv(&mut csv, &output.features)?;
            write_file(&out_dir.join(FEATURES_FILE), &csv)?;
            (output.records, Some(output.forest))
        }
        Mode::Stream => (pipeline::run_stream_manifest(&manifest, input, cfg)?, None),
    };
    let secs = started.elapsed().as_secs_f64();
    let _ = writeln!(
        err,
        "processed {} frames in {secs:.3} s ({:.1} frames/s)",
        records.len(),
        records.len() as f64 / secs.max(1e-9)
    );
    write_file(
        &out_dir.join(DETECTIONS_FILE),
        pipeline::detections_to_string(&records).as_bytes(),
    )?;
    if let Some(forest) = forest {
        write_file(&out_dir.join(FOREST_FILE), &forest.to_bytes())?;
    }
    pipeline::filter_frames(&records, &manifest, input, &out_dir.join(FILTERED_DIR))?;
    Ok(records)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    std::fs::write(path, bytes).map_err(|e| DataError(format!("{}: {e}", path.display())))
}

fn cmd_detect(a: &DetectArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let workers = a.workers.resolve();
    log_header(err, "detect", Some(a.seed), Some(workers));
    let cfg = stream_config(&a.detect, a.seed, workers);
    let records = detect(&a.input, &a.out, &cfg, err)?;
    let flagged = records.iter().filter(|r| r.flagged).count();
    let _ = writeln!(out, "flagged {flagged} of {} frames", records.len());
    Ok(())
}

fn read_detections(path: &Path) -> Result<Vec<DetectionRecord>, DataError> {
    let file =
        std::fs::File::open(path).map_err(|e| DataError(format!("{}: {e}", path.display())))?;
    Ok(pipeline::read_detections_csv(std::io::BufReader::new(
        file,
    ))?)
}

/// Metrics for `positive`, with AUC when both classes are present.
fn evaluate(
    records: &[DetectionRecord],
    positive: PositiveClass,
) -> Result<MetricsReport, DataError> {
    let m = eval::confusion(records, positive)?;
    let mut report = eval::metrics(&m)?;
    report.auc = eval::roc(records).ok().map(|r| r.auc);
    Ok(report)
}

fn metrics_line(r: &MetricsReport) -> String {
    let auc = r.auc.map_or("none".to_string(), |a| format!("{a:.4}"));
    format!(
        "positive={} tp={} fp={} tn={} fn={} acc={:.4} err={:.4} sn={:.4} sp={:.4} prec={:.4} fpr={:.4} f1={:.4} auc={auc}{}",
        r.positive_class.as_str(),
        r.tp,
        r.fp,
        r.tn,
        r.fn_,
        r.acc,
        r.err,
        r.sn,
        r.sp,
        r.prec,
        r.fpr,
        r.f1,
        if r.degenerate { " degenerate" } else { "" }
    )
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Outcome {
    let records = read_detections(&a.detections)?;
    let report = evaluate(&records, a.positive)?;
    let _ = writeln!(out, "{}", metrics_line(&report));
    let _ = writeln!(
        out,
        "{}",
        metrics_line(&evaluate(&records, a.positive.other())?)
    );
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(|e| DataError(format!("{}: {e}", dir.display())))?;
        let path = dir.join(METRICS_FILE);
        write_file(&path, report.to_json().as_bytes())?;
        let _ = writeln!(out, "{}", path.display());
    }
    Ok(())
}

fn render_report(
    records: &[DetectionRecord],
    out_dir: &Path,
    dataset: Option<&Path>,
    workers: usize,
) -> Result<usize, DataError> {
    let matrix: Option<ConfusionMatrix> = eval::confusion(records, PositiveClass::Attacked).ok();
    report::render_all(out_dir, records, matrix.as_ref())?;
    match dataset {
        Some(dir) => {
            let manifest = load_dataset(dir)?;
            Ok(report::decorate_frames(
                records, &manifest, dir, out_dir, workers,
            )?)
        }
        None => Ok(0),
    }
}

fn cmd_report(a: &ReportArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let workers = a.workers.resolve();
    log_header(err, "report", None, Some(workers));
    let records = read_detections(&a.detections)?;
    let decorated = render_report(&records, &a.out, a.input.as_deref(), workers)?;
    let _ = writeln!(
        out,
        "wrote 5 charts and {decorated} decorated frames to {}",
        a.out.display()
    );
    Ok(())
}

fn cmd_run_all(a: &RunAllArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let workers = a.workers.resolve();
    log_header(err, "run-all", Some(a.attack.seed), Some(workers));
    let dataset = a.out.join(DATASET_DIR);
    extract(&a.input, &dataset)?;
    attack(&dataset, &dataset, &a.attack, workers)?;
    let cfg = stream_config(&a.detect, a.attack.seed, workers);
    let records = detect(&dataset, &a.out.join(DETECT_DIR), &cfg, err)?;
    let report = evaluate(&records, a.positive)?;
    let metrics_path = a.out.join(METRICS_FILE);
    write_file(&metrics_path, report.to_json().as_bytes())?;
    let _ = writeln!(err, "{}", metrics_line(&report));
    render_report(&records, &a.out.join(REPORT_DIR), Some(&dataset), workers)?;
    let _ = writeln!(out, "{}", metrics_path.display());
    Ok(())
}

/// Largest relative gap between the analytic input gradient and central
/// differences over `coords` random coordinates.
pub fn gradient_check(seed: u64, coords: usize) -> f64 {
    let params = ModelParams::init(seed);
    let mut rng = SplitMix64::new(seed ^ 0x5EED);
    let x: Vec<f64> = (0..INPUT_LEN).map(|_| rng.uniform(0.05, 0.95)).collect();
    let input = ModelInput::new(x.clone()).expect("valid input");
    let target = rng.below(tinynet::CLASSES);
    let (_, grad) = tinynet::loss_and_input_grad(&params, &input, target).expect("valid target");
    let loss_at = |v: Vec<f64>| {
        let p = tinynet::forward(&params, &ModelInput::from_raw(v).expect("shape"));
        tinynet::cross_entropy(&p.logits, target)
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..coords {
        let i = rng.below(INPUT_LEN);
        let mut plus = x.clone();
        plus[i] += h;
        let mut minus = x.clone();
        minus[i] -= h;
        let numeric = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
        let denom = grad[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((grad[i] - numeric).abs() / denom);
    }
    worst
}

/// Whether a single far point outscores 99 clustered points in 28 dimensions.
pub fn planted_outlier_ranks_first(seed: u64) -> bool {
    let mut rng = SplitMix64::new(seed);
    let mut rows: Vec<Vec<f64>> = (0..99)
        .map(|_| (0..28).map(|_| rng.uniform(-1.0, 1.0)).collect())
        .collect();
    rows.push(vec![8.0; 28]);
    let params = ForestParams {
        seed,
        ..ForestParams::default()
    };
    let Ok(forest) = isoforest::fit(&rows, &params) else {
        return false;
    };
    let Ok(scores) = forest.score_all(&rows, 1) else {
        return false;
    };
    scores[..99].iter().all(|&s| s < scores[99])
}

fn cmd_selftest(a: &SelftestArgs, out: &mut dyn Write) -> i32 {
    let mut failures = 0;
    let mut check = |name: &str, ok: bool, detail: String| {
        let _ = writeln!(out, "{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    let worst = (0..3)
        .map(|k| gradient_check(a.seed.wrapping_add(k), 16))
        .fold(0.0, f64::max);
    check(
        "gradient",
        worst <= 1e-3,
        format!("max relative error {worst:.2e}"),
    );

    let hits = (0..5)
        .filter(|&k| planted_outlier_ranks_first(a.seed.wrapping_add(k)))
        .count();
    check(
        "isolation",
        hits == 5,
        format!("outlier ranked first for {hits}/5 seeds"),
    );
    let c2 = isoforest::c_factor(2);
    check(
        "c(2)",
        (c2 - (2.0 * isoforest::EULER_GAMMA - 1.0)).abs() < 1e-12,
        format!("{c2:.6}"),
    );

    let m = ConfusionMatrix::from_attacked_counts(77, 13, 109, 0);
    let clean = eval::metrics(&m.with_positive(PositiveClass::Clean));
    let ok = clean.as_ref().is_ok_and(|r| {
        (r.acc - 0.935).abs() <= 1e-3
            && (r.err - 0.065).abs() <= 1e-3
            && (r.sn - 0.893).abs() <= 1e-3
            && (r.sp - 1.0).abs() <= 1e-3
            && (r.prec - 1.0).abs() <= 1e-3
            && (r.f1 - 0.943).abs() <= 1e-3
    });
    let detail = clean
        .map(|r| metrics_line(&r))
        .unwrap_or_else(|e| e.to_string());
    check("metrics", ok, detail);

    if failures == 0 {
        EXIT_OK
    } else {
        EXIT_DATA
    }
}

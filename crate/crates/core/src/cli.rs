//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical or insufficient-data error. Diagnostics go to stderr;
//! results go to stdout or files.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::classify::{train, LogisticModel, TrainConfig};
use crate::cloud::{apply_transform, voxel_downsample, Point3, PointCloud, RigidTransform, SourceLabel};
use crate::entropy::{coral_quality, write_per_point, EntropyParams, QualityStatus};
use crate::error::{CoralError, Result};
use crate::features::{extract_features, LabeledExample};
use crate::harness::{
    refinement_variants, report_from_features, report_from_model, sensitivity_ratio, sequence_features,
    symmetric_steps, synth_scene, quality_surface, write_surface_csv, Environment, EvaluationReport,
    Protocol, ProtocolOptions, ScanPair, SceneKind, SceneSpec,
};
use crate::io::{
    load_cloud, write_manifest, write_poses, write_xyz, CloudFormat, DatasetManifest, Pairing, PoseLayout,
    Profile, RunConfig, ScanFrame, SequenceEntry,
};

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "CORAL_THREADS";

#[derive(Debug, Parser)]
#[command(name = "coral", version, about = "Alignment correctness assessment for point-cloud pairs")]
struct Cli {
    /// Worker threads (0 = all cores). Overrides CORAL_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Measure the quality of one registered pair.
    Assess(AssessArgs),
    /// Fit a classifier on every sequence of a dataset.
    Train(TrainArgs),
    /// Run an evaluation protocol (or a saved model) over a dataset.
    Evaluate(EvaluateArgs),
    /// Quality over a grid of planar offsets of the second cloud.
    Sweep(SweepArgs),
    /// Generate synthetic scan sequences and their manifest.
    Synth(SynthArgs),
    /// Sensitivity ratio Q(misaligned)/Q(aligned) across parameter settings.
    Tune(TuneArgs),
}

#[derive(Debug, Args)]
struct ParamArgs {
    /// Run configuration file.
    #[arg(long, conflicts_with = "profile")]
    config: Option<PathBuf>,
    /// Parameter profile: eth or spinning-lidar.
    #[arg(long)]
    profile: Option<String>,
    /// Seed for error induction and fold assignment.
    #[arg(long)]
    seed: Option<u64>,
    /// Load-time voxel cell in meters, or "none".
    #[arg(long)]
    downsample: Option<String>,
}

impl ParamArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, &self.profile) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(name)) => RunConfig::from_profile(name.parse()?),
            (None, None) => RunConfig::from_profile(Profile::default()),
        };
        if let Some(seed) = self.seed {
            cfg.error.seed = seed;
        }
        if let Some(d) = &self.downsample {
            cfg.downsample = match d.as_str() {
                "none" | "off" => None,
                v => Some(
                    v.parse()
                        .map_err(|_| CoralError::Config(format!("invalid downsample cell '{v}'")))?,
                ),
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct PairArgs {
    /// First cloud (reference).
    #[arg(long)]
    a: PathBuf,
    /// Second cloud.
    #[arg(long)]
    b: PathBuf,
    /// File format: xyz or pcd (default: from extension).
    #[arg(long)]
    format: Option<String>,
    /// Sensor position of the first cloud as x,y,z.
    #[arg(long, value_parser = parse_point, default_value = "0,0,0", allow_hyphen_values = true)]
    origin_a: Point3,
    /// Sensor position of the second cloud as x,y,z.
    #[arg(long, value_parser = parse_point, default_value = "0,0,0", allow_hyphen_values = true)]
    origin_b: Point3,
}

impl PairArgs {
    fn load(&self, downsample: Option<f64>) -> Result<ScanPair> {
        let read = |path: &Path, origin: Point3, label: SourceLabel| -> Result<PointCloud> {
            let format = match &self.format {
                Some(f) => f.parse()?,
                None => CloudFormat::from_path(path),
            };
            let raw = load_cloud(path, format)?;
            let cloud = PointCloud::new(raw.points().to_vec(), origin, label)?;
            match downsample {
                Some(cell) => voxel_downsample(&cloud, cell),
                None => Ok(cloud),
            }
        };
        Ok(ScanPair {
            cloud_a: read(&self.a, self.origin_a, SourceLabel::A)?,
            cloud_b: read(&self.b, self.origin_b, SourceLabel::B)?,
            sequence_id: "cli".into(),
            pair_index: 0,
        })
    }
}

fn parse_point(s: &str) -> std::result::Result<Point3, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(Point3::new(x, y, z)),
        _ => Err(format!("expected three finite values x,y,z, got '{s}'")),
    }
}

#[derive(Debug, Args)]
struct AssessArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[command(flatten)]
    params: ParamArgs,
    /// Also classify the pair with this model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Write per-point "x y z q valid" rows of the joint cloud here.
    #[arg(long)]
    per_point: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DatasetArgs {
    /// Dataset manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// Pose file layout for all sequences: auto, 3x4, 4x4, skip:N[,3x4|4x4].
    #[arg(long)]
    pose_layout: Option<String>,
    /// Quality measure: coral, coral-median, mme, ndt or rel-ndt.
    #[arg(long)]
    method: Option<String>,
    #[command(flatten)]
    params: ParamArgs,
}

impl DatasetArgs {
    fn resolve(&self) -> Result<(RunConfig, DatasetManifest)> {
        let mut cfg = self.params.resolve()?;
        if let Some(m) = &self.method {
            cfg.method = m.parse().map_err(|_| CoralError::Config(format!("unknown method '{m}'")))?;
        }
        let layout = self.pose_layout.as_deref().map(str::parse::<PoseLayout>).transpose()?;
        let manifest = DatasetManifest::load(&self.manifest, layout)?;
        Ok((cfg, manifest))
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// separate, joint or generalization.
    #[arg(long, conflicts_with = "model")]
    protocol: Option<String>,
    /// Classify with a saved model instead of cross-validating.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Number of cross-validation folds.
    #[arg(long)]
    folds: Option<usize>,
    /// Report directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[command(flatten)]
    params: ParamArgs,
    /// Half-width of the x and y offset range, meters.
    #[arg(long, default_value_t = 0.4)]
    extent: f64,
    /// Samples per axis.
    #[arg(long, default_value_t = 9)]
    steps: usize,
    /// Half-width of the yaw offset range, degrees.
    #[arg(long, default_value_t = 0.0)]
    theta_extent_deg: f64,
    #[arg(long, default_value_t = 1)]
    theta_steps: usize,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Scene kinds; one group of sequences per kind.
    #[arg(long = "kind", default_values_t = vec!["corridor".to_string()])]
    kinds: Vec<String>,
    /// Sequences per kind.
    #[arg(long, default_value_t = 1)]
    sequences: usize,
    /// Scan pairs per sequence.
    #[arg(long, default_value_t = 10)]
    pairs: usize,
    /// Points per square meter of surface per scan.
    #[arg(long, default_value_t = 40.0)]
    density: f64,
    /// Scene size, meters.
    #[arg(long, default_value_t = 6.0)]
    extent: f64,
    /// Range noise standard deviation, meters.
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; receives manifest.txt and one folder per sequence.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[command(flatten)]
    params: ParamArgs,
    /// Fixed radii to try, comma separated.
    #[arg(long, value_delimiter = ',')]
    radii: Vec<f64>,
    /// Rejection fractions to try with every radius, comma separated.
    #[arg(long, value_delimiter = ',')]
    reject: Vec<f64>,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    let outcome = thread_count(cli.threads).and_then(|threads| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CoralError::Config(format!("cannot start worker pool: {e}")))?;
        pool.install(|| dispatch(cli.command))
    });
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CoralError::Config(format!("{THREADS_ENV} must be a count, got '{v}'"))),
        Err(_) => Ok(0),
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Assess(a) => assess(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
        Command::Synth(a) => synth(a),
        Command::Tune(a) => tune(a),
    }
}

fn stdout_error(e: std::io::Error) -> CoralError {
    CoralError::io("<stdout>", e)
}

#[derive(Serialize)]
struct AssessSummary {
    status: QualityStatus,
    q: f64,
    h_sep: f64,
    h_joint: f64,
    overlap_ratio: f64,
    retained_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    verdict: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    probability: Option<f64>,
}

fn assess(args: AssessArgs) -> Result<()> {
    let cfg = args.params.resolve()?;
    let pair = args.pair.load(cfg.downsample)?;
    let entropy = cfg.measure.entropy;
    let result = coral_quality(&pair.cloud_a, &pair.cloud_b, &entropy)?;
    if let Some(path) = &args.per_point {
        let file = std::fs::File::create(path).map_err(|e| CoralError::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        write_per_point(&result, &mut out)
            .and_then(|_| out.flush())
            .map_err(|e| CoralError::io(path, e))?;
    }
    let mut summary = AssessSummary {
        status: result.status,
        q: result.q,
        h_sep: result.h_sep,
        h_joint: result.h_joint,
        overlap_ratio: result.overlap_ratio,
        retained_points: result.retained_count(),
        verdict: None,
        probability: None,
    };
    if let Some(path) = &args.model {
        let model = LogisticModel::load(path)?;
        let features = extract_features(model.method, &pair.cloud_a, &pair.cloud_b, &cfg.measure)?;
        let prediction = model.predict(&features)?;
        summary.verdict = Some(prediction.verdict.to_string());
        summary.probability = prediction.probability;
    }
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    writeln!(std::io::stdout(), "{text}").map_err(stdout_error)
}

fn protocol_options(cfg: &RunConfig) -> ProtocolOptions {
    ProtocolOptions {
        folds: cfg.folds,
        train: TrainConfig {
            threshold: cfg.threshold,
            ..TrainConfig::default()
        },
        downsample: cfg.downsample,
    }
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let (cfg, manifest) = args.dataset.resolve()?;
    let sequences = manifest.load_sequences(cfg.downsample)?;
    let data = sequence_features(&sequences, cfg.method, &cfg.measure, &cfg.error)?;
    let examples: Vec<LabeledExample> = data.iter().flat_map(|s| s.examples.iter().copied()).collect();
    let outcome = train(&examples, &protocol_options(&cfg).train)?;
    if outcome.separation_warning {
        log::warn!("training classes are (nearly) separable; coefficients are large");
    }
    if !outcome.converged {
        log::warn!("training stopped after {} iterations without converging", outcome.iterations);
    }
    outcome.model.save(&args.out)?;
    let m = &outcome.model;
    writeln!(
        std::io::stdout(),
        "{} model: beta = [{:e}, {:e}, {:e}], threshold {}, {} examples, {} iterations",
        m.method,
        m.beta0,
        m.beta1,
        m.beta2,
        m.threshold,
        examples.len(),
        outcome.iterations
    )
    .map_err(stdout_error)
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let (mut cfg, manifest) = args.dataset.resolve()?;
    if let Some(p) = &args.protocol {
        cfg.protocol = p.parse()?;
    }
    if let Some(k) = args.folds {
        cfg.folds = k;
    }
    if let Some(dir) = &args.out {
        cfg.output_dir = dir.clone();
    }
    cfg.validate()?;
    let model = args.model.as_deref().map(LogisticModel::load).transpose()?;
    if let Some(m) = &model {
        if args.dataset.method.is_some() && m.method != cfg.method {
            return Err(CoralError::Config(format!(
                "model was trained for {}, not {}",
                m.method, cfg.method
            )));
        }
        cfg.method = m.method;
    }
    if cfg.protocol == Protocol::Generalization {
        let structured = manifest
            .sequences
            .iter()
            .filter(|s| s.environment == Environment::Structured)
            .count();
        if structured == 0 || structured == manifest.sequences.len() {
            return Err(CoralError::InvalidInput(
                "generalization needs structured and non-structured sequences".into(),
            ));
        }
    }
    let sequences = manifest.load_sequences(cfg.downsample)?;
    log::info!("computing {} features for {} sequences", cfg.method, sequences.len());
    let data = sequence_features(&sequences, cfg.method, &cfg.measure, &cfg.error)?;
    let options = protocol_options(&cfg);
    let report = match &model {
        Some(m) => report_from_model(m, &data, &cfg.measure, &cfg.error, &options)?,
        None => report_from_features(cfg.protocol, &data, cfg.method, &cfg.measure, &cfg.error, &options)?,
    };
    let stem = format!("{}-{}", report.method, report.protocol);
    report.save(&cfg.output_dir, &stem)?;
    print_report(&report).map_err(stdout_error)
}

fn print_report(report: &EvaluationReport) -> std::io::Result<()> {
    let mut out = std::io::stdout().lock();
    for s in &report.sequences {
        writeln!(out, "{:<24} {:<16} accuracy {:.4} ({} pairs)", s.id, s.environment, s.accuracy, s.pairs)?;
    }
    let c = &report.overall;
    writeln!(
        out,
        "overall accuracy {:.4} [{} {}] TP {} FP {} TN {} FN {}",
        report.overall_accuracy, report.method, report.protocol, c.tp, c.fp, c.tn, c.fn_
    )?;
    if report.skipped_folds > 0 {
        writeln!(out, "skipped folds: {}", report.skipped_folds)?;
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let cfg = args.params.resolve()?;
    if !(args.extent >= 0.0 && args.theta_extent_deg >= 0.0) || args.steps == 0 || args.theta_steps == 0 {
        return Err(CoralError::Config("sweep extents must be >= 0 and step counts >= 1".into()));
    }
    let pair = args.pair.load(cfg.downsample)?;
    let xy = symmetric_steps(args.extent, args.steps);
    let theta = symmetric_steps(args.theta_extent_deg.to_radians(), args.theta_steps);
    let samples = quality_surface(&pair, &cfg.measure.entropy, &xy, &xy, &theta)?;
    match &args.out {
        Some(path) => {
            let mut buf = Vec::new();
            write_surface_csv(&samples, &mut buf).expect("writing to memory");
            std::fs::write(path, buf).map_err(|e| CoralError::io(path, e))
        }
        None => write_surface_csv(&samples, std::io::stdout().lock()).map_err(stdout_error),
    }
}

fn environment_of(kind: SceneKind) -> Environment {
    match kind {
        SceneKind::Corridor => Environment::Structured,
        SceneKind::PlanePair => Environment::SemiStructured,
        SceneKind::Foliage => Environment::Unstructured,
    }
}

fn synth(args: SynthArgs) -> Result<()> {
    if args.pairs == 0 || args.sequences == 0 {
        return Err(CoralError::Config("need at least one sequence and one pair".into()));
    }
    let kinds: Vec<SceneKind> = args.kinds.iter().map(|k| k.parse()).collect::<Result<_>>()?;
    std::fs::create_dir_all(&args.out).map_err(|e| CoralError::io(&args.out, e))?;
    let mut entries = Vec::new();
    for (ki, &kind) in kinds.iter().enumerate() {
        for si in 0..args.sequences {
            let id = format!("{kind}-{si:02}");
            let dir = args.out.join(&id);
            std::fs::create_dir_all(&dir).map_err(|e| CoralError::io(&dir, e))?;
            let mut scans = Vec::new();
            let mut poses = Vec::new();
            for pi in 0..args.pairs {
                let seed = crate::harness::derive_seed(args.seed, &[ki as u64, si as u64, pi as u64]);
                let spec = SceneSpec::new(kind, args.density, args.extent, args.noise, seed);
                let pair = synth_scene(&spec).map_err(|e| CoralError::Config(e.to_string()))?;
                for (ci, cloud) in [&pair.cloud_a, &pair.cloud_b].into_iter().enumerate() {
                    // Stored in the sensor frame, posed by the sensor position.
                    let pose = RigidTransform::from_translation(cloud.sensor_origin().coords);
                    let local = apply_transform(cloud, &pose.inverse())?;
                    let name = format!("scan{:03}.xyz", 2 * pi + ci);
                    write_xyz(&dir.join(&name), &local)?;
                    scans.push(PathBuf::from(&id).join(name));
                    poses.push(pose);
                }
            }
            write_poses(&dir.join("poses.csv"), &poses)?;
            entries.push(SequenceEntry {
                id: id.clone(),
                environment: environment_of(kind),
                scans,
                poses: PathBuf::from(&id).join("poses.csv"),
                pose_layout: PoseLayout::default(),
                alpha: None,
                format: Some(CloudFormat::XyzAscii),
                frame: ScanFrame::Sensor,
                pairing: Pairing::Disjoint,
            });
        }
    }
    let manifest = args.out.join("manifest.txt");
    write_manifest(&manifest, &entries)?;
    writeln!(std::io::stdout(), "{}", manifest.display()).map_err(stdout_error)
}

fn tune(args: TuneArgs) -> Result<()> {
    let cfg = args.params.resolve()?;
    let pair = args.pair.load(cfg.downsample)?;
    let base = cfg.measure.entropy;
    let mut variants: Vec<(String, EntropyParams)> = refinement_variants(&base)
        .into_iter()
        .map(|(name, p)| (name.to_string(), p))
        .collect();
    let rejects = if args.reject.is_empty() { vec![base.e_reject] } else { args.reject.clone() };
    for &r in &args.radii {
        for &e in &rejects {
            let p = EntropyParams {
                r_min: r,
                r_max: r,
                alpha: 0.0,
                e_reject: e,
                ..base
            };
            p.validate().map_err(|e| CoralError::Config(e.to_string()))?;
            variants.push(("grid".to_string(), p));
        }
    }
    let mut out = std::io::stdout().lock();
    writeln!(out, "variant,r_min,r_max,alpha_deg,epsilon,e_reject,q_aligned,q_misaligned,q_s").map_err(stdout_error)?;
    for (name, p) in variants {
        let (qa, qm, qs) = match sensitivity_ratio(&pair, &cfg.error, &p) {
            Ok(s) => (s.q_aligned, s.q_misaligned, s.ratio),
            Err(CoralError::UndefinedRatio { q_aligned, q_misaligned }) => {
                log::warn!("{name}: Q aligned is zero, ratio undefined");
                (q_aligned, q_misaligned, f64::NAN)
            }
            Err(CoralError::InsufficientData(msg)) => {
                log::warn!("{name}: {msg}");
                (f64::NAN, f64::NAN, f64::NAN)
            }
            Err(e) => return Err(e),
        };
        writeln!(
            out,
            "{name},{},{},{},{},{},{qa:.9},{qm:.9},{qs:.6}",
            p.r_min,
            p.r_max,
            p.alpha.to_degrees(),
            p.epsilon,
            p.e_reject
        )
        .map_err(stdout_error)?;
    }
    Ok(())
}

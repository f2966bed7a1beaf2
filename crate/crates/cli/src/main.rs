use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rppg_core::eval::{self, ExcludedRow, SessionInput, SUB51_LENGTHS, SUB52_LENGTHS};
use rppg_core::frame_io::resolve_manifest_path;
use rppg_core::pipeline::estimate_session;
use rppg_core::spectral::session_mean;
use rppg_core::synth::render_session;
use rppg_core::{
    BandLimits, ChannelLabel, CombineMethod, Error, EvalReport, GroundTruth, HrProfile, HrSeries,
    PipelineConfig, SessionManifest, SynthConfig, WindowSpec,
};

/// Heart-rate estimation from face video.
#[derive(Debug, Parser)]
#[command(name = "rppg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic session with a known pulse.
    Synth(SynthArgs),
    /// Estimate a heart-rate series for one session.
    Estimate(EstimateArgs),
    /// Score sessions (or an estimate file) against groundtruth.
    Evaluate(EvaluateArgs),
    /// Evaluate sessions over a list of window lengths.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Constant heart rate in bpm.
    #[arg(long, conflicts_with = "profile")]
    hr: Option<f64>,
    /// constant:BPM | step:A,B,T | ramp:A,B
    #[arg(long, value_parser = parse_profile)]
    profile: Option<HrProfile>,
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    drift: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emit a single-channel gray8 session.
    #[arg(long)]
    mono: bool,
    /// Add a second pulse harmonic.
    #[arg(long)]
    harmonic: bool,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    #[arg(long, default_value_t = 0.02)]
    amplitude: f64,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Pulse band in Hz.
    #[arg(long, value_parser = parse_band, default_value = "0.7:4.0")]
    band: BandLimits,
    /// Defaults to chrom for rgb8 sessions and intensity for gray8.
    #[arg(long, value_parser = parse_combine)]
    combine: Option<CombineMethod>,
    /// Window hop in seconds; defaults to the window length.
    #[arg(long)]
    hop: Option<f64>,
}

impl PipelineArgs {
    fn config(&self) -> PipelineConfig {
        let mut config = PipelineConfig::default();
        config.pulse.band = self.band;
        config.pulse.combine = self.combine;
        config.hop_s = self.hop;
        config
    }

    fn spec(&self, length: f64) -> WindowSpec {
        WindowSpec::with_hop(length, self.hop.unwrap_or(length))
    }
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Session directory or manifest.
    session: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Window length in seconds.
    #[arg(long, default_value_t = 10.0)]
    window: f64,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Session directories or manifests.
    sessions: Vec<PathBuf>,
    /// Previously written hr_series.csv, scored instead of sessions.
    #[arg(long, requires = "groundtruth", conflicts_with = "sessions")]
    estimates: Option<PathBuf>,
    #[arg(long, requires = "estimates")]
    groundtruth: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    window: f64,
    #[arg(long, value_parser = parse_channel, default_value = "rgb")]
    channel: ChannelLabel,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Protocol {
    #[value(name = "5.1")]
    SessionMean,
    #[value(name = "5.2")]
    Continuous,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Session directories or manifests.
    #[arg(required = true)]
    sessions: Vec<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "5.1")]
    protocol: Protocol,
    /// Comma-separated window lengths; overrides the protocol defaults.
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_channel, default_value = "rgb")]
    channel: ChannelLabel,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

fn parse_band(s: &str) -> Result<BandLimits, String> {
    let (lo, hi) = s.split_once(':').ok_or("expected LO:HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{lo}: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{hi}: {e}"))?;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(format!("need 0 < LO < HI, got {lo}:{hi}"));
    }
    Ok(BandLimits::new(lo, hi))
}

fn parse_profile(s: &str) -> Result<HrProfile, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_combine(s: &str) -> Result<CombineMethod, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_channel(s: &str) -> Result<ChannelLabel, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Error with the exit code it maps to.
struct Failure {
    kind: String,
    message: String,
    code: u8,
}

impl Failure {
    fn input(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            message: message.into(),
            code: 1,
        }
    }

    fn from_error(e: Error, context: Option<&Path>) -> Self {
        let message = match context {
            Some(p) => format!("{}: {e}", p.display()),
            None => e.to_string(),
        };
        Self {
            kind: e.kind().into(),
            message,
            code: if e.is_input_error() { 1 } else { 2 },
        }
    }
}

fn ctx(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| Failure::from_error(e, Some(path))
}

fn core(e: Error) -> Failure {
    Failure::from_error(e, None)
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure {
        kind: "IoError".into(),
        message: format!("{}: {e}", path.display()),
        code: 2,
    })
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure {
        kind: "IoError".into(),
        message: format!("{}: {e}", dir.display()),
        code: 2,
    })
}

/// Checks band and window settings against a session before any frames
/// are read.
fn preflight(session: &Path, config: &PipelineConfig, lengths: &[f64]) -> Result<(), Failure> {
    let manifest = SessionManifest::load(&resolve_manifest_path(session)).map_err(ctx(session))?;
    config
        .pulse
        .band
        .validate(manifest.fps)
        .map_err(ctx(session))?;
    for &length in lengths {
        WindowSpec::with_hop(length, config.hop_s.unwrap_or(length))
            .validate(manifest.fps, &config.pulse.band)
            .map_err(ctx(session))?;
    }
    Ok(())
}

fn warn_excluded(rows: &[ExcludedRow]) {
    for r in rows {
        let line = serde_json::json!({
            "warning": r.error,
            "session": r.session,
            "window_s": r.window_s,
            "message": r.reason,
        });
        eprintln!("{line}");
    }
}

fn cmd_synth(args: SynthArgs) -> Result<(), Failure> {
    let profile = match (args.hr, args.profile) {
        (_, Some(p)) => p,
        (Some(bpm), None) => HrProfile::Constant { bpm },
        (None, None) => SynthConfig::default().profile,
    };
    let config = SynthConfig {
        width: args.width,
        height: args.height,
        fps: args.fps,
        duration_s: args.duration,
        pulse_amplitude: args.amplitude,
        profile,
        noise_sigma: args.noise,
        illum_drift: args.drift,
        seed: args.seed,
        mono: args.mono,
        harmonic: args.harmonic,
        ..SynthConfig::default()
    };
    config.validate().map_err(core)?;
    render_session(&config, &args.out).map_err(ctx(&args.out))?;
    println!("{}", resolve_manifest_path(&args.out).display());
    Ok(())
}

#[derive(Serialize)]
struct Summary {
    session_mean_bpm: f64,
    n_windows: usize,
    window_s: f64,
    hop_s: f64,
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), Failure> {
    let config = args.pipeline.config();
    let spec = args.pipeline.spec(args.window);
    preflight(&args.session, &config, &[args.window])?;
    let (manifest, series) =
        estimate_session(&args.session, &config, &spec).map_err(ctx(&args.session))?;

    create_dir(&args.out)?;
    write(&args.out.join("hr_series.csv"), &series.to_csv())?;
    let summary = Summary {
        session_mean_bpm: session_mean(&series).map_err(ctx(&args.session))?,
        n_windows: series.len(),
        window_s: spec.length_s,
        hop_s: spec.hop_s,
    };
    write(&args.out.join("summary.json"), &to_json(&summary))?;

    if let Some(gt_path) = &manifest.groundtruth {
        let aligned = GroundTruth::load(gt_path)
            .and_then(|gt| eval::align_groundtruth(&gt, &series.intervals()));
        match aligned {
            Ok(gt) => {
                let mut text = String::from("window_start_s,window_end_s,gt_bpm,est_bpm\n");
                for (e, g) in series.estimates.iter().zip(gt) {
                    text.push_str(&format!(
                        "{},{},{},{}\n",
                        e.window_start, e.window_end, g, e.bpm
                    ));
                }
                write(&args.out.join("gt_vs_est.csv"), &text)?;
            }
            Err(e) => {
                let line = serde_json::json!({ "warning": e.kind(), "message": format!("gt_vs_est.csv skipped: {e}") });
                eprintln!("{line}");
            }
        }
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    let report = match (&args.estimates, &args.groundtruth) {
        (Some(est_path), Some(gt_path)) => {
            let series = HrSeries::load_csv(est_path).map_err(ctx(est_path))?;
            let gt = GroundTruth::load(gt_path).map_err(ctx(gt_path))?;
            let id = SessionInput::from_path(est_path).id;
            match eval::evaluate_series(&id, args.channel, &series, &gt) {
                Ok(row) => EvalReport::from_rows(vec![row], Vec::new()),
                Err(e) => EvalReport::from_rows(
                    Vec::new(),
                    vec![ExcludedRow {
                        session: id,
                        channel: args.channel,
                        window_s: Some(series.window_spec.length_s),
                        error: e.kind().into(),
                        reason: e.to_string(),
                    }],
                ),
            }
        }
        _ => {
            if args.sessions.is_empty() {
                return Err(Failure::input(
                    "InvalidArguments",
                    "give session paths, or --estimates with --groundtruth",
                ));
            }
            let config = args.pipeline.config();
            for s in &args.sessions {
                preflight(s, &config, &[args.window])?;
            }
            let inputs: Vec<SessionInput> = args
                .sessions
                .iter()
                .map(|p| SessionInput::from_path(p))
                .collect();
            eval::sweep(&inputs, &[args.window], args.channel, &config)
        }
    };
    create_dir(&args.out)?;
    report
        .write(&args.out.join("report.csv"), &args.out.join("report.json"))
        .map_err(core)?;
    finish(&report)
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let lengths = args.lengths.clone().unwrap_or_else(|| match args.protocol {
        Protocol::SessionMean => SUB51_LENGTHS.to_vec(),
        Protocol::Continuous => SUB52_LENGTHS.to_vec(),
    });
    if lengths.is_empty() {
        return Err(Failure::input("InvalidArguments", "--lengths is empty"));
    }
    let config = args.pipeline.config();
    for s in &args.sessions {
        preflight(s, &config, &lengths)?;
    }
    let inputs: Vec<SessionInput> = args
        .sessions
        .iter()
        .map(|p| SessionInput::from_path(p))
        .collect();
    let report = eval::sweep(&inputs, &lengths, args.channel, &config);

    create_dir(&args.out)?;
    let ch = args.channel.as_str();
    report
        .write(
            &args.out.join(format!("sweep_{ch}.csv")),
            &args.out.join(format!("sweep_{ch}.json")),
        )
        .map_err(core)?;
    write(
        &args.out.join(format!("table_{ch}.csv")),
        &report.sweep_table(args.channel, &lengths),
    )?;
    finish(&report)
}

/// Reports exclusions; fails only when nothing could be scored.
fn finish(report: &EvalReport) -> Result<(), Failure> {
    warn_excluded(&report.excluded);
    if report.per_session.is_empty() {
        let first = report.excluded.first();
        return Err(Failure {
            kind: first.map_or("EmptyInput".into(), |r| r.error.clone()),
            message: first.map_or("no sessions evaluated".into(), |r| {
                format!("no session could be scored; {}: {}", r.session, r.reason)
            }),
            code: 2,
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let line =
                serde_json::json!({ "error": "InvalidArguments", "message": message.trim() });
            eprintln!("{line}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let line = serde_json::json!({ "error": f.kind, "message": f.message });
            eprintln!("{line}");
            ExitCode::from(f.code)
        }
    }
}

//! Command-line front end. [`run`] takes the arguments (without the program
//! name) and returns the process exit code.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::detect::read_detections_csv;
use crate::error::{Error, Result};
use crate::evstream::{write_events, EventFormat, StreamHeader};
use crate::flight::BallParams;
use crate::geom::{read_obs_csv, save_calibration};
use crate::pipeline::{
    bench_eros, evaluate, first_time_below, run_pipeline_files, run_prediction_study,
    write_study, CameraStream, DetectorKind, PipelineConfig, StudyConfig,
};
use crate::simcam::{simulate, GroundTruth, SceneConfig};

#[derive(Debug, Parser)]
#[command(name = "evball", version, about = "Event-camera ball tracking and flight prediction")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a stereo recording of one ball flight.
    Sim(SimArgs),
    /// Detect, pair and triangulate the ball in two event streams.
    Run(RunArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Flight prediction accuracy and uncertainty at several measurement rates.
    Predict(PredictArgs),
    /// EROS ingestion throughput and detection runtimes on one stream.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Event file format.
    #[arg(long, default_value = "bin", value_parser = parse_format)]
    format: EventFormat,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    events_a: PathBuf,
    #[arg(long)]
    events_b: PathBuf,
    #[arg(long)]
    calib: PathBuf,
    #[arg(long, default_value = "eros_hough")]
    detector: DetectorKind,
    /// Detect after every N filtered events instead of in real time.
    #[arg(long, value_name = "N")]
    deterministic: Option<usize>,
    /// Pipeline configuration JSON; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Keep at most this many detections per second per camera.
    #[arg(long)]
    rate_hz: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    dets: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Triangulated positions to score against the true flight.
    #[arg(long)]
    obs: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    obs: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    rates: Vec<f64>,
    #[arg(long)]
    ball: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    em_iters: usize,
    /// Ground truth whose final position is the prediction target.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long, default_value_t = 10)]
    k_eros: u32,
}

fn parse_format(s: &str) -> std::result::Result<EventFormat, String> {
    match s {
        "bin" | "evb" => Ok(EventFormat::Bin),
        "csv" => Ok(EventFormat::Csv),
        _ => Err(format!("unknown format {s:?}")),
    }
}

fn sim(args: &SimArgs, out: &mut dyn Write) -> Result<()> {
    let scene = SceneConfig::load(&args.config)?;
    let cams = scene.camera_models()?;
    let (streams, gt) = simulate(&scene.sim, &cams)?;
    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (cam, events) in cams.iter().zip(&streams) {
        let header = StreamHeader::new(cam.width, cam.height, cam.id.clone())?;
        let path = dir.join(format!("{}.{}", cam.id, args.format.extension()));
        write_events(&header, events, &path, args.format)?;
        let _ = writeln!(out, "{}: {} events", path.display(), events.len());
    }
    save_calibration(&dir.join("calib.json"), &cams)?;
    gt.save(&dir.join("ground_truth.json"))?;
    let _ = writeln!(out, "{}: {} states", dir.join("ground_truth.json").display(), gt.states.len());
    Ok(())
}

fn run_cmd(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.detector = args.detector;
    if let Some(n) = args.deterministic {
        cfg = cfg.deterministic(n);
    }
    if let Some(r) = args.rate_hz {
        cfg.rate_hz = r;
    }
    let res = run_pipeline_files(&args.events_a, &args.events_b, &args.calib, &cfg)?;
    res.write(&args.out)?;
    let counts: Vec<String> = res
        .runs
        .iter()
        .zip(&res.detections)
        .map(|(r, d)| format!("{} {}", r.camera_id, d.len()))
        .collect();
    let _ = writeln!(
        out,
        "detections: {}; triangulated: {}",
        counts.join(", "),
        res.obs.len()
    );
    Ok(())
}

fn eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let dets = read_detections_csv(&args.dets)?;
    let gt = GroundTruth::load(&args.gt)?;
    if gt.cameras.values().all(Vec::is_empty) {
        return Err(Error::InsufficientData("ground truth has no circles".into()));
    }
    let mut report = evaluate(&dets, &gt)?;
    if let Some(p) = &args.obs {
        report.rmse_3d_m = crate::pipeline::rmse_3d(&read_obs_csv(p)?, &gt.states);
    }
    if report.pixel_error.is_none() {
        return Err(Error::InsufficientData(
            "no ground-truth sample is bracketed by detections".into(),
        ));
    }
    report.save(&args.out)?;
    let fmt = |s: &Option<crate::pipeline::Stats>| {
        s.as_ref().map_or("n/a".to_string(), |s| format!("{:.3}", s.mean))
    };
    let _ = writeln!(
        out,
        "update rate {} /s, pixel error {} px, IoU {}",
        fmt(&report.update_rate),
        fmt(&report.pixel_error),
        fmt(&report.iou)
    );
    Ok(())
}

fn predict(args: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let obs = read_obs_csv(&args.obs)?;
    let bp = match &args.ball {
        Some(p) => BallParams::load(p)?,
        None => BallParams::default(),
    };
    let gt = args.gt.as_deref().map(GroundTruth::load).transpose()?;
    let cfg = StudyConfig {
        em_iters: args.em_iters,
        ..Default::default()
    };
    let results =
        run_prediction_study(&obs, &args.rates, &bp, &cfg, gt.as_ref().map(|g| g.states.as_slice()))?;
    write_study(&args.out, &results)?;
    for r in &results {
        let below = first_time_below(r, 0.02)
            .map_or("never".to_string(), |t| format!("{:.1} ms", t as f64 * 1e-6));
        let _ = writeln!(
            out,
            "{} Hz: {} measurements, error below 20 mm from {}",
            r.rate_hz, r.n_obs, below
        );
    }
    Ok(())
}

fn bench(args: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let stream = CameraStream::read(&args.events)?;
    let report = bench_eros(&stream.header, &stream.events, args.k_eros)?;
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.cmd {
        Command::Sim(a) => sim(a, out),
        Command::Run(a) => run_cmd(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Predict(a) => predict(a, out),
        Command::Bench(a) => bench(a, out),
    }
}

/// Parses `args` and runs the subcommand. Failures print one line
/// `error code=<code> message=<text>` to stderr and return a nonzero code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("evball"))
        .chain(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            if code != 0 {
                eprintln!("error code=usage message={:?}", e.kind().to_string());
            }
            return code;
        }
    };
    match dispatch(&cli, &mut std::io::stdout().lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error code={} message={:?}", e.code(), e.to_string());
            1
        }
    }
}

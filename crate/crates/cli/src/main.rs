//! `sentinel`: simulate traces, calibrate thresholds, detect, evaluate and
//! benchmark. Every subcommand talks to a sentinel service; without
//! `--server` a private one is started on a loopback port.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use sentinel_client::{Client, ClientError};
use sentinel_core::api::*;
use sentinel_core::detector::Timeline;
use sentinel_core::simulator::SimulationConfig;
use sentinel_core::trace::read_trace;
use sentinel_core::workflow::{default_detector, feature_grid, CalibrationFile, GridCell};
use sentinel_core::{FeatureKind, FeatureSpec, PredictorKind, TestMode};
use serde::Serialize;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

#[derive(Parser)]
#[command(name = "sentinel", version, about = "Streaming anomaly detection on CSI/RSSI traces")]
struct Cli {
    /// Base URL of a running sentinel service.
    #[arg(long, global = true, env = "SENTINEL_URL")]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a labeled trace from a Gauss-Markov channel model.
    Simulate(SimulateArgs),
    /// Learn a detection threshold from the anomaly-free start of a trace.
    Calibrate(CalibrateArgs),
    /// Run the calibrated detector over a trace.
    Detect(DetectArgs),
    /// Score a timeline against labels, or run the full feature grid.
    Eval(EvalArgs),
    /// Time one predict+test+update step.
    Bench(BenchArgs),
    /// Run the HTTP service in the foreground.
    Serve(ServeArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML or JSON simulation config; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "SENTINEL_SEED", default_value_t = 0)]
    seed: u64,
    /// Gzip the output (implied by a `.gz` output path).
    #[arg(long)]
    gzip: bool,
}

#[derive(Args)]
struct FeatureArgs {
    #[arg(long, default_value = "csi-var-vec")]
    feature: FeatureKind,
    #[arg(long, default_value = "ma")]
    predictor: PredictorKind,
    #[arg(long, default_value = "uni")]
    test: TestMode,
    #[arg(long, default_value_t = 1)]
    bundles: usize,
    /// Scale each packet's CSI to unit norm before extracting features.
    #[arg(long)]
    normalized: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    feature: FeatureArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    calib: PathBuf,
    /// Timeline JSON destination.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write one `t,h,decision` row per feature step.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Timeline produced by `detect`.
    #[arg(long, required_unless_present = "all_features")]
    timeline: Option<PathBuf>,
    /// JSON list of inclusive `[start, end]` window intervals.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Trace whose header supplies labels, or the input of `--all-features`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Windows after a label start that are not required to alarm.
    #[arg(long, default_value_t = 0)]
    grace: u64,
    /// Calibrate and detect every feature × test × B ∈ {1, 10} on `--trace`.
    #[arg(long, requires = "trace", conflicts_with = "timeline")]
    all_features: bool,
    /// Restricts `--all-features` to one predictor.
    #[arg(long)]
    predictor: Option<PredictorKind>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `--all-features` summary as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 504)]
    k: usize,
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
    #[arg(long, default_value = "ar")]
    predictor: PredictorKind,
    #[arg(long, default_value = "omni")]
    test: TestMode,
    #[arg(long, env = "SENTINEL_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
    fn data(message: impl Into<String>) -> Self {
        Self { code: EXIT_DATA, message: message.into() }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        match e.kind() {
            ErrorKind::Usage => Failure::usage(e.to_string()),
            _ => Failure::data(e.to_string()),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn open_input(path: &Path) -> Outcome<File> {
    File::open(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

/// Reads a file, transparently inflating gzip data.
fn read_bytes(path: &Path) -> Outcome<Vec<u8>> {
    let mut raw = Vec::new();
    open_input(path)?
        .read_to_end(&mut raw)
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        MultiGzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        return Ok(out);
    }
    Ok(raw)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Outcome<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn output(path: Option<&Path>, gzip: bool) -> Outcome<Box<dyn Write>> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let gzip = gzip || path.is_some_and(|p| p.extension().is_some_and(|e| e == "gz"));
    Ok(if gzip { Box::new(GzEncoder::new(sink, Compression::default())) } else { sink })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Outcome {
    let mut out = output(path, false)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Failure::data(e.to_string()))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| Failure::data(e.to_string()))
}

fn load_sim_config(path: &Path) -> Outcome<SimulationConfig> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    let config: SimulationConfig = parsed.map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    config
        .validate()
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    Ok(config)
}

/// Uploads a trace file and returns its id; the caller deletes it.
async fn upload(client: &Client, path: &Path) -> Outcome<TraceInfo> {
    Ok(client.upload_trace(read_bytes(path)?).await?)
}

async fn simulate(client: &Client, args: SimulateArgs) -> Outcome {
    let config = match &args.config {
        Some(p) => load_sim_config(p)?,
        None => SimulationConfig::default(),
    };
    let mut out = output(args.out.as_deref(), args.gzip)?;
    client
        .simulate_to(&SimulateRequest { config, seed: args.seed }, &mut out)
        .await?;
    drop(out);
    Ok(())
}

fn spec_of(args: &FeatureArgs) -> Outcome<FeatureSpec> {
    let spec = FeatureSpec::new(args.feature, args.bundles, args.normalized);
    spec.validate().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(spec)
}

async fn calibrate(client: &Client, args: CalibrateArgs) -> Outcome {
    let spec = spec_of(&args.feature)?;
    let trace = upload(client, &args.trace).await?;
    let req = CalibrateRequest {
        trace: trace.id,
        feature: spec,
        detector: default_detector(args.feature.predictor, args.feature.test),
        options: Default::default(),
        bundle_window: DEFAULT_BUNDLE_WINDOW,
    };
    let result = client.calibrate(&req).await;
    client.delete_trace(trace.id).await?;
    write_json(args.out.as_deref(), &result?.calibration)
}

fn write_csv(path: &Path, timeline: &Timeline) -> Outcome {
    let mut out = output(Some(path), false)?;
    let mut body = String::from("t,h,decision\n");
    for d in &timeline.decisions {
        body.push_str(&format!("{},{},{}\n", d.t, d.statistic, if d.is_anomaly() { "H1" } else { "H0" }));
    }
    out.write_all(body.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Failure::data(e.to_string()))
}

async fn detect(client: &Client, args: DetectArgs) -> Outcome {
    let calibration: CalibrationFile = read_json(&args.calib)?;
    let trace = upload(client, &args.trace).await?;
    let result = client.detect(&DetectRequest { trace: trace.id, calibration }).await;
    client.delete_trace(trace.id).await?;
    let timeline = result?;
    if let Some(csv) = &args.csv {
        write_csv(csv, &timeline)?;
    }
    write_json(args.out.as_deref(), &timeline)
}

fn trace_labels(path: &Path) -> Outcome<Vec<(u64, u64)>> {
    let bytes = read_bytes(path)?;
    let header = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
    let trace = read_trace(header).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    trace
        .meta
        .labels
        .ok_or_else(|| Failure::usage(format!("{} has no labels in its header; pass --labels", path.display())))
}

fn grid_csv(path: &Path, cells: &[GridCell]) -> Outcome {
    let mut out = output(Some(path), false)?;
    let mut body = String::from("feature,predictor,test,eta,intervals,anomaly_fraction,tpr,fpr,mean_latency,error\n");
    let opt = |v: Option<String>| v.unwrap_or_default();
    for c in cells {
        let m = c.metrics.as_ref();
        body.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            c.feature.label(),
            c.predictor,
            c.test,
            opt(c.eta.map(|v| v.to_string())),
            opt(c.intervals.map(|v| v.to_string())),
            opt(c.anomaly_fraction.map(|v| v.to_string())),
            opt(m.map(|m| m.tpr.to_string())),
            opt(m.map(|m| m.fpr.to_string())),
            opt(m.and_then(|m| m.mean_latency).map(|v| v.to_string())),
            c.error.as_deref().unwrap_or("").replace(',', ";"),
        ));
    }
    out.write_all(body.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Failure::data(e.to_string()))
}

async fn eval(client: &Client, args: EvalArgs) -> Outcome {
    let labels = match (&args.labels, &args.trace) {
        (Some(l), _) => Some(read_json::<Vec<(u64, u64)>>(l)?),
        (None, Some(t)) if !args.all_features => Some(trace_labels(t)?),
        _ => None,
    };
    if args.all_features {
        let path = args.trace.as_deref().expect("clap requires --trace");
        let trace = upload(client, path).await?;
        let predictors = args.predictor.map_or_else(|| PredictorKind::ALL.to_vec(), |p| vec![p]);
        let req = GridRequest {
            trace: trace.id,
            features: feature_grid(),
            predictors,
            labels,
            bundle_window: DEFAULT_BUNDLE_WINDOW,
        };
        let result = client.grid(&req).await;
        client.delete_trace(trace.id).await?;
        let cells = result?;
        if let Some(csv) = &args.csv {
            grid_csv(csv, &cells)?;
        }
        return write_json(args.out.as_deref(), &cells);
    }
    let labels = labels.ok_or_else(|| Failure::usage("eval needs --labels or a --trace with labels"))?;
    let timeline: Timeline = read_json(args.timeline.as_deref().expect("clap requires --timeline"))?;
    let metrics = client.eval(&EvalRequest { timeline, labels, grace: args.grace }).await?;
    write_json(args.out.as_deref(), &metrics)
}

async fn bench(client: &Client, args: BenchArgs) -> Outcome {
    let req = BenchRequest {
        k: args.k,
        iters: args.iters,
        predictor: args.predictor,
        test: args.test,
        seed: args.seed,
    };
    write_json(None, &client.bench(&req).await?)
}

async fn serve(args: ServeArgs) -> Outcome {
    let listener = tokio::net::TcpListener::bind(args.listen)
        .await
        .map_err(|e| Failure::usage(format!("cannot listen on {}: {e}", args.listen)))?;
    let addr = listener.local_addr().map_err(|e| Failure::data(e.to_string()))?;
    eprintln!("sentinel service listening on http://{addr}");
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    sentinel_server::serve(listener, shutdown)
        .await
        .map_err(|e| Failure::data(e.to_string()))
}

async fn run(cli: Cli) -> Outcome {
    if let Command::Serve(args) = cli.command {
        return serve(args).await;
    }
    let client = match cli.server {
        Some(url) => Client::new(url),
        None => {
            let (addr, _) = sentinel_server::spawn(([127, 0, 0, 1], 0).into())
                .await
                .map_err(|e| Failure::data(format!("cannot start local service: {e}")))?;
            Client::new(format!("http://{addr}"))
        }
    };
    match cli.command {
        Command::Simulate(a) => simulate(&client, a).await,
        Command::Calibrate(a) => calibrate(&client, a).await,
        Command::Detect(a) => detect(&client, a).await,
        Command::Eval(a) => eval(&client, a).await,
        Command::Bench(a) => bench(&client, a).await,
        Command::Serve(_) => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(io::stderr)
        .init();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("sentinel: {e}");
            return ExitCode::from(EXIT_DATA);
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sentinel: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

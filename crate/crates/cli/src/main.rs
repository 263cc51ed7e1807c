use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use edcnet::acoustics::{eyring_t60, SimConfig};
use edcnet::audio::{read_wav, write_wav};
use edcnet::binfmt::ArrayFile;
use edcnet::dataset::{generate_dataset, read_dataset, write_dataset, GenOptions};
use edcnet::edc::{analyze_signal, decay_params, rirs_to_targets, DEFAULT_EPSILON};
use edcnet::eval::{self, render_markdown, write_plot_data, EvalReport};
use edcnet::recon::{reconstruct_rir, RssConfig};
use edcnet::roomgen::{featurize, sample_room, FeatureVector, MinMaxScaler, RoomConfig, NUM_FEATURES};
use edcnet::train::{train, TrainConfig, BEST_CHECKPOINT, LOG_FILE};
use edcnet::{simulate_band_rirs, Checkpoint, EdcMatrix, Model, ModelConfig, RunStamp, HEADLINE_BAND};

/// A usage error: bad flag combinations the parser cannot see.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Usage(msg.into()).into())
}

#[derive(Parser)]
#[command(name = "edcnet", version, about = "Predict room energy decay curves and synthesize impulse responses")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded dataset of simulated rooms.
    Gen(GenArgs),
    /// Simulate one room and write its impulse response and decay curves.
    Simulate(SimulateArgs),
    /// Extract EDT, T20, T30 and C50 from a WAV file or curve file.
    Analyze(AnalyzeArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Predict decay curves for one room.
    Predict(PredictArgs),
    /// Synthesize an impulse response from decay curves.
    Reconstruct(ReconstructArgs),
    /// Score a model (or the targets themselves) on a dataset split.
    Eval(EvalArgs),
    /// Render an evaluation report.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    /// JSON file with generation options; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Samples per decay curve.
    #[arg(long)]
    edc_len: Option<usize>,
    #[arg(long)]
    sample_rate: Option<f64>,
    /// Cap on the reflection order (default: every image within the signal).
    #[arg(long)]
    max_order: Option<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Room description as JSON; otherwise a room is sampled from --seed.
    #[arg(long)]
    room: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16_000.0)]
    sample_rate: f64,
    #[arg(long, default_value_t = 1000)]
    edc_len: usize,
    #[arg(long)]
    max_order: Option<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, conflicts_with = "edc")]
    wav: Option<PathBuf>,
    /// Curve file as written by `predict` or `simulate`.
    #[arg(long)]
    edc: Option<PathBuf>,
    /// Seconds per curve sample; read from the stamp file when omitted.
    #[arg(long)]
    frame_dt: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Tiny,
    Micro,
    Paper9m,
}

impl Preset {
    fn config(self) -> ModelConfig {
        match self {
            Preset::Desk => ModelConfig::desk(),
            Preset::Tiny => ModelConfig::tiny(),
            Preset::Micro => ModelConfig::micro(),
            Preset::Paper9m => ModelConfig::paper9m(),
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Directory for checkpoints and the training log.
    #[arg(long)]
    out: PathBuf,
    /// JSON file with training options; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Weight of the slope term.
    #[arg(long)]
    alpha: Option<f64>,
    /// Stride of the slope finite difference.
    #[arg(long)]
    stride_k: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    chunk_size: Option<usize>,
    /// Continue from last.ckpt in --out.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// JSON: a room description, 16 raw features, or {"features": [...]}.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    edc: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Which curve matrix of the file to use.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    frame_dt: Option<f64>,
    #[arg(long)]
    sample_rate: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability of keeping the previous sign.
    #[arg(long, default_value_t = 0.9)]
    stickiness: f64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, required_unless_present = "self_check", conflicts_with = "self_check")]
    ckpt: Option<PathBuf>,
    /// Score the targets against themselves.
    #[arg(long)]
    self_check: bool,
    #[arg(long)]
    out: PathBuf,
    /// Directory for CSV plot data.
    #[arg(long)]
    plots: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Json,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "md")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Stamp and curve timing stored next to a binary or audio artifact.
#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    stamp: RunStamp,
    #[serde(default)]
    frame_dt: Option<f64>,
    #[serde(default)]
    sample_rate: Option<f64>,
    #[serde(default)]
    bands: Option<Vec<f64>>,
    #[serde(default)]
    extra: Value,
}

fn sidecar_path(p: &Path) -> PathBuf {
    let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    p.with_file_name(format!("{name}.stamp.json"))
}

fn write_sidecar(p: &Path, s: &Sidecar) -> Result<()> {
    write_json(&sidecar_path(p), s)
}

fn read_sidecar(p: &Path) -> Option<Sidecar> {
    let bytes = fs::read(sidecar_path(p)).ok()?;
    serde_json::from_slice(&bytes).ok()
}

fn write_json<T: Serialize>(p: &Path, v: &T) -> Result<()> {
    if let Some(d) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d)?;
    }
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(p, s).with_context(|| format!("writing {}", p.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(p: &Path) -> Result<T> {
    let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", p.display()))
}

fn emit(out: Option<&Path>, v: &Value) -> Result<()> {
    match out {
        Some(p) => write_json(p, v),
        None => {
            println!("{}", serde_json::to_string_pretty(v)?);
            Ok(())
        }
    }
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let mut opts: GenOptions = match &a.config {
        Some(p) => read_json(p)?,
        None => GenOptions::default(),
    };
    if let Some(v) = a.count {
        opts.count = v;
    }
    if let Some(v) = a.seed {
        opts.seed = v;
    }
    if let Some(v) = a.edc_len {
        opts.edc_len = v;
    }
    if let Some(v) = a.sample_rate {
        opts.sim.sample_rate = v;
    }
    if a.max_order.is_some() {
        opts.sim.max_order = a.max_order;
    }
    let ds = generate_dataset(&opts)?;
    write_dataset(&ds, &a.out)?;
    let m = &ds.manifest;
    log::info!("wrote {} rooms to {}", m.count, a.out.display());
    println!(
        "{} rooms ({} train / {} val / {} test), {} samples per response, {:.2} ms per curve sample",
        m.count,
        m.train.len(),
        m.val.len(),
        m.test.len(),
        m.signal_len,
        1e3 * m.frame_dt
    );
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let room: RoomConfig = match &a.room {
        Some(p) => read_json(p)?,
        None => sample_room(a.seed)?,
    };
    room.validate_positions(0.0)?;
    let sim = SimConfig {
        sample_rate: a.sample_rate,
        max_order: a.max_order,
        ..SimConfig::default()
    };
    let rirs = simulate_band_rirs(&room, &sim)?;
    let edcs = rirs_to_targets(&rirs, a.edc_len)?;
    let n = rirs.len();

    let mut sum = vec![0.0; n];
    for s in &rirs.signals {
        for (o, v) in sum.iter_mut().zip(s) {
            *o += v;
        }
    }
    let peak = sum.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        sum.iter_mut().for_each(|v| *v *= 0.99 / peak);
    }

    fs::create_dir_all(&a.out)?;
    let stamp = RunStamp::new(&(&room, &sim, a.edc_len), room.seed);
    let side = |frame_dt| Sidecar {
        stamp: stamp.clone(),
        frame_dt,
        sample_rate: Some(a.sample_rate),
        bands: Some(rirs.bands.clone()),
        extra: Value::Null,
    };
    write_json(&a.out.join("room.json"), &room)?;
    write_sidecar(&a.out.join("room.json"), &side(None))?;
    let wav = a.out.join("rir.wav");
    write_wav(&wav, &sum, a.sample_rate)?;
    write_sidecar(&wav, &side(None))?;
    let bands_path = a.out.join("bands.bin");
    let flat: Vec<f32> = rirs.signals.iter().flatten().map(|&v| v as f32).collect();
    ArrayFile::new([1, rirs.signals.len() as u64, n as u64], flat)?.write(&bands_path)?;
    write_sidecar(&bands_path, &side(Some(1.0 / a.sample_rate)))?;
    let edc_path = a.out.join("edc.bin");
    let flat: Vec<f32> = edcs.curves.iter().map(|&v| v as f32).collect();
    ArrayFile::new([1, edcs.bands as u64, edcs.len as u64], flat)?.write(&edc_path)?;
    write_sidecar(&edc_path, &side(Some(edcs.frame_dt)))?;

    let p = decay_params(edcs.row(HEADLINE_BAND), edcs.frame_dt, DEFAULT_EPSILON)?;
    let summary = json!({
        "images": rirs.image_count,
        "max_order": rirs.max_order,
        "samples": n,
        "eyring_t60_1k_s": eyring_t60(&room, HEADLINE_BAND)?,
        "t30_1k_s": p.t30_s,
        "edt_1k_s": p.edt_s,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<()> {
    if let Some(wav) = &a.wav {
        let (x, fs) = read_wav(wav).with_context(|| format!("reading {}", wav.display()))?;
        let p = analyze_signal(&x, fs)?;
        let v = json!({
            "input": wav,
            "sample_rate": fs,
            "params": p,
            "stamp": RunStamp::new(&(wav, a.epsilon), 0),
        });
        return emit(a.out.as_deref(), &v);
    }
    let Some(path) = &a.edc else {
        return usage("analyze needs --wav or --edc");
    };
    let file = ArrayFile::read(path).with_context(|| format!("reading {}", path.display()))?;
    let side = read_sidecar(path);
    let Some(frame_dt) = a.frame_dt.or(side.as_ref().and_then(|s| s.frame_dt)) else {
        return usage(format!("no stamp file next to {}; pass --frame-dt", path.display()));
    };
    let [rooms, bands, len] = file.dims.map(|d| d as usize);
    let mut out = Vec::with_capacity(rooms);
    for r in 0..rooms {
        let mut per_band = Vec::with_capacity(bands);
        for b in 0..bands {
            let row = &file.data[(r * bands + b) * len..(r * bands + b + 1) * len];
            per_band.push(decay_params(row, frame_dt, a.epsilon)?);
        }
        out.push(per_band);
    }
    let v = json!({
        "input": path,
        "frame_dt": frame_dt,
        "bands": side.and_then(|s| s.bands),
        "params": out,
        "stamp": RunStamp::new(&(path, frame_dt, a.epsilon), 0),
    });
    emit(a.out.as_deref(), &v)
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct TrainFile {
    preset: Option<String>,
    model: Option<ModelConfig>,
    #[serde(flatten)]
    train: TrainConfig,
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let file: TrainFile = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainFile::default(),
    };
    let mut cfg = file.train;
    let mut model = match (a.preset, file.model, file.preset) {
        (Some(p), _, _) => p.config(),
        (None, Some(m), _) => m,
        (None, None, Some(name)) => ModelConfig::preset(&name).map_err(|e| Usage(e.to_string()))?,
        (None, None, None) => ModelConfig::desk(),
    };
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.adam.learning_rate = v;
    }
    if let Some(v) = a.alpha {
        cfg.loss.alpha = v;
    }
    if let Some(v) = a.stride_k {
        cfg.loss.k = v;
    }
    if let Some(v) = a.epsilon {
        cfg.loss.epsilon = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.patience {
        cfg.patience = v;
    }
    if let Some(v) = a.chunk_size {
        cfg.chunk_size = v;
    }
    cfg.checkpoint_dir = Some(a.out.clone());
    if let Err(e) = cfg.validate() {
        return usage(e.to_string());
    }

    let ds = read_dataset(&a.data).with_context(|| format!("reading dataset {}", a.data.display()))?;
    let m = &ds.manifest;
    if model.out_len != m.edc_len || model.bands != m.bands.len() {
        log::info!(
            "adapting model output from ({}, {}) to the dataset's ({}, {})",
            model.bands,
            model.out_len,
            m.bands.len(),
            m.edc_len
        );
        model.out_len = m.edc_len;
        model.bands = m.bands.len();
    }
    model.validate()?;
    if a.stride_k.is_none() && cfg.loss.k >= model.out_len {
        cfg.loss.k = (model.out_len / 4).max(1);
        log::info!("slope stride reduced to {} for curves of {} samples", cfg.loss.k, model.out_len);
    }
    log::info!("{} parameters", model.count_params());
    let extra = json!({
        "scaler": m.scaler,
        "frame_dt": m.frame_dt,
        "sample_rate": m.sample_rate,
        "bands": m.bands,
        "dataset_stamp": m.stamp,
    });
    let (_, log) = train::<f32>(&ds.train_set(), &model, &cfg, &extra, a.resume)?;
    let first = log.epochs.first().map(|e| e.train_loss);
    let last = log.epochs.last().map(|e| e.train_loss);
    println!(
        "{} epochs, train loss {} -> {}, best val {} at epoch {}; {} and {} in {}",
        log.epochs.len(),
        first.map_or("n/a".into(), |v| format!("{v:.4}")),
        last.map_or("n/a".into(), |v| format!("{v:.4}")),
        log.best_val_loss.map_or("n/a".into(), |v| format!("{v:.4}")),
        log.best_epoch.map_or("n/a".into(), |v| v.to_string()),
        BEST_CHECKPOINT,
        LOG_FILE,
        a.out.display()
    );
    Ok(())
}

/// Checkpoint metadata needed to serve predictions.
struct Serving {
    scaler: MinMaxScaler,
    frame_dt: f64,
    sample_rate: f64,
    bands: Vec<f64>,
}

fn serving(ck: &Checkpoint<f32>, path: &Path) -> Result<Serving> {
    let field = |k: &str| {
        ck.extra
            .get(k)
            .cloned()
            .ok_or_else(|| anyhow!("{} lacks '{k}'; was it written by `edcnet train`?", path.display()))
    };
    Ok(Serving {
        scaler: serde_json::from_value(field("scaler")?)?,
        frame_dt: serde_json::from_value(field("frame_dt")?)?,
        sample_rate: serde_json::from_value(field("sample_rate")?)?,
        bands: serde_json::from_value(field("bands")?)?,
    })
}

fn parse_features(v: &Value) -> Result<FeatureVector> {
    let arr = match v {
        Value::Array(_) => v,
        Value::Object(o) if o.contains_key("features") => &o["features"],
        Value::Object(_) => {
            let room: RoomConfig = serde_json::from_value(v.clone())?;
            return Ok(featurize(&room));
        }
        _ => return Err(anyhow!("expected a room object or a feature array")),
    };
    let xs: Vec<f64> = serde_json::from_value(arr.clone())?;
    let f: [f64; NUM_FEATURES] = xs
        .try_into()
        .map_err(|xs: Vec<f64>| anyhow!("expected {NUM_FEATURES} features, got {}", xs.len()))?;
    Ok(FeatureVector(f))
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let ck = Checkpoint::<f32>::load(&a.ckpt).with_context(|| format!("loading {}", a.ckpt.display()))?;
    let s = serving(&ck, &a.ckpt)?;
    let raw = parse_features(&read_json::<Value>(&a.features)?)?;
    let (scaled, clamped) = s.scaler.scale_clamped(&raw);
    if clamped > 0 {
        log::warn!("{clamped} features lie far outside the training range and were clamped");
    }
    let x: Vec<f32> = scaled.0.iter().map(|&v| v as f32).collect();
    let model: &Model = &ck.params;
    let y = model.predict(&x)?;
    let c = &model.config;
    if let Some(d) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d)?;
    }
    ArrayFile::new([1, c.bands as u64, c.out_len as u64], y)?.write(&a.out)?;
    write_sidecar(
        &a.out,
        &Sidecar {
            stamp: RunStamp::new(&(&raw.0, &ck.stamp), ck.seed),
            frame_dt: Some(s.frame_dt),
            sample_rate: Some(s.sample_rate),
            bands: Some(s.bands),
            extra: json!({ "checkpoint": a.ckpt, "clamped_features": clamped }),
        },
    )?;
    println!("wrote ({}, {}) curves to {}", c.bands, c.out_len, a.out.display());
    Ok(())
}

fn cmd_reconstruct(a: ReconstructArgs) -> Result<()> {
    let file = ArrayFile::read(&a.edc).with_context(|| format!("reading {}", a.edc.display()))?;
    let side = read_sidecar(&a.edc);
    let Some(frame_dt) = a.frame_dt.or(side.as_ref().and_then(|s| s.frame_dt)) else {
        return usage(format!("no stamp file next to {}; pass --frame-dt", a.edc.display()));
    };
    let fs_hz = a
        .sample_rate
        .or(side.as_ref().and_then(|s| s.sample_rate))
        .unwrap_or(edcnet::acoustics::DEFAULT_SAMPLE_RATE);
    let [rooms, bands, len] = file.dims.map(|d| d as usize);
    if a.index >= rooms {
        return usage(format!("--index {} but the file holds {rooms} curve sets", a.index));
    }
    let curves: Vec<f64> = file.data[a.index * bands * len..(a.index + 1) * bands * len]
        .iter()
        .map(|&v| v as f64)
        .collect();
    let edc = EdcMatrix::new(bands, len, frame_dt, curves)?;
    let cfg = RssConfig { p: a.stickiness, seed: a.seed };
    if let Err(e) = cfg.validate() {
        return usage(e.to_string());
    }
    let rec = reconstruct_rir(&edc, fs_hz, &cfg)?;
    if rec.clamped_steps > 0 {
        log::warn!("{} rising curve steps were treated as silence", rec.clamped_steps);
    }
    if let Some(d) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d)?;
    }
    write_wav(&a.out, &rec.waveform, fs_hz)?;
    write_sidecar(
        &a.out,
        &Sidecar {
            stamp: RunStamp::new(&(&a.edc, a.index, frame_dt, fs_hz, cfg), a.seed),
            frame_dt: None,
            sample_rate: Some(fs_hz),
            bands: side.and_then(|s| s.bands),
            extra: json!({ "gain": rec.gain, "clamped_steps": rec.clamped_steps }),
        },
    )?;
    println!("wrote {} samples at {fs_hz} Hz to {}", rec.waveform.len(), a.out.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let ds = read_dataset(&a.data).with_context(|| format!("reading dataset {}", a.data.display()))?;
    if ds.manifest.test.is_empty() {
        return Err(anyhow!("dataset has an empty test split"));
    }
    let mut report = match &a.ckpt {
        Some(p) => {
            let ck = Checkpoint::<f32>::load(p).with_context(|| format!("loading {}", p.display()))?;
            eval::evaluate(&ck.params, &ds, a.epsilon)?
        }
        None => eval::self_check(&ds, a.epsilon)?,
    };
    report.stamp = Some(RunStamp::new(
        &(&ds.manifest.stamp, &a.ckpt, a.self_check, a.epsilon),
        ds.manifest.global_seed,
    ));
    fs::write(&a.out, report.to_json()? + "\n").with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(dir) = &a.plots {
        write_plot_data(&report, dir)?;
    }
    print!("{}", render_markdown(&report));
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let report = EvalReport::from_json(&text)?;
    let out = match a.format {
        Format::Md => render_markdown(&report),
        Format::Json => report.to_json()? + "\n",
    };
    match a.out {
        Some(p) => fs::write(p, out)?,
        None => print!("{out}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

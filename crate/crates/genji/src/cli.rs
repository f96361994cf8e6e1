//! The `genji` command line.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use genji_core::classifier::{
    evaluate, train, train_centroids, Metrics, ModelConfig, Positional, Prediction, TrainConfig, VoteMode, VoteState,
    WindowClassifier,
};
use genji_core::diagram::render_pattern;
use genji_core::features::{PreprocessFlags, WindowConfig};
use genji_core::partition::{enumerate_partitions, Partition};
use genji_core::sensor::{synth_recording, Environment, SynthParams, TimeOfDay, NOMINAL_RATE_HZ};
use genji_core::session::replay;
use serde::Serialize;
use serde_json::{json, Value};

use crate::artifact::{load_model, save_model};
use crate::eventlog::read_events;
use crate::knowledge::load_sequences;
use crate::recording::{load_split, read_recording, write_dataset, write_recording, DatasetSpec, Split};
use crate::sensing::{SharedClassifier, StreamingPredictor};
use crate::server::config::ServerConfig;
use crate::server::protocol::WireMessage;
use crate::server::{router, AppState};
use crate::stream::{open_stream, Speedup};

#[derive(Parser, Debug)]
#[command(name = "genji", version, about = "Genji-kō incense game with a sensing partner")]
pub struct Cli {
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// The 52 genji-mon patterns.
    #[command(subcommand)]
    Patterns(PatternsCmd),
    /// Write one synthetic recording.
    Synth(SynthArgs),
    /// Write a labelled synthetic dataset with a manifest.
    Dataset(DatasetArgs),
    /// Train the transformer classifier.
    Train(TrainArgs),
    /// Score a classifier on a dataset split.
    Eval(EvalArgs),
    /// Classify one recording.
    Infer(InferArgs),
    /// Play a scripted game against an in-process server.
    Simulate(SimulateArgs),
    /// Rebuild a session from its event log.
    Replay(ReplayArgs),
    /// Run the HTTP/WebSocket server.
    Serve(ServeArgs),
    /// Print a shell completion script.
    Completions { shell: clap_complete::Shell },
}

#[derive(Subcommand, Debug)]
pub enum PatternsCmd {
    List,
    /// SVG of one complete pattern.
    Render {
        /// Restricted growth string such as 01012.
        #[arg(long)]
        rgs: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EnvArg {
    Indoor,
    Outdoor,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TimeArg {
    Morning,
    Evening,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub class: u8,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 120)]
    pub duration: u32,
    #[arg(long, default_value_t = genji_core::sensor::DEFAULT_NOISE_SIGMA)]
    pub noise: f64,
    #[arg(long, value_enum, default_value = "indoor")]
    pub environment: EnvArg,
    #[arg(long, value_enum, default_value = "evening")]
    pub time: TimeArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DatasetArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub train_per_class: u32,
    #[arg(long, default_value_t = 2)]
    pub test_per_class: u32,
    #[arg(long, default_value_t = 120)]
    pub duration: u32,
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Training settings file; every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub window: usize,
    pub stride: usize,
    pub flags: PreprocessFlags,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            window: 100,
            stride: 50,
            flags: PreprocessFlags::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl TrainSettings {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
    }

    fn window_config(&self) -> Result<WindowConfig, CliError> {
        WindowConfig::new(self.window, self.stride).map_err(|e| CliError::Domain(e.to_string()))
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// First-order temporal differencing.
    #[arg(long)]
    pub diff: bool,
    /// High-pass cutoff in Hz.
    #[arg(long)]
    pub highpass: Option<f64>,
    #[arg(long)]
    pub no_scale: bool,
}

impl PreprocessArgs {
    fn apply(&self, s: &mut TrainSettings) {
        if let Some(w) = self.window {
            s.window = w;
        }
        if let Some(st) = self.stride {
            s.stride = st;
        }
        if self.diff {
            s.flags.diff = true;
        }
        if self.highpass.is_some() {
            s.flags.highpass_hz = self.highpass;
        }
        if self.no_scale {
            s.flags.scale = false;
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset manifest; the train split is used.
    #[arg(long, alias = "data")]
    pub manifest: PathBuf,
    /// TOML training settings; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub prep: PreprocessArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub d_ff: Option<usize>,
    #[arg(long)]
    pub head_hidden: Option<usize>,
    /// Drop the positional encoding.
    #[arg(long)]
    pub no_positional: bool,
}

impl TrainArgs {
    fn settings(&self) -> Result<TrainSettings, CliError> {
        let mut s = match &self.config {
            Some(p) => TrainSettings::load(p)?,
            None => TrainSettings::default(),
        };
        self.prep.apply(&mut s);
        let t = &mut s.train;
        t.epochs = self.epochs.unwrap_or(t.epochs);
        t.lr = self.lr.unwrap_or(t.lr);
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.seed = self.seed.unwrap_or(t.seed);
        let m = &mut s.model;
        m.d_model = self.d_model.unwrap_or(m.d_model);
        m.n_heads = self.heads.unwrap_or(m.n_heads);
        m.n_layers = self.layers.unwrap_or(m.n_layers);
        m.d_ff = self.d_ff.unwrap_or(m.d_ff);
        m.head_hidden = self.head_hidden.unwrap_or(m.head_hidden);
        if self.no_positional {
            m.positional = Positional::None;
        }
        Ok(s)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum VoteArg {
    Count,
    ProbabilitySum,
}

impl From<VoteArg> for VoteMode {
    fn from(v: VoteArg) -> Self {
        match v {
            VoteArg::Count => VoteMode::Count,
            VoteArg::ProbabilitySum => VoteMode::ProbabilitySum,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, alias = "data")]
    pub manifest: PathBuf,
    /// Trained model; omit with `--centroid`.
    #[arg(long, required_unless_present = "centroid")]
    pub model: Option<PathBuf>,
    /// Evaluate the nearest-centroid baseline fitted on the train split.
    #[arg(long)]
    pub centroid: bool,
    /// TOML settings for the centroid baseline's preprocessing.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub prep: PreprocessArgs,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value = "count")]
    pub vote: VoteArg,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub recording: PathBuf,
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// Replay the recording as a paced live stream.
    #[arg(long)]
    pub stream: bool,
    /// Playback speed for `--stream`; `inf` for no pacing.
    #[arg(long, default_value = "1")]
    pub speedup: Speedup,
    #[arg(long, value_enum, default_value = "count")]
    pub vote: VoteArg,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// JSON game script: `{"sequence_id": ..., "messages": [...]}`.
    #[arg(long)]
    pub script: PathBuf,
    /// Token to register for the scripted sequence.
    #[arg(long)]
    pub token: Option<String>,
    /// Model for live sensing; rounds get uniform predictions without one.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub sequences: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub sequences: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub no_sensing: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

macro_rules! domain_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Domain(e.to_string())
            }
        }
    )*};
}

domain_from!(
    genji_core::classifier::ClassifierError,
    genji_core::sensor::SensorError,
    genji_core::session::SessionError,
    genji_core::partition::PartitionError,
    crate::recording::RecordingFileError,
    crate::artifact::ArtifactError,
    crate::eventlog::LogError,
    crate::knowledge::KnowledgeError,
    crate::server::StartupError,
    crate::server::CreateError,
    crate::server::config::ConfigError,
    crate::server::tokens::TokenError,
    serde_json::Error
);

struct Out {
    json: bool,
}

impl Out {
    fn emit<T: Serialize>(&self, value: &T, human: impl FnOnce() -> String) {
        let mut stdout = std::io::stdout().lock();
        let text = if self.json { serde_json::to_string(value).expect("serializable") } else { human() };
        let _ = writeln!(stdout, "{text}");
    }
}

/// Parses arguments and runs; 0 on success, 1 on a domain error, 2 on a
/// usage error.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let json = cli.json;
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if json {
                println!("{}", json!({ "error": e.to_string() }));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(1)
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let out = Out { json: cli.json };
    match cli.command {
        Command::Patterns(cmd) => patterns(&out, cmd),
        Command::Synth(a) => synth(&out, a),
        Command::Dataset(a) => dataset(&out, a),
        Command::Train(a) => train_cmd(&out, a),
        Command::Eval(a) => eval_cmd(&out, a),
        Command::Infer(a) => infer(&out, a),
        Command::Simulate(a) => simulate(&out, a),
        Command::Replay(a) => replay_cmd(&out, a),
        Command::Serve(a) => serve(a),
        Command::Completions { shell } => {
            clap_complete::generate(shell, &mut Cli::command(), "genji", &mut std::io::stdout());
            Ok(())
        }
    }
}

fn patterns(out: &Out, cmd: PatternsCmd) -> Result<(), CliError> {
    match cmd {
        PatternsCmd::List => {
            let all = enumerate_partitions(genji_core::ROUNDS)?;
            let rows: Vec<Value> = all
                .iter()
                .enumerate()
                .map(|(i, p)| json!({ "index": i, "id": p.id(), "groups": p.group_count() }))
                .collect();
            out.emit(&rows, || {
                all.iter()
                    .enumerate()
                    .map(|(i, p)| format!("{:2} {} {}", i, p.id(), p.group_count()))
                    .collect::<Vec<_>>()
                    .join("\n")
            });
        }
        PatternsCmd::Render { rgs, out: path } => {
            let p = Partition::parse(&rgs)?;
            let diagram = render_pattern(&p)
                .ok_or_else(|| CliError::Domain(format!("{rgs} is not a complete five-round pattern")))?;
            let svg = diagram.to_svg();
            match path {
                Some(path) => std::fs::write(&path, &svg)?,
                None => out.emit(&json!({ "id": p.id(), "svg": svg }), || svg.clone()),
            }
        }
    }
    Ok(())
}

fn synth(out: &Out, a: SynthArgs) -> Result<(), CliError> {
    let params = SynthParams {
        environment: match a.environment {
            EnvArg::Indoor => Environment::Indoor,
            EnvArg::Outdoor => Environment::Outdoor,
        },
        time_of_day: match a.time {
            TimeArg::Morning => TimeOfDay::Morning,
            TimeArg::Evening => TimeOfDay::Evening,
        },
        noise_sigma: a.noise,
        ..SynthParams::new(a.class, a.seed, a.duration)
    };
    let rec = synth_recording(&params)?;
    std::fs::create_dir_all(&a.out)?;
    let (csv, meta) = write_recording(&a.out, &rec)?;
    let values = rec.len() * genji_core::NUM_CHANNELS;
    out.emit(&json!({ "csv": csv, "meta": meta, "frames": rec.len(), "channel_values": values }), || {
        format!("wrote {} frames ({values} channel values) to {}", rec.len(), csv.display())
    });
    Ok(())
}

fn dataset(out: &Out, a: DatasetArgs) -> Result<(), CliError> {
    let spec = DatasetSpec {
        train_per_class: a.train_per_class,
        test_per_class: a.test_per_class,
        duration_s: a.duration,
        noise_sigma: a.noise,
        seed: a.seed,
    };
    std::fs::create_dir_all(&a.out)?;
    let manifest = write_dataset(&a.out, &spec)?;
    out.emit(&json!({ "manifest": manifest }), || format!("wrote {}", manifest.display()));
    Ok(())
}

fn train_cmd(out: &Out, a: TrainArgs) -> Result<(), CliError> {
    let settings = a.settings()?;
    let recordings = load_split(&a.manifest, Split::Train)?;
    let (model, report) =
        train(&recordings, settings.model, settings.window_config()?, &settings.flags, &settings.train)?;
    save_model(&model, &a.out)?;
    out.emit(&json!({ "model": a.out, "report": report, "checksum": format!("{:016x}", model.checksum()) }), || {
        format!(
            "trained on {} windows: loss {:.4} -> {:.4}; saved {}",
            report.n_windows,
            report.initial_loss,
            report.final_loss,
            a.out.display()
        )
    });
    Ok(())
}

fn metrics_text(m: &Metrics) -> String {
    let mut s = format!(
        "window accuracy {:.4} ({} windows)\nrecording accuracy {:.4} ({}/{})\nconfusion (rows true, cols predicted):",
        m.window_accuracy, m.n_windows, m.recording_accuracy, m.recordings_correct, m.n_recordings
    );
    for row in &m.confusion {
        s.push('\n');
        s.push_str(&row.iter().map(|c| format!("{c:5}")).collect::<String>());
    }
    s
}

fn eval_cmd(out: &Out, a: EvalArgs) -> Result<(), CliError> {
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let recordings = load_split(&a.manifest, split)?;
    let metrics = if a.centroid {
        let mut settings = match &a.config {
            Some(p) => TrainSettings::load(p)?,
            None => TrainSettings::default(),
        };
        a.prep.apply(&mut settings);
        let train_set = load_split(&a.manifest, Split::Train)?;
        let model = train_centroids(&train_set, settings.window_config()?, &settings.flags)?;
        evaluate(&model, &recordings, a.vote.into())?
    } else {
        let path = a.model.as_deref().expect("clap requires --model");
        evaluate(&load_model(path)?, &recordings, a.vote.into())?
    };
    out.emit(&metrics, || metrics_text(&metrics));
    Ok(())
}

#[derive(Serialize)]
struct WindowLine {
    window: u32,
    class: usize,
    probs: [f64; genji_core::NUM_CLASSES],
}

fn infer(out: &Out, a: InferArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let recording = read_recording(&a.recording, a.meta.as_deref())?;
    let mode: VoteMode = a.vote.into();
    let mut vote = VoteState::new();
    let line = |i: u32, p: &Prediction| WindowLine { window: i, class: p.class, probs: p.probs };
    let print = |w: &WindowLine| {
        out.emit(w, || {
            let probs: Vec<String> = w.probs.iter().map(|p| format!("{p:.3}")).collect();
            format!("window {:3}: class {} [{}]", w.window, w.class, probs.join(" "))
        })
    };
    if a.stream {
        let shared: SharedClassifier = Arc::new(model);
        let mut predictor = StreamingPredictor::new(shared, 1, NOMINAL_RATE_HZ);
        for frame in open_stream(&recording, a.speedup) {
            if let Some(u) = predictor.push(frame)? {
                print(&line(u.window, &u.prediction));
            }
        }
        vote = predictor.vote().clone();
    } else {
        for (i, p) in model.predict_recording(&recording)?.iter().enumerate() {
            vote.accumulate(p);
            print(&line(i as u32, p));
        }
    }
    let class = vote.result(mode)?;
    let summary =
        json!({ "class": class, "votes": vote.counts, "windows": vote.total, "distribution": vote.distribution(mode) });
    out.emit(&summary, || format!("voted class {class} over {} windows, votes {:?}", vote.total, vote.counts));
    Ok(())
}

fn temp_dir(tag: &str) -> PathBuf {
    std::env::temp_dir().join(format!("genji-{tag}-{}-{:08x}", std::process::id(), rand::random::<u32>()))
}

#[derive(serde::Deserialize)]
struct Script {
    sequence_id: String,
    messages: Vec<Value>,
}

fn simulate(out: &Out, a: SimulateArgs) -> Result<(), CliError> {
    let script: Script = serde_json::from_str(&std::fs::read_to_string(&a.script)?)?;
    let dir = temp_dir("sim");
    let result = simulate_in(out, &a, &script, &dir);
    let _ = std::fs::remove_dir_all(&dir);
    result
}

fn simulate_in(out: &Out, a: &SimulateArgs, script: &Script, dir: &Path) -> Result<(), CliError> {
    let mut config =
        ServerConfig { data_dir: dir.to_path_buf(), sequences_path: a.sequences.clone(), ..ServerConfig::default() };
    config.sensing.speedup = f64::INFINITY;
    config.sensing.enabled = a.model.is_some();
    let classifier = match &a.model {
        Some(p) => Some(Arc::new(load_model(p)?) as SharedClassifier),
        None => None,
    };
    let app = AppState::open_with_classifier(config, classifier)?;
    if !app.sequences.contains_key(&script.sequence_id) {
        return Err(CliError::Domain(format!("unknown sequence {:?}", script.sequence_id)));
    }
    let record = app.tokens.issue(a.token.clone(), &script.sequence_id, true, crate::server::now_ms())?;
    let slot = app.create_session(&record.token)?;
    let mut rx = slot.tx.subscribe();
    let mut transcript: Vec<WireMessage> = Vec::new();
    let drain = |rx: &mut tokio::sync::broadcast::Receiver<String>, transcript: &mut Vec<WireMessage>| {
        while let Ok(text) = rx.try_recv() {
            transcript.push(serde_json::from_str(&text).expect("server emits wire messages"));
        }
    };
    for (i, msg) in script.messages.iter().enumerate() {
        let mut msg = msg.clone();
        if let Some(obj) = msg.as_object_mut() {
            obj.entry("v").or_insert(json!(crate::server::protocol::PROTOCOL_VERSION));
        }
        if let Some(err) = app.dispatch_blocking(&slot, &msg.to_string()) {
            return Err(CliError::Domain(format!("script message {} rejected: {err}", i + 1)));
        }
        app.sense_blocking(&slot);
        drain(&mut rx, &mut transcript);
    }
    let ctl = slot.controller.lock().expect("controller lock");
    let session = ctl.session();
    let summary = match &session.reveal {
        Some(r) => serde_json::to_value(r)?,
        None => json!({ "phase": session.phase, "player_pattern": session.player_partition().id() }),
    };
    out.emit(&summary, || {
        let mut lines: Vec<String> = transcript
            .iter()
            .map(|m| match m.kind.as_str() {
                "utterance" => format!(
                    "[{}] {}: {}",
                    m.seq_no,
                    app.services.persona.name,
                    m.payload["text"].as_str().unwrap_or("")
                ),
                "phase" => format!("[{}] phase {}", m.seq_no, m.payload["phase"]),
                other => format!("[{}] {other}", m.seq_no),
            })
            .collect();
        if let Some(r) = &session.reveal {
            lines.push(format!(
                "player {} truth {}: {} of {} pairs agree, exact {}",
                r.player.id(),
                r.truth.id(),
                r.score.pair_matches,
                r.score.total_pairs,
                r.score.exact
            ));
        }
        lines.join("\n")
    });
    Ok(())
}

fn replay_cmd(out: &Out, a: ReplayArgs) -> Result<(), CliError> {
    let events = read_events(&a.events)?;
    let sequences: std::collections::BTreeMap<String, _> =
        load_sequences(a.sequences.as_deref())?.into_iter().map(|s| (s.id().to_string(), s)).collect();
    let session = replay(&events, &sequences)?;
    let summary = json!({
        "session_id": session.session_id,
        "sequence_id": session.sequence.id(),
        "phase": session.phase,
        "events": session.events.len(),
        "player_pattern": session.player_partition().id(),
        "score": session.reveal.as_ref().map(|r| r.score),
    });
    out.emit(&summary, || {
        format!(
            "session {} replayed {} events; phase {}, pattern {}",
            session.session_id,
            session.events.len(),
            session.phase,
            session.player_partition().id()
        )
    });
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let mut config = match &a.config {
        Some(p) => ServerConfig::load(p)?,
        None => ServerConfig::default(),
    };
    config.apply_env(|k| std::env::var(k).ok())?;
    if let Some(p) = a.port {
        config.port = p;
    }
    if let Some(d) = a.data_dir {
        config.data_dir = d;
    }
    if let Some(m) = a.model {
        config.model_path = Some(m);
    }
    if a.no_sensing {
        config.sensing.enabled = false;
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let addr = format!("{}:{}", config.bind, config.port);
        let port = config.port;
        let app = AppState::open(config)?;
        let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| {
            if e.kind() == std::io::ErrorKind::AddrInUse {
                CliError::Domain(format!("port {port} is already in use; pick another with --port or PORT"))
            } else {
                CliError::Domain(format!("cannot listen on {addr}: {e}"))
            }
        })?;
        eprintln!("listening on http://{addr}");
        axum::serve(listener, router(app))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

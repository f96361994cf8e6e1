//! HTTP and WebSocket game server.

pub mod config;
pub mod controller;
pub mod http;
pub mod protocol;
pub mod tokens;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use genji_core::dialogue::{StubGenerator, TextGenerator};
use genji_core::sensor::{synth_recording, SynthParams};
use genji_core::session::{create_session, replay, ScentSequence, SessionPhase};
use serde::Serialize;
use tokio::sync::broadcast;

use crate::artifact::{load_model, ArtifactError};
use crate::eventlog::{events_file, read_events, JsonlWriter, LogError};
use crate::knowledge::{load_persona, load_sequences, static_store, KnowledgeError};
use crate::llm::LiveClient;
use crate::memory::{MemoryError, MemoryStore};
use crate::sensing::SharedClassifier;
use crate::stream::{open_stream, FrameStream, Speedup};

use config::{ConfigError, LlmMode, ServerConfig};
use controller::{Outgoing, Services, SessionController};
use tokens::{TokenError, TokenRegistry};

pub use http::router;

const BROADCAST_CAPACITY: usize = 1024;

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error("model {path}: {source}")]
    Model { path: PathBuf, source: ArtifactError },
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, thiserror::Error)]
pub enum CreateError {
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error("token refers to unknown sequence {0:?}")]
    Sequence(String),
    #[error(transparent)]
    Session(#[from] genji_core::session::SessionError),
    #[error(transparent)]
    Log(#[from] LogError),
}

/// A session log that failed to replay at startup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Quarantined {
    pub file: String,
    pub reason: String,
}

pub struct SessionSlot {
    pub id: String,
    pub controller: Mutex<SessionController>,
    pub tx: broadcast::Sender<String>,
}

impl SessionSlot {
    fn new(controller: SessionController) -> Arc<Self> {
        let (tx, _) = broadcast::channel(BROADCAST_CAPACITY);
        Arc::new(Self { id: controller.session().session_id.clone(), controller: Mutex::new(controller), tx })
    }

    pub fn broadcast(&self, out: Outgoing) {
        for (seq, msg) in out {
            // no subscribers is fine
            let _ = self.tx.send(msg.to_json(&self.id, seq));
        }
    }
}

pub struct AppState {
    pub config: ServerConfig,
    pub services: Arc<Services>,
    pub tokens: TokenRegistry,
    pub sequences: BTreeMap<String, ScentSequence>,
    pub classifier: Option<SharedClassifier>,
    sessions: RwLock<HashMap<String, Arc<SessionSlot>>>,
    quarantined: Vec<Quarantined>,
}

impl AppState {
    /// Loads configuration-driven resources and recovers stored sessions.
    pub fn open(config: ServerConfig) -> Result<Arc<Self>, StartupError> {
        config.validate()?;
        let classifier = match &config.model_path {
            Some(path) => {
                let model = load_model(path).map_err(|source| StartupError::Model { path: path.clone(), source })?;
                Some(Arc::new(model) as SharedClassifier)
            }
            None => None,
        };
        Self::open_with_classifier(config, classifier)
    }

    /// Like [`AppState::open`] with an already loaded classifier.
    pub fn open_with_classifier(
        config: ServerConfig,
        classifier: Option<SharedClassifier>,
    ) -> Result<Arc<Self>, StartupError> {
        config.sensing.speedup()?;
        let dir = &config.data_dir;
        let sessions_dir = dir.join("sessions");
        std::fs::create_dir_all(&sessions_dir)
            .map_err(|source| StartupError::Io { path: sessions_dir.clone(), source })?;
        let generator: Box<dyn TextGenerator + Send + Sync> = match config.llm.mode {
            LlmMode::Stub => Box::new(StubGenerator),
            LlmMode::Live => {
                let endpoint = config.llm.endpoint.clone().ok_or_else(|| {
                    ConfigError::Invalid("llm.mode is live but no endpoint is set (LLM_ENDPOINT)".into())
                })?;
                Box::new(LiveClient::new(
                    endpoint,
                    config.llm.model.clone(),
                    config.llm.api_key.clone(),
                    std::time::Duration::from_secs(config.llm.timeout_s),
                ))
            }
        };
        let services = Arc::new(Services {
            store: static_store(config.knowledge_dir.as_deref())?,
            persona: load_persona(config.persona_path.as_deref())?,
            generator,
            memory: Mutex::new(MemoryStore::open(dir)?),
            prompt: config.prompt,
            vote_mode: config.vote_mode,
        });
        let sequences =
            load_sequences(config.sequences_path.as_deref())?.into_iter().map(|s| (s.id().to_string(), s)).collect();
        let tokens = TokenRegistry::open(&dir.join("tokens.jsonl"))?;
        let mut state = Self {
            config,
            services,
            tokens,
            sequences,
            classifier,
            sessions: RwLock::new(HashMap::new()),
            quarantined: Vec::new(),
        };
        state.recover(&sessions_dir)?;
        Ok(Arc::new(state))
    }

    fn sessions_dir(&self) -> PathBuf {
        self.config.data_dir.join("sessions")
    }

    /// Replays every stored log; logs that fail are moved aside.
    fn recover(&mut self, sessions_dir: &Path) -> Result<(), StartupError> {
        let io = |path: &Path, source| StartupError::Io { path: path.into(), source };
        let mut files: Vec<PathBuf> = std::fs::read_dir(sessions_dir)
            .map_err(|e| io(sessions_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(".events.jsonl"))
            .collect();
        files.sort();
        let mut sessions = HashMap::new();
        for path in files {
            let restored = read_events(&path)
                .map_err(|e| e.to_string())
                .and_then(|events| replay(&events, &self.sequences).map_err(|e| e.to_string()));
            match restored {
                Ok(session) => {
                    let sink = JsonlWriter::open(&path)?;
                    let ctl = SessionController::new(session, Box::new(sink), self.services.clone());
                    let slot = SessionSlot::new(ctl);
                    sessions.insert(slot.id.clone(), slot);
                }
                Err(reason) => {
                    let qdir = self.config.data_dir.join("quarantine");
                    std::fs::create_dir_all(&qdir).map_err(|e| io(&qdir, e))?;
                    let name = path.file_name().expect("file name").to_string_lossy().into_owned();
                    std::fs::rename(&path, qdir.join(&name)).map_err(|e| io(&path, e))?;
                    eprintln!("quarantined session log {name}: {reason}");
                    self.quarantined.push(Quarantined { file: name, reason });
                }
            }
        }
        *self.sessions.get_mut().expect("sessions lock") = sessions;
        Ok(())
    }

    pub fn quarantined(&self) -> &[Quarantined] {
        &self.quarantined
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("sessions lock").len()
    }

    pub fn slot(&self, session_id: &str) -> Option<Arc<SessionSlot>> {
        self.sessions.read().expect("sessions lock").get(session_id).cloned()
    }

    /// Consumes a token and starts a session for its sequence.
    pub fn create_session(&self, token: &str) -> Result<Arc<SessionSlot>, CreateError> {
        let record = self.tokens.consume(token)?;
        let sequence = self
            .sequences
            .get(&record.sequence_id)
            .cloned()
            .ok_or_else(|| CreateError::Sequence(record.sequence_id.clone()))?;
        let registry = BTreeMap::from([(token.to_string(), sequence)]);
        let id = format!("{:016x}", rand::random::<u64>());
        let session = create_session(id.clone(), token, &registry, now_ms())?;
        let mut sink = JsonlWriter::open(&events_file(&self.sessions_dir(), &id))?;
        sink.append(&session.events)?;
        {
            let mut memory = self.services.memory.lock().expect("memory lock");
            let started = genji_core::dialogue::DynamicEntry::Started {
                session_id: id.clone(),
                sequence_id: session.sequence.id().to_string(),
            };
            if let Err(e) = memory.append(started) {
                eprintln!("memory write failed: {e}");
            }
        }
        let slot = SessionSlot::new(SessionController::new(session, Box::new(sink), self.services.clone()));
        self.sessions.write().expect("sessions lock").insert(id, slot.clone());
        Ok(slot)
    }

    /// Handles one client frame. Accepted results are broadcast to every
    /// client of the session; a rejection is returned for the sender only.
    pub fn dispatch_blocking(&self, slot: &Arc<SessionSlot>, text: &str) -> Option<String> {
        let mut ctl = slot.controller.lock().expect("controller lock");
        match ctl.handle_text(text, now_ms()) {
            Ok(out) => {
                slot.broadcast(out);
                None
            }
            Err(e) => {
                let payload = e.payload(Some(ctl.phase()));
                let msg = protocol::ServerMessage::Error(payload);
                Some(msg.to_json(&slot.id, ctl.session().last_seq_no()))
            }
        }
    }

    pub async fn dispatch(self: &Arc<Self>, slot: &Arc<SessionSlot>, text: String) -> Option<String> {
        let (app, slot2) = (self.clone(), slot.clone());
        let reply = tokio::task::spawn_blocking(move || app.dispatch_blocking(&slot2, &text))
            .await
            .expect("dispatch task panicked");
        self.ensure_sensing(slot);
        reply
    }

    /// Prepares live inference if the session is smelling a round that has
    /// no stream yet. Returns the round and its frame source.
    pub fn prepare_sensing(&self, slot: &SessionSlot) -> Option<(u8, FrameStream)> {
        let classifier = self.classifier.clone().filter(|_| self.config.sensing.enabled)?;
        let mut ctl = slot.controller.lock().expect("controller lock");
        let SessionPhase::RoundSmelling(r) = ctl.phase() else { return None };
        if ctl.sensing_round() == Some(r) {
            return None;
        }
        let label = ctl.session().sequence.labels()[r as usize - 1];
        let cfg = &self.config.sensing;
        let seed = cfg.seed ^ ((crc32fast::hash(slot.id.as_bytes()) as u64) << 8) ^ r as u64;
        let params = SynthParams { noise_sigma: cfg.noise_sigma, ..SynthParams::new(label, seed, cfg.duration_s) };
        let recording = match synth_recording(&params) {
            Ok(rec) => rec,
            Err(e) => {
                eprintln!("sensing source failed: {e}");
                return None;
            }
        };
        let speedup = cfg.speedup().unwrap_or(Speedup::Factor(1.0));
        ctl.start_sensing(classifier).ok()?;
        Some((r, open_stream(&recording, speedup)))
    }

    /// Spawns the sensing loop when needed. Must run inside a tokio runtime.
    pub fn ensure_sensing(&self, slot: &Arc<SessionSlot>) {
        if let Some((r, stream)) = self.prepare_sensing(slot) {
            tokio::spawn(run_sensing(slot.clone(), r, stream));
        }
    }

    /// Runs a whole sensing stream on the calling thread.
    pub fn sense_blocking(&self, slot: &SessionSlot) {
        let Some((round, stream)) = self.prepare_sensing(slot) else { return };
        for frame in stream {
            if !feed_frame(slot, round, frame) {
                return;
            }
        }
        end_stream(slot, round);
    }
}

/// Pushes one frame; false once the round is no longer being sensed.
fn feed_frame(slot: &SessionSlot, round: u8, frame: genji_core::sensor::SensorFrame) -> bool {
    let mut ctl = slot.controller.lock().expect("controller lock");
    if ctl.sensing_round() != Some(round) || ctl.phase() != SessionPhase::RoundSmelling(round) {
        return false;
    }
    match ctl.push_frame(round, frame) {
        Ok(Some(update)) => slot.broadcast(vec![update]),
        Ok(None) => {}
        Err(e) => {
            eprintln!("sensing stopped: {e}");
            return false;
        }
    }
    true
}

fn end_stream(slot: &SessionSlot, round: u8) {
    let ctl = slot.controller.lock().expect("controller lock");
    if let Some(end) = ctl.stream_ended(round) {
        slot.broadcast(vec![end]);
    }
}

async fn run_sensing(slot: Arc<SessionSlot>, round: u8, mut stream: FrameStream) {
    let mut n = 0u32;
    while let Some(frame) = stream.next().await {
        if !feed_frame(&slot, round, frame) {
            return;
        }
        n += 1;
        if n.is_multiple_of(64) {
            tokio::task::yield_now().await;
        }
    }
    end_stream(&slot, round);
}

//! Recording CSV, the `.meta.json` sidecar and dataset manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use genji_core::sensor::{synth_recording, Recording, RecordingMeta, SensorError, SensorFrame, SynthParams};
use genji_core::NUM_CHANNELS;
use serde::{Deserialize, Serialize};

pub const CSV_HEADER: &str =
    "t_ms,temp_c,humidity_pct,pressure_hpa,tvoc_ppb,eco2_ppm,voc_raw,no2_raw,ethanol_raw,co_raw";

#[derive(Debug, thiserror::Error)]
pub enum RecordingFileError {
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("meta: {0}")]
    Meta(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] SensorError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest: {0}")]
    Manifest(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RecordingFileError + '_ {
    move |source| RecordingFileError::Io { path: path.to_path_buf(), source }
}

/// Parses CSV rows and a JSON sidecar into a validated recording.
pub fn parse_recording(csv_bytes: &[u8], meta_json: &[u8]) -> Result<Recording, RecordingFileError> {
    let meta: RecordingMeta = serde_json::from_slice(meta_json)?;
    let frames = parse_frames(csv_bytes)?;
    Ok(Recording::new(frames, meta)?)
}

/// Parses CSV rows only, checking the header and timestamp order.
pub fn parse_frames(csv_bytes: &[u8]) -> Result<Vec<SensorFrame>, RecordingFileError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(csv_bytes);
    let mut frames: Vec<SensorFrame> = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut first = true;
    loop {
        let more = reader.read_record(&mut record).map_err(|e| RecordingFileError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        let err = |reason: String| RecordingFileError::Parse { line, reason };
        if first {
            first = false;
            let header: Vec<&str> = record.iter().collect();
            if header.join(",") != CSV_HEADER {
                return Err(err(format!("header must be `{CSV_HEADER}`")));
            }
            continue;
        }
        if record.len() != NUM_CHANNELS + 1 {
            return Err(err(format!("expected {} cells, found {}", NUM_CHANNELS + 1, record.len())));
        }
        let t_ms: u64 = record[0].trim().parse().map_err(|_| err(format!("bad timestamp {:?}", &record[0])))?;
        let mut channels = [0.0; NUM_CHANNELS];
        for (c, slot) in channels.iter_mut().enumerate() {
            let cell = &record[c + 1];
            let v: f64 = cell.trim().parse().map_err(|_| err(format!("non-numeric cell {cell:?}")))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite cell {cell:?}")));
            }
            *slot = v;
        }
        if let Some(prev) = frames.last() {
            if t_ms <= prev.t_ms {
                return Err(err(format!("timestamp {t_ms} does not increase")));
            }
        }
        frames.push(SensorFrame { t_ms, channels });
    }
    if first {
        return Err(RecordingFileError::Parse { line: 1, reason: "missing header".into() });
    }
    Ok(frames)
}

/// CSV text with six decimals per value and LF line endings.
pub fn serialize_csv(recording: &Recording) -> String {
    let mut out = String::with_capacity(recording.frames().len() * 90);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for f in recording.frames() {
        let _ = write!(out, "{}", f.t_ms);
        for v in f.channels {
            let _ = write!(out, ",{v:.6}");
        }
        out.push('\n');
    }
    out
}

pub fn serialize_meta(meta: &RecordingMeta) -> String {
    serde_json::to_string_pretty(meta).expect("meta serializes") + "\n"
}

pub fn csv_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.csv"))
}

pub fn meta_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.meta.json"))
}

/// Writes `<id>.csv` and `<id>.meta.json` into `dir`.
pub fn write_recording(dir: &Path, recording: &Recording) -> Result<(PathBuf, PathBuf), RecordingFileError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let id = &recording.meta.recording_id;
    let csv = csv_path(dir, id);
    let meta = meta_path(dir, id);
    fs::write(&csv, serialize_csv(recording)).map_err(io_err(&csv))?;
    fs::write(&meta, serialize_meta(&recording.meta)).map_err(io_err(&meta))?;
    Ok((csv, meta))
}

/// Reads a CSV and its sidecar. When `meta` is `None`, `<stem>.meta.json`
/// next to the CSV is used.
pub fn read_recording(csv: &Path, meta: Option<&Path>) -> Result<Recording, RecordingFileError> {
    let meta_file = match meta {
        Some(m) => m.to_path_buf(),
        None => {
            let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            csv.with_file_name(format!("{stem}.meta.json"))
        }
    };
    let csv_bytes = fs::read(csv).map_err(io_err(csv))?;
    let meta_bytes = fs::read(&meta_file).map_err(io_err(&meta_file))?;
    parse_recording(&csv_bytes, &meta_bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub csv: PathBuf,
    pub meta: PathBuf,
    pub split: Split,
}

/// Dataset listing; paths are relative to the manifest's directory.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub recordings: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self, RecordingFileError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| RecordingFileError::Manifest(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<(), RecordingFileError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        fs::write(path, text).map_err(io_err(path))
    }

    /// Loads every recording tagged `split`, in manifest order.
    pub fn load(&self, base: &Path, split: Split) -> Result<Vec<Recording>, RecordingFileError> {
        self.recordings
            .iter()
            .filter(|e| e.split == split)
            .map(|e| read_recording(&base.join(&e.csv), Some(&base.join(&e.meta))))
            .collect()
    }
}

/// Reads the manifest at `path` and loads one split.
pub fn load_split(path: &Path, split: Split) -> Result<Vec<Recording>, RecordingFileError> {
    let manifest = Manifest::read(path)?;
    manifest.load(path.parent().unwrap_or(Path::new(".")), split)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub train_per_class: u32,
    pub test_per_class: u32,
    pub duration_s: u32,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self { train_per_class: 6, test_per_class: 2, duration_s: 120, noise_sigma: 0.5, seed: 0 }
    }
}

/// Seeded synthetic recordings for every class, train split first.
pub fn synth_dataset(spec: &DatasetSpec) -> Result<Vec<(Recording, Split)>, SensorError> {
    let mut out = Vec::new();
    for (split, n, offset) in [(Split::Train, spec.train_per_class, 0u64), (Split::Test, spec.test_per_class, 10_000)] {
        for class in 0..genji_core::NUM_CLASSES as u8 {
            for i in 0..n as u64 {
                let seed = spec.seed.wrapping_mul(1_000_003).wrapping_add(offset + class as u64 * 1000 + i);
                let params =
                    SynthParams { noise_sigma: spec.noise_sigma, ..SynthParams::new(class, seed, spec.duration_s) };
                out.push((synth_recording(&params)?, split));
            }
        }
    }
    Ok(out)
}

/// Writes a synthetic dataset plus `manifest.json` into `dir`.
pub fn write_dataset(dir: &Path, spec: &DatasetSpec) -> Result<PathBuf, RecordingFileError> {
    let mut manifest = Manifest::default();
    for (rec, split) in synth_dataset(spec)? {
        write_recording(dir, &rec)?;
        let id = &rec.meta.recording_id;
        manifest.recordings.push(ManifestEntry {
            csv: PathBuf::from(format!("{id}.csv")),
            meta: PathBuf::from(format!("{id}.meta.json")),
            split,
        });
    }
    let path = dir.join("manifest.json");
    manifest.write(&path)?;
    Ok(path)
}

use std::fs;

use genji::artifact::{decode, encode, load_model, save_model, ArtifactError, MAGIC};
use genji::eventlog::{events_file, read_events, read_jsonl, write_events, JsonlWriter, LogError};
use genji::knowledge::{default_docs, load_persona, load_sequences, parse_doc, static_store};
use genji::recording::{
    load_split, parse_frames, parse_recording, read_recording, serialize_csv, write_dataset, write_recording,
    DatasetSpec, RecordingFileError, Split, CSV_HEADER,
};
use genji_core::classifier::{ClassifierError, Model, ModelConfig, WindowClassifier};
use genji_core::dialogue::Mode;
use genji_core::features::{PreprocessFlags, WindowConfig};
use genji_core::sensor::{synth_recording, SynthParams, CHANNEL_NAMES, CLASS_PLATEAUS};
use genji_core::session::{create_session, Action, ScentSequence};
use proptest::prelude::*;
use std::collections::BTreeMap;
use std::path::Path;

const META: &str = r#"{"recording_id":"r1","class_label":2,"environment":"indoor","time_of_day":"evening","sample_rate_hz":10.0,"notes":"10 g in a sealed bag"}"#;

fn csv(rows: &[&str]) -> String {
    let mut s = String::from(CSV_HEADER);
    for r in rows {
        s.push('\n');
        s.push_str(r);
    }
    s.push('\n');
    s
}

#[test]
fn two_row_file_parses_to_two_frames() {
    let text = csv(&["0,22,45,1013,50,420,100,80,120,90", "100,22.1,45,1013,51,421,101,81,121,91"]);
    let rec = parse_recording(text.as_bytes(), META.as_bytes()).unwrap();
    assert_eq!(rec.len(), 2);
    assert_eq!(rec.frames()[1].t_ms, 100);
    assert_eq!(rec.frames()[1].channels[0], 22.1);
    assert_eq!(rec.meta.class_label, Some(2));
}

#[test]
fn duplicated_timestamp_reports_its_line() {
    let text = csv(&["0,1,1,1,1,1,1,1,1,1", "100,1,1,1,1,1,1,1,1,1", "100,1,1,1,1,1,1,1,1,1"]);
    match parse_frames(text.as_bytes()) {
        Err(RecordingFileError::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn header_and_cell_errors() {
    let bad_header = "t,temp\n0,1\n";
    assert!(matches!(parse_frames(bad_header.as_bytes()), Err(RecordingFileError::Parse { line: 1, .. })));
    let text = csv(&["0,1,1,1,1,abc,1,1,1,1"]);
    assert!(matches!(parse_frames(text.as_bytes()), Err(RecordingFileError::Parse { line: 2, .. })));
    let short = csv(&["0,1,1"]);
    assert!(matches!(parse_frames(short.as_bytes()), Err(RecordingFileError::Parse { line: 2, .. })));
    assert!(parse_frames(b"").is_err());
}

#[test]
fn five_minute_file_has_3000_frames() {
    let rec = synth_recording(&SynthParams::new(1, 3, 300)).unwrap();
    let back = parse_frames(serialize_csv(&rec).as_bytes()).unwrap();
    assert_eq!(back.len(), 300 * 10);
    assert_eq!(back.len() * CHANNEL_NAMES.len(), 27_000);
}

#[test]
fn same_class_and_seed_give_identical_csv() {
    let a = serialize_csv(&synth_recording(&SynthParams::new(4, 11, 30)).unwrap());
    let b = serialize_csv(&synth_recording(&SynthParams::new(4, 11, 30)).unwrap());
    assert_eq!(a, b);
    assert!(!a.contains('\r'));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn csv_round_trip_is_byte_stable(class in 0u8..5, seed in 0u64..1000, dur in 10u32..40) {
        let rec = synth_recording(&SynthParams::new(class, seed, dur)).unwrap();
        let text = serialize_csv(&rec);
        let meta = serde_json::to_vec(&rec.meta).unwrap();
        let back = parse_recording(text.as_bytes(), &meta).unwrap();
        prop_assert_eq!(serialize_csv(&back), text);
        prop_assert_eq!(back.meta, rec.meta);
    }
}

#[test]
fn recording_files_and_manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let rec = synth_recording(&SynthParams::new(0, 1, 12)).unwrap();
    let (csv_file, _) = write_recording(dir.path(), &rec).unwrap();
    let back = read_recording(&csv_file, None).unwrap();
    assert_eq!(serialize_csv(&back), serialize_csv(&rec));

    let spec = DatasetSpec { train_per_class: 2, test_per_class: 1, duration_s: 12, noise_sigma: 0.5, seed: 3 };
    let manifest = write_dataset(dir.path(), &spec).unwrap();
    let train = load_split(&manifest, Split::Train).unwrap();
    let test = load_split(&manifest, Split::Test).unwrap();
    assert_eq!((train.len(), test.len()), (10, 5));
    let mut labels: Vec<u8> = test.iter().map(|r| r.meta.class_label.unwrap()).collect();
    labels.sort();
    assert_eq!(labels, vec![0, 1, 2, 3, 4]);
    let train_ids: Vec<_> = train.iter().map(|r| &r.meta.recording_id).collect();
    assert!(test.iter().all(|r| !train_ids.contains(&&r.meta.recording_id)));
}

#[test]
fn signature_data_file_matches_the_plateau_table() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic_signatures.csv");
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header[0], "class");
    assert_eq!(&header[1..], CHANNEL_NAMES.map(String::from).as_slice());
    let rows: Vec<Vec<f64>> =
        reader.records().map(|r| r.unwrap().iter().map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), CLASS_PLATEAUS.len());
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row[0], k as f64);
        assert_eq!(&row[1..], CLASS_PLATEAUS[k].as_slice());
    }
}

fn tiny_model(window: usize, seed: u64) -> Model {
    let w = WindowConfig::new(window, window / 2).unwrap();
    Model::init(ModelConfig::tiny(), w, PreprocessFlags::RAW, None, seed).unwrap()
}

#[test]
fn artifact_round_trip_is_bit_identical() {
    let model = tiny_model(12, 5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.gnji");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back.params(), model.params());
    assert_eq!(back.config, model.config);
    assert_eq!(back.window, model.window);
    assert_eq!(back.checksum(), model.checksum());
    let rec = synth_recording(&SynthParams::new(2, 0, 10)).unwrap();
    assert_eq!(back.predict_recording(&rec).unwrap(), model.predict_recording(&rec).unwrap());
    let bytes = fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], MAGIC);
}

#[test]
fn truncated_or_corrupt_artifact_is_rejected() {
    let bytes = encode(&tiny_model(12, 5));
    for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(decode(&bytes[..cut]), Err(ArtifactError::Checksum)), "cut {cut}");
    }
    let mut flipped = bytes.clone();
    flipped[20] ^= 1;
    assert!(matches!(decode(&flipped), Err(ArtifactError::Checksum)));
    let mut versioned = bytes[..bytes.len() - 4].to_vec();
    versioned[4] = 99;
    let crc = crc32fast::hash(&versioned);
    versioned.extend_from_slice(&crc.to_le_bytes());
    assert!(matches!(decode(&versioned), Err(ArtifactError::Version { found: 99, .. })));
}

#[test]
fn artifact_for_other_window_rejects_windows_at_predict_time() {
    let model = decode(&encode(&tiny_model(12, 1))).unwrap();
    let other = WindowConfig::new(20, 10).unwrap();
    let rec = synth_recording(&SynthParams::new(0, 0, 10)).unwrap();
    let tensor = genji_core::features::preprocess(&rec, other, None, &PreprocessFlags::RAW).unwrap();
    match model.predict_window(tensor.window(0)) {
        Err(ClassifierError::Shape { expected, got }) => assert_eq!((expected, got), (12 * 9, 20 * 9)),
        other => panic!("expected shape error, got {other:?}"),
    }
}

#[test]
fn event_log_round_trip_and_line_errors() {
    let dir = tempfile::tempdir().unwrap();
    let seq = ScentSequence::new("s", [0, 1, 0, 2, 1]).unwrap();
    let reg = BTreeMap::from([("tok".to_string(), seq)]);
    let mut s = create_session("abc", "tok", &reg, 5).unwrap();
    s.apply(Action::StartCalibration, 6).unwrap();
    let path = events_file(dir.path(), "abc");
    assert!(path.to_string_lossy().ends_with("abc.events.jsonl"));
    write_events(&path, &s.events).unwrap();
    assert_eq!(read_events(&path).unwrap(), s.events);

    let mut w = JsonlWriter::open(&path).unwrap();
    s.apply(Action::NextCalibration { baseline_recording: None }, 7).unwrap();
    w.append(&s.events[2..]).unwrap();
    assert_eq!(read_events(&path).unwrap(), s.events);

    fs::write(&path, format!("{}\nnot json\n", serde_json::to_string(&s.events[0]).unwrap())).unwrap();
    match read_jsonl::<genji_core::session::SessionEvent>(&path) {
        Err(LogError::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn shipped_knowledge_persona_and_sequences_load() {
    let docs = default_docs();
    assert!(docs.len() >= 6);
    for mode in Mode::ALL {
        assert!(docs.iter().any(|d| d.has_mode(mode)), "no doc for {mode}");
    }
    let store = static_store(None).unwrap();
    assert_eq!(store.len(), docs.len());
    let persona = load_persona(None).unwrap();
    assert_eq!(persona.class_names.len(), 5);
    let seqs = load_sequences(None).unwrap();
    assert!(seqs.iter().any(|s| s.id() == "spring-rain"));
}

#[test]
fn front_matter_parsing() {
    let text = "+++\ndoc_id = \"a\"\nmode_tags = [\"round\"]\ntitle = \"A\"\n+++\nBody text.\n";
    let doc = parse_doc(text, Path::new("a.md")).unwrap();
    assert_eq!(doc.doc_id, "a");
    assert_eq!(doc.mode_tags, vec![Mode::Round]);
    assert_eq!(doc.body.trim(), "Body text.");
    assert!(parse_doc("no front matter", Path::new("b.md")).is_err());
    assert!(parse_doc("+++\ndoc_id = \"a\"\nmode_tags = []\n+++\nx", Path::new("c.md")).is_err());
}

#[test]
fn docs_directory_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("one.md"),
        "+++\ndoc_id = \"one\"\nmode_tags = [\"debrief\"]\ntitle = \"One\"\n+++\nincense debrief\n",
    )
    .unwrap();
    fs::write(dir.path().join("ignored.txt"), "x").unwrap();
    let store = static_store(Some(dir.path())).unwrap();
    assert_eq!(store.len(), 1);
    assert_eq!(store.retrieve("incense", Mode::Debrief, 3)[0].doc_id, "one");
}

#[test]
fn example_server_config_parses() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/genji.example.toml");
    let cfg = genji::server::config::ServerConfig::load(&path).unwrap();
    assert_eq!(cfg.port, 8080);
    assert_eq!(cfg.sensing.duration_s, 150);
    assert!(cfg.model_path.is_some());
    cfg.validate().unwrap();
}

#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use genji::sensing::SharedClassifier;
use genji::server::config::ServerConfig;
use genji::server::AppState;
use genji_core::classifier::train_centroids;
use genji_core::features::{PreprocessFlags, WindowConfig};
use genji_core::sensor::{synth_recording, SynthParams};
use serde_json::{json, Value};

pub fn config(dir: &Path) -> ServerConfig {
    let mut c = ServerConfig { data_dir: dir.to_path_buf(), ..ServerConfig::default() };
    c.sensing.enabled = false;
    c
}

pub fn app(dir: &Path) -> Arc<AppState> {
    AppState::open_with_classifier(config(dir), None).unwrap()
}

/// Nearest-centroid classifier on noiseless data, W=100/S=50.
pub fn centroid_classifier() -> SharedClassifier {
    let recs: Vec<_> = (0..5u8)
        .map(|c| synth_recording(&SynthParams { noise_sigma: 0.0, ..SynthParams::new(c, 900 + c as u64, 60) }).unwrap())
        .collect();
    let model = train_centroids(&recs, WindowConfig::new(100, 50).unwrap(), &PreprocessFlags::default()).unwrap();
    Arc::new(model)
}

/// Sensing with immediate playback of noiseless 150 s recordings.
pub fn sensing_app(dir: &Path) -> Arc<AppState> {
    let mut c = config(dir);
    c.sensing = genji::server::config::SensingConfig {
        enabled: true,
        speedup: f64::INFINITY,
        duration_s: 150,
        noise_sigma: 0.0,
        seed: 0,
    };
    AppState::open_with_classifier(c, Some(centroid_classifier())).unwrap()
}

pub fn golden_script() -> Value {
    let text =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden_game.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn golden_messages() -> Vec<String> {
    golden_script()["messages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| {
            let mut m = m.clone();
            m["v"] = json!(1);
            m.to_string()
        })
        .collect()
}

pub fn msg(kind: &str, payload: Value) -> String {
    json!({ "v": 1, "type": kind, "payload": payload }).to_string()
}

mod common;

use std::sync::Arc;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use genji::server::{router, AppState};
use genji_core::partition::{compare_patterns, Partition};
use serde_json::Value;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn serve(app: Arc<AppState>) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(app)).await.unwrap() });
    addr.to_string()
}

fn new_session(app: &AppState, sequence: &str) -> String {
    let rec = app.tokens.issue(None, sequence, true, 0).unwrap();
    app.create_session(&rec.token).unwrap().id.clone()
}

async fn connect(addr: &str, id: &str) -> Ws {
    connect_async(format!("ws://{addr}/ws/{id}")).await.unwrap().0
}

async fn recv(ws: &mut Ws) -> Value {
    loop {
        let frame = tokio::time::timeout(Duration::from_secs(20), ws.next())
            .await
            .expect("timed out waiting for a server message")
            .expect("socket closed")
            .unwrap();
        if let Message::Text(t) = frame {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

async fn recv_until(ws: &mut Ws, kind: &str) -> (Vec<Value>, Value) {
    let mut seen = Vec::new();
    loop {
        let m = recv(ws).await;
        if m["type"] == kind {
            return (seen, m);
        }
        seen.push(m);
    }
}

async fn send(ws: &mut Ws, text: String) {
    ws.send(Message::Text(text.into())).await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn golden_transcript_over_websocket() {
    let dir = tempfile::tempdir().unwrap();
    let app = common::app(dir.path());
    let addr = serve(app.clone()).await;
    let id = new_session(&app, "spring-rain");
    let mut ws = connect(&addr, &id).await;
    let first = recv(&mut ws).await;
    assert_eq!(first["type"], "phase");
    assert_eq!(first["payload"]["phase"], "briefing");

    let mut all = Vec::new();
    for m in common::golden_messages() {
        send(&mut ws, m).await;
    }
    let (seen, reveal) = recv_until(&mut ws, "reveal").await;
    all.extend(seen);
    assert!(all.iter().all(|m| m["type"] != "error"), "{all:?}");
    assert!(all.iter().all(|m| m["v"] == 1 && m["session_id"] == id.as_str()));
    let seqs: Vec<u64> = all.iter().map(|m| m["seq_no"].as_u64().unwrap()).collect();
    assert!(seqs.windows(2).all(|w| w[0] <= w[1]));
    let genjimon = all.iter().filter(|m| m["type"] == "genjimon").count();
    // after calibration and after each of the five confirms
    assert_eq!(genjimon, 6);

    let truth = Partition::from_labels(&[3, 3, 1, 3, 1]).unwrap();
    let player = Partition::from_labels(&[0, 0, 1, 0, 1]).unwrap();
    let oracle = compare_patterns(&player, &truth);
    let payload = &reveal["payload"];
    assert_eq!(payload["score"], serde_json::to_value(oracle.unwrap()).unwrap());
    assert_eq!(payload["score"]["exact"], true);

    let slot = app.slot(&id).unwrap();
    let ctl = slot.controller.lock().unwrap();
    assert_eq!(ctl.phase().to_string(), "debrief");
    assert_eq!(ctl.session().confirmed.len(), 4);
}

#[tokio::test(flavor = "multi_thread")]
async fn accepted_messages_reach_every_client() {
    let dir = tempfile::tempdir().unwrap();
    let app = common::app(dir.path());
    let addr = serve(app.clone()).await;
    let id = new_session(&app, "autumn-moon");
    let mut a = connect(&addr, &id).await;
    let mut b = connect(&addr, &id).await;
    recv(&mut a).await;
    recv(&mut b).await;
    send(&mut a, common::msg("start_calibration", Value::Null)).await;
    for ws in [&mut a, &mut b] {
        let m = recv(ws).await;
        assert_eq!(m["type"], "phase");
        assert_eq!(m["payload"]["phase"], serde_json::json!({ "calibration": 1 }));
    }
    for _ in 0..5 {
        send(&mut b, common::msg("calibration_next", Value::Null)).await;
    }
    let (_, ga) = recv_until(&mut a, "genjimon").await;
    let (_, gb) = recv_until(&mut b, "genjimon").await;
    assert_eq!(ga, gb);
    assert_eq!(ga["payload"]["rounds"], 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_frames_get_errors_and_the_socket_stays_open() {
    let dir = tempfile::tempdir().unwrap();
    let app = common::app(dir.path());
    let addr = serve(app.clone()).await;
    let id = new_session(&app, "autumn-moon");
    let mut a = connect(&addr, &id).await;
    let mut b = connect(&addr, &id).await;
    recv(&mut a).await;
    recv(&mut b).await;

    for (text, code) in [
        ("{oops".to_string(), "malformed"),
        (common::msg("sing", Value::Null), "unknown_type"),
        (common::msg("done_smelling", Value::Null), "phase"),
    ] {
        send(&mut a, text).await;
        let m = recv(&mut a).await;
        assert_eq!(m["type"], "error");
        assert_eq!(m["payload"]["code"], code);
    }
    a.send(Message::Binary(vec![1, 2, 3].into())).await.unwrap();
    assert_eq!(recv(&mut a).await["payload"]["code"], "malformed");

    send(&mut a, common::msg("start_calibration", Value::Null)).await;
    let m = recv(&mut a).await;
    assert_eq!(m["type"], "phase");
    // errors were not broadcast
    let m = recv(&mut b).await;
    assert_eq!(m["type"], "phase");
    assert_eq!(m["payload"]["phase"], serde_json::json!({ "calibration": 1 }));
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_session_socket_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let addr = serve(common::app(dir.path())).await;
    let err = connect_async(format!("ws://{addr}/ws/nope")).await.unwrap_err();
    match err {
        tokio_tungstenite::tungstenite::Error::Http(resp) => assert_eq!(resp.status(), 404),
        other => panic!("unexpected {other}"),
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn unlimited_speedup_streams_every_window() {
    let dir = tempfile::tempdir().unwrap();
    let app = common::sensing_app(dir.path());
    let addr = serve(app.clone()).await;
    let id = new_session(&app, "spring-rain");
    let mut ws = connect(&addr, &id).await;
    recv(&mut ws).await;
    send(&mut ws, common::msg("start_calibration", Value::Null)).await;
    for _ in 0..5 {
        send(&mut ws, common::msg("calibration_next", Value::Null)).await;
    }
    let (seen, ended) = recv_until(&mut ws, "prediction_update").await;
    assert!(seen.iter().any(|m| m["type"] == "genjimon"));
    let mut updates = vec![ended];
    loop {
        let m = recv(&mut ws).await;
        assert_eq!(m["type"], "prediction_update");
        let done = m["payload"]["stream_ended"] == true;
        updates.push(m);
        if done {
            break;
        }
    }
    let end = updates.pop().unwrap();
    // 150 s at 10 Hz, W=100, S=50
    assert_eq!(updates.len(), 29);
    for (i, u) in updates.iter().enumerate() {
        assert_eq!(u["payload"]["windows"], i as u64 + 1);
        assert_eq!(u["payload"]["final"], false);
        assert_eq!(u["payload"]["round"], 1);
    }
    assert_eq!(end["payload"]["windows"], 29);

    send(&mut ws, common::msg("done_smelling", Value::Null)).await;
    let (_, fin) = recv_until(&mut ws, "prediction_update").await;
    assert_eq!(fin["payload"]["final"], true);
    let probs: Vec<f64> = serde_json::from_value(fin["payload"]["probs"].clone()).unwrap();
    let argmax = (0..5).max_by(|&a, &b| probs[a].total_cmp(&probs[b])).unwrap();
    // round 1 of spring-rain is class 3
    assert_eq!(argmax, 3);
}

#[tokio::test(flavor = "multi_thread")]
async fn restart_restores_the_same_phase() {
    let dir = tempfile::tempdir().unwrap();
    let id;
    let before;
    {
        let app = common::app(dir.path());
        id = new_session(&app, "spring-rain");
        let slot = app.slot(&id).unwrap();
        for m in common::golden_messages().iter().take(9) {
            assert!(app.dispatch_blocking(&slot, m).is_none());
        }
        before = slot.controller.lock().unwrap().session().clone();
    }
    let app = common::app(dir.path());
    assert!(app.quarantined().is_empty());
    let slot = app.slot(&id).unwrap();
    let after = slot.controller.lock().unwrap().session().clone();
    assert_eq!(after, before);

    let addr = serve(app.clone()).await;
    let mut ws = connect(&addr, &id).await;
    let m = recv(&mut ws).await;
    assert_eq!(m["payload"]["phase"], serde_json::to_value(before.phase).unwrap());
    assert_eq!(m["seq_no"], before.last_seq_no());
    for m in common::golden_messages().into_iter().skip(9) {
        send(&mut ws, m).await;
    }
    recv_until(&mut ws, "reveal").await;
}

#[tokio::test(flavor = "multi_thread")]
async fn completed_session_updates_stored_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    {
        let app = common::app(dir.path());
        let id = new_session(&app, "spring-rain");
        let slot = app.slot(&id).unwrap();
        for m in common::golden_messages() {
            assert!(app.dispatch_blocking(&slot, &m).is_none());
        }
        let agg = app.services.memory.lock().unwrap().aggregates("spring-rain");
        assert_eq!(agg.count, 1);
    }
    let text = std::fs::read_to_string(dir.path().join("aggregates.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    assert!(text.contains("spring-rain"), "{v}");
    let app = common::app(dir.path());
    assert_eq!(app.services.memory.lock().unwrap().aggregates("spring-rain").count, 1);
}

#[path = "../../core/tests/support/fixture.rs"]
mod fixture;
mod support;

use std::time::Duration;

use dataclaw_core::stream::encode_sse;
use dataclaw_core::AgentConfig;
use dataclaw_gateway::GatewayOptions;

use fixture::*;
use support::*;

const ASK: &str = "Analyze the NYC Taxi dataset for high tips and generate a visual report";
const LIMIT: Duration = Duration::from_secs(10);

fn quiet_options() -> GatewayOptions {
    GatewayOptions { heartbeat: Duration::from_secs(60), ..fast_options() }
}

async fn scenario_server(dir: &std::path::Path, options: GatewayOptions) -> TestServer {
    start(taxi_workspace(dir), AgentConfig::default(), scripted(scenario_script()), options).await
}

#[tokio::test(flavor = "multi_thread")]
async fn live_stream_is_byte_identical_to_the_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let srv = scenario_server(dir.path(), quiet_options()).await;
    let id = srv.new_session("console").await;
    let url = srv.url(&format!("/api/sessions/{id}/events?verbosity=full_trace"));
    let (headers, mut live) = SseReader::open(&srv.http, &url, None).await;
    assert_eq!(headers["content-type"], "text/event-stream");
    assert_eq!(headers["cache-control"], "no-cache");

    assert_eq!(srv.say(&id, ASK).await, 202);
    let got = live.read_until(ends_turn, LIMIT).await.to_string();
    let golden = std::fs::read_to_string(fixtures_dir().join("golden/scenario1.sse")).unwrap();
    assert_eq!(got, golden);

    // a late subscriber replays the same bytes
    srv.settle().await;
    let (_, mut replay) = SseReader::open(&srv.http, &url, None).await;
    assert_eq!(replay.read_until(ends_turn, LIMIT).await, golden);
}

#[tokio::test(flavor = "multi_thread")]
async fn verbosity_filters_frames() {
    let dir = tempfile::tempdir().unwrap();
    let srv = scenario_server(dir.path(), quiet_options()).await;
    let id = srv.new_session("console").await;
    assert_eq!(srv.say(&id, ASK).await, 202);
    srv.settle().await;
    let events = srv.events(&id);

    let mut seen = Vec::new();
    for level in ["final_only", "progress", "full_trace"] {
        let url = srv.url(&format!("/api/sessions/{id}/events?verbosity={level}"));
        let (_, mut r) = SseReader::open(&srv.http, &url, None).await;
        r.read_until(ends_turn, LIMIT).await;
        let kinds: Vec<String> = r.frames().iter().map(|f| frame_kind(f).to_string()).collect();
        seen.push(kinds);
    }
    assert!(seen[0].iter().all(|k| k != "thinking" && k != "tool_call" && k != "tool_result"), "{:?}", seen[0]);
    assert_eq!(seen[0], ["session_start", "message", "done"]);
    assert!(seen[1].iter().all(|k| k != "thinking") && seen[1].iter().any(|k| k == "tool_call"));
    assert_eq!(seen[2].len(), events.len());

    // the configured level applies when the query omits one
    srv.put("/api/config", &serde_json::json!({"verbosity": "final_only"})).await;
    let (_, mut r) = SseReader::open(&srv.http, &srv.url(&format!("/api/sessions/{id}/events")), None).await;
    r.read_until(ends_turn, LIMIT).await;
    assert_eq!(r.frames().len(), 3);
}

#[tokio::test(flavor = "multi_thread")]
async fn last_event_id_resumes_after_that_seq() {
    let dir = tempfile::tempdir().unwrap();
    let srv = scenario_server(dir.path(), quiet_options()).await;
    let id = srv.new_session("console").await;
    srv.say(&id, ASK).await;
    srv.settle().await;
    let events = srv.events(&id);
    let expected: String = events[7..].iter().map(encode_sse).collect();

    let url = srv.url(&format!("/api/sessions/{id}/events?verbosity=full_trace"));
    let (_, mut r) = SseReader::open(&srv.http, &url, Some(7)).await;
    assert_eq!(r.read_until(ends_turn, LIMIT).await, expected);

    // the header wins over the query parameter
    let (_, mut r) = SseReader::open(&srv.http, &format!("{url}&from_seq=2"), Some(7)).await;
    assert_eq!(frame_seq(r.read_until(ends_turn, LIMIT).await), 8);
    let (_, mut r) = SseReader::open(&srv.http, &format!("{url}&from_seq=2"), None).await;
    assert_eq!(frame_seq(r.read_until(ends_turn, LIMIT).await), 3);

    let bad = srv.http.get(&url).header("Last-Event-ID", "seven").send().await.unwrap();
    assert_eq!(bad.status(), 400);
}

#[tokio::test(flavor = "multi_thread")]
async fn idle_streams_get_heartbeats() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(taxi_workspace(dir.path()), AgentConfig::default(), scripted(vec![]), fast_options()).await;
    let id = srv.new_session("console").await;
    let (_, mut r) = SseReader::open(&srv.http, &srv.url(&format!("/api/sessions/{id}/events")), None).await;
    let buf = r.read_until(|b| b.matches(": ping\n\n").count() >= 2, Duration::from_secs(3)).await;
    assert_eq!(buf, ": ping\n\n: ping\n\n");
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_requests_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(taxi_workspace(dir.path()), AgentConfig::default(), scripted(vec![]), fast_options()).await;
    let id = srv.new_session("console").await;
    assert_eq!(srv.get(&format!("/api/sessions/{id}/events?verbosity=loud")).await.0, 400);
    let unknown = dataclaw_core::Id::from_u128(0xabc);
    assert_eq!(srv.get(&format!("/api/sessions/{unknown}/events")).await.0, 404);
}

#[tokio::test(flavor = "multi_thread")]
async fn subscribing_mid_turn_neither_duplicates_nor_skips() {
    for delay_ms in [0u64, 3, 8, 15] {
        let dir = tempfile::tempdir().unwrap();
        let srv = start(
            taxi_workspace(dir.path()),
            AgentConfig::default(),
            slow_script(scenario_script(), Duration::from_millis(5)),
            quiet_options(),
        )
        .await;
        let id = srv.new_session("console").await;
        srv.say(&id, ASK).await;
        tokio::time::sleep(Duration::from_millis(delay_ms)).await;
        let url = srv.url(&format!("/api/sessions/{id}/events?verbosity=full_trace"));
        let (_, mut r) = SseReader::open(&srv.http, &url, None).await;
        r.read_until(ends_turn, LIMIT).await;
        let seqs: Vec<u64> = r.frames().iter().map(|f| frame_seq(f)).collect();
        let expected: Vec<u64> = (1..=srv.events(&id).len() as u64).collect();
        assert_eq!(seqs, expected, "subscribed after {delay_ms} ms");
    }
}

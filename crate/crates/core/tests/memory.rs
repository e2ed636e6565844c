#[path = "support/fixture.rs"]
mod fixture;

use dataclaw_core::llm::ScriptedBackend;
use dataclaw_core::memory::{memory_search, DataMemory};
use dataclaw_core::types::{Clock, Id, Role, StepClock};
use dataclaw_core::{AgentConfig, ChatMessage};
use proptest::prelude::*;
use serde_json::Value;

use fixture::*;

/// Independent token estimate: four bytes per token, rounded up.
fn oracle_tokens(text: &str) -> u64 {
    let n = text.len() as u64;
    n / 4 + u64::from(!n.is_multiple_of(4))
}

fn message(i: usize, bytes: usize) -> ChatMessage {
    let text: String = format!("<{i}>").chars().chain(std::iter::repeat('w')).take(bytes.max(1)).collect();
    ChatMessage::new(Id::from_u128(i as u128 + 1), Id::from_u128(99), "console", Role::User, text, StepClock::fixed().now())
}

fn small_window() -> AgentConfig {
    AgentConfig { context_window_tokens: 1000, compaction_threshold: 0.8, keep_recent_messages: 6, ..AgentConfig::default() }
}

#[test]
fn compaction_fires_once_at_the_first_crossing() {
    let config = small_window();
    let sizes = [380usize, 120, 260, 410, 90, 333, 205, 170, 64, 301, 222, 150, 40, 512, 700, 333, 96];
    let crossing = {
        let mut total = 0;
        sizes
            .iter()
            .enumerate()
            .find(|(i, &b)| {
                total += oracle_tokens(&message(*i, b).text);
                total > 800
            })
            .map(|(i, _)| i)
            .unwrap()
    };

    let mut memory = DataMemory::new(Id::from_u128(99), "console");
    let summarizer = ScriptedBackend::new(Vec::new());
    let mut fired = Vec::new();
    for (i, &b) in sizes.iter().enumerate().take(crossing + 1) {
        memory.append(message(i, b));
        let before: Vec<ChatMessage> = memory.entries().to_vec();
        if let Some(rec) = memory.maybe_compact(&config, &summarizer, StepClock::fixed().now()).unwrap() {
            fired.push(i);
            let tail = &before[before.len() - 6..];
            assert_eq!(&memory.entries()[1..], tail);
            assert_eq!(rec.messages_compacted, before.len() - 6);
            assert!(rec.tokens_after <= 800);
        }
    }
    assert_eq!(fired, [crossing]);
    assert_eq!(memory.compaction_count(), 1);
    let total: u64 = memory.entries().iter().map(|m| oracle_tokens(&m.text)).sum();
    assert_eq!(memory.token_estimate(), total);
}

proptest! {
    #[test]
    fn compaction_keeps_estimate_bounded_and_tail_verbatim(sizes in proptest::collection::vec(1usize..400, 1..80)) {
        let config = small_window();
        let summarizer = ScriptedBackend::new(Vec::new());
        let mut memory = DataMemory::new(Id::from_u128(99), "console");
        for (i, &b) in sizes.iter().enumerate() {
            memory.append(message(i, b));
            let before: Vec<ChatMessage> = memory.entries().to_vec();
            let before_tokens: u64 = before.iter().map(|m| oracle_tokens(&m.text)).sum();
            let rec = memory.maybe_compact(&config, &summarizer, StepClock::fixed().now()).unwrap();
            prop_assert_eq!(rec.is_some(), before_tokens > 800);
            if rec.is_some() {
                prop_assert_eq!(&memory.entries()[1..], &before[before.len() - 6..]);
                prop_assert_eq!(memory.entries()[0].role, Role::System);
            } else {
                prop_assert_eq!(memory.entries(), &before[..]);
            }
            let after: u64 = memory.entries().iter().map(|m| oracle_tokens(&m.text)).sum();
            prop_assert_eq!(memory.token_estimate(), after);
            prop_assert!(after <= 800);
        }
    }
}

fn describe_loop(steps: usize) -> Vec<String> {
    let mut script = vec!["ACTION: {\"tool\": \"data_load\", \"args\": {\"path\": \"data/taxi.csv\"}}".to_string()];
    script.extend(std::iter::repeat_n(
        "ACTION: {\"tool\": \"data_describe\", \"args\": {\"handle\": \"d1\"}}".to_string(),
        steps,
    ));
    script.push("FINAL: profiled".into());
    script
}

#[test]
fn long_turns_compact_and_a_lower_threshold_compacts_sooner() {
    let first_compaction_step = |threshold: f64| {
        let dir = tempfile::tempdir().unwrap();
        let rt = deterministic_runtime(taxi_workspace(dir.path()), AgentConfig::default(), scripted(describe_loop(45)));
        rt.set_config(AgentConfig { compaction_threshold: threshold, ..AgentConfig::default() }).unwrap();
        let s = rt.open_session("console").unwrap();
        let trace = rt.ask(&s.id, "profile it over and over").unwrap();
        assert_eq!(trace.final_text(), Some("profiled"));
        assert!(!trace.compactions.is_empty());
        assert_eq!(rt.compaction_count(&s.id), trace.compactions.len() as u32);
        let limit = (threshold * 8192.0).floor() as u64;
        for rec in &trace.compactions {
            assert!(rec.tokens_before > limit && rec.tokens_after <= limit);
        }
        trace.compactions[0].fired_at.clone()
    };
    assert!(first_compaction_step(0.5) < first_compaction_step(0.8));
}

#[test]
fn findings_are_visible_to_later_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let rt = deterministic_runtime(taxi_workspace(dir.path()), AgentConfig::default(), scripted(scenario_script()));
    let a = rt.open_session("console").unwrap();
    assert!(rt.ask(&a.id, "find unusual tips").unwrap().final_text().is_some());

    let hits = memory_search(rt.memory_files(), "cash tip_pct", 3).unwrap();
    assert!(hits[0].snippet.contains(PLANTED_FINDING));
    assert!(hits[0].source.starts_with("MEMORY.md"));

    // a fresh runtime on the same workspace sees the same file
    let ws = dataclaw_core::persist::Workspace::open(dir.path());
    let recall = vec![
        "ACTION: {\"tool\": \"memory_search\", \"args\": {\"query\": \"tip_pct cash\"}}".to_string(),
        "FINAL: recalled".to_string(),
    ];
    let rt2 = deterministic_runtime(ws, AgentConfig::default(), scripted(recall));
    let b = rt2.open_session("console").unwrap();
    rt2.ask(&b.id, "what did we learn about tips?").unwrap();
    let result = rt2
        .bus()
        .events(&b.id)
        .into_iter()
        .find(|e| e.kind == dataclaw_core::EventKind::ToolResult)
        .unwrap();
    let obs: Value = serde_json::from_str(result.payload["observation"].as_str().unwrap()).unwrap();
    let top = obs["hits"][0]["snippet"].as_str().unwrap_or_default();
    assert!(top.contains(PLANTED_FINDING), "{obs}");
}

//! Workspace fixtures shared by integration tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use dataclaw_core::llm::{load_script, BackendFactory, ScriptPerSession};
use dataclaw_core::persist::{init_workspace, Workspace};
use dataclaw_core::types::{AgentEvent, EventKind, SequentialIds, StepClock};
use dataclaw_core::{AgentConfig, AgentRuntime};

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn scenario_script() -> Vec<String> {
    load_script(&fixtures_dir().join("scenario1_script.json")).unwrap()
}

/// Fresh workspace with the taxi fixture at `data/taxi.csv`.
pub fn taxi_workspace(root: &Path) -> Workspace {
    let ws = init_workspace(root).unwrap().workspace;
    std::fs::copy(
        fixtures_dir().join("taxi.csv"),
        ws.data_dir().join("taxi.csv"),
    )
    .unwrap();
    ws
}

/// Runtime with a fixed clock and sequential ids, so every run is byte-identical.
pub fn deterministic_runtime(
    ws: Workspace,
    config: AgentConfig,
    backends: Arc<dyn BackendFactory>,
) -> AgentRuntime {
    AgentRuntime::new(
        ws,
        config,
        backends,
        Arc::new(StepClock::fixed()),
        Arc::new(SequentialIds::default()),
    )
}

pub fn scripted(script: Vec<String>) -> Arc<dyn BackendFactory> {
    Arc::new(ScriptPerSession::new(script))
}

pub fn kinds(events: &[AgentEvent]) -> Vec<EventKind> {
    events.iter().map(|e| e.kind).collect()
}

/// Compares `actual` with a checked-in golden file; `UPDATE_GOLDEN=1` rewrites it.
pub fn assert_golden(name: &str, actual: &str) {
    let path = fixtures_dir().join("golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
    }
    let expected =
        std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(
        expected == actual,
        "{name} differs from golden file {}",
        path.display()
    );
}

/// Text the scenario's final answer and MEMORY.md finding rely on.
pub const PLANTED_FINDING: &str = "VendorID 2 trip had tip_pct 3000% (cash)";

//! The agent runtime: one workspace, many sessions, one turn at a time per session.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{AgentConfig, ConfigError};
use crate::engine::{run_turn, TurnDeps, TurnTrace};
use crate::llm::BackendFactory;
use crate::memory::{DataMemory, GlobalMemoryEntry, MemoryFileKind, MemoryFiles, MemoryKind};
use crate::persist::{log_event, ArtifactStore, Workspace};
use crate::session::{SessionError, SessionTable};
use crate::skills::{ScanReport, SkillManager, SkillSet};
use crate::stream::{EventBus, EventSink, StreamError};
use crate::tools::{builtin_registry, DatasetStore, ToolContext, ToolRegistry};
use crate::types::{AgentEvent, ChatMessage, Clock, Id, IdGen, Role, Session, SessionStatus};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write config: {0}")]
    ConfigWrite(std::io::Error),
}

/// Logs every event to the session transcript, then publishes it on the bus.
struct PersistingSink<'a> {
    workspace: &'a Workspace,
    bus: &'a EventBus,
}

impl EventSink for PersistingSink<'_> {
    fn emit(&self, event: AgentEvent) -> Result<(), StreamError> {
        let logged = event.clone();
        self.bus.emit(event)?;
        if let Err(e) = log_event(self.workspace, &logged) {
            tracing::error!(session = %logged.session_id, error = %e, "transcript write failed");
        }
        Ok(())
    }

    fn last_seq(&self, session_id: &Id) -> u64 {
        self.bus.last_seq(session_id)
    }
}

struct SessionState {
    memory: DataMemory,
    datasets: DatasetStore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: Id,
    pub channel_id: String,
    pub status: SessionStatus,
    pub turn_count: u64,
    pub compaction_count: u32,
    pub last_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStatus {
    pub active_sessions: usize,
    pub running_sessions: usize,
    pub capacity: usize,
    pub skills_version: u64,
    pub tool_count: usize,
    pub sessions: Vec<SessionSummary>,
}

/// Ends the session's turn even if the turn body panics.
struct TurnGuard<'a> {
    sessions: &'a SessionTable,
    id: &'a Id,
}

impl Drop for TurnGuard<'_> {
    fn drop(&mut self) {
        self.sessions.end_turn(self.id);
    }
}

pub struct AgentRuntime {
    workspace: Workspace,
    config: RwLock<Arc<AgentConfig>>,
    sessions: SessionTable,
    bus: Arc<EventBus>,
    registry: ToolRegistry,
    skills: SkillManager,
    artifacts: ArtifactStore,
    memory_files: MemoryFiles,
    backends: Arc<dyn BackendFactory>,
    clock: Arc<dyn Clock>,
    ids: Arc<dyn IdGen>,
    states: Mutex<HashMap<Id, Arc<Mutex<SessionState>>>>,
    cancels: Mutex<HashMap<Id, Arc<AtomicBool>>>,
    compactions: Mutex<HashMap<Id, u32>>,
}

impl AgentRuntime {
    pub fn new(
        workspace: Workspace,
        config: AgentConfig,
        backends: Arc<dyn BackendFactory>,
        clock: Arc<dyn Clock>,
        ids: Arc<dyn IdGen>,
    ) -> Self {
        let registry = builtin_registry();
        let skills = SkillManager::new(workspace.root());
        skills.scan(&registry);
        AgentRuntime {
            sessions: SessionTable::new(config.max_concurrent_sessions as usize, clock.clone(), ids.clone()),
            config: RwLock::new(Arc::new(config)),
            bus: Arc::new(EventBus::new()),
            artifacts: ArtifactStore::new(workspace.clone(), clock.clone(), ids.clone()),
            memory_files: workspace.memory_files(),
            registry,
            skills,
            workspace,
            backends,
            clock,
            ids,
            states: Default::default(),
            cancels: Default::default(),
            compactions: Default::default(),
        }
    }

    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }

    pub fn bus(&self) -> &Arc<EventBus> {
        &self.bus
    }

    pub fn sessions(&self) -> &SessionTable {
        &self.sessions
    }

    pub fn artifacts(&self) -> &ArtifactStore {
        &self.artifacts
    }

    pub fn memory_files(&self) -> &MemoryFiles {
        &self.memory_files
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.registry
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn ids(&self) -> &Arc<dyn IdGen> {
        &self.ids
    }

    pub fn config(&self) -> Arc<AgentConfig> {
        self.config.read().unwrap().clone()
    }

    /// Validates and publishes a new config; running turns keep the one they started with.
    pub fn set_config(&self, config: AgentConfig) -> Result<(), RuntimeError> {
        config.validate()?;
        std::fs::write(self.workspace.config_path(), config.to_file_string()).map_err(RuntimeError::ConfigWrite)?;
        self.sessions.set_capacity(config.max_concurrent_sessions as usize);
        *self.config.write().unwrap() = Arc::new(config);
        Ok(())
    }

    pub fn skills(&self) -> Arc<SkillSet> {
        self.skills.snapshot()
    }

    pub fn rescan_skills(&self) -> ScanReport {
        self.skills.scan(&self.registry)
    }

    pub fn open_session(&self, channel_id: &str) -> Result<Session, SessionError> {
        let s = self.sessions.new_session(channel_id)?;
        self.bus.open_session(&s.id);
        Ok(s)
    }

    /// Session for a fixed id (e.g. derived from a chat), created on first use.
    pub fn session_for(&self, id: &Id, channel_id: &str) -> Result<Session, SessionError> {
        let s = self.sessions.get_or_create(id, channel_id)?;
        self.bus.open_session(&s.id);
        Ok(s)
    }

    pub fn close_session(&self, id: &Id) -> Result<Session, SessionError> {
        self.sessions.close(id)
    }

    /// Marks the session running. Pair with [`AgentRuntime::run_started_turn`].
    pub fn begin_turn(&self, id: &Id) -> Result<Session, SessionError> {
        let s = self.sessions.begin_turn(id)?;
        self.cancel_flag(id).store(false, Ordering::SeqCst);
        Ok(s)
    }

    /// Requests cancellation; returns whether a turn was running.
    pub fn cancel(&self, id: &Id) -> Result<bool, SessionError> {
        let s = self.sessions.get(id).ok_or_else(|| SessionError::UnknownSession(id.clone()))?;
        let running = s.status == SessionStatus::Running;
        if running {
            self.cancel_flag(id).store(true, Ordering::SeqCst);
        }
        Ok(running)
    }

    fn cancel_flag(&self, id: &Id) -> Arc<AtomicBool> {
        self.cancels.lock().unwrap().entry(id.clone()).or_default().clone()
    }

    fn state(&self, session: &Session) -> Arc<Mutex<SessionState>> {
        self.states
            .lock()
            .unwrap()
            .entry(session.id.clone())
            .or_insert_with(|| {
                Arc::new(Mutex::new(SessionState {
                    memory: DataMemory::new(session.id.clone(), session.channel_id.clone()),
                    datasets: DatasetStore::new(),
                }))
            })
            .clone()
    }

    /// Begins and runs one turn.
    pub fn ask(&self, session_id: &Id, text: &str) -> Result<TurnTrace, SessionError> {
        let session = self.begin_turn(session_id)?;
        Ok(self.run_started_turn(&session, text))
    }

    /// Runs a turn for a session already marked running by [`AgentRuntime::begin_turn`].
    pub fn run_started_turn(&self, session: &Session, text: &str) -> TurnTrace {
        let _guard = TurnGuard { sessions: &self.sessions, id: &session.id };
        self.rescan_skills();
        let (skills, tools) = self.skills.snapshot_with(&self.registry);
        let config = self.config();
        let (agents_md, souls_md) = self.memory_files.load_global_blocks().unwrap_or_else(|e| {
            tracing::warn!(error = %e, "global memory files unreadable");
            (String::new(), String::new())
        });
        let backend = self.backends.backend_for(&session.id);
        let cancel = self.cancel_flag(&session.id);
        let sink = PersistingSink { workspace: &self.workspace, bus: &self.bus };
        let deps = TurnDeps {
            config: &config,
            backend: backend.as_ref(),
            tools: &tools,
            skills: &skills,
            sink: &sink,
            clock: self.clock.as_ref(),
            ids: self.ids.as_ref(),
            agents_md: &agents_md,
            souls_md: &souls_md,
            cancel: &cancel,
        };
        let message = ChatMessage::new(
            self.ids.next_id(),
            session.id.clone(),
            session.channel_id.clone(),
            Role::User,
            text,
            self.clock.now(),
        );

        let state = self.state(session);
        let mut state = state.lock().unwrap_or_else(|p| p.into_inner());
        let SessionState { memory, datasets } = &mut *state;
        let mut ctx = ToolContext {
            session_id: &session.id,
            workspace: &self.workspace,
            datasets,
            artifacts: &self.artifacts,
            memory: &self.memory_files,
            clock: self.clock.as_ref(),
            produced: Vec::new(),
        };
        let trace = run_turn(session, message, &deps, memory, &mut ctx);
        cancel.store(false, Ordering::SeqCst);
        self.compactions.lock().unwrap().insert(session.id.clone(), memory.compaction_count());
        drop(state);

        if let Some(text) = trace.final_text() {
            self.record_finding(session, text, &trace);
        }
        tracing::info!(session = %session.id, steps = trace.steps.len(), outcome = ?trace.outcome, "turn finished");
        trace
    }

    fn record_finding(&self, session: &Session, final_text: &str, trace: &TurnTrace) {
        let mut text = final_text.lines().next().unwrap_or("").trim().to_string();
        if !trace.artifacts.is_empty() {
            let paths: Vec<&str> = trace.artifacts.iter().map(|a| a.relative_path.as_str()).collect();
            text.push_str(&format!(" (artifacts: {})", paths.join(", ")));
        }
        let entry = GlobalMemoryEntry {
            session_id: session.id.clone(),
            recorded_at: self.clock.now(),
            kind: MemoryKind::Finding,
            text,
        };
        if let Err(e) = self.memory_files.record_global(&entry) {
            tracing::error!(session = %session.id, error = %e, "finding not recorded");
        }
    }

    pub fn compaction_count(&self, id: &Id) -> u32 {
        self.compactions.lock().unwrap().get(id).copied().unwrap_or(0)
    }

    pub fn read_memory_file(&self, kind: MemoryFileKind) -> Result<String, crate::memory::MemoryError> {
        self.memory_files.read(kind)
    }

    pub fn write_memory_file(&self, kind: MemoryFileKind, content: &str) -> Result<(), crate::memory::MemoryError> {
        self.memory_files.write(kind, content)
    }

    pub fn status(&self) -> RuntimeStatus {
        let sessions = self
            .sessions
            .list()
            .into_iter()
            .map(|s| SessionSummary {
                compaction_count: self.compaction_count(&s.id),
                last_seq: self.bus.last_seq(&s.id),
                id: s.id,
                channel_id: s.channel_id,
                status: s.status,
                turn_count: s.turn_count,
            })
            .collect();
        RuntimeStatus {
            active_sessions: self.sessions.active_count(),
            running_sessions: self.sessions.running_count(),
            capacity: self.sessions.capacity(),
            skills_version: self.skills.snapshot().version,
            tool_count: self.registry.len(),
            sessions,
        }
    }
}

//! HTTP gateway for the dataclaw agent runtime.
//!
//! Channel adapters turn inbound traffic into session turns, turns run on the
//! blocking pool, and results go back out through the originating channel. The
//! management API and per-session SSE streams live under `/api`.

mod api;
pub mod channels;
pub mod delivery;
pub mod inbound;
pub mod log;
mod sse;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use dataclaw_core::engine::TurnTrace;
use dataclaw_core::persist::Workspace;
use dataclaw_core::{AgentRuntime, Id, Session};

pub use api::ApiError;
pub use channels::{ChannelConfig, ChannelError, ChannelKind, ChannelStore, CHANNELS_FILE};
pub use delivery::{Deliverer, DeliveryRecord, OutboundMessage, OutboxEntry, RetryPolicy};
pub use inbound::{parse_update, session_id_for, InboundUpdate, SECRET_HEADER};
pub use log::{Level, LogLine, RecentLog};

/// Seconds of silence before an SSE stream sends `: ping`.
pub const HEARTBEAT_INTERVAL: Duration = Duration::from_secs(15);

#[derive(Debug, Clone)]
pub struct GatewayOptions {
    pub heartbeat: Duration,
    pub retry: RetryPolicy,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        GatewayOptions {
            heartbeat: HEARTBEAT_INTERVAL,
            retry: RetryPolicy::default(),
        }
    }
}

pub struct Gateway {
    runtime: Arc<AgentRuntime>,
    channels: ChannelStore,
    delivery: Deliverer,
    log: RecentLog,
    heartbeat: Duration,
    /// Chat each webhook session answers to.
    chats: Mutex<HashMap<Id, String>>,
    /// Turns (and their deliveries) not yet finished.
    pending: AtomicUsize,
}

impl Gateway {
    /// Loads `channels.json` from the runtime's workspace.
    pub fn new(runtime: Arc<AgentRuntime>, options: GatewayOptions) -> Result<Self, ChannelError> {
        let channels = ChannelStore::load(channels_path(runtime.workspace()))?;
        Ok(Gateway {
            runtime,
            channels,
            delivery: Deliverer::new(options.retry),
            log: RecentLog::default(),
            heartbeat: options.heartbeat,
            chats: Mutex::new(HashMap::new()),
            pending: AtomicUsize::new(0),
        })
    }

    pub fn runtime(&self) -> &Arc<AgentRuntime> {
        &self.runtime
    }

    pub fn channels(&self) -> &ChannelStore {
        &self.channels
    }

    pub fn delivery(&self) -> &Deliverer {
        &self.delivery
    }

    pub fn log(&self) -> &RecentLog {
        &self.log
    }

    /// Turns started through the gateway that have not finished delivering.
    pub fn pending_turns(&self) -> usize {
        self.pending.load(Ordering::SeqCst)
    }

    pub fn router(self: &Arc<Self>) -> axum::Router {
        api::router(self.clone())
    }

    /// Runs a turn already begun on `session` in the background, then delivers its result.
    fn spawn_turn(self: &Arc<Self>, session: Session, text: String) {
        self.pending.fetch_add(1, Ordering::SeqCst);
        let gw = self.clone();
        tokio::spawn(async move {
            let rt = gw.runtime.clone();
            let s = session.clone();
            match tokio::task::spawn_blocking(move || rt.run_started_turn(&s, &text)).await {
                Ok(trace) => gw.after_turn(&session, &trace).await,
                Err(e) => gw.log.push(
                    Level::Error,
                    format!("turn on session {} panicked: {e}", session.id),
                ),
            }
            gw.pending.fetch_sub(1, Ordering::SeqCst);
        });
    }

    async fn after_turn(&self, session: &Session, trace: &TurnTrace) {
        let outcome = match trace.final_text() {
            Some(_) => "final".to_string(),
            None => format!("{:?}", trace.outcome),
        };
        self.log.push(
            Level::Info,
            format!(
                "session {} turn {} finished after {} steps: {outcome}",
                session.id,
                session.turn_count + 1,
                trace.steps.len()
            ),
        );
        let Some(channel) = self.channels.get(&session.channel_id) else {
            return;
        };
        if channel.kind == ChannelKind::Console {
            return;
        }
        let chat_id = self
            .chats
            .lock()
            .unwrap()
            .get(&session.id)
            .cloned()
            .unwrap_or_else(|| session.id.to_string());
        for msg in OutboundMessage::for_turn(&channel.channel_id, &chat_id, trace) {
            let record = self
                .delivery
                .deliver(&channel, &msg, self.runtime.artifacts())
                .await;
            if let Some(e) = &record.error {
                self.log.push(
                    Level::Warn,
                    format!(
                        "delivery to {}/{} failed: {e}",
                        record.channel_id, record.chat_id
                    ),
                );
                break;
            }
        }
    }
}

pub fn channels_path(workspace: &Workspace) -> std::path::PathBuf {
    workspace.root().join(CHANNELS_FILE)
}

/// Serves the gateway until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    gateway: Arc<Gateway>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let addr = listener.local_addr()?;
    gateway
        .log
        .push(Level::Info, format!("listening on {addr}"));
    axum::serve(listener, gateway.router())
        .with_graceful_shutdown(shutdown)
        .await
}

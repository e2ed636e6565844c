//! Outbound delivery of turn results through the originating channel.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use dataclaw_core::engine::{Outcome, TurnTrace};
use dataclaw_core::persist::ArtifactStore;
use dataclaw_core::types::{Clock, SystemClock, Timestamp};
use dataclaw_core::Artifact;
use reqwest::multipart::{Form, Part};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::channels::{ChannelConfig, ChannelKind};

pub const MAX_ATTACHMENTS: usize = 10;
const RECORD_HISTORY: usize = 256;
const REQUEST_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum DeliveryError {
    #[error("delivery failed after {attempts} attempts: {last}")]
    Failed { attempts: u32, last: String },
    #[error("channel {0} is disabled")]
    Disabled(String),
    #[error("attachment {path} unreadable: {message}")]
    Attachment { path: String, message: String },
}

/// Backoff before each retry. The first attempt is immediate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    pub delays: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            delays: vec![
                Duration::from_secs(1),
                Duration::from_secs(2),
                Duration::from_secs(4),
            ],
        }
    }
}

impl RetryPolicy {
    pub fn max_attempts(&self) -> u32 {
        self.delays.len() as u32 + 1
    }

    pub fn total_backoff(&self) -> Duration {
        self.delays.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutboundMessage {
    pub channel_id: String,
    pub chat_id: String,
    pub text: String,
    pub attachments: Vec<Artifact>,
}

impl OutboundMessage {
    /// Messages reporting a finished turn. Attachments beyond the per-message
    /// limit spill into follow-up messages with empty text.
    pub fn for_turn(channel_id: &str, chat_id: &str, trace: &TurnTrace) -> Vec<OutboundMessage> {
        let text = match &trace.outcome {
            Outcome::Final { text } => text.clone(),
            Outcome::Aborted { reason, detail } => {
                format!("Sorry, I could not finish ({}): {detail}", reason.as_str())
            }
        };
        let mut chunks = trace.artifacts.chunks(MAX_ATTACHMENTS);
        let mut out = vec![OutboundMessage {
            channel_id: channel_id.into(),
            chat_id: chat_id.into(),
            text,
            attachments: chunks.next().map(<[Artifact]>::to_vec).unwrap_or_default(),
        }];
        out.extend(chunks.map(|c| OutboundMessage {
            channel_id: channel_id.into(),
            chat_id: chat_id.into(),
            text: String::new(),
            attachments: c.to_vec(),
        }));
        out
    }
}

/// What the loopback channel "sent".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutboxEntry {
    Text {
        channel_id: String,
        chat_id: String,
        text: String,
    },
    Attachment {
        channel_id: String,
        chat_id: String,
        artifact: Artifact,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub channel_id: String,
    pub chat_id: String,
    pub ok: bool,
    /// HTTP requests made, retries included.
    pub attempts: u32,
    pub retries: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub recorded_at: Timestamp,
}

pub struct Deliverer {
    http: reqwest::Client,
    retry: RetryPolicy,
    outbox: Mutex<Vec<OutboxEntry>>,
    records: Mutex<VecDeque<DeliveryRecord>>,
}

/// Chat ids that look numeric go out as JSON numbers, like Telegram expects.
fn chat_id_value(chat_id: &str) -> serde_json::Value {
    chat_id
        .parse::<i64>()
        .map(serde_json::Value::from)
        .unwrap_or_else(|_| serde_json::Value::from(chat_id))
}

#[derive(Default)]
struct Tally {
    attempts: u32,
    retries: u32,
}

impl Tally {
    fn add(&mut self, attempts: u32) {
        self.attempts += attempts;
        self.retries += attempts.saturating_sub(1);
    }
}

enum Attempt {
    Done,
    Transient(String),
    Permanent(String),
}

impl Deliverer {
    pub fn new(retry: RetryPolicy) -> Self {
        let http = reqwest::Client::builder()
            .timeout(REQUEST_TIMEOUT)
            .build()
            .expect("http client builds");
        Deliverer {
            http,
            retry,
            outbox: Mutex::new(Vec::new()),
            records: Mutex::new(VecDeque::new()),
        }
    }

    pub fn retry_policy(&self) -> &RetryPolicy {
        &self.retry
    }

    pub fn outbox(&self, channel_id: &str) -> Vec<OutboxEntry> {
        self.outbox
            .lock()
            .unwrap()
            .iter()
            .filter(|e| match e {
                OutboxEntry::Text { channel_id: c, .. }
                | OutboxEntry::Attachment { channel_id: c, .. } => c == channel_id,
            })
            .cloned()
            .collect()
    }

    /// Most recent delivery records, oldest first.
    pub fn records(&self) -> Vec<DeliveryRecord> {
        self.records.lock().unwrap().iter().cloned().collect()
    }

    pub fn failures(&self) -> Vec<DeliveryRecord> {
        self.records
            .lock()
            .unwrap()
            .iter()
            .filter(|r| !r.ok)
            .cloned()
            .collect()
    }

    /// Delivers one message and records the outcome. Never panics, never fails the caller.
    pub async fn deliver(
        &self,
        channel: &ChannelConfig,
        msg: &OutboundMessage,
        artifacts: &ArtifactStore,
    ) -> DeliveryRecord {
        let (tally, result) = if !channel.enabled {
            (
                Tally::default(),
                Err(DeliveryError::Disabled(channel.channel_id.clone())),
            )
        } else {
            match channel.kind {
                ChannelKind::Console => (Tally::default(), Ok(())),
                ChannelKind::Loopback => {
                    self.to_outbox(msg);
                    (Tally::default(), Ok(()))
                }
                ChannelKind::WebhookIm => {
                    let base = channel
                        .outbound_url
                        .as_deref()
                        .unwrap_or_default()
                        .trim_end_matches('/');
                    self.to_webhook(base, msg, artifacts).await
                }
            }
        };
        let record = DeliveryRecord {
            channel_id: msg.channel_id.clone(),
            chat_id: msg.chat_id.clone(),
            ok: result.is_ok(),
            attempts: tally.attempts,
            retries: tally.retries,
            error: result.err().map(|e| e.to_string()),
            recorded_at: SystemClock.now(),
        };
        if let Some(e) = &record.error {
            tracing::warn!(channel = %record.channel_id, chat = %record.chat_id, error = %e, "delivery failed");
        }
        let mut records = self.records.lock().unwrap();
        if records.len() == RECORD_HISTORY {
            records.pop_front();
        }
        records.push_back(record.clone());
        record
    }

    fn to_outbox(&self, msg: &OutboundMessage) {
        let mut outbox = self.outbox.lock().unwrap();
        if !msg.text.is_empty() {
            outbox.push(OutboxEntry::Text {
                channel_id: msg.channel_id.clone(),
                chat_id: msg.chat_id.clone(),
                text: msg.text.clone(),
            });
        }
        for a in &msg.attachments {
            outbox.push(OutboxEntry::Attachment {
                channel_id: msg.channel_id.clone(),
                chat_id: msg.chat_id.clone(),
                artifact: a.clone(),
            });
        }
    }

    /// Text first, then one `sendDocument` per attachment. Stops at the first part that fails.
    async fn to_webhook(
        &self,
        base: &str,
        msg: &OutboundMessage,
        artifacts: &ArtifactStore,
    ) -> (Tally, Result<(), DeliveryError>) {
        let chat = chat_id_value(&msg.chat_id);
        let mut total = Tally::default();
        if !msg.text.is_empty() {
            let url = format!("{base}/sendMessage");
            let body = json!({"chat_id": chat, "text": msg.text});
            let (n, r) = self
                .send_with_retry(|| self.http.post(&url).json(&body))
                .await;
            total.add(n);
            if let Err(e) = r {
                return (total, Err(e));
            }
        }
        for a in &msg.attachments {
            let bytes = match artifacts.read(a) {
                Ok(b) => b,
                Err(e) => {
                    return (
                        total,
                        Err(DeliveryError::Attachment {
                            path: a.relative_path.clone(),
                            message: e.to_string(),
                        }),
                    )
                }
            };
            let file_name = a
                .relative_path
                .rsplit('/')
                .next()
                .unwrap_or("artifact")
                .to_string();
            let url = format!("{base}/sendDocument");
            let (n, r) = self
                .send_with_retry(|| {
                    let part = Part::bytes(bytes.clone())
                        .file_name(file_name.clone())
                        .mime_str(&a.media_type)
                        .unwrap_or_else(|_| {
                            Part::bytes(bytes.clone()).file_name(file_name.clone())
                        });
                    let form = Form::new()
                        .text("chat_id", msg.chat_id.clone())
                        .part("document", part);
                    self.http.post(&url).multipart(form)
                })
                .await;
            total.add(n);
            if let Err(e) = r {
                return (total, Err(e));
            }
        }
        (total, Ok(()))
    }

    async fn send_with_retry<F>(&self, build: F) -> (u32, Result<(), DeliveryError>)
    where
        F: Fn() -> reqwest::RequestBuilder,
    {
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            let outcome = match build().send().await {
                Ok(r) if r.status().is_success() => Attempt::Done,
                Ok(r)
                    if r.status().is_server_error()
                        || r.status() == reqwest::StatusCode::TOO_MANY_REQUESTS =>
                {
                    Attempt::Transient(format!("HTTP {}", r.status()))
                }
                Ok(r) => Attempt::Permanent(format!("HTTP {}", r.status())),
                Err(e) => Attempt::Transient(e.to_string()),
            };
            match outcome {
                Attempt::Done => return (attempts, Ok(())),
                Attempt::Permanent(last) => {
                    return (attempts, Err(DeliveryError::Failed { attempts, last }))
                }
                Attempt::Transient(last) => match self.retry.delays.get(attempts as usize - 1) {
                    Some(delay) => {
                        tracing::debug!(attempt = attempts, error = %last, "delivery attempt failed, retrying");
                        tokio::time::sleep(*delay).await;
                    }
                    None => return (attempts, Err(DeliveryError::Failed { attempts, last })),
                },
            }
        }
    }
}

//! Telegram-compatible inbound updates.
//!
//! Accepted shape: `{"message": {"chat": {"id": N}, "from": {"id": N}, "text": "..."}}`.
//! A `caption` stands in for `text` on media messages; `document` and `photo` entries
//! become attachment references.

use dataclaw_core::Id;
use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

/// Header carrying the per-channel webhook secret.
pub const SECRET_HEADER: &str = "x-telegram-bot-api-secret-token";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InboundError {
    #[error("malformed update: {0}")]
    Malformed(String),
    #[error("update has no message text")]
    NoText,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InboundUpdate {
    pub raw: Value,
    pub chat_id: i64,
    pub user_id: Option<i64>,
    pub text: String,
    pub attachments: Vec<String>,
}

#[derive(Deserialize)]
struct Update {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    chat: Peer,
    from: Option<Peer>,
    text: Option<String>,
    caption: Option<String>,
    document: Option<FileRef>,
    #[serde(default)]
    photo: Vec<FileRef>,
}

#[derive(Deserialize)]
struct Peer {
    id: i64,
}

#[derive(Deserialize)]
struct FileRef {
    file_id: String,
}

pub fn parse_update(body: &[u8]) -> Result<InboundUpdate, InboundError> {
    let raw: Value =
        serde_json::from_slice(body).map_err(|e| InboundError::Malformed(e.to_string()))?;
    let update: Update =
        serde_json::from_value(raw.clone()).map_err(|e| InboundError::Malformed(e.to_string()))?;
    let m = update.message;
    let text = m
        .text
        .or(m.caption)
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .ok_or(InboundError::NoText)?;
    let mut attachments: Vec<String> = m.document.into_iter().map(|d| d.file_id).collect();
    // photos come in several sizes; the last one is the largest
    attachments.extend(m.photo.into_iter().last().map(|p| p.file_id));
    Ok(InboundUpdate {
        raw,
        chat_id: m.chat.id,
        user_id: m.from.map(|f| f.id),
        text,
        attachments,
    })
}

/// Session id for a (channel, chat) pair; a pure function of the pair.
pub fn session_id_for(channel_id: &str, chat_id: i64) -> Id {
    Id::derived(&[channel_id, &chat_id.to_string()])
}

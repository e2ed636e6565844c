//! Channel configuration, persisted as `<workspace>/channels.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CHANNELS_FILE: &str = "channels.json";

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("invalid channel: {0}")]
    Invalid(String),
    #[error("unknown channel {0}")]
    NotFound(String),
    #[error("channel store {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("channel store {path} is corrupt: {source}")]
    Corrupt {
        path: PathBuf,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    WebhookIm,
    Loopback,
    Console,
}

fn enabled_by_default() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub channel_id: String,
    pub kind: ChannelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inbound_secret: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outbound_url: Option<String>,
    #[serde(default = "enabled_by_default")]
    pub enabled: bool,
}

impl ChannelConfig {
    pub fn new(channel_id: impl Into<String>, kind: ChannelKind) -> Self {
        ChannelConfig {
            channel_id: channel_id.into(),
            kind,
            inbound_secret: None,
            outbound_url: None,
            enabled: true,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let id = &self.channel_id;
        if id.is_empty()
            || id.len() > 64
            || !id
                .bytes()
                .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
        {
            return Err(ChannelError::Invalid(format!(
                "channel_id {id:?} must be 1-64 chars of [A-Za-z0-9_-]"
            )));
        }
        match (self.kind, &self.outbound_url) {
            (ChannelKind::WebhookIm, None) => Err(ChannelError::Invalid(
                "webhook_im channels need an outbound_url".into(),
            )),
            (ChannelKind::WebhookIm, Some(url))
                if !url.starts_with("http://") && !url.starts_with("https://") =>
            {
                Err(ChannelError::Invalid(format!(
                    "outbound_url {url:?} must be an http(s) URL"
                )))
            }
            (ChannelKind::Loopback | ChannelKind::Console, Some(_)) => Err(ChannelError::Invalid(
                "outbound_url is only valid for webhook_im channels".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Whether inbound webhooks are accepted at all.
    pub fn accepts_webhooks(&self) -> bool {
        self.enabled && self.kind != ChannelKind::Console
    }
}

/// Channels present in a fresh workspace.
pub fn default_channels() -> Vec<ChannelConfig> {
    vec![
        ChannelConfig::new("console", ChannelKind::Console),
        ChannelConfig::new("loopback", ChannelKind::Loopback),
    ]
}

/// Channel table with write-through persistence.
#[derive(Debug)]
pub struct ChannelStore {
    path: PathBuf,
    channels: RwLock<BTreeMap<String, ChannelConfig>>,
}

impl ChannelStore {
    /// Loads the store, seeding the defaults when the file does not exist yet.
    pub fn load(path: impl Into<PathBuf>) -> Result<Self, ChannelError> {
        let path = path.into();
        let list: Vec<ChannelConfig> = match std::fs::read(&path) {
            Ok(bytes) => {
                serde_json::from_slice(&bytes).map_err(|source| ChannelError::Corrupt {
                    path: path.clone(),
                    source,
                })?
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => default_channels(),
            Err(source) => return Err(ChannelError::Io { path, source }),
        };
        let mut channels = BTreeMap::new();
        for c in list {
            c.validate()?;
            if channels.insert(c.channel_id.clone(), c).is_some() {
                return Err(ChannelError::Invalid(
                    "duplicate channel_id in store".into(),
                ));
            }
        }
        Ok(ChannelStore {
            path,
            channels: RwLock::new(channels),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn list(&self) -> Vec<ChannelConfig> {
        self.channels.read().unwrap().values().cloned().collect()
    }

    pub fn get(&self, channel_id: &str) -> Option<ChannelConfig> {
        self.channels.read().unwrap().get(channel_id).cloned()
    }

    /// Creates or replaces a channel; returns true when it was new.
    pub fn upsert(&self, config: ChannelConfig) -> Result<bool, ChannelError> {
        config.validate()?;
        let mut channels = self.channels.write().unwrap();
        let mut next = channels.clone();
        let created = next.insert(config.channel_id.clone(), config).is_none();
        self.persist(&next)?;
        *channels = next;
        Ok(created)
    }

    pub fn remove(&self, channel_id: &str) -> Result<ChannelConfig, ChannelError> {
        let mut channels = self.channels.write().unwrap();
        let mut next = channels.clone();
        let removed = next
            .remove(channel_id)
            .ok_or_else(|| ChannelError::NotFound(channel_id.to_string()))?;
        self.persist(&next)?;
        *channels = next;
        Ok(removed)
    }

    fn persist(&self, channels: &BTreeMap<String, ChannelConfig>) -> Result<(), ChannelError> {
        let list: Vec<&ChannelConfig> = channels.values().collect();
        let mut bytes = serde_json::to_vec_pretty(&list).expect("channel configs serialize");
        bytes.push(b'\n');
        let tmp = self.path.with_extension("json.tmp");
        let io = |source| ChannelError::Io {
            path: self.path.clone(),
            source,
        };
        std::fs::write(&tmp, &bytes).map_err(io)?;
        std::fs::rename(&tmp, &self.path).map_err(io)
    }
}

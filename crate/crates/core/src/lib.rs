//! Core of the dataclaw agent runtime.
//!
//! A turn flows from a [`types::ChatMessage`] through [`runtime::AgentRuntime`] into the
//! ReAct loop in [`engine`], which calls tools from [`tools`] and skills from [`skills`],
//! keeps its context in [`memory`], and publishes [`types::AgentEvent`]s on [`stream`].

pub mod config;
pub mod engine;
pub mod llm;
pub mod memory;
pub mod persist;
pub mod runtime;
pub mod sandbox;
pub mod session;
pub mod skills;
pub mod stream;
pub mod tools;
pub mod types;

pub use config::{AgentConfig, Verbosity};
pub use runtime::{AgentRuntime, RuntimeError, RuntimeStatus};
pub use types::{AgentEvent, Artifact, ChatMessage, EventKind, Id, Role, Session, SessionStatus};

//! Per-session SSE responses.

use std::convert::Infallible;
use std::time::Duration;

use axum::body::Body;
use axum::http::header::{CACHE_CONTROL, CONTENT_TYPE};
use axum::response::Response;
use dataclaw_core::stream::{encode_sse, Subscription, HEARTBEAT};

pub const EVENT_STREAM: &str = "text/event-stream";

/// Frames for `sub`, with a heartbeat after every `heartbeat` of silence.
pub fn response(sub: Subscription, heartbeat: Duration) -> Response {
    let frames = futures::stream::unfold(sub, move |mut sub| async move {
        // `next` is cancel-safe: a notification that races the timeout is kept as a permit
        let frame = match tokio::time::timeout(heartbeat, sub.next()).await {
            Ok(event) => encode_sse(&event),
            Err(_) => HEARTBEAT.to_string(),
        };
        Some((Ok::<_, Infallible>(frame), sub))
    });
    Response::builder()
        .header(CONTENT_TYPE, EVENT_STREAM)
        .header(CACHE_CONTROL, "no-cache")
        .body(Body::from_stream(frames))
        .expect("static headers are valid")
}

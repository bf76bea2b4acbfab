//! Prompt-in, text-out chat backends: a deterministic script for tests and
//! fixtures, and a generic HTTP chat-completion client.

use std::collections::VecDeque;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const LLM_URL_ENV: &str = "CHEMBOT_LLM_URL";
pub const LLM_KEY_ENV: &str = "CHEMBOT_LLM_KEY";

/// Lines of a user message starting with this carry the previous
/// rejection reason.
pub const FEEDBACK_PREFIX: &str = "Feedback: ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: "assistant".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub messages: Vec<ChatMessage>,
}

impl ChatRequest {
    /// Rejection reason carried by the last user message, if any.
    pub fn feedback(&self) -> Option<&str> {
        let last = self.messages.iter().rev().find(|m| m.role == "user")?;
        last.content.lines().find_map(|l| l.strip_prefix(FEEDBACK_PREFIX))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("transport error{}: {message}", if *.retriable { " (retriable)" } else { "" })]
    Transport { message: String, retriable: bool },
    #[error("endpoint answered HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("script exhausted after {0} replies")]
    ScriptExhausted(usize),
    #[error("configuration error: {0}")]
    Config(String),
}

pub trait ChatBackend {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, BackendError>;
}

/// Fixture description of a scripted backend.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptSpec {
    pub replies: Vec<String>,
    /// Consumed instead of `replies` when the request carries feedback.
    #[serde(default)]
    pub alternates: Vec<String>,
    /// Keep answering with the last reply once the script runs out.
    #[serde(default)]
    pub repeat_last: bool,
}

/// Replays fixed replies and records what it was asked.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    replies: VecDeque<String>,
    alternates: VecDeque<String>,
    repeat_last: bool,
    last: Option<String>,
    served: usize,
    pub requests: Vec<ChatRequest>,
    /// Feedback seen on each call, in order.
    pub feedback_log: Vec<Option<String>>,
}

impl ScriptedBackend {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self::from_spec(&ScriptSpec { replies: replies.into_iter().map(Into::into).collect(), ..Default::default() })
    }

    pub fn from_spec(spec: &ScriptSpec) -> Self {
        Self {
            replies: spec.replies.iter().cloned().collect(),
            alternates: spec.alternates.iter().cloned().collect(),
            repeat_last: spec.repeat_last,
            ..Default::default()
        }
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, BackendError> {
        let feedback = request.feedback().map(str::to_string);
        let reply = match feedback {
            Some(_) if !self.alternates.is_empty() => self.alternates.pop_front(),
            _ => self.replies.pop_front(),
        };
        self.feedback_log.push(feedback);
        self.requests.push(request.clone());
        let reply = match (reply, &self.last) {
            (Some(r), _) => r,
            (None, Some(last)) if self.repeat_last => last.clone(),
            _ => return Err(BackendError::ScriptExhausted(self.served)),
        };
        self.served += 1;
        self.last = Some(reply.clone());
        Ok(reply)
    }
}

/// POSTs `{system, messages}` as JSON and reads the reply text from the
/// first shape that fits: `choices[0].message.content`, `content`,
/// `text` or `message.content`.
#[derive(Debug, Clone)]
pub struct HttpChatBackend {
    pub url: String,
    pub key: Option<String>,
    pub timeout: Duration,
    /// Extra attempts after a retriable failure.
    pub retries: u32,
}

impl HttpChatBackend {
    pub fn from_env() -> Result<Self, BackendError> {
        let url = std::env::var(LLM_URL_ENV)
            .ok()
            .filter(|u| !u.trim().is_empty())
            .ok_or_else(|| BackendError::Config(format!("{LLM_URL_ENV} is not set")))?;
        let key = std::env::var(LLM_KEY_ENV).ok().filter(|k| !k.is_empty());
        Ok(Self { url, key, timeout: Duration::from_secs(60), retries: 2 })
    }

    fn attempt(&self, agent: &ureq::Agent, body: &serde_json::Value) -> Result<String, BackendError> {
        let mut req = agent.post(&self.url).set("Content-Type", "application/json");
        if let Some(key) = &self.key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Status(status, r)) => {
                let body = r.into_string().unwrap_or_default();
                return Err(BackendError::Status { status, body: body.chars().take(500).collect() });
            }
            Err(ureq::Error::Transport(t)) => return Err(BackendError::Transport { message: t.to_string(), retriable: true }),
        };
        let text = resp.into_string().map_err(|e| BackendError::Transport { message: e.to_string(), retriable: true })?;
        extract_reply(&text)
    }
}

pub fn extract_reply(body: &str) -> Result<String, BackendError> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| BackendError::Malformed(e.to_string()))?;
    let reply = ["/choices/0/message/content", "/content", "/text", "/message/content"]
        .iter()
        .find_map(|p| v.pointer(p).and_then(|c| c.as_str()))
        .map(str::to_string);
    reply.ok_or_else(|| BackendError::Malformed("no reply text in response".into()))
}

impl ChatBackend for HttpChatBackend {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, BackendError> {
        let agent = ureq::AgentBuilder::new().timeout(self.timeout).build();
        let body = serde_json::to_value(request).expect("request serializes");
        let mut tries = 0;
        loop {
            match self.attempt(&agent, &body) {
                Err(e @ BackendError::Transport { .. }) if tries < self.retries => {
                    log::warn!("chat backend attempt {} failed: {e}", tries + 1);
                    tries += 1;
                }
                Err(BackendError::Status { status, body }) if status >= 500 && tries < self.retries => {
                    log::warn!("chat backend attempt {} got HTTP {status}: {body}", tries + 1);
                    tries += 1;
                }
                other => return other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(feedback: Option<&str>) -> ChatRequest {
        let mut content = "Goal: x".to_string();
        if let Some(f) = feedback {
            content.push_str(&format!("\n{FEEDBACK_PREFIX}{f}"));
        }
        ChatRequest { system: "s".into(), messages: vec![ChatMessage::user(content)] }
    }

    #[test]
    fn alternates_serve_feedback_requests() {
        let mut b = ScriptedBackend::from_spec(&ScriptSpec {
            replies: vec!["open bottle".into(), "stir".into()],
            alternates: vec!["pour 5 mL".into()],
            repeat_last: false,
        });
        assert_eq!(b.complete(&req(None)).unwrap(), "open bottle");
        assert_eq!(b.complete(&req(Some("redundant with step 2"))).unwrap(), "pour 5 mL");
        assert_eq!(b.complete(&req(Some("again"))).unwrap(), "stir");
        assert!(matches!(b.complete(&req(None)), Err(BackendError::ScriptExhausted(3))));
        assert_eq!(b.feedback_log[1].as_deref(), Some("redundant with step 2"));
    }

    #[test]
    fn repeat_last_keeps_answering() {
        let mut b =
            ScriptedBackend::from_spec(&ScriptSpec { replies: vec!["a".into()], repeat_last: true, ..Default::default() });
        for _ in 0..3 {
            assert_eq!(b.complete(&req(None)).unwrap(), "a");
        }
    }

    #[test]
    fn reply_shapes() {
        assert_eq!(extract_reply(r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}]}"#).unwrap(), "hi");
        assert_eq!(extract_reply(r#"{"content":"yo"}"#).unwrap(), "yo");
        assert!(extract_reply(r#"{"nothing":1}"#).is_err());
        assert!(extract_reply("not json").is_err());
    }

    #[test]
    fn unreachable_endpoint_is_retriable() {
        let mut b =
            HttpChatBackend { url: "http://127.0.0.1:9/none".into(), key: None, timeout: Duration::from_millis(200), retries: 0 };
        let err = b.complete(&req(None)).unwrap_err();
        assert!(matches!(err, BackendError::Transport { retriable: true, .. }), "{err}");
    }
}

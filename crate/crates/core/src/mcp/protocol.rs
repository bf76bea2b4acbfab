//! Frame classification and JSON-RPC envelopes.

use serde_json::{json, Value};

pub mod error_codes {
    pub const PARSE_ERROR: i64 = -32700;
    pub const INVALID_REQUEST: i64 = -32600;
    pub const METHOD_NOT_FOUND: i64 = -32601;
    pub const INVALID_PARAMS: i64 = -32602;
    pub const INTERNAL_ERROR: i64 = -32603;
    /// A skill is already executing on this server.
    pub const BUSY: i64 = 1001;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpcError {
    pub code: i64,
    pub message: String,
}

impl RpcError {
    pub fn new(code: i64, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

/// One incoming line, classified.
#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Request {
        id: Value,
        method: String,
        params: Value,
    },
    Notification {
        method: String,
        params: Value,
    },
    /// Needs an error response; `id` is null when it could not be read.
    Invalid {
        id: Value,
        error: RpcError,
    },
    /// Blank line; ignored.
    Empty,
}

pub fn parse_frame(bytes: &[u8]) -> Frame {
    use error_codes::*;
    let invalid = |id: Value, code, message: &str| Frame::Invalid { id, error: RpcError::new(code, message) };
    let Ok(text) = std::str::from_utf8(bytes) else {
        return invalid(Value::Null, PARSE_ERROR, "frame is not valid UTF-8");
    };
    if text.trim().is_empty() {
        return Frame::Empty;
    }
    let value: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => return invalid(Value::Null, PARSE_ERROR, &format!("parse error: {e}")),
    };
    let Value::Object(mut obj) = value else {
        let what = if value.is_array() { "batch requests are not supported" } else { "request must be a JSON object" };
        return invalid(Value::Null, INVALID_REQUEST, what);
    };
    let id = obj.remove("id");
    let id_ok = matches!(id, None | Some(Value::Null | Value::Number(_) | Value::String(_)));
    let reply_id = if id_ok { id.clone().unwrap_or(Value::Null) } else { Value::Null };
    if !id_ok {
        return invalid(reply_id, INVALID_REQUEST, "id must be a string, number or null");
    }
    if obj.get("jsonrpc").and_then(Value::as_str) != Some("2.0") {
        return invalid(reply_id, INVALID_REQUEST, "jsonrpc must be \"2.0\"");
    }
    let Some(Value::String(method)) = obj.remove("method") else {
        return invalid(reply_id, INVALID_REQUEST, "method must be a string");
    };
    let params = obj.remove("params").unwrap_or(Value::Null);
    match id {
        None => Frame::Notification { method, params },
        Some(id) => Frame::Request { id, method, params },
    }
}

pub fn response(id: &Value, result: Value) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "result": result})
}

pub fn error_response(id: &Value, error: &RpcError) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "error": {"code": error.code, "message": error.message}})
}

pub fn notification(method: &str, params: Value) -> Value {
    json!({"jsonrpc": "2.0", "method": method, "params": params})
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification() {
        assert_eq!(parse_frame(b"  "), Frame::Empty);
        assert!(matches!(parse_frame(b"{"), Frame::Invalid { error: RpcError { code: -32700, .. }, .. }));
        assert!(matches!(parse_frame(&[0xff, 0xfe]), Frame::Invalid { error: RpcError { code: -32700, .. }, .. }));
        assert!(matches!(parse_frame(b"[1]"), Frame::Invalid { error: RpcError { code: -32600, .. }, .. }));
        assert!(matches!(parse_frame(b"3"), Frame::Invalid { error: RpcError { code: -32600, .. }, .. }));
        match parse_frame(br#"{"jsonrpc":"2.0","id":7,"method":3}"#) {
            Frame::Invalid { id, error } => {
                assert_eq!(id, json!(7));
                assert_eq!(error.code, -32600);
            }
            f => panic!("{f:?}"),
        }
        assert!(matches!(parse_frame(br#"{"jsonrpc":"2.0","id":{},"method":"x"}"#), Frame::Invalid { id: Value::Null, .. }));
        assert!(matches!(parse_frame(br#"{"jsonrpc":"2.0","method":"notifications/initialized"}"#), Frame::Notification { .. }));
        assert!(matches!(parse_frame(br#"{"jsonrpc":"2.0","id":"a","method":"tools/list"}"#), Frame::Request { .. }));
        assert!(matches!(parse_frame(br#"{"id":1,"method":"tools/list"}"#), Frame::Invalid { .. }));
    }
}

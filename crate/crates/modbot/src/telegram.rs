//! Minimal Bot API client: long-poll updates, delete messages, ban members.

use std::time::Duration;

use chrono::{TimeZone, Utc};
use propwatch_core::corpus::{Message, Source};
use serde_json::{json, Value};

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct TelegramClient {
    http: reqwest::Client,
    base: String,
    token: String,
}

/// Numeric ids go out as JSON numbers, anything else (`@channel`) as strings.
pub fn chat_ref(id: &str) -> Value {
    id.parse::<i64>().map_or_else(|_| json!(id), |n| json!(n))
}

impl TelegramClient {
    pub fn new(base: impl Into<String>, token: impl Into<String>) -> Result<Self> {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| Error::Http(e.to_string()))?;
        Ok(Self {
            http,
            base: base.into().trim_end_matches('/').to_string(),
            token: token.into(),
        })
    }

    fn url(&self, method: &str) -> String {
        format!("{}/bot{}/{method}", self.base, self.token)
    }

    async fn parse(method: &str, resp: reqwest::Response) -> Result<Value> {
        let status = resp.status();
        let body: Value = resp.json().await.map_err(|e| Error::Http(format!("{method}: {e}")))?;
        if body.get("ok").and_then(Value::as_bool) == Some(true) {
            return Ok(body.get("result").cloned().unwrap_or(Value::Null));
        }
        let description = body
            .get("description")
            .and_then(Value::as_str)
            .map_or_else(|| format!("HTTP {status}"), str::to_string);
        Err(Error::Api {
            method: method.into(),
            description,
        })
    }

    pub async fn call(&self, method: &str, body: &Value) -> Result<Value> {
        let resp = self
            .http
            .post(self.url(method))
            .json(body)
            .send()
            .await
            .map_err(|e| Error::Http(format!("{method}: {e}")))?;
        Self::parse(method, resp).await
    }

    pub async fn delete_message(&self, chat_id: &str, message_id: i64) -> Result<()> {
        self.call("deleteMessage", &json!({"chat_id": chat_ref(chat_id), "message_id": message_id}))
            .await
            .map(drop)
    }

    pub async fn ban_chat_member(&self, chat_id: &str, user_id: &str) -> Result<()> {
        self.call("banChatMember", &json!({"chat_id": chat_ref(chat_id), "user_id": chat_ref(user_id)}))
            .await
            .map(drop)
    }

    /// Raw updates with `update_id >= offset`.
    pub async fn get_updates(&self, offset: i64, timeout_secs: u64) -> Result<Vec<Value>> {
        let url = format!("{}?timeout={timeout_secs}&offset={offset}", self.url("getUpdates"));
        let resp = self
            .http
            .get(url)
            .timeout(Duration::from_secs(timeout_secs + 10))
            .send()
            .await
            .map_err(|e| Error::Http(format!("getUpdates: {e}")))?;
        match Self::parse("getUpdates", resp).await? {
            Value::Array(v) => Ok(v),
            other => Err(Error::Http(format!("getUpdates returned {other}"))),
        }
    }
}

/// Converts a Bot API update carrying a message or channel post.
pub fn update_to_message(update: &Value) -> Option<Message> {
    let m = update.get("message").or_else(|| update.get("channel_post"))?;
    let id_str = |v: &Value| match v {
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        _ => None,
    };
    let from = m.get("from");
    let name = |k: &str| from.and_then(|f| f.get(k)).and_then(Value::as_str).map(str::to_string);
    Some(Message {
        channel_id: id_str(m.get("chat")?.get("id")?)?,
        message_id: m.get("message_id")?.as_i64()?,
        account_id: from.and_then(|f| f.get("id")).and_then(id_str),
        timestamp: Utc.timestamp_opt(m.get("date")?.as_i64()?, 0).single()?,
        text: m
            .get("text")
            .or_else(|| m.get("caption"))
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string(),
        reply_to: m
            .get("reply_to_message")
            .and_then(|r| r.get("message_id"))
            .and_then(Value::as_i64),
        first_name: name("first_name"),
        last_name: name("last_name"),
        username: name("username"),
        deleted: false,
        source: Source::Realtime,
    })
}

/// Long-polls until `events` closes or `stop` fires, forwarding each
/// message update. Poll errors back off and retry.
pub async fn poll_updates(
    client: TelegramClient,
    events: tokio::sync::mpsc::Sender<std::result::Result<Message, String>>,
    mut stop: tokio::sync::watch::Receiver<bool>,
    timeout_secs: u64,
) {
    let mut offset = 0i64;
    let mut delay = Duration::from_millis(500);
    loop {
        if *stop.borrow() {
            return;
        }
        let batch = tokio::select! {
            r = client.get_updates(offset, timeout_secs) => r,
            _ = stop.changed() => return,
        };
        match batch {
            Ok(updates) => {
                delay = Duration::from_millis(500);
                for u in updates {
                    if let Some(id) = u.get("update_id").and_then(Value::as_i64) {
                        offset = offset.max(id + 1);
                    }
                    let event = update_to_message(&u).ok_or_else(|| format!("unsupported update {u}"));
                    if events.send(event).await.is_err() {
                        return;
                    }
                }
            }
            Err(e) => {
                log::warn!("polling failed, retrying in {delay:?}: {e}");
                tokio::time::sleep(delay).await;
                delay = (delay * 2).min(Duration::from_secs(30));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converts_message_updates() {
        let u = json!({
            "update_id": 7,
            "message": {
                "message_id": 42,
                "date": 1_694_000_000,
                "chat": {"id": -1001, "type": "supergroup"},
                "from": {"id": 555, "first_name": "Lira", "username": "lk"},
                "text": "hello",
                "reply_to_message": {"message_id": 41}
            }
        });
        let m = update_to_message(&u).unwrap();
        assert_eq!(m.channel_id, "-1001");
        assert_eq!(m.message_id, 42);
        assert_eq!(m.account_id.as_deref(), Some("555"));
        assert_eq!(m.reply_to, Some(41));
        assert_eq!(m.username.as_deref(), Some("lk"));
        assert!(update_to_message(&json!({"update_id": 8, "poll": {}})).is_none());
    }

    #[test]
    fn chat_refs_keep_numbers_numeric() {
        assert_eq!(chat_ref("-100123"), json!(-100123));
        assert_eq!(chat_ref("@chan"), json!("@chan"));
    }
}

//! Message ingestion, merging and indexing.
//!
//! Two feeds are supported: the historical chat export (a single JSON
//! document with a `messages` array) and the real-time event stream (JSONL).
//! Both are merged into a [`Corpus`], keyed by `(channel_id, message_id)`.
//! Comparing which keys each feed has seen gives the deletion ground truth
//! used by the moderation analysis.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Historical,
    Realtime,
}

/// Identifies a message globally. Message ids are only unique within a channel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MessageKey {
    pub channel_id: String,
    pub message_id: i64,
}

impl MessageKey {
    pub fn new(channel_id: impl Into<String>, message_id: i64) -> Self {
        Self {
            channel_id: channel_id.into(),
            message_id,
        }
    }
}

impl fmt::Display for MessageKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.channel_id, self.message_id)
    }
}

impl FromStr for MessageKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (chan, id) = s
            .rsplit_once(':')
            .ok_or_else(|| Error::InvalidInput(format!("message key {s:?} has no ':'")))?;
        let message_id = id
            .parse()
            .map_err(|_| Error::InvalidInput(format!("message key {s:?} has a non-integer id")))?;
        Ok(MessageKey::new(chan, message_id))
    }
}

impl Serialize for MessageKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MessageKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One chat message. This is also the canonical JSONL dump record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub channel_id: String,
    pub message_id: i64,
    /// Absent for posts made by the channel itself.
    pub account_id: Option<String>,
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub text: String,
    pub reply_to: Option<i64>,
    #[serde(default)]
    pub first_name: Option<String>,
    #[serde(default)]
    pub last_name: Option<String>,
    #[serde(default)]
    pub username: Option<String>,
    #[serde(default)]
    pub deleted: bool,
    pub source: Source,
}

impl Message {
    pub fn key(&self) -> MessageKey {
        MessageKey::new(self.channel_id.clone(), self.message_id)
    }

    pub fn reply_key(&self) -> Option<MessageKey> {
        self.reply_to
            .map(|id| MessageKey::new(self.channel_id.clone(), id))
    }
}

/// A record that could not be turned into a [`Message`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Malformed {
    /// Record index for exports, 1-based line number for streams.
    pub record: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub messages: Vec<Message>,
    pub malformed: Vec<Malformed>,
    /// Records whose timestamp went backwards within their channel.
    pub non_monotone: usize,
}

impl ParseOutcome {
    fn check_monotone(&mut self) {
        let mut last: HashMap<&str, DateTime<Utc>> = HashMap::new();
        let mut count = 0;
        for m in &self.messages {
            if let Some(prev) = last.insert(&m.channel_id, m.timestamp) {
                if m.timestamp < prev {
                    count += 1;
                }
            }
        }
        if count > 0 {
            log::warn!("{count} records with non-monotone timestamps");
        }
        self.non_monotone = count;
    }
}

/// Parses an ISO-8601 instant. Values without an offset are taken as UTC;
/// integers are epoch seconds. Sub-second precision is dropped.
pub fn parse_timestamp(v: &Value) -> Option<DateTime<Utc>> {
    match v {
        Value::String(s) => {
            if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
                return Some(dt.with_timezone(&Utc).trunc_subsecs(0));
            }
            for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
                if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
                    return Some(naive.and_utc().trunc_subsecs(0));
                }
            }
            s.parse::<i64>()
                .ok()
                .and_then(|secs| DateTime::from_timestamp(secs, 0))
        }
        Value::Number(n) => n.as_i64().and_then(|secs| DateTime::from_timestamp(secs, 0)),
        _ => None,
    }
}

/// Flattens export text: either a plain string or an array of strings and
/// entity objects carrying a `text` field. Parts are concatenated as-is.
pub fn flatten_text(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some(String::new()),
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => {
            let mut out = String::new();
            for p in parts {
                match p {
                    Value::String(s) => out.push_str(s),
                    Value::Object(o) => match o.get("text") {
                        Some(Value::String(s)) => out.push_str(s),
                        _ => return None,
                    },
                    _ => return None,
                }
            }
            Some(out)
        }
        _ => None,
    }
}

fn opt_string(v: Option<&Value>) -> std::result::Result<Option<String>, String> {
    match v {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(Value::Number(n)) => Ok(Some(n.to_string())),
        Some(other) => Err(format!("expected string, found {other}")),
    }
}

fn opt_int(v: Option<&Value>) -> std::result::Result<Option<i64>, String> {
    match v {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => n
            .as_i64()
            .map(Some)
            .ok_or_else(|| format!("expected integer, found {n}")),
        Some(Value::String(s)) => s
            .parse()
            .map(Some)
            .map_err(|_| format!("expected integer, found {s:?}")),
        Some(other) => Err(format!("expected integer, found {other}")),
    }
}

/// Converts one JSON record into a message. Field aliases let the same
/// routine read export records, stream events and canonical dump lines.
fn record_to_message(
    rec: &Value,
    channel_id: Option<&str>,
    source: Source,
) -> std::result::Result<Message, String> {
    let obj = rec.as_object().ok_or("record is not an object")?;
    let field = |names: &[&str]| names.iter().find_map(|n| obj.get(*n));

    let message_id = opt_int(field(&["id", "message_id"]))?.ok_or("missing `id`")?;
    let timestamp = field(&["date", "timestamp"])
        .ok_or("missing `date`")
        .and_then(|v| parse_timestamp(v).ok_or("unparseable `date`"))?;
    let channel_id = match opt_string(obj.get("channel_id"))? {
        Some(c) => c,
        None => channel_id.ok_or("missing `channel_id`")?.to_string(),
    };
    let text = match field(&["text"]) {
        None => String::new(),
        Some(v) => flatten_text(v).ok_or("`text` is neither a string nor a rich-text array")?,
    };
    Ok(Message {
        channel_id,
        message_id,
        account_id: opt_string(field(&["from_id", "account_id"]))?,
        timestamp,
        text,
        reply_to: opt_int(field(&["reply_to_message_id", "reply_to"]))?,
        first_name: opt_string(obj.get("first_name"))?,
        last_name: opt_string(obj.get("last_name"))?,
        username: opt_string(obj.get("username"))?,
        deleted: obj.get("deleted").and_then(Value::as_bool).unwrap_or(false),
        source,
    })
}

/// Parses a historical export document. The channel id is taken from the
/// document's top-level `id` (or `channel_id`), falling back to `fallback_channel`.
pub fn parse_export_str(doc: &str, fallback_channel: &str) -> Result<ParseOutcome> {
    let root: Value =
        serde_json::from_str(doc).map_err(|e| Error::parse(None, format!("invalid JSON: {e}")))?;
    let records = root
        .get("messages")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::parse(None, "top-level `messages` array missing"))?;
    let channel = opt_string(root.get("channel_id").or_else(|| root.get("id")))
        .map_err(|e| Error::parse(None, format!("channel id: {e}")))?
        .unwrap_or_else(|| fallback_channel.to_string());

    let mut out = ParseOutcome::default();
    for (i, rec) in records.iter().enumerate() {
        match record_to_message(rec, Some(&channel), Source::Historical) {
            Ok(m) => out.messages.push(m),
            Err(reason) => {
                log::warn!("export record {i}: {reason}");
                out.malformed.push(Malformed { record: i, reason });
            }
        }
    }
    out.check_monotone();
    Ok(out)
}

pub fn parse_export(path: &Path) -> Result<ParseOutcome> {
    let doc = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_export_str(&doc, &stem)
}

/// Parses one line of the real-time stream (or a canonical dump line).
pub fn parse_stream_line(line: &str, source: Source) -> std::result::Result<Message, String> {
    let v: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let mut m = record_to_message(&v, None, source)?;
    if let Some(s) = v.get("source").and_then(|s| serde_json::from_value(s.clone()).ok()) {
        m.source = s;
    }
    Ok(m)
}

/// Parses JSONL bytes. Blank lines are skipped; lines that are not valid
/// UTF-8 or not valid records are reported by 1-based line number.
pub fn parse_stream_bytes(bytes: &[u8], source: Source) -> ParseOutcome {
    let mut out = ParseOutcome::default();
    for (i, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line_no = i + 1;
        let line = match std::str::from_utf8(raw) {
            Ok(l) => l.trim(),
            Err(e) => {
                out.malformed.push(Malformed {
                    record: line_no,
                    reason: format!("invalid UTF-8: {e}"),
                });
                continue;
            }
        };
        if line.is_empty() {
            continue;
        }
        match parse_stream_line(line, source) {
            Ok(m) => out.messages.push(m),
            Err(reason) => out.malformed.push(Malformed {
                record: line_no,
                reason,
            }),
        }
    }
    for bad in &out.malformed {
        log::warn!("stream line {}: {}", bad.record, bad.reason);
    }
    out.check_monotone();
    out
}

pub fn parse_stream(path: &Path) -> Result<ParseOutcome> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_stream_bytes(&bytes, Source::Realtime))
}

/// Which feeds have seen a key.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Presence {
    pub historical: bool,
    pub realtime: bool,
}

impl Presence {
    fn add(&mut self, s: Source) {
        match s {
            Source::Historical => self.historical = true,
            Source::Realtime => self.realtime = true,
        }
    }
}

/// How a message's `reply_to` resolves inside the corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReplyLink<'a> {
    NotAReply,
    Resolved(&'a Message),
    /// Target missing or later than the reply.
    Dangling(i64),
}

/// Deduplicated, indexed message collection.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    messages: BTreeMap<MessageKey, Message>,
    presence: HashMap<MessageKey, Presence>,
    by_channel: BTreeMap<String, Vec<MessageKey>>,
    replies: HashMap<MessageKey, Vec<MessageKey>>,
    conflicts: usize,
}

fn rank(m: &Message) -> impl Ord + '_ {
    (
        m.source == Source::Realtime,
        m.text.as_str(),
        m.account_id.as_deref(),
        m.timestamp,
        m.reply_to,
        (m.first_name.as_deref(), m.last_name.as_deref(), m.username.as_deref()),
    )
}

fn same_content(a: &Message, b: &Message) -> bool {
    a.text == b.text
        && a.account_id == b.account_id
        && a.timestamp == b.timestamp
        && a.reply_to == b.reply_to
}

/// Deduplicates by `(channel_id, message_id)`. When copies disagree the
/// realtime copy wins (it holds the pre-deletion text); the outcome does
/// not depend on batch order.
pub fn merge<I>(batches: I) -> Corpus
where
    I: IntoIterator<Item = Vec<Message>>,
{
    let mut groups: HashMap<MessageKey, Vec<Message>> = HashMap::new();
    for batch in batches {
        for m in batch {
            groups.entry(m.key()).or_default().push(m);
        }
    }

    let mut messages = BTreeMap::new();
    let mut presence = HashMap::with_capacity(groups.len());
    let mut conflicts = 0;
    for (key, mut copies) in groups {
        let mut p = Presence::default();
        for c in &copies {
            p.add(c.source);
        }
        copies.sort_by(|a, b| rank(b).cmp(&rank(a)));
        let mut winner = copies[0].clone();
        if copies.iter().any(|c| !same_content(c, &winner)) {
            conflicts += 1;
            log::warn!("conflicting copies of {key}; keeping the {:?} one", winner.source);
        }
        for c in &copies[1..] {
            winner.first_name = winner.first_name.or_else(|| c.first_name.clone());
            winner.last_name = winner.last_name.or_else(|| c.last_name.clone());
            winner.username = winner.username.or_else(|| c.username.clone());
            winner.deleted |= c.deleted;
        }
        presence.insert(key.clone(), p);
        messages.insert(key, winner);
    }

    let mut corpus = Corpus {
        messages,
        presence,
        conflicts,
        ..Corpus::default()
    };
    corpus.build_indexes();
    corpus
}

impl Corpus {
    fn build_indexes(&mut self) {
        let mut by_channel: BTreeMap<String, Vec<MessageKey>> = BTreeMap::new();
        let mut replies: HashMap<MessageKey, Vec<MessageKey>> = HashMap::new();
        for (key, m) in &self.messages {
            by_channel
                .entry(key.channel_id.clone())
                .or_default()
                .push(key.clone());
            if let Some(target) = m.reply_key() {
                replies.entry(target).or_default().push(key.clone());
            }
        }
        for keys in by_channel.values_mut() {
            keys.sort_by_key(|k| (self.messages[k].timestamp, k.message_id));
        }
        self.by_channel = by_channel;
        self.replies = replies;
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn get(&self, key: &MessageKey) -> Option<&Message> {
        self.messages.get(key)
    }

    /// All messages in key order.
    pub fn messages(&self) -> impl Iterator<Item = &Message> {
        self.messages.values()
    }

    pub fn channels(&self) -> impl Iterator<Item = &str> {
        self.by_channel.keys().map(String::as_str)
    }

    /// Keys of one channel in chronological order.
    pub fn channel(&self, channel_id: &str) -> &[MessageKey] {
        self.by_channel
            .get(channel_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Keys of messages whose `reply_to` points at `key`.
    pub fn replies_to(&self, key: &MessageKey) -> &[MessageKey] {
        self.replies.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn presence(&self, key: &MessageKey) -> Presence {
        self.presence.get(key).copied().unwrap_or_default()
    }

    /// Number of keys whose copies disagreed during merge.
    pub fn conflicts(&self) -> usize {
        self.conflicts
    }

    pub fn reply_link(&self, m: &Message) -> ReplyLink<'_> {
        match m.reply_key() {
            None => ReplyLink::NotAReply,
            Some(k) => match self.messages.get(&k) {
                Some(t) if t.timestamp <= m.timestamp => ReplyLink::Resolved(t),
                _ => ReplyLink::Dangling(k.message_id),
            },
        }
    }

    /// The resolved trigger of a reply, if any.
    pub fn trigger_of(&self, m: &Message) -> Option<&Message> {
        match self.reply_link(m) {
            ReplyLink::Resolved(t) => Some(t),
            _ => None,
        }
    }

    /// Messages sent by `account_id`, in key order.
    pub fn messages_by<'a>(&'a self, account_id: &'a str) -> impl Iterator<Item = &'a Message> {
        self.messages
            .values()
            .filter(move |m| m.account_id.as_deref() == Some(account_id))
    }
}

/// Per-channel outcome of [`diff_deleted`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelDeletions {
    pub window_start: DateTime<Utc>,
    pub window_end: DateTime<Utc>,
    pub realtime_in_window: usize,
    pub deleted: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DeletionReport {
    pub channels: BTreeMap<String, ChannelDeletions>,
    pub total_deleted: usize,
}

/// Marks messages deleted: a message is deleted iff the realtime feed saw
/// it inside its channel's overlap window and the historical feed did not.
/// The overlap window of a channel is
/// `[max(first historical, first realtime), min(last historical, last realtime)]`.
pub fn diff_deleted(corpus: &mut Corpus) -> Result<DeletionReport> {
    let mut windows: BTreeMap<String, (DateTime<Utc>, DateTime<Utc>)> = BTreeMap::new();
    for (chan, keys) in &corpus.by_channel {
        let span = |want: fn(&Presence) -> bool| {
            let mut it = keys
                .iter()
                .filter(|k| want(&corpus.presence[*k]))
                .map(|k| corpus.messages[k].timestamp);
            let first = it.next()?;
            let last = it.last().unwrap_or(first);
            Some((first, last))
        };
        if let (Some((h0, h1)), Some((r0, r1))) = (span(|p| p.historical), span(|p| p.realtime)) {
            let (start, end) = (h0.max(r0), h1.min(r1));
            if start <= end {
                windows.insert(chan.clone(), (start, end));
            }
        }
    }
    if windows.is_empty() {
        return Err(Error::EmptyOverlap);
    }

    let mut report = DeletionReport::default();
    for (key, m) in corpus.messages.iter_mut() {
        let p = corpus.presence[key];
        let window = windows.get(&key.channel_id);
        let in_window = window.is_some_and(|(s, e)| m.timestamp >= *s && m.timestamp <= *e);
        m.deleted = p.realtime && !p.historical && in_window;
        if let Some((s, e)) = window {
            let entry = report
                .channels
                .entry(key.channel_id.clone())
                .or_insert(ChannelDeletions {
                    window_start: *s,
                    window_end: *e,
                    realtime_in_window: 0,
                    deleted: 0,
                });
            if p.realtime && in_window {
                entry.realtime_in_window += 1;
            }
            if m.deleted {
                entry.deleted += 1;
                report.total_deleted += 1;
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Account {
    pub account_id: String,
    pub first_name: Option<String>,
    pub last_name: Option<String>,
    pub username: Option<String>,
    pub message_ids: Vec<MessageKey>,
    pub channels_active: BTreeSet<String>,
    pub first_seen: DateTime<Utc>,
    pub last_seen: DateTime<Utc>,
}

/// Aggregates messages per account, sorted by account id. Names are the
/// most recent non-empty values observed.
pub fn build_accounts(corpus: &Corpus) -> Vec<Account> {
    let mut grouped: BTreeMap<&str, Vec<&Message>> = BTreeMap::new();
    for m in corpus.messages() {
        if let Some(a) = m.account_id.as_deref() {
            grouped.entry(a).or_default().push(m);
        }
    }
    grouped
        .into_iter()
        .map(|(id, mut msgs)| {
            msgs.sort_by_key(|m| (m.timestamp, m.key()));
            let latest = |f: fn(&Message) -> Option<&String>| {
                msgs.iter().rev().find_map(|m| f(m)).cloned()
            };
            Account {
                account_id: id.to_string(),
                first_name: latest(|m| m.first_name.as_ref()),
                last_name: latest(|m| m.last_name.as_ref()),
                username: latest(|m| m.username.as_ref()),
                message_ids: msgs.iter().map(|m| m.key()).collect(),
                channels_active: msgs.iter().map(|m| m.channel_id.clone()).collect(),
                first_seen: msgs[0].timestamp,
                last_seen: msgs[msgs.len() - 1].timestamp,
            }
        })
        .collect()
}

/// Writes the canonical JSONL dump, one message per line in key order.
pub fn write_dump(path: &Path, corpus: &Corpus) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for m in corpus.messages() {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Hex SHA-256 of the canonical dump.
pub fn corpus_hash(corpus: &Corpus) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for m in corpus.messages() {
        h.update(serde_json::to_vec(m).expect("messages serialize"));
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads a canonical dump. Any bad line is an error here since dumps are
/// produced by this crate.
pub fn read_dump(path: &Path) -> Result<Vec<Message>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(i + 1, e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn ts(secs: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(1_692_144_000 + secs, 0).unwrap()
    }

    fn msg(chan: &str, id: i64, t: i64, source: Source) -> Message {
        Message {
            channel_id: chan.into(),
            message_id: id,
            account_id: Some(format!("acc{}", id % 3)),
            timestamp: ts(t),
            text: format!("text {id}"),
            reply_to: None,
            first_name: None,
            last_name: None,
            username: None,
            deleted: false,
            source,
        }
    }

    #[test]
    fn export_with_rich_text_and_missing_id() {
        let doc = r#"{"name":"chan","id":42,"messages":[
            {"id":1,"date":"2023-08-16T10:00:00","from_id":"user1","text":"plain"},
            {"date":"2023-08-16T10:01:00","from_id":"user2","text":"no id"},
            {"id":3,"date":"2023-08-16T13:02:00+03:00","from_id":"user2",
             "text":["see ",{"type":"link","text":"http://x.ru"}," now"],"reply_to_message_id":1}
        ]}"#;
        let out = parse_export_str(doc, "fallback").unwrap();
        assert_eq!(out.messages.len(), 2);
        assert_eq!(out.malformed.len(), 1);
        assert_eq!(out.malformed[0].record, 1);
        let m = &out.messages[1];
        assert_eq!(m.channel_id, "42");
        assert_eq!(m.text, "see http://x.ru now");
        assert_eq!(m.reply_to, Some(1));
        assert_eq!(m.timestamp.to_rfc3339(), "2023-08-16T10:02:00+00:00");
        assert_eq!(m.source, Source::Historical);
    }

    #[test]
    fn export_without_messages_array_is_an_error() {
        let err = parse_export_str(r#"{"name":"x"}"#, "c").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn stream_reports_bad_utf8_by_line() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(
            br#"{"channel_id":"c","id":1,"date":"2023-08-16T10:00:00Z","from_id":"a","text":"hi"}"#,
        );
        bytes.push(b'\n');
        bytes.extend_from_slice(b"{\"channel_id\":\"c\",\"id\":2,\"text\":\"\xff\xfe\"}\n");
        bytes.extend_from_slice(
            br#"{"channel_id":"c","id":3,"date":"2023-08-16T10:05:00Z","from_id":"b","text":"re","reply_to_message_id":1}"#,
        );
        let out = parse_stream_bytes(&bytes, Source::Realtime);
        assert_eq!(out.messages.len(), 2);
        assert_eq!(out.malformed.len(), 1);
        assert_eq!(out.malformed[0].record, 2);
        assert_eq!(out.messages[1].reply_to, Some(1));
    }

    #[test]
    fn merge_prefers_realtime_text_and_counts_conflict() {
        let h = msg("c", 1, 0, Source::Historical);
        let mut r = msg("c", 1, 0, Source::Realtime);
        r.text = "original text".into();
        let a = merge(vec![vec![h.clone()], vec![r.clone()]]);
        let b = merge(vec![vec![r], vec![h]]);
        assert_eq!(a.len(), 1);
        assert_eq!(a.conflicts(), 1);
        let k = MessageKey::new("c", 1);
        assert_eq!(a.get(&k).unwrap().text, "original text");
        assert_eq!(a.get(&k), b.get(&k));
        assert_eq!(a.presence(&k), Presence { historical: true, realtime: true });
    }

    #[test]
    fn merge_is_idempotent() {
        let batch: Vec<_> = (0..5).map(|i| msg("c", i, i * 10, Source::Historical)).collect();
        let once = merge(vec![batch.clone()]);
        let twice = merge(vec![batch.clone(), batch]);
        assert_eq!(once.len(), 5);
        assert_eq!(twice.len(), 5);
        assert_eq!(twice.conflicts(), 0);
    }

    #[test]
    fn reply_index_and_dangling_links() {
        let a = msg("c", 1, 0, Source::Realtime);
        let mut b = msg("c", 2, 10, Source::Realtime);
        b.reply_to = Some(1);
        let mut c = msg("c", 3, 20, Source::Realtime);
        c.reply_to = Some(99);
        let corpus = merge(vec![vec![a, b.clone(), c.clone()]]);
        assert_eq!(corpus.replies_to(&MessageKey::new("c", 1)), &[MessageKey::new("c", 2)]);
        assert!(matches!(corpus.reply_link(&b), ReplyLink::Resolved(t) if t.message_id == 1));
        assert_eq!(corpus.reply_link(&c), ReplyLink::Dangling(99));
    }

    #[test]
    fn diff_marks_missing_realtime_message() {
        let rt: Vec<_> = [(1, 0), (2, 10), (3, 20)]
            .iter()
            .map(|&(i, t)| msg("c", i, t, Source::Realtime))
            .collect();
        let hist: Vec<_> = [(1, 0), (3, 20)]
            .iter()
            .map(|&(i, t)| msg("c", i, t, Source::Historical))
            .collect();
        let mut corpus = merge(vec![rt, hist]);
        let report = diff_deleted(&mut corpus).unwrap();
        assert_eq!(report.total_deleted, 1);
        assert!(corpus.get(&MessageKey::new("c", 2)).unwrap().deleted);
        assert!(!corpus.get(&MessageKey::new("c", 1)).unwrap().deleted);
        assert_eq!(report.channels["c"].realtime_in_window, 3);
    }

    #[test]
    fn diff_identical_feeds_and_empty_overlap() {
        let rt: Vec<_> = (0..4).map(|i| msg("c", i, i, Source::Realtime)).collect();
        let hist: Vec<_> = (0..4).map(|i| msg("c", i, i, Source::Historical)).collect();
        let mut corpus = merge(vec![rt.clone(), hist]);
        assert_eq!(diff_deleted(&mut corpus).unwrap().total_deleted, 0);

        let mut only_rt = merge(vec![rt]);
        assert!(matches!(diff_deleted(&mut only_rt), Err(Error::EmptyOverlap)));
    }

    #[test]
    fn messages_outside_window_are_not_deleted() {
        // realtime starts before history: message 0 precedes the window
        let rt: Vec<_> = (0..4).map(|i| msg("c", i, i * 10, Source::Realtime)).collect();
        let hist: Vec<_> = (2..4).map(|i| msg("c", i, i * 10, Source::Historical)).collect();
        let mut corpus = merge(vec![rt, hist]);
        let report = diff_deleted(&mut corpus).unwrap();
        assert_eq!(report.total_deleted, 0);
    }

    #[test]
    fn accounts_aggregate() {
        let mut ms = Vec::new();
        for (i, chan) in ["a", "b", "c"].iter().enumerate() {
            let mut m = msg(chan, 1, i as i64 * 100, Source::Realtime);
            m.account_id = Some("x".into());
            m.username = Some(format!("name{i}"));
            ms.push(m);
        }
        let mut single = msg("a", 2, 5, Source::Realtime);
        single.account_id = Some("y".into());
        ms.push(single);
        let accounts = build_accounts(&merge(vec![ms]));
        assert_eq!(accounts.len(), 2);
        let x = &accounts[0];
        assert_eq!(x.channels_active.len(), 3);
        assert_eq!(x.username.as_deref(), Some("name2"));
        assert_eq!(x.last_seen - x.first_seen, chrono::Duration::seconds(200));
        let y = &accounts[1];
        assert_eq!(y.first_seen, y.last_seen);
    }

    #[test]
    fn dump_round_trip_uses_z_suffix() {
        let corpus = merge(vec![(0..3).map(|i| msg("c", i, i, Source::Realtime)).collect()]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dump.jsonl");
        write_dump(&path, &corpus).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().contains("\"timestamp\":\"2023-08-16T00:00:00Z\""));
        let back = read_dump(&path).unwrap();
        assert_eq!(back, corpus.messages().cloned().collect::<Vec<_>>());
    }

    #[test]
    fn key_display_and_parse() {
        let k: MessageKey = "chan:with:colon:17".parse().unwrap();
        assert_eq!(k.channel_id, "chan:with:colon");
        assert_eq!(k.message_id, 17);
        assert_eq!(k.to_string(), "chan:with:colon:17");
    }
}

//! The streaming service: one worker per channel scores events in arrival
//! order; actions run on a per-channel queue under a global in-flight cap.

use std::collections::{BTreeSet, HashMap};
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use lru::LruCache;
use propwatch_core::corpus::{parse_stream_line, Message, Source};
use propwatch_core::labeling::Label;
use serde::Serialize;
use tokio::io::{AsyncBufRead, AsyncBufReadExt};
use tokio::sync::{mpsc, Semaphore};
use tokio::task::JoinHandle;

use crate::config::{Action, BotConfig};
use crate::detector::{Detector, Outcome, Scored};
use crate::telegram::TelegramClient;
use crate::{Error, Result};

/// A parsed event, or the reason a line could not be parsed.
pub type Event = std::result::Result<Message, String>;

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub action: Action,
    pub allowlist: BTreeSet<String>,
    pub lru_capacity: usize,
    pub max_in_flight: usize,
    pub attempts: u32,
    pub backoff: Duration,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self::from_config(&BotConfig::default())
    }
}

impl ServeOptions {
    pub fn from_config(c: &BotConfig) -> Self {
        Self {
            action: c.action,
            allowlist: c.allowlist.clone(),
            lru_capacity: c.lru_capacity,
            max_in_flight: c.max_in_flight,
            attempts: c.attempts,
            backoff: c.backoff(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictRecord {
    /// Arrival index over the whole stream.
    pub seq: u64,
    pub channel_id: String,
    pub message_id: i64,
    pub account_id: Option<String>,
    /// Set when the trigger was found in the channel's recent messages.
    pub trigger_id: Option<i64>,
    pub label: Option<Label>,
    pub score: Option<f64>,
    pub model_id: Option<String>,
    pub fallback: bool,
    pub skipped: Option<String>,
    pub latency_ms: f64,
}

impl VerdictRecord {
    fn new(seq: u64, m: &Message, trigger_id: Option<i64>, o: &Outcome) -> Self {
        let (label, score, model_id, fallback, skipped) = match &o.scored {
            Scored::Verdict { verdict, fallback } => (
                Some(verdict.label),
                Some(verdict.score),
                Some(verdict.model_id.clone()),
                *fallback,
                None,
            ),
            Scored::Skipped { reason } => (None, None, None, false, Some(reason.clone())),
        };
        Self {
            seq,
            channel_id: m.channel_id.clone(),
            message_id: m.message_id,
            account_id: m.account_id.clone(),
            trigger_id,
            label,
            score,
            model_id,
            fallback,
            skipped,
            latency_ms: o.latency_secs * 1e3,
        }
    }

    pub fn is_propaganda(&self) -> bool {
        self.label.is_some_and(Label::is_propaganda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionRecord {
    pub channel_id: String,
    pub message_id: i64,
    pub method: String,
    pub attempts: u32,
    pub ok: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ServeReport {
    pub events: u64,
    pub malformed: u64,
    pub verdicts: Vec<VerdictRecord>,
    pub actions: Vec<ActionRecord>,
}

/// Reads JSONL events until EOF. Blank lines are ignored.
pub async fn read_events<R: AsyncBufRead + Unpin>(reader: R, events: mpsc::Sender<Event>) -> std::io::Result<()> {
    let mut lines = reader.lines();
    while let Some(line) = lines.next_line().await? {
        if line.trim().is_empty() {
            continue;
        }
        if events.send(parse_stream_line(&line, Source::Realtime)).await.is_err() {
            break;
        }
    }
    Ok(())
}

/// [`serve`] over a line-delimited reader.
pub async fn serve_lines<R: AsyncBufRead + Unpin + Send + 'static>(
    detector: Arc<Detector>,
    reader: R,
    api: Option<TelegramClient>,
    options: ServeOptions,
    sink: Option<mpsc::UnboundedSender<VerdictRecord>>,
) -> Result<ServeReport> {
    let (tx, rx) = mpsc::channel(1024);
    let reading = tokio::spawn(read_events(reader, tx));
    let report = serve(detector, rx, api, options, sink).await?;
    reading.await.map_err(|e| Error::Io(std::io::Error::other(e)))??;
    Ok(report)
}

struct Shared {
    detector: Arc<Detector>,
    verdicts: mpsc::UnboundedSender<VerdictRecord>,
    actions: Arc<Mutex<Vec<ActionRecord>>>,
    api: Option<TelegramClient>,
    permits: Arc<Semaphore>,
    options: ServeOptions,
}

/// Scores every event until the stream ends, then flushes pending verdicts
/// and actions. Verdicts of one channel are emitted in arrival order.
pub async fn serve(
    detector: Arc<Detector>,
    mut events: mpsc::Receiver<Event>,
    api: Option<TelegramClient>,
    options: ServeOptions,
    sink: Option<mpsc::UnboundedSender<VerdictRecord>>,
) -> Result<ServeReport> {
    if options.action.acts() && api.is_none() {
        return Err(Error::Config("acting on verdicts needs an API client".into()));
    }
    if options.lru_capacity == 0 || options.max_in_flight == 0 || options.attempts == 0 {
        return Err(Error::Config("lru_capacity, max_in_flight and attempts must be positive".into()));
    }
    let (vtx, mut vrx) = mpsc::unbounded_channel::<VerdictRecord>();
    let collector = tokio::spawn(async move {
        let mut out = Vec::new();
        while let Some(v) = vrx.recv().await {
            if let Some(s) = &sink {
                let _ = s.send(v.clone());
            }
            out.push(v);
        }
        out
    });
    let shared = Arc::new(Shared {
        detector,
        verdicts: vtx,
        actions: Arc::new(Mutex::new(Vec::new())),
        permits: Arc::new(Semaphore::new(options.max_in_flight)),
        api,
        options,
    });

    let mut workers: HashMap<String, (mpsc::UnboundedSender<(u64, Message)>, JoinHandle<()>)> = HashMap::new();
    let (mut seq, mut malformed) = (0u64, 0u64);
    while let Some(event) = events.recv().await {
        let message = match event {
            Ok(m) => m,
            Err(reason) => {
                malformed += 1;
                log::warn!("skipping malformed event: {reason}");
                continue;
            }
        };
        let (tx, _) = workers.entry(message.channel_id.clone()).or_insert_with(|| {
            let (tx, rx) = mpsc::unbounded_channel();
            let handle = tokio::spawn(channel_worker(message.channel_id.clone(), rx, shared.clone()));
            (tx, handle)
        });
        tx.send((seq, message)).expect("channel worker alive while its sender exists");
        seq += 1;
    }

    for (_, (tx, handle)) in workers {
        drop(tx);
        handle.await.map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    let actions = std::mem::take(&mut *shared.actions.lock().expect("action log"));
    drop(shared);
    let verdicts = collector.await.map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(ServeReport {
        events: seq + malformed,
        malformed,
        verdicts,
        actions,
    })
}

async fn channel_worker(channel: String, mut rx: mpsc::UnboundedReceiver<(u64, Message)>, shared: Arc<Shared>) {
    let capacity = NonZeroUsize::new(shared.options.lru_capacity).expect("validated");
    let mut recent: LruCache<i64, Message> = LruCache::new(capacity);
    let acting = shared.options.action.acts() && shared.options.allowlist.contains(&channel);
    let (atx, arx) = mpsc::unbounded_channel::<Message>();
    let action_task = acting.then(|| tokio::spawn(action_worker(arx, shared.clone())));

    while let Some((seq, message)) = rx.recv().await {
        let trigger = message.reply_to.and_then(|id| recent.get(&id).cloned());
        let trigger_id = trigger.as_ref().map(|t| t.message_id);
        let detector = shared.detector.clone();
        let m = message.clone();
        let outcome = tokio::task::spawn_blocking(move || detector.verdict_for(&m, trigger.as_ref()))
            .await
            .expect("scoring does not panic");
        recent.put(message.message_id, message.clone());
        let record = VerdictRecord::new(seq, &message, trigger_id, &outcome);
        let propaganda = record.is_propaganda();
        let _ = shared.verdicts.send(record);
        if propaganda && acting {
            let _ = atx.send(message);
        }
    }
    drop(atx);
    if let Some(t) = action_task {
        let _ = t.await;
    }
}

async fn action_worker(mut rx: mpsc::UnboundedReceiver<Message>, shared: Arc<Shared>) {
    let api = shared.api.as_ref().expect("checked before serving");
    while let Some(m) = rx.recv().await {
        let _permit = shared.permits.acquire().await.expect("semaphore never closes");
        let delete = with_retries(&shared.options, || api.delete_message(&m.channel_id, m.message_id)).await;
        let deleted = delete.1.is_none();
        record(&shared, &m, "deleteMessage", delete);
        if deleted && shared.options.action == Action::DeleteBan {
            if let Some(user) = &m.account_id {
                let ban = with_retries(&shared.options, || api.ban_chat_member(&m.channel_id, user)).await;
                record(&shared, &m, "banChatMember", ban);
            }
        }
    }
}

fn record(shared: &Shared, m: &Message, method: &str, (attempts, error): (u32, Option<String>)) {
    if let Some(e) = &error {
        log::error!("{method} for {} failed after {attempts} attempts: {e}", m.key());
    }
    shared.actions.lock().expect("action log").push(ActionRecord {
        channel_id: m.channel_id.clone(),
        message_id: m.message_id,
        method: method.into(),
        attempts,
        ok: error.is_none(),
        error,
    });
}

/// Runs `call` up to `attempts` times, doubling the pause after each failure.
async fn with_retries<F, Fut>(options: &ServeOptions, mut call: F) -> (u32, Option<String>)
where
    F: FnMut() -> Fut,
    Fut: std::future::Future<Output = Result<()>>,
{
    let mut delay = options.backoff;
    for attempt in 1..=options.attempts {
        match call().await {
            Ok(()) => return (attempt, None),
            Err(e) if attempt == options.attempts => return (attempt, Some(e.to_string())),
            Err(e) => {
                log::warn!("attempt {attempt} failed: {e}");
                tokio::time::sleep(delay).await;
                delay *= 2;
            }
        }
    }
    unreachable!("attempts is positive")
}

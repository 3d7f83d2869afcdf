use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use chrono::{TimeZone, Utc};
use propwatch_core::corpus::{Message, Source};
use propwatch_core::embeddings::hash_embed;
use propwatch_core::models::{InputKind, InputSpec, MlpModel, MlpParams};
use propwatch_modbot::bench::{latency_bench, reply_pairs};
use propwatch_modbot::embed::{EndpointClient, Embedder};
use propwatch_modbot::serve::{serve, serve_lines, ServeOptions};
use propwatch_modbot::stub::StubServer;
use propwatch_modbot::telegram::{poll_updates, TelegramClient};
use propwatch_modbot::{Action, Detector, MissingPolicy};
use serde_json::json;
use tokio::sync::{mpsc, watch};

const DIM: usize = 32;
const TOKEN: &str = "123:test";
const WORDS: [&str; 12] = [
    "west", "nato", "bread", "rain", "front", "prices", "weekend", "kyiv", "coffee", "ukraine", "lies", "match",
];

fn message(channel: &str, id: i64, reply_to: Option<i64>) -> Message {
    let text: Vec<&str> = (0..6).map(|k| WORDS[((id * 7 + k * 5 + id * k) % 12) as usize]).collect();
    Message {
        channel_id: channel.into(),
        message_id: id,
        account_id: Some(format!("{}", 9000 + id % 17)),
        timestamp: Utc.timestamp_opt(1_694_000_000 + id * 30, 0).unwrap(),
        text: text.join(" "),
        reply_to,
        first_name: None,
        last_name: None,
        username: None,
        deleted: false,
        source: Source::Realtime,
    }
}

/// Interleaves `per_channel` messages over the channels; every second
/// message replies to the one before it.
fn stream(channels: &[&str], per_channel: i64) -> Vec<Message> {
    let mut out = Vec::new();
    for i in 1..=per_channel {
        for c in channels {
            out.push(message(c, i, (i % 2 == 0).then_some(i - 1)));
        }
    }
    out
}

fn model() -> MlpModel {
    let spec = InputSpec {
        kind: InputKind::Pair,
        embedding_dim: DIM,
        provenance: "hash".into(),
    };
    let params = MlpParams {
        hidden: vec![8],
        seed: 11,
        ..MlpParams::default()
    };
    MlpModel::initialize(spec, params).unwrap()
}

/// A detector whose threshold sits at the median score of `events`, so
/// roughly half of them come out as propaganda.
fn detector(events: &[Message]) -> Detector {
    let probe = Detector::new(model(), "pair", None, Embedder::Hash { dim: DIM }, 0.5, MissingPolicy::Skip).unwrap();
    let mut scores: Vec<f64> = events
        .iter()
        .map(|m| {
            let trigger = m.reply_to.map(|id| message(&m.channel_id, id, None));
            probe.verdict_for(m, trigger.as_ref()).verdict().unwrap().score
        })
        .collect();
    scores.sort_by(f64::total_cmp);
    let threshold = scores[scores.len() / 2];
    Detector::new(model(), "pair", None, Embedder::Hash { dim: DIM }, threshold, MissingPolicy::Skip).unwrap()
}

fn options(action: Action, allow: &[&str]) -> ServeOptions {
    ServeOptions {
        action,
        allowlist: allow.iter().map(|s| s.to_string()).collect(),
        backoff: Duration::from_millis(5),
        ..ServeOptions::default()
    }
}

async fn feed(events: Vec<Message>) -> mpsc::Receiver<Result<Message, String>> {
    let (tx, rx) = mpsc::channel(events.len() + 1);
    for e in events {
        tx.send(Ok(e)).await.unwrap();
    }
    rx
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn acting_mode_deletes_exactly_the_propaganda_verdicts_in_allowed_channels() {
    let stub = StubServer::start(TOKEN).await.unwrap();
    let events = stream(&["-1001", "-1002", "-1003"], 30);
    let d = Arc::new(detector(&events));
    let api = TelegramClient::new(stub.base_url(), TOKEN).unwrap();
    let report = serve(d, feed(events).await, Some(api), options(Action::Delete, &["-1001", "-1002"]), None)
        .await
        .unwrap();

    assert_eq!(report.verdicts.len(), 90);
    let expected: BTreeSet<(String, i64)> = report
        .verdicts
        .iter()
        .filter(|v| v.is_propaganda() && v.channel_id != "-1003")
        .map(|v| (v.channel_id.clone(), v.message_id))
        .collect();
    assert!(!expected.is_empty());
    let deleted: BTreeSet<(String, i64)> = stub
        .calls_to("deleteMessage")
        .iter()
        .map(|c| (c.chat_id().unwrap(), c.message_id().unwrap()))
        .collect();
    assert_eq!(deleted, expected);
    assert_eq!(stub.calls_to("deleteMessage").len(), expected.len());
    assert!(stub.calls_to("banChatMember").is_empty());
    assert!(report.actions.iter().all(|a| a.ok && a.attempts == 1));
    stub.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn verdicts_keep_arrival_order_within_each_channel() {
    let stub = StubServer::start(TOKEN).await.unwrap();
    stub.set_action_delay(Duration::from_millis(3));
    let channels = ["-1001", "-1002", "-1003", "-1004"];
    let events = stream(&channels, 25);
    let d = Arc::new(detector(&events));
    let api = TelegramClient::new(stub.base_url(), TOKEN).unwrap();
    let report = serve(d, feed(events).await, Some(api), options(Action::Delete, &channels), None)
        .await
        .unwrap();
    for c in channels {
        let ids: Vec<i64> = report.verdicts.iter().filter(|v| v.channel_id == c).map(|v| v.message_id).collect();
        assert_eq!(ids, (1..=25).collect::<Vec<_>>(), "channel {c}");
        let deletes: Vec<i64> = stub
            .calls_to("deleteMessage")
            .iter()
            .filter(|x| x.chat_id().as_deref() == Some(c))
            .map(|x| x.message_id().unwrap())
            .collect();
        assert!(deletes.windows(2).all(|w| w[0] < w[1]), "channel {c}: {deletes:?}");
    }
    // replies to an earlier message in the same channel resolve their trigger
    assert!(report
        .verdicts
        .iter()
        .filter(|v| v.message_id % 2 == 0)
        .all(|v| v.trigger_id == Some(v.message_id - 1)));
    stub.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn failed_actions_are_retried_with_backoff() {
    let stub = StubServer::start(TOKEN).await.unwrap();
    let events = stream(&["-1001"], 20);
    let d = Arc::new(detector(&events));
    let api = TelegramClient::new(stub.base_url(), TOKEN).unwrap();
    stub.fail_next(2);
    let report = serve(d, feed(events).await, Some(api), options(Action::Delete, &["-1001"]), None)
        .await
        .unwrap();
    let first = &report.actions[0];
    assert!(first.ok);
    assert_eq!(first.attempts, 3);
    let calls = stub.calls_to("deleteMessage");
    assert_eq!(calls.iter().filter(|c| !c.ok).count(), 2);
    assert_eq!(calls[0].message_id(), calls[2].message_id());
    stub.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn exhausted_retries_are_reported_and_serving_continues() {
    let stub = StubServer::start(TOKEN).await.unwrap();
    let events = stream(&["-1001"], 20);
    let d = Arc::new(detector(&events));
    let api = TelegramClient::new(stub.base_url(), TOKEN).unwrap();
    stub.fail_next(3);
    let mut opts = options(Action::Delete, &["-1001"]);
    opts.attempts = 3;
    let report = serve(d, feed(events).await, Some(api), opts, None).await.unwrap();
    assert!(!report.actions[0].ok);
    assert!(report.actions[0].error.as_deref().unwrap().contains("injected"));
    assert!(report.actions[1..].iter().all(|a| a.ok));
    assert_eq!(report.verdicts.len(), 20);
    stub.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn delete_ban_also_bans_the_author() {
    let stub = StubServer::start(TOKEN).await.unwrap();
    let events = stream(&["-1001"], 10);
    let d = Arc::new(detector(&events));
    let api = TelegramClient::new(stub.base_url(), TOKEN).unwrap();
    let report = serve(d, feed(events).await, Some(api), options(Action::DeleteBan, &["-1001"]), None)
        .await
        .unwrap();
    let flagged: Vec<_> = report.verdicts.iter().filter(|v| v.is_propaganda()).collect();
    let bans = stub.calls_to("banChatMember");
    assert_eq!(bans.len(), flagged.len());
    for (b, v) in bans.iter().zip(&flagged) {
        assert_eq!(b.body["user_id"], json!(v.account_id.as_deref().unwrap().parse::<i64>().unwrap()));
    }
    stub.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn log_mode_emits_one_verdict_per_event_and_never_calls_the_api() {
    let stub = StubServer::start(TOKEN).await.unwrap();
    let events = stream(&["-1001", "-1002", "-1003", "-1004"], 25);
    let d = Arc::new(detector(&events));
    let api = TelegramClient::new(stub.base_url(), TOKEN).unwrap();
    let (sink, mut sunk) = mpsc::unbounded_channel();
    let report = serve(d, feed(events).await, Some(api), options(Action::Log, &["-1001"]), Some(sink))
        .await
        .unwrap();
    assert_eq!(report.events, 100);
    assert_eq!(report.verdicts.len(), 100);
    let mut streamed = 0;
    while sunk.try_recv().is_ok() {
        streamed += 1;
    }
    assert_eq!(streamed, 100);
    assert!(stub.calls().is_empty());
    stub.shutdown().await;
}

#[tokio::test]
async fn malformed_lines_are_counted_and_skipped() {
    let events = stream(&["-1001"], 6);
    let d = Arc::new(detector(&events));
    let mut input = String::new();
    for (i, m) in events.iter().enumerate() {
        input.push_str(&serde_json::to_string(m).unwrap());
        input.push('\n');
        if i == 2 {
            input.push_str("{not json\n\n{\"channel_id\": 5}\n");
        }
    }
    let report = serve_lines(d, std::io::Cursor::new(input.into_bytes()), None, ServeOptions::default(), None)
        .await
        .unwrap();
    assert_eq!(report.malformed, 2);
    assert_eq!(report.events, 8);
    assert_eq!(report.verdicts.len(), 6);
}

#[tokio::test]
async fn acting_without_a_client_is_rejected() {
    let events = stream(&["-1001"], 2);
    let d = Arc::new(detector(&events));
    let err = serve(d, feed(events).await, None, options(Action::Delete, &["-1001"]), None).await;
    assert!(err.is_err());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn polled_updates_flow_into_verdicts() {
    let stub = StubServer::start(TOKEN).await.unwrap();
    for m in stream(&["-1001"], 5) {
        stub.push_message(json!({
            "message_id": m.message_id,
            "date": m.timestamp.timestamp(),
            "chat": {"id": -1001, "type": "supergroup"},
            "from": {"id": 9001, "first_name": "A"},
            "text": m.text,
        }));
    }
    let api = TelegramClient::new(stub.base_url(), TOKEN).unwrap();
    let (tx, rx) = mpsc::channel(16);
    let (stop_tx, stop_rx) = watch::channel(false);
    let poller = tokio::spawn(poll_updates(api, tx, stop_rx, 1));
    let d = Arc::new(detector(&stream(&["-1001"], 5)));
    let (sink, mut sunk) = mpsc::unbounded_channel();
    let serving = tokio::spawn(serve(d, rx, None, ServeOptions::default(), Some(sink)));
    let mut seen = Vec::new();
    while seen.len() < 5 {
        let v = tokio::time::timeout(Duration::from_secs(10), sunk.recv()).await.unwrap().unwrap();
        seen.push(v.message_id);
    }
    stop_tx.send(true).unwrap();
    poller.await.unwrap();
    let report = serving.await.unwrap().unwrap();
    assert_eq!(seen, vec![1, 2, 3, 4, 5]);
    assert_eq!(report.verdicts.len(), 5);
    stub.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn embed_endpoint_round_trip() {
    let stub = StubServer::start(TOKEN).await.unwrap();
    stub.set_embed_dim(DIM);
    let url = stub.embed_url();
    let vectors = tokio::task::spawn_blocking(move || {
        EndpointClient::new(url, DIM).embed_texts(&["first text".into(), "second".into()])
    })
    .await
    .unwrap()
    .unwrap();
    assert_eq!(vectors, vec![hash_embed("first text", DIM).unwrap(), hash_embed("second", DIM).unwrap()]);

    let url = stub.embed_url();
    let wrong = tokio::task::spawn_blocking(move || EndpointClient::new(url, DIM * 2).embed_texts(&["x".into()]))
        .await
        .unwrap();
    assert!(wrong.is_err());

    // the detector gives identical verdicts through the endpoint and locally
    let url = stub.embed_url();
    let events = stream(&["-1001"], 4);
    let local = detector(&events);
    let remote = Detector::new(
        model(),
        "pair",
        None,
        Embedder::Endpoint(EndpointClient::new(url, DIM)),
        local.threshold(),
        MissingPolicy::Skip,
    )
    .unwrap();
    let (a, b) = tokio::task::spawn_blocking(move || {
        let m = &events[1];
        let t = &events[0];
        (local.verdict_for(m, Some(t)).scored, remote.verdict_for(m, Some(t)).scored)
    })
    .await
    .unwrap();
    assert_eq!(a, b);
    stub.shutdown().await;
}

#[test]
fn latency_bench_summarizes_pairs() {
    let events = stream(&["-1001"], 40);
    let corpus = propwatch_core::corpus::merge([events.clone()]);
    let pairs = reply_pairs(&corpus, 1000);
    assert_eq!(pairs.len(), 20);
    let d = detector(&events);
    let r = latency_bench(&d, &pairs).unwrap();
    assert_eq!(r.pairs, 20);
    assert!(r.min_secs <= r.mean_secs && r.mean_secs <= r.max_secs);
    assert!(r.mean_secs < 0.05);
    let one = latency_bench(&d, &pairs[..1]).unwrap();
    assert!(one.std_secs.is_none());
}

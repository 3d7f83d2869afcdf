//! Topic clustering (DBSCAN), keyword rules, timelines and topic lifetimes.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, MessageKey};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopicProvenance {
    DensityCluster,
    KeywordRule,
    /// Ground truth from the synthetic generator.
    Planted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicEntry {
    /// `None` marks noise.
    pub topic: Option<String>,
    pub provenance: TopicProvenance,
}

#[derive(Serialize, Deserialize)]
struct AssignmentRecord {
    message_id: MessageKey,
    topic: Option<String>,
    provenance: TopicProvenance,
}

/// Message -> topic (or noise), plus optional human-readable topic labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopicAssignment {
    entries: BTreeMap<MessageKey, TopicEntry>,
    pub labels: BTreeMap<String, String>,
}

impl TopicAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: MessageKey, topic: Option<String>, provenance: TopicProvenance) {
        self.entries.insert(key, TopicEntry { topic, provenance });
    }

    pub fn get(&self, key: &MessageKey) -> Option<&TopicEntry> {
        self.entries.get(key)
    }

    pub fn topic_of(&self, key: &MessageKey) -> Option<&str> {
        self.entries.get(key).and_then(|e| e.topic.as_deref())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MessageKey, &TopicEntry)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn assigned_count(&self) -> usize {
        self.entries.values().filter(|e| e.topic.is_some()).count()
    }

    /// Non-noise topic ids in use.
    pub fn topics(&self) -> BTreeSet<String> {
        self.entries.values().filter_map(|e| e.topic.clone()).collect()
    }

    /// Entries for the given keys only.
    pub fn restrict<'a>(&self, keys: impl IntoIterator<Item = &'a MessageKey>) -> TopicAssignment {
        let mut out = TopicAssignment {
            entries: BTreeMap::new(),
            labels: self.labels.clone(),
        };
        for k in keys {
            if let Some(e) = self.entries.get(k) {
                out.entries.insert(k.clone(), e.clone());
            }
        }
        out
    }

    /// Labels every key `c{cluster}` or noise.
    pub fn from_clusters(keys: &[MessageKey], clusters: &[Option<usize>]) -> Self {
        let mut out = TopicAssignment::new();
        for (k, c) in keys.iter().zip(clusters) {
            out.set(k.clone(), c.map(|c| format!("c{c}")), TopicProvenance::DensityCluster);
        }
        out
    }

    /// JSONL `{message_id, topic, provenance}`; `topic` is null for noise.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        for (k, e) in &self.entries {
            let rec = AssignmentRecord {
                message_id: k.clone(),
                topic: e.topic.clone(),
                provenance: e.provenance,
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut out = TopicAssignment::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: AssignmentRecord =
                serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
            out.set(rec.message_id, rec.topic, rec.provenance);
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// DBSCAN

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Euclidean,
    /// `1 - cos(a, b)`; a zero vector is at distance 1 from everything.
    CosineDistance,
}

impl Metric {
    pub fn distance(self, a: &[f32], b: &[f32]) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
                .sum::<f64>()
                .sqrt(),
            Metric::CosineDistance => {
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    let (x, y) = (*x as f64, *y as f64);
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    1.0 - dot / (na.sqrt() * nb.sqrt())
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DbscanParams {
    pub eps: f64,
    /// Neighbourhood size, the point itself included, that makes a core point.
    pub min_pts: usize,
    pub metric: Metric,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self {
            eps: 0.35,
            min_pts: 5,
            metric: Metric::CosineDistance,
        }
    }
}

/// Points within `eps` (inclusive) of each point, itself included, ascending.
pub fn neighborhoods<V: AsRef<[f32]>>(points: &[V], eps: f64, metric: Metric) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut nbrs: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for i in 0..n {
        for j in i + 1..n {
            if metric.distance(points[i].as_ref(), points[j].as_ref()) <= eps {
                nbrs[i].push(j);
                nbrs[j].push(i);
            }
        }
    }
    for l in &mut nbrs {
        l.sort_unstable();
    }
    nbrs
}

/// Cluster id per point, `None` for noise. Points are visited in index
/// order and clusters numbered in discovery order; a border point reachable
/// from several clusters keeps the first (lowest) id.
pub fn dbscan<V: AsRef<[f32]>>(points: &[V], params: &DbscanParams) -> Result<Vec<Option<usize>>> {
    if !(params.eps > 0.0) {
        return Err(Error::InvalidInput("eps must be positive".into()));
    }
    if params.min_pts == 0 {
        return Err(Error::InvalidInput("min_pts must be at least 1".into()));
    }
    if let Some(first) = points.first() {
        let d = first.as_ref().len();
        if let Some((i, p)) = points.iter().enumerate().find(|(_, p)| p.as_ref().len() != d) {
            return Err(Error::InvalidInput(format!(
                "point {i} has dimension {}, expected {d}",
                p.as_ref().len()
            )));
        }
    }

    let nbrs = neighborhoods(points, params.eps, params.metric);
    let is_core: Vec<bool> = nbrs.iter().map(|n| n.len() >= params.min_pts).collect();
    let mut labels: Vec<Option<usize>> = vec![None; points.len()];
    let mut next = 0;
    for start in 0..points.len() {
        if labels[start].is_some() || !is_core[start] {
            continue;
        }
        let id = next;
        next += 1;
        labels[start] = Some(id);
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for &q in &nbrs[p] {
                if labels[q].is_none() {
                    labels[q] = Some(id);
                    if is_core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    Ok(labels)
}

// ---------------------------------------------------------------------------
// Keyword rules

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordRule {
    pub keywords: Vec<String>,
    pub topic: String,
}

pub fn read_rules(path: &Path) -> Result<Vec<KeywordRule>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(None, format!("rules file: {e}")))
}

/// Assigns noise messages whose text contains any keyword of a rule
/// (case-insensitive); the first matching rule wins. Clustered messages
/// are left alone.
pub fn keyword_augment(
    assignment: &TopicAssignment,
    corpus: &Corpus,
    rules: &[KeywordRule],
) -> TopicAssignment {
    let lowered: Vec<(Vec<String>, &str)> = rules
        .iter()
        .map(|r| {
            (
                r.keywords.iter().map(|k| k.to_lowercase()).filter(|k| !k.is_empty()).collect(),
                r.topic.as_str(),
            )
        })
        .collect();
    let mut out = assignment.clone();
    for (key, entry) in out.entries.iter_mut() {
        if entry.topic.is_some() {
            continue;
        }
        let Some(m) = corpus.get(key) else { continue };
        let text = m.text.to_lowercase();
        if let Some((_, topic)) = lowered
            .iter()
            .find(|(kws, _)| kws.iter().any(|k| text.contains(k.as_str())))
        {
            entry.topic = Some(topic.to_string());
            entry.provenance = TopicProvenance::KeywordRule;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Timelines

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timeline {
    /// Start of the first bin (UTC midnight of the first corpus message).
    pub start: DateTime<Utc>,
    pub bin_seconds: i64,
    pub bins: usize,
    pub counts: BTreeMap<String, Vec<u32>>,
}

impl Timeline {
    pub fn bin_start(&self, bin: usize) -> DateTime<Utc> {
        self.start + Duration::seconds(self.bin_seconds * bin as i64)
    }

    /// CSV `date,topic,count`, one row per topic and bin.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let io = |e| Error::io(path, e);
        writeln!(w, "date,topic,count").map_err(io)?;
        for (topic, counts) in &self.counts {
            for (b, c) in counts.iter().enumerate() {
                let start = self.bin_start(b);
                let date = if self.bin_seconds % 86_400 == 0 {
                    start.format("%Y-%m-%d").to_string()
                } else {
                    start.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
                };
                writeln!(w, "{date},{topic},{c}").map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

/// Per-topic message counts over bins spanning the whole corpus. Topics
/// known only through `assignment.labels` get all-zero rows.
pub fn topic_timeline(corpus: &Corpus, assignment: &TopicAssignment, bin: Duration) -> Result<Timeline> {
    let bin_seconds = bin.num_seconds();
    if bin_seconds <= 0 {
        return Err(Error::InvalidInput("timeline bin must be at least one second".into()));
    }
    let (first, last) = corpus
        .messages()
        .fold(None, |acc: Option<(DateTime<Utc>, DateTime<Utc>)>, m| match acc {
            None => Some((m.timestamp, m.timestamp)),
            Some((a, b)) => Some((a.min(m.timestamp), b.max(m.timestamp))),
        })
        .ok_or_else(|| Error::InvalidInput("timeline of an empty corpus".into()))?;
    let start = first
        .date_naive()
        .and_hms_opt(0, 0, 0)
        .expect("midnight exists")
        .and_utc();
    let bin_of = |t: DateTime<Utc>| ((t - start).num_seconds() / bin_seconds) as usize;
    let bins = bin_of(last) + 1;

    let mut counts: BTreeMap<String, Vec<u32>> = assignment
        .labels
        .keys()
        .chain(assignment.topics().iter())
        .map(|t| (t.clone(), vec![0; bins]))
        .collect();
    for (key, entry) in assignment.iter() {
        let (Some(topic), Some(m)) = (&entry.topic, corpus.get(key)) else {
            continue;
        };
        counts.get_mut(topic).expect("topic row exists")[bin_of(m.timestamp)] += 1;
    }
    Ok(Timeline {
        start,
        bin_seconds,
        bins,
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Longevity {
    pub first_bin: usize,
    pub last_bin: usize,
    /// Days from the first to the last active bin; 0 for a single-day topic.
    pub span_days: i64,
    /// Bins with at least one message.
    pub active_bins: usize,
}

/// `None` for topics without any message.
pub fn topic_longevity(timeline: &Timeline) -> BTreeMap<String, Option<Longevity>> {
    timeline
        .counts
        .iter()
        .map(|(topic, counts)| {
            let first = counts.iter().position(|&c| c > 0);
            let last = counts.iter().rposition(|&c| c > 0);
            let l = first.zip(last).map(|(f, l)| Longevity {
                first_bin: f,
                last_bin: l,
                span_days: (l - f) as i64 * timeline.bin_seconds / 86_400,
                active_bins: counts.iter().filter(|&&c| c > 0).count(),
            });
            (topic.clone(), l)
        })
        .collect()
}

/// Topics present in `test` but never in `train`.
pub fn unseen_topics(train: &TopicAssignment, test: &TopicAssignment) -> BTreeSet<String> {
    let seen = train.topics();
    test.topics().into_iter().filter(|t| !seen.contains(t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{merge, Message, Source};
    use chrono::TimeZone;

    fn msg(id: i64, text: &str, day: i64) -> Message {
        Message {
            channel_id: "c".into(),
            message_id: id,
            account_id: Some("a".into()),
            timestamp: Utc.timestamp_opt(1_692_144_000 + day * 86_400 + id, 0).unwrap(),
            text: text.into(),
            reply_to: None,
            first_name: None,
            last_name: None,
            username: None,
            deleted: false,
            source: Source::Realtime,
        }
    }

    fn key(id: i64) -> MessageKey {
        MessageKey::new("c", id)
    }

    #[test]
    fn single_point_is_noise() {
        let params = DbscanParams {
            eps: 1.0,
            min_pts: 2,
            metric: Metric::Euclidean,
        };
        assert_eq!(dbscan(&[vec![0.0f32, 0.0]], &params).unwrap(), vec![None]);
    }

    #[test]
    fn sparse_points_are_all_noise() {
        let pts: Vec<Vec<f32>> = (0..10).map(|i| vec![i as f32 * 3.0, 0.0]).collect();
        let params = DbscanParams {
            eps: 1.0,
            min_pts: 2,
            metric: Metric::Euclidean,
        };
        assert!(dbscan(&pts, &params).unwrap().iter().all(Option::is_none));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let params = DbscanParams {
            eps: 1.0,
            min_pts: 1,
            metric: Metric::Euclidean,
        };
        assert!(dbscan(&[vec![0.0f32], vec![0.0, 1.0]], &params).is_err());
    }

    #[test]
    fn border_point_keeps_first_cluster() {
        // dense groups around 0 and 2; the point at 1 sees only seven points
        let mut xs = vec![0.0; 3];
        xs.extend([-0.5; 5]);
        xs.extend([2.0; 3]);
        xs.extend([2.5; 5]);
        xs.push(1.0);
        let pts: Vec<Vec<f32>> = xs.iter().map(|&x| vec![x]).collect();
        let params = DbscanParams {
            eps: 1.0,
            min_pts: 8,
            metric: Metric::Euclidean,
        };
        let labels = dbscan(&pts, &params).unwrap();
        assert_eq!(neighborhoods(&pts, 1.0, Metric::Euclidean)[16].len(), 7);
        assert_eq!(labels[16], Some(0));
        assert_eq!(labels[0], Some(0));
        assert_eq!(labels[8], Some(1));
    }

    #[test]
    fn cosine_distance_basics() {
        let d = Metric::CosineDistance;
        assert!((d.distance(&[1.0, 0.0], &[2.0, 0.0])).abs() < 1e-12);
        assert!((d.distance(&[1.0, 0.0], &[0.0, 1.0]) - 1.0).abs() < 1e-12);
        assert_eq!(d.distance(&[0.0, 0.0], &[0.0, 1.0]), 1.0);
    }

    #[test]
    fn keyword_rules_only_fill_noise() {
        let corpus = merge(vec![vec![
            msg(1, "Опять этот Зеленский", 0),
            msg(2, "зеленский и коррупция", 0),
            msg(3, "погода", 0),
        ]]);
        let mut a = TopicAssignment::new();
        a.set(key(1), None, TopicProvenance::DensityCluster);
        a.set(key(2), Some("c0".into()), TopicProvenance::DensityCluster);
        a.set(key(3), None, TopicProvenance::DensityCluster);
        let rules = vec![
            KeywordRule {
                keywords: vec!["ЗЕЛЕНСКИЙ".into()],
                topic: "zelensky".into(),
            },
            KeywordRule {
                keywords: vec!["этот".into()],
                topic: "other".into(),
            },
        ];
        let out = keyword_augment(&a, &corpus, &rules);
        assert_eq!(out.topic_of(&key(1)), Some("zelensky"));
        assert_eq!(out.get(&key(1)).unwrap().provenance, TopicProvenance::KeywordRule);
        assert_eq!(out.topic_of(&key(2)), Some("c0"));
        assert_eq!(out.topic_of(&key(3)), None);
        assert!(out.assigned_count() >= a.assigned_count());
    }

    #[test]
    fn timeline_and_longevity() {
        let corpus = merge(vec![vec![
            msg(1, "a", 0),
            msg(2, "b", 2),
            msg(3, "c", 2),
            msg(4, "d", 5),
        ]]);
        let mut a = TopicAssignment::new();
        a.set(key(2), Some("event".into()), TopicProvenance::Planted);
        a.set(key(3), Some("event".into()), TopicProvenance::Planted);
        a.set(key(1), Some("long".into()), TopicProvenance::Planted);
        a.set(key(4), Some("long".into()), TopicProvenance::Planted);
        a.labels.insert("empty".into(), "Empty topic".into());
        let t = topic_timeline(&corpus, &a, Duration::days(1)).unwrap();
        assert_eq!(t.bins, 6);
        assert_eq!(t.counts["event"], vec![0, 0, 2, 0, 0, 0]);
        assert!(t.counts["empty"].iter().all(|&c| c == 0));
        let l = topic_longevity(&t);
        assert_eq!(l["event"].unwrap().span_days, 0);
        assert_eq!(l["event"].unwrap().active_bins, 1);
        assert_eq!(l["long"].unwrap().span_days, 5);
        assert_eq!(l["empty"], None);
    }

    #[test]
    fn unseen_topic_difference() {
        let mut train = TopicAssignment::new();
        let mut test = TopicAssignment::new();
        train.set(key(1), Some("x".into()), TopicProvenance::Planted);
        test.set(key(2), Some("x".into()), TopicProvenance::Planted);
        test.set(key(3), Some("y".into()), TopicProvenance::Planted);
        test.set(key(4), None, TopicProvenance::Planted);
        assert_eq!(unseen_topics(&train, &test), BTreeSet::from(["y".to_string()]));
        assert!(unseen_topics(&test, &test).is_empty());
    }

    #[test]
    fn assignment_jsonl_round_trip() {
        let mut a = TopicAssignment::new();
        a.set(key(1), Some("x".into()), TopicProvenance::KeywordRule);
        a.set(key(2), None, TopicProvenance::DensityCluster);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        a.write_jsonl(&p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            r#"{"message_id":"c:1","topic":"x","provenance":"keyword-rule"}"#
        );
        assert_eq!(TopicAssignment::read_jsonl(&p).unwrap(), a);
    }
}

//! Temporal train/test protocol for the detectors: splitting, balancing,
//! training, per-topic scoring, moderator baseline and error overlap.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{corpus_hash, Corpus, Message, MessageKey};
use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};
use crate::features::{extract, FeatureSchema, TimeMode};
use crate::labeling::{Label, LabelSet};
use crate::models::{
    build_pair_vector, ensemble_score, ensemble_with, train_gbt, train_mlp, EnsembleRule, GbtModel, GbtParams,
    InputKind, InputSpec, MlpModel, MlpParams, DEFAULT_THRESHOLD,
};
use crate::topics::{unseen_topics, TopicAssignment};

/// One labeled message, the unit of evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example {
    pub key: MessageKey,
    pub account: String,
    pub timestamp: DateTime<Utc>,
    pub label: Label,
    pub topic: Option<String>,
    /// Resolved trigger, when the message replies to one in the corpus.
    pub trigger: Option<MessageKey>,
}

/// Every message written by a labeled account, in key order.
pub fn build_examples(corpus: &Corpus, labels: &LabelSet, assignment: &TopicAssignment) -> Vec<Example> {
    corpus
        .messages()
        .filter_map(|m| {
            let account = m.account_id.as_ref()?;
            let label = labels.label_of(account)?;
            Some(Example {
                key: m.key(),
                account: account.clone(),
                timestamp: m.timestamp,
                label,
                topic: assignment.topic_of(&m.key()).map(str::to_string),
                trigger: corpus.trigger_of(m).map(Message::key),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub cutoff: DateTime<Utc>,
    pub train: Vec<Example>,
    pub test: Vec<Example>,
}

/// Half-open split: `[.., cutoff)` trains, `[cutoff, ..)` tests.
pub fn temporal_split(examples: &[Example], cutoff: DateTime<Utc>) -> Result<Split> {
    let (test, train): (Vec<Example>, Vec<Example>) = examples.iter().cloned().partition(|e| e.timestamp >= cutoff);
    let split = Split { cutoff, train, test };
    check_no_leakage(&split)?;
    Ok(split)
}

/// Fails unless the two sides share no key and every test example is at
/// or after the cutoff (and every training example before it).
pub fn check_no_leakage(split: &Split) -> Result<()> {
    let train_keys: BTreeSet<&MessageKey> = split.train.iter().map(|e| &e.key).collect();
    if let Some(e) = split.test.iter().find(|e| train_keys.contains(&e.key)) {
        return Err(Error::Data(format!("leakage: {} is in both splits", e.key)));
    }
    if let Some(e) = split.test.iter().find(|e| e.timestamp < split.cutoff) {
        return Err(Error::Data(format!("leakage: test message {} precedes the cutoff", e.key)));
    }
    if let Some(e) = split.train.iter().find(|e| e.timestamp >= split.cutoff) {
        return Err(Error::Data(format!("leakage: training message {} is past the cutoff", e.key)));
    }
    Ok(())
}

/// Uniformly downsamples the majority class to the minority's size,
/// preserving the input order of the kept examples.
pub fn balance(examples: &[Example], seed: u64) -> Vec<Example> {
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..examples.len()).partition(|&i| examples[i].label.is_propaganda());
    let n = pos.len().min(neg.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = pos
        .choose_multiple(&mut rng, n)
        .chain(neg.choose_multiple(&mut rng, n))
        .copied()
        .collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| examples[i].clone()).collect()
}

/// What a detector needs besides the example itself.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub corpus: &'a Corpus,
    pub store: Option<&'a EmbeddingStore>,
    pub time_mode: TimeMode,
}

impl<'a> EvalContext<'a> {
    fn message(&self, key: &MessageKey) -> Result<&'a Message> {
        self.corpus
            .get(key)
            .ok_or_else(|| Error::Data(format!("example {key} is not in the corpus")))
    }

    pub fn feature_row(&self, ex: &Example) -> Result<Vec<f64>> {
        let m = self.message(&ex.key)?;
        let t = ex.trigger.as_ref().map(|k| self.message(k)).transpose()?;
        Ok(extract(m, t, self.time_mode)?.to_row().to_vec())
    }

    fn store(&self) -> Result<&'a EmbeddingStore> {
        self.store
            .ok_or_else(|| Error::MissingEmbedding("no embedding store was provided".into()))
    }

    fn embedding(&self, key: &MessageKey) -> Result<&'a [f32]> {
        self.store()?
            .get_key(key)
            .ok_or_else(|| Error::MissingEmbedding(key.to_string()))
    }

    /// Embedding input for a model of `kind`; a missing trigger is a zero block.
    pub fn embedding_input(&self, ex: &Example, kind: InputKind) -> Result<Vec<f32>> {
        let dim = self.store()?.dim();
        let trigger = ex.trigger.as_ref().map(|k| self.embedding(k)).transpose()?;
        match kind {
            InputKind::Reply => Ok(self.embedding(&ex.key)?.to_vec()),
            InputKind::Trigger => Ok(trigger.map_or_else(|| vec![0.0; dim], <[f32]>::to_vec)),
            InputKind::Pair => build_pair_vector(trigger, self.embedding(&ex.key)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Detector {
    Features(GbtModel),
    Mlp(MlpModel),
    Ensemble {
        trigger: MlpModel,
        reply: MlpModel,
        rule: EnsembleRule,
    },
}

impl Detector {
    pub fn name(&self) -> &'static str {
        match self {
            Detector::Features(_) => "features",
            Detector::Mlp(m) => match m.input.kind {
                InputKind::Reply => "reply",
                InputKind::Trigger => "trigger",
                InputKind::Pair => "pair",
            },
            Detector::Ensemble { .. } => "ensemble",
        }
    }

    pub fn score(&self, ex: &Example, ctx: &EvalContext) -> Result<f64> {
        match self {
            Detector::Features(m) => m.predict(&ctx.feature_row(ex)?),
            Detector::Mlp(m) => m.predict(&ctx.embedding_input(ex, m.input.kind)?),
            Detector::Ensemble { trigger, reply, .. } => Ok(ensemble_score(
                trigger.predict(&ctx.embedding_input(ex, InputKind::Trigger)?)?,
                reply.predict(&ctx.embedding_input(ex, InputKind::Reply)?)?,
            )),
        }
    }

    pub fn classify(&self, ex: &Example, ctx: &EvalContext, threshold: f64) -> Result<Label> {
        match self {
            Detector::Ensemble { trigger, reply, rule } => Ok(ensemble_with(
                *rule,
                trigger.predict(&ctx.embedding_input(ex, InputKind::Trigger)?)?,
                reply.predict(&ctx.embedding_input(ex, InputKind::Reply)?)?,
                threshold,
            )),
            _ => Ok(Label::from_bool(self.score(ex, ctx)? >= threshold)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub seed: u64,
    pub threshold: f64,
    pub ensemble_rule: EnsembleRule,
    /// Topics with fewer test messages get no accuracy in the per-topic table.
    pub min_topic_messages: usize,
    pub time_mode: TimeMode,
    pub balance_test: bool,
    pub gbt: GbtParams,
    pub mlp: MlpParams,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threshold: DEFAULT_THRESHOLD,
            ensemble_rule: EnsembleRule::ScoreSum,
            min_topic_messages: 50,
            time_mode: TimeMode::SecondsOfDay,
            balance_test: true,
            gbt: GbtParams::default(),
            mlp: MlpParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

impl Confusion {
    pub fn add(&mut self, truth: Label, predicted: Label) {
        match (truth.is_propaganda(), predicted.is_propaganda()) {
            (true, true) => self.true_positive += 1,
            (false, true) => self.false_positive += 1,
            (false, false) => self.true_negative += 1,
            (true, false) => self.false_negative += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }

    pub fn correct(&self) -> usize {
        self.true_positive + self.true_negative
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.correct(), self.total())
    }

    pub fn false_positive_rate(&self) -> Option<f64> {
        ratio(self.false_positive, self.false_positive + self.true_negative)
    }
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicScore {
    pub messages: usize,
    pub correct: usize,
    /// Absent below the configured message threshold.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelReport {
    pub model: String,
    pub overall_accuracy: f64,
    pub false_positive_rate: Option<f64>,
    pub new_topic_accuracy: Option<f64>,
    /// Overall minus new-topic accuracy.
    pub degradation: Option<f64>,
    pub confusion: Confusion,
    pub per_topic: BTreeMap<String, TopicScore>,
    #[serde(skip)]
    pub errors: BTreeSet<MessageKey>,
}

/// Scores `detector` on `test`. Unassigned messages count toward overall
/// accuracy only.
pub fn evaluate(
    detector: &Detector,
    test: &[Example],
    ctx: &EvalContext,
    assignment: &TopicAssignment,
    unseen: &BTreeSet<String>,
    config: &EvalConfig,
) -> Result<ModelReport> {
    let mut confusion = Confusion::default();
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut errors = BTreeSet::new();
    for ex in test {
        let predicted = detector.classify(ex, ctx, config.threshold)?;
        confusion.add(ex.label, predicted);
        let ok = predicted == ex.label;
        if !ok {
            errors.insert(ex.key.clone());
        }
        if let Some(t) = assignment.topic_of(&ex.key) {
            let c = counts.entry(t.to_string()).or_default();
            c.0 += 1;
            c.1 += ok as usize;
        }
    }
    let per_topic = counts
        .into_iter()
        .map(|(t, (n, k))| {
            let accuracy = (n >= config.min_topic_messages.max(1)).then(|| k as f64 / n as f64);
            (t, TopicScore { messages: n, correct: k, accuracy })
        })
        .collect();
    let mut report = ModelReport {
        model: detector.name().to_string(),
        overall_accuracy: confusion.accuracy().unwrap_or(0.0),
        false_positive_rate: confusion.false_positive_rate(),
        new_topic_accuracy: None,
        degradation: None,
        confusion,
        per_topic,
        errors,
    };
    report.new_topic_accuracy = new_topic_accuracy(&report, unseen);
    report.degradation = report.new_topic_accuracy.map(|a| report.overall_accuracy - a);
    Ok(report)
}

/// Accuracy over all messages of the unseen topics; `None` when there are none.
pub fn new_topic_accuracy(report: &ModelReport, unseen: &BTreeSet<String>) -> Option<f64> {
    let (n, k) = unseen
        .iter()
        .filter_map(|t| report.per_topic.get(t))
        .fold((0, 0), |(n, k), s| (n + s.messages, k + s.correct));
    ratio(k, n)
}

/// Accuracy over the test messages of one topic, regardless of the table threshold.
pub fn topic_accuracy(report: &ModelReport, topic: &str) -> Option<f64> {
    report.per_topic.get(topic).and_then(|s| ratio(s.correct, s.messages))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Moderation {
    pub propaganda_messages: usize,
    pub propaganda_deleted: usize,
    pub user_messages: usize,
    pub user_deleted: usize,
    /// Deleted share of labeled propaganda messages.
    pub propaganda_ratio: Option<f64>,
    pub user_ratio: Option<f64>,
    /// Deleted share of all labeled messages.
    pub total_ratio: Option<f64>,
    /// Propaganda share of deleted labeled messages. Deletions of unlabeled
    /// messages are invisible here, so this overstates true precision.
    pub precision: Option<f64>,
}

impl Moderation {
    fn add(&mut self, propaganda: bool, deleted: bool) {
        if propaganda {
            self.propaganda_messages += 1;
            self.propaganda_deleted += deleted as usize;
        } else {
            self.user_messages += 1;
            self.user_deleted += deleted as usize;
        }
    }

    fn finish(&mut self) {
        self.propaganda_ratio = ratio(self.propaganda_deleted, self.propaganda_messages);
        self.user_ratio = ratio(self.user_deleted, self.user_messages);
        let deleted = self.propaganda_deleted + self.user_deleted;
        self.total_ratio = ratio(deleted, self.propaganda_messages + self.user_messages);
        self.precision = ratio(self.propaganda_deleted, deleted);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ModeratorBaseline {
    pub channels: BTreeMap<String, Moderation>,
    pub overall: Moderation,
}

/// How much of each cohort the channel moderators removed, from the
/// `deleted` flags set by deletion recovery.
pub fn moderator_baseline(corpus: &Corpus, labels: &LabelSet) -> ModeratorBaseline {
    let mut out = ModeratorBaseline::default();
    for m in corpus.messages() {
        let Some(label) = m.account_id.as_deref().and_then(|a| labels.label_of(a)) else {
            continue;
        };
        out.channels
            .entry(m.channel_id.clone())
            .or_default()
            .add(label.is_propaganda(), m.deleted);
        out.overall.add(label.is_propaganda(), m.deleted);
    }
    out.channels.values_mut().for_each(Moderation::finish);
    out.overall.finish();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Intersection {
    pub models: Vec<String>,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ErrorOverlap {
    pub sizes: BTreeMap<String, usize>,
    /// Every combination of two or more models, smallest first.
    pub intersections: Vec<Intersection>,
    pub union: usize,
}

pub const MAX_OVERLAP_SETS: usize = 8;

pub fn error_overlap<K: Ord + Clone>(sets: &[(String, BTreeSet<K>)]) -> Result<ErrorOverlap> {
    if sets.len() > MAX_OVERLAP_SETS {
        return Err(Error::InvalidInput(format!(
            "error overlap supports at most {MAX_OVERLAP_SETS} models, got {}",
            sets.len()
        )));
    }
    let n = sets.len();
    let mut masks: Vec<u32> = (1u32..(1 << n)).filter(|m| m.count_ones() >= 2).collect();
    masks.sort_by_key(|m| (m.count_ones(), std::cmp::Reverse(m.reverse_bits())));
    let intersections = masks
        .into_iter()
        .map(|mask| {
            let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            let (first, rest) = members.split_first().expect("two or more members");
            let count = sets[*first]
                .1
                .iter()
                .filter(|k| rest.iter().all(|&j| sets[j].1.contains(k)))
                .count();
            Intersection {
                models: members.iter().map(|&i| sets[i].0.clone()).collect(),
                count,
            }
        })
        .collect();
    let union: BTreeSet<&K> = sets.iter().flat_map(|(_, s)| s.iter()).collect();
    Ok(ErrorOverlap {
        sizes: sets.iter().map(|(m, s)| (m.clone(), s.len())).collect(),
        intersections,
        union: union.len(),
    })
}

/// The trained detectors of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Detectors {
    pub features: GbtModel,
    pub reply: Option<MlpModel>,
    pub trigger: Option<MlpModel>,
    pub pair: Option<MlpModel>,
    pub rule: EnsembleRule,
}

impl Detectors {
    /// In report order; embedding models only when they were trained.
    pub fn all(&self) -> Vec<Detector> {
        let mut out = vec![Detector::Features(self.features.clone())];
        if let (Some(t), Some(r)) = (&self.trigger, &self.reply) {
            out.push(Detector::Mlp(r.clone()));
            out.push(Detector::Mlp(t.clone()));
            out.push(Detector::Ensemble {
                trigger: t.clone(),
                reply: r.clone(),
                rule: self.rule,
            });
        }
        if let Some(p) = &self.pair {
            out.push(Detector::Mlp(p.clone()));
        }
        out
    }
}

fn labels_of(examples: &[Example]) -> Vec<bool> {
    examples.iter().map(|e| e.label.is_propaganda()).collect()
}

pub fn train_features(train: &[Example], ctx: &EvalContext, params: &GbtParams) -> Result<GbtModel> {
    let x: Vec<Vec<f64>> = train.iter().map(|e| ctx.feature_row(e)).collect::<Result<_>>()?;
    Ok(train_gbt(&x, &labels_of(train), params)?.with_schema(FeatureSchema::new(ctx.time_mode)))
}

pub fn train_embedding_model(
    train: &[Example],
    ctx: &EvalContext,
    kind: InputKind,
    params: &MlpParams,
) -> Result<MlpModel> {
    let store = ctx.store()?;
    let x: Vec<Vec<f32>> = train
        .iter()
        .map(|e| ctx.embedding_input(e, kind))
        .collect::<Result<_>>()?;
    let input = InputSpec {
        kind,
        embedding_dim: store.dim(),
        provenance: store.provenance().to_string(),
    };
    train_mlp(input, &x, &labels_of(train), params)
}

/// Trains the feature model and, given a store, the three embedding models.
/// Training runs concurrently; results do not depend on scheduling.
pub fn train_detectors(train: &[Example], ctx: &EvalContext, config: &EvalConfig) -> Result<Detectors> {
    let mlp = |kind| train_embedding_model(train, ctx, kind, &config.mlp);
    std::thread::scope(|s| {
        let handles = ctx.store.map(|_| {
            [InputKind::Reply, InputKind::Trigger, InputKind::Pair].map(|k| s.spawn(move || mlp(k)))
        });
        let features = train_features(train, ctx, &config.gbt);
        let [reply, trigger, pair] = match handles {
            Some(h) => h.map(|h| h.join().expect("training thread panicked").map(Some)),
            None => [Ok(None), Ok(None), Ok(None)],
        };
        Ok(Detectors {
            features: features?,
            reply: reply?,
            trigger: trigger?,
            pair: pair?,
            rule: config.ensemble_rule,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub seed: u64,
    pub corpus_hash: String,
    pub cutoff: DateTime<Utc>,
    pub config: EvalConfig,
    pub embedding_provenance: Option<String>,
    pub train_examples: usize,
    pub test_examples: usize,
    pub unseen_topics: BTreeSet<String>,
    pub models: Vec<ModelReport>,
    pub moderation: ModeratorBaseline,
    pub error_overlap: ErrorOverlap,
}

impl EvalReport {
    pub fn model(&self, name: &str) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.model == name)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn to_markdown(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.1}%", 100.0 * v));
        let mut s = String::new();
        let _ = writeln!(s, "# Evaluation\n");
        let _ = writeln!(
            s,
            "Seed {}, cutoff {}, {} training and {} test messages, corpus `{}`.\n",
            self.seed,
            self.cutoff.to_rfc3339(),
            self.train_examples,
            self.test_examples,
            &self.corpus_hash[..12.min(self.corpus_hash.len())]
        );
        let _ = writeln!(s, "## Detection\n");
        let _ = writeln!(s, "| Model | Overall accuracy | New topics accuracy | FPR |");
        let _ = writeln!(s, "|---|---|---|---|");
        for m in &self.models {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} |",
                m.model,
                pct(Some(m.overall_accuracy)),
                pct(m.new_topic_accuracy),
                pct(m.false_positive_rate)
            );
        }
        let topics: BTreeSet<&String> = self.models.iter().flat_map(|m| m.per_topic.keys()).collect();
        if !topics.is_empty() {
            let _ = writeln!(s, "\n## Accuracy by topic\n");
            let _ = write!(s, "| Topic | Messages |");
            for m in &self.models {
                let _ = write!(s, " {} |", m.model);
            }
            let _ = writeln!(s);
            let _ = writeln!(s, "|---|---|{}", "---|".repeat(self.models.len()));
            for t in topics {
                let n = self.models.iter().filter_map(|m| m.per_topic.get(t)).map(|x| x.messages).max();
                let unseen = if self.unseen_topics.contains(t) { " (new)" } else { "" };
                let _ = write!(s, "| {t}{unseen} | {} |", n.unwrap_or(0));
                for m in &self.models {
                    let _ = write!(s, " {} |", pct(m.per_topic.get(t).and_then(|x| x.accuracy)));
                }
                let _ = writeln!(s);
            }
        }
        let _ = writeln!(s, "\n## Moderation\n");
        let _ = writeln!(s, "| Channel | Propaganda deleted | Users deleted | Total deleted | Precision |");
        let _ = writeln!(s, "|---|---|---|---|---|");
        for (c, m) in self.moderation.channels.iter().chain([(&"overall".to_string(), &self.moderation.overall)]) {
            let _ = writeln!(
                s,
                "| {c} | {} | {} | {} | {} |",
                pct(m.propaganda_ratio),
                pct(m.user_ratio),
                pct(m.total_ratio),
                pct(m.precision)
            );
        }
        if !self.error_overlap.intersections.is_empty() {
            let _ = writeln!(s, "\n## Shared errors\n");
            let _ = writeln!(s, "| Models | Errors in common |");
            let _ = writeln!(s, "|---|---|");
            for i in &self.error_overlap.intersections {
                let _ = writeln!(s, "| {} | {} |", i.models.join(" & "), i.count);
            }
        }
        s
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub detectors: Detectors,
    pub split: Split,
}

/// Split at `cutoff`, balance both sides, train every detector, score
/// them on the test side.
pub fn run_evaluation(
    corpus: &Corpus,
    labels: &LabelSet,
    assignment: &TopicAssignment,
    store: Option<&EmbeddingStore>,
    cutoff: DateTime<Utc>,
    config: &EvalConfig,
) -> Result<Evaluation> {
    let ctx = EvalContext {
        corpus,
        store,
        time_mode: config.time_mode,
    };
    let examples = build_examples(corpus, labels, assignment);
    let split = temporal_split(&examples, cutoff)?;
    let train_topics = assignment.restrict(split.train.iter().map(|e| &e.key));
    let test_topics = assignment.restrict(split.test.iter().map(|e| &e.key));
    let unseen = unseen_topics(&train_topics, &test_topics);

    let train = balance(&split.train, config.seed);
    let test = if config.balance_test {
        balance(&split.test, config.seed.wrapping_add(1))
    } else {
        split.test.clone()
    };
    check_no_leakage(&Split {
        cutoff,
        train: train.clone(),
        test: test.clone(),
    })?;
    if test.is_empty() {
        return Err(Error::Data("the test split has no messages from both classes".into()));
    }

    let detectors = train_detectors(&train, &ctx, config)?;
    let models = detectors
        .all()
        .iter()
        .map(|d| evaluate(d, &test, &ctx, assignment, &unseen, config))
        .collect::<Result<Vec<_>>>()?;
    let error_sets: Vec<(String, BTreeSet<MessageKey>)> =
        models.iter().map(|m| (m.model.clone(), m.errors.clone())).collect();
    let report = EvalReport {
        seed: config.seed,
        corpus_hash: corpus_hash(corpus),
        cutoff,
        config: config.clone(),
        embedding_provenance: store.map(|s| s.provenance().to_string()),
        train_examples: train.len(),
        test_examples: test.len(),
        unseen_topics: unseen,
        models,
        moderation: moderator_baseline(corpus, labels),
        error_overlap: error_overlap(&error_sets)?,
    };
    Ok(Evaluation { report, detectors, split })
}

/// Scores a trained detector on every labeled message of another network.
/// Nothing is balanced or split, so on a single network this equals
/// [`evaluate`] over all of its examples.
pub fn cross_network_eval(
    detector: &Detector,
    ctx: &EvalContext,
    labels: &LabelSet,
    assignment: &TopicAssignment,
    config: &EvalConfig,
) -> Result<ModelReport> {
    let examples = build_examples(ctx.corpus, labels, assignment);
    if examples.is_empty() {
        return Err(Error::InvalidInput("the external network has no labeled messages".into()));
    }
    evaluate(detector, &examples, ctx, assignment, &BTreeSet::new(), config)
}

//! Account labeling: username heuristics, repetition statistics and the
//! fixed-point label augmentation over reused long texts.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ReplyLink};
use crate::error::{Error, Result};
use crate::text;

/// Texts must be strictly longer than this many characters to count as
/// reused propaganda material.
pub const DEFAULT_MIN_LEN: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Propaganda,
    User,
}

impl Label {
    pub fn is_propaganda(self) -> bool {
        self == Label::Propaganda
    }

    pub fn from_bool(propaganda: bool) -> Self {
        if propaganda {
            Label::Propaganda
        } else {
            Label::User
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Seed,
    Augmented,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub label: Label,
    pub provenance: Provenance,
    /// Augmentation round that added the label; 0 for seeds and external labels.
    pub iteration: u32,
}

#[derive(Serialize, Deserialize)]
struct LabelRecord {
    account_id: String,
    label: Label,
    provenance: Provenance,
    iteration: u32,
}

/// Account id -> label. An account is labeled at most once.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelSet {
    entries: BTreeMap<String, LabelEntry>,
}

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, account_id: impl Into<String>, entry: LabelEntry) -> Result<()> {
        let id = account_id.into();
        if self.entries.contains_key(&id) {
            return Err(Error::InvalidInput(format!("account {id} is already labeled")));
        }
        self.entries.insert(id, entry);
        Ok(())
    }

    /// Convenience for seeds: label with provenance `Seed`, iteration 0.
    pub fn seed(&mut self, account_id: impl Into<String>, label: Label) -> Result<()> {
        self.insert(
            account_id,
            LabelEntry {
                label,
                provenance: Provenance::Seed,
                iteration: 0,
            },
        )
    }

    pub fn get(&self, account_id: &str) -> Option<&LabelEntry> {
        self.entries.get(account_id)
    }

    pub fn label_of(&self, account_id: &str) -> Option<Label> {
        self.entries.get(account_id).map(|e| e.label)
    }

    pub fn is_propaganda(&self, account_id: &str) -> bool {
        self.label_of(account_id) == Some(Label::Propaganda)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &LabelEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn accounts_with(&self, label: Label) -> BTreeSet<String> {
        self.iter()
            .filter(|(_, e)| e.label == label)
            .map(|(a, _)| a.to_string())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        for (id, e) in &self.entries {
            let rec = LabelRecord {
                account_id: id.clone(),
                label: e.label,
                provenance: e.provenance,
                iteration: e.iteration,
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut set = LabelSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: LabelRecord =
                serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
            set.insert(
                rec.account_id,
                LabelEntry {
                    label: rec.label,
                    provenance: rec.provenance,
                    iteration: rec.iteration,
                },
            )
            .map_err(|e| Error::parse(i + 1, e.to_string()))?;
        }
        Ok(set)
    }
}

/// One account id per line; blank lines and `#` comments ignored.
pub fn read_exclusions(path: &Path) -> Result<BTreeSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

// ---------------------------------------------------------------------------
// Username heuristics

static ENGLISH: OnceLock<HashSet<&'static str>> = OnceLock::new();
static RUSSIAN: OnceLock<HashSet<&'static str>> = OnceLock::new();
static NAMES: OnceLock<HashSet<&'static str>> = OnceLock::new();

fn wordlist(cell: &'static OnceLock<HashSet<&'static str>>, raw: &'static str) -> &'static HashSet<&'static str> {
    cell.get_or_init(|| raw.lines().map(str::trim).filter(|l| !l.is_empty()).collect())
}

fn english_words() -> &'static HashSet<&'static str> {
    wordlist(&ENGLISH, include_str!("../data/words_en.txt"))
}

fn russian_words() -> &'static HashSet<&'static str> {
    wordlist(&RUSSIAN, include_str!("../data/words_ru.txt"))
}

fn western_names() -> &'static HashSet<&'static str> {
    wordlist(&NAMES, include_str!("../data/western_names.txt"))
}

/// Whether `word` (lowercase) is in the bundled English or Russian lists.
pub fn is_dictionary_word(word: &str) -> bool {
    english_words().contains(word) || russian_words().contains(word)
}

pub fn is_western_name(word: &str) -> bool {
    western_names().contains(word)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PatternReport {
    pub is_western_name_number: bool,
    pub dictionary_reference: bool,
    pub username_hidden: bool,
}

/// Splits on `_ . -` and lower-to-upper case transitions.
fn name_tokens(s: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut prev_lower = false;
    for c in s.chars() {
        if matches!(c, '_' | '.' | '-') {
            if !cur.is_empty() {
                tokens.push(std::mem::take(&mut cur));
            }
            prev_lower = false;
            continue;
        }
        if c.is_uppercase() && prev_lower && !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
        prev_lower = c.is_lowercase();
        cur.push(c);
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

fn western_name_number(username: &str) -> bool {
    let body = username.trim_end_matches(|c: char| c.is_ascii_digit());
    if body.len() == username.len() {
        return false;
    }
    let body = body.trim_end_matches(['_', '.', '-']);
    let tokens = name_tokens(body);
    (1..=2).contains(&tokens.len())
        && tokens.iter().all(|t| {
            t.chars().all(|c| c.is_alphabetic()) && is_western_name(&t.to_lowercase())
        })
}

/// Deterministic stand-in for an LLM judgment of usernames.
pub fn username_pattern(username: Option<&str>) -> PatternReport {
    let Some(name) = username.map(str::trim).filter(|n| !n.is_empty()) else {
        return PatternReport {
            username_hidden: true,
            ..PatternReport::default()
        };
    };
    let substituted: String = name
        .to_lowercase()
        .chars()
        .map(|c| match c {
            '1' => 'i',
            '0' => 'o',
            c => c,
        })
        .collect();
    let dictionary_reference = substituted
        .split(|c: char| !c.is_alphabetic())
        .filter(|run| run.chars().count() >= 4)
        .any(is_dictionary_word);
    PatternReport {
        is_western_name_number: western_name_number(name),
        dictionary_reference,
        username_hidden: false,
    }
}

// ---------------------------------------------------------------------------
// Repetition statistics

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TextRepetition {
    pub text: String,
    pub length: usize,
    pub occurrences: usize,
    pub accounts: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LengthBucket {
    /// Distinct texts whose length falls in the bucket.
    pub texts: usize,
    pub occurrences: usize,
    pub max_occurrences: usize,
    pub max_accounts: usize,
    /// Distinct texts seen more than once.
    pub repeated_texts: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RepetitionStats {
    pub bucket_width: usize,
    pub texts: Vec<TextRepetition>,
    /// Keyed by the bucket's lower length bound.
    pub buckets: BTreeMap<usize, LengthBucket>,
}

impl RepetitionStats {
    pub fn bucket_for(&self, length: usize) -> Option<&LengthBucket> {
        self.buckets.get(&(length / self.bucket_width * self.bucket_width))
    }
}

/// Groups messages by canonical text. With `cohort` set, only messages of
/// those accounts are counted. Empty texts are skipped.
pub fn repetition_stats(
    corpus: &Corpus,
    cohort: Option<&BTreeSet<String>>,
    bucket_width: usize,
) -> RepetitionStats {
    let bucket_width = bucket_width.max(1);
    let mut groups: BTreeMap<String, (usize, BTreeSet<&str>)> = BTreeMap::new();
    for m in corpus.messages() {
        if let Some(c) = cohort {
            match m.account_id.as_deref() {
                Some(a) if c.contains(a) => {}
                _ => continue,
            }
        }
        let t = text::canonical(&m.text);
        if t.is_empty() {
            continue;
        }
        let g = groups.entry(t).or_default();
        g.0 += 1;
        if let Some(a) = m.account_id.as_deref() {
            g.1.insert(a);
        }
    }

    let mut stats = RepetitionStats {
        bucket_width,
        ..RepetitionStats::default()
    };
    for (t, (occurrences, accounts)) in groups {
        let length = text::char_len(&t);
        let b = stats
            .buckets
            .entry(length / bucket_width * bucket_width)
            .or_default();
        b.texts += 1;
        b.occurrences += occurrences;
        b.max_occurrences = b.max_occurrences.max(occurrences);
        b.max_accounts = b.max_accounts.max(accounts.len());
        if occurrences > 1 {
            b.repeated_texts += 1;
        }
        stats.texts.push(TextRepetition {
            text: t,
            length,
            occurrences,
            accounts: accounts.len(),
        });
    }
    stats
}

// ---------------------------------------------------------------------------
// Augmentation

#[derive(Debug, Clone, PartialEq)]
pub struct Augmentation {
    pub labels: LabelSet,
    /// Accounts added per round; rounds that add nothing are not recorded.
    pub additions: Vec<usize>,
    /// Newly labeled accounts, in the order they were added, for manual
    /// false-positive review.
    pub review: Vec<String>,
    /// Excluded accounts that matched the pool and were kept out.
    pub blocked: Vec<String>,
}

impl Augmentation {
    pub fn iterations(&self) -> usize {
        self.additions.len()
    }
}

/// Propagates propaganda labels through exact reuse of long texts until no
/// new account matches. Seeds are never relabeled; `exclusions` are never
/// added.
pub fn augment_labels(
    corpus: &Corpus,
    seeds: &LabelSet,
    min_len: usize,
    exclusions: &BTreeSet<String>,
) -> Result<Augmentation> {
    if seeds.is_empty() {
        return Err(Error::InvalidInput("augmentation needs at least one seed".into()));
    }
    if min_len == 0 {
        return Err(Error::InvalidInput("min_len must be at least 1".into()));
    }

    let mut texts_of: HashMap<&str, HashSet<String>> = HashMap::new();
    let mut writers_of: HashMap<String, BTreeSet<&str>> = HashMap::new();
    for m in corpus.messages() {
        let (Some(a), Some(t)) = (m.account_id.as_deref(), text::long_canonical(&m.text, min_len))
        else {
            continue;
        };
        writers_of.entry(t.clone()).or_default().insert(a);
        texts_of.entry(a).or_default().insert(t);
    }

    let mut labels = seeds.clone();
    let mut pool: HashSet<&str> = HashSet::new();
    let mut frontier: Vec<&str> = Vec::new();
    for (a, e) in seeds.iter() {
        if e.label == Label::Propaganda {
            absorb(&texts_of, a, &mut pool, &mut frontier);
        }
    }

    let mut additions = Vec::new();
    let mut review = Vec::new();
    let mut blocked = BTreeSet::new();
    let mut round = 0u32;
    while !frontier.is_empty() {
        let mut matched: BTreeSet<&str> = BTreeSet::new();
        for t in frontier.drain(..) {
            for &a in &writers_of[t] {
                if labels.get(a).is_some() {
                    continue;
                }
                if exclusions.contains(a) {
                    blocked.insert(a.to_string());
                } else {
                    matched.insert(a);
                }
            }
        }
        if matched.is_empty() {
            break;
        }
        round += 1;
        additions.push(matched.len());
        for a in matched {
            labels.insert(
                a,
                LabelEntry {
                    label: Label::Propaganda,
                    provenance: Provenance::Augmented,
                    iteration: round,
                },
            )?;
            review.push(a.to_string());
            absorb(&texts_of, a, &mut pool, &mut frontier);
        }
    }

    Ok(Augmentation {
        labels,
        additions,
        review,
        blocked: blocked.into_iter().collect(),
    })
}

fn absorb<'t>(
    texts_of: &'t HashMap<&str, HashSet<String>>,
    account: &str,
    pool: &mut HashSet<&'t str>,
    frontier: &mut Vec<&'t str>,
) {
    if let Some(texts) = texts_of.get(account) {
        for t in texts {
            if pool.insert(t.as_str()) {
                frontier.push(t.as_str());
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Reactivity

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reactivity {
    /// Replies over determinable messages; `None` when every message is indeterminate.
    pub fraction: Option<f64>,
    pub replies: usize,
    pub determinable: usize,
    /// Messages whose `reply_to` target is missing or later than the message.
    pub indeterminate: usize,
}

pub fn reactivity_flag(corpus: &Corpus, account_id: &str) -> Result<Reactivity> {
    let mut replies = 0;
    let mut determinable = 0;
    let mut indeterminate = 0;
    for m in corpus.messages_by(account_id) {
        match corpus.reply_link(m) {
            ReplyLink::NotAReply => determinable += 1,
            ReplyLink::Resolved(_) => {
                determinable += 1;
                replies += 1;
            }
            ReplyLink::Dangling(_) => indeterminate += 1,
        }
    }
    if determinable + indeterminate == 0 {
        return Err(Error::InvalidInput(format!("account {account_id} has no messages")));
    }
    Ok(Reactivity {
        fraction: (determinable > 0).then(|| replies as f64 / determinable as f64),
        replies,
        determinable,
        indeterminate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{merge, Message, Source};
    use chrono::{TimeZone, Utc};

    fn m(id: i64, account: &str, text: &str, reply_to: Option<i64>) -> Message {
        Message {
            channel_id: "c".into(),
            message_id: id,
            account_id: Some(account.into()),
            timestamp: Utc.timestamp_opt(1_700_000_000 + id * 60, 0).unwrap(),
            text: text.into(),
            reply_to,
            first_name: None,
            last_name: None,
            username: None,
            deleted: false,
            source: Source::Realtime,
        }
    }

    const T1: &str = "this is a forty character long message!!";
    const T2: &str = "another forty character long message...";

    #[test]
    fn username_examples() {
        let r = username_pattern(Some("John_Smith31"));
        assert!(r.is_western_name_number);
        assert!(!r.username_hidden);
        assert!(username_pattern(Some("JohnSmith7")).is_western_name_number);
        assert!(!username_pattern(Some("John_Smith")).is_western_name_number);
        assert!(!username_pattern(Some("fymopexiruf")).dictionary_reference);
        assert!(!username_pattern(Some("fymopexiruf")).is_western_name_number);
        let hidden = username_pattern(None);
        assert!(hidden.username_hidden);
        assert!(!hidden.dictionary_reference && !hidden.is_western_name_number);
    }

    #[test]
    fn dictionary_reference_with_substitutions() {
        assert!(username_pattern(Some("winter_garden")).dictionary_reference);
        // 1 -> i, 0 -> o
        assert!(username_pattern(Some("m00nl1ght")).dictionary_reference);
        assert!(username_pattern(Some("кошка_2000")).dictionary_reference);
        // runs shorter than four letters never count
        assert!(!username_pattern(Some("cat_dog")).dictionary_reference);
    }

    #[test]
    fn repeated_long_text_shows_in_bucket() {
        let text = "x".repeat(50);
        let msgs: Vec<_> = (0..5).map(|i| m(i, &format!("a{i}"), &text, None)).collect();
        let stats = repetition_stats(&merge(vec![msgs]), None, 10);
        assert!(stats.bucket_for(50).unwrap().max_occurrences >= 5);
        assert_eq!(stats.texts[0].accounts, 5);
    }

    #[test]
    fn unique_corpus_has_no_repeats() {
        let msgs: Vec<_> = (0..6).map(|i| m(i, "a", &format!("message {i}"), None)).collect();
        let stats = repetition_stats(&merge(vec![msgs]), None, 10);
        assert!(stats.texts.iter().all(|t| t.occurrences == 1));
    }

    #[test]
    fn augmentation_is_transitive() {
        let corpus = merge(vec![vec![
            m(1, "seed", T1, None),
            m(2, "b", T1, None),
            m(3, "b", T2, None),
            m(4, "c", T2, None),
            m(5, "d", "unrelated but still a fairly long message", None),
        ]]);
        let mut seeds = LabelSet::new();
        seeds.seed("seed", Label::Propaganda).unwrap();
        let out = augment_labels(&corpus, &seeds, 30, &BTreeSet::new()).unwrap();
        assert_eq!(out.additions, vec![1, 1]);
        assert_eq!(out.labels.get("b").unwrap().iteration, 1);
        assert_eq!(out.labels.get("c").unwrap().iteration, 2);
        assert!(out.labels.get("d").is_none());
        assert_eq!(out.review, vec!["b", "c"]);
    }

    #[test]
    fn augmentation_respects_exclusions_and_seeds() {
        let corpus = merge(vec![vec![
            m(1, "seed", T1, None),
            m(2, "b", T1, None),
            m(3, "b", T2, None),
            m(4, "c", T2, None),
            m(5, "u", T1, None),
        ]]);
        let mut seeds = LabelSet::new();
        seeds.seed("seed", Label::Propaganda).unwrap();
        seeds.seed("u", Label::User).unwrap();
        let excl: BTreeSet<String> = ["b".to_string()].into();
        let out = augment_labels(&corpus, &seeds, 30, &excl).unwrap();
        assert_eq!(out.labels.label_of("u"), Some(Label::User));
        assert!(out.labels.get("b").is_none());
        assert!(out.labels.get("c").is_none());
        assert_eq!(out.blocked, vec!["b"]);
    }

    #[test]
    fn augmentation_fixed_point_and_errors() {
        let corpus = merge(vec![vec![m(1, "seed", T1, None), m(2, "b", T2, None)]]);
        let mut seeds = LabelSet::new();
        seeds.seed("seed", Label::Propaganda).unwrap();
        let out = augment_labels(&corpus, &seeds, 30, &BTreeSet::new()).unwrap();
        assert_eq!(out.labels, seeds);
        assert_eq!(out.iterations(), 0);
        assert!(augment_labels(&corpus, &LabelSet::new(), 30, &BTreeSet::new()).is_err());
    }

    #[test]
    fn short_texts_do_not_propagate() {
        let short = "exactly thirty characters long"; // 30 scalars
        assert_eq!(short.chars().count(), 30);
        let corpus = merge(vec![vec![m(1, "seed", short, None), m(2, "b", short, None)]]);
        let mut seeds = LabelSet::new();
        seeds.seed("seed", Label::Propaganda).unwrap();
        let out = augment_labels(&corpus, &seeds, 30, &BTreeSet::new()).unwrap();
        assert!(out.labels.get("b").is_none());
    }

    #[test]
    fn reactivity_cases() {
        let corpus = merge(vec![vec![
            m(1, "u", "root", None),
            m(2, "r", "reply", Some(1)),
            m(3, "r", "reply again", Some(1)),
            m(4, "x", "mixed root", None),
            m(5, "x", "mixed reply", Some(1)),
            m(6, "x", "dangling", Some(999)),
        ]]);
        assert_eq!(reactivity_flag(&corpus, "r").unwrap().fraction, Some(1.0));
        assert_eq!(reactivity_flag(&corpus, "u").unwrap().fraction, Some(0.0));
        let x = reactivity_flag(&corpus, "x").unwrap();
        assert_eq!((x.replies, x.determinable, x.indeterminate), (1, 2, 1));
        assert_eq!(x.fraction, Some(0.5));
        assert!(reactivity_flag(&corpus, "nobody").is_err());
    }

    #[test]
    fn labelset_jsonl_round_trip() {
        let mut set = LabelSet::new();
        set.seed("a", Label::Propaganda).unwrap();
        set.insert(
            "b",
            LabelEntry {
                label: Label::Propaganda,
                provenance: Provenance::Augmented,
                iteration: 2,
            },
        )
        .unwrap();
        assert!(set.seed("a", Label::User).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.jsonl");
        set.write_jsonl(&p).unwrap();
        let first = fs::read_to_string(&p).unwrap();
        assert_eq!(
            first.lines().next().unwrap(),
            r#"{"account_id":"a","label":"propaganda","provenance":"seed","iteration":0}"#
        );
        assert_eq!(LabelSet::read_jsonl(&p).unwrap(), set);
    }
}

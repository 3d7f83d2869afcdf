//! The eight handcrafted message features.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::Timelike;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Message;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const COLUMNS: [&str; 8] = [
    "msg_length",
    "word_count",
    "url_count",
    "emoji_count",
    "exclamation_count",
    "question_count",
    "msg_time_of_day",
    "reply_latency",
];

/// Latency value for messages without a trigger.
pub const NO_TRIGGER: i64 = -1;

/// Code point ranges counted as emoji (inclusive).
pub const EMOJI_RANGES: [(u32, u32); 6] = [
    (0x1F300, 0x1F5FF), // Miscellaneous Symbols and Pictographs
    (0x1F600, 0x1F64F), // Emoticons
    (0x1F680, 0x1F6FF), // Transport and Map Symbols
    (0x1F900, 0x1F9FF), // Supplemental Symbols and Pictographs
    (0x2605, 0x2605),   // ★
    (0x2665, 0x2665),   // ♥
];

/// How `msg_time_of_day` is computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    /// Seconds since UTC midnight.
    #[default]
    SecondsOfDay,
    /// Seconds since the Unix epoch.
    EpochSeconds,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: u32,
    pub columns: Vec<String>,
    pub time_mode: TimeMode,
}

impl FeatureSchema {
    pub fn new(time_mode: TimeMode) -> Self {
        Self {
            version: SCHEMA_VERSION,
            columns: COLUMNS.iter().map(|c| c.to_string()).collect(),
            time_mode,
        }
    }

    /// Hex SHA-256 over version, columns and time mode.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("features:v{}:", self.version));
        h.update(self.columns.join(","));
        h.update(format!(":{:?}", self.time_mode));
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub msg_length: u32,
    pub word_count: u32,
    pub url_count: u32,
    pub emoji_count: u32,
    pub exclamation_count: u32,
    pub question_count: u32,
    pub msg_time_of_day: i64,
    pub reply_latency: i64,
}

impl FeatureVector {
    pub fn to_row(&self) -> [f64; 8] {
        [
            self.msg_length as f64,
            self.word_count as f64,
            self.url_count as f64,
            self.emoji_count as f64,
            self.exclamation_count as f64,
            self.question_count as f64,
            self.msg_time_of_day as f64,
            self.reply_latency as f64,
        ]
    }
}

pub fn is_emoji(c: char) -> bool {
    let cp = c as u32;
    EMOJI_RANGES.iter().any(|&(lo, hi)| (lo..=hi).contains(&cp))
}

/// Maximal runs of letters or digits.
pub fn word_count(text: &str) -> usize {
    let mut count = 0;
    let mut in_word = false;
    for c in text.chars() {
        let w = c.is_alphanumeric();
        if w && !in_word {
            count += 1;
        }
        in_word = w;
    }
    count
}

/// Whitespace-separated tokens that look like a link: an alphabetic scheme
/// followed by `://`, or a `www.` prefix. Each token counts at most once.
pub fn url_count(text: &str) -> usize {
    text.split_whitespace()
        .filter(|tok| {
            let tok = tok.trim_start_matches(|c: char| !c.is_alphanumeric());
            if tok.get(..4).is_some_and(|p| p.eq_ignore_ascii_case("www.")) {
                return true;
            }
            match tok.find("://") {
                Some(i) if i > 0 => tok[..i].chars().all(|c| c.is_ascii_alphabetic()),
                _ => false,
            }
        })
        .count()
}

/// Features of `message`, with latency measured from `trigger` when given.
pub fn extract(message: &Message, trigger: Option<&Message>, time_mode: TimeMode) -> Result<FeatureVector> {
    let text = &message.text;
    let reply_latency = match trigger {
        None => NO_TRIGGER,
        Some(t) => {
            let secs = (message.timestamp - t.timestamp).num_seconds();
            if secs < 0 {
                return Err(Error::Data(format!(
                    "trigger {} is later than reply {}",
                    t.key(),
                    message.key()
                )));
            }
            secs
        }
    };
    let msg_time_of_day = match time_mode {
        TimeMode::SecondsOfDay => message.timestamp.num_seconds_from_midnight() as i64,
        TimeMode::EpochSeconds => message.timestamp.timestamp(),
    };
    let count = |pred: fn(char) -> bool| text.chars().filter(|&c| pred(c)).count() as u32;
    Ok(FeatureVector {
        msg_length: text.chars().count() as u32,
        word_count: word_count(text) as u32,
        url_count: url_count(text) as u32,
        emoji_count: count(is_emoji),
        exclamation_count: count(|c| c == '!'),
        question_count: count(|c| c == '?'),
        msg_time_of_day,
        reply_latency,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub schema: FeatureSchema,
    pub rows: Vec<FeatureVector>,
}

impl FeatureMatrix {
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.to_row().to_vec()).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let io = |e| Error::io(path, e);
        writeln!(w, "{}", COLUMNS.join(",")).map_err(io)?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.msg_length,
                r.word_count,
                r.url_count,
                r.emoji_count,
                r.exclamation_count,
                r.question_count,
                r.msg_time_of_day,
                r.reply_latency
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

pub fn batch_extract(pairs: &[(&Message, Option<&Message>)], time_mode: TimeMode) -> Result<FeatureMatrix> {
    let rows = pairs
        .iter()
        .map(|(m, t)| extract(m, *t, time_mode))
        .collect::<Result<_>>()?;
    Ok(FeatureMatrix {
        schema: FeatureSchema::new(time_mode),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Source;
    use chrono::{TimeZone, Utc};

    fn msg(text: &str, secs: i64) -> Message {
        Message {
            channel_id: "c".into(),
            message_id: secs,
            account_id: Some("a".into()),
            timestamp: Utc.timestamp_opt(1_692_144_000 + secs, 0).unwrap(),
            text: text.into(),
            reply_to: None,
            first_name: None,
            last_name: None,
            username: None,
            deleted: false,
            source: Source::Realtime,
        }
    }

    #[test]
    fn empty_message_without_trigger() {
        // 1_692_144_000 is a UTC midnight
        let f = extract(&msg("", 3_723), None, TimeMode::SecondsOfDay).unwrap();
        assert_eq!(
            f,
            FeatureVector {
                msg_length: 0,
                word_count: 0,
                url_count: 0,
                emoji_count: 0,
                exclamation_count: 0,
                question_count: 0,
                msg_time_of_day: 3_723,
                reply_latency: -1,
            }
        );
    }

    #[test]
    fn mixed_fixture() {
        let f = extract(&msg("Да!? Нет!! 😀 see http://x.ru", 0), None, TimeMode::SecondsOfDay).unwrap();
        assert_eq!(f.exclamation_count, 3);
        assert_eq!(f.question_count, 1);
        assert_eq!(f.emoji_count, 1);
        assert_eq!(f.url_count, 1);
        assert_eq!(f.msg_length, 28);
        assert_eq!(f.word_count, 6);
    }

    #[test]
    fn latency_and_bad_trigger() {
        let trigger = msg("q", 100);
        let reply = msg("a", 190);
        assert_eq!(extract(&reply, Some(&trigger), TimeMode::SecondsOfDay).unwrap().reply_latency, 90);
        assert!(matches!(
            extract(&trigger, Some(&reply), TimeMode::SecondsOfDay),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn epoch_mode() {
        let f = extract(&msg("x", 5), None, TimeMode::EpochSeconds).unwrap();
        assert_eq!(f.msg_time_of_day, 1_692_144_005);
        assert_ne!(
            FeatureSchema::new(TimeMode::EpochSeconds).hash(),
            FeatureSchema::new(TimeMode::SecondsOfDay).hash()
        );
    }

    #[test]
    fn batch_matches_single_and_handles_empty() {
        let a = msg("one!", 10);
        let b = msg("two??", 20);
        let m = batch_extract(&[(&b, Some(&a)), (&a, None)], TimeMode::SecondsOfDay).unwrap();
        assert_eq!(m.rows[0], extract(&b, Some(&a), TimeMode::SecondsOfDay).unwrap());
        assert_eq!(m.rows[1], extract(&a, None, TimeMode::SecondsOfDay).unwrap());
        let empty = batch_extract(&[], TimeMode::SecondsOfDay).unwrap();
        assert!(empty.rows.is_empty());
        assert_eq!(empty.schema.columns.len(), 8);
    }

    #[test]
    fn url_patterns() {
        assert_eq!(url_count("go to www.example.com now"), 1);
        assert_eq!(url_count("(https://a.b/c) and ftp://x"), 2);
        assert_eq!(url_count("a://b ://nothing"), 1);
        assert_eq!(url_count("https://www.x.ru"), 1);
        assert_eq!(url_count("abcé wwwé привет"), 0);
    }
}

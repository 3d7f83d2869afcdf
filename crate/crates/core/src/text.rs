//! Text normalization shared by the repetition-based analyses.

use unicode_normalization::UnicodeNormalization;

/// NFC-normalize and trim surrounding whitespace. Two messages are "the same
/// text" iff their canonical forms are equal.
pub fn canonical(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    nfc.trim().to_string()
}

/// Length in Unicode scalar values.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Canonical form, only if it is strictly longer than `min_len` scalars.
pub fn long_canonical(text: &str, min_len: usize) -> Option<String> {
    let c = canonical(text);
    (char_len(&c) > min_len).then_some(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_trims_and_composes() {
        // "й" as и + combining breve
        let decomposed = "  \u{0438}\u{0306}ог ";
        assert_eq!(canonical(decomposed), "йог");
        assert_eq!(char_len(&canonical(decomposed)), 3);
    }

    #[test]
    fn long_canonical_is_strict() {
        let s = "a".repeat(30);
        assert!(long_canonical(&s, 30).is_none());
        assert!(long_canonical(&format!("{s}b"), 30).is_some());
        // Cyrillic counts characters, not bytes
        assert!(long_canonical(&"я".repeat(20), 30).is_none());
    }
}

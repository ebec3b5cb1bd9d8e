//! The tokenizer shared by term detection, retrieval, sentiment and metrics.
//!
//! Text is case-folded and split on anything that is not alphanumeric. CJK
//! ideographs (and kana/hangul) become single-character tokens, so Chinese text
//! is tokenized per character while Latin text is tokenized per word.

use alloc::string::String;
use alloc::vec::Vec;

/// Returns true for codepoints tokenized one character at a time.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // hiragana, katakana
        | 0x3400..=0x4DBF    // CJK extension A
        | 0x4E00..=0x9FFF    // CJK unified ideographs
        | 0xAC00..=0xD7AF    // hangul syllables
        | 0xF900..=0xFAFF    // CJK compatibility ideographs
        | 0x20000..=0x2EBEF) // CJK extensions B-F
}

/// Splits `text` into case-folded tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if is_cjk(c) {
            if !word.is_empty() {
                tokens.push(core::mem::take(&mut word));
            }
            let mut t = String::new();
            t.extend(c.to_lowercase());
            tokens.push(t);
        } else if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
        } else if !word.is_empty() {
            tokens.push(core::mem::take(&mut word));
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

fn is_cjk_token(token: &str) -> bool {
    let mut chars = token.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if is_cjk(c))
}

/// Joins tokens back into a surface string: a single space between tokens,
/// except between two adjacent CJK tokens.
pub fn join_tokens<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut prev_cjk = false;
    for (i, t) in tokens.iter().enumerate() {
        let t = t.as_ref();
        let cjk = is_cjk_token(t);
        if i > 0 && !(prev_cjk && cjk) {
            out.push(' ');
        }
        out.push_str(t);
        prev_cjk = cjk;
    }
    out
}

/// Case-folds and re-joins a surface form, e.g. `"High-Temperature"` becomes
/// `"high temperature"`.
pub fn normalize(text: &str) -> String {
    join_tokens(&tokenize(text))
}

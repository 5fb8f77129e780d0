//! Tokenization shared by the ROUGE scorer and the hashing embedder.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenScheme {
    /// Runs of non-CJK alphanumerics form one token; every CJK character is
    /// its own token; everything else separates. Lowercased.
    #[default]
    Unicode,
    /// Split on whitespace only, case preserved.
    Whitespace,
}

/// CJK ideographs, kana and hangul syllables.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // hiragana, katakana
        | 0x3400..=0x4DBF    // CJK ext A
        | 0x4E00..=0x9FFF    // CJK unified
        | 0xAC00..=0xD7AF    // hangul
        | 0xF900..=0xFAFF    // compatibility ideographs
        | 0x20000..=0x2FA1F) // ext B..
}

pub fn tokenize(text: &str, scheme: TokenScheme) -> Vec<String> {
    match scheme {
        TokenScheme::Whitespace => text.split_whitespace().map(str::to_string).collect(),
        TokenScheme::Unicode => {
            let mut tokens = Vec::new();
            let mut current = String::new();
            for c in text.chars() {
                if is_cjk(c) {
                    if !current.is_empty() {
                        tokens.push(std::mem::take(&mut current));
                    }
                    tokens.push(c.to_string());
                } else if c.is_alphanumeric() {
                    current.extend(c.to_lowercase());
                } else if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
            }
            if !current.is_empty() {
                tokens.push(current);
            }
            tokens
        }
    }
}

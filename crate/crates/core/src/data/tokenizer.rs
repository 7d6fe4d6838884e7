//! Reversible tokenization.
//!
//! Text is split into word runs (alphanumerics plus combining marks),
//! single punctuation characters, and whitespace runs. A single space that
//! follows a word or punctuation token is folded into that token's
//! `space_after` flag; every other whitespace run becomes a whitespace token.
//! Concatenating the tokens therefore reproduces the input exactly.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub space_after: bool,
}

impl Token {
    pub fn new(text: impl Into<String>, space_after: bool) -> Self {
        Token {
            text: text.into(),
            space_after,
        }
    }

    /// Whitespace tokens carry layout only and are not fed to the model.
    pub fn is_whitespace(&self) -> bool {
        !self.text.is_empty() && self.text.chars().all(char::is_whitespace)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Word,
    Space,
    Punct,
}

fn class(c: char) -> Class {
    if c.is_whitespace() {
        Class::Space
    } else if c.is_alphanumeric() || is_mark(c) {
        Class::Word
    } else {
        Class::Punct
    }
}

// Combining marks stay attached to the word they modify.
fn is_mark(c: char) -> bool {
    matches!(c as u32, 0x0300..=0x036F | 0x1AB0..=0x1AFF | 0x1DC0..=0x1DFF | 0x20D0..=0x20FF | 0xFE20..=0xFE2F)
}

pub fn tokenize(s: &str) -> Vec<Token> {
    let mut tokens: Vec<Token> = Vec::new();
    let mut chars = s.char_indices().peekable();
    while let Some((start, c)) = chars.next() {
        let cls = class(c);
        let mut end = start + c.len_utf8();
        if cls != Class::Punct {
            while let Some(&(i, n)) = chars.peek() {
                if class(n) != cls {
                    break;
                }
                end = i + n.len_utf8();
                chars.next();
            }
        }
        let piece = &s[start..end];
        if cls == Class::Space {
            let mut rest = piece;
            if let Some(prev) = tokens.last_mut() {
                if !prev.space_after && !prev.is_whitespace() && rest.starts_with(' ') {
                    prev.space_after = true;
                    rest = &rest[1..];
                }
            }
            if !rest.is_empty() {
                tokens.push(Token::new(rest, false));
            }
        } else {
            tokens.push(Token::new(piece, false));
        }
    }
    tokens
}

pub fn detokenize(tokens: &[Token]) -> String {
    let mut out = String::new();
    for t in tokens {
        out.push_str(&t.text);
        if t.space_after {
            out.push(' ');
        }
    }
    out
}

/// Word and punctuation texts, skipping whitespace tokens.
pub fn words(tokens: &[Token]) -> Vec<String> {
    tokens
        .iter()
        .filter(|t| !t.is_whitespace())
        .map(|t| t.text.clone())
        .collect()
}

/// Joins generated words: single spaces, except none before closing
/// punctuation and none after opening brackets.
pub fn join_words<S: AsRef<str>>(words: &[S]) -> String {
    let mut out = String::new();
    let mut prev_open = true;
    for w in words {
        let w = w.as_ref();
        let closing = w.chars().count() == 1 && ",.;:!?)]}%".contains(w);
        if !out.is_empty() && !closing && !prev_open {
            out.push(' ');
        }
        out.push_str(w);
        prev_open = w.chars().count() == 1 && "([{".contains(w);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trips_double_spaces() {
        let s = "Hello,  world!";
        let toks = tokenize(s);
        assert_eq!(detokenize(&toks), s);
        assert_eq!(words(&toks), ["Hello", ",", "world", "!"]);
    }

    #[test]
    fn empty_string() {
        assert!(tokenize("").is_empty());
        assert_eq!(detokenize(&[]), "");
    }

    #[test]
    fn two_words_with_space_marker() {
        let toks = tokenize("a b");
        assert_eq!(toks, vec![Token::new("a", true), Token::new("b", false)]);
        assert_eq!(detokenize(&toks), "a b");
    }

    #[test]
    fn leading_and_mixed_whitespace_are_tokens() {
        let toks = tokenize(" \tx\n");
        assert_eq!(toks[0], Token::new(" \t", false));
        assert!(toks[0].is_whitespace());
        assert_eq!(words(&toks), ["x"]);
        assert_eq!(detokenize(&toks), " \tx\n");
    }

    #[test]
    fn joins_generated_words() {
        assert_eq!(join_words(&["cat", "sat", ",", "(", "yes", ")", "."]), "cat sat, (yes).");
        assert_eq!(join_words::<&str>(&[]), "");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn round_trip_any_unicode(s in "\\PC*|[ \\t\\na-z,.!é\u{0301}]*") {
            prop_assert_eq!(detokenize(&tokenize(&s)), s);
        }
    }
}

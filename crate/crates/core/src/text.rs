//! Tokenization and the character/word vocabularies.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

/// Lowercases, splits on whitespace and separates punctuation into
/// single-character tokens. Underscores are word characters, so anonymization
/// placeholders such as `xx_url_xx` stay whole.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for ch in chunk.chars().flat_map(char::to_lowercase) {
            if ch.is_alphanumeric() || ch == '_' {
                word.push(ch);
            } else {
                if !word.is_empty() {
                    out.push(core::mem::take(&mut word));
                }
                out.push(ch.to_string());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

/// Word and character indices built from a training corpus.
///
/// Index 0 is padding, 1 unknown and 2 the start-of-dialog action token, in
/// both tables. Reserved words spell themselves with the matching reserved
/// character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    word_index: BTreeMap<String, usize>,
    chars: Vec<char>,
    char_index: BTreeMap<char, usize>,
}

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const SOD: usize = 2;
const RESERVED_WORDS: [&str; 3] = ["<pad>", "<unk>", "<sod>"];
const RESERVED: usize = 3;

impl Vocab {
    /// Vocabulary over every token of `texts`.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let tokens: BTreeSet<String> = texts.into_iter().flat_map(tokenize).collect();
        Self::from_words(tokens)
    }

    /// Vocabulary over an explicit word list (duplicates and reserved names
    /// are ignored; order does not matter).
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let sorted: BTreeSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().to_string())
            .filter(|w| !w.is_empty() && !RESERVED_WORDS.contains(&w.as_str()))
            .collect();
        let char_set: BTreeSet<char> = sorted.iter().flat_map(|w| w.chars()).collect();

        let mut words: Vec<String> = RESERVED_WORDS.iter().map(|w| w.to_string()).collect();
        words.extend(sorted);
        let word_index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();

        let mut chars = vec!['\u{0}', '\u{1}', '\u{2}'];
        chars.extend(char_set.into_iter().filter(|c| !matches!(c, '\u{0}'..='\u{2}')));
        let char_index = chars
            .iter()
            .enumerate()
            .skip(RESERVED)
            .map(|(i, &c)| (c, i))
            .collect();
        Vocab {
            words,
            word_index,
            chars,
            char_index,
        }
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn char_count(&self) -> usize {
        self.chars.len()
    }

    /// Word index; unknown tokens map to [`UNK`].
    pub fn word_id(&self, token: &str) -> usize {
        self.word_index.get(token).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn contains(&self, token: &str) -> bool {
        self.word_index.contains_key(token)
    }

    /// Character indices spelling `token`.
    pub fn char_ids(&self, token: &str) -> Vec<usize> {
        if let Some(r) = RESERVED_WORDS.iter().position(|w| *w == token) {
            return vec![r];
        }
        token
            .chars()
            .map(|c| self.char_index.get(&c).copied().unwrap_or(UNK))
            .collect()
    }

    /// Non-reserved words in sorted order (the dump format).
    pub fn tokens(&self) -> &[String] {
        &self.words[RESERVED..]
    }

    pub fn pad_token() -> &'static str {
        RESERVED_WORDS[PAD]
    }

    pub fn start_token() -> &'static str {
        RESERVED_WORDS[SOD]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_punctuation_and_lowercases() {
        assert_eq!(tokenize("Hello. What can I help you?"), ["hello", ".", "what", "can", "i", "help", "you", "?"]);
        assert_eq!(tokenize("don't"), ["don", "'", "t"]);
        assert_eq!(tokenize("  "), Vec::<String>::new());
    }

    #[test]
    fn placeholders_are_single_tokens() {
        assert_eq!(tokenize("go to xx_url_xx."), ["go", "to", "xx_url_xx", "."]);
        assert_eq!(tokenize("Mail: xx_email_xx"), ["mail", ":", "xx_email_xx"]);
    }

    #[test]
    fn known_tokens_round_trip_and_unknowns_map_to_unk() {
        let v = Vocab::build(["Hello there", "Reset my password"]);
        for t in ["hello", "there", "reset", "my", "password"] {
            assert_eq!(v.word(v.word_id(t)), t);
        }
        assert_eq!(v.word_id("zebra"), UNK);
        assert_eq!(v.char_ids("hz"), vec![v.char_ids("h")[0], UNK]);
        assert_eq!(v.char_ids(Vocab::start_token()), vec![SOD]);
    }

    #[test]
    fn dump_is_sorted_and_rebuilds_identically() {
        let v = Vocab::build(["b a c", "a"]);
        assert_eq!(v.tokens(), ["a", "b", "c"]);
        assert_eq!(Vocab::from_words(v.tokens()), v);
    }
}

use std::collections::BTreeSet;

use crate::data::LangId;

use super::{FeatureError, TokenizationStats, VocabSet};

/// Greedy longest-match subword tokenizer in the WordPiece style: the first
/// piece of a word is looked up bare, later pieces with a `##` prefix.
/// Characters with no matching piece become single-character tokens.
#[derive(Debug, Clone)]
pub struct LongestMatchTokenizer {
    pieces: BTreeSet<String>,
    max_len: usize,
}

pub const CONTINUATION: &str = "##";

impl LongestMatchTokenizer {
    pub fn new<I, S>(pieces: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let pieces: BTreeSet<String> = pieces.into_iter().map(Into::into).collect();
        let max_len = pieces
            .iter()
            .map(|p| p.trim_start_matches(CONTINUATION).chars().count())
            .max()
            .unwrap_or(1);
        LongestMatchTokenizer { pieces, max_len }
    }

    pub fn tokenize_word(&self, word: &str) -> Vec<String> {
        let chars: Vec<char> = word.chars().collect();
        let mut out = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let prefix = if start == 0 { "" } else { CONTINUATION };
            let longest = (start + 1..=chars.len().min(start + self.max_len))
                .rev()
                .map(|end| {
                    let piece: String = chars[start..end].iter().collect();
                    (format!("{prefix}{piece}"), end)
                })
                .find(|(piece, _)| self.pieces.contains(piece));
            match longest {
                Some((piece, end)) => {
                    out.push(piece);
                    start = end;
                }
                None => {
                    out.push(format!("{prefix}{}", chars[start]));
                    start += 1;
                }
            }
        }
        out
    }

    /// Tokenizes whitespace-separated text, returning the distinct subword
    /// types produced and the word/subword/continued-word counts.
    pub fn tokenize_corpus(
        &self,
        lang: &LangId,
        text: &str,
    ) -> Result<(VocabSet, TokenizationStats), FeatureError> {
        let mut types = BTreeSet::new();
        let (mut words, mut subwords, mut continued) = (0u64, 0u64, 0u64);
        for word in text.split_whitespace() {
            let toks = self.tokenize_word(word);
            words += 1;
            subwords += toks.len() as u64;
            if toks.len() >= 2 {
                continued += 1;
            }
            types.extend(toks);
        }
        let stats = TokenizationStats::new(lang, words, subwords, continued)?;
        Ok((VocabSet::new(lang.clone(), types)?, stats))
    }
}

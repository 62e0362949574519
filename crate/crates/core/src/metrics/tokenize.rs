use std::ops::Range;

use unicode_normalization::char::is_combining_mark;

/// Splits text into tokens for BLEU, METEOR and the filters.
pub trait Tokenizer: Send + Sync {
    /// Byte ranges of the tokens in `text`, in order.
    fn spans(&self, text: &str) -> Vec<Range<usize>>;

    fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str> {
        self.spans(text).into_iter().map(|r| &text[r]).collect()
    }
}

/// Whitespace split with every punctuation or symbol character broken out
/// as its own token. Letters, digits and combining marks form words.
#[derive(Debug, Default, Clone, Copy)]
pub struct PunctTokenizer;

pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_combining_mark(c)
}

impl Tokenizer for PunctTokenizer {
    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut start: Option<usize> = None;
        for (i, c) in text.char_indices() {
            if is_word_char(c) {
                start.get_or_insert(i);
                continue;
            }
            if let Some(s) = start.take() {
                spans.push(s..i);
            }
            if !c.is_whitespace() {
                spans.push(i..i + c.len_utf8());
            }
        }
        if let Some(s) = start {
            spans.push(s..text.len());
        }
        spans
    }
}

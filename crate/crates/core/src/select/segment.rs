//! Deterministic sentence segmentation with byte-offset spans.
//!
//! Boundaries are `.`, `!` and `?` followed by whitespace or end of text, plus
//! every newline. A run of terminators and closing quotes/brackets stays with
//! the sentence it ends. A single `.` after a known abbreviation does not end
//! a sentence, and a `.` inside a token (`3.14`, `a.b`) never does.

use serde::{Deserialize, Serialize};

use crate::transcript::{Message, MessageId};

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "e.g", "i.e", "cf", "approx", "fig", "eq",
    "dept", "inc", "ltd", "co", "u.s",
];

/// A sentence located inside a message, addressed by byte offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub message_id: MessageId,
    pub ordinal: usize,
    /// `[start, end)` byte offsets into the message text.
    pub char_span: [usize; 2],
    pub text: String,
}

impl Sentence {
    pub fn start(&self) -> usize {
        self.char_span[0]
    }

    pub fn end(&self) -> usize {
        self.char_span[1]
    }
}

/// Byte spans of the sentences in `text`, in order.
pub fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let bytes = text.as_bytes();
    let mut seg_start = 0;
    let mut chars = text.char_indices().peekable();

    while let Some((i, c)) = chars.next() {
        if c == '\n' {
            push_trimmed(text, seg_start, i, &mut spans);
            seg_start = i + 1;
            continue;
        }
        if !is_terminator(c) {
            continue;
        }
        let mut end = i + c.len_utf8();
        let mut run = 1;
        while let Some(&(j, next)) = chars.peek() {
            if is_terminator(next) {
                run += 1;
            } else if !is_closer(next) {
                break;
            }
            end = j + next.len_utf8();
            chars.next();
        }
        let at_boundary = end == bytes.len() || text[end..].starts_with(char::is_whitespace);
        if !at_boundary {
            continue;
        }
        if c == '.' && run == 1 && is_abbreviation(&text[seg_start..i]) {
            continue;
        }
        push_trimmed(text, seg_start, end, &mut spans);
        seg_start = end;
    }
    push_trimmed(text, seg_start, text.len(), &mut spans);
    spans
}

/// Splits a message into sentences carrying its id.
pub fn segment_sentences(message: &Message) -> Vec<Sentence> {
    sentence_spans(&message.text)
        .into_iter()
        .enumerate()
        .map(|(ordinal, (s, e))| Sentence {
            message_id: message.id,
            ordinal,
            char_span: [s, e],
            text: message.text[s..e].to_string(),
        })
        .collect()
}

/// Lowercased alphanumeric tokens; shared by the hashed encoder and BM25.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '}' | '\u{201d}' | '\u{2019}')
}

fn is_abbreviation(preceding: &str) -> bool {
    let word = preceding
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

fn push_trimmed(text: &str, start: usize, end: usize, spans: &mut Vec<(usize, usize)>) {
    let slice = &text[start..end];
    let lead = slice.len() - slice.trim_start().len();
    let trimmed = slice.trim();
    if !trimmed.is_empty() {
        spans.push((start + lead, start + lead + trimmed.len()));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(s: &str) -> Vec<&str> {
        sentence_spans(s).into_iter().map(|(a, b)| &s[a..b]).collect()
    }

    #[test]
    fn empty_and_whitespace() {
        assert!(sentence_spans("").is_empty());
        assert!(sentence_spans("  \n\t \n").is_empty());
    }

    #[test]
    fn unterminated_single_sentence() {
        let s = "The answer is 140";
        assert_eq!(sentence_spans(s), vec![(0, s.len())]);
    }

    #[test]
    fn three_terminators() {
        let s = "A is true. B follows! C?";
        assert_eq!(sentence_spans(s), vec![(0, 10), (11, 21), (22, 24)]);
        assert_eq!(texts(s), vec!["A is true.", "B follows!", "C?"]);
    }

    #[test]
    fn newline_is_hard_boundary() {
        assert_eq!(texts("first line\nsecond line. third"), vec!["first line", "second line.", "third"]);
        assert_eq!(texts("a\r\nb"), vec!["a", "b"]);
    }

    #[test]
    fn decimals_and_abbreviations() {
        assert_eq!(texts("Pi is 3.14 roughly. Done."), vec!["Pi is 3.14 roughly.", "Done."]);
        assert_eq!(
            texts("Ask Dr. Smith, e.g. tomorrow. Then stop."),
            vec!["Ask Dr. Smith, e.g. tomorrow.", "Then stop."]
        );
        assert_eq!(texts("It is no. Next one."), vec!["It is no.", "Next one."]);
    }

    #[test]
    fn terminator_runs_and_closers() {
        assert_eq!(texts("Really?! Yes... \"Sure.\" Ok"), vec!["Really?!", "Yes...", "\"Sure.\"", "Ok"]);
        assert_eq!(texts("(see above.) Next"), vec!["(see above.)", "Next"]);
    }

    #[test]
    fn multibyte_text_keeps_valid_spans() {
        let s = "Ça va? Très bien… merci! 答案是 H。";
        for (a, b) in sentence_spans(s) {
            assert!(s.is_char_boundary(a) && s.is_char_boundary(b));
        }
        assert_eq!(texts(s), vec!["Ça va?", "Très bien… merci!", "答案是 H。"]);
    }

    #[test]
    fn tokens_are_lowercased_alphanumerics() {
        let toks: Vec<_> = tokenize("Option-H, airline PILOT's 2nd!").collect();
        assert_eq!(toks, vec!["option", "h", "airline", "pilot", "s", "2nd"]);
    }
}

//! Script-agnostic sentence segmentation.
//!
//! Splits on the sentence terminators `. ! ? । ። 。` when followed by
//! whitespace or end of text, and on ASCII newlines. No abbreviation
//! handling; story prose does not need it.

const TERMINATORS: [char; 6] = ['.', '!', '?', '\u{0964}', '\u{1362}', '\u{3002}'];

fn is_terminator(c: char) -> bool {
    TERMINATORS.contains(&c)
}

/// Byte spans of the trimmed sentences of `text`, in order.
pub fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if c == '\n' {
            push_trimmed(text, start, i, &mut spans);
            start = i + 1;
        } else if is_terminator(c) {
            let followed_by_break = match iter.peek() {
                None => true,
                Some(&(_, next)) => next.is_whitespace(),
            };
            if followed_by_break {
                let end = i + c.len_utf8();
                push_trimmed(text, start, end, &mut spans);
                start = end;
            }
        }
    }
    push_trimmed(text, start, text.len(), &mut spans);
    spans
}

fn push_trimmed(text: &str, start: usize, end: usize, spans: &mut Vec<(usize, usize)>) {
    let slice = &text[start..end];
    let trimmed = slice.trim();
    if trimmed.is_empty() {
        return;
    }
    let lead = slice.len() - slice.trim_start().len();
    let trail = slice.len() - slice.trim_end().len();
    spans.push((start + lead, end - trail));
}

/// The trimmed sentences of `text`, in order.
pub fn sentences(text: &str) -> Vec<&str> {
    sentence_spans(text)
        .into_iter()
        .map(|(s, e)| &text[s..e])
        .collect()
}

pub fn count_sentences(text: &str) -> usize {
    sentence_spans(text).len()
}

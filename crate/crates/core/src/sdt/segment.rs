use serde::{Deserialize, Serialize};

use super::{Modality, Result, TokenizerError, BOS, EOS, PAD};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub content: String,
    pub modality: Modality,
}

/// A label split into text and formula runs. Formula runs keep their delimiters,
/// so concatenating the contents gives back the label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentedLabel {
    pub segments: Vec<Segment>,
}

impl SegmentedLabel {
    pub fn concat(&self) -> String {
        self.segments.iter().map(|s| s.content.as_str()).collect()
    }
}

/// (opener, closer) pairs; longer openers come before their prefixes.
const DELIMITERS: [(&str, &str); 5] = [
    (r"\begin{equation}", r"\end{equation}"),
    ("$$", "$$"),
    ("$", "$"),
    (r"\(", r"\)"),
    (r"\[", r"\]"),
];

const STRAY_CLOSERS: [&str; 3] = [r"\end{equation}", r"\)", r"\]"];

fn char_len_at(s: &str, at: usize) -> usize {
    s[at..].chars().next().map_or(1, char::len_utf8)
}

/// Splits a label into text and formula segments on LaTeX math delimiters.
///
/// Recognized delimiters are `$...$`, `$$...$$`, `\(...\)`, `\[...\]` and
/// `\begin{equation}...\end{equation}`. A backslash escapes the following
/// char (`\$` is a literal dollar). Labels may not contain the sequence
/// framing tokens `<BOS>`, `<EOS>` or `<PAD>`.
pub fn segment_label(label: &str) -> Result<SegmentedLabel> {
    for token in [BOS, EOS, PAD] {
        if let Some(offset) = label.find(token) {
            return Err(TokenizerError::ReservedToken {
                offset,
                token: token.to_string(),
            });
        }
    }

    let mut out = SegmentedLabel::default();
    let mut text_start = 0;
    let mut i = 0;
    while i < label.len() {
        let rest = &label[i..];
        if let Some(&(open, close)) = DELIMITERS.iter().find(|(open, _)| rest.starts_with(open)) {
            let end = find_closer(label, i + open.len(), close).ok_or_else(|| {
                TokenizerError::UnbalancedDelimiter {
                    offset: i,
                    delimiter: open.to_string(),
                }
            })?;
            push(&mut out, &label[text_start..i], Modality::Text);
            push(&mut out, &label[i..end], Modality::Formula);
            i = end;
            text_start = end;
        } else if let Some(closer) = STRAY_CLOSERS.iter().find(|c| rest.starts_with(*c)) {
            return Err(TokenizerError::UnbalancedDelimiter {
                offset: i,
                delimiter: closer.to_string(),
            });
        } else if rest.starts_with('\\') && rest.len() > 1 {
            i += 1 + char_len_at(label, i + 1);
        } else {
            i += char_len_at(label, i);
        }
    }
    push(&mut out, &label[text_start..], Modality::Text);
    Ok(out)
}

/// Returns the byte offset just past `close`, scanning from `from`.
fn find_closer(label: &str, from: usize, close: &str) -> Option<usize> {
    let mut i = from;
    while i < label.len() {
        let rest = &label[i..];
        if rest.starts_with(close) {
            return Some(i + close.len());
        }
        if rest.starts_with('\\') && rest.len() > 1 {
            i += 1 + char_len_at(label, i + 1);
        } else {
            i += char_len_at(label, i);
        }
    }
    None
}

fn push(out: &mut SegmentedLabel, content: &str, modality: Modality) {
    if content.is_empty() {
        return;
    }
    match out.segments.last_mut() {
        Some(last) if last.modality == modality && modality == Modality::Text => {
            last.content.push_str(content)
        }
        _ => out.segments.push(Segment {
            content: content.to_string(),
            modality,
        }),
    }
}

//! Hierarchical supervision labels.
//!
//! A document is paragraphs of lines of spans. Its training label joins lines
//! with `<|ln|>` and ends every paragraph with `<|pn|>`. At inference the
//! tokens are undone: `<|ln|>` disappears and `<|pn|>` becomes a blank line.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sdt::{segment_label, Modality, LINE_BREAK, PARAGRAPH_END};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanKind {
    Text,
    Formula,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub kind: SpanKind,
    pub content: String,
}

impl Span {
    pub fn text(content: impl Into<String>) -> Self {
        Span {
            kind: SpanKind::Text,
            content: content.into(),
        }
    }

    pub fn formula(content: impl Into<String>) -> Self {
        Span {
            kind: SpanKind::Formula,
            content: content.into(),
        }
    }
}

pub type Line = Vec<Span>;
pub type Paragraph = Vec<Line>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredDocument {
    pub language: String,
    pub domain: String,
    pub paragraphs: Vec<Paragraph>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HierLevel {
    #[serde(rename = "character")]
    Character,
    #[serde(rename = "word")]
    Word,
    #[serde(rename = "line")]
    Line,
    #[serde(rename = "paragraph")]
    Paragraph,
    #[serde(rename = "multi-paragraph")]
    MultiParagraph,
}

impl HierLevel {
    pub const ALL: [HierLevel; 5] = [
        HierLevel::Character,
        HierLevel::Word,
        HierLevel::Line,
        HierLevel::Paragraph,
        HierLevel::MultiParagraph,
    ];

    /// Lower-case tag used in records.
    pub fn tag(self) -> &'static str {
        match self {
            HierLevel::Character => "character",
            HierLevel::Word => "word",
            HierLevel::Line => "line",
            HierLevel::Paragraph => "paragraph",
            HierLevel::MultiParagraph => "multi-paragraph",
        }
    }
}

impl fmt::Display for HierLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HierLevel::Character => "Character",
            HierLevel::Word => "Word",
            HierLevel::Line => "Line",
            HierLevel::Paragraph => "Paragraph",
            HierLevel::MultiParagraph => "Multi-Paragraph",
        })
    }
}

impl FromStr for HierLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        match key.as_str() {
            "character" | "char" => Ok(HierLevel::Character),
            "word" => Ok(HierLevel::Word),
            "line" => Ok(HierLevel::Line),
            "paragraph" => Ok(HierLevel::Paragraph),
            "multiparagraph" => Ok(HierLevel::MultiParagraph),
            _ => Err(format!("unknown level `{s}`")),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HstError {
    #[error("empty document")]
    EmptyDocument,
    #[error("paragraph {paragraph} has no lines")]
    EmptyParagraph { paragraph: usize },
    #[error("line {line} of paragraph {paragraph} has no visible content")]
    EmptyLine { paragraph: usize, line: usize },
    #[error("empty span at paragraph {paragraph}, line {line}")]
    EmptySpan { paragraph: usize, line: usize },
    #[error("span at paragraph {paragraph}, line {line} contains a supervision token")]
    ReservedToken { paragraph: usize, line: usize },
    #[error("formula span at paragraph {paragraph}, line {line} is not a single delimited formula")]
    BadFormula { paragraph: usize, line: usize },
}

impl StructuredDocument {
    /// Checks the structural invariants every codec operation relies on.
    pub fn validate(&self) -> Result<(), HstError> {
        if self.paragraphs.is_empty() {
            return Err(HstError::EmptyDocument);
        }
        for (p, paragraph) in self.paragraphs.iter().enumerate() {
            if paragraph.is_empty() {
                return Err(HstError::EmptyParagraph { paragraph: p });
            }
            for (l, line) in paragraph.iter().enumerate() {
                let at = (p, l);
                if line.iter().all(|s| s.content.trim().is_empty()) {
                    return Err(HstError::EmptyLine {
                        paragraph: at.0,
                        line: at.1,
                    });
                }
                for span in line {
                    if span.content.is_empty() {
                        return Err(HstError::EmptySpan {
                            paragraph: at.0,
                            line: at.1,
                        });
                    }
                    if span.content.contains(LINE_BREAK) || span.content.contains(PARAGRAPH_END) {
                        return Err(HstError::ReservedToken {
                            paragraph: at.0,
                            line: at.1,
                        });
                    }
                    if span.kind == SpanKind::Formula && !is_single_formula(&span.content) {
                        return Err(HstError::BadFormula {
                            paragraph: at.0,
                            line: at.1,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn line_count(&self) -> usize {
        self.paragraphs.iter().map(Vec::len).sum()
    }
}

fn is_single_formula(content: &str) -> bool {
    matches!(
        segment_label(content).map(|s| s.segments),
        Ok(segments) if segments.len() == 1 && segments[0].modality == Modality::Formula
    )
}

/// A word-level unit of a line: a whitespace-delimited text word or a whole formula.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineToken {
    pub text: String,
    pub kind: SpanKind,
    /// Whitespace between the previous token (or line start) and this one.
    pub leading: String,
}

/// Joins spans: one space between adjacent text spans unless either side
/// already has whitespace there; nothing is injected around formulas.
pub fn line_text(line: &[Span]) -> String {
    let mut out = String::new();
    let mut prev: Option<&Span> = None;
    for span in line {
        if let Some(p) = prev {
            let needs_space = p.kind == SpanKind::Text
                && span.kind == SpanKind::Text
                && !p.content.ends_with(char::is_whitespace)
                && !span.content.starts_with(char::is_whitespace);
            if needs_space {
                out.push(' ');
            }
        }
        out.push_str(&span.content);
        prev = Some(span);
    }
    out
}

/// Splits a line into word-level tokens. Returns the tokens and any trailing
/// whitespace, so that `Σ(leading + text) + trailing == line_text(line)`.
pub fn line_tokens(line: &[Span]) -> (Vec<LineToken>, String) {
    let joined = line_text(line);
    let mut tokens = Vec::new();
    let mut cursor = 0;
    let mut emit = |start: usize, end: usize, kind: SpanKind, cursor: &mut usize| {
        tokens.push(LineToken {
            text: joined[start..end].to_string(),
            kind,
            leading: joined[*cursor..start].to_string(),
        });
        *cursor = end;
    };
    // Re-walk the joined string span by span, mirroring `line_text`.
    let mut offset = 0;
    let mut prev: Option<&Span> = None;
    for span in line {
        if let Some(p) = prev {
            if p.kind == SpanKind::Text
                && span.kind == SpanKind::Text
                && !p.content.ends_with(char::is_whitespace)
                && !span.content.starts_with(char::is_whitespace)
            {
                offset += 1;
            }
        }
        match span.kind {
            SpanKind::Formula => emit(offset, offset + span.content.len(), SpanKind::Formula, &mut cursor),
            SpanKind::Text => {
                let mut word_start = None;
                for (i, c) in span.content.char_indices() {
                    match (c.is_whitespace(), word_start) {
                        (false, None) => word_start = Some(i),
                        (true, Some(s)) => {
                            emit(offset + s, offset + i, SpanKind::Text, &mut cursor);
                            word_start = None;
                        }
                        _ => {}
                    }
                }
                if let Some(s) = word_start {
                    emit(offset + s, offset + span.content.len(), SpanKind::Text, &mut cursor);
                }
            }
        }
        offset += span.content.len();
        prev = Some(span);
    }
    let trailing = joined[cursor..].to_string();
    (tokens, trailing)
}

fn paragraph_label(paragraph: &[Line], out: &mut String) {
    for (i, line) in paragraph.iter().enumerate() {
        if i > 0 {
            out.push_str(LINE_BREAK);
        }
        out.push_str(&line_text(line));
    }
    out.push_str(PARAGRAPH_END);
}

fn encode_paragraphs(paragraphs: &[Paragraph]) -> String {
    let mut out = String::new();
    for paragraph in paragraphs {
        paragraph_label(paragraph, &mut out);
    }
    out
}

/// Flattens a document into a label with `<|ln|>` and `<|pn|>` tokens.
pub fn encode_hst(doc: &StructuredDocument) -> Result<String, HstError> {
    doc.validate()?;
    Ok(encode_paragraphs(&doc.paragraphs))
}

/// One left-to-right pass replacing supervision tokens. Returns whether
/// anything was replaced.
fn replace_tokens(input: &str, line: &str, paragraph: &str, out: &mut String) -> bool {
    let mut changed = false;
    let mut rest = input;
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix(LINE_BREAK) {
            out.push_str(line);
            rest = r;
            changed = true;
        } else if let Some(r) = rest.strip_prefix(PARAGRAPH_END) {
            out.push_str(paragraph);
            rest = r;
            changed = true;
        } else {
            let c = rest.chars().next().expect("non-empty");
            out.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    changed
}

/// Undoes supervision tokens the way inference does: `<|ln|>` is removed,
/// `<|pn|>` becomes `"\n\n"`, and trailing whitespace is trimmed. Total on
/// any input; repeated until no token remains so the result is a fixed point.
pub fn decode_hst(pred: &str) -> String {
    let mut current = pred.to_string();
    loop {
        let mut next = String::with_capacity(current.len());
        if !replace_tokens(&current, "", "\n\n", &mut next) {
            break;
        }
        current = next;
    }
    current.truncate(current.trim_end().len());
    current
}

/// Removes supervision tokens without reintroducing structure. Where a
/// removal leaves two spaces side by side, one is dropped.
pub fn strip_hst(label: &str) -> String {
    let mut current = label.to_string();
    loop {
        let mut out = String::with_capacity(current.len());
        let mut changed = false;
        let mut rest = current.as_str();
        while !rest.is_empty() {
            let token = [LINE_BREAK, PARAGRAPH_END]
                .into_iter()
                .find(|t| rest.starts_with(t));
            if let Some(t) = token {
                rest = &rest[t.len()..];
                changed = true;
                if out.ends_with(' ') && rest.starts_with(' ') {
                    rest = &rest[1..];
                }
            } else {
                let c = rest.chars().next().expect("non-empty");
                out.push(c);
                rest = &rest[c.len_utf8()..];
            }
        }
        current = out;
        if !changed {
            return current;
        }
    }
}

/// Samples labels at one hierarchical level.
///
/// Character samples pick one seeded char from each text word; word samples
/// are text words and whole formulas; lines carry no supervision tokens;
/// paragraph samples are single encoded paragraphs; multi-paragraph samples
/// encode seeded runs of two or more consecutive paragraphs. An unavailable
/// level yields an empty list.
pub fn derive_levels(
    doc: &StructuredDocument,
    level: HierLevel,
    rng_seed: u64,
) -> Result<Vec<(String, HierLevel)>, HstError> {
    doc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let lines = doc.paragraphs.iter().flatten();
    let samples: Vec<String> = match level {
        HierLevel::Character => lines
            .flat_map(|l| line_tokens(l).0)
            .filter(|t| t.kind == SpanKind::Text)
            .map(|t| {
                let chars: Vec<char> = t.text.chars().collect();
                chars[rng.gen_range(0..chars.len())].to_string()
            })
            .collect(),
        HierLevel::Word => lines.flat_map(|l| line_tokens(l).0).map(|t| t.text).collect(),
        HierLevel::Line => lines.map(|l| line_text(l)).collect(),
        HierLevel::Paragraph => doc
            .paragraphs
            .iter()
            .map(|p| encode_paragraphs(std::slice::from_ref(p)))
            .collect(),
        HierLevel::MultiParagraph => {
            let mut out = Vec::new();
            let mut start = 0;
            let total = doc.paragraphs.len();
            while total - start >= 2 {
                let remaining = total - start;
                let mut size = rng.gen_range(2..=remaining.min(3));
                if remaining - size == 1 {
                    size += 1;
                }
                out.push(encode_paragraphs(&doc.paragraphs[start..start + size]));
                start += size;
            }
            out
        }
    };
    Ok(samples.into_iter().map(|s| (s, level)).collect())
}

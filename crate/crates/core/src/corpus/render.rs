use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::hst::{line_tokens, SpanKind, StructuredDocument};
use crate::sdt::{LINE_BREAK, PARAGRAPH_END};

/// Vertical distance between consecutive rows of one paragraph.
const ROW_PITCH: u32 = 2;
/// Extra vertical space before a new paragraph.
const PARAGRAPH_GAP: u32 = 2;
const PAGE_HEIGHT: u32 = 100;
/// Odd multiplier: a bijection on 24-bit integers that spreads neighbouring indices.
const COLOR_STRIDE: u32 = 0x5D_EECD;
const COLOR_SPACE: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rgb({}, {}, {})", self.0, self.1, self.2)
    }
}

impl Rgb {
    /// The unique color of token `index`; fails outside the 2^24 color space.
    pub fn for_index(index: usize) -> Result<Rgb, CorpusError> {
        check_capacity(index + 1)?;
        let v = (index as u32).wrapping_mul(COLOR_STRIDE) & 0xFF_FFFF;
        Ok(Rgb((v >> 16) as u8, (v >> 8) as u8, v as u8))
    }
}

fn check_capacity(count: usize) -> Result<(), CorpusError> {
    if count > COLOR_SPACE {
        return Err(CorpusError::TooManyTokens { count });
    }
    Ok(())
}

/// A token's color plus what is needed to rebuild its line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColoredToken {
    pub index: usize,
    pub color: Rgb,
    pub surface: String,
    pub kind: SpanKind,
    pub leading: String,
    /// Whitespace closing the line; only set on a line's last token.
    pub trailing: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorMap {
    pub tokens: Vec<ColoredToken>,
}

impl ColorMap {
    pub fn color_of(&self, index: usize) -> Option<Rgb> {
        self.tokens.get(index).map(|t| t.color)
    }
}

/// A rendered token: where it landed and in which color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColoredGlyphBox {
    pub token_index: usize,
    pub color: Rgb,
    pub page: u32,
    pub bbox: (u32, u32, u32, u32),
}

/// Assigns every word-level token a unique color and lays the document out:
/// one row per source line, tokens left to right, a wider gap between
/// paragraphs, pages every 100 units.
pub fn colorize_tokens(doc: &StructuredDocument) -> Result<(ColorMap, Vec<ColoredGlyphBox>), CorpusError> {
    doc.validate()?;
    let lines: Vec<_> = doc
        .paragraphs
        .iter()
        .enumerate()
        .flat_map(|(p, para)| para.iter().map(move |line| (p, line_tokens(line))))
        .collect();
    check_capacity(lines.iter().map(|(_, (t, _))| t.len()).sum())?;

    let mut map = ColorMap::default();
    let mut boxes = Vec::new();
    let mut y = 0u32;
    let mut prev_paragraph = None;
    for (p, (tokens, trailing)) in lines {
        if let Some(prev) = prev_paragraph {
            y += ROW_PITCH + if prev != p { PARAGRAPH_GAP } else { 0 };
        }
        prev_paragraph = Some(p);
        let mut x = 0u32;
        let last = tokens.len().saturating_sub(1);
        for (i, token) in tokens.into_iter().enumerate() {
            let index = map.tokens.len();
            let color = Rgb::for_index(index)?;
            x += token.leading.chars().count() as u32;
            let width = token.text.chars().count() as u32;
            boxes.push(ColoredGlyphBox {
                token_index: index,
                color,
                page: y / PAGE_HEIGHT,
                bbox: (x, y % PAGE_HEIGHT, x + width, y % PAGE_HEIGHT + 1),
            });
            x += width;
            map.tokens.push(ColoredToken {
                index,
                color,
                surface: token.text,
                kind: token.kind,
                leading: token.leading,
                trailing: if i == last { trailing.clone() } else { String::new() },
            });
        }
    }
    Ok((map, boxes))
}

/// Word, line and paragraph labels recovered from a render.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveredLabels {
    pub words: Vec<String>,
    pub lines: Vec<String>,
    pub paragraphs: Vec<String>,
}

/// Reads labels back from rendered boxes: colors identify tokens, rows give
/// lines, and wider row gaps give paragraph breaks. Box order is irrelevant.
pub fn recover_labels(render: &[ColoredGlyphBox], color_map: &ColorMap) -> Result<RecoveredLabels, CorpusError> {
    let by_color: HashMap<Rgb, &ColoredToken> = color_map.tokens.iter().map(|t| (t.color, t)).collect();
    let mut placed = Vec::with_capacity(render.len());
    for b in render {
        let token = by_color.get(&b.color).ok_or(CorpusError::UnknownColor(b.color))?;
        let row = b.page * PAGE_HEIGHT + b.bbox.1;
        placed.push((row, b.bbox.0, *token));
    }
    placed.sort_by_key(|&(row, x, t)| (row, x, t.index));

    let mut out = RecoveredLabels::default();
    let mut paragraph: Vec<String> = Vec::new();
    let mut line = String::new();
    let mut current: Option<(u32, &ColoredToken)> = None;
    let finish_line = |line: &mut String, last: &ColoredToken, paragraph: &mut Vec<String>| {
        line.push_str(&last.trailing);
        paragraph.push(std::mem::take(line));
    };
    let finish_paragraph = |paragraph: &mut Vec<String>, out: &mut RecoveredLabels| {
        out.paragraphs.push(paragraph.join(LINE_BREAK) + PARAGRAPH_END);
        out.lines.append(paragraph);
    };
    for (row, _, token) in placed {
        if let Some((prev_row, prev)) = current {
            if row != prev_row {
                finish_line(&mut line, prev, &mut paragraph);
                if row - prev_row > ROW_PITCH {
                    finish_paragraph(&mut paragraph, &mut out);
                }
            }
        }
        line.push_str(&token.leading);
        line.push_str(&token.surface);
        out.words.push(token.surface.clone());
        current = Some((row, token));
    }
    if let Some((_, last)) = current {
        finish_line(&mut line, last, &mut paragraph);
        finish_paragraph(&mut paragraph, &mut out);
    }
    Ok(out)
}

//! Block-level evaluation: normalized edit distance grouped by modality,
//! hierarchical level, language and document domain.

mod distance;
mod report;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hst::decode_hst;
pub use crate::hst::HierLevel;
pub use distance::{levenshtein, normalized_ed};
pub use report::{evaluate, render_report, EvalReport, GroupStat, ReportFormat, REPORT_SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no records")]
    NoRecords,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How predictions and ground truth are normalized before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CanonMode {
    Raw,
    Hst,
}

impl FromStr for CanonMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(CanonMode::Raw),
            "hst" => Ok(CanonMode::Hst),
            _ => Err(format!("unknown mode `{s}` (expected raw or hst)")),
        }
    }
}

/// In `hst` mode, undo supervision tokens, then collapse each whitespace run
/// to one space, or to `"\n\n"` when the run holds a paragraph break.
pub fn canonicalize(pred: &str, mode: CanonMode) -> String {
    if mode == CanonMode::Raw {
        return pred.to_string();
    }
    let decoded = decode_hst(pred);
    let mut out = String::with_capacity(decoded.len());
    let mut run = String::new();
    let flush = |run: &mut String, out: &mut String| {
        if !run.is_empty() {
            if !out.is_empty() {
                out.push_str(if run.matches('\n').count() >= 2 { "\n\n" } else { " " });
            }
            run.clear();
        }
    };
    for c in decoded.chars() {
        if c.is_whitespace() {
            run.push(c);
        } else {
            flush(&mut run, &mut out);
            out.push(c);
        }
    }
    out
}

macro_rules! closed_tag {
    ($name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let key = normalize_tag(s);
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| normalize_tag(v.label()) == key)
                    .ok_or_else(|| format!("unknown {} `{s}`", stringify!($name).to_lowercase()))
            }
        }
    };
}

fn normalize_tag(s: &str) -> String {
    s.chars()
        .filter(|c| !matches!(c, ' ' | '_' | '-'))
        .flat_map(char::to_lowercase)
        .collect()
}

closed_tag!(BlockModality {
    Text => "Text",
    Formula => "Formula",
    Mix => "Mix",
});

closed_tag!(Language {
    Ch => "CH",
    En => "EN",
    Mix => "Mix",
});

closed_tag!(Domain {
    Book => "Book",
    Ppt2Pdf => "PPT2PDF",
    ResearchReport => "Research Report",
    Textbook => "Textbook",
    ExamPaper => "Exam Paper",
    Magazine => "Magazine",
    Literature => "Literature",
    Note => "Note",
    Newspaper => "Newspaper",
});

/// Tags as they appear on the wire; validated into [`EvalTags`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTags {
    pub modality: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}

/// One JSONL evaluation line: `{"id","gt","pred","tags":{...}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEvalRecord {
    pub id: String,
    pub gt: String,
    pub pred: String,
    pub tags: RawTags,
    /// Allows an empty ground truth.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

/// Level, language and domain are optional: formula and mixed blocks are
/// usually scored by modality only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalTags {
    pub modality: BlockModality,
    pub level: Option<HierLevel>,
    pub language: Option<Language>,
    pub domain: Option<Domain>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalRecord {
    pub id: String,
    pub gt: String,
    pub pred: String,
    pub tags: EvalTags,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub reason: String,
}

impl RawEvalRecord {
    pub fn validate(self) -> Result<EvalRecord, Rejection> {
        let reject = |reason: String| Rejection {
            id: self.id.clone(),
            reason,
        };
        let tags = EvalTags {
            modality: self.tags.modality.parse().map_err(reject)?,
            level: self.tags.level.as_deref().map(str::parse).transpose().map_err(reject)?,
            language: self.tags.language.as_deref().map(str::parse).transpose().map_err(reject)?,
            domain: self.tags.domain.as_deref().map(str::parse).transpose().map_err(reject)?,
        };
        if self.gt.is_empty() && !self.degenerate {
            return Err(reject("empty ground truth without the degenerate flag".into()));
        }
        Ok(EvalRecord {
            id: self.id,
            gt: self.gt,
            pred: self.pred,
            tags,
        })
    }
}

/// Parses JSONL evaluation records. Blank lines and `__header__` lines are
/// skipped; unparsable lines become rejections.
pub fn read_records(input: &str) -> (Vec<RawEvalRecord>, Vec<Rejection>) {
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for (n, line) in input.lines().enumerate() {
        if line.trim().is_empty() || crate::jsonl::is_header(line) {
            continue;
        }
        match serde_json::from_str::<RawEvalRecord>(line) {
            Ok(r) => records.push(r),
            Err(e) => rejected.push(Rejection {
                id: format!("line {}", n + 1),
                reason: e.to_string(),
            }),
        }
    }
    (records, rejected)
}

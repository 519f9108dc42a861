use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, ContentModality, CorpusError};
use crate::hst::{derive_levels, strip_hst, HierLevel, Span, StructuredDocument};
use crate::sdt::{segment_label, Modality};

const ENGLISH: &[&str] = &[
    "the", "sum", "of", "left", "right", "side", "is", "equal", "to", "value", "energy", "area",
    "circle", "with", "radius", "where", "we", "define", "function", "series", "limit", "at",
    "infinity", "fraction", "term", "each", "model", "data", "result", "shows", "that", "under",
    "given", "condition", "proof", "follows", "from", "theorem", "hence", "note", "first",
    "second", "paragraph", "line", "text", "and", "for", "all", "integer", "matrix", "vector",
    "space", "by", "linear", "map", "report", "page", "table", "figure", "section",
];

const CHINESE: &[&str] = &[
    "我们", "定义", "函数", "求和", "左边", "右边", "等于", "数值", "能量", "面积", "圆", "半径",
    "其中", "级数", "极限", "无穷", "分数", "每个", "模型", "数据", "结果", "表明", "条件", "证明",
    "定理", "因此", "注意", "第一", "第二", "段落", "文本", "所有", "整数", "矩阵", "向量", "空间",
    "线性", "报告", "页面", "表格",
];

const GREEK: &[&str] = &[
    r"\alpha", r"\beta", r"\gamma", r"\theta", r"\pi", r"\sigma", r"\lambda", r"\mu", r"\infty",
];
const LETTERS: &[&str] = &["a", "b", "c", "x", "y", "z", "n", "k", "i"];

/// Shape of generated documents. Ranges are inclusive `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentProfile {
    pub paragraphs: (usize, usize),
    pub lines: (usize, usize),
    #[serde(default = "default_spans")]
    pub spans: (usize, usize),
    #[serde(default = "default_words")]
    pub words: (usize, usize),
    pub formula_density: f64,
    pub language: String,
    #[serde(default = "default_domain")]
    pub domain: String,
}

fn default_spans() -> (usize, usize) {
    (1, 3)
}

fn default_words() -> (usize, usize) {
    (2, 6)
}

fn default_domain() -> String {
    "Book".to_string()
}

impl Default for DocumentProfile {
    fn default() -> Self {
        DocumentProfile {
            paragraphs: (1, 4),
            lines: (1, 3),
            spans: default_spans(),
            words: default_words(),
            formula_density: 0.3,
            language: "EN".into(),
            domain: default_domain(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Lang {
    En,
    Ch,
    Mix,
}

impl DocumentProfile {
    fn validate(&self) -> Result<Lang, CorpusError> {
        if !(0.0..=1.0).contains(&self.formula_density) {
            return Err(CorpusError::InvalidDensity(self.formula_density));
        }
        for (name, (min, max)) in [
            ("paragraph", self.paragraphs),
            ("line", self.lines),
            ("span", self.spans),
            ("word", self.words),
        ] {
            if min == 0 || min > max {
                return Err(CorpusError::InvalidRange { name, min, max });
            }
        }
        match self.language.to_ascii_lowercase().as_str() {
            "en" => Ok(Lang::En),
            "ch" => Ok(Lang::Ch),
            "mix" => Ok(Lang::Mix),
            _ => Err(CorpusError::UnknownLanguage(self.language.clone())),
        }
    }
}

fn text_span(rng: &mut ChaCha8Rng, lang: Lang, words: (usize, usize)) -> String {
    let n = rng.gen_range(words.0..=words.1);
    let mut out = String::new();
    let mut prev_chinese = false;
    for i in 0..n {
        let chinese = match lang {
            Lang::En => false,
            Lang::Ch => true,
            Lang::Mix => rng.gen_bool(0.5),
        };
        let word = if chinese { CHINESE } else { ENGLISH }.choose(rng).expect("non-empty");
        if i > 0 && !(chinese && prev_chinese) {
            out.push(' ');
        }
        out.push_str(word);
        prev_chinese = chinese;
    }
    out
}

fn atom(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..3) {
        0 => LETTERS.choose(rng).expect("non-empty").to_string(),
        1 => rng.gen_range(0..10).to_string(),
        _ => GREEK.choose(rng).expect("non-empty").to_string(),
    }
}

fn expr(rng: &mut ChaCha8Rng, depth: u32) -> String {
    if depth == 0 {
        return atom(rng);
    }
    let d = depth - 1;
    match rng.gen_range(0..8) {
        0 => atom(rng),
        1 => format!("{}^{{{}}}", atom(rng), expr(rng, d)),
        2 => format!("{}_{{{}}}", atom(rng), expr(rng, d)),
        3 => format!(r"\frac{{{}}}{{{}}}", expr(rng, d), expr(rng, d)),
        4 => format!(r"\sum_{{i=1}}^{{n}} {}", expr(rng, d)),
        5 => format!(r"\left( {} \right)", expr(rng, d)),
        6 => format!(r"\sqrt{{{}}}", expr(rng, d)),
        _ => {
            let op = ["+", "-", "=", r"\cdot"].choose(rng).expect("non-empty");
            format!("{} {op} {}", expr(rng, d), expr(rng, d))
        }
    }
}

fn formula_span(rng: &mut ChaCha8Rng) -> String {
    format!("${}$", expr(rng, 2))
}

/// Generates one document. Identical `(seed, profile)` pairs give identical documents.
pub fn generate_document(seed: u64, profile: &DocumentProfile) -> Result<StructuredDocument, CorpusError> {
    let lang = profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let paragraphs = (0..rng.gen_range(profile.paragraphs.0..=profile.paragraphs.1))
        .map(|_| {
            (0..rng.gen_range(profile.lines.0..=profile.lines.1))
                .map(|_| {
                    (0..rng.gen_range(profile.spans.0..=profile.spans.1))
                        .map(|_| {
                            if rng.gen_bool(profile.formula_density) {
                                Span::formula(formula_span(&mut rng))
                            } else {
                                Span::text(text_span(&mut rng, lang, profile.words))
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(StructuredDocument {
        language: profile.language.clone(),
        domain: profile.domain.clone(),
        paragraphs,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleTags {
    pub modality: ContentModality,
    pub level: HierLevel,
    pub language: String,
    pub domain: String,
}

/// One training/evaluation sample. `label` is `hst_label` with the
/// supervision tokens stripped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub label: String,
    pub hst_label: String,
    pub tags: SampleTags,
}

fn content_modality(label: &str) -> ContentModality {
    let segments = segment_label(label).map(|s| s.segments).unwrap_or_default();
    let formula = segments.iter().filter(|s| s.modality == Modality::Formula).count();
    let text = segments
        .iter()
        .filter(|s| s.modality == Modality::Text && !crate::hst::decode_hst(&s.content).trim().is_empty())
        .count();
    match (text, formula) {
        (_, 0) => ContentModality::Text,
        (0, _) => ContentModality::Formula,
        _ => ContentModality::Mix,
    }
}

/// Generates `n_docs` documents and derives samples at every level.
pub fn generate_samples(
    seed: u64,
    n_docs: usize,
    profile: &DocumentProfile,
) -> Result<(Vec<StructuredDocument>, Vec<SampleRecord>), CorpusError> {
    let mut docs = Vec::with_capacity(n_docs);
    let mut samples = Vec::new();
    for d in 0..n_docs {
        let doc_seed = derive_seed(seed, d as u64);
        let doc = generate_document(doc_seed, profile)?;
        for level in HierLevel::ALL {
            let level_seed = derive_seed(doc_seed, level as u64 + 1);
            for (k, (hst_label, level)) in derive_levels(&doc, level, level_seed)?.into_iter().enumerate() {
                samples.push(SampleRecord {
                    id: format!("d{d:05}-{}-{k:03}", level.tag()),
                    label: strip_hst(&hst_label),
                    tags: SampleTags {
                        modality: content_modality(&hst_label),
                        level,
                        language: doc.language.clone(),
                        domain: doc.domain.clone(),
                    },
                    hst_label,
                });
            }
        }
        docs.push(doc);
    }
    Ok((docs, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hst::{encode_hst, SpanKind};

    fn profile(density: f64) -> DocumentProfile {
        DocumentProfile {
            formula_density: density,
            ..Default::default()
        }
    }

    fn kinds(doc: &StructuredDocument) -> Vec<SpanKind> {
        doc.paragraphs.iter().flatten().flatten().map(|s| s.kind).collect()
    }

    #[test]
    fn density_extremes() {
        for seed in 0..20 {
            let d0 = generate_document(seed, &profile(0.0)).unwrap();
            assert!(kinds(&d0).iter().all(|k| *k == SpanKind::Text));
            let d1 = generate_document(seed, &profile(1.0)).unwrap();
            assert!(kinds(&d1).iter().all(|k| *k == SpanKind::Formula));
        }
    }

    #[test]
    fn same_seed_same_document() {
        let a = generate_document(42, &profile(0.5)).unwrap();
        let b = generate_document(42, &profile(0.5)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_ne!(a, generate_document(43, &profile(0.5)).unwrap());
    }

    #[test]
    fn invalid_profiles() {
        assert!(matches!(
            generate_document(0, &profile(1.5)),
            Err(CorpusError::InvalidDensity(_))
        ));
        assert!(generate_document(0, &profile(f64::NAN)).is_err());
        let bad_range = DocumentProfile {
            lines: (3, 1),
            ..Default::default()
        };
        assert!(generate_document(0, &bad_range).is_err());
        let bad_lang = DocumentProfile {
            language: "FR".into(),
            ..Default::default()
        };
        assert!(generate_document(0, &bad_lang).is_err());
    }

    #[test]
    fn generated_documents_are_valid() {
        for lang in ["EN", "CH", "Mix"] {
            let p = DocumentProfile {
                language: lang.into(),
                formula_density: 0.4,
                ..Default::default()
            };
            for seed in 0..30 {
                let doc = generate_document(seed, &p).unwrap();
                encode_hst(&doc).unwrap();
            }
        }
    }

    #[test]
    fn samples_cover_levels_and_modalities() {
        let (docs, samples) = generate_samples(7, 10, &profile(0.4)).unwrap();
        assert_eq!(docs.len(), 10);
        for level in HierLevel::ALL {
            assert!(samples.iter().any(|s| s.tags.level == level), "{level}");
        }
        for m in [ContentModality::Text, ContentModality::Formula, ContentModality::Mix] {
            assert!(samples.iter().any(|s| s.tags.modality == m), "{m:?}");
        }
        let ids: std::collections::HashSet<_> = samples.iter().map(|s| &s.id).collect();
        assert_eq!(ids.len(), samples.len());
        assert!(samples.iter().all(|s| s.label == strip_hst(&s.hst_label)));
    }

    #[test]
    fn modality_of_labels() {
        assert_eq!(content_modality("plain"), ContentModality::Text);
        assert_eq!(content_modality("$x$<|ln|>$y$<|pn|>"), ContentModality::Formula);
        assert_eq!(content_modality("a $x$"), ContentModality::Mix);
    }
}

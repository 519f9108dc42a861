use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SampleRecord;
use crate::sdt::DecoupledVocabulary;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub kept: Vec<SampleRecord>,
    pub dropped: Vec<SampleRecord>,
    /// Dropped samples per `modality:<m>`, `level:<l>`, `language:<x>` and
    /// `domain:<d>` tag.
    pub dropped_by_tag: BTreeMap<String, usize>,
}

impl FilterOutcome {
    pub fn drop_rate(&self) -> f64 {
        let total = self.kept.len() + self.dropped.len();
        if total == 0 {
            0.0
        } else {
            self.dropped.len() as f64 / total as f64
        }
    }
}

/// Keeps samples whose `hst_label` encodes to at most `max_len` ids,
/// `<BOS>`/`<EOS>` included. Labels that cannot be encoded are dropped.
pub fn length_filter(vocab: &DecoupledVocabulary, samples: Vec<SampleRecord>, max_len: usize) -> FilterOutcome {
    length_filter_by(vocab, samples, max_len, |s| &s.hst_label)
}

/// [`length_filter`] measured on an arbitrary label field.
pub fn length_filter_by<F>(
    vocab: &DecoupledVocabulary,
    samples: Vec<SampleRecord>,
    max_len: usize,
    label: F,
) -> FilterOutcome
where
    F: Fn(&SampleRecord) -> &str,
{
    let mut out = FilterOutcome::default();
    for sample in samples {
        let fits = match vocab.encode(label(&sample)) {
            Ok(ids) => ids.len() <= max_len,
            Err(e) => {
                log::warn!("sample {} is not encodable: {e}", sample.id);
                false
            }
        };
        if fits {
            out.kept.push(sample);
            continue;
        }
        let tags = &sample.tags;
        let modality = serde_json::to_value(tags.modality).ok();
        let modality = modality.as_ref().and_then(|v| v.as_str()).unwrap_or("?");
        for key in [
            format!("modality:{modality}"),
            format!("level:{}", tags.level.tag()),
            format!("language:{}", tags.language),
            format!("domain:{}", tags.domain),
        ] {
            *out.dropped_by_tag.entry(key).or_default() += 1;
        }
        out.dropped.push(sample);
    }
    out
}

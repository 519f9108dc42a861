use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bytes::{alphabet, symbols_to_bytes};
use super::segment::segment_label;
use super::{
    BpeModel, Modality, Result, TokenEntry, TokenId, TokenizerError, LINE_BREAK, PARAGRAPH_END,
    RESERVED_SPECIALS,
};

/// Text vocabulary, reserved specials and non-duplicate formula tokens in one id space.
///
/// Ids `0..text_len` are the text model's own ids. Specials follow, then
/// formula-origin tokens in formula-model id order. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoupledVocabulary {
    text_model: BpeModel,
    formula_model: BpeModel,
    merged: Vec<TokenEntry>,
    excluded: Vec<String>,
    lookup: HashMap<String, TokenId>,
    formula_surfaces: HashMap<Vec<u8>, TokenId>,
    longest_formula: usize,
    specials: [TokenId; 5],
}

/// A surface shared by both single-modality models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapEntry {
    pub surface: String,
    pub text_id: TokenId,
    pub formula_id: TokenId,
    pub text_frequency: u64,
    pub formula_frequency: u64,
}

fn surface_bytes(surface: &str) -> Vec<u8> {
    symbols_to_bytes(surface).unwrap_or_else(|| surface.as_bytes().to_vec())
}

/// Builds the decoupled vocabulary from independently trained models.
pub fn merge_decoupled(text_model: &BpeModel, formula_model: &BpeModel) -> DecoupledVocabulary {
    let mut merged: Vec<TokenEntry> = text_model
        .vocab()
        .iter()
        .map(|t| TokenEntry {
            modality: Modality::Text,
            ..t.clone()
        })
        .collect();
    let mut lookup: HashMap<String, TokenId> =
        merged.iter().map(|t| (t.surface.clone(), t.id)).collect();

    let mut specials = [0; 5];
    for (slot, special) in specials.iter_mut().zip(RESERVED_SPECIALS) {
        *slot = match lookup.get(special) {
            Some(&id) => {
                merged[id as usize].modality = Modality::Special;
                id
            }
            None => {
                let id = merged.len() as TokenId;
                merged.push(TokenEntry {
                    id,
                    surface: special.to_string(),
                    modality: Modality::Special,
                });
                lookup.insert(special.to_string(), id);
                id
            }
        };
    }

    let mut excluded = Vec::new();
    let mut formula_surfaces = HashMap::new();
    for entry in formula_model.vocab() {
        if text_model.contains(&entry.surface) {
            excluded.push(entry.surface.clone());
            continue;
        }
        if lookup.contains_key(&entry.surface) {
            // Collides with a reserved special; the special already covers it.
            continue;
        }
        let id = merged.len() as TokenId;
        merged.push(TokenEntry {
            id,
            surface: entry.surface.clone(),
            modality: Modality::Formula,
        });
        lookup.insert(entry.surface.clone(), id);
        formula_surfaces.insert(surface_bytes(&entry.surface), id);
    }
    let longest_formula = formula_surfaces.keys().map(Vec::len).max().unwrap_or(0);

    DecoupledVocabulary {
        text_model: text_model.clone(),
        formula_model: formula_model.clone(),
        merged,
        excluded,
        lookup,
        formula_surfaces,
        longest_formula,
        specials,
    }
}

/// Surfaces present in both models, in formula-model id order.
pub fn modality_overlap_report(text_model: &BpeModel, formula_model: &BpeModel) -> Vec<OverlapEntry> {
    formula_model
        .vocab()
        .iter()
        .filter_map(|f| {
            let text_id = text_model.id_of(&f.surface)?;
            Some(OverlapEntry {
                surface: f.surface.clone(),
                text_id,
                formula_id: f.id,
                text_frequency: text_model.frequency(text_id),
                formula_frequency: formula_model.frequency(f.id),
            })
        })
        .collect()
}

impl DecoupledVocabulary {
    /// A single-tokenizer vocabulary: `model` handles every modality and no
    /// formula tokens are added. This is the coupled baseline.
    pub fn coupled(model: &BpeModel) -> Self {
        let empty = BpeModel::from_parts(Modality::Formula, vec![], vec![], vec![])
            .expect("empty model is valid");
        merge_decoupled(model, &empty)
    }

    pub fn len(&self) -> usize {
        self.merged.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merged.is_empty()
    }

    pub fn tokens(&self) -> &[TokenEntry] {
        &self.merged
    }

    pub fn entry(&self, id: TokenId) -> Option<&TokenEntry> {
        self.merged.get(id as usize)
    }

    pub fn id_of(&self, surface: &str) -> Option<TokenId> {
        self.lookup.get(surface).copied()
    }

    pub fn excluded(&self) -> &[String] {
        &self.excluded
    }

    pub fn text_model(&self) -> &BpeModel {
        &self.text_model
    }

    pub fn formula_model(&self) -> &BpeModel {
        &self.formula_model
    }

    pub fn bos(&self) -> TokenId {
        self.specials[0]
    }

    pub fn eos(&self) -> TokenId {
        self.specials[1]
    }

    pub fn line_break(&self) -> TokenId {
        self.specials[2]
    }

    pub fn paragraph_end(&self) -> TokenId {
        self.specials[3]
    }

    pub fn pad(&self) -> TokenId {
        self.specials[4]
    }

    pub fn modality_of(&self, id: TokenId) -> Option<Modality> {
        self.entry(id).map(|e| e.modality)
    }

    /// Encodes a label into `<BOS> ... <EOS>`.
    ///
    /// Text segments use the text merges. Formula segments take the longest
    /// formula-origin surface at each char boundary and fall back to the text
    /// model for whatever is left. `<|ln|>` and `<|pn|>` are always single ids.
    pub fn encode(&self, label: &str) -> Result<Vec<TokenId>> {
        let segmented = segment_label(label)?;
        let mut out = vec![self.bos()];
        for segment in &segmented.segments {
            let mut rest = segment.content.as_str();
            while !rest.is_empty() {
                let next = [(LINE_BREAK, self.line_break()), (PARAGRAPH_END, self.paragraph_end())]
                    .into_iter()
                    .filter_map(|(s, id)| rest.find(s).map(|p| (p, s.len(), id)))
                    .min();
                let (piece, special) = match next {
                    Some((pos, len, id)) => {
                        let piece = &rest[..pos];
                        rest = &rest[pos + len..];
                        (piece, Some(id))
                    }
                    None => (std::mem::take(&mut rest), None),
                };
                match segment.modality {
                    Modality::Formula => self.encode_formula(piece, &mut out)?,
                    _ => out.extend(self.text_model.encode_str(piece)?),
                }
                out.extend(special);
            }
        }
        out.push(self.eos());
        Ok(out)
    }

    fn encode_formula(&self, formula: &str, out: &mut Vec<TokenId>) -> Result<()> {
        let bytes = formula.as_bytes();
        let mut residue_start = 0;
        let mut i = 0;
        'scan: while i < bytes.len() {
            let max = self.longest_formula.min(bytes.len() - i);
            for len in (1..=max).rev() {
                if !formula.is_char_boundary(i + len) {
                    continue;
                }
                if let Some(&id) = self.formula_surfaces.get(&bytes[i..i + len]) {
                    out.extend(self.text_model.encode_str(&formula[residue_start..i])?);
                    out.push(id);
                    i += len;
                    residue_start = i;
                    continue 'scan;
                }
            }
            i += formula[i..].chars().next().map_or(1, char::len_utf8);
        }
        out.extend(self.text_model.encode_str(&formula[residue_start..])?);
        Ok(())
    }

    /// Concatenates surfaces, dropping `<BOS>`, `<EOS>` and `<PAD>`.
    /// Line and paragraph tokens are kept literally.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        let mut bytes = Vec::new();
        let dropped = [self.bos(), self.eos(), self.pad()];
        for (position, &id) in ids.iter().enumerate() {
            let entry = self.entry(id).ok_or(TokenizerError::IdOutOfRange {
                position,
                id,
                size: self.len(),
            })?;
            if dropped.contains(&id) {
                continue;
            }
            match entry.modality {
                Modality::Special => bytes.extend_from_slice(entry.surface.as_bytes()),
                _ => bytes.extend(surface_bytes(&entry.surface)),
            }
        }
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    pub fn to_file(&self) -> VocabularyFile {
        VocabularyFile {
            tokens: self.merged.clone(),
            merges: self.text_model.merges().to_vec(),
            excluded: self.excluded.clone(),
            text_model: Some(self.text_model.clone()),
            formula_model: Some(self.formula_model.clone()),
            seed: None,
        }
    }

    pub fn from_file(file: VocabularyFile) -> Result<Self> {
        let (text_model, formula_model) = match (file.text_model, file.formula_model) {
            (Some(t), Some(f)) => (t, f),
            _ => reconstruct_models(&file.tokens, &file.merges, &file.excluded)?,
        };
        let vocab = merge_decoupled(&text_model, &formula_model);
        if vocab.merged != file.tokens || vocab.excluded != file.excluded {
            return Err(TokenizerError::InvalidModel(
                "token table does not match the embedded models".into(),
            ));
        }
        Ok(vocab)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: VocabularyFile = serde_json::from_slice(&std::fs::read(path)?)?;
        Self::from_file(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }
}

/// Rebuilds both models from the bare token table when the file carries no
/// embedded models. Formula frequencies are not recoverable and read as zero.
fn reconstruct_models(
    tokens: &[TokenEntry],
    merges: &[(String, String)],
    excluded: &[String],
) -> Result<(BpeModel, BpeModel)> {
    let text: Vec<String> = tokens
        .iter()
        .take_while(|t| t.modality == Modality::Text)
        .map(|t| t.surface.clone())
        .collect();
    let base = alphabet();
    let text_alphabet = if base.iter().all(|s| text.contains(s)) {
        base
    } else {
        vec![]
    };
    let text_model = BpeModel::from_parts(Modality::Text, text_alphabet, merges.to_vec(), text)?;
    let formula: Vec<String> = excluded
        .iter()
        .cloned()
        .chain(
            tokens
                .iter()
                .filter(|t| t.modality == Modality::Formula)
                .map(|t| t.surface.clone()),
        )
        .collect();
    let formula_model = BpeModel::from_parts(Modality::Formula, vec![], vec![], formula)?;
    Ok((text_model, formula_model))
}

/// On-disk vocabulary: the merged token table, text merges and dropped
/// formula duplicates, plus the two source models when available.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabularyFile {
    pub tokens: Vec<TokenEntry>,
    pub merges: Vec<(String, String)>,
    pub excluded: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_model: Option<BpeModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formula_model: Option<BpeModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

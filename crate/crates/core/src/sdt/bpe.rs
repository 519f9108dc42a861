use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::bytes::{alphabet, byte_symbol};
use super::pretokenize::pretokenize;
use super::{Modality, Result, TokenEntry, TokenId, TokenizerError, RESERVED_SPECIALS};

/// Pairs must be seen at least this often to be merged.
const MIN_PAIR_FREQUENCY: u64 = 2;

/// A single-modality byte-level BPE model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct BpeModel {
    modality: Modality,
    base_alphabet: Vec<String>,
    merges: Vec<(String, String)>,
    vocab: Vec<TokenEntry>,
    frequencies: Vec<u64>,
    lookup: HashMap<String, TokenId>,
    ranks: HashMap<(TokenId, TokenId), (usize, TokenId)>,
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    modality: Modality,
    base_alphabet: Vec<String>,
    merges: Vec<(String, String)>,
    tokens: Vec<TokenEntry>,
    #[serde(default)]
    frequencies: Vec<u64>,
}

impl TryFrom<RawModel> for BpeModel {
    type Error = TokenizerError;

    fn try_from(raw: RawModel) -> Result<Self> {
        for (i, t) in raw.tokens.iter().enumerate() {
            if t.id as usize != i {
                return Err(TokenizerError::InvalidModel(format!(
                    "token `{}` has id {} at position {i}",
                    t.surface, t.id
                )));
            }
        }
        let surfaces = raw.tokens.into_iter().map(|t| t.surface).collect();
        let mut model = BpeModel::from_parts(raw.modality, raw.base_alphabet, raw.merges, surfaces)?;
        if !raw.frequencies.is_empty() {
            if raw.frequencies.len() != model.vocab.len() {
                return Err(TokenizerError::InvalidModel(
                    "frequency table length differs from vocabulary".into(),
                ));
            }
            model.frequencies = raw.frequencies;
        }
        Ok(model)
    }
}

impl From<BpeModel> for RawModel {
    fn from(m: BpeModel) -> Self {
        RawModel {
            modality: m.modality,
            base_alphabet: m.base_alphabet,
            merges: m.merges,
            tokens: m.vocab,
            frequencies: m.frequencies,
        }
    }
}

impl BpeModel {
    /// Assembles a model from explicit parts. Ids follow the order of `vocab`.
    pub fn from_parts(
        modality: Modality,
        base_alphabet: Vec<String>,
        merges: Vec<(String, String)>,
        vocab: Vec<String>,
    ) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(vocab.len());
        let mut entries = Vec::with_capacity(vocab.len());
        for (i, surface) in vocab.into_iter().enumerate() {
            if lookup.insert(surface.clone(), i as TokenId).is_some() {
                return Err(TokenizerError::InvalidModel(format!(
                    "duplicate surface `{surface}`"
                )));
            }
            entries.push(TokenEntry {
                id: i as TokenId,
                surface,
                modality,
            });
        }
        if let Some(missing) = base_alphabet.iter().find(|s| !lookup.contains_key(*s)) {
            return Err(TokenizerError::InvalidModel(format!(
                "alphabet symbol `{missing}` is not in the vocabulary"
            )));
        }
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, (l, r)) in merges.iter().enumerate() {
            let id = |s: &str| {
                lookup.get(s).copied().ok_or_else(|| {
                    TokenizerError::InvalidModel(format!("merge refers to unknown surface `{s}`"))
                })
            };
            let (li, ri, out) = (id(l)?, id(r)?, id(&format!("{l}{r}"))?);
            ranks.entry((li, ri)).or_insert((rank, out));
        }
        let frequencies = vec![0; entries.len()];
        Ok(BpeModel {
            modality,
            base_alphabet,
            merges,
            vocab: entries,
            frequencies,
            lookup,
            ranks,
        })
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn base_alphabet(&self) -> &[String] {
        &self.base_alphabet
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn vocab(&self) -> &[TokenEntry] {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    /// Training-corpus frequency of a token: byte counts for the alphabet,
    /// pair counts at merge time for learned tokens, zero for hand-built entries.
    pub fn frequency(&self, id: TokenId) -> u64 {
        self.frequencies.get(id as usize).copied().unwrap_or(0)
    }

    pub fn id_of(&self, surface: &str) -> Option<TokenId> {
        self.lookup.get(surface).copied()
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.lookup.contains_key(surface)
    }

    /// Encodes one pre-tokenized chunk of raw bytes into local ids.
    pub(crate) fn encode_chunk(&self, chunk: &[u8], out: &mut Vec<TokenId>) -> Result<()> {
        let mut symbols = Vec::with_capacity(chunk.len());
        for &b in chunk {
            let mut buf = [0u8; 4];
            let s = byte_symbol(b).encode_utf8(&mut buf);
            symbols.push(self.id_of(s).ok_or(TokenizerError::Unrepresentable(b))?);
        }
        self.apply_merges(&mut symbols);
        out.extend(symbols);
        Ok(())
    }

    /// Encodes arbitrary text with this model's pre-tokenizer and merges.
    pub fn encode_str(&self, text: &str) -> Result<Vec<TokenId>> {
        let mut out = Vec::new();
        for chunk in pretokenize(text, self.modality) {
            self.encode_chunk(chunk.as_bytes(), &mut out)?;
        }
        Ok(out)
    }

    fn apply_merges(&self, symbols: &mut Vec<TokenId>) {
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0], w[1])).map(|&(rank, _)| (rank, (w[0], w[1]))))
                .min();
            let Some((_, pair)) = best else { break };
            merge_pair(symbols, pair, self.ranks[&pair].1);
        }
    }
}

fn merge_pair(symbols: &mut Vec<TokenId>, pair: (TokenId, TokenId), merged: TokenId) {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && (symbols[i], symbols[i + 1]) == pair {
            out.push(merged);
            i += 2;
        } else {
            out.push(symbols[i]);
            i += 1;
        }
    }
    *symbols = out;
}

#[derive(PartialEq, Eq)]
struct Candidate {
    count: u64,
    concat: String,
    left: String,
    pair: (TokenId, TokenId),
}

impl Ord for Candidate {
    // Greater is better: higher count, then smaller concatenated surface.
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| other.concat.cmp(&self.concat))
            .then_with(|| other.left.cmp(&self.left))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Word {
    symbols: Vec<TokenId>,
    count: u64,
}

/// Trains a byte-level BPE model.
///
/// The alphabet is all 256 byte symbols. Reserved special strings are cut out
/// of the corpus before pre-tokenization. Pairs are chosen by highest
/// frequency, then by the lexicographically smallest concatenated surface,
/// and training stops at `target_vocab_size` entries or when no pair occurs
/// at least twice.
pub fn train_bpe<I, S>(corpus: I, target_vocab_size: usize, modality: Modality) -> Result<BpeModel>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if modality == Modality::Special {
        return Err(TokenizerError::UntrainableModality(modality));
    }
    let mut chunk_counts: HashMap<String, u64> = HashMap::new();
    let mut seen_any = false;
    for line in corpus {
        seen_any = true;
        for piece in split_reserved(line.as_ref()) {
            for chunk in pretokenize(piece, modality) {
                *chunk_counts.entry(chunk.to_owned()).or_default() += 1;
            }
        }
    }
    if !seen_any {
        return Err(TokenizerError::EmptyCorpus);
    }
    let base = alphabet();
    if target_vocab_size < base.len() {
        return Err(TokenizerError::VocabTooSmall {
            target: target_vocab_size,
            alphabet: base.len(),
        });
    }

    let mut chunks: Vec<(String, u64)> = chunk_counts.into_iter().collect();
    chunks.sort_unstable();
    let mut words: Vec<Word> = chunks
        .into_iter()
        .map(|(chunk, count)| Word {
            symbols: chunk.bytes().map(TokenId::from).collect(),
            count,
        })
        .collect();

    let mut surfaces = base.clone();
    let mut lookup: HashMap<String, TokenId> = surfaces
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i as TokenId))
        .collect();
    let mut frequencies = vec![0u64; surfaces.len()];
    let mut pair_counts: HashMap<(TokenId, TokenId), u64> = HashMap::new();
    let mut locations: HashMap<(TokenId, TokenId), HashSet<usize>> = HashMap::new();
    for (w, word) in words.iter().enumerate() {
        for &s in &word.symbols {
            frequencies[s as usize] += word.count;
        }
        for pair in word.symbols.windows(2) {
            let pair = (pair[0], pair[1]);
            *pair_counts.entry(pair).or_default() += word.count;
            locations.entry(pair).or_default().insert(w);
        }
    }

    let candidate = |pair: (TokenId, TokenId), count: u64, surfaces: &[String]| Candidate {
        count,
        concat: format!("{}{}", surfaces[pair.0 as usize], surfaces[pair.1 as usize]),
        left: surfaces[pair.0 as usize].clone(),
        pair,
    };
    let mut heap: BinaryHeap<Candidate> = pair_counts
        .iter()
        .map(|(&pair, &count)| candidate(pair, count, &surfaces))
        .collect();

    let mut merges = Vec::new();
    while surfaces.len() < target_vocab_size {
        let Some(top) = heap.pop() else { break };
        if pair_counts.get(&top.pair).copied() != Some(top.count) {
            continue;
        }
        if top.count < MIN_PAIR_FREQUENCY {
            break;
        }
        let merged = match lookup.get(&top.concat) {
            Some(&id) => id,
            None => {
                let id = surfaces.len() as TokenId;
                surfaces.push(top.concat.clone());
                lookup.insert(top.concat.clone(), id);
                frequencies.push(top.count);
                id
            }
        };
        merges.push((
            surfaces[top.pair.0 as usize].clone(),
            surfaces[top.pair.1 as usize].clone(),
        ));

        let mut affected: Vec<usize> = locations
            .remove(&top.pair)
            .map(|s| s.into_iter().collect())
            .unwrap_or_default();
        affected.sort_unstable();
        let mut changed: HashSet<(TokenId, TokenId)> = HashSet::new();
        for w in affected {
            let word = &mut words[w];
            if !word.symbols.windows(2).any(|p| (p[0], p[1]) == top.pair) {
                continue;
            }
            for p in word.symbols.windows(2) {
                let p = (p[0], p[1]);
                if let Some(c) = pair_counts.get_mut(&p) {
                    *c -= word.count;
                }
                changed.insert(p);
            }
            merge_pair(&mut word.symbols, top.pair, merged);
            for p in word.symbols.windows(2) {
                let p = (p[0], p[1]);
                *pair_counts.entry(p).or_default() += word.count;
                locations.entry(p).or_default().insert(w);
                changed.insert(p);
            }
        }
        let mut changed: Vec<_> = changed.into_iter().collect();
        changed.sort_unstable();
        for p in changed {
            match pair_counts.get(&p).copied() {
                Some(0) | None => {
                    pair_counts.remove(&p);
                }
                Some(count) => heap.push(candidate(p, count, &surfaces)),
            }
        }
    }

    let mut model = BpeModel::from_parts(modality, base, merges, surfaces)?;
    model.frequencies = frequencies;
    Ok(model)
}

/// Splits `line` around reserved special strings, dropping them.
pub(crate) fn split_reserved(line: &str) -> Vec<&str> {
    let mut pieces = Vec::new();
    let mut rest = line;
    while let Some((pos, special)) = RESERVED_SPECIALS
        .iter()
        .filter_map(|s| rest.find(s).map(|p| (p, *s)))
        .min()
    {
        if pos > 0 {
            pieces.push(&rest[..pos]);
        }
        rest = &rest[pos + special.len()..];
    }
    if !rest.is_empty() {
        pieces.push(rest);
    }
    pieces
}

//! Shape and protocol contracts of the recognizer that need no learned weights.
//!
//! [`fit_geometry`] sizes an input image for the encoder. [`greedy_decode`]
//! runs autoregressive argmax decoding against any [`NextTokenScorer`], and
//! [`sequence_loss`] is the summed token cross-entropy. The n-gram and
//! reference scorers are small deterministic stand-ins for a trained model.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sdt::{DecoupledVocabulary, TokenId, TokenizerError};

pub const WIDTH_CAP: u32 = 960;
pub const HEIGHT_CAP: u32 = 1408;
/// Encoder downsampling stride.
pub const PATCH: u32 = 32;
pub const FEATURE_DIM: u32 = 768;
/// Decoding budget, delimiters included.
pub const MAX_TOKENS: usize = 1024;

const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("image dimensions must be positive, got {height}x{width}")]
    EmptyImage { height: u32, width: u32 },
    #[error("scorer output at step {step}: {reason}")]
    BadDistribution { step: usize, reason: String },
    #[error("{probabilities} probability vectors for {targets} targets")]
    LengthMismatch { probabilities: usize, targets: usize },
    #[error("target {target} at position {position} is outside a vector of length {len}")]
    TargetOutOfRange {
        position: usize,
        target: TokenId,
        len: usize,
    },
    #[error("max_len must be at least 1")]
    ZeroBudget,
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

/// Sizes of one input image through resize, padding and patching.
/// All pairs are (height, width).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub input: (u32, u32),
    pub scale: f64,
    pub scaled: (u32, u32),
    pub padded: (u32, u32),
    pub grid: (u32, u32),
    pub visual_tokens: u32,
    pub feature_dim: u32,
}

/// Keeps the aspect ratio, only ever shrinks to fit 1408 high by 960 wide,
/// then pads bottom/right to multiples of 32.
pub fn fit_geometry(height: u32, width: u32) -> Result<GeometrySpec, DecodeError> {
    if height == 0 || width == 0 {
        return Err(DecodeError::EmptyImage { height, width });
    }
    let scale = (f64::from(WIDTH_CAP) / f64::from(width))
        .min(f64::from(HEIGHT_CAP) / f64::from(height))
        .min(1.0);
    let resize = |v: u32, cap: u32| ((scale * f64::from(v)).round() as u32).clamp(1, cap.max(1));
    let scaled = (resize(height, HEIGHT_CAP), resize(width, WIDTH_CAP));
    let pad = |v: u32| v.div_ceil(PATCH) * PATCH;
    let padded = (pad(scaled.0), pad(scaled.1));
    let grid = (padded.0 / PATCH, padded.1 / PATCH);
    Ok(GeometrySpec {
        input: (height, width),
        scale,
        scaled,
        padded,
        grid,
        visual_tokens: grid.0 * grid.1,
        feature_dim: FEATURE_DIM,
    })
}

/// Conditioning shared by every step of one decode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeContext {
    /// Number of visual tokens the decoder attends to.
    pub visual_tokens: usize,
}

/// Next-token distribution given the decoded prefix. Must return a vector of
/// vocabulary length summing to one, and be pure for the duration of a decode.
pub trait NextTokenScorer {
    fn next_token_probs(&self, prefix: &[TokenId], context: &DecodeContext) -> Vec<f64>;
}

fn check_distribution(probs: &[f64], vocab_size: usize, step: usize) -> Result<(), DecodeError> {
    let bad = |reason: String| Err(DecodeError::BadDistribution { step, reason });
    if probs.len() != vocab_size {
        return bad(format!("length {} but vocabulary has {vocab_size} entries", probs.len()));
    }
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return bad(format!("invalid probability {p}"));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return bad(format!("probabilities sum to {sum}"));
    }
    Ok(())
}

/// Argmax decoding from `<BOS>`. Ties go to the lowest id. Stops after
/// `<EOS>` or once the sequence holds `max_len` ids.
pub fn greedy_decode(
    scorer: &dyn NextTokenScorer,
    vocab: &DecoupledVocabulary,
    context: &DecodeContext,
    max_len: usize,
) -> Result<Vec<TokenId>, DecodeError> {
    if max_len == 0 {
        return Err(DecodeError::ZeroBudget);
    }
    let mut seq = vec![vocab.bos()];
    while seq.len() < max_len {
        let step = seq.len() - 1;
        let probs = scorer.next_token_probs(&seq, context);
        check_distribution(&probs, vocab.len(), step)?;
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = i;
            }
        }
        let next = best as TokenId;
        seq.push(next);
        if next == vocab.eos() {
            break;
        }
    }
    Ok(seq)
}

/// `-Σ ln p_t[y_t]`. A zero probability on a target gives `f64::INFINITY`.
pub fn sequence_loss(probabilities: &[Vec<f64>], targets: &[TokenId]) -> Result<f64, DecodeError> {
    if probabilities.len() != targets.len() {
        return Err(DecodeError::LengthMismatch {
            probabilities: probabilities.len(),
            targets: targets.len(),
        });
    }
    let mut loss = 0.0;
    for (position, (probs, &target)) in probabilities.iter().zip(targets).enumerate() {
        let p = *probs.get(target as usize).ok_or(DecodeError::TargetOutOfRange {
            position,
            target,
            len: probs.len(),
        })?;
        if p <= 0.0 {
            return Ok(f64::INFINITY);
        }
        loss -= p.ln();
    }
    Ok(loss)
}

/// Teacher-forced loss of `sequence` (which starts with `<BOS>`) under `scorer`.
pub fn scored_loss(
    scorer: &dyn NextTokenScorer,
    sequence: &[TokenId],
    context: &DecodeContext,
) -> Result<f64, DecodeError> {
    let probs: Vec<Vec<f64>> = (1..sequence.len())
        .map(|t| scorer.next_token_probs(&sequence[..t], context))
        .collect();
    sequence_loss(&probs, &sequence[1..])
}

fn one_hot(size: usize, hot: TokenId) -> Vec<f64> {
    let mut v = vec![0.0; size];
    v[hot as usize] = 1.0;
    v
}

/// Count-based n-gram scorer over token ids.
///
/// Contexts are the last `order - 1` ids of the prefix (fewer near the
/// start). With `smoothing = ε`, each distribution is mixed with ε of
/// uniform mass. Unseen contexts put all non-smoothed mass on `<EOS>`.
#[derive(Debug, Clone)]
pub struct NgramScorer {
    order: usize,
    smoothing: f64,
    vocab_size: usize,
    eos: TokenId,
    table: HashMap<Vec<TokenId>, Vec<(TokenId, u64)>>,
}

/// JSON form of an n-gram scorer: training texts are encoded with the vocabulary at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramSpec {
    pub order: usize,
    #[serde(default)]
    pub smoothing: f64,
    pub texts: Vec<String>,
}

impl NgramScorer {
    pub fn train(
        order: usize,
        smoothing: f64,
        sequences: &[Vec<TokenId>],
        vocab: &DecoupledVocabulary,
    ) -> Self {
        let order = order.max(1);
        let mut counts: HashMap<Vec<TokenId>, HashMap<TokenId, u64>> = HashMap::new();
        for seq in sequences {
            for t in 1..seq.len() {
                let context = seq[t.saturating_sub(order - 1)..t].to_vec();
                *counts.entry(context).or_default().entry(seq[t]).or_default() += 1;
            }
        }
        let table = counts
            .into_iter()
            .map(|(context, next)| {
                let mut next: Vec<(TokenId, u64)> = next.into_iter().collect();
                next.sort_unstable();
                (context, next)
            })
            .collect();
        NgramScorer {
            order,
            smoothing: smoothing.clamp(0.0, 1.0),
            vocab_size: vocab.len(),
            eos: vocab.eos(),
            table,
        }
    }

    pub fn from_spec(spec: &NgramSpec, vocab: &DecoupledVocabulary) -> Result<Self, DecodeError> {
        let sequences = spec
            .texts
            .iter()
            .map(|t| vocab.encode(t))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::train(spec.order, spec.smoothing, &sequences, vocab))
    }
}

impl NextTokenScorer for NgramScorer {
    fn next_token_probs(&self, prefix: &[TokenId], _context: &DecodeContext) -> Vec<f64> {
        let context = &prefix[prefix.len().saturating_sub(self.order - 1)..];
        let mut probs = match self.table.get(context) {
            Some(next) => {
                let total: u64 = next.iter().map(|(_, c)| c).sum();
                let mut v = vec![0.0; self.vocab_size];
                for &(id, c) in next {
                    v[id as usize] = c as f64 / total as f64;
                }
                v
            }
            None => one_hot(self.vocab_size, self.eos),
        };
        if self.smoothing > 0.0 {
            let uniform = self.smoothing / self.vocab_size as f64;
            for p in &mut probs {
                *p = *p * (1.0 - self.smoothing) + uniform;
            }
        }
        probs
    }
}

/// Puts all mass on the next id of a known target sequence (ignoring the
/// prefix contents), then on `<EOS>`. Greedy decoding with it reproduces
/// the target exactly, which makes it the identity predictor.
#[derive(Debug, Clone)]
pub struct ReferenceScorer {
    target: Vec<TokenId>,
    vocab_size: usize,
    eos: TokenId,
}

impl ReferenceScorer {
    /// `target` is a full encoded sequence beginning with `<BOS>`.
    pub fn new(target: Vec<TokenId>, vocab: &DecoupledVocabulary) -> Self {
        ReferenceScorer {
            target,
            vocab_size: vocab.len(),
            eos: vocab.eos(),
        }
    }
}

impl NextTokenScorer for ReferenceScorer {
    fn next_token_probs(&self, prefix: &[TokenId], _context: &DecodeContext) -> Vec<f64> {
        let next = self.target.get(prefix.len()).copied().unwrap_or(self.eos);
        one_hot(self.vocab_size, next)
    }
}

/// Always predicts the same id.
#[derive(Debug, Clone)]
pub struct ConstantScorer {
    pub token: TokenId,
    pub vocab_size: usize,
}

impl NextTokenScorer for ConstantScorer {
    fn next_token_probs(&self, _prefix: &[TokenId], _context: &DecodeContext) -> Vec<f64> {
        one_hot(self.vocab_size, self.token)
    }
}

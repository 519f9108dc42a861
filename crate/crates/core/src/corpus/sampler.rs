use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, CorpusError};

/// Tags attached to every sample drawn from a source.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceTags {
    pub modality: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}

/// One manifest entry. Exactly one of `pool_size` / `pool_file` must be set;
/// a pool file holds one sample id per non-empty line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_size: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_file: Option<PathBuf>,
    pub epoch_target: u64,
    #[serde(default)]
    pub tags: SourceTags,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pool {
    Size(u64),
    Ids(Vec<String>),
}

impl Pool {
    pub fn len(&self) -> u64 {
        match self {
            Pool::Size(n) => *n,
            Pool::Ids(ids) => ids.len() as u64,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSource {
    pub name: String,
    pub pool: Pool,
    pub epoch_target: u64,
    pub tags: SourceTags,
}

fn scale_count(n: u64, scale: u64) -> u64 {
    (n + scale / 2) / scale
}

impl DataSource {
    pub fn new(name: impl Into<String>, pool_size: u64, epoch_target: u64, tags: SourceTags) -> Self {
        DataSource {
            name: name.into(),
            pool: Pool::Size(pool_size),
            epoch_target,
            tags,
        }
    }

    /// Resolves a manifest entry. Counts (but not explicit id lists) are
    /// divided by `scale`, rounding half up; relative pool files resolve
    /// against `base_dir`.
    pub fn from_spec(spec: &SourceSpec, base_dir: &Path, scale: u64) -> Result<Self, CorpusError> {
        let invalid = |reason: String| CorpusError::InvalidSource {
            name: spec.name.clone(),
            reason,
        };
        if scale == 0 {
            return Err(invalid("scale must be positive".into()));
        }
        let pool = match (&spec.pool_size, &spec.pool_file) {
            (Some(n), None) => Pool::Size(scale_count(*n, scale)),
            (None, Some(file)) => {
                let path = base_dir.join(file);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| invalid(format!("cannot read pool file {}: {e}", path.display())))?;
                Pool::Ids(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
            }
            _ => return Err(invalid("exactly one of pool_size and pool_file must be given".into())),
        };
        let source = DataSource {
            name: spec.name.clone(),
            pool,
            epoch_target: scale_count(spec.epoch_target, scale),
            tags: spec.tags.clone(),
        };
        source.validate()?;
        Ok(source)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |reason: &str| CorpusError::InvalidSource {
            name: self.name.clone(),
            reason: reason.into(),
        };
        if self.pool.is_empty() {
            return Err(invalid("pool is empty"));
        }
        if self.epoch_target == 0 {
            return Err(invalid("epoch target is zero"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    /// Position in the source pool.
    pub index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Identity,
    Subsample,
    Resample,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourcePlan {
    pub name: String,
    pub pool_size: u64,
    pub epoch_target: u64,
    pub mode: SamplingMode,
    pub tags: SourceTags,
    /// Sorted by pool index; every count is at least 1.
    pub entries: Vec<PlanEntry>,
}

impl SourcePlan {
    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.count).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochPlan {
    pub seed: u64,
    pub sources: Vec<SourcePlan>,
}

impl EpochPlan {
    pub fn total(&self) -> u64 {
        self.sources.iter().map(SourcePlan::total).sum()
    }
}

/// Realizes every source's epoch target. Small targets sub-sample the pool
/// without replacement; large ones repeat every item `target / pool` times
/// and add `target % pool` distinct extra items. Each source draws from its
/// own seed stream, so plans do not depend on source order.
pub fn plan_epoch(sources: &[DataSource], seed: u64) -> Result<EpochPlan, CorpusError> {
    let mut plans = Vec::with_capacity(sources.len());
    for source in sources {
        source.validate()?;
        plans.push(plan_source(source, seed));
    }
    Ok(EpochPlan { seed, sources: plans })
}

fn stream_of(name: &str) -> u64 {
    // FNV-1a: a stable per-name stream id.
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

fn plan_source(source: &DataSource, seed: u64) -> SourcePlan {
    let pool = source.pool.len();
    let target = source.epoch_target;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream_of(&source.name)));
    let (mode, base, extra) = match target.cmp(&pool) {
        std::cmp::Ordering::Equal => (SamplingMode::Identity, 1, 0),
        std::cmp::Ordering::Less => (SamplingMode::Subsample, 0, target),
        std::cmp::Ordering::Greater => (SamplingMode::Resample, target / pool, target % pool),
    };
    let mut extra_idx: Vec<u64> = if extra > 0 {
        index::sample(&mut rng, pool as usize, extra as usize).into_iter().map(|i| i as u64).collect()
    } else {
        Vec::new()
    };
    extra_idx.sort_unstable();
    log::debug!("source {}: {:?}, pool {pool}, target {target}", source.name, mode);

    let id_of = |i: u64| match &source.pool {
        Pool::Size(_) => None,
        Pool::Ids(ids) => Some(ids[i as usize].clone()),
    };
    let entries = if base == 0 {
        extra_idx.into_iter().map(|index| PlanEntry { index, id: id_of(index), count: 1 }).collect()
    } else {
        let mut extras = extra_idx.into_iter().peekable();
        (0..pool)
            .map(|index| {
                let bump = extras.next_if_eq(&index).is_some() as u64;
                PlanEntry { index, id: id_of(index), count: base + bump }
            })
            .collect()
    };
    SourcePlan {
        name: source.name.clone(),
        pool_size: pool,
        epoch_target: target,
        mode,
        tags: source.tags.clone(),
        entries,
    }
}

/// (name, modality, language, domain, pool, per-epoch target) with counts in
/// hundredths of a million.
const REFERENCE: [(&str, &str, &str, &str, u64, u64); 15] = [
    ("En-Text", "text", "EN", "Book", 905, 168),
    ("En-Formula", "formula", "EN", "Book", 1285, 257),
    ("En-Mixed", "mix", "EN", "Book", 791, 64),
    ("Ch-Text", "text", "CH", "Book", 684, 186),
    ("Ch-Formula", "formula", "CH", "Book", 5, 5),
    ("Ch-Mixed", "mix", "CH", "Book", 24, 24),
    ("LSVT", "text", "CH", "Scene", 26, 130),
    ("MTWI", "text", "CH", "Scene", 15, 103),
    ("HierText", "text", "EN", "Scene", 105, 32),
    ("HWDB", "text", "CH", "Handwritten", 38, 113),
    ("TAL", "formula", "CH", "Handwritten", 2, 20),
    ("Note", "mix", "Mix", "Note", 8, 41),
    ("IR Report", "mix", "Mix", "Research Report", 35, 70),
    ("Newspaper", "text", "Mix", "Newspaper", 13, 25),
    ("K-12", "mix", "Mix", "Exam Paper", 25, 25),
];

/// Manifest for the reference data mix (raw sample counts divided by `scale`).
pub fn reference_sources(scale: u64) -> Vec<SourceSpec> {
    REFERENCE
        .iter()
        .map(|&(name, modality, language, domain, pool, target)| SourceSpec {
            name: name.into(),
            pool_size: Some(scale_count(pool * 10_000, scale.max(1))),
            pool_file: None,
            epoch_target: scale_count(target * 10_000, scale.max(1)),
            tags: SourceTags {
                modality: modality.into(),
                level: None,
                language: Some(language.into()),
                domain: Some(domain.into()),
            },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::{BTreeMap, HashSet};

    fn sources(scale: u64) -> Vec<DataSource> {
        reference_sources(scale)
            .iter()
            .map(|s| DataSource::from_spec(s, Path::new("."), 1).unwrap())
            .collect()
    }

    #[test]
    fn reference_sums() {
        let specs = reference_sources(1);
        let pool: u64 = specs.iter().map(|s| s.pool_size.unwrap()).sum();
        let target: u64 = specs.iter().map(|s| s.epoch_target).sum();
        // Per-column rounding: the columns add to 39.61M, not 39.60M.
        assert_eq!(pool, 39_610_000);
        assert_eq!(target, 12_630_000);
    }

    #[test]
    fn lsvt_repeats_five_times() {
        let src = sources(1000);
        let lsvt = src.iter().find(|s| s.name == "LSVT").unwrap();
        assert_eq!((lsvt.pool.len(), lsvt.epoch_target), (260, 1300));
        let plan = plan_epoch(std::slice::from_ref(lsvt), 7).unwrap();
        assert_eq!(plan.sources[0].mode, SamplingMode::Resample);
        assert_eq!(plan.sources[0].entries.len(), 260);
        assert!(plan.sources[0].entries.iter().all(|e| e.count == 5));
    }

    #[test]
    fn en_text_subsamples_distinct() {
        let src = sources(1000);
        let en = src.iter().find(|s| s.name == "En-Text").unwrap();
        assert_eq!((en.pool.len(), en.epoch_target), (9050, 1680));
        let plan = plan_epoch(std::slice::from_ref(en), 7).unwrap();
        let entries = &plan.sources[0].entries;
        assert_eq!(entries.len(), 1680);
        assert!(entries.iter().all(|e| e.count == 1));
        let distinct: HashSet<u64> = entries.iter().map(|e| e.index).collect();
        assert_eq!(distinct.len(), 1680);
    }

    #[test]
    fn full_plan_matches_every_target() {
        let src = sources(1000);
        let plan = plan_epoch(&src, 3).unwrap();
        assert_eq!(plan.sources.len(), 15);
        for (s, p) in src.iter().zip(&plan.sources) {
            assert_eq!(p.total(), s.epoch_target, "{}", s.name);
        }
        // Per-modality fractions equal the target fractions.
        let mut realized: BTreeMap<&str, u64> = BTreeMap::new();
        let mut wanted: BTreeMap<&str, u64> = BTreeMap::new();
        for (s, p) in src.iter().zip(&plan.sources) {
            *realized.entry(s.tags.modality.as_str()).or_default() += p.total();
            *wanted.entry(s.tags.modality.as_str()).or_default() += s.epoch_target;
        }
        assert_eq!(realized, wanted);
    }

    #[test]
    fn identity_and_determinism() {
        let s = DataSource::new("x", 50, 50, SourceTags::default());
        let plan = plan_epoch(std::slice::from_ref(&s), 1).unwrap();
        assert_eq!(plan.sources[0].mode, SamplingMode::Identity);
        assert!(plan.sources[0].entries.iter().enumerate().all(|(i, e)| e.index == i as u64 && e.count == 1));

        let src = sources(1000);
        assert_eq!(plan_epoch(&src, 9).unwrap(), plan_epoch(&src, 9).unwrap());
        assert_ne!(plan_epoch(&src, 9).unwrap(), plan_epoch(&src, 10).unwrap());
        // A source's plan does not depend on its neighbours.
        let alone = plan_epoch(&src[3..4], 9).unwrap();
        assert_eq!(alone.sources[0], plan_epoch(&src, 9).unwrap().sources[3]);
    }

    #[test]
    fn invalid_sources() {
        assert!(plan_epoch(&[DataSource::new("a", 0, 3, SourceTags::default())], 0).is_err());
        assert!(plan_epoch(&[DataSource::new("a", 3, 0, SourceTags::default())], 0).is_err());
        let spec = SourceSpec {
            name: "b".into(),
            pool_size: Some(3),
            pool_file: Some("p.txt".into()),
            epoch_target: 2,
            tags: SourceTags::default(),
        };
        assert!(DataSource::from_spec(&spec, Path::new("."), 1).is_err());
    }

    #[test]
    fn pool_file_ids() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("pool.txt"), "a\nb\n\nc\n").unwrap();
        let spec = SourceSpec {
            name: "f".into(),
            pool_size: None,
            pool_file: Some("pool.txt".into()),
            epoch_target: 7,
            tags: SourceTags::default(),
        };
        let s = DataSource::from_spec(&spec, dir.path(), 1).unwrap();
        let plan = plan_epoch(&[s], 0).unwrap();
        let ids: Vec<_> = plan.sources[0].entries.iter().map(|e| e.id.clone().unwrap()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(plan.sources[0].total(), 7);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn totals_and_balance(pool in 1u64..400, target in 1u64..2000, seed in any::<u64>()) {
            let s = DataSource::new("p", pool, target, SourceTags::default());
            let plan = plan_epoch(&[s], seed).unwrap();
            let p = &plan.sources[0];
            prop_assert_eq!(p.total(), target);
            let max = p.entries.iter().map(|e| e.count).max().unwrap();
            let min = p.entries.iter().map(|e| e.count).min().unwrap();
            prop_assert!(max - min <= 1);
            if target <= pool {
                prop_assert!(max == 1);
            }
            prop_assert!(p.entries.windows(2).all(|w| w[0].index < w[1].index));
            prop_assert!(p.entries.iter().all(|e| e.index < pool));
        }
    }
}

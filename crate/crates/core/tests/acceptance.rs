//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Tolerances and budgets are fixed here.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unirec_core::corpus::{generate_document, generate_samples, plan_epoch, reference_sources, DataSource, DocumentProfile};
use unirec_core::decode::{
    fit_geometry, greedy_decode, sequence_loss, ConstantScorer, DecodeContext, NgramScorer, HEIGHT_CAP, MAX_TOKENS,
    PATCH, WIDTH_CAP,
};
use unirec_core::evalbench::{evaluate, levenshtein, normalized_ed, read_records, render_report, CanonMode, ReportFormat};
use unirec_core::hst::{decode_hst, encode_hst, line_text, StructuredDocument};
use unirec_core::pipeline::{run_pipeline, RunConfig, Variant};
use unirec_core::sdt::{
    merge_decoupled, modality_overlap_report, train_bpe, BpeModel, DecoupledVocabulary, Modality, LINE_BREAK,
    PARAGRAPH_END, RESERVED_SPECIALS,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(10);
const PIPELINE_BUDGET: Duration = Duration::from_secs(60);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !($cond) {
            return Err(format!($($fmt)+));
        }
    };
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn mixed_profile(language: &str) -> DocumentProfile {
    DocumentProfile {
        paragraphs: (1, 4),
        lines: (1, 3),
        formula_density: 0.4,
        language: language.into(),
        ..Default::default()
    }
}

fn trained_vocab(seed: u64) -> Result<DecoupledVocabulary, String> {
    let mut text = Vec::new();
    let mut formula = Vec::new();
    for lang in ["EN", "CH"] {
        let (_, samples) = generate_samples(seed, 6, &mixed_profile(lang)).map_err(|e| e.to_string())?;
        for s in samples {
            for seg in unirec_core::sdt::segment_label(&s.label).map_err(|e| e.to_string())?.segments {
                match seg.modality {
                    Modality::Formula => formula.push(seg.content),
                    _ => text.push(seg.content),
                }
            }
        }
    }
    let t = train_bpe(&text, 600, Modality::Text).map_err(|e| e.to_string())?;
    let f = train_bpe(&formula, 400, Modality::Formula).map_err(|e| e.to_string())?;
    Ok(merge_decoupled(&t, &f))
}

fn sdt_round_trip() -> Outcome {
    let start = Instant::now();
    let vocab = trained_vocab(1)?;
    // Held-out labels from other seeds, both languages, with and without
    // supervision tokens.
    let mut labels = Vec::new();
    let mut seed = 100;
    while labels.len() < 1000 {
        let lang = if seed % 2 == 0 { "EN" } else { "CH" };
        let (_, samples) = generate_samples(seed, 1, &mixed_profile(lang)).map_err(|e| e.to_string())?;
        for s in samples {
            labels.push(s.hst_label);
            labels.push(s.label);
        }
        seed += 1;
    }
    labels.truncate(1000);
    let mut failures = 0;
    for label in &labels {
        let ids = vocab.encode(label).map_err(|e| format!("{label:?}: {e}"))?;
        if vocab.decode(&ids).map_err(|e| e.to_string())? != *label {
            failures += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure!(failures == 0, "{failures}/1000 labels did not round-trip");
    ensure!(elapsed < ROUND_TRIP_BUDGET, "took {elapsed:?}, budget {ROUND_TRIP_BUDGET:?}");
    Ok(format!("1000/1000 byte-exact in {elapsed:.2?}"))
}

fn decoupling() -> Outcome {
    let formula_corpus = [
        r"\sum_{i=1}^{n} x_i",
        r"\sum_{k=0}^{\infty} \frac{1}{k}",
        r"\left( \frac{a}{b} \right)",
        r"\frac{\infty}{\infty}",
        r"\left[ \sum x \right]",
        r"\lim_{n \to \infty} \frac{1}{n}",
    ];
    let text_corpus = [
        "the sum of all terms",
        "take the sum from the left",
        "infty is short for infinity",
        "frac stands for fraction",
        "left and right sum infty frac",
    ];
    let formula = train_bpe(formula_corpus, 400, Modality::Formula).map_err(|e| e.to_string())?;
    let text = train_bpe(text_corpus, 400, Modality::Text).map_err(|e| e.to_string())?;
    let vocab = merge_decoupled(&text, &formula);
    for stem in ["sum", "infty", "left", "frac"] {
        ensure!(text.contains(stem) || text.contains(&format!("Ġ{stem}")), "text model lacks the stem {stem}");
    }
    let text_ids: BTreeSet<u32> = (0..text.len() as u32).collect();
    for cmd in [r"\sum", r"\infty", r"\left", r"\frac", r"\right"] {
        // A command is learned bare or with its leading space attached.
        let ids: Vec<u32> = [cmd.to_string(), format!("Ġ{cmd}")]
            .iter()
            .filter_map(|s| vocab.id_of(s))
            .collect();
        ensure!(!ids.is_empty(), "{cmd} is not in the merged vocabulary");
        for id in ids {
            ensure!(!text_ids.contains(&id), "{cmd} shares id {id} with the text range");
            ensure!(vocab.modality_of(id) == Some(Modality::Formula), "{cmd} is not formula-typed");
        }
        let stem = &cmd[1..];
        let in_formula = vocab.encode(&format!("${cmd}$")).map_err(|e| e.to_string())?;
        let in_text = vocab.encode(stem).map_err(|e| e.to_string())?;
        let inner = |ids: &[u32]| ids[1..ids.len() - 1].to_vec();
        ensure!(
            inner(&in_text).iter().all(|i| text_ids.contains(i)),
            "text `{stem}` uses non-text ids"
        );
        ensure!(
            inner(&in_formula).iter().all(|i| !inner(&in_text).contains(i)),
            "`{cmd}` and `{stem}` share ids"
        );
    }
    let report: Vec<String> = modality_overlap_report(&text, &formula).into_iter().map(|e| e.surface).collect();
    ensure!(report == vocab.excluded(), "overlap report differs from excluded");
    Ok(format!("5 commands disjoint; overlap report == excluded ({} surfaces)", report.len()))
}

fn merge_cardinality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pool: Vec<String> = {
        let atoms = ["a", "b", "x", "\\", "{", "Ġ", "中"];
        let mut p: Vec<String> = Vec::new();
        for a in atoms {
            p.push(a.to_string());
            for b in atoms {
                p.push(format!("{a}{b}"));
            }
        }
        p.extend(RESERVED_SPECIALS.iter().map(|s| s.to_string()));
        p
    };
    for trial in 0..100 {
        let pick = |rng: &mut ChaCha8Rng| -> Vec<String> {
            let n = rng.gen_range(0..pool.len());
            pool.choose_multiple(rng, n).cloned().collect()
        };
        let t = pick(&mut rng);
        let f = pick(&mut rng);
        let text = BpeModel::from_parts(Modality::Text, vec![], vec![], t.clone()).map_err(|e| e.to_string())?;
        let formula = BpeModel::from_parts(Modality::Formula, vec![], vec![], f.clone()).map_err(|e| e.to_string())?;
        let merged = merge_decoupled(&text, &formula);
        let oracle: BTreeSet<&str> = t
            .iter()
            .chain(&f)
            .map(String::as_str)
            .chain(RESERVED_SPECIALS.iter().copied())
            .collect();
        ensure!(merged.len() == oracle.len(), "trial {trial}: |merged| = {}, union = {}", merged.len(), oracle.len());
    }
    Ok("100/100 pairs match the set-union oracle".into())
}

fn hst_codec() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..500 {
        let profile = DocumentProfile {
            paragraphs: (1, rng.gen_range(1..6)),
            lines: (1, rng.gen_range(1..5)),
            formula_density: rng.gen_range(0.0..=1.0),
            language: ["EN", "CH", "Mix"][rng.gen_range(0..3)].into(),
            ..Default::default()
        };
        let doc: StructuredDocument = generate_document(rng.gen(), &profile).map_err(|e| e.to_string())?;
        let label = encode_hst(&doc).map_err(|e| e.to_string())?;
        let paragraphs = doc.paragraphs.len();
        let lines = doc.line_count();
        let ln = label.matches(LINE_BREAK).count();
        let pn = label.matches(PARAGRAPH_END).count();
        ensure!(ln == lines - paragraphs, "trial {trial}: {ln} line breaks for {lines} lines / {paragraphs} paragraphs");
        ensure!(pn == paragraphs, "trial {trial}: {pn} paragraph ends for {paragraphs} paragraphs");
        let oracle = doc
            .paragraphs
            .iter()
            .map(|p| p.iter().map(|l| line_text(l)).collect::<String>())
            .collect::<Vec<_>>()
            .join("\n\n");
        ensure!(decode_hst(&label) == oracle, "trial {trial}: decode differs from the paragraph join");
    }
    Ok("500/500 documents".into())
}

fn sampler() -> Outcome {
    let specs = reference_sources(1000);
    let sources: Vec<DataSource> = specs
        .iter()
        .map(|s| DataSource::from_spec(s, Path::new("."), 1))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let plan = plan_epoch(&sources, 11).map_err(|e| e.to_string())?;
    ensure!(plan.sources.len() == 15, "{} columns", plan.sources.len());
    for (s, p) in sources.iter().zip(&plan.sources) {
        ensure!(p.total() == s.epoch_target, "{}: {} != {}", s.name, p.total(), s.epoch_target);
    }
    let find = |name: &str| plan.sources.iter().find(|p| p.name == name).ok_or(format!("missing {name}"));
    let lsvt = find("LSVT")?;
    ensure!(lsvt.pool_size == 260 && lsvt.epoch_target == 1300, "LSVT scaled to {}/{}", lsvt.pool_size, lsvt.epoch_target);
    ensure!(lsvt.entries.len() == 260 && lsvt.entries.iter().all(|e| e.count == 5), "LSVT items not repeated 5x");
    let en = find("En-Text")?;
    ensure!(en.pool_size == 9050 && en.epoch_target == 1680, "En-Text scaled to {}/{}", en.pool_size, en.epoch_target);
    let distinct: BTreeSet<u64> = en.entries.iter().map(|e| e.index).collect();
    ensure!(distinct.len() == 1680 && en.entries.iter().all(|e| e.count == 1), "En-Text items repeat");
    Ok("LSVT 260->1300 all x5; En-Text 9050->1680 distinct; 15/15 totals".into())
}

fn dp_oracle(a: &[char], b: &[char]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

fn edit_distance() -> Outcome {
    const ALPHABET: [char; 10] = ['a', 'b', 'c', 'x', 'Z', ' ', '中', '文', '字', 'é'];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let random = |rng: &mut ChaCha8Rng| -> String {
        let n = rng.gen_range(0..=64);
        (0..n).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect()
    };
    for trial in 0..10_000 {
        let (a, b) = (random(&mut rng), random(&mut rng));
        let av: Vec<char> = a.chars().collect();
        let bv: Vec<char> = b.chars().collect();
        let (got, want) = (levenshtein(&a, &b), dp_oracle(&av, &bv));
        ensure!(got == want, "pair {trial}: {got} != oracle {want} for {a:?} / {b:?}");
    }
    for trial in 0..10_000 {
        let (a, b, c) = (random(&mut rng), random(&mut rng), random(&mut rng));
        let (ab, ba, bc, ac) = (levenshtein(&a, &b), levenshtein(&b, &a), levenshtein(&b, &c), levenshtein(&a, &c));
        ensure!(levenshtein(&a, &a) == 0, "triple {trial}: d(a,a) != 0");
        ensure!((ab == 0) == (a == b), "triple {trial}: identity of indiscernibles");
        ensure!(ab == ba, "triple {trial}: asymmetric");
        ensure!(ac <= ab + bc, "triple {trial}: triangle inequality");
        let n = normalized_ed(&a, &b);
        ensure!((0.0..=1.0).contains(&n) && n == normalized_ed(&b, &a), "triple {trial}: normalized out of range");
    }
    let k = normalized_ed("kitten", "sitting");
    ensure!(k == 3.0 / 7.0, "kitten/sitting = {k}");
    Ok("10000 oracle pairs, 10000 axiom triples, kitten/sitting = 3/7".into())
}

fn eval_fixture() -> Outcome {
    let fixtures = manifest_dir().join("tests/fixtures");
    let input = fs::read_to_string(fixtures.join("eval_fixture.jsonl")).map_err(|e| e.to_string())?;
    let (records, rejected) = read_records(&input);
    ensure!(records.len() == 6 && rejected.is_empty(), "fixture parsed to {} records", records.len());
    let golden_table = fs::read_to_string(fixtures.join("eval_golden.txt")).map_err(|e| e.to_string())?;
    let golden_json = fs::read_to_string(fixtures.join("eval_golden.json")).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut shuffled = records.clone();
    for round in 0..20 {
        if round > 0 {
            shuffled.shuffle(&mut rng);
        }
        let report = evaluate(shuffled.clone(), CanonMode::Hst).map_err(|e| e.to_string())?;
        ensure!(render_report(&report, ReportFormat::Table) == golden_table, "table differs (order {round})");
        ensure!(render_report(&report, ReportFormat::Json) == golden_json, "json differs (order {round})");
        if round == 0 {
            let modality: Vec<_> = report.modality.iter().map(|g| g.mean).collect();
            ensure!(
                modality == [Some(0.25), Some(0.1), Some(4.0 / 7.0)],
                "hand-computed modality means differ: {modality:?}"
            );
        }
    }
    Ok("golden table + json byte-exact over 20 record orders".into())
}

fn geometry() -> Outcome {
    let g = fit_geometry(2816, 1920).map_err(|e| e.to_string())?;
    ensure!(g.scaled == (1408, 960), "scaled to {:?}", g.scaled);
    ensure!(g.visual_tokens == 1320, "N = {}", g.visual_tokens);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..10_000 {
        let (h, w) = (rng.gen_range(1..=8000), rng.gen_range(1..=8000));
        let g = fit_geometry(h, w).map_err(|e| e.to_string())?;
        let (sh, sw) = g.scaled;
        ensure!(sh <= h && sw <= w, "trial {trial}: {h}x{w} upscaled to {sh}x{sw}");
        ensure!(sh <= HEIGHT_CAP && sw <= WIDTH_CAP, "trial {trial}: {sh}x{sw} exceeds caps");
        ensure!(g.scale <= 1.0, "trial {trial}: scale {}", g.scale);
        if h <= HEIGHT_CAP && w <= WIDTH_CAP {
            ensure!((sh, sw) == (h, w), "trial {trial}: in-cap image resized");
        }
        ensure!(g.padded.0 % PATCH == 0 && g.padded.1 % PATCH == 0, "trial {trial}: padding");
        ensure!(g.padded.0 - sh < PATCH && g.padded.1 - sw < PATCH, "trial {trial}: over-padded");
        ensure!(g.visual_tokens == (g.padded.0 / PATCH) * (g.padded.1 / PATCH), "trial {trial}: N");
    }
    Ok("2816x1920 -> 1408x960, N = 1320; 10000 sizes downscale-only".into())
}

fn greedy() -> Outcome {
    let vocab = trained_vocab(2)?;
    // Every two-id context occurs once, so a 3-gram model has exactly one
    // continuation at each step.
    let training = r"the sum of each term<|ln|>is equal to $\frac{a}{b}$<|pn|>";
    let ids = vocab.encode(training).map_err(|e| e.to_string())?;
    let contexts: BTreeSet<&[u32]> = ids.windows(2).collect();
    ensure!(contexts.len() == ids.len() - 1, "training sequence repeats a 3-gram context");
    let scorer = NgramScorer::train(3, 0.0, std::slice::from_ref(&ids), &vocab);
    let ctx = DecodeContext::default();
    let out = greedy_decode(&scorer, &vocab, &ctx, MAX_TOKENS).map_err(|e| e.to_string())?;
    ensure!(out == ids, "3-gram decode differs from its training sequence:\n{ids:?}\n{out:?}");
    ensure!(vocab.decode(&out).map_err(|e| e.to_string())? == training, "decoded text differs");

    let never_eos = ConstantScorer {
        token: vocab.id_of("a").unwrap_or(0),
        vocab_size: vocab.len(),
    };
    let long = greedy_decode(&never_eos, &vocab, &ctx, MAX_TOKENS).map_err(|e| e.to_string())?;
    ensure!(long.len() == 1024, "never-EOS decode stopped at {}", long.len());

    let one_hot: Vec<Vec<f64>> = ids[1..]
        .iter()
        .map(|&t| {
            let mut v = vec![0.0; vocab.len()];
            v[t as usize] = 1.0;
            v
        })
        .collect();
    let loss = sequence_loss(&one_hot, &ids[1..]).map_err(|e| e.to_string())?;
    ensure!(loss == 0.0, "one-hot loss = {loss}");
    Ok(format!("3-gram reproduces {} ids; never-EOS stops at 1024; one-hot loss 0", ids.len()))
}

fn demo_config(out: &Path) -> Result<RunConfig, String> {
    let mut config = RunConfig::load(manifest_dir().join("../../demo/config.json")).map_err(|e| e.to_string())?;
    config.out_dir = out.to_path_buf();
    Ok(config)
}

fn ablation() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = demo_config(dir.path())?;
    let summary = run_pipeline(&config).map_err(|e| e.to_string())?;
    for variant in Variant::ALL {
        let name = variant.name();
        for file in [format!("encoded_{name}.jsonl"), format!("records_{name}.jsonl")] {
            ensure!(dir.path().join(&file).is_file(), "missing {file}");
        }
        let v = summary.variants.iter().find(|v| v.variant == variant).ok_or(format!("no summary for {name}"))?;
        ensure!(v.kept > 0, "{name}: no samples kept");
        ensure!(v.avg == Some(0.0) && v.overall_mean == Some(0.0), "{name}: identity scored {:?}", v.avg);
        let report = fs::read_to_string(dir.path().join(format!("report_{name}.json"))).map_err(|e| e.to_string())?;
        let report: serde_json::Value = serde_json::from_str(&report).map_err(|e| e.to_string())?;
        for column in ["modality", "level", "language", "domain"] {
            for g in report["report"][column].as_array().into_iter().flatten() {
                ensure!(g["mean"].is_null() || g["mean"] == 0.0, "{name}/{column}/{}: {}", g["name"], g["mean"]);
            }
        }
    }
    let records = |name: &str| fs::read_to_string(dir.path().join(format!("records_{name}.jsonl"))).unwrap_or_default();
    ensure!(records("full").contains(PARAGRAPH_END), "full labels lack supervision tokens");
    ensure!(!records("nohst_sdt").contains(PARAGRAPH_END), "stripped labels keep supervision tokens");
    let coupled = DecoupledVocabulary::load(dir.path().join("vocab_coupled.json")).map_err(|e| e.to_string())?;
    ensure!(coupled.formula_model().is_empty(), "coupled vocabulary has a formula model");
    let sdt = DecoupledVocabulary::load(dir.path().join("vocab_sdt.json")).map_err(|e| e.to_string())?;
    ensure!(sdt.tokens().iter().any(|t| t.modality == Modality::Formula), "decoupled vocabulary has no formula ids");
    Ok("full / nohst_sdt / nohst_nosdt produced; identity predictions score 0.0 in all".into())
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let first = run_pipeline(&demo_config(a.path())?).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let second = run_pipeline(&demo_config(b.path())?).map_err(|e| e.to_string())?;
    ensure!(first == second, "summaries differ");
    for name in &first.artifacts {
        let x = fs::read(a.path().join(name)).map_err(|e| format!("{name}: {e}"))?;
        let y = fs::read(b.path().join(name)).map_err(|e| format!("{name}: {e}"))?;
        ensure!(x == y, "{name} differs between runs");
    }
    let listing = |p: &Path| -> BTreeSet<String> {
        fs::read_dir(p)
            .map(|d| d.filter_map(|e| e.ok()).map(|e| e.file_name().to_string_lossy().into_owned()).collect())
            .unwrap_or_default()
    };
    ensure!(listing(a.path()) == listing(b.path()), "artifact sets differ");
    ensure!(elapsed < PIPELINE_BUDGET, "demo run took {elapsed:?}, budget {PIPELINE_BUDGET:?}");
    Ok(format!("{} artifacts byte-identical; demo run {elapsed:.2?}", first.artifacts.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("sdt round-trip", sdt_round_trip),
        ("decoupled ids", decoupling),
        ("merge cardinality", merge_cardinality),
        ("hst codec", hst_codec),
        ("epoch sampler", sampler),
        ("edit distance", edit_distance),
        ("evaluation fixture", eval_fixture),
        ("geometry", geometry),
        ("greedy decode", greedy),
        ("ablation variants", ablation),
        ("end-to-end determinism", determinism),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name:<24} {detail} [{secs:.2}s]", n + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL {:>2} {name:<24} {reason} [{secs:.2}s]", n + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

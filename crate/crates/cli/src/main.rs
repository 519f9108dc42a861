use std::fs;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use unirec_core::corpus::{
    generate_samples, length_filter, plan_epoch, reference_sources, DataSource, DocumentProfile, SampleRecord,
    SourceSpec,
};
use unirec_core::decode::{fit_geometry, greedy_decode, DecodeContext, NgramScorer, NgramSpec, MAX_TOKENS};
use unirec_core::evalbench::{evaluate, read_records, render_report, CanonMode, ReportFormat};
use unirec_core::hst::{decode_hst, encode_hst, StructuredDocument};
use unirec_core::jsonl;
use unirec_core::pipeline::{run_pipeline, RunConfig};
use unirec_core::sdt::{
    merge_decoupled, modality_overlap_report, train_bpe, BpeModel, DecoupledVocabulary, Modality, TokenId,
};

/// Text–formula recognition infrastructure: tokenizers, label coding,
/// corpora, evaluation and mock decoding.
#[derive(Parser)]
#[command(name = "unirec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train, merge and apply byte-level BPE tokenizers.
    #[command(subcommand)]
    Tok(TokCommand),
    /// Encode documents into hierarchical labels, or decode predictions.
    #[command(subcommand)]
    Hst(HstCommand),
    /// Generate corpora, plan epochs and filter by token length.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Score prediction records and print a report.
    Eval(EvalArgs),
    /// Print the input geometry for an image size.
    Geom {
        #[arg(long)]
        h: u32,
        #[arg(long)]
        w: u32,
    },
    /// Greedy-decode with an n-gram mock scorer.
    DecodeMock {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        scorer: PathBuf,
        #[arg(long, default_value_t = MAX_TOKENS)]
        max_len: usize,
        /// Image height used for the decode context.
        #[arg(long, default_value_t = 1408)]
        h: u32,
        #[arg(long, default_value_t = 960)]
        w: u32,
    },
    /// Run the whole pipeline from a config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long, env = "UNIREC_SEED")]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct Output {
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum TokCommand {
    /// Train a model on a corpus with one sample per line.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "text")]
        modality: String,
        #[arg(long)]
        vocab_size: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Merge a text and a formula model into a decoupled vocabulary.
    Merge {
        #[arg(long)]
        text: PathBuf,
        #[arg(long)]
        formula: PathBuf,
        /// Also write the text/formula overlap report here.
        #[arg(long)]
        overlap: Option<PathBuf>,
        #[arg(long, env = "UNIREC_SEED")]
        seed: Option<u64>,
        #[command(flatten)]
        output: Output,
    },
    /// Encode one label per input line into a JSON id array per line.
    Encode {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Decode one JSON id array per input line.
    Decode {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Print each result as a JSON string.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Subcommand)]
enum HstCommand {
    /// Encode a StructuredDocument JSON file.
    Encode {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Undo supervision tokens in a prediction.
    Decode {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Generate documents and derive multi-level samples as JSONL.
    Gen {
        #[arg(long, env = "UNIREC_SEED")]
        seed: u64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        profile: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Plan one epoch over a source manifest (the reference mix by default).
    Plan {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, env = "UNIREC_SEED")]
        seed: u64,
        /// Divides every count, rounding half up.
        #[arg(long, default_value_t = 1)]
        scale: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Keep samples whose labels fit in the token budget.
    Filter {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = MAX_TOKENS)]
        max_len: usize,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "hst")]
    mode: CanonMode,
    #[arg(long, default_value = "table", value_parser = parse_format)]
    format: ReportFormat,
    /// Compare the rendered report byte-for-byte with this file.
    #[arg(long)]
    golden: Option<PathBuf>,
    /// Exit with status 2 if any record is rejected.
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    output: Output,
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    match s {
        "table" => Ok(ReportFormat::Table),
        "json" => Ok(ReportFormat::Json),
        _ => Err(format!("unknown format `{s}` (expected table or json)")),
    }
}

fn read_input(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s).context("reading stdin")?;
            Ok(s)
        }
    }
}

fn write_output(output: &Output, data: &[u8]) -> Result<()> {
    match &output.out {
        Some(p) => fs::write(p, data).with_context(|| format!("writing {}", p.display())),
        None => io::stdout().write_all(data).context("writing stdout"),
    }
}

fn json_bytes<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn parse_modality(s: &str) -> Result<Modality> {
    match s {
        "text" => Ok(Modality::Text),
        "formula" => Ok(Modality::Formula),
        _ => bail!("unknown modality `{s}` (expected text or formula)"),
    }
}

fn tok(cmd: TokCommand) -> Result<ExitCode> {
    match cmd {
        TokCommand::Train {
            corpus,
            modality,
            vocab_size,
            output,
        } => {
            let text = read_input(Some(&corpus))?;
            let model = train_bpe(text.lines(), vocab_size, parse_modality(&modality)?)?;
            log::info!("trained {} tokens", model.len());
            write_output(&output, &json_bytes(&model)?)?;
        }
        TokCommand::Merge {
            text,
            formula,
            overlap,
            seed,
            output,
        } => {
            let text: BpeModel = read_json(&text)?;
            let formula: BpeModel = read_json(&formula)?;
            let vocab = merge_decoupled(&text, &formula);
            if let Some(p) = overlap {
                let report = modality_overlap_report(&text, &formula);
                fs::write(&p, json_bytes(&report)?).with_context(|| format!("writing {}", p.display()))?;
            }
            let mut file = vocab.to_file();
            file.seed = seed;
            write_output(&output, &json_bytes(&file)?)?;
        }
        TokCommand::Encode { vocab, input, output } => {
            let vocab = DecoupledVocabulary::load(&vocab)?;
            let mut out = Vec::new();
            for (n, line) in read_input(input.as_deref())?.lines().enumerate() {
                let ids = vocab.encode(line).with_context(|| format!("line {}", n + 1))?;
                serde_json::to_writer(&mut out, &ids)?;
                out.push(b'\n');
            }
            write_output(&output, &out)?;
        }
        TokCommand::Decode {
            vocab,
            input,
            json,
            output,
        } => {
            let vocab = DecoupledVocabulary::load(&vocab)?;
            let mut out = Vec::new();
            for (n, line) in read_input(input.as_deref())?.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let ids: Vec<TokenId> = serde_json::from_str(line).with_context(|| format!("line {}", n + 1))?;
                let text = vocab.decode(&ids).with_context(|| format!("line {}", n + 1))?;
                if json {
                    serde_json::to_writer(&mut out, &text)?;
                } else {
                    out.extend_from_slice(text.as_bytes());
                }
                out.push(b'\n');
            }
            write_output(&output, &out)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn hst(cmd: HstCommand) -> Result<ExitCode> {
    match cmd {
        HstCommand::Encode { input, output } => {
            let doc: StructuredDocument = serde_json::from_str(&read_input(input.as_deref())?)?;
            let mut label = encode_hst(&doc)?;
            label.push('\n');
            write_output(&output, label.as_bytes())?;
        }
        HstCommand::Decode { input, output } => {
            let mut text = decode_hst(&read_input(input.as_deref())?);
            text.push('\n');
            write_output(&output, text.as_bytes())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn corpus(cmd: CorpusCommand) -> Result<ExitCode> {
    match cmd {
        CorpusCommand::Gen {
            seed,
            n,
            profile,
            output,
        } => {
            let profile: DocumentProfile = match profile {
                Some(p) => read_json(&p)?,
                None => DocumentProfile::default(),
            };
            let (_, samples) = generate_samples(seed, n, &profile)?;
            let mut out = Vec::new();
            jsonl::write_header(&mut out, seed, "samples")?;
            for s in &samples {
                jsonl::write_record(&mut out, s)?;
            }
            write_output(&output, &out)?;
        }
        CorpusCommand::Plan {
            manifest,
            seed,
            scale,
            output,
        } => {
            if scale == 0 {
                bail!("--scale must be positive");
            }
            let (specs, base): (Vec<SourceSpec>, PathBuf) = match &manifest {
                Some(p) => (read_json(p)?, p.parent().map(Path::to_path_buf).unwrap_or_default()),
                None => (reference_sources(1), PathBuf::new()),
            };
            let sources = specs
                .iter()
                .map(|s| DataSource::from_spec(s, &base, scale))
                .collect::<Result<Vec<_>, _>>()?;
            let plan = plan_epoch(&sources, seed)?;
            write_output(&output, &json_bytes(&plan)?)?;
        }
        CorpusCommand::Filter {
            vocab,
            input,
            max_len,
            output,
        } => {
            let vocab = DecoupledVocabulary::load(&vocab)?;
            let text = read_input(input.as_deref())?;
            let samples: Vec<SampleRecord> = jsonl::read_all(BufReader::new(text.as_bytes()))?;
            let header = text.lines().next().filter(|l| jsonl::is_header(l));
            let outcome = length_filter(&vocab, samples, max_len);
            eprintln!(
                "kept {}, dropped {}: {}",
                outcome.kept.len(),
                outcome.dropped.len(),
                serde_json::to_string(&outcome.dropped_by_tag)?
            );
            let mut out = Vec::new();
            if let Some(h) = header {
                writeln!(out, "{h}")?;
            }
            for s in &outcome.kept {
                jsonl::write_record(&mut out, s)?;
            }
            write_output(&output, &out)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn eval(args: EvalArgs) -> Result<ExitCode> {
    let text = read_input(Some(&args.input))?;
    let (records, mut parse_rejections) = read_records(&text);
    let mut report = evaluate(records, args.mode)?;
    if !parse_rejections.is_empty() {
        report.rejected += parse_rejections.len();
        report.rejections.append(&mut parse_rejections);
        report.rejections.sort_by(|a, b| (&a.id, &a.reason).cmp(&(&b.id, &b.reason)));
    }
    let rendered = render_report(&report, args.format);
    write_output(&args.output, rendered.as_bytes())?;
    if let Some(golden) = &args.golden {
        let expected = fs::read(golden).with_context(|| format!("reading {}", golden.display()))?;
        if expected != rendered.as_bytes() {
            bail!("report differs from golden file {}", golden.display());
        }
        log::info!("report matches {}", golden.display());
    }
    if args.strict && report.rejected > 0 {
        for r in &report.rejections {
            eprintln!("rejected {}: {}", r.id, r.reason);
        }
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Tok(cmd) => tok(cmd),
        Command::Hst(cmd) => hst(cmd),
        Command::Corpus(cmd) => corpus(cmd),
        Command::Eval(args) => eval(args),
        Command::Geom { h, w } => {
            let spec = fit_geometry(h, w)?;
            io::stdout().write_all(&json_bytes(&spec)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::DecodeMock {
            vocab,
            scorer,
            max_len,
            h,
            w,
        } => {
            let vocab = DecoupledVocabulary::load(&vocab)?;
            let spec: NgramSpec = read_json(&scorer)?;
            let scorer = NgramScorer::from_spec(&spec, &vocab)?;
            let context = DecodeContext {
                visual_tokens: fit_geometry(h, w)?.visual_tokens as usize,
            };
            let ids = greedy_decode(&scorer, &vocab, &context, max_len)?;
            let text = vocab.decode(&ids)?;
            let out = serde_json::json!({ "ids": ids, "text": text, "length": ids.len() });
            io::stdout().write_all(&json_bytes(&out)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Pipeline { config, seed } => {
            let mut config = RunConfig::load(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let summary = run_pipeline(&config)?;
            let out = config.out_path();
            for v in &summary.variants {
                let avg = v.avg.map_or("-".to_string(), |a| format!("{a:.4}"));
                println!("{:<12} kept {:>5}  dropped {:>4}  avg {avg}", v.variant.name(), v.kept, v.dropped);
            }
            println!("artifacts in {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

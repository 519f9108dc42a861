use std::collections::HashMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{
    canonicalize, normalized_ed, BlockModality, CanonMode, Domain, EvalError, HierLevel, Language,
    RawEvalRecord, Rejection,
};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Mean normalized edit distance of one column. `mean` is `None` for an empty group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub name: String,
    pub count: usize,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub mode: CanonMode,
    pub records: usize,
    /// Mean of the three modality group means.
    pub avg: Option<f64>,
    /// Mean over all scored records.
    pub overall_mean: Option<f64>,
    pub modality: Vec<GroupStat>,
    pub level: Vec<GroupStat>,
    pub language: Vec<GroupStat>,
    pub domain: Vec<GroupStat>,
    pub rejected: usize,
    pub rejections: Vec<Rejection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
}

/// Sum in ascending order so the result does not depend on record order.
fn order_free_mean(scores: &mut [f64]) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    scores.sort_by(f64::total_cmp);
    Some(scores.iter().sum::<f64>() / scores.len() as f64)
}

fn columns<K: Copy + Eq + std::hash::Hash>(
    keys: impl IntoIterator<Item = (K, String)>,
    scores: &mut HashMap<K, Vec<f64>>,
) -> Vec<GroupStat> {
    keys.into_iter()
        .map(|(key, name)| {
            let group = scores.get_mut(&key).map(Vec::as_mut_slice).unwrap_or_default();
            GroupStat {
                name,
                count: group.len(),
                mean: order_free_mean(group),
            }
        })
        .collect()
}

/// Scores every record and aggregates macro means per tag column.
///
/// Records with unknown tag values are rejected and counted; the run
/// continues. Only an empty input is an error.
pub fn evaluate<I>(records: I, mode: CanonMode) -> Result<EvalReport, EvalError>
where
    I: IntoIterator<Item = RawEvalRecord>,
{
    let mut seen = 0usize;
    let mut rejections = Vec::new();
    let mut all = Vec::new();
    let mut by_modality: HashMap<BlockModality, Vec<f64>> = HashMap::new();
    let mut by_level: HashMap<HierLevel, Vec<f64>> = HashMap::new();
    let mut by_language: HashMap<Language, Vec<f64>> = HashMap::new();
    let mut by_domain: HashMap<Domain, Vec<f64>> = HashMap::new();

    for raw in records {
        seen += 1;
        let record = match raw.validate() {
            Ok(r) => r,
            Err(rejection) => {
                log::warn!("rejected record {}: {}", rejection.id, rejection.reason);
                rejections.push(rejection);
                continue;
            }
        };
        let score = normalized_ed(&canonicalize(&record.gt, mode), &canonicalize(&record.pred, mode));
        all.push(score);
        by_modality.entry(record.tags.modality).or_default().push(score);
        if let Some(level) = record.tags.level {
            by_level.entry(level).or_default().push(score);
        }
        if let Some(language) = record.tags.language {
            by_language.entry(language).or_default().push(score);
        }
        if let Some(domain) = record.tags.domain {
            by_domain.entry(domain).or_default().push(score);
        }
    }
    if seen == 0 {
        return Err(EvalError::NoRecords);
    }
    rejections.sort_by(|a, b| (&a.id, &a.reason).cmp(&(&b.id, &b.reason)));

    let modality = columns(
        BlockModality::ALL.iter().map(|&m| (m, m.label().to_string())),
        &mut by_modality,
    );
    let mut modality_means: Vec<f64> = modality.iter().filter_map(|g| g.mean).collect();
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        mode,
        records: all.len(),
        avg: order_free_mean(&mut modality_means),
        overall_mean: order_free_mean(&mut all),
        modality,
        level: columns(HierLevel::ALL.iter().map(|&l| (l, l.to_string())), &mut by_level),
        language: columns(Language::ALL.iter().map(|&l| (l, l.label().to_string())), &mut by_language),
        domain: columns(Domain::ALL.iter().map(|&d| (d, d.label().to_string())), &mut by_domain),
        rejected: rejections.len(),
        rejections,
    })
}

fn fmt_mean(mean: Option<f64>) -> String {
    mean.map_or_else(|| "-".to_string(), |m| format!("{m:.4}"))
}

fn table_block(out: &mut String, title: &str, lead: Option<(&str, Option<f64>, usize)>, groups: &[GroupStat]) {
    let _ = writeln!(out, "[{title}]");
    let _ = writeln!(out, "{:<18}{:>8}{:>10}", "column", "count", "ned");
    if let Some((name, mean, count)) = lead {
        let _ = writeln!(out, "{:<18}{:>8}{:>10}", name, count, fmt_mean(mean));
    }
    for g in groups {
        let _ = writeln!(out, "{:<18}{:>8}{:>10}", g.name, g.count, fmt_mean(g.mean));
    }
    out.push('\n');
}

/// Renders a report. Column order is fixed: modality (Avg, Text, Formula,
/// Mix), the five levels, CH/EN/Mix, then the nine domains.
pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(report).expect("report serializes") + "\n"
        }
        ReportFormat::Table => {
            let mut out = String::new();
            let mode = match report.mode {
                CanonMode::Raw => "raw",
                CanonMode::Hst => "hst",
            };
            let _ = writeln!(
                out,
                "normalized edit distance (lower is better)  mode={mode}  records={}  rejected={}  overall={}\n",
                report.records,
                report.rejected,
                fmt_mean(report.overall_mean)
            );
            let scored: usize = report.modality.iter().map(|g| g.count).sum();
            table_block(&mut out, "modality", Some(("Avg", report.avg, scored)), &report.modality);
            table_block(&mut out, "level", None, &report.level);
            table_block(&mut out, "language", None, &report.language);
            table_block(&mut out, "domain", None, &report.domain);
            out
        }
    }
}

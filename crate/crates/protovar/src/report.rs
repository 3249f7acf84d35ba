//! Report models and deterministic rendering to CSV, JSON, and markdown.
//!
//! Stored CSV/JSON values carry full 64-bit round-trip precision; rounding
//! happens only at markdown render time (4 decimals for metrics, sigmas
//! and margins, 2 for volatility ratios, 1 for DS percentages). Undefined
//! cells render as `--` everywhere.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::lodo::{DomainSensitivityRow, LodoCell, LodoPlan, TransferResult};
use crate::metrics::MetricKind;
use crate::noise::{NoiseFloorRow, PrevalenceRow, StabilitySummary, VolatilityRow};
use crate::synth::PopulationSpec;
use crate::table::AuId;

/// The effective configuration of a run, embedded verbatim in every
/// report. Worker count is deliberately not part of it: artifacts must be
/// byte-identical for any `--jobs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub inputs: Vec<String>,
    pub model_tags: Vec<String>,
    pub k: Option<usize>,
    pub repeats: Option<usize>,
    pub master_seed: u64,
    pub threshold: f64,
    pub bootstrap_iterations: Option<usize>,
    pub alpha: Option<f64>,
    pub out_dir: String,
    pub formats: Vec<String>,
}

/// Fixed measurement conventions, restated in every report.
pub const CONVENTIONS: &[&str] = &[
    "a prediction is positive iff score >= threshold (ties at the threshold predict positive)",
    "AUC uses average ranks for tied scores; a tie counts one half in the pairwise form",
    "sigma is the sample standard deviation (n-1) over defined cells, pooled across all (partition, fold) evaluations; undefined cells are excluded and counted",
    "bootstrap confidence intervals use linear-interpolation percentiles at positions (n-1)*q over defined resamples",
    "adjudication uses a closed boundary: |delta| <= floor counts as WITHIN_NOISE",
    "a (label, score) pair enters a metric only when both are present; label-present/score-missing rows are reported per AU as dropped",
];

/// Schedule parameters and the seeds actually used, for reproduction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleEcho {
    pub k: usize,
    pub repeats: usize,
    pub master_seed: u64,
    pub partition_seeds: Vec<u64>,
}

/// Noise analysis of one model tag.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TagAnalysis {
    pub model_tag: String,
    pub noise_floor: Vec<NoiseFloorRow>,
    pub protocol_noise_floor_f1: f64,
    pub protocol_noise_floor_auc: f64,
    pub volatility: Vec<VolatilityRow>,
    pub dropped_by_au: Vec<(AuId, usize)>,
}

/// Consolidated cv-noise run report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvNoiseReport {
    pub config: RunConfig,
    pub conventions: Vec<String>,
    pub schedule: ScheduleEcho,
    /// Per partition, the per-AU fold prevalences (primary tag's table).
    pub prevalence_per_partition: Vec<Vec<PrevalenceRow>>,
    /// One analysis per model tag; the first is the primary.
    pub analyses: Vec<TagAnalysis>,
    pub stability: Vec<StabilitySummary>,
}

/// dataset × metric × AU grid of a LODO run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LodoGrid {
    pub aus: Vec<AuId>,
    pub rows: Vec<LodoGridRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LodoGridRow {
    pub metric: MetricKind,
    pub test_id: String,
    pub values: Vec<Option<f64>>,
}

/// Assembles the grid from per-dataset fold evaluations. The AU axis is
/// the sorted union over all fold tables; cells for AUs a table does not
/// annotate stay undefined.
pub fn lodo_grid(evals: &[(String, Vec<LodoCell>)]) -> LodoGrid {
    let mut aus: Vec<AuId> = evals
        .iter()
        .flat_map(|(_, cells)| cells.iter().map(|c| c.au))
        .collect();
    aus.sort_unstable();
    aus.dedup();
    let mut rows = Vec::new();
    for &metric in &MetricKind::ALL {
        for (test_id, cells) in evals {
            let values = aus
                .iter()
                .map(|&au| {
                    cells
                        .iter()
                        .find(|c| c.metric == metric && c.au == au)
                        .and_then(|c| c.value.value)
                })
                .collect();
            rows.push(LodoGridRow {
                metric,
                test_id: test_id.clone(),
                values,
            });
        }
    }
    LodoGrid { aus, rows }
}

/// One transfer-test outcome tagged with the held-out dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferRecord {
    pub test_id: String,
    #[serde(flatten)]
    pub result: TransferResult,
}

/// Bootstrap seed actually used for one transfer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferSeed {
    pub test_id: String,
    pub seed: u64,
}

/// (test_id, AU, metric) combinations that could not be tested because no
/// source reference was supplied or computable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissingSourceRef {
    pub test_id: String,
    pub au: AuId,
    pub metric: MetricKind,
}

/// Consolidated lodo / bootstrap run report. `transfers` and
/// `domain_sensitivity` are empty for grid-only runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LodoReport {
    pub config: RunConfig,
    pub conventions: Vec<String>,
    pub plan: LodoPlan,
    pub grid: LodoGrid,
    pub transfers: Vec<TransferRecord>,
    pub domain_sensitivity: Vec<DomainSensitivityRow>,
    pub transfer_seeds: Vec<TransferSeed>,
    pub missing_source_refs: Vec<MissingSourceRef>,
}

/// Provenance echo of a synthetic generation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthReport {
    pub config: RunConfig,
    pub spec: PopulationSpec,
    pub n_rows: usize,
    pub n_subjects: usize,
}

// ---------------------------------------------------------------------
// Value formatting

/// Full round-trip precision, for stored CSV values.
pub fn fmt_full(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_full_opt(v: Option<f64>) -> String {
    v.map(fmt_full).unwrap_or_else(|| "--".to_string())
}

/// Metric / sigma / margin precision for markdown.
pub fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

pub fn fmt4_opt(v: Option<f64>) -> String {
    v.map(fmt4).unwrap_or_else(|| "--".to_string())
}

pub fn fmt_signed4(v: f64) -> String {
    format!("{v:+.4}")
}

pub fn fmt_margin(v: f64) -> String {
    format!("±{v:.4}")
}

pub fn fmt_rho(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}"))
        .unwrap_or_else(|| "--".to_string())
}

pub fn fmt_ds(v: f64) -> String {
    format!("{v:.1}%")
}

// ---------------------------------------------------------------------
// CSV artifacts

pub fn prevalence_csv(rows: &[PrevalenceRow], k: usize) -> String {
    let mut out = String::from("au");
    for f in 0..k {
        out.push_str(&format!(",fold_{f}"));
    }
    out.push_str(",min,max,range\n");
    for row in rows {
        out.push_str(&row.au.0.to_string());
        for v in &row.per_fold {
            out.push(',');
            out.push_str(&fmt_full_opt(*v));
        }
        out.push_str(&format!(
            ",{},{},{}\n",
            fmt_full_opt(row.min),
            fmt_full_opt(row.max),
            fmt_full_opt(row.range)
        ));
    }
    out
}

pub fn noise_floor_csv(rows: &[NoiseFloorRow]) -> String {
    let mut out = String::from("metric,au,n,mean,sigma,margin95,min,max\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.metric,
            r.au.0,
            r.n_cells,
            fmt_full(r.mean),
            fmt_full(r.sigma),
            fmt_full(r.margin95),
            fmt_full(r.min),
            fmt_full(r.max)
        ));
    }
    out
}

pub fn volatility_csv(rows: &[VolatilityRow]) -> String {
    let mut out = String::from("au,sigma_f1,sigma_auc,rho\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.au.0,
            fmt_full(r.sigma_f1),
            fmt_full(r.sigma_auc),
            fmt_full_opt(r.rho)
        ));
    }
    out
}

pub fn lodo_metrics_csv(grid: &LodoGrid) -> String {
    let mut out = String::from("metric,dataset");
    for au in &grid.aus {
        out.push_str(&format!(",AU{}", au.0));
    }
    out.push('\n');
    for row in &grid.rows {
        out.push_str(&format!("{},{}", row.metric, row.test_id));
        for v in &row.values {
            out.push(',');
            out.push_str(&fmt_full_opt(*v));
        }
        out.push('\n');
    }
    out
}

pub fn transfers_csv(records: &[TransferRecord]) -> String {
    let mut out = String::from("test_id,au,metric,delta,ci_low,ci_high,significant\n");
    for rec in records {
        let r = &rec.result;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            rec.test_id,
            r.au.0,
            r.metric,
            fmt_full_opt(r.delta),
            fmt_full_opt(r.ci_low),
            fmt_full_opt(r.ci_high),
            r.significant
        ));
    }
    out
}

pub fn domain_sensitivity_csv(rows: &[DomainSensitivityRow]) -> String {
    let mut out = String::from("au,metric,n_transfers,n_significant,mean_delta,ds_percent\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.au.0,
            r.metric,
            r.n_transfers,
            r.n_significant,
            fmt_full(r.mean_delta),
            fmt_full(r.ds_percent)
        ));
    }
    out
}

pub fn backbone_stability_csv(rows: &[StabilitySummary]) -> String {
    let mut out = String::from("model,metric,n_aus,mean_sigma,max_sigma\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.model_tag,
            r.metric,
            r.per_au_sigma.len(),
            fmt_full(r.mean_sigma),
            fmt_full(r.max_sigma)
        ));
    }
    out
}

// ---------------------------------------------------------------------
// JSON

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report models serialize");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------
// Markdown

fn md_params(config: &RunConfig) -> String {
    let mut out = String::from("## Run\n\n| Parameter | Value |\n|---|---|\n");
    let mut push = |k: &str, v: String| out.push_str(&format!("| {k} | {v} |\n"));
    push("command", config.command.clone());
    if !config.inputs.is_empty() {
        push("inputs", config.inputs.join(", "));
    }
    if !config.model_tags.is_empty() {
        push("model tags", config.model_tags.join(", "));
    }
    if let Some(k) = config.k {
        push("k", k.to_string());
    }
    if let Some(r) = config.repeats {
        push("repeats", r.to_string());
    }
    push("master seed", config.master_seed.to_string());
    push("threshold", fmt_full(config.threshold));
    if let Some(b) = config.bootstrap_iterations {
        push("bootstrap iterations", b.to_string());
    }
    if let Some(a) = config.alpha {
        push("alpha", fmt_full(a));
    }
    push("output directory", config.out_dir.clone());
    push("formats", config.formats.join(", "));
    out
}

fn md_conventions(conventions: &[String]) -> String {
    let mut out = String::from("\n## Conventions\n\n");
    for c in conventions {
        out.push_str(&format!("- {c}\n"));
    }
    out
}

fn md_prevalence(rows: &[PrevalenceRow], k: usize) -> String {
    let mut out = String::from("\n## AU prevalence across folds (partition 0)\n\n| AU |");
    for f in 0..k {
        out.push_str(&format!(" fold {f} |"));
    }
    out.push_str(" Min | Max | Range |\n|---|");
    out.push_str(&"---|".repeat(k + 3));
    out.push('\n');
    for row in rows {
        out.push_str(&format!("| {} |", row.au));
        for v in &row.per_fold {
            out.push_str(&format!(" {} |", fmt4_opt(*v)));
        }
        out.push_str(&format!(
            " {} | {} | {} |\n",
            fmt4_opt(row.min),
            fmt4_opt(row.max),
            fmt4_opt(row.range)
        ));
    }
    out
}

fn md_noise_floor(rows: &[NoiseFloorRow], metric: MetricKind) -> String {
    let mut out = format!(
        "\n### Noise floor per AU — {metric}\n\n| AU | n | Mean | σ | 95% margin | Min | Max |\n|---|---|---|---|---|---|---|\n"
    );
    for r in rows.iter().filter(|r| r.metric == metric) {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} |\n",
            r.au,
            r.n_cells,
            fmt4(r.mean),
            fmt4(r.sigma),
            fmt_margin(r.margin95),
            fmt4(r.min),
            fmt4(r.max)
        ));
    }
    out
}

fn md_volatility(rows: &[VolatilityRow]) -> String {
    let mut out = String::from(
        "\n### F1 vs AUC volatility\n\n| AU | σ_F1 | σ_AUC | ρ |\n|---|---|---|---|\n",
    );
    for r in rows {
        out.push_str(&format!(
            "| {} | {} | {} | {} |\n",
            r.au,
            fmt4(r.sigma_f1),
            fmt4(r.sigma_auc),
            fmt_rho(r.rho)
        ));
    }
    out
}

fn md_dropped(dropped: &[(AuId, usize)]) -> String {
    let mut out = String::from(
        "\n### Dropped rows (label present, score missing)\n\n| AU | Dropped |\n|---|---|\n",
    );
    for (au, n) in dropped {
        out.push_str(&format!("| {au} | {n} |\n"));
    }
    out
}

pub fn render_cv_markdown(report: &CvNoiseReport) -> String {
    let mut out = String::from("# Split-noise report\n\n");
    out.push_str(&md_params(&report.config));
    out.push_str(&md_conventions(&report.conventions));
    out.push_str(&format!(
        "\n## Schedule\n\nk = {}, repeats = {}, master seed = {}, partition seeds = [{}]\n",
        report.schedule.k,
        report.schedule.repeats,
        report.schedule.master_seed,
        report
            .schedule
            .partition_seeds
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    ));
    if let Some(first) = report.prevalence_per_partition.first() {
        out.push_str(&md_prevalence(first, report.schedule.k));
    }
    for analysis in &report.analyses {
        out.push_str(&format!("\n## Model `{}`\n", analysis.model_tag));
        out.push_str(&md_noise_floor(&analysis.noise_floor, MetricKind::F1));
        out.push_str(&md_noise_floor(&analysis.noise_floor, MetricKind::Auc));
        out.push_str(&format!(
            "\nProtocol noise floor (mean 95% margin): F1 {}, AUC {}\n",
            fmt_margin(analysis.protocol_noise_floor_f1),
            fmt_margin(analysis.protocol_noise_floor_auc)
        ));
        out.push_str(&md_volatility(&analysis.volatility));
        out.push_str(&md_dropped(&analysis.dropped_by_au));
    }
    if report.stability.len() > MetricKind::ALL.len() {
        // Only worth a table when several tags are compared.
        out.push_str(
            "\n## Cross-model stability\n\n| Model | Metric | Mean σ | Max σ |\n|---|---|---|---|\n",
        );
        for s in &report.stability {
            out.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                s.model_tag,
                s.metric,
                fmt4(s.mean_sigma),
                fmt4(s.max_sigma)
            ));
        }
    }
    out
}

fn md_lodo_grid(grid: &LodoGrid) -> String {
    let mut out = String::from("\n## LODO performance\n\n| Metric | Test dataset |");
    for au in &grid.aus {
        out.push_str(&format!(" {au} |"));
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---|".repeat(grid.aus.len()));
    out.push('\n');
    for row in &grid.rows {
        out.push_str(&format!("| {} | {} |", row.metric, row.test_id));
        for v in &row.values {
            out.push_str(&format!(" {} |", fmt4_opt(*v)));
        }
        out.push('\n');
    }
    out
}

fn md_transfers(records: &[TransferRecord]) -> String {
    let mut out = String::from(
        "\n## Transfer shifts (subject-level bootstrap)\n\n| Test dataset | AU | Metric | Δ | CI low | CI high | Significant |\n|---|---|---|---|---|---|---|\n",
    );
    for rec in records {
        let r = &rec.result;
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} |\n",
            rec.test_id,
            r.au,
            r.metric,
            r.delta.map(fmt_signed4).unwrap_or_else(|| "--".to_string()),
            fmt4_opt(r.ci_low),
            fmt4_opt(r.ci_high),
            if r.significant { "yes" } else { "no" }
        ));
    }
    out
}

fn md_domain_sensitivity(rows: &[DomainSensitivityRow]) -> String {
    // One row per AU with both metrics side by side.
    let mut by_au: BTreeMap<AuId, [Option<&DomainSensitivityRow>; 2]> = BTreeMap::new();
    for r in rows {
        let slot = match r.metric {
            MetricKind::F1 => 0,
            MetricKind::Auc => 1,
        };
        by_au.entry(r.au).or_default()[slot] = Some(r);
    }
    let mut out = String::from(
        "\n## Domain sensitivity\n\n| AU | Mean ΔF1 | Mean ΔAUC | F1 DS | AUC DS | F1 n | AUC n |\n|---|---|---|---|---|---|---|\n",
    );
    for (au, [f1, auc]) in &by_au {
        let delta = |r: Option<&DomainSensitivityRow>| {
            r.map(|x| fmt_signed4(x.mean_delta))
                .unwrap_or_else(|| "--".to_string())
        };
        let ds = |r: Option<&DomainSensitivityRow>| {
            r.map(|x| fmt_ds(x.ds_percent))
                .unwrap_or_else(|| "--".to_string())
        };
        let n = |r: Option<&DomainSensitivityRow>| {
            r.map(|x| x.n_transfers.to_string())
                .unwrap_or_else(|| "--".to_string())
        };
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} |\n",
            au,
            delta(*f1),
            delta(*auc),
            ds(*f1),
            ds(*auc),
            n(*f1),
            n(*auc)
        ));
    }
    out
}

pub fn render_lodo_markdown(report: &LodoReport) -> String {
    let mut out = String::from("# LODO report\n\n");
    out.push_str(&md_params(&report.config));
    out.push_str(&md_conventions(&report.conventions));
    out.push_str("\n## Plan\n\n| Test dataset | Train datasets |\n|---|---|\n");
    for fold in &report.plan.folds {
        out.push_str(&format!(
            "| {} | {} |\n",
            fold.test_id,
            fold.train_ids.join(", ")
        ));
    }
    out.push_str(&md_lodo_grid(&report.grid));
    if !report.transfers.is_empty() {
        out.push_str(&md_transfers(&report.transfers));
    }
    if !report.domain_sensitivity.is_empty() {
        out.push_str(&md_domain_sensitivity(&report.domain_sensitivity));
    }
    if !report.transfer_seeds.is_empty() {
        out.push_str("\n## Bootstrap seeds\n\n| Test dataset | Seed |\n|---|---|\n");
        for s in &report.transfer_seeds {
            out.push_str(&format!("| {} | {} |\n", s.test_id, s.seed));
        }
    }
    out
}

pub fn render_synth_markdown(report: &SynthReport) -> String {
    let mut out = String::from("# Synthetic population report\n\n");
    out.push_str(&md_params(&report.config));
    out.push_str(&format!(
        "\n## Output\n\nGenerated {} rows over {} subjects (dataset `{}`), AUs: {}.\n",
        report.n_rows,
        report.n_subjects,
        report.spec.dataset_id,
        report
            .spec
            .aus
            .iter()
            .map(|a| a.au.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    ));
    out
}

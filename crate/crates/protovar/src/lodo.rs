//! Leave-one-dataset-out evaluation, subject-level bootstrap resampling,
//! transfer-shift significance, and the domain-sensitivity summary.
//!
//! The harness consumes one prediction table per held-out dataset; model
//! training happens elsewhere. Only target subjects are resampled — the
//! source reference stays fixed across bootstrap iterations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::metrics::{metric_value, MetricKind, MetricValue};
use crate::seed::{derive_seed, rng_from};
use crate::stats;
use crate::table::{AuId, EvalTable};

/// One train/test split of the LODO rotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LodoFold {
    pub train_ids: Vec<String>,
    pub test_id: String,
}

/// The full rotation: each dataset held out exactly once, ordered by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LodoPlan {
    pub folds: Vec<LodoFold>,
}

/// Builds the rotation from at least two dataset ids.
pub fn lodo_plan(dataset_ids: &[String]) -> Result<LodoPlan> {
    let mut ids: Vec<String> = dataset_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::Validation(format!(
            "LODO needs at least 2 datasets, got {}",
            ids.len()
        )));
    }
    let folds = ids
        .iter()
        .map(|test_id| LodoFold {
            train_ids: ids.iter().filter(|d| *d != test_id).cloned().collect(),
            test_id: test_id.clone(),
        })
        .collect();
    Ok(LodoPlan { folds })
}

/// One cell of the LODO grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LodoCell {
    pub metric: MetricKind,
    pub au: AuId,
    pub value: MetricValue,
}

/// Per-AU F1 and AUC over every row of the held-out table. AUs without
/// present labels (or without a usable class split, for AUC) come back
/// undefined and render as `--`.
pub fn evaluate_lodo_fold(target: &EvalTable, threshold: f64) -> Vec<LodoCell> {
    let mut cells = Vec::new();
    for &metric in &MetricKind::ALL {
        for &au in target.schema().au_ids() {
            let pairs = target.valid_pairs(au, |_| true).expect("schema AU");
            cells.push(LodoCell {
                metric,
                au,
                value: metric_value(metric, &pairs.pairs, threshold),
            });
        }
    }
    cells
}

/// Bootstrap replicate values for one (AU, metric), resampling subjects
/// with replacement. Undefined resamples are excluded from `values` and
/// counted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSamples {
    pub values: Vec<f64>,
    pub n_undefined: usize,
}

/// Runs `b` bootstrap iterations on the target's subject set. Iteration
/// `i` draws `|S|` subjects with replacement from an RNG seeded with
/// `derive_seed(seed, "boot", i)`; a subject drawn m times contributes its
/// rows m times. Scheduling cannot change the result.
pub fn bootstrap_metric(
    target: &EvalTable,
    au: AuId,
    metric: MetricKind,
    b: usize,
    seed: u64,
    threshold: f64,
) -> Result<BootstrapSamples> {
    if b < 1 {
        return Err(Error::Validation(
            "bootstrap iterations must be >= 1".into(),
        ));
    }
    let subjects = target.subjects(None)?;
    if subjects.is_empty() {
        return Err(Error::Validation("bootstrap target table is empty".into()));
    }
    let per_subject: Vec<Vec<(bool, f64)>> = subjects
        .iter()
        .map(|s| {
            target
                .valid_pairs(au, |r| r.subject_id == *s)
                .map(|p| p.pairs)
        })
        .collect::<Result<_>>()?;
    let n = subjects.len();
    let raw = exec::map_indexed(b, |i| {
        let mut rng = rng_from(derive_seed(seed, "boot", i as u64));
        let mut pooled = Vec::new();
        for _ in 0..n {
            use rand::Rng;
            let j = rng.random_range(0..n);
            pooled.extend_from_slice(&per_subject[j]);
        }
        metric_value(metric, &pooled, threshold).value
    });
    let n_undefined = raw.iter().filter(|v| v.is_none()).count();
    Ok(BootstrapSamples {
        values: raw.into_iter().flatten().collect(),
        n_undefined,
    })
}

/// Outcome of one bootstrap significance test for one (AU, metric) on one
/// transfer. `ci_low`/`ci_high` are `None` only when every resample was
/// undefined, in which case `significant` is forced to `false`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferResult {
    pub au: AuId,
    pub metric: MetricKind,
    pub source_ref: f64,
    pub target_value: Option<f64>,
    /// Point shift: target metric on the unresampled table minus source_ref.
    pub delta: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub significant: bool,
    pub iterations: usize,
    pub n_undefined: usize,
    pub alpha: f64,
}

/// Two-sided percentile test of the shift `target - source_ref` under
/// subject resampling. The CI is the empirical [alpha/2, 1 - alpha/2]
/// interval of the bootstrap deltas (linear-interpolation percentiles);
/// a transfer is significant iff 0 lies outside the closed CI.
#[allow(clippy::too_many_arguments)]
pub fn transfer_test(
    target: &EvalTable,
    au: AuId,
    metric: MetricKind,
    source_ref: f64,
    b: usize,
    seed: u64,
    alpha: f64,
    threshold: f64,
) -> Result<TransferResult> {
    if !(0.0..1.0).contains(&alpha) || alpha <= 0.0 {
        return Err(Error::Validation(format!(
            "alpha must be in (0,1), got {alpha}"
        )));
    }
    let samples = bootstrap_metric(target, au, metric, b, seed, threshold)?;
    let point = {
        let pairs = target.valid_pairs(au, |_| true)?;
        metric_value(metric, &pairs.pairs, threshold).value
    };
    let delta = point.map(|v| v - source_ref);

    let mut deltas: Vec<f64> = samples.values.iter().map(|v| v - source_ref).collect();
    deltas.sort_by(f64::total_cmp);
    let (ci_low, ci_high, significant) = if deltas.is_empty() {
        (None, None, false)
    } else {
        let lo = stats::percentile_linear(&deltas, alpha / 2.0);
        let hi = stats::percentile_linear(&deltas, 1.0 - alpha / 2.0);
        (Some(lo), Some(hi), 0.0 < lo || 0.0 > hi)
    };
    Ok(TransferResult {
        au,
        metric,
        source_ref,
        target_value: point,
        delta,
        ci_low,
        ci_high,
        significant,
        iterations: b,
        n_undefined: samples.n_undefined,
        alpha,
    })
}

/// Domain-sensitivity summary for one (AU, metric) across transfers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainSensitivityRow {
    pub au: AuId,
    pub metric: MetricKind,
    /// Transfers where the AU was annotated in the target (defined delta).
    pub n_transfers: usize,
    pub n_significant: usize,
    pub ds_percent: f64,
    /// Signed average shift over the counted transfers.
    pub mean_delta: f64,
}

/// Aggregates transfer results for one (AU, metric). Transfers whose target
/// metric is undefined never enter the denominator.
pub fn domain_sensitivity(results: &[TransferResult]) -> Result<DomainSensitivityRow> {
    let first = results
        .first()
        .ok_or_else(|| Error::Validation("domain sensitivity over no transfers".into()))?;
    if results
        .iter()
        .any(|r| r.au != first.au || r.metric != first.metric)
    {
        return Err(Error::Validation(
            "domain sensitivity input mixes (au, metric) groups".into(),
        ));
    }
    let annotated: Vec<&TransferResult> = results.iter().filter(|r| r.delta.is_some()).collect();
    if annotated.is_empty() {
        return Err(Error::InsufficientObservations(format!(
            "{} {}: no transfer has the AU annotated in its target",
            first.metric, first.au
        )));
    }
    let n_transfers = annotated.len();
    let n_significant = annotated.iter().filter(|r| r.significant).count();
    let deltas: Vec<f64> = annotated.iter().filter_map(|r| r.delta).collect();
    Ok(DomainSensitivityRow {
        au: first.au,
        metric: first.metric,
        n_transfers,
        n_significant,
        ds_percent: 100.0 * n_significant as f64 / n_transfers as f64,
        mean_delta: stats::mean(&deltas).expect("non-empty"),
    })
}

/// Mean of the per-source-dataset metric values over the supplied source
/// evaluation tables; `None` when the metric is undefined on every source.
pub fn source_ref_mean(
    sources: &[EvalTable],
    au: AuId,
    metric: MetricKind,
    threshold: f64,
) -> Option<f64> {
    let values: Vec<f64> = sources
        .iter()
        .filter_map(|t| {
            let pairs = t.valid_pairs(au, |_| true).ok()?;
            metric_value(metric, &pairs.pairs, threshold).value
        })
        .collect();
    stats::mean(&values)
}

/// A fixed source reference supplied through the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRef {
    pub metric: MetricKind,
    pub au: AuId,
    pub value: f64,
}

/// One transfer: a held-out dataset's prediction table plus the source
/// references to compare against, given either explicitly or as paths to
/// source evaluation tables (their per-dataset metric means become the
/// references).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSpec {
    pub test_id: String,
    pub table: PathBuf,
    #[serde(default)]
    pub source_refs: Vec<SourceRef>,
    #[serde(default)]
    pub source_tables: Vec<PathBuf>,
}

/// Manifest listing every transfer of a LODO run. Relative paths are
/// resolved against the manifest file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferManifest {
    pub transfers: Vec<TransferSpec>,
}

impl TransferManifest {
    pub fn parse(json: &str) -> Result<Self> {
        let manifest: TransferManifest = serde_json::from_str(json)
            .map_err(|e| Error::Validation(format!("bad transfer manifest: {e}")))?;
        if manifest.transfers.is_empty() {
            return Err(Error::Validation(
                "transfer manifest lists no transfers".into(),
            ));
        }
        let mut ids: Vec<&str> = manifest
            .transfers
            .iter()
            .map(|t| t.test_id.as_str())
            .collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation(
                "transfer manifest repeats a test_id".into(),
            ));
        }
        Ok(manifest)
    }

    /// Resolves a manifest-relative path.
    pub fn resolve(manifest_path: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }
}

/// Source references for one transfer keyed by (metric, AU), either copied
/// from the manifest or computed from source tables.
pub fn resolve_source_refs(
    spec: &TransferSpec,
    source_tables: &[EvalTable],
    aus: &[AuId],
    threshold: f64,
) -> BTreeMap<(MetricKind, AuId), f64> {
    let mut refs = BTreeMap::new();
    if !spec.source_refs.is_empty() {
        for r in &spec.source_refs {
            refs.insert((r.metric, r.au), r.value);
        }
        return refs;
    }
    for &metric in &MetricKind::ALL {
        for &au in aus {
            if let Some(v) = source_ref_mean(source_tables, au, metric, threshold) {
                refs.insert((metric, au), v);
            }
        }
    }
    refs
}

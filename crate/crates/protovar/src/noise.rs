//! Fold-level prevalence perturbation, per-AU noise-floor statistics, the
//! protocol-level noise floor, F1/AUC volatility, and delta adjudication.
//!
//! Statistics pool all (partition × fold) cells for an AU. Sigma is the
//! sample standard deviation (n−1); undefined cells are excluded and
//! counted rather than imputed.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::metrics::{metric_value, prevalence, MetricKind};
use crate::split::{fold_slices, FoldAssignment, ProtocolSchedule};
use crate::stats;
use crate::table::{AuId, EvalTable};

/// Factor of the two-sided 95% margin under a normal approximation.
pub const MARGIN95_FACTOR: f64 = 1.96;

/// 95% instability margin for a metric's cross-split sigma.
pub fn margin95(sigma: f64) -> f64 {
    MARGIN95_FACTOR * sigma
}

/// Per-AU prevalence across the folds of one partition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrevalenceRow {
    pub au: AuId,
    pub per_fold: Vec<Option<f64>>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub range: Option<f64>,
    /// Folds whose prevalence was undefined (no present labels).
    pub n_undefined_folds: usize,
}

/// Builds a row from per-fold prevalences; min/max/range are taken over the
/// defined folds only.
pub fn prevalence_row(au: AuId, per_fold: Vec<Option<f64>>) -> PrevalenceRow {
    let defined: Vec<f64> = per_fold.iter().flatten().copied().collect();
    let n_undefined_folds = per_fold.len() - defined.len();
    let min = defined.iter().copied().reduce(f64::min);
    let max = defined.iter().copied().reduce(f64::max);
    let range = match (min, max) {
        (Some(lo), Some(hi)) => Some(hi - lo),
        _ => None,
    };
    PrevalenceRow {
        au,
        per_fold,
        min,
        max,
        range,
        n_undefined_folds,
    }
}

/// Per-AU fold prevalences for one partition, rows ordered by AU.
pub fn prevalence_table(table: &EvalTable, fa: &FoldAssignment) -> Result<Vec<PrevalenceRow>> {
    let slices = fold_slices(table, fa)?;
    table
        .schema()
        .au_ids()
        .iter()
        .map(|&au| {
            let per_fold = slices
                .iter()
                .map(|rows| {
                    let idx = table.schema().index_of(au).expect("au from schema");
                    prevalence(rows.iter().map(|&r| table.rows()[r].label_at(idx))).value
                })
                .collect();
            Ok(prevalence_row(au, per_fold))
        })
        .collect()
}

/// One metric observation on one held-out fold of one partition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricCell {
    pub metric: MetricKind,
    pub au: AuId,
    pub partition: usize,
    pub fold: usize,
    pub model_tag: String,
    pub value: Option<f64>,
}

/// Evaluates every (metric, AU, partition, fold) cell over the held-out
/// fold's rows. Cells are independent tasks; output order is fixed as
/// (partition, fold, AU, metric) regardless of how they execute.
pub fn metric_matrix(
    table: &EvalTable,
    schedule: &ProtocolSchedule,
    model_tag: &str,
    metrics: &[MetricKind],
    threshold: f64,
) -> Result<Vec<MetricCell>> {
    let mut fold_rows = Vec::new();
    for (p, fa) in schedule.partitions.iter().enumerate() {
        for (f, rows) in fold_slices(table, fa)?.into_iter().enumerate() {
            fold_rows.push((p, f, rows));
        }
    }
    let aus = table.schema().au_ids().to_vec();
    let cells = exec::map_indexed(fold_rows.len() * aus.len(), |i| {
        let (p, f, rows) = &fold_rows[i / aus.len()];
        let au = aus[i % aus.len()];
        let pairs = table
            .pairs_for_rows(au, rows)
            .expect("schema AU is always valid");
        metrics
            .iter()
            .map(|&metric| MetricCell {
                metric,
                au,
                partition: *p,
                fold: *f,
                model_tag: model_tag.to_string(),
                value: metric_value(metric, &pairs.pairs, threshold).value,
            })
            .collect::<Vec<_>>()
    });
    Ok(cells.into_iter().flatten().collect())
}

/// Noise-floor statistics for one (metric, AU) over defined cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseFloorRow {
    pub metric: MetricKind,
    pub au: AuId,
    /// Defined cells entering the statistics.
    pub n_cells: usize,
    pub mean: f64,
    pub sigma: f64,
    pub margin95: f64,
    pub min: f64,
    pub max: f64,
}

/// Aggregates one (metric, AU) group of cell values. At least two defined
/// values are required.
pub fn noise_floor(
    metric: MetricKind,
    au: AuId,
    cell_values: &[Option<f64>],
) -> Result<NoiseFloorRow> {
    let defined: Vec<f64> = cell_values.iter().flatten().copied().collect();
    if defined.len() < 2 {
        return Err(Error::InsufficientObservations(format!(
            "{metric} {au}: {} defined cells, need at least 2",
            defined.len()
        )));
    }
    let mean = stats::mean(&defined).expect("non-empty");
    let sigma = stats::sample_std(&defined).expect("len >= 2");
    let min = defined.iter().copied().fold(f64::INFINITY, f64::min);
    let max = defined.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(NoiseFloorRow {
        metric,
        au,
        n_cells: defined.len(),
        mean,
        sigma,
        margin95: margin95(sigma),
        min,
        max,
    })
}

/// Groups cells by (metric, AU) and aggregates each group; rows come back
/// ordered by (metric, AU). All cells must carry the same model tag.
pub fn noise_floor_table(cells: &[MetricCell]) -> Result<Vec<NoiseFloorRow>> {
    let mut groups: BTreeMap<(MetricKind, AuId), Vec<Option<f64>>> = BTreeMap::new();
    for cell in cells {
        groups
            .entry((cell.metric, cell.au))
            .or_default()
            .push(cell.value);
    }
    groups
        .into_iter()
        .map(|((metric, au), values)| noise_floor(metric, au, &values))
        .collect()
}

/// Protocol-level noise floor: the arithmetic mean of the per-AU 95%
/// margins for one metric.
pub fn protocol_noise_floor(rows: &[NoiseFloorRow], metric: MetricKind) -> Result<f64> {
    let margins: Vec<f64> = rows
        .iter()
        .filter(|r| r.metric == metric)
        .map(|r| r.margin95)
        .collect();
    stats::mean(&margins).ok_or_else(|| {
        Error::InsufficientObservations(format!("no {metric} noise-floor rows to average"))
    })
}

/// How much more (or less) the operating-point metric fluctuates than the
/// ranking metric: `rho = sigma_f1 / sigma_auc`. Undefined when
/// `sigma_auc` is zero.
pub fn volatility_ratio(sigma_f1: f64, sigma_auc: f64) -> Option<f64> {
    (sigma_auc > 0.0).then(|| sigma_f1 / sigma_auc)
}

/// Per-AU sigma comparison between F1 and AUC.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolatilityRow {
    pub au: AuId,
    pub sigma_f1: f64,
    pub sigma_auc: f64,
    pub rho: Option<f64>,
}

/// Joins F1 and AUC noise-floor rows by AU. AUs lacking either metric are
/// skipped.
pub fn volatility_table(rows: &[NoiseFloorRow]) -> Vec<VolatilityRow> {
    let mut by_au: BTreeMap<AuId, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for row in rows {
        let entry = by_au.entry(row.au).or_default();
        match row.metric {
            MetricKind::F1 => entry.0 = Some(row.sigma),
            MetricKind::Auc => entry.1 = Some(row.sigma),
        }
    }
    by_au
        .into_iter()
        .filter_map(|(au, (f1, auc))| match (f1, auc) {
            (Some(sigma_f1), Some(sigma_auc)) => Some(VolatilityRow {
                au,
                sigma_f1,
                sigma_auc,
                rho: volatility_ratio(sigma_f1, sigma_auc),
            }),
            _ => None,
        })
        .collect()
}

/// Whether a reported delta clears the protocol noise floor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Adjudication {
    WithinNoise,
    ExceedsNoise,
}

impl fmt::Display for Adjudication {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Adjudication::WithinNoise => write!(f, "WITHIN_NOISE"),
            Adjudication::ExceedsNoise => write!(f, "EXCEEDS_NOISE"),
        }
    }
}

/// `WithinNoise` iff `|delta| <= floor` (closed boundary).
pub fn adjudicate_delta(delta: f64, floor: f64) -> Adjudication {
    debug_assert!(floor >= 0.0);
    if delta.abs() <= floor {
        Adjudication::WithinNoise
    } else {
        Adjudication::ExceedsNoise
    }
}

/// Cross-split stability of one model tag: per-AU sigma plus its mean and
/// max over AUs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilitySummary {
    pub model_tag: String,
    pub metric: MetricKind,
    pub per_au_sigma: Vec<(AuId, f64)>,
    pub mean_sigma: f64,
    pub max_sigma: f64,
}

/// Summarizes per-tag sigma for one metric over cells that may mix several
/// model tags. Every (tag, AU) group needs at least two defined cells.
pub fn backbone_stability_summary(
    cells: &[MetricCell],
    metric: MetricKind,
) -> Result<Vec<StabilitySummary>> {
    let mut groups: BTreeMap<(&str, AuId), Vec<Option<f64>>> = BTreeMap::new();
    for cell in cells.iter().filter(|c| c.metric == metric) {
        groups
            .entry((cell.model_tag.as_str(), cell.au))
            .or_default()
            .push(cell.value);
    }
    let mut by_tag: BTreeMap<&str, Vec<(AuId, f64)>> = BTreeMap::new();
    for ((tag, au), values) in groups {
        let defined: Vec<f64> = values.iter().flatten().copied().collect();
        let sigma = stats::sample_std(&defined).ok_or_else(|| {
            Error::InsufficientObservations(format!(
                "{tag} {metric} {au}: {} defined cells, need at least 2",
                defined.len()
            ))
        })?;
        by_tag.entry(tag).or_default().push((au, sigma));
    }
    Ok(by_tag
        .into_iter()
        .map(|(tag, per_au_sigma)| {
            let sigmas: Vec<f64> = per_au_sigma.iter().map(|(_, s)| *s).collect();
            StabilitySummary {
                model_tag: tag.to_string(),
                metric,
                mean_sigma: stats::mean(&sigmas).expect("non-empty group"),
                max_sigma: sigmas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                per_au_sigma,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::split::{make_partition, make_schedule};
    use crate::table::parse_eval_table;
    use approx::assert_abs_diff_eq;

    fn au(n: u16) -> AuId {
        AuId(n)
    }

    #[test]
    fn prevalence_row_published_range() {
        // Reference row: min 0.0490, max 0.1016 across three folds.
        let row = prevalence_row(au(2), vec![Some(0.0490), Some(0.0700), Some(0.1016)]);
        assert_abs_diff_eq!(row.range.unwrap(), 0.0526, epsilon = 1e-12);
        assert_eq!(row.n_undefined_folds, 0);
    }

    #[test]
    fn prevalence_row_edge_cases() {
        let flat = prevalence_row(au(1), vec![Some(0.3), Some(0.3), Some(0.3)]);
        assert_eq!(flat.range, Some(0.0));

        let partial = prevalence_row(au(1), vec![Some(0.2), None, Some(0.5)]);
        assert_eq!(partial.n_undefined_folds, 1);
        assert_abs_diff_eq!(partial.range.unwrap(), 0.3, epsilon = 1e-12);

        let empty = prevalence_row(au(1), vec![None, None]);
        assert_eq!(empty.range, None);
        assert_eq!(empty.n_undefined_folds, 2);
    }

    #[test]
    fn prevalence_table_two_fold_hand_count() {
        // Fold of S1: labels [1,0,0,0] -> 0.25; fold of S2: [1,1,1,0] -> 0.75.
        let csv = "dataset,subject,frame,label_AU1,score_AU1\n\
                   d,S1,F1,1,0.9\nd,S1,F2,0,0.1\nd,S1,F3,0,0.2\nd,S1,F4,0,0.3\n\
                   d,S2,F1,1,0.9\nd,S2,F2,1,0.8\nd,S2,F3,1,0.7\nd,S2,F4,0,0.1\n";
        let table = parse_eval_table(csv, None).unwrap();
        let fa = make_partition(&table.subjects(None).unwrap(), 2, 0).unwrap();
        let rows = prevalence_table(&table, &fa).unwrap();
        assert_eq!(rows.len(), 1);
        assert_abs_diff_eq!(rows[0].range.unwrap(), 0.5, epsilon = 1e-12);
        let mut per_fold: Vec<f64> = rows[0].per_fold.iter().flatten().copied().collect();
        per_fold.sort_by(f64::total_cmp);
        assert_eq!(per_fold, vec![0.25, 0.75]);
    }

    fn toy_table() -> EvalTable {
        // Six subjects, AU1 informative, AU2 all-negative for one subject
        // pair so some AUC cells go undefined under k=3.
        let mut csv =
            String::from("dataset,subject,frame,label_AU1,score_AU1,label_AU2,score_AU2\n");
        for (s, (l1, s1, l2, s2)) in [
            ("S0", (1, 0.9, 1, 0.8)),
            ("S1", (0, 0.2, 0, 0.3)),
            ("S2", (1, 0.7, 0, 0.2)),
            ("S3", (0, 0.4, 0, 0.1)),
            ("S4", (1, 0.8, 1, 0.9)),
            ("S5", (0, 0.1, 0, 0.4)),
        ] {
            for f in 0..3 {
                csv.push_str(&format!("d,{s},F{f},{l1},{s1},{l2},{s2}\n"));
            }
        }
        parse_eval_table(&csv, None).unwrap()
    }

    #[test]
    fn metric_matrix_shape_and_keying() {
        let table = toy_table();
        let schedule = make_schedule(&table.subjects(None).unwrap(), 3, 4, 7).unwrap();
        let cells = metric_matrix(&table, &schedule, "m", &MetricKind::ALL, 0.5).unwrap();
        // repeats * k * aus * metrics
        assert_eq!(cells.len(), 4 * 3 * 2 * 2);
        let mut keys: Vec<_> = cells
            .iter()
            .map(|c| (c.metric, c.au, c.partition, c.fold))
            .collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), cells.len(), "cells must be uniquely keyed");
        assert!(cells.iter().all(|c| c.model_tag == "m"));
    }

    #[test]
    fn metric_matrix_undefined_single_class_fold() {
        // One subject per fold; S1's fold has only negative AU1 labels.
        let csv = "dataset,subject,frame,label_AU1,score_AU1\n\
                   d,S0,F1,1,0.9\nd,S0,F2,0,0.1\n\
                   d,S1,F1,0,0.6\nd,S1,F2,0,0.2\n";
        let table = parse_eval_table(csv, None).unwrap();
        let schedule = make_schedule(&table.subjects(None).unwrap(), 2, 1, 3).unwrap();
        let cells = metric_matrix(&table, &schedule, "m", &[MetricKind::Auc], 0.5).unwrap();
        let undefined = cells.iter().filter(|c| c.value.is_none()).count();
        assert_eq!(undefined, 1);
    }

    #[test]
    fn identical_subjects_give_zero_sigma_for_every_k() {
        // Every subject carries the same rows, so every fold evaluates to
        // the same value and the cross-split sigma vanishes for any k.
        let mut csv = String::from("dataset,subject,frame,label_AU1,score_AU1\n");
        for s in 0..6 {
            for (f, (l, sc)) in [(1, 0.9), (0, 0.2), (1, 0.7), (0, 0.4)].iter().enumerate() {
                csv.push_str(&format!("d,S{s},F{f},{l},{sc}\n"));
            }
        }
        let table = parse_eval_table(&csv, None).unwrap();
        let subjects = table.subjects(None).unwrap();
        for k in [2, 3] {
            let schedule = make_schedule(&subjects, k, 2, 9).unwrap();
            let cells = metric_matrix(&table, &schedule, "m", &MetricKind::ALL, 0.5).unwrap();
            for row in noise_floor_table(&cells).unwrap() {
                assert_eq!(row.sigma, 0.0, "k={k} {:?} {}", row.metric, row.au);
                assert_eq!(row.margin95, 0.0);
            }
        }
    }

    #[test]
    fn noise_floor_direct_formula() {
        let row = noise_floor(MetricKind::F1, au(1), &[Some(0.4), Some(0.5), Some(0.6)]).unwrap();
        assert_abs_diff_eq!(row.sigma, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(row.margin95, 0.196, epsilon = 1e-12);
        assert_abs_diff_eq!(row.mean, 0.5, epsilon = 1e-12);
        assert_eq!((row.min, row.max, row.n_cells), (0.4, 0.6, 3));

        let flat = noise_floor(MetricKind::F1, au(1), &[Some(0.5), Some(0.5), Some(0.5)]).unwrap();
        assert_eq!((flat.sigma, flat.margin95), (0.0, 0.0));
    }

    #[test]
    fn noise_floor_requires_two_defined_cells() {
        let err = noise_floor(MetricKind::F1, au(1), &[Some(0.4), None]).unwrap_err();
        assert!(matches!(err, Error::InsufficientObservations(_)));
        // Undefined cells are excluded, not imputed.
        let row = noise_floor(MetricKind::F1, au(1), &[Some(0.4), None, Some(0.6), None]).unwrap();
        assert_eq!(row.n_cells, 2);
        assert_abs_diff_eq!(row.mean, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn published_sigma_reproduces_margin() {
        // sigma 0.0797 -> margin ±0.1562 at report precision.
        assert!((margin95(0.0797) - 0.1562).abs() < 0.0005);
    }

    #[test]
    fn protocol_floor_is_mean_of_margins() {
        let rows = vec![
            noise_floor(MetricKind::F1, au(1), &[Some(0.4), Some(0.6)]).unwrap(),
            noise_floor(MetricKind::F1, au(2), &[Some(0.5), Some(0.5)]).unwrap(),
        ];
        let floor = protocol_noise_floor(&rows, MetricKind::F1).unwrap();
        assert_abs_diff_eq!(floor, rows[0].margin95 / 2.0, epsilon = 1e-12);

        let single = protocol_noise_floor(&rows[..1], MetricKind::F1).unwrap();
        assert_abs_diff_eq!(single, rows[0].margin95, epsilon = 1e-15);
        assert!(protocol_noise_floor(&rows, MetricKind::Auc).is_err());
    }

    #[test]
    fn volatility_published_rows() {
        assert!((volatility_ratio(0.0797, 0.0349).unwrap() - 2.29).abs() < 0.02);
        assert!((volatility_ratio(0.0102, 0.0120).unwrap() - 0.85).abs() < 0.02);
        assert_abs_diff_eq!(volatility_ratio(0.03, 0.03).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(volatility_ratio(0.03, 0.0), None);
    }

    #[test]
    fn adjudication_boundaries() {
        assert_eq!(adjudicate_delta(0.019, 0.065), Adjudication::WithinNoise);
        assert_eq!(adjudicate_delta(0.10, 0.065), Adjudication::ExceedsNoise);
        assert_eq!(adjudicate_delta(-0.10, 0.065), Adjudication::ExceedsNoise);
        // Closed boundary.
        assert_eq!(adjudicate_delta(0.065, 0.065), Adjudication::WithinNoise);
        assert_eq!(Adjudication::WithinNoise.to_string(), "WITHIN_NOISE");
    }

    #[test]
    fn stability_summary_shift_invariance_and_oracle() {
        let mk = |tag: &str, a: u16, p: usize, v: f64| MetricCell {
            metric: MetricKind::F1,
            au: au(a),
            partition: p,
            fold: 0,
            model_tag: tag.to_string(),
            value: Some(v),
        };
        // Tag B = tag A + 0.2 per cell: identical sigmas.
        let mut cells = Vec::new();
        for (p, v) in [(0, 0.40), (1, 0.50), (2, 0.60)] {
            cells.push(mk("a", 1, p, v));
            cells.push(mk("b", 1, p, v + 0.2));
        }
        let summaries = backbone_stability_summary(&cells, MetricKind::F1).unwrap();
        assert_eq!(summaries.len(), 2);
        assert_abs_diff_eq!(summaries[0].mean_sigma, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(
            summaries[0].mean_sigma,
            summaries[1].mean_sigma,
            epsilon = 1e-12
        );

        let constant: Vec<MetricCell> = (0..3).map(|p| mk("c", 1, p, 0.7)).collect();
        let s = backbone_stability_summary(&constant, MetricKind::F1).unwrap();
        assert_eq!(s[0].max_sigma, 0.0);

        let short = vec![mk("d", 1, 0, 0.5)];
        assert!(backbone_stability_summary(&short, MetricKind::F1).is_err());
    }
}

//! The five subcommands. Each one computes everything first, then writes
//! all artifacts from this single thread, so outputs never depend on task
//! scheduling.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use protovar::lodo::{
    self, domain_sensitivity, evaluate_lodo_fold, lodo_plan, transfer_test, TransferManifest,
    TransferSpec,
};
use protovar::noise::{
    adjudicate_delta, backbone_stability_summary, metric_matrix, noise_floor_table,
    prevalence_table, protocol_noise_floor, volatility_table,
};
use protovar::report::{
    self, lodo_grid, CvNoiseReport, LodoReport, MissingSourceRef, RunConfig, ScheduleEcho,
    SynthReport, TagAnalysis, TransferRecord, TransferSeed, CONVENTIONS,
};
use protovar::seed::derive_seed;
use protovar::split::make_schedule;
use protovar::synth::{generate, PopulationSpec};
use protovar::table::{parse_eval_table, AuId, EvalTable};
use protovar::{Error, MetricKind, Result};

use crate::config::{Common, Format};

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn parse_table_file(path: &Path) -> Result<EvalTable> {
    let text = read_file(path)?;
    parse_eval_table(&text, None).map_err(|e| match e {
        Error::Parse { line, message } => {
            Error::Validation(format!("{}: line {line}: {message}", path.display()))
        }
        other => other,
    })
}

fn write_artifact(dir: &Path, name: &str, content: &str) -> Result<()> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&path, content).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn conventions() -> Vec<String> {
    CONVENTIONS.iter().map(|s| s.to_string()).collect()
}

fn path_strings(paths: &[PathBuf]) -> Vec<String> {
    paths
        .iter()
        .map(|p| p.to_string_lossy().into_owned())
        .collect()
}

// ---------------------------------------------------------------------
// cv-noise

pub struct CvNoiseParams {
    pub inputs: Vec<PathBuf>,
    pub tags: Vec<String>,
    pub k: usize,
    pub repeats: usize,
    pub common: Common,
}

pub fn cv_noise(p: &CvNoiseParams) -> Result<()> {
    let tables: Vec<EvalTable> = p
        .inputs
        .iter()
        .map(|path| parse_table_file(path))
        .collect::<Result<_>>()?;
    let subjects = tables[0].subjects(None)?;
    for (i, table) in tables.iter().enumerate().skip(1) {
        if table.subjects(None)? != subjects {
            return Err(Error::Validation(format!(
                "{}: subject set differs from {}; all model tables must share subjects",
                p.inputs[i].display(),
                p.inputs[0].display()
            )));
        }
    }
    let schedule = make_schedule(&subjects, p.k, p.repeats, p.common.seed)?;

    let prevalence_per_partition: Vec<_> = schedule
        .partitions
        .iter()
        .map(|fa| prevalence_table(&tables[0], fa))
        .collect::<Result<_>>()?;

    let mut analyses = Vec::new();
    let mut all_cells = Vec::new();
    for (table, tag) in tables.iter().zip(&p.tags) {
        let cells = metric_matrix(table, &schedule, tag, &MetricKind::ALL, p.common.threshold)?;
        let noise_floor = noise_floor_table(&cells)?;
        analyses.push(TagAnalysis {
            model_tag: tag.clone(),
            protocol_noise_floor_f1: protocol_noise_floor(&noise_floor, MetricKind::F1)?,
            protocol_noise_floor_auc: protocol_noise_floor(&noise_floor, MetricKind::Auc)?,
            volatility: volatility_table(&noise_floor),
            dropped_by_au: table.dropped_by_au(),
            noise_floor,
        });
        all_cells.extend(cells);
    }
    let mut stability = backbone_stability_summary(&all_cells, MetricKind::F1)?;
    stability.extend(backbone_stability_summary(&all_cells, MetricKind::Auc)?);

    let report = CvNoiseReport {
        config: RunConfig {
            command: "cv-noise".into(),
            inputs: path_strings(&p.inputs),
            model_tags: p.tags.clone(),
            k: Some(p.k),
            repeats: Some(p.repeats),
            master_seed: p.common.seed,
            threshold: p.common.threshold,
            bootstrap_iterations: None,
            alpha: None,
            out_dir: p.common.out.to_string_lossy().into_owned(),
            formats: p.common.format_names(),
        },
        conventions: conventions(),
        schedule: ScheduleEcho {
            k: schedule.k,
            repeats: schedule.repeats,
            master_seed: schedule.master_seed,
            partition_seeds: schedule.partition_seeds(),
        },
        prevalence_per_partition,
        analyses,
        stability,
    };

    let out = &p.common.out;
    fs::create_dir_all(out)?;
    if p.common.wants(Format::Csv) {
        write_artifact(
            out,
            "prevalence.csv",
            &report::prevalence_csv(&report.prevalence_per_partition[0], schedule.k),
        )?;
        let primary = &report.analyses[0];
        write_artifact(
            out,
            "noise_floor.csv",
            &report::noise_floor_csv(&primary.noise_floor),
        )?;
        write_artifact(
            out,
            "volatility.csv",
            &report::volatility_csv(&primary.volatility),
        )?;
        if p.tags.len() > 1 {
            write_artifact(
                out,
                "backbone_stability.csv",
                &report::backbone_stability_csv(&report.stability),
            )?;
        }
        for (r, fa) in schedule.partitions.iter().enumerate() {
            write_artifact(out, &format!("splits/partition_{r:02}.csv"), &fa.to_csv())?;
            write_artifact(
                out,
                &format!("splits/partition_{r:02}.json"),
                &fa.sidecar_json(),
            )?;
        }
    }
    if p.common.wants(Format::Json) {
        write_artifact(out, "report.json", &report::to_json(&report))?;
    }
    if p.common.wants(Format::Md) {
        write_artifact(out, "report.md", &report::render_cv_markdown(&report))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------
// lodo / bootstrap

struct LoadedTransfer {
    spec: TransferSpec,
    slice: EvalTable,
}

fn load_transfers(manifest_path: &Path) -> Result<(TransferManifest, Vec<LoadedTransfer>)> {
    let manifest = TransferManifest::parse(&read_file(manifest_path)?)?;
    let mut loaded = Vec::new();
    for spec in &manifest.transfers {
        let table_path = TransferManifest::resolve(manifest_path, &spec.table);
        let table = parse_table_file(&table_path)?;
        let slice = if table.dataset_ids() == [spec.test_id.clone()] {
            table
        } else {
            table.slice_dataset(&spec.test_id)?
        };
        if slice.n_rows() == 0 {
            return Err(Error::Validation(format!(
                "{}: no rows for test dataset {}",
                table_path.display(),
                spec.test_id
            )));
        }
        loaded.push(LoadedTransfer {
            spec: spec.clone(),
            slice,
        });
    }
    Ok((manifest, loaded))
}

pub struct LodoParams {
    pub manifest: PathBuf,
    pub common: Common,
    /// Bootstrap settings; `None` renders the grid only.
    pub bootstrap: Option<(usize, f64)>,
}

pub fn lodo(p: &LodoParams) -> Result<()> {
    let (_, transfers) = load_transfers(&p.manifest)?;
    let test_ids: Vec<String> = transfers.iter().map(|t| t.spec.test_id.clone()).collect();
    let plan = lodo_plan(&test_ids)?;

    let mut evals: Vec<(String, Vec<lodo::LodoCell>)> = transfers
        .iter()
        .map(|t| {
            (
                t.spec.test_id.clone(),
                evaluate_lodo_fold(&t.slice, p.common.threshold),
            )
        })
        .collect();
    evals.sort_by(|a, b| a.0.cmp(&b.0));
    let grid = lodo_grid(&evals);

    let mut records: Vec<TransferRecord> = Vec::new();
    let mut missing: Vec<MissingSourceRef> = Vec::new();
    let mut transfer_seeds: Vec<TransferSeed> = Vec::new();
    if let Some((iterations, alpha)) = p.bootstrap {
        for (i, t) in transfers.iter().enumerate() {
            let tseed = derive_seed(p.common.seed, "transfer", i as u64);
            transfer_seeds.push(TransferSeed {
                test_id: t.spec.test_id.clone(),
                seed: tseed,
            });
            let sources: Vec<EvalTable> = t
                .spec
                .source_tables
                .iter()
                .map(|sp| parse_table_file(&TransferManifest::resolve(&p.manifest, sp)))
                .collect::<Result<_>>()?;
            let refs = lodo::resolve_source_refs(
                &t.spec,
                &sources,
                t.slice.schema().au_ids(),
                p.common.threshold,
            );
            for &au in t.slice.schema().au_ids() {
                for &metric in &MetricKind::ALL {
                    match refs.get(&(metric, au)) {
                        Some(&source_ref) => records.push(TransferRecord {
                            test_id: t.spec.test_id.clone(),
                            result: transfer_test(
                                &t.slice,
                                au,
                                metric,
                                source_ref,
                                iterations,
                                tseed,
                                alpha,
                                p.common.threshold,
                            )?,
                        }),
                        None => missing.push(MissingSourceRef {
                            test_id: t.spec.test_id.clone(),
                            au,
                            metric,
                        }),
                    }
                }
            }
        }
    }

    let mut groups: BTreeMap<(AuId, MetricKind), Vec<lodo::TransferResult>> = BTreeMap::new();
    for rec in &records {
        groups
            .entry((rec.result.au, rec.result.metric))
            .or_default()
            .push(rec.result.clone());
    }
    let mut ds_rows = Vec::new();
    for results in groups.values() {
        match domain_sensitivity(results) {
            Ok(row) => ds_rows.push(row),
            // An AU annotated in no target: no denominator, no row.
            Err(Error::InsufficientObservations(_)) => {}
            Err(e) => return Err(e),
        }
    }

    let command = if p.bootstrap.is_some() {
        "bootstrap"
    } else {
        "lodo"
    };
    let report = LodoReport {
        config: RunConfig {
            command: command.into(),
            inputs: vec![p.manifest.to_string_lossy().into_owned()],
            model_tags: Vec::new(),
            k: None,
            repeats: None,
            master_seed: p.common.seed,
            threshold: p.common.threshold,
            bootstrap_iterations: p.bootstrap.map(|(b, _)| b),
            alpha: p.bootstrap.map(|(_, a)| a),
            out_dir: p.common.out.to_string_lossy().into_owned(),
            formats: p.common.format_names(),
        },
        conventions: conventions(),
        plan,
        grid,
        transfers: records,
        domain_sensitivity: ds_rows,
        transfer_seeds,
        missing_source_refs: missing,
    };

    let out = &p.common.out;
    fs::create_dir_all(out)?;
    if p.common.wants(Format::Csv) {
        write_artifact(
            out,
            "lodo_metrics.csv",
            &report::lodo_metrics_csv(&report.grid),
        )?;
        if p.bootstrap.is_some() {
            write_artifact(
                out,
                "transfers.csv",
                &report::transfers_csv(&report.transfers),
            )?;
            write_artifact(
                out,
                "domain_sensitivity.csv",
                &report::domain_sensitivity_csv(&report.domain_sensitivity),
            )?;
        }
    }
    if p.common.wants(Format::Json) {
        write_artifact(out, "report.json", &report::to_json(&report))?;
    }
    if p.common.wants(Format::Md) {
        write_artifact(out, "report.md", &report::render_lodo_markdown(&report))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------
// synth

pub struct SynthParams {
    pub spec_path: PathBuf,
    pub common: Common,
    /// Explicit seed (flag/env/config); overrides the seed in the spec.
    pub seed_override: Option<u64>,
}

pub fn synth(p: &SynthParams) -> Result<()> {
    let mut spec: PopulationSpec =
        serde_json::from_str(&read_file(&p.spec_path)?).map_err(|e| {
            Error::Validation(format!(
                "bad population spec {}: {e}",
                p.spec_path.display()
            ))
        })?;
    if let Some(seed) = p.seed_override {
        spec.seed = seed;
    }
    let table = generate(&spec)?;
    let report = SynthReport {
        config: RunConfig {
            command: "synth".into(),
            inputs: vec![p.spec_path.to_string_lossy().into_owned()],
            model_tags: Vec::new(),
            k: None,
            repeats: None,
            master_seed: spec.seed,
            threshold: p.common.threshold,
            bootstrap_iterations: None,
            alpha: None,
            out_dir: p.common.out.to_string_lossy().into_owned(),
            formats: p.common.format_names(),
        },
        n_rows: table.n_rows(),
        n_subjects: table.subjects(None)?.len(),
        spec,
    };

    let out = &p.common.out;
    fs::create_dir_all(out)?;
    if p.common.wants(Format::Csv) {
        write_artifact(out, "synth.csv", &table.to_csv())?;
    }
    if p.common.wants(Format::Json) {
        write_artifact(out, "spec_echo.json", &report::to_json(&report))?;
    }
    if p.common.wants(Format::Md) {
        write_artifact(out, "report.md", &report::render_synth_markdown(&report))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------
// adjudicate

pub fn adjudicate(delta: f64, floor: f64) -> Result<()> {
    if !floor.is_finite() || floor < 0.0 {
        return Err(Error::Validation(format!(
            "noise floor must be a non-negative real, got {floor}"
        )));
    }
    if !delta.is_finite() {
        return Err(Error::Validation(format!(
            "delta must be a real number, got {delta}"
        )));
    }
    println!("{}", adjudicate_delta(delta, floor));
    Ok(())
}

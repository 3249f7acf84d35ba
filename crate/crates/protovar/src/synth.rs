//! Synthetic subject populations with controllable prevalence, subject
//! heterogeneity, and score separability, plus closed-form oracles used to
//! validate the analysis pipeline.
//!
//! Per subject and AU, a base rate is drawn from a mean-preserving Beta
//! with `(alpha, beta) = (m*nu, (1-m)*nu)`, `nu = 1/subject_spread`
//! (a point mass when the spread is 0). Labels are Bernoulli draws at that
//! rate; scores are class-conditional Gaussians squashed through the
//! logistic, which keeps them in (0, 1) without disturbing the analytic
//! AUC.

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::metrics::MetricKind;
use crate::noise::{metric_matrix, noise_floor_table};
use crate::seed::{derive_seed, rng_from};
use crate::split::make_schedule;
use crate::stats::{mean, normal_cdf};
use crate::table::{AuId, AuSchema, EvalTable, FrameRecord};

/// Frames generated per subject: fixed, or uniform in an inclusive range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FrameCount {
    Fixed(u32),
    Range { min: u32, max: u32 },
}

/// Score/label model for one AU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuSpec {
    pub au: AuId,
    pub base_rate_mean: f64,
    pub subject_spread: f64,
    pub mu_neg: f64,
    pub mu_pos: f64,
    pub sigma_score: f64,
}

/// Generator parameters for one synthetic population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    #[serde(default = "default_dataset_id")]
    pub dataset_id: String,
    pub n_subjects: usize,
    pub frames_per_subject: FrameCount,
    pub aus: Vec<AuSpec>,
    pub seed: u64,
}

fn default_dataset_id() -> String {
    "synth".to_string()
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects < 1 {
            return Err(Error::Validation("n_subjects must be at least 1".into()));
        }
        match self.frames_per_subject {
            FrameCount::Fixed(n) if n >= 1 => {}
            FrameCount::Range { min, max } if min >= 1 && min <= max => {}
            _ => {
                return Err(Error::Validation(
                    "frames_per_subject must be >= 1 (and min <= max for a range)".into(),
                ))
            }
        }
        if self.aus.is_empty() {
            return Err(Error::Validation("spec lists no AUs".into()));
        }
        for au in &self.aus {
            if !(au.base_rate_mean > 0.0 && au.base_rate_mean < 1.0) {
                return Err(Error::Validation(format!(
                    "{}: base_rate_mean must be in (0,1)",
                    au.au
                )));
            }
            if au.subject_spread < 0.0 {
                return Err(Error::Validation(format!(
                    "{}: subject_spread must be >= 0",
                    au.au
                )));
            }
            if au.mu_pos < au.mu_neg {
                return Err(Error::Validation(format!(
                    "{}: mu_pos must be >= mu_neg",
                    au.au
                )));
            }
            if au.sigma_score.is_nan() || au.sigma_score <= 0.0 {
                return Err(Error::Validation(format!(
                    "{}: sigma_score must be > 0",
                    au.au
                )));
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<AuSchema> {
        AuSchema::new(self.aus.iter().map(|a| a.au).collect())
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Generates the population table. Each subject is an independent seeded
/// task (`derive_seed(spec.seed, "subject", i)`), so the output is
/// identical under any scheduling; rows are ordered by subject then frame.
pub fn generate(spec: &PopulationSpec) -> Result<EvalTable> {
    spec.validate()?;
    let schema = spec.schema()?;
    // AU specs in schema (ascending) order so draw sequences are stable.
    let mut au_specs = spec.aus.clone();
    au_specs.sort_by_key(|a| a.au);

    let per_subject: Vec<Vec<FrameRecord>> = exec::map_indexed(spec.n_subjects, |i| {
        let mut rng = rng_from(derive_seed(spec.seed, "subject", i as u64));
        let subject_id = format!("S{i:05}");
        let n_frames = match spec.frames_per_subject {
            FrameCount::Fixed(n) => n,
            FrameCount::Range { min, max } => rng.random_range(min..=max),
        };
        let base_rates: Vec<f64> = au_specs
            .iter()
            .map(|a| {
                if a.subject_spread == 0.0 {
                    a.base_rate_mean
                } else {
                    let nu = 1.0 / a.subject_spread;
                    let beta = Beta::new(a.base_rate_mean * nu, (1.0 - a.base_rate_mean) * nu)
                        .expect("validated parameters");
                    beta.sample(&mut rng)
                }
            })
            .collect();
        (0..n_frames)
            .map(|f| {
                let mut labels = Vec::with_capacity(au_specs.len());
                let mut scores = Vec::with_capacity(au_specs.len());
                for (a, &p) in au_specs.iter().zip(&base_rates) {
                    let label = rng.random_bool(p.clamp(0.0, 1.0));
                    let mu = if label { a.mu_pos } else { a.mu_neg };
                    let z = Normal::new(mu, a.sigma_score)
                        .expect("validated parameters")
                        .sample(&mut rng);
                    labels.push(Some(label));
                    scores.push(Some(logistic(z)));
                }
                FrameRecord::new(
                    spec.dataset_id.clone(),
                    subject_id.clone(),
                    format!("F{f:06}"),
                    labels,
                    scores,
                )
            })
            .collect()
    });
    EvalTable::new(schema, per_subject.into_iter().flatten().collect())
}

/// Analytic AUC of the class-conditional Gaussian score model:
/// `Phi((mu_pos - mu_neg) / (sigma * sqrt(2)))`. The logistic squashing is
/// strictly increasing, so the sampled scores have exactly this AUC in the
/// population limit.
pub fn expected_auc(mu_neg: f64, mu_pos: f64, sigma_score: f64) -> f64 {
    normal_cdf((mu_pos - mu_neg) / (sigma_score * std::f64::consts::SQRT_2))
}

/// Mean per-AU cross-split sigma for one fold count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceScalingRow {
    pub k: usize,
    pub mean_sigma_f1: f64,
    pub mean_sigma_auc: f64,
    pub per_au_sigma_f1: Vec<(AuId, f64)>,
    pub per_au_sigma_auc: Vec<(AuId, f64)>,
}

/// Generates one table from `spec`, then runs the repeated-partition
/// pipeline for each `k`, reporting the mean per-AU sigma of fold F1/AUC.
/// Per-fold test size shrinks as k grows, so sigma is expected to rise.
pub fn variance_scaling_experiment(
    spec: &PopulationSpec,
    k_values: &[usize],
    repeats: usize,
    master_seed: u64,
    threshold: f64,
) -> Result<Vec<VarianceScalingRow>> {
    let table = generate(spec)?;
    let subjects = table.subjects(None)?;
    k_values
        .iter()
        .map(|&k| {
            let schedule = make_schedule(
                &subjects,
                k,
                repeats,
                derive_seed(master_seed, "vscale", k as u64),
            )?;
            let cells = metric_matrix(&table, &schedule, "synthetic", &MetricKind::ALL, threshold)?;
            let rows = noise_floor_table(&cells)?;
            let collect = |metric: MetricKind| -> Vec<(AuId, f64)> {
                rows.iter()
                    .filter(|r| r.metric == metric)
                    .map(|r| (r.au, r.sigma))
                    .collect()
            };
            let per_au_sigma_f1 = collect(MetricKind::F1);
            let per_au_sigma_auc = collect(MetricKind::Auc);
            let mean_of = |v: &[(AuId, f64)]| {
                mean(&v.iter().map(|(_, s)| *s).collect::<Vec<_>>()).unwrap_or(0.0)
            };
            Ok(VarianceScalingRow {
                k,
                mean_sigma_f1: mean_of(&per_au_sigma_f1),
                mean_sigma_auc: mean_of(&per_au_sigma_auc),
                per_au_sigma_f1,
                per_au_sigma_auc,
            })
        })
        .collect()
}

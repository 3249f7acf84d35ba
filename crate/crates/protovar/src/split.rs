//! Seeded subject-exclusive k-fold partitions and repeated-partition
//! schedules.
//!
//! Partitions operate on the lexicographically sorted subject list, so file
//! row order never influences fold membership. A uniform shuffle followed
//! by round-robin assignment keeps fold sizes within one of each other.
//! There is deliberately no stratification: the point of the analysis is
//! what plain subject randomization does to class distributions.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from};
use crate::table::EvalTable;

/// Deterministic map subject → fold index for one seeded partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldAssignment {
    k: usize,
    seed: u64,
    assignment: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fold_of(&self, subject: &str) -> Option<usize> {
        self.assignment.get(subject).copied()
    }

    pub fn assignment(&self) -> &BTreeMap<String, usize> {
        &self.assignment
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &fold in self.assignment.values() {
            sizes[fold] += 1;
        }
        sizes
    }

    /// `subject,fold` CSV, sorted by subject.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subject,fold\n");
        for (subject, fold) in &self.assignment {
            out.push_str(&format!("{subject},{fold}\n"));
        }
        out
    }

    /// JSON sidecar identifying the split, for publishing exact folds
    /// alongside results.
    pub fn sidecar_json(&self) -> String {
        format!("{{\"k\": {}, \"seed\": {}}}\n", self.k, self.seed)
    }
}

/// A sequence of independent seeded partitions over the same subjects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProtocolSchedule {
    pub k: usize,
    pub repeats: usize,
    pub master_seed: u64,
    pub partitions: Vec<FoldAssignment>,
}

impl ProtocolSchedule {
    pub fn partition_seeds(&self) -> Vec<u64> {
        self.partitions.iter().map(|p| p.seed()).collect()
    }
}

/// Partitions `subjects` into `k` folds: sort, uniform Fisher–Yates shuffle
/// seeded by `seed`, then round-robin assignment (shuffled position `i`
/// lands in fold `i % k`).
pub fn make_partition(subjects: &[String], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Validation(format!("k must be at least 2, got {k}")));
    }
    let mut sorted: Vec<&String> = subjects.iter().collect();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() < k {
        return Err(Error::Validation(format!(
            "need at least k={k} subjects, got {}",
            sorted.len()
        )));
    }
    let mut rng = rng_from(seed);
    for i in (1..sorted.len()).rev() {
        let j = rng.random_range(0..=i);
        sorted.swap(i, j);
    }
    let assignment = sorted
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i % k))
        .collect();
    Ok(FoldAssignment {
        k,
        seed,
        assignment,
    })
}

/// Builds `repeats` independent partitions; partition `r` uses the seed
/// `derive_seed(master_seed, "partition", r)`.
pub fn make_schedule(
    subjects: &[String],
    k: usize,
    repeats: usize,
    master_seed: u64,
) -> Result<ProtocolSchedule> {
    if repeats < 1 {
        return Err(Error::Validation("repeats must be at least 1".into()));
    }
    let mut partitions = Vec::with_capacity(repeats);
    let mut seeds = std::collections::BTreeSet::new();
    for r in 0..repeats {
        let seed = derive_seed(master_seed, "partition", r as u64);
        if !seeds.insert(seed) {
            return Err(Error::Validation(format!(
                "derived partition seeds collide at repeat {r}"
            )));
        }
        partitions.push(make_partition(subjects, k, seed)?);
    }
    Ok(ProtocolSchedule {
        k,
        repeats,
        master_seed,
        partitions,
    })
}

/// Row-index sets per fold: row `i` belongs to the fold of its subject.
/// Errors when a subject in the table is absent from the assignment.
pub fn fold_slices(table: &EvalTable, fa: &FoldAssignment) -> Result<Vec<Vec<usize>>> {
    let mut slices = vec![Vec::new(); fa.k()];
    for (i, row) in table.rows().iter().enumerate() {
        let fold = fa.fold_of(&row.subject_id).ok_or_else(|| {
            Error::Validation(format!(
                "subject {} is absent from the fold assignment",
                row.subject_id
            ))
        })?;
        slices[fold].push(i);
    }
    Ok(slices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::parse_eval_table;

    fn subjects(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("S{i:02}")).collect()
    }

    #[test]
    fn folds_are_balanced() {
        let fa = make_partition(&subjects(9), 3, 1).unwrap();
        assert_eq!(fa.fold_sizes(), vec![3, 3, 3]);

        let fa = make_partition(&subjects(10), 3, 1).unwrap();
        let mut sizes = fa.fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 3, 4]);
    }

    #[test]
    fn partition_is_deterministic_and_seed_sensitive() {
        let a = make_partition(&subjects(12), 3, 7).unwrap();
        let b = make_partition(&subjects(12), 3, 7).unwrap();
        assert_eq!(a, b);
        let c = make_partition(&subjects(12), 3, 8).unwrap();
        assert_ne!(a.assignment(), c.assignment());
    }

    #[test]
    fn partition_ignores_input_order() {
        let mut shuffled = subjects(12);
        shuffled.reverse();
        let a = make_partition(&subjects(12), 3, 7).unwrap();
        let b = make_partition(&shuffled, 3, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_subjects_is_an_error() {
        assert!(make_partition(&subjects(2), 3, 0).is_err());
        assert!(make_partition(&subjects(5), 1, 0).is_err());
    }

    #[test]
    fn schedule_has_distinct_seeds_and_differing_partitions() {
        let sched = make_schedule(&subjects(12), 3, 4, 99).unwrap();
        assert_eq!(sched.partitions.len(), 4);
        let seeds = sched.partition_seeds();
        let unique: std::collections::BTreeSet<u64> = seeds.iter().copied().collect();
        assert_eq!(unique.len(), 4);
        assert!(
            sched
                .partitions
                .windows(2)
                .any(|w| w[0].assignment() != w[1].assignment()),
            "independent partitions should not all coincide"
        );

        let single = make_schedule(&subjects(5), 2, 1, 0).unwrap();
        assert_eq!(single.partitions.len(), 1);
        assert!(make_schedule(&subjects(5), 2, 0, 0).is_err());
    }

    #[test]
    fn fold_slices_partition_the_rows() {
        let csv = "dataset,subject,frame,label_AU1,score_AU1\n\
                   d,S00,F1,1,0.9\nd,S00,F2,0,0.2\nd,S01,F1,1,0.8\n\
                   d,S02,F1,0,0.3\nd,S03,F1,1,0.6\n";
        let table = parse_eval_table(csv, None).unwrap();
        let fa = make_partition(&table.subjects(None).unwrap(), 2, 3).unwrap();
        let slices = fold_slices(&table, &fa).unwrap();

        let mut all: Vec<usize> = slices.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);

        // Subject exclusivity: S00's two rows always share a slice.
        let s00_folds: Vec<usize> = slices
            .iter()
            .enumerate()
            .filter(|(_, s)| s.contains(&0) || s.contains(&1))
            .map(|(f, _)| f)
            .collect();
        assert_eq!(s00_folds.len(), 1);
    }

    #[test]
    fn fold_slices_rejects_unassigned_subjects() {
        let csv = "dataset,subject,frame,label_AU1,score_AU1\nd,SX,F1,1,0.9\n";
        let table = parse_eval_table(csv, None).unwrap();
        let fa = make_partition(&subjects(4), 2, 0).unwrap();
        assert!(fold_slices(&table, &fa).is_err());
    }

    #[test]
    fn fold_csv_and_sidecar_shapes() {
        let fa = make_partition(&subjects(4), 2, 5).unwrap();
        let csv = fa.to_csv();
        assert!(csv.starts_with("subject,fold\n"));
        assert_eq!(csv.lines().count(), 5);
        assert_eq!(fa.sidecar_json(), "{\"k\": 2, \"seed\": 5}\n");
    }

    #[test]
    fn fold_index_is_roughly_uniform_over_seeds() {
        // Sanity check, not a tight statistical gate.
        let subs = subjects(12);
        let trials = 300;
        let mut counts = vec![[0usize; 3]; subs.len()];
        for seed in 0..trials {
            let fa = make_partition(&subs, 3, seed).unwrap();
            for (i, s) in subs.iter().enumerate() {
                counts[i][fa.fold_of(s).unwrap()] += 1;
            }
        }
        let expected = trials as f64 / 3.0;
        for (i, c) in counts.iter().enumerate() {
            let chi2: f64 = c
                .iter()
                .map(|&o| (o as f64 - expected).powi(2) / expected)
                .sum();
            // df = 2; chi2 > 30 would be astronomically unlikely.
            assert!(
                chi2 < 30.0,
                "subject {i} fold counts {c:?} look non-uniform"
            );
        }
    }
}

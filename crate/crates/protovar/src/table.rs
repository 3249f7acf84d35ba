//! Evaluation tables: per-frame label/score records grouped by dataset and
//! subject, with validated CSV ingestion.
//!
//! The on-disk format is UTF-8 CSV with header
//! `dataset,subject,frame,label_AU<k>,score_AU<k>,...` for each AU in
//! ascending order. Label cells are `0`, `1`, `9` (missing), or empty;
//! score cells are decimals in [0, 1] or empty. Tokens must not contain
//! commas or newlines, so no quoting is involved.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of one binary label channel (an action unit).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AuId(pub u16);

impl fmt::Display for AuId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AU{}", self.0)
    }
}

/// Ordered, duplicate-free set of AU identifiers shared by every row of a
/// table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuSchema {
    au_ids: Vec<AuId>,
}

impl AuSchema {
    /// Builds a schema from identifiers in any order. Errors on duplicates
    /// or an empty set.
    pub fn new(mut au_ids: Vec<AuId>) -> Result<Self> {
        if au_ids.is_empty() {
            return Err(Error::Validation(
                "schema must contain at least one AU".into(),
            ));
        }
        au_ids.sort_unstable();
        if au_ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("schema contains duplicate AU ids".into()));
        }
        Ok(AuSchema { au_ids })
    }

    pub fn au_ids(&self) -> &[AuId] {
        &self.au_ids
    }

    pub fn len(&self) -> usize {
        self.au_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.au_ids.is_empty()
    }

    /// Column position of `au`, if present.
    pub fn index_of(&self, au: AuId) -> Option<usize> {
        self.au_ids.binary_search(&au).ok()
    }

    pub fn contains(&self, au: AuId) -> bool {
        self.index_of(au).is_some()
    }
}

/// One frame's labels and scores, aligned with the owning table's schema.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub dataset_id: String,
    pub subject_id: String,
    pub frame_id: String,
    labels: Vec<Option<bool>>,
    scores: Vec<Option<f64>>,
}

impl FrameRecord {
    pub fn new(
        dataset_id: impl Into<String>,
        subject_id: impl Into<String>,
        frame_id: impl Into<String>,
        labels: Vec<Option<bool>>,
        scores: Vec<Option<f64>>,
    ) -> Self {
        FrameRecord {
            dataset_id: dataset_id.into(),
            subject_id: subject_id.into(),
            frame_id: frame_id.into(),
            labels,
            scores,
        }
    }

    /// Label at schema position `idx`.
    pub fn label_at(&self, idx: usize) -> Option<bool> {
        self.labels[idx]
    }

    /// Score at schema position `idx`.
    pub fn score_at(&self, idx: usize) -> Option<f64> {
        self.scores[idx]
    }
}

/// Valid (label, score) pairs for one AU, plus the count of rows that had a
/// label but no score and were therefore dropped from metric computation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairList {
    pub pairs: Vec<(bool, f64)>,
    pub dropped: usize,
}

/// Immutable collection of frame records with a shared AU schema.
///
/// Invariants enforced at construction: `(dataset, subject, frame)` triples
/// are unique, a subject id never appears under two datasets, every row is
/// aligned with the schema, and every present score lies in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTable {
    schema: AuSchema,
    rows: Vec<FrameRecord>,
    dataset_ids: Vec<String>,
}

impl EvalTable {
    pub fn new(schema: AuSchema, rows: Vec<FrameRecord>) -> Result<Self> {
        let mut triples = BTreeSet::new();
        let mut subject_dataset: BTreeMap<&str, &str> = BTreeMap::new();
        let mut dataset_ids = BTreeSet::new();
        for row in &rows {
            if row.labels.len() != schema.len() || row.scores.len() != schema.len() {
                return Err(Error::Validation(format!(
                    "row ({},{},{}) is not aligned with the {}-AU schema",
                    row.dataset_id,
                    row.subject_id,
                    row.frame_id,
                    schema.len()
                )));
            }
            if let Some(s) = row
                .scores
                .iter()
                .flatten()
                .find(|s| !(0.0..=1.0).contains(*s))
            {
                return Err(Error::Validation(format!(
                    "score {s} outside [0,1] in row ({},{},{})",
                    row.dataset_id, row.subject_id, row.frame_id
                )));
            }
            if !triples.insert((
                row.dataset_id.as_str(),
                row.subject_id.as_str(),
                row.frame_id.as_str(),
            )) {
                return Err(Error::Validation(format!(
                    "duplicate (dataset,subject,frame) = ({},{},{})",
                    row.dataset_id, row.subject_id, row.frame_id
                )));
            }
            match subject_dataset.get(row.subject_id.as_str()) {
                Some(d) if *d != row.dataset_id => {
                    return Err(Error::Validation(format!(
                        "subject {} appears under datasets {} and {}",
                        row.subject_id, d, row.dataset_id
                    )));
                }
                _ => {
                    subject_dataset.insert(&row.subject_id, &row.dataset_id);
                }
            }
            dataset_ids.insert(row.dataset_id.clone());
        }
        Ok(EvalTable {
            schema,
            rows,
            dataset_ids: dataset_ids.into_iter().collect(),
        })
    }

    pub fn schema(&self) -> &AuSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[FrameRecord] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Sorted distinct dataset ids present in the table.
    pub fn dataset_ids(&self) -> &[String] {
        &self.dataset_ids
    }

    /// Sorted distinct subject ids, optionally restricted to one dataset.
    /// The order is lexicographic regardless of row order.
    pub fn subjects(&self, dataset_id: Option<&str>) -> Result<Vec<String>> {
        if let Some(d) = dataset_id {
            if !self.dataset_ids.iter().any(|x| x == d) {
                return Err(Error::Validation(format!("unknown dataset id: {d}")));
            }
        }
        let set: BTreeSet<&str> = self
            .rows
            .iter()
            .filter(|r| dataset_id.is_none_or(|d| r.dataset_id == d))
            .map(|r| r.subject_id.as_str())
            .collect();
        Ok(set.into_iter().map(String::from).collect())
    }

    /// (label, score) pairs for `au` over rows selected by `filter`, in row
    /// order. A row contributes only when both the label and the score are
    /// present; label-present/score-missing rows are tallied as `dropped`.
    pub fn valid_pairs<F>(&self, au: AuId, filter: F) -> Result<PairList>
    where
        F: Fn(&FrameRecord) -> bool,
    {
        let idx = self
            .schema
            .index_of(au)
            .ok_or_else(|| Error::Validation(format!("{au} is not in the table schema")))?;
        let mut out = PairList::default();
        for row in self.rows.iter().filter(|r| filter(r)) {
            match (row.labels[idx], row.scores[idx]) {
                (Some(label), Some(score)) => out.pairs.push((label, score)),
                (Some(_), None) => out.dropped += 1,
                _ => {}
            }
        }
        Ok(out)
    }

    /// Like [`valid_pairs`](Self::valid_pairs), over an explicit row-index
    /// set (e.g. one fold).
    pub fn pairs_for_rows(&self, au: AuId, row_indices: &[usize]) -> Result<PairList> {
        let idx = self
            .schema
            .index_of(au)
            .ok_or_else(|| Error::Validation(format!("{au} is not in the table schema")))?;
        let mut out = PairList::default();
        for &r in row_indices {
            let row = &self.rows[r];
            match (row.labels[idx], row.scores[idx]) {
                (Some(label), Some(score)) => out.pairs.push((label, score)),
                (Some(_), None) => out.dropped += 1,
                _ => {}
            }
        }
        Ok(out)
    }

    /// Present labels for `au` over all rows, in row order.
    pub fn labels_for(&self, au: AuId) -> Result<Vec<Option<bool>>> {
        let idx = self
            .schema
            .index_of(au)
            .ok_or_else(|| Error::Validation(format!("{au} is not in the table schema")))?;
        Ok(self.rows.iter().map(|r| r.labels[idx]).collect())
    }

    /// Per-AU count of rows with a present label but missing score.
    pub fn dropped_by_au(&self) -> Vec<(AuId, usize)> {
        self.schema
            .au_ids
            .iter()
            .enumerate()
            .map(|(idx, &au)| {
                let n = self
                    .rows
                    .iter()
                    .filter(|r| r.labels[idx].is_some() && r.scores[idx].is_none())
                    .count();
                (au, n)
            })
            .collect()
    }

    /// New table containing only the rows of one dataset.
    pub fn slice_dataset(&self, dataset_id: &str) -> Result<EvalTable> {
        if !self.dataset_ids.iter().any(|x| x == dataset_id) {
            return Err(Error::Validation(format!(
                "unknown dataset id: {dataset_id}"
            )));
        }
        let rows = self
            .rows
            .iter()
            .filter(|r| r.dataset_id == dataset_id)
            .cloned()
            .collect();
        EvalTable::new(self.schema.clone(), rows)
    }

    /// Serializes back to the CSV interchange format. Missing labels are
    /// written as empty cells (the `9` alias is normalized away); scores
    /// are written with full round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,subject,frame");
        for au in &self.schema.au_ids {
            out.push_str(&format!(",label_AU{},score_AU{}", au.0, au.0));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.dataset_id);
            out.push(',');
            out.push_str(&row.subject_id);
            out.push(',');
            out.push_str(&row.frame_id);
            for i in 0..self.schema.len() {
                out.push(',');
                match row.labels[i] {
                    Some(true) => out.push('1'),
                    Some(false) => out.push('0'),
                    None => {}
                }
                out.push(',');
                if let Some(s) = row.scores[i] {
                    out.push_str(&format!("{s}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Parses the CSV interchange format. When `expected_schema` is given, the
/// header's AU set must match it exactly; otherwise the schema is inferred
/// from the header. Row order is preserved.
pub fn parse_eval_table(source: &str, expected_schema: Option<&AuSchema>) -> Result<EvalTable> {
    let mut lines = source.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty input: missing header"))?;
    let schema = parse_header(header)?;
    if let Some(expected) = expected_schema {
        if &schema != expected {
            return Err(Error::parse(
                1,
                format!(
                    "header AU set {:?} does not match the expected schema {:?}",
                    schema.au_ids.iter().map(|a| a.0).collect::<Vec<_>>(),
                    expected.au_ids.iter().map(|a| a.0).collect::<Vec<_>>()
                ),
            ));
        }
    }
    let n_aus = schema.len();
    let mut rows = Vec::new();
    let mut triples: HashMap<(String, String, String), usize> = HashMap::new();
    let mut subject_dataset: HashMap<String, String> = HashMap::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expected_fields = 3 + 2 * n_aus;
        if fields.len() != expected_fields {
            return Err(Error::parse(
                line_no,
                format!("expected {expected_fields} fields, found {}", fields.len()),
            ));
        }
        let dataset = fields[0].trim();
        let subject = fields[1].trim();
        let frame = fields[2].trim();
        if dataset.is_empty() || subject.is_empty() || frame.is_empty() {
            return Err(Error::parse(
                line_no,
                "empty dataset, subject, or frame token",
            ));
        }
        let mut labels = Vec::with_capacity(n_aus);
        let mut scores = Vec::with_capacity(n_aus);
        for i in 0..n_aus {
            let label_cell = fields[3 + 2 * i].trim();
            let score_cell = fields[4 + 2 * i].trim();
            labels.push(match label_cell {
                "0" => Some(false),
                "1" => Some(true),
                "9" | "" => None,
                other => {
                    return Err(Error::parse(
                        line_no,
                        format!("label token `{other}` outside {{0,1,9,empty}}"),
                    ))
                }
            });
            scores.push(if score_cell.is_empty() {
                None
            } else {
                let s: f64 = score_cell.parse().map_err(|_| {
                    Error::parse(line_no, format!("non-numeric score `{score_cell}`"))
                })?;
                if !(0.0..=1.0).contains(&s) {
                    return Err(Error::parse(line_no, format!("score outside [0,1]: {s}")));
                }
                Some(s)
            });
        }
        let triple = (dataset.to_string(), subject.to_string(), frame.to_string());
        if let Some(first) = triples.get(&triple) {
            return Err(Error::parse(
                line_no,
                format!(
                    "duplicate (dataset,subject,frame) = ({dataset},{subject},{frame}), first seen at line {first}"
                ),
            ));
        }
        triples.insert(triple, line_no);
        match subject_dataset.get(subject) {
            Some(d) if d != dataset => {
                return Err(Error::parse(
                    line_no,
                    format!("subject {subject} appears under datasets {d} and {dataset}"),
                ));
            }
            _ => {
                subject_dataset.insert(subject.to_string(), dataset.to_string());
            }
        }
        rows.push(FrameRecord::new(dataset, subject, frame, labels, scores));
    }
    EvalTable::new(schema, rows)
}

fn parse_header(header: &str) -> Result<AuSchema> {
    let fields: Vec<&str> = header.split(',').map(|f| f.trim()).collect();
    if fields.len() < 5 || fields[0] != "dataset" || fields[1] != "subject" || fields[2] != "frame"
    {
        return Err(Error::parse(
            1,
            "malformed header: expected `dataset,subject,frame,label_AU<k>,score_AU<k>,...`",
        ));
    }
    let au_fields = &fields[3..];
    if !au_fields.len().is_multiple_of(2) {
        return Err(Error::parse(
            1,
            "malformed header: unpaired label/score columns",
        ));
    }
    let mut au_ids = Vec::with_capacity(au_fields.len() / 2);
    let mut previous: Option<u16> = None;
    for pair in au_fields.chunks(2) {
        let label_au = pair[0]
            .strip_prefix("label_AU")
            .and_then(|s| s.parse::<u16>().ok());
        let score_au = pair[1]
            .strip_prefix("score_AU")
            .and_then(|s| s.parse::<u16>().ok());
        match (label_au, score_au) {
            (Some(a), Some(b)) if a == b && a > 0 => {
                if previous.is_some_and(|p| p >= a) {
                    return Err(Error::parse(
                        1,
                        "malformed header: AU columns must be in ascending order",
                    ));
                }
                previous = Some(a);
                au_ids.push(AuId(a));
            }
            _ => {
                return Err(Error::parse(
                    1,
                    format!(
                        "malformed header: bad column pair `{},{}`",
                        pair[0], pair[1]
                    ),
                ))
            }
        }
    }
    AuSchema::new(au_ids)
}

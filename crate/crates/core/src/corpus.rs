//! Review corpora: CSV ingestion, binary group filtering, balanced sampling
//! and stratified train/test splits.
//!
//! Nothing here mutates a corpus in place; every operation returns a new
//! value and appends a line to its [`Provenance`].

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("no usable rows in {0}")]
    NoUsableRows(String),
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("document `{0}` has empty text")]
    EmptyText(String),
    #[error("group values must be distinct, got `{0}` twice")]
    IdenticalGroups(String),
    #[error("group `{0}` is empty after filtering")]
    EmptyGroup(String),
    #[error("group `{group}` has {available} documents, {needed} requested")]
    InsufficientDocuments {
        group: String,
        needed: usize,
        available: usize,
    },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("unknown document id `{0}`")]
    UnknownId(String),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// One side of the binary sensitive attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupLabel {
    A,
    B,
}

impl GroupLabel {
    pub const BOTH: [GroupLabel; 2] = [GroupLabel::A, GroupLabel::B];

    pub fn index(self) -> usize {
        match self {
            GroupLabel::A => 0,
            GroupLabel::B => 1,
        }
    }

    pub fn from_index(i: usize) -> GroupLabel {
        if i == 0 {
            GroupLabel::A
        } else {
            GroupLabel::B
        }
    }

    pub fn other(self) -> GroupLabel {
        match self {
            GroupLabel::A => GroupLabel::B,
            GroupLabel::B => GroupLabel::A,
        }
    }
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupLabel::A => f.write_str("A"),
            GroupLabel::B => f.write_str("B"),
        }
    }
}

/// Display names for the two labels, e.g. A = "United Kingdom".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupNames {
    pub a: String,
    pub b: String,
}

impl GroupNames {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Self {
        GroupNames {
            a: a.into(),
            b: b.into(),
        }
    }

    pub fn name(&self, label: GroupLabel) -> &str {
        match label {
            GroupLabel::A => &self.a,
            GroupLabel::B => &self.b,
        }
    }

    pub fn label_of(&self, value: &str) -> Option<GroupLabel> {
        if value == self.a {
            Some(GroupLabel::A)
        } else if value == self.b {
            Some(GroupLabel::B)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub group: GroupLabel,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

/// Where a corpus came from and what was done to it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub rows_read: usize,
    pub skipped_empty_text: usize,
    pub skipped_missing_group: usize,
    pub skipped_duplicate_id: usize,
    pub steps: Vec<String>,
}

/// Maps CSV header names onto document fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColumnMapping {
    pub text: String,
    pub group: String,
    /// Column holding a stable id; rows are numbered `row-<n>` when absent.
    pub id: Option<String>,
    /// Columns that must exist in the header (typically the ones filtered on).
    pub required: Vec<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            text: "Review_Text".into(),
            group: "Reviewer_Location".into(),
            id: None,
            required: vec!["Disneyland_Branch".into()],
        }
    }
}

/// A document before the group column has been reduced to two labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub id: String,
    pub text: String,
    pub group: String,
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct RawCorpus {
    pub documents: Vec<RawDocument>,
    pub provenance: Provenance,
}

/// Reads an RFC-4180 CSV file. Invalid UTF-8 is replaced, not rejected.
pub fn ingest_csv(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<RawCorpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest_reader(file, &path.display().to_string(), mapping)
}

pub fn ingest_reader<R: Read>(
    reader: R,
    source: &str,
    mapping: &ColumnMapping,
) -> Result<RawCorpus> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .byte_headers()?
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let h = String::from_utf8_lossy(h).trim().to_string();
            if i == 0 {
                h.trim_start_matches('\u{feff}').to_string()
            } else {
                h
            }
        })
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CorpusError::MissingColumn(name.to_string()))
    };
    let text_col = find(&mapping.text)?;
    let group_col = find(&mapping.group)?;
    let id_col = mapping.id.as_deref().map(find).transpose()?;
    for col in &mapping.required {
        find(col)?;
    }

    let mut provenance = Provenance {
        source: source.to_string(),
        ..Provenance::default()
    };
    let mut documents = Vec::new();
    let mut seen = HashSet::new();
    let mut record = csv::ByteRecord::new();
    while rdr.read_byte_record(&mut record)? {
        provenance.rows_read += 1;
        let field = |i: usize| {
            record
                .get(i)
                .map(|b| String::from_utf8_lossy(b).into_owned())
                .unwrap_or_default()
        };
        let text = field(text_col);
        if text.trim().is_empty() {
            provenance.skipped_empty_text += 1;
            continue;
        }
        let group = field(group_col).trim().to_string();
        if group.is_empty() {
            provenance.skipped_missing_group += 1;
            continue;
        }
        let id = match id_col {
            Some(c) => field(c).trim().to_string(),
            None => format!("row-{}", provenance.rows_read),
        };
        if id.is_empty() || !seen.insert(id.clone()) {
            provenance.skipped_duplicate_id += 1;
            continue;
        }
        let meta = header
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != text_col && *i != group_col && Some(*i) != id_col)
            .map(|(i, h)| (h.clone(), field(i).trim().to_string()))
            .collect();
        documents.push(RawDocument {
            id,
            text,
            group,
            meta,
        });
    }
    if documents.is_empty() {
        return Err(CorpusError::NoUsableRows(source.to_string()));
    }
    provenance.steps.push(format!(
        "ingest text={} group={} rows={}",
        mapping.text,
        mapping.group,
        documents.len()
    ));
    Ok(RawCorpus {
        documents,
        provenance,
    })
}

impl RawCorpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Keeps only documents whose group is one of `groups` (the first becomes
    /// label A) and, if given, whose metadata `key` equals `value`.
    pub fn filter_binary(
        &self,
        groups: (&str, &str),
        meta_equals: Option<(&str, &str)>,
    ) -> Result<Corpus> {
        if groups.0 == groups.1 {
            return Err(CorpusError::IdenticalGroups(groups.0.to_string()));
        }
        let names = GroupNames::new(groups.0, groups.1);
        let documents: Vec<Document> = self
            .documents
            .iter()
            .filter(|d| match meta_equals {
                Some((k, v)) => d.meta.get(k).map(String::as_str) == Some(v),
                None => true,
            })
            .filter_map(|d| {
                names.label_of(&d.group).map(|group| Document {
                    id: d.id.clone(),
                    text: d.text.clone(),
                    group,
                    meta: d.meta.clone(),
                })
            })
            .collect();
        for label in GroupLabel::BOTH {
            if !documents.iter().any(|d| d.group == label) {
                return Err(CorpusError::EmptyGroup(names.name(label).to_string()));
            }
        }
        let mut provenance = self.provenance.clone();
        provenance
            .steps
            .push(format!("filter groups A={} B={}", names.a, names.b));
        if let Some((k, v)) = meta_equals {
            provenance.steps.push(format!("filter {k}={v}"));
        }
        Corpus::new(documents, names, provenance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.2,
            seed: 0,
            stratified: true,
        }
    }
}

/// An ordered, binary-labelled set of documents with unique ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    documents: Vec<Document>,
    groups: GroupNames,
    provenance: Provenance,
}

impl Corpus {
    pub fn new(
        documents: Vec<Document>,
        groups: GroupNames,
        provenance: Provenance,
    ) -> Result<Corpus> {
        let mut seen = HashSet::with_capacity(documents.len());
        for d in &documents {
            if d.text.trim().is_empty() {
                return Err(CorpusError::EmptyText(d.id.clone()));
            }
            if !seen.insert(d.id.as_str()) {
                return Err(CorpusError::DuplicateId(d.id.clone()));
            }
        }
        Ok(Corpus {
            documents,
            groups,
            provenance,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.documents.iter()
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn groups(&self) -> &GroupNames {
        &self.groups
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn count(&self, label: GroupLabel) -> usize {
        self.documents.iter().filter(|d| d.group == label).count()
    }

    pub fn labels(&self) -> Vec<GroupLabel> {
        self.documents.iter().map(|d| d.group).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.documents.iter().map(|d| d.id.clone()).collect()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(|d| d.text.as_str())
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    fn derived(&self, documents: Vec<Document>, step: String) -> Corpus {
        let mut provenance = self.provenance.clone();
        provenance.steps.push(step);
        Corpus {
            documents,
            groups: self.groups.clone(),
            provenance,
        }
    }

    /// Documents with the given ids, in the order the ids are listed.
    pub fn select(&self, ids: &[String]) -> Result<Corpus> {
        let index: BTreeMap<&str, &Document> =
            self.documents.iter().map(|d| (d.id.as_str(), d)).collect();
        let documents = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|d| (*d).clone())
                    .ok_or_else(|| CorpusError::UnknownId(id.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.derived(documents, format!("select {} ids", ids.len())))
    }

    /// Same ids and labels with replaced text; ids missing from `texts` are
    /// dropped.
    pub fn with_texts(&self, texts: &BTreeMap<String, String>, step: &str) -> Result<Corpus> {
        let documents: Vec<Document> = self
            .documents
            .iter()
            .filter_map(|d| {
                texts.get(&d.id).map(|t| Document {
                    text: t.clone(),
                    ..d.clone()
                })
            })
            .collect();
        let out = self.derived(documents, step.to_string());
        Corpus::new(out.documents, out.groups, out.provenance)
    }

    /// Draws exactly `per_group` documents of each label without
    /// replacement, then shuffles the combined sample.
    pub fn balanced_sample(&self, per_group: usize, seed: u64) -> Result<Corpus> {
        let mut rng = rng::seeded(seed);
        let mut picked = Vec::with_capacity(2 * per_group);
        for label in GroupLabel::BOTH {
            let mut members: Vec<&Document> = self.iter().filter(|d| d.group == label).collect();
            if members.len() < per_group {
                return Err(CorpusError::InsufficientDocuments {
                    group: self.groups.name(label).to_string(),
                    needed: per_group,
                    available: members.len(),
                });
            }
            rng::shuffle(&mut rng, &mut members);
            picked.extend(members.into_iter().take(per_group).cloned());
        }
        rng::shuffle(&mut rng, &mut picked);
        Ok(self.derived(
            picked,
            format!("balanced_sample per_group={per_group} seed={seed}"),
        ))
    }

    /// Splits into disjoint (train, test) corpora, each keeping the input
    /// order.
    ///
    /// Stratified splits put `floor(n_g * f)` documents of each group in
    /// test, then top up to `floor(n * f)` overall by largest fractional
    /// remainder (ties go to group A).
    pub fn split(&self, spec: &SplitSpec) -> Result<(Corpus, Corpus)> {
        let f = spec.test_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(CorpusError::InvalidSplit(format!(
                "test_fraction {f} outside (0, 1)"
            )));
        }
        let mut rng = rng::seeded(spec.seed);
        let n = self.len();
        let mut in_test = vec![false; n];
        if spec.stratified {
            let mut members: Vec<Vec<usize>> = vec![Vec::new(), Vec::new()];
            for (i, d) in self.documents.iter().enumerate() {
                members[d.group.index()].push(i);
            }
            let exact: Vec<f64> = members.iter().map(|m| m.len() as f64 * f).collect();
            let mut take: Vec<usize> = exact.iter().map(|e| floor_eps(*e)).collect();
            let target = floor_eps(n as f64 * f);
            let mut order = [0usize, 1];
            order.sort_by(|&x, &y| {
                let rx = exact[x] - take[x] as f64;
                let ry = exact[y] - take[y] as f64;
                ry.partial_cmp(&rx)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(x.cmp(&y))
            });
            for g in order {
                if take.iter().sum::<usize>() >= target {
                    break;
                }
                if take[g] < members[g].len() {
                    take[g] += 1;
                }
            }
            for (g, m) in members.iter_mut().enumerate() {
                rng::shuffle(&mut rng, m);
                for &i in m.iter().take(take[g]) {
                    in_test[i] = true;
                }
            }
        } else {
            let mut all: Vec<usize> = (0..n).collect();
            rng::shuffle(&mut rng, &mut all);
            for &i in all.iter().take(floor_eps(n as f64 * f)) {
                in_test[i] = true;
            }
        }
        let n_test = in_test.iter().filter(|&&t| t).count();
        if n_test == 0 || n_test == n {
            return Err(CorpusError::InvalidSplit(format!(
                "{n} documents at test_fraction {f} leave an empty side"
            )));
        }
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (d, t) in self.documents.iter().zip(&in_test) {
            if *t {
                test.push(d.clone());
            } else {
                train.push(d.clone());
            }
        }
        let tag = format!(
            "split test_fraction={f} seed={} stratified={}",
            spec.seed, spec.stratified
        );
        Ok((
            self.derived(train, format!("{tag} side=train")),
            self.derived(test, format!("{tag} side=test")),
        ))
    }
}

fn floor_eps(x: f64) -> usize {
    (x + 1e-9).floor().max(0.0) as usize
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Document;
    type IntoIter = std::slice::Iter<'a, Document>;

    fn into_iter(self) -> Self::IntoIter {
        self.documents.iter()
    }
}

//! Multi-rater annotation datasets.
//!
//! Item and rater identifiers are interned to dense indices in lexicographic
//! order, and labels are stored as class indices into a [`LabelDomain`]. All
//! sampling in the crate runs on these indices.

mod csv_io;
mod file;
mod synth;

use std::collections::BTreeMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::{hash_words, splitmix64, SeedSpec};

pub use csv_io::{IngestSchema, LabelDictionary};
pub use file::MAGIC;
pub use synth::{ItemWeights, LabelModel, SynthStructure};

pub type ItemIdx = u32;
pub type RaterIdx = u32;
/// Index of a label within its [`LabelDomain`].
pub type ClassIdx = u16;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate rating for item {item:?} by rater {rater:?}")]
    DuplicateRating { item: String, rater: String },
    #[error("unknown label {label:?} at line {line}")]
    UnknownLabel { line: u64, label: String },
    #[error("dataset has no ratings")]
    EmptyDataset,
    #[error("label domain needs at least two labels, got {0}")]
    DegenerateDomain(usize),
    #[error("invalid label domain: {0}")]
    InvalidDomain(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("items cannot be batched: {0}")]
    NotBatchable(String),
    #[error("cannot keep {k} raters out of {n_raters}")]
    KTooLarge { k: usize, n_raters: usize },
    #[error("item {item:?} has no ratings left after downsampling")]
    ItemLeftEmpty { item: String },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dataset file: {0}")]
    Format(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Ordered set of categorical label codes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct LabelDomain {
    codes: Vec<u32>,
}

impl LabelDomain {
    pub fn new(codes: Vec<u32>) -> Result<Self, DatasetError> {
        if codes.len() < 2 {
            return Err(DatasetError::DegenerateDomain(codes.len()));
        }
        if codes.len() > ClassIdx::MAX as usize {
            return Err(DatasetError::InvalidDomain(format!(
                "{} labels exceeds the supported maximum",
                codes.len()
            )));
        }
        if codes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DatasetError::InvalidDomain(
                "label codes must be unique and sorted ascending".into(),
            ));
        }
        Ok(Self { codes })
    }

    /// Domain `{0, 1, ..., c-1}`.
    pub fn range(c: usize) -> Result<Self, DatasetError> {
        Self::new((0..c as u32).collect())
    }

    pub fn binary() -> Self {
        Self { codes: vec![0, 1] }
    }

    pub fn cardinality(&self) -> usize {
        self.codes.len()
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn code(&self, class: ClassIdx) -> u32 {
        self.codes[class as usize]
    }

    pub fn class_of(&self, code: u32) -> Option<ClassIdx> {
        self.codes.binary_search(&code).ok().map(|i| i as ClassIdx)
    }
}

impl TryFrom<Vec<u32>> for LabelDomain {
    type Error = DatasetError;
    fn try_from(v: Vec<u32>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<LabelDomain> for Vec<u32> {
    fn from(d: LabelDomain) -> Self {
        d.codes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rating {
    pub item: ItemIdx,
    pub rater: RaterIdx,
    pub label: ClassIdx,
}

/// Items sharing one rater pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub items: Vec<ItemIdx>,
    /// Sorted ascending.
    pub raters: Vec<RaterIdx>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchMap {
    batch_size: usize,
    batches: Vec<Batch>,
}

impl BatchMap {
    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn batches(&self) -> &[Batch] {
        &self.batches
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }
}

/// Sparse item x rater label matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationDataset {
    items: Vec<String>,
    raters: Vec<String>,
    domain: LabelDomain,
    /// Sorted by (item, rater).
    ratings: Vec<Rating>,
    item_offsets: Vec<usize>,
    /// Dense `item * n_raters + rater` label matrix when fully crossed.
    crossed: Option<Vec<ClassIdx>>,
    batch_map: Option<BatchMap>,
    fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_items: usize,
    pub n_raters: usize,
    pub n_ratings: usize,
    /// ratings-per-item -> number of items with that many ratings
    pub ratings_per_item: BTreeMap<usize, usize>,
    pub fully_crossed: bool,
    pub batch_size: Option<usize>,
}

impl AnnotationDataset {
    /// Builds a dataset from string-keyed triples `(item, rater, label code)`.
    ///
    /// Identifiers are interned in lexicographic order, so the result does
    /// not depend on the order of `triples`.
    pub fn from_triples<I, S1, S2>(domain: LabelDomain, triples: I) -> Result<Self, DatasetError>
    where
        I: IntoIterator<Item = (S1, S2, u32)>,
        S1: Into<String>,
        S2: Into<String>,
    {
        let raw: Vec<(String, String, u32)> = triples
            .into_iter()
            .map(|(i, r, l)| (i.into(), r.into(), l))
            .collect();
        if raw.is_empty() {
            return Err(DatasetError::EmptyDataset);
        }
        let mut items: Vec<String> = raw.iter().map(|t| t.0.clone()).collect();
        items.sort();
        items.dedup();
        let mut raters: Vec<String> = raw.iter().map(|t| t.1.clone()).collect();
        raters.sort();
        raters.dedup();

        let mut ratings = Vec::with_capacity(raw.len());
        for (item, rater, code) in &raw {
            let label = domain.class_of(*code).ok_or_else(|| DatasetError::UnknownLabel {
                line: 0,
                label: code.to_string(),
            })?;
            ratings.push(Rating {
                item: items.binary_search(item).unwrap() as ItemIdx,
                rater: raters.binary_search(rater).unwrap() as RaterIdx,
                label,
            });
        }
        Self::from_indexed(items, raters, domain, ratings)
    }

    /// Builds a dataset from already-interned ratings. `items` and `raters`
    /// must be sorted and unique.
    pub fn from_indexed(
        items: Vec<String>,
        raters: Vec<String>,
        domain: LabelDomain,
        mut ratings: Vec<Rating>,
    ) -> Result<Self, DatasetError> {
        if ratings.is_empty() {
            return Err(DatasetError::EmptyDataset);
        }
        if items.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DatasetError::InvalidDataset(
                "item ids must be unique and sorted".into(),
            ));
        }
        if raters.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DatasetError::InvalidDataset(
                "rater ids must be unique and sorted".into(),
            ));
        }
        let c = domain.cardinality();
        for r in &ratings {
            if r.item as usize >= items.len() || r.rater as usize >= raters.len() {
                return Err(DatasetError::InvalidDataset(format!(
                    "rating references unknown index {r:?}"
                )));
            }
            if r.label as usize >= c {
                return Err(DatasetError::UnknownLabel {
                    line: 0,
                    label: format!("class index {}", r.label),
                });
            }
        }
        ratings.sort_unstable();
        if let Some(w) = ratings
            .windows(2)
            .find(|w| w[0].item == w[1].item && w[0].rater == w[1].rater)
        {
            return Err(DatasetError::DuplicateRating {
                item: items[w[0].item as usize].clone(),
                rater: raters[w[0].rater as usize].clone(),
            });
        }

        let mut item_offsets = vec![0usize; items.len() + 1];
        for r in &ratings {
            item_offsets[r.item as usize + 1] += 1;
        }
        for i in 0..items.len() {
            if item_offsets[i + 1] == 0 {
                return Err(DatasetError::InvalidDataset(format!(
                    "item {:?} has no ratings",
                    items[i]
                )));
            }
            item_offsets[i + 1] += item_offsets[i];
        }
        let mut rater_seen = vec![false; raters.len()];
        for r in &ratings {
            rater_seen[r.rater as usize] = true;
        }
        if let Some(idx) = rater_seen.iter().position(|s| !s) {
            return Err(DatasetError::InvalidDataset(format!(
                "rater {:?} has no ratings",
                raters[idx]
            )));
        }

        let crossed = (ratings.len() == items.len() * raters.len())
            .then(|| ratings.iter().map(|r| r.label).collect());

        let mut d = Self {
            items,
            raters,
            domain,
            ratings,
            item_offsets,
            crossed,
            batch_map: None,
            fingerprint: 0,
        };
        d.fingerprint = d.compute_fingerprint();
        Ok(d)
    }

    fn compute_fingerprint(&self) -> u64 {
        let mut words = Vec::with_capacity(self.ratings.len() + 8);
        words.push(self.items.len() as u64);
        words.push(self.raters.len() as u64);
        words.extend(self.domain.codes().iter().map(|&c| c as u64));
        words.extend(
            self.ratings
                .iter()
                .map(|r| (r.item as u64) << 32 ^ (r.rater as u64) << 16 ^ r.label as u64),
        );
        if let Some(bm) = &self.batch_map {
            for b in &bm.batches {
                words.push(u64::MAX);
                words.extend(b.items.iter().map(|&i| i as u64));
            }
        }
        let id_hash = self
            .items
            .iter()
            .chain(&self.raters)
            .fold(0u64, |h, s| {
                s.bytes().fold(splitmix64(h ^ 0xff), |h, b| splitmix64(h ^ b as u64))
            });
        words.push(id_hash);
        hash_words(&words)
    }

    /// Cheap 64-bit content fingerprint, recorded in resample provenance.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    pub fn domain(&self) -> &LabelDomain {
        &self.domain
    }

    pub fn ratings(&self) -> &[Rating] {
        &self.ratings
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_raters(&self) -> usize {
        self.raters.len()
    }

    pub fn n_ratings(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_fully_crossed(&self) -> bool {
        self.crossed.is_some()
    }

    pub fn batch_map(&self) -> Option<&BatchMap> {
        self.batch_map.as_ref()
    }

    /// Ratings of one item, sorted by rater index.
    pub fn item_pool(&self, item: ItemIdx) -> &[Rating] {
        let i = item as usize;
        &self.ratings[self.item_offsets[i]..self.item_offsets[i + 1]]
    }

    /// Label given by `rater` to `item`, if any.
    pub fn label(&self, item: ItemIdx, rater: RaterIdx) -> Option<ClassIdx> {
        if let Some(m) = &self.crossed {
            return Some(m[item as usize * self.raters.len() + rater as usize]);
        }
        let pool = self.item_pool(item);
        pool.binary_search_by_key(&rater, |r| r.rater)
            .ok()
            .map(|j| pool[j].label)
    }

    pub(crate) fn crossed_matrix(&self) -> Option<&[ClassIdx]> {
        self.crossed.as_deref()
    }

    pub fn summary(&self) -> DatasetSummary {
        let mut ratings_per_item = BTreeMap::new();
        for i in 0..self.n_items() {
            let n = self.item_offsets[i + 1] - self.item_offsets[i];
            *ratings_per_item.entry(n).or_insert(0) += 1;
        }
        DatasetSummary {
            n_items: self.n_items(),
            n_raters: self.n_raters(),
            n_ratings: self.n_ratings(),
            ratings_per_item,
            fully_crossed: self.is_fully_crossed(),
            batch_size: self.batch_map.as_ref().map(|b| b.batch_size),
        }
    }

    /// SHA-256 of the canonical dataset file body, hex encoded.
    pub fn content_hash(&self) -> String {
        let body = file::encode_body(self);
        let digest = Sha256::digest(body.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// First 64 bits of [`AnnotationDataset::content_hash`].
    pub fn content_hash_u64(&self) -> u64 {
        u64::from_str_radix(&self.content_hash()[..16], 16).unwrap_or(0)
    }

    /// Attaches an explicit batch partition after validating it.
    pub fn with_batch_map(mut self, batches: Vec<Batch>) -> Result<Self, DatasetError> {
        self.batch_map = Some(self.validate_batches(batches)?);
        self.fingerprint = self.compute_fingerprint();
        Ok(self)
    }

    pub fn without_batch_map(mut self) -> Self {
        self.batch_map = None;
        self.fingerprint = self.compute_fingerprint();
        self
    }

    fn validate_batches(&self, mut batches: Vec<Batch>) -> Result<BatchMap, DatasetError> {
        let bad = |m: String| DatasetError::NotBatchable(m);
        if batches.is_empty() {
            return Err(bad("no batches".into()));
        }
        let size = batches[0].items.len();
        if size == 0 {
            return Err(bad("empty batch".into()));
        }
        let mut covered = vec![false; self.n_items()];
        for (b, batch) in batches.iter_mut().enumerate() {
            if batch.items.len() != size {
                return Err(bad(format!(
                    "batch {b} has {} items, expected {size}",
                    batch.items.len()
                )));
            }
            batch.raters.sort_unstable();
            batch.raters.dedup();
            for &item in &batch.items {
                let slot = covered
                    .get_mut(item as usize)
                    .ok_or_else(|| bad(format!("batch {b} references unknown item {item}")))?;
                if *slot {
                    return Err(bad(format!("item {item} appears in more than one batch")));
                }
                *slot = true;
                let pool: Vec<RaterIdx> = self.item_pool(item).iter().map(|r| r.rater).collect();
                if pool != batch.raters {
                    return Err(bad(format!(
                        "item {:?} was not rated by exactly the pool of batch {b}",
                        self.items[item as usize]
                    )));
                }
            }
        }
        if let Some(i) = covered.iter().position(|c| !c) {
            return Err(bad(format!("item {:?} is in no batch", self.items[i])));
        }
        Ok(BatchMap {
            batch_size: size,
            batches,
        })
    }

    /// Groups items by identical rater sets and splits each group into
    /// chunks of `batch_size` in item order.
    pub fn infer_batches(&self, batch_size: usize) -> Result<Self, DatasetError> {
        if batch_size == 0 {
            return Err(DatasetError::InvalidParams("batch_size must be positive".into()));
        }
        if self.batch_map.is_some() {
            return Err(DatasetError::InvalidParams("dataset already has a batch map".into()));
        }
        let mut groups: BTreeMap<Vec<RaterIdx>, Vec<ItemIdx>> = BTreeMap::new();
        for i in 0..self.n_items() as ItemIdx {
            let pool = self.item_pool(i).iter().map(|r| r.rater).collect();
            groups.entry(pool).or_default().push(i);
        }
        let mut batches = Vec::new();
        for (raters, items) in groups {
            if items.len() % batch_size != 0 {
                return Err(DatasetError::NotBatchable(format!(
                    "{} items share rater set starting with {:?}; not divisible by {batch_size}",
                    items.len(),
                    self.raters[raters[0] as usize]
                )));
            }
            for chunk in items.chunks(batch_size) {
                batches.push(Batch {
                    items: chunk.to_vec(),
                    raters: raters.clone(),
                });
            }
        }
        batches.sort_by_key(|b| b.items[0]);
        self.clone().with_batch_map(batches)
    }

    /// Keeps `k` raters chosen uniformly without replacement.
    pub fn downsample_raters(&self, k: usize, seed: u64) -> Result<Self, DatasetError> {
        if k == 0 {
            return Err(DatasetError::InvalidParams("k must be positive".into()));
        }
        let n = self.n_raters();
        if k > n {
            return Err(DatasetError::KTooLarge { k, n_raters: n });
        }
        let mut rng = SeedSpec::new(seed).rng();
        let mut keep = index::sample(&mut rng, n, k).into_vec();
        keep.sort_unstable();

        let mut remap = vec![None; n];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = Some(new as RaterIdx);
        }
        let ratings: Vec<Rating> = self
            .ratings
            .iter()
            .filter_map(|r| {
                remap[r.rater as usize].map(|rater| Rating { rater, ..*r })
            })
            .collect();
        let mut has = vec![false; self.n_items()];
        for r in &ratings {
            has[r.item as usize] = true;
        }
        if let Some(i) = has.iter().position(|h| !h) {
            return Err(DatasetError::ItemLeftEmpty {
                item: self.items[i].clone(),
            });
        }
        let raters = keep.iter().map(|&i| self.raters[i].clone()).collect();
        let mut out =
            Self::from_indexed(self.items.clone(), raters, self.domain.clone(), ratings)?;
        if let Some(bm) = &self.batch_map {
            let batches = bm
                .batches
                .iter()
                .map(|b| Batch {
                    items: b.items.clone(),
                    raters: b.raters.iter().filter_map(|&r| remap[r as usize]).collect(),
                })
                .collect();
            out = out.with_batch_map(batches)?;
        }
        Ok(out)
    }
}

//! Multi-level bootstrap samplers.
//!
//! * **S1**: items with replacement, then one global multiset of K' raters
//!   applied to every item slot. Needs a fully-crossed source.
//! * **S2**: items with replacement, then an independent K'-rater multiset
//!   per slot drawn from the raters who labelled that item.
//! * **S3**: `ceil(N'/N_b)` batches with replacement, items with replacement
//!   inside each drawn batch, and one K'-rater multiset per drawn batch from
//!   that batch's pool. Needs a batch map.
//!
//! Rater multisets are stored in draw order. All draws come from the single
//! stream given by the [`SeedSpec`].

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AnnotationDataset, ClassIdx, ItemIdx, RaterIdx};
use crate::rng::{SeedSpec, StreamRng};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ResampleError {
    #[error("sampler S1 needs a fully-crossed dataset")]
    NotFullyCrossed,
    #[error("item {0} has an empty rater pool")]
    EmptyItemPool(ItemIdx),
    #[error("sampler S3 needs a dataset with a batch map")]
    NoBatchMap,
    #[error("resample does not match the requested sampler or source dataset")]
    ProvenanceMismatch,
    #[error("invalid sampler parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    S1,
    S2,
    S3,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 3] = [SamplerKind::S1, SamplerKind::S2, SamplerKind::S3];

    pub fn as_str(self) -> &'static str {
        match self {
            SamplerKind::S1 => "s1",
            SamplerKind::S2 => "s2",
            SamplerKind::S3 => "s3",
        }
    }

    pub(crate) fn code(self) -> u64 {
        match self {
            SamplerKind::S1 => 1,
            SamplerKind::S2 => 2,
            SamplerKind::S3 => 3,
        }
    }

    /// Checks that `d` has the structure this sampler needs.
    pub fn check(self, d: &AnnotationDataset) -> Result<(), ResampleError> {
        match self {
            SamplerKind::S1 if !d.is_fully_crossed() => Err(ResampleError::NotFullyCrossed),
            SamplerKind::S3 if d.batch_map().is_none() => Err(ResampleError::NoBatchMap),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Ok(SamplerKind::S1),
            "s2" => Ok(SamplerKind::S2),
            "s3" => Ok(SamplerKind::S3),
            other => Err(format!("unknown sampler {other:?} (expected s1, s2 or s3)")),
        }
    }
}

/// One bootstrap draw: N' item slots with exactly K' labels each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResampledDataset {
    sampler: SamplerKind,
    k_prime: usize,
    n_classes: usize,
    source: u64,
    item_slots: Vec<ItemIdx>,
    /// Rater-draw group of each slot: one group for S1, one per slot for S2,
    /// one per drawn batch for S3.
    slot_group: Vec<u32>,
    /// S3 only: the batch drawn for each group.
    group_batch: Vec<u32>,
    raters: Vec<RaterIdx>,
    labels: Vec<ClassIdx>,
}

impl ResampledDataset {
    pub fn sampler(&self) -> SamplerKind {
        self.sampler
    }

    pub fn n_prime(&self) -> usize {
        self.item_slots.len()
    }

    pub fn k_prime(&self) -> usize {
        self.k_prime
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Fingerprint of the dataset this was drawn from.
    pub fn source_fingerprint(&self) -> u64 {
        self.source
    }

    pub fn item_slots(&self) -> &[ItemIdx] {
        &self.item_slots
    }

    pub fn slot_groups(&self) -> &[u32] {
        &self.slot_group
    }

    /// Batches drawn by S3, one per group; empty for S1 and S2.
    pub fn drawn_batches(&self) -> &[u32] {
        &self.group_batch
    }

    pub fn labels(&self) -> &[ClassIdx] {
        &self.labels
    }

    pub fn raters(&self) -> &[RaterIdx] {
        &self.raters
    }

    pub fn slot_labels(&self, slot: usize) -> &[ClassIdx] {
        &self.labels[slot * self.k_prime..(slot + 1) * self.k_prime]
    }

    pub fn slot_raters(&self, slot: usize) -> &[RaterIdx] {
        &self.raters[slot * self.k_prime..(slot + 1) * self.k_prime]
    }

    pub(crate) fn labels_mut(&mut self) -> &mut [ClassIdx] {
        &mut self.labels
    }

    pub(crate) fn responses_mut(&mut self) -> (&mut [RaterIdx], &mut [ClassIdx]) {
        (&mut self.raters, &mut self.labels)
    }
}

fn check_sizes(n_prime: usize, k_prime: usize) -> Result<(), ResampleError> {
    if n_prime == 0 || k_prime == 0 {
        return Err(ResampleError::InvalidParams(format!(
            "N' and K' must be positive, got N'={n_prime} K'={k_prime}"
        )));
    }
    if n_prime.checked_mul(k_prime).is_none_or(|t| t > u32::MAX as usize) {
        return Err(ResampleError::InvalidParams("N' x K' is too large".into()));
    }
    Ok(())
}

fn draw_items(rng: &mut StreamRng, n_items: usize, n_prime: usize) -> Vec<ItemIdx> {
    (0..n_prime)
        .map(|_| rng.random_range(0..n_items) as ItemIdx)
        .collect()
}

/// Number of S3 batches and the item-slot count of each drawn batch.
pub fn s3_layout(n_prime: usize, batch_size: usize) -> Vec<usize> {
    let b = n_prime.div_ceil(batch_size);
    let base = n_prime / b;
    let rem = n_prime % b;
    (0..b).map(|g| base + usize::from(g < rem)).collect()
}

/// Draws a replicate with the given sampler.
pub fn sample(
    kind: SamplerKind,
    d: &AnnotationDataset,
    n_prime: usize,
    k_prime: usize,
    seed: &SeedSpec,
) -> Result<ResampledDataset, ResampleError> {
    match kind {
        SamplerKind::S1 => sample_s1(d, n_prime, k_prime, seed),
        SamplerKind::S2 => sample_s2(d, n_prime, k_prime, seed),
        SamplerKind::S3 => sample_s3(d, n_prime, k_prime, seed),
    }
}

pub fn sample_s1(
    d: &AnnotationDataset,
    n_prime: usize,
    k_prime: usize,
    seed: &SeedSpec,
) -> Result<ResampledDataset, ResampleError> {
    check_sizes(n_prime, k_prime)?;
    SamplerKind::S1.check(d)?;
    let mut rng = seed.rng();
    let item_slots = draw_items(&mut rng, d.n_items(), n_prime);
    let mut out = ResampledDataset {
        sampler: SamplerKind::S1,
        k_prime,
        n_classes: d.domain().cardinality(),
        source: d.fingerprint(),
        slot_group: vec![0; n_prime],
        group_batch: Vec::new(),
        item_slots,
        raters: Vec::new(),
        labels: Vec::new(),
    };
    fill_s1(&mut out, d, &mut rng);
    Ok(out)
}

fn fill_s1(out: &mut ResampledDataset, d: &AnnotationDataset, rng: &mut StreamRng) {
    let k = out.k_prime;
    let n_raters = d.n_raters();
    let global: Vec<RaterIdx> = (0..k)
        .map(|_| rng.random_range(0..n_raters) as RaterIdx)
        .collect();
    let matrix = d.crossed_matrix().expect("checked fully crossed");
    out.raters.clear();
    out.labels.clear();
    for &item in &out.item_slots {
        let row = &matrix[item as usize * n_raters..(item as usize + 1) * n_raters];
        out.raters.extend_from_slice(&global);
        out.labels.extend(global.iter().map(|&r| row[r as usize]));
    }
}

pub fn sample_s2(
    d: &AnnotationDataset,
    n_prime: usize,
    k_prime: usize,
    seed: &SeedSpec,
) -> Result<ResampledDataset, ResampleError> {
    check_sizes(n_prime, k_prime)?;
    let mut rng = seed.rng();
    let item_slots = draw_items(&mut rng, d.n_items(), n_prime);
    let mut out = ResampledDataset {
        sampler: SamplerKind::S2,
        k_prime,
        n_classes: d.domain().cardinality(),
        source: d.fingerprint(),
        slot_group: (0..n_prime as u32).collect(),
        group_batch: Vec::new(),
        item_slots,
        raters: Vec::new(),
        labels: Vec::new(),
    };
    fill_s2(&mut out, d, &mut rng)?;
    Ok(out)
}

fn fill_s2(
    out: &mut ResampledDataset,
    d: &AnnotationDataset,
    rng: &mut StreamRng,
) -> Result<(), ResampleError> {
    let k = out.k_prime;
    out.raters.clear();
    out.labels.clear();
    out.raters.reserve(out.item_slots.len() * k);
    out.labels.reserve(out.item_slots.len() * k);
    for &item in &out.item_slots {
        let pool = d.item_pool(item);
        if pool.is_empty() {
            return Err(ResampleError::EmptyItemPool(item));
        }
        for _ in 0..k {
            let r = &pool[rng.random_range(0..pool.len())];
            out.raters.push(r.rater);
            out.labels.push(r.label);
        }
    }
    Ok(())
}

pub fn sample_s3(
    d: &AnnotationDataset,
    n_prime: usize,
    k_prime: usize,
    seed: &SeedSpec,
) -> Result<ResampledDataset, ResampleError> {
    check_sizes(n_prime, k_prime)?;
    let bm = d.batch_map().ok_or(ResampleError::NoBatchMap)?;
    let mut rng = seed.rng();
    let layout = s3_layout(n_prime, bm.batch_size());
    let group_batch: Vec<u32> = layout
        .iter()
        .map(|_| rng.random_range(0..bm.len()) as u32)
        .collect();
    let mut item_slots = Vec::with_capacity(n_prime);
    let mut slot_group = Vec::with_capacity(n_prime);
    for (g, (&count, &b)) in layout.iter().zip(&group_batch).enumerate() {
        let items = &bm.batches()[b as usize].items;
        for _ in 0..count {
            item_slots.push(items[rng.random_range(0..items.len())]);
            slot_group.push(g as u32);
        }
    }
    let mut out = ResampledDataset {
        sampler: SamplerKind::S3,
        k_prime,
        n_classes: d.domain().cardinality(),
        source: d.fingerprint(),
        item_slots,
        slot_group,
        group_batch,
        raters: Vec::new(),
        labels: Vec::new(),
    };
    fill_s3(&mut out, d, &mut rng);
    Ok(out)
}

fn fill_s3(out: &mut ResampledDataset, d: &AnnotationDataset, rng: &mut StreamRng) {
    let bm = d.batch_map().expect("checked batch map");
    let k = out.k_prime;
    // Positions into each drawn batch's (sorted) pool. Every item of a batch
    // was rated by exactly that pool, so position j in the pool is position
    // j in the item's own rating list.
    let positions: Vec<Vec<usize>> = out
        .group_batch
        .iter()
        .map(|&b| {
            let pool_len = bm.batches()[b as usize].raters.len();
            (0..k).map(|_| rng.random_range(0..pool_len)).collect()
        })
        .collect();
    out.raters.clear();
    out.labels.clear();
    for (&item, &g) in out.item_slots.iter().zip(&out.slot_group) {
        let pool = d.item_pool(item);
        for &j in &positions[g as usize] {
            out.raters.push(pool[j].rater);
            out.labels.push(pool[j].label);
        }
    }
}

/// Keeps the item slots of `g` (and for S3 its drawn batches) and draws
/// fresh raters under the same rule that produced `g`.
pub fn resample_raters_like(
    g: &ResampledDataset,
    d: &AnnotationDataset,
    kind: SamplerKind,
    seed: &SeedSpec,
) -> Result<ResampledDataset, ResampleError> {
    if g.sampler != kind || g.source != d.fingerprint() {
        return Err(ResampleError::ProvenanceMismatch);
    }
    kind.check(d)?;
    let mut rng = seed.rng();
    let mut out = ResampledDataset {
        raters: Vec::new(),
        labels: Vec::new(),
        ..g.clone()
    };
    match kind {
        SamplerKind::S1 => fill_s1(&mut out, d, &mut rng),
        SamplerKind::S2 => fill_s2(&mut out, d, &mut rng)?,
        SamplerKind::S3 => fill_s3(&mut out, d, &mut rng),
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{LabelDomain, LabelModel, SynthStructure};
    use proptest::prelude::*;

    fn crossed(n: usize, k: usize) -> AnnotationDataset {
        let mut t = Vec::new();
        for i in 0..n {
            for r in 0..k {
                t.push((format!("i{i}"), format!("r{r}"), ((i * k + r) % 2) as u32));
            }
        }
        AnnotationDataset::from_triples(LabelDomain::binary(), t).unwrap()
    }

    fn batched(items: usize, raters: usize, size: usize, seed: u64) -> AnnotationDataset {
        AnnotationDataset::synth_generate(
            items,
            raters,
            LabelDomain::binary(),
            SynthStructure::Batched { batch_size: size },
            &LabelModel::default(),
            seed,
        )
        .unwrap()
    }

    #[test]
    fn s1_single_cell() {
        let d = AnnotationDataset::from_triples(
            LabelDomain::binary(),
            [("i", "r", 1)],
        )
        .unwrap();
        let g = sample_s1(&d, 3, 2, &SeedSpec::new(0)).unwrap();
        assert_eq!(g.item_slots(), &[0, 0, 0]);
        assert_eq!(g.labels(), &[1; 6]);
    }

    #[test]
    fn s1_shares_raters_across_slots() {
        let d = crossed(5, 7);
        let g = sample_s1(&d, 20, 4, &SeedSpec::new(3)).unwrap();
        let first = g.slot_raters(0).to_vec();
        for s in 0..20 {
            assert_eq!(g.slot_raters(s), first.as_slice());
            for (j, &r) in first.iter().enumerate() {
                assert_eq!(g.slot_labels(s)[j], d.label(g.item_slots()[s], r).unwrap());
            }
        }
    }

    #[test]
    fn s1_rejects_sparse() {
        let d = AnnotationDataset::from_triples(
            LabelDomain::binary(),
            [("i1", "r1", 0), ("i1", "r2", 1), ("i2", "r1", 1)],
        )
        .unwrap();
        assert_eq!(
            sample_s1(&d, 2, 2, &SeedSpec::new(0)).unwrap_err(),
            ResampleError::NotFullyCrossed
        );
    }

    #[test]
    fn s1_oversamples_raters() {
        let d = crossed(10, 123);
        let g = sample_s1(&d, 50, 200, &SeedSpec::new(1)).unwrap();
        assert_eq!(g.labels().len(), 50 * 200);
    }

    #[test]
    fn zero_sizes_rejected() {
        let d = crossed(2, 2);
        assert!(matches!(
            sample_s2(&d, 0, 2, &SeedSpec::new(0)),
            Err(ResampleError::InvalidParams(_))
        ));
        assert!(matches!(
            sample_s1(&d, 2, 0, &SeedSpec::new(0)),
            Err(ResampleError::InvalidParams(_))
        ));
    }

    #[test]
    fn s2_singleton_pool() {
        let d = AnnotationDataset::from_triples(
            LabelDomain::binary(),
            [("i1", "r1", 1), ("i2", "r2", 0), ("i2", "r3", 1)],
        )
        .unwrap();
        let g = sample_s2(&d, 40, 5, &SeedSpec::new(9)).unwrap();
        for s in 0..40 {
            if g.item_slots()[s] == 0 {
                assert_eq!(g.slot_labels(s), &[1; 5]);
                assert_eq!(g.slot_raters(s), &[0; 5]);
            }
        }
    }

    #[test]
    fn s3_single_batch() {
        let d = batched(20, 4, 20, 1);
        let g = sample_s3(&d, 10, 3, &SeedSpec::new(5)).unwrap();
        assert_eq!(g.drawn_batches(), &[0]);
        assert_eq!(g.n_prime(), 10);
        let first = g.slot_raters(0).to_vec();
        for s in 0..10 {
            assert_eq!(g.slot_raters(s), first.as_slice());
        }
    }

    #[test]
    fn s3_layout_counts() {
        assert_eq!(s3_layout(50, 20), vec![17, 17, 16]);
        assert_eq!(s3_layout(10, 20), vec![10]);
        assert_eq!(s3_layout(100, 20), vec![20; 5]);
        assert_eq!(s3_layout(1, 20), vec![1]);
        let d = batched(100, 10, 20, 2);
        let g = sample_s3(&d, 50, 4, &SeedSpec::new(8)).unwrap();
        assert_eq!(g.drawn_batches().len(), 3);
        let mut counts = [0; 3];
        for &grp in g.slot_groups() {
            counts[grp as usize] += 1;
        }
        assert_eq!(counts, [17, 17, 16]);
    }

    #[test]
    fn s3_needs_batch_map() {
        let d = crossed(4, 2);
        assert_eq!(
            sample_s3(&d, 4, 2, &SeedSpec::new(0)).unwrap_err(),
            ResampleError::NoBatchMap
        );
    }

    #[test]
    fn s3_pool_closure() {
        let d = batched(100, 15, 20, 4);
        let bm = d.batch_map().unwrap();
        for rep in 0..1000u64 {
            let g = sample_s3(&d, 45, 3, &SeedSpec::with_path(1, &[rep])).unwrap();
            for s in 0..g.n_prime() {
                let b = &bm.batches()[g.drawn_batches()[g.slot_groups()[s] as usize] as usize];
                assert!(b.items.contains(&g.item_slots()[s]));
                for r in g.slot_raters(s) {
                    assert!(b.raters.binary_search(r).is_ok());
                }
            }
        }
    }

    #[test]
    fn like_keeps_slots_and_checks_provenance() {
        let d = batched(60, 9, 20, 5);
        for kind in [SamplerKind::S2, SamplerKind::S3] {
            let g = sample(kind, &d, 30, 4, &SeedSpec::new(1)).unwrap();
            let a = resample_raters_like(&g, &d, kind, &SeedSpec::new(2)).unwrap();
            assert_eq!(a.item_slots(), g.item_slots());
            assert_eq!(a.drawn_batches(), g.drawn_batches());
            assert_ne!(a.raters(), g.raters());
        }
        let g = sample(SamplerKind::S2, &d, 30, 4, &SeedSpec::new(1)).unwrap();
        assert_eq!(
            resample_raters_like(&g, &d, SamplerKind::S3, &SeedSpec::new(2)).unwrap_err(),
            ResampleError::ProvenanceMismatch
        );
        let other = batched(60, 9, 20, 6);
        assert_eq!(
            resample_raters_like(&g, &other, SamplerKind::S2, &SeedSpec::new(2)).unwrap_err(),
            ResampleError::ProvenanceMismatch
        );
    }

    #[test]
    fn like_with_singleton_pool_copies_labels() {
        let d = AnnotationDataset::from_triples(
            LabelDomain::binary(),
            [("i1", "r1", 1), ("i2", "r1", 0)],
        )
        .unwrap();
        for kind in [SamplerKind::S1, SamplerKind::S2] {
            let g = sample(kind, &d, 7, 3, &SeedSpec::new(4)).unwrap();
            let a = resample_raters_like(&g, &d, kind, &SeedSpec::new(5)).unwrap();
            assert_eq!(a.labels(), g.labels());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn shape_and_determinism(seed in any::<u64>(), n in 1usize..60, k in 1usize..12, kind_i in 0usize..3) {
            let d = batched(60, 12, 20, 3);
            let kind = SamplerKind::ALL[kind_i];
            let d = if kind == SamplerKind::S1 { crossed(6, 5) } else { d };
            let spec = SeedSpec::with_path(seed, &[1, 2]);
            let a = sample(kind, &d, n, k, &spec).unwrap();
            let b = sample(kind, &d, n, k, &spec).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.n_prime(), n);
            prop_assert_eq!(a.labels().len(), n * k);
            prop_assert!(a.labels().iter().all(|&l| (l as usize) < d.domain().cardinality()));
            for s in 0..n {
                for (&r, &l) in a.slot_raters(s).iter().zip(a.slot_labels(s)) {
                    prop_assert_eq!(d.label(a.item_slots()[s], r), Some(l));
                }
            }
        }
    }
}

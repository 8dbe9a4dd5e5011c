//! Synthetic datasets with crossed, batched, or sparse structure.
//!
//! Each item carries categorical label weights; each rater carries a
//! persistent per-class log-weight offset (`rater_bias` is its standard
//! deviation). A rating is drawn from `softmax(log w_item + offset_rater)`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use super::{AnnotationDataset, Batch, DatasetError, ItemIdx, LabelDomain, RaterIdx};
use crate::rng::SeedSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthStructure {
    Crossed,
    Batched { batch_size: usize },
    Sparse { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemWeights {
    /// Same weights for every item.
    Shared(Vec<f64>),
    /// One weight vector per item.
    PerItem(Vec<Vec<f64>>),
    /// Symmetric Dirichlet draw per item.
    Dirichlet { concentration: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelModel {
    pub item_weights: ItemWeights,
    pub rater_bias: f64,
}

impl LabelModel {
    pub fn new(item_weights: ItemWeights, rater_bias: f64) -> Self {
        Self {
            item_weights,
            rater_bias,
        }
    }
}

impl Default for LabelModel {
    fn default() -> Self {
        Self::new(ItemWeights::Dirichlet { concentration: 1.0 }, 0.0)
    }
}

fn invalid(msg: impl Into<String>) -> DatasetError {
    DatasetError::InvalidParams(msg.into())
}

fn check_weights(w: &[f64], c: usize) -> Result<(), DatasetError> {
    if w.len() != c {
        return Err(invalid(format!("weight vector has {} entries, domain has {c}", w.len())));
    }
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
        return Err(invalid("weights must be non-negative with a positive sum"));
    }
    Ok(())
}

impl AnnotationDataset {
    pub fn synth_generate(
        n_items: usize,
        n_raters: usize,
        domain: LabelDomain,
        structure: SynthStructure,
        label_model: &LabelModel,
        seed: u64,
    ) -> Result<Self, DatasetError> {
        if n_items == 0 || n_raters == 0 {
            return Err(invalid("n_items and n_raters must be positive"));
        }
        let c = domain.cardinality();
        if !(label_model.rater_bias.is_finite() && label_model.rater_bias >= 0.0) {
            return Err(invalid("rater_bias must be a finite non-negative number"));
        }
        let base = SeedSpec::new(seed);

        // Per-item log weights.
        let mut wrng = base.child(0).rng();
        let item_log_w: Vec<Vec<f64>> = match &label_model.item_weights {
            ItemWeights::Shared(w) => {
                check_weights(w, c)?;
                vec![w.iter().map(|x| x.ln()).collect(); n_items]
            }
            ItemWeights::PerItem(ws) => {
                if ws.len() != n_items {
                    return Err(invalid("PerItem weights must have one entry per item"));
                }
                ws.iter()
                    .map(|w| check_weights(w, c).map(|_| w.iter().map(|x| x.ln()).collect()))
                    .collect::<Result<_, _>>()?
            }
            ItemWeights::Dirichlet { concentration } => {
                let g = Gamma::new(*concentration, 1.0)
                    .map_err(|_| invalid("Dirichlet concentration must be positive"))?;
                (0..n_items)
                    .map(|_| {
                        (0..c)
                            .map(|_| g.sample(&mut wrng).max(f64::MIN_POSITIVE).ln())
                            .collect()
                    })
                    .collect()
            }
        };

        let mut brng = base.child(1).rng();
        let bias = Normal::new(0.0, label_model.rater_bias).expect("validated sd");
        let rater_offsets: Vec<Vec<f64>> = (0..n_raters)
            .map(|_| (0..c).map(|_| bias.sample(&mut brng)).collect())
            .collect();

        // Which (item, rater) pairs exist.
        let mut srng = base.child(2).rng();
        let mut pairs: Vec<(ItemIdx, RaterIdx)> = Vec::new();
        let mut batches = None;
        match structure {
            SynthStructure::Crossed => {
                for i in 0..n_items {
                    for r in 0..n_raters {
                        pairs.push((i as ItemIdx, r as RaterIdx));
                    }
                }
            }
            SynthStructure::Batched { batch_size } => {
                if batch_size == 0 || !n_items.is_multiple_of(batch_size) {
                    return Err(invalid(format!(
                        "{n_items} items cannot be split into batches of {batch_size}"
                    )));
                }
                let n_batches = n_items / batch_size;
                if n_raters < n_batches {
                    return Err(invalid(format!(
                        "{n_raters} raters cannot staff {n_batches} disjoint batch pools"
                    )));
                }
                let mut bs = Vec::with_capacity(n_batches);
                for b in 0..n_batches {
                    let items: Vec<ItemIdx> =
                        ((b * batch_size)..((b + 1) * batch_size)).map(|i| i as ItemIdx).collect();
                    let raters: Vec<RaterIdx> =
                        (0..n_raters).filter(|r| r % n_batches == b).map(|r| r as RaterIdx).collect();
                    for &i in &items {
                        for &r in &raters {
                            pairs.push((i, r));
                        }
                    }
                    bs.push(Batch { items, raters });
                }
                batches = Some(bs);
            }
            SynthStructure::Sparse { p } => {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(invalid("sparse p must lie in (0, 1]"));
                }
                let mut present = vec![false; n_items * n_raters];
                for cell in present.iter_mut() {
                    *cell = srng.random_bool(p);
                }
                for i in 0..n_items {
                    if !present[i * n_raters..(i + 1) * n_raters].iter().any(|&x| x) {
                        let r = srng.random_range(0..n_raters);
                        present[i * n_raters + r] = true;
                    }
                }
                for r in 0..n_raters {
                    if !(0..n_items).any(|i| present[i * n_raters + r]) {
                        let i = srng.random_range(0..n_items);
                        present[i * n_raters + r] = true;
                    }
                }
                for i in 0..n_items {
                    for r in 0..n_raters {
                        if present[i * n_raters + r] {
                            pairs.push((i as ItemIdx, r as RaterIdx));
                        }
                    }
                }
            }
        }

        let mut lrng = base.child(3).rng();
        let mut probs = vec![0.0; c];
        let item_w = n_items.to_string().len();
        let rater_w = n_raters.to_string().len();
        let triples = pairs.into_iter().map(|(i, r)| {
            let lw = &item_log_w[i as usize];
            let off = &rater_offsets[r as usize];
            let max = (0..c).map(|k| lw[k] + off[k]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in 0..c {
                probs[k] = (lw[k] + off[k] - max).exp();
                total += probs[k];
            }
            let mut u = lrng.random::<f64>() * total;
            let mut class = c - 1;
            for (k, p) in probs.iter().enumerate() {
                if u < *p {
                    class = k;
                    break;
                }
                u -= p;
            }
            (
                format!("i{:0item_w$}", i),
                format!("r{:0rater_w$}", r),
                domain.code(class as u16),
            )
        });
        let triples: Vec<_> = triples.collect();
        let d = AnnotationDataset::from_triples(domain, triples)?;
        match batches {
            Some(b) => d.with_batch_map(b),
            None => Ok(d),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossed_4x3() {
        let d = AnnotationDataset::synth_generate(
            4,
            3,
            LabelDomain::binary(),
            SynthStructure::Crossed,
            &LabelModel::default(),
            0,
        )
        .unwrap();
        assert_eq!(d.n_ratings(), 12);
        assert!(d.is_fully_crossed());
    }

    #[test]
    fn batched_40x9() {
        let d = AnnotationDataset::synth_generate(
            40,
            9,
            LabelDomain::binary(),
            SynthStructure::Batched { batch_size: 20 },
            &LabelModel::default(),
            0,
        )
        .unwrap();
        let bm = d.batch_map().unwrap();
        assert_eq!(bm.len(), 2);
        assert_eq!(bm.batches()[0].raters.len(), 5);
        assert_eq!(bm.batches()[1].raters.len(), 4);
    }

    #[test]
    fn sparse_is_reproducible() {
        let gen = || {
            AnnotationDataset::synth_generate(
                100,
                20,
                LabelDomain::binary(),
                SynthStructure::Sparse { p: 0.5 },
                &LabelModel::new(ItemWeights::Dirichlet { concentration: 1.0 }, 0.5),
                7,
            )
            .unwrap()
        };
        let (a, b) = (gen(), gen());
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        a.write_to(&mut ba).unwrap();
        b.write_to(&mut bb).unwrap();
        assert_eq!(ba, bb);
        let s = a.summary();
        assert!(s.n_ratings > 800 && s.n_ratings < 1200, "{}", s.n_ratings);
    }

    #[test]
    fn invalid_params() {
        let m = LabelModel::default();
        let dom = LabelDomain::binary();
        for (n, k, s) in [
            (0, 3, SynthStructure::Crossed),
            (3, 0, SynthStructure::Crossed),
            (10, 3, SynthStructure::Batched { batch_size: 3 }),
            (40, 1, SynthStructure::Batched { batch_size: 20 }),
            (4, 3, SynthStructure::Sparse { p: 0.0 }),
            (4, 3, SynthStructure::Sparse { p: 1.5 }),
        ] {
            assert!(matches!(
                AnnotationDataset::synth_generate(n, k, dom.clone(), s, &m, 1),
                Err(DatasetError::InvalidParams(_))
            ));
        }
        let bad = LabelModel::new(ItemWeights::Shared(vec![1.0]), 0.0);
        assert!(AnnotationDataset::synth_generate(2, 2, dom, SynthStructure::Crossed, &bad, 1).is_err());
    }

    #[test]
    fn shared_weights_follow_distribution() {
        let m = LabelModel::new(ItemWeights::Shared(vec![1.0, 3.0]), 0.0);
        let d = AnnotationDataset::synth_generate(
            200,
            50,
            LabelDomain::binary(),
            SynthStructure::Crossed,
            &m,
            11,
        )
        .unwrap();
        let ones = d.ratings().iter().filter(|r| r.label == 1).count() as f64;
        let n = d.n_ratings() as f64;
        let sd = (0.75f64 * 0.25 / n).sqrt();
        assert!((ones / n - 0.75).abs() < 4.0 * sd);
    }

    #[test]
    fn infer_recovers_generated_batches() {
        for (items, raters, size) in [(100, 15, 20), (60, 12, 10), (40, 9, 20), (21, 3, 7), (5, 5, 5)] {
            let d = AnnotationDataset::synth_generate(
                items,
                raters,
                LabelDomain::range(3).unwrap(),
                SynthStructure::Batched { batch_size: size },
                &LabelModel::default(),
                items as u64,
            )
            .unwrap();
            let inferred = d.clone().without_batch_map().infer_batches(size).unwrap();
            assert_eq!(inferred.batch_map(), d.batch_map(), "{items}/{raters}/{size}");
        }
    }
}

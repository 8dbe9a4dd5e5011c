use std::collections::BTreeMap;

use raterboot::dataset::{LabelModel, SynthStructure};
use raterboot::resample::{resample_raters_like, sample};
use raterboot::{AnnotationDataset, LabelDomain, SamplerKind, SeedSpec};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn chi_square_uniform(obs: &[u64]) -> f64 {
    let n: u64 = obs.iter().sum();
    let e = n as f64 / obs.len() as f64;
    let stat: f64 = obs.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
    1.0 - ChiSquared::new((obs.len() - 1) as f64).unwrap().cdf(stat)
}

fn crossed_2x2() -> AnnotationDataset {
    AnnotationDataset::from_triples(
        LabelDomain::binary(),
        [("a", "x", 0), ("a", "y", 1), ("b", "x", 1), ("b", "y", 1)],
    )
    .unwrap()
}

#[test]
fn single_cell_draws_are_uniform() {
    let d = crossed_2x2();
    for kind in [SamplerKind::S1, SamplerKind::S2] {
        let mut obs = [0u64; 4];
        for i in 0..40_000 {
            let s = sample(kind, &d, 1, 1, &SeedSpec::with_path(17, &[i])).unwrap();
            obs[s.item_slots()[0] as usize * 2 + s.raters()[0] as usize] += 1;
        }
        let p = chi_square_uniform(&obs);
        assert!(p > 0.001, "{kind}: {obs:?} p={p}");
    }
}

#[test]
fn two_rater_pool_multisets() {
    let d = AnnotationDataset::from_triples(LabelDomain::binary(), [("i", "r1", 0), ("i", "r2", 1)]).unwrap();
    let mut freq: BTreeMap<Vec<u16>, u64> = BTreeMap::new();
    let n = 40_000;
    for i in 0..n {
        let s = sample(SamplerKind::S2, &d, 1, 2, &SeedSpec::with_path(3, &[i])).unwrap();
        let mut labels = s.slot_labels(0).to_vec();
        labels.sort_unstable();
        *freq.entry(labels).or_default() += 1;
    }
    let want = [(vec![0, 0], 0.25), (vec![0, 1], 0.5), (vec![1, 1], 0.25)];
    let mut stat = 0.0;
    for (k, p) in &want {
        let e = p * n as f64;
        stat += (freq[k] as f64 - e).powi(2) / e;
    }
    let p = 1.0 - ChiSquared::new(2.0).unwrap().cdf(stat);
    assert!(p > 0.001, "{freq:?}");
}

fn marginal_ones(labels: &[u16]) -> f64 {
    labels.iter().filter(|&&l| l == 1).count() as f64
}

#[test]
fn s1_and_s2_share_slot_marginals_but_not_coupling() {
    let d = AnnotationDataset::synth_generate(
        6,
        5,
        LabelDomain::binary(),
        SynthStructure::Crossed,
        &LabelModel::default(),
        8,
    )
    .unwrap();
    let reps = 10_000u64;
    let (n_prime, k_prime) = (4, 3);
    let mut ones = [0.0f64; 2];
    let mut same_raters = [0u64; 2];
    for (j, kind) in [SamplerKind::S1, SamplerKind::S2].into_iter().enumerate() {
        for i in 0..reps {
            let s = sample(kind, &d, n_prime, k_prime, &SeedSpec::with_path(50 + j as u64, &[i])).unwrap();
            ones[j] += marginal_ones(s.labels());
            same_raters[j] += u64::from(s.slot_raters(0) == s.slot_raters(1));
        }
    }
    let total = (reps as usize * n_prime * k_prime) as f64;
    let (p1, p2) = (ones[0] / total, ones[1] / total);
    // Slot labels are correlated under S1, so use a generous variance bound:
    // the draws per replicate are at most fully correlated.
    let se = (p1 * (1.0 - p1) / reps as f64).sqrt();
    assert!((p1 - p2).abs() < 3.0 * se * std::f64::consts::SQRT_2, "{p1} vs {p2}");
    assert_eq!(same_raters[0], reps);
    assert!(same_raters[1] < reps / 10);
}

#[test]
fn rater_redraw_keeps_marginals() {
    let d = crossed_2x2();
    let (mut g_ones, mut a_ones, mut slots) = (0.0, 0.0, 0.0);
    for i in 0..10_000u64 {
        let seed = SeedSpec::with_path(70, &[i]);
        let g = sample(SamplerKind::S2, &d, 2, 2, &seed.child(0)).unwrap();
        let a = resample_raters_like(&g, &d, SamplerKind::S2, &seed.child(1)).unwrap();
        assert_eq!(a.item_slots(), g.item_slots());
        g_ones += marginal_ones(g.labels());
        a_ones += marginal_ones(a.labels());
        slots += g.labels().len() as f64;
    }
    let (pg, pa) = (g_ones / slots, a_ones / slots);
    let se = (2.0 * pg * (1.0 - pg) / slots).sqrt();
    // Both are draws of the same pools; item slots are shared, so the
    // difference only carries the rater-draw noise.
    assert!((pg - pa).abs() < 3.0 * se, "{pg} vs {pa}");
    assert!((pa - 0.75).abs() < 0.02);
}

#[test]
fn oversampling_beyond_pool_size() {
    let d = AnnotationDataset::synth_generate(
        20,
        12,
        LabelDomain::range(3).unwrap(),
        SynthStructure::Crossed,
        &LabelModel::default(),
        2,
    )
    .unwrap();
    for kind in [SamplerKind::S1, SamplerKind::S2] {
        for k in [100, 200] {
            let s = sample(kind, &d, 50, k, &SeedSpec::new(k as u64)).unwrap();
            assert_eq!(s.labels().len(), 50 * k);
            assert!(s.raters().iter().all(|&r| (r as usize) < d.n_raters()));
        }
    }
}

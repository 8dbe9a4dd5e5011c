//! Response aggregation and the eight comparison metrics.
//!
//! Vote-based metrics (accuracy, weighted precision/recall/F1) work on the
//! plurality label of each item slot. Distribution-based metrics (MAE, wins,
//! KL divergence, JS distance) work on each slot's empirical label
//! distribution. Γ folds a pair of scores into a signed gap that is positive
//! when A beats B.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ClassIdx;
use crate::resample::ResampledDataset;

/// Additive smoothing applied to both distributions in [`kl_div`].
pub const KL_SMOOTHING: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("label domains differ: {0} vs {1} classes")]
    DomainMismatch(usize, usize),
    #[error("label {label} is outside a domain of {classes} classes")]
    LabelOutOfDomain { label: ClassIdx, classes: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    LargerIsBetter,
    SmallerIsBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    Accuracy,
    Mae,
    Wins,
    Precision,
    Recall,
    F1,
    KlDiv,
    Jsd,
}

impl MetricId {
    pub const ALL: [MetricId; 8] = [
        MetricId::Accuracy,
        MetricId::Mae,
        MetricId::Wins,
        MetricId::Precision,
        MetricId::Recall,
        MetricId::F1,
        MetricId::KlDiv,
        MetricId::Jsd,
    ];

    pub fn orientation(self) -> Orientation {
        match self {
            MetricId::Mae | MetricId::KlDiv | MetricId::Jsd => Orientation::SmallerIsBetter,
            _ => Orientation::LargerIsBetter,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::Accuracy => "accuracy",
            MetricId::Mae => "mae",
            MetricId::Wins => "wins",
            MetricId::Precision => "precision",
            MetricId::Recall => "recall",
            MetricId::F1 => "f1",
            MetricId::KlDiv => "kl_div",
            MetricId::Jsd => "jsd",
        }
    }

    /// Column heading used in rendered tables.
    pub fn display_name(self) -> &'static str {
        match self {
            MetricId::Accuracy => "Accuracy",
            MetricId::Mae => "MAE",
            MetricId::Wins => "Wins",
            MetricId::Precision => "Precision",
            MetricId::Recall => "Recall",
            MetricId::F1 => "F1-Score",
            MetricId::KlDiv => "KL-Div",
            MetricId::Jsd => "JSD",
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        Ok(match norm.as_str() {
            "accuracy" | "acc" => MetricId::Accuracy,
            "mae" => MetricId::Mae,
            "wins" => MetricId::Wins,
            "precision" => MetricId::Precision,
            "recall" => MetricId::Recall,
            "f1" | "f1score" => MetricId::F1,
            "kldiv" | "kl" => MetricId::KlDiv,
            "jsd" => MetricId::Jsd,
            _ => return Err(format!("unknown metric {s:?}")),
        })
    }
}

/// Parses a comma-separated metric list; `all` selects every metric.
pub fn parse_metric_list(s: &str) -> Result<Vec<MetricId>, String> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(MetricId::ALL.to_vec());
    }
    let mut out: Vec<MetricId> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err("empty metric list".into());
    }
    Ok(out)
}

/// Probability vector over a label domain.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution {
    probs: Vec<f64>,
}

impl LabelDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, MetricError> {
        if probs.is_empty() {
            return Err(MetricError::EmptyInput);
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(MetricError::InvalidDistribution("negative or non-finite mass".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(MetricError::InvalidDistribution(format!("sums to {total}")));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Plurality label per item slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteVector {
    votes: Vec<ClassIdx>,
    n_classes: usize,
}

impl VoteVector {
    pub fn new(votes: Vec<ClassIdx>, n_classes: usize) -> Result<Self, MetricError> {
        if let Some(&label) = votes.iter().find(|&&v| v as usize >= n_classes) {
            return Err(MetricError::LabelOutOfDomain {
                label,
                classes: n_classes,
            });
        }
        Ok(Self { votes, n_classes })
    }

    pub fn votes(&self) -> &[ClassIdx] {
        &self.votes
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.votes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }
}

/// One label distribution per item slot, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSet {
    n_classes: usize,
    probs: Vec<f64>,
}

impl DistributionSet {
    pub fn from_rows(rows: &[LabelDistribution]) -> Result<Self, MetricError> {
        let c = rows.first().map(|r| r.probs.len()).ok_or(MetricError::EmptyInput)?;
        let mut probs = Vec::with_capacity(rows.len() * c);
        for r in rows {
            if r.probs.len() != c {
                return Err(MetricError::DomainMismatch(c, r.probs.len()));
            }
            probs.extend_from_slice(&r.probs);
        }
        Ok(Self { n_classes: c, probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len() / self.n_classes
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.n_classes..(i + 1) * self.n_classes]
    }

    fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks_exact(self.n_classes)
    }
}

fn counts(labels: &[ClassIdx], n_classes: usize, out: &mut [u32]) -> Result<(), MetricError> {
    if labels.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    out.iter_mut().for_each(|c| *c = 0);
    for &l in labels {
        *out.get_mut(l as usize).ok_or(MetricError::LabelOutOfDomain {
            label: l,
            classes: n_classes,
        })? += 1;
    }
    Ok(())
}

/// Modal label; ties go to the smallest class index.
pub fn plurality_vote(labels: &[ClassIdx], n_classes: usize) -> Result<ClassIdx, MetricError> {
    let mut c = vec![0u32; n_classes];
    counts(labels, n_classes, &mut c)?;
    Ok(argmax_first(&c))
}

fn argmax_first(counts: &[u32]) -> ClassIdx {
    let mut best = 0;
    for (k, &n) in counts.iter().enumerate().skip(1) {
        if n > counts[best] {
            best = k;
        }
    }
    best as ClassIdx
}

pub fn label_distribution(
    labels: &[ClassIdx],
    n_classes: usize,
) -> Result<LabelDistribution, MetricError> {
    let mut c = vec![0u32; n_classes];
    counts(labels, n_classes, &mut c)?;
    let n = labels.len() as f64;
    Ok(LabelDistribution {
        probs: c.iter().map(|&x| x as f64 / n).collect(),
    })
}

fn same_len(a: usize, b: usize) -> Result<(), MetricError> {
    if a != b {
        Err(MetricError::LengthMismatch(a, b))
    } else {
        Ok(())
    }
}

fn same_shape(a: &DistributionSet, g: &DistributionSet) -> Result<(), MetricError> {
    same_len(a.len(), g.len())?;
    if a.n_classes != g.n_classes {
        return Err(MetricError::DomainMismatch(a.n_classes, g.n_classes));
    }
    if a.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    Ok(())
}

/// Fraction of slots where the votes agree.
pub fn accuracy(a: &VoteVector, g: &VoteVector) -> Result<f64, MetricError> {
    same_len(a.len(), g.len())?;
    if a.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let hits = a.votes.iter().zip(&g.votes).filter(|(x, y)| x == y).count();
    Ok(hits as f64 / a.len() as f64)
}

const WINS_TIE_TOL: f64 = 1e-12;

fn item_mae(a: &[f64], g: &[f64]) -> f64 {
    a.iter().zip(g).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Mean over slots of the class-averaged absolute difference.
pub fn mae(a: &DistributionSet, g: &DistributionSet) -> Result<f64, MetricError> {
    same_shape(a, g)?;
    let total: f64 = a.rows().zip(g.rows()).map(|(x, y)| item_mae(x, y)).sum();
    Ok(total / a.len() as f64)
}

/// Per-slot wins of A and B, judged by item-level MAE against G. Ties split
/// the win, so the two shares sum to one.
pub fn wins(
    a: &DistributionSet,
    b: &DistributionSet,
    g: &DistributionSet,
) -> Result<(f64, f64), MetricError> {
    same_shape(a, g)?;
    same_shape(b, g)?;
    let mut wa = 0.0;
    for ((x, y), z) in a.rows().zip(b.rows()).zip(g.rows()) {
        let ea = item_mae(x, z);
        let eb = item_mae(y, z);
        // Rounding can split exact rational ties by an ulp.
        wa += if (ea - eb).abs() <= WINS_TIE_TOL {
            0.5
        } else if ea < eb {
            1.0
        } else {
            0.0
        };
    }
    let n = a.len() as f64;
    let wa = wa / n;
    Ok((wa, 1.0 - wa))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrfKind {
    Precision,
    Recall,
    F1,
}

/// Per-class precision, recall or F1 averaged with weights equal to the
/// class's support in `g`.
pub fn prf_weighted(a: &VoteVector, g: &VoteVector, kind: PrfKind) -> Result<f64, MetricError> {
    same_len(a.len(), g.len())?;
    if g.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    if a.n_classes != g.n_classes {
        return Err(MetricError::DomainMismatch(a.n_classes, g.n_classes));
    }
    let c = g.n_classes;
    let mut tp = vec![0u32; c];
    let mut predicted = vec![0u32; c];
    let mut support = vec![0u32; c];
    for (&p, &t) in a.votes.iter().zip(&g.votes) {
        predicted[p as usize] += 1;
        support[t as usize] += 1;
        if p == t {
            tp[t as usize] += 1;
        }
    }
    let mut acc = 0.0;
    for k in 0..c {
        if support[k] == 0 {
            continue;
        }
        let precision = if predicted[k] == 0 {
            0.0
        } else {
            tp[k] as f64 / predicted[k] as f64
        };
        let recall = tp[k] as f64 / support[k] as f64;
        let score = match kind {
            PrfKind::Precision => precision,
            PrfKind::Recall => recall,
            PrfKind::F1 if precision + recall == 0.0 => 0.0,
            PrfKind::F1 => 2.0 * precision * recall / (precision + recall),
        };
        acc += support[k] as f64 * score;
    }
    Ok(acc / g.len() as f64)
}

/// Mean over slots of `KL(smooth(g) || smooth(a))`, natural log. Both
/// sides get [`KL_SMOOTHING`] added to every class and are renormalized, so
/// empirical zeros stay finite and identical inputs score exactly zero.
pub fn kl_div(a: &DistributionSet, g: &DistributionSet) -> Result<f64, MetricError> {
    same_shape(a, g)?;
    let norm = 1.0 + a.n_classes as f64 * KL_SMOOTHING;
    let mut total = 0.0;
    for (x, y) in a.rows().zip(g.rows()) {
        for (&q, &p) in x.iter().zip(y) {
            let ps = (p + KL_SMOOTHING) / norm;
            total += ps * ((p + KL_SMOOTHING) / (q + KL_SMOOTHING)).ln();
        }
    }
    Ok((total / a.len() as f64).max(0.0))
}

fn js_divergence_bits(p: &[f64], q: &[f64]) -> f64 {
    let mut d = 0.0;
    for (&x, &y) in p.iter().zip(q) {
        let m = 0.5 * (x + y);
        let term = |v: f64| if v > 0.0 { 0.5 * v * (v / m).log2() } else { 0.0 };
        d += term(x) + term(y);
    }
    d.clamp(0.0, 1.0)
}

/// Mean over slots of the Jensen-Shannon distance (base-2 logs).
pub fn jsd(a: &DistributionSet, g: &DistributionSet) -> Result<f64, MetricError> {
    same_shape(a, g)?;
    let total: f64 = a
        .rows()
        .zip(g.rows())
        .map(|(x, y)| js_divergence_bits(x, y).sqrt())
        .sum();
    Ok(total / a.len() as f64)
}

/// Orientation-normalized gap, positive when A beats B.
pub fn gamma(metric: MetricId, a_score: f64, b_score: f64) -> f64 {
    match metric.orientation() {
        Orientation::LargerIsBetter => a_score - b_score,
        Orientation::SmallerIsBetter => b_score - a_score,
    }
}

/// Votes and distributions of one resampled dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub votes: VoteVector,
    pub dists: DistributionSet,
}

impl Aggregate {
    /// Aggregates each slot's labels.
    pub fn from_slots<'a, I>(slots: I, n_classes: usize) -> Result<Self, MetricError>
    where
        I: IntoIterator<Item = &'a [ClassIdx]>,
    {
        let mut votes = Vec::new();
        let mut probs = Vec::new();
        let mut c = vec![0u32; n_classes];
        for labels in slots {
            counts(labels, n_classes, &mut c)?;
            votes.push(argmax_first(&c));
            let n = labels.len() as f64;
            probs.extend(c.iter().map(|&x| x as f64 / n));
        }
        if votes.is_empty() {
            return Err(MetricError::EmptyInput);
        }
        Ok(Self {
            votes: VoteVector { votes, n_classes },
            dists: DistributionSet { n_classes, probs },
        })
    }

    pub fn from_resample(r: &ResampledDataset) -> Result<Self, MetricError> {
        Self::from_slots(
            r.labels().chunks_exact(r.k_prime()),
            r.n_classes(),
        )
    }
}

/// Score of one model against the gold pool. Wins is relative and needs
/// both models, see [`gamma_scores`].
pub fn score(metric: MetricId, a: &Aggregate, g: &Aggregate) -> Result<f64, MetricError> {
    match metric {
        MetricId::Accuracy => accuracy(&a.votes, &g.votes),
        MetricId::Mae => mae(&a.dists, &g.dists),
        MetricId::Wins => Err(MetricError::InvalidDistribution(
            "wins is only defined for a pair of models".into(),
        )),
        MetricId::Precision => prf_weighted(&a.votes, &g.votes, PrfKind::Precision),
        MetricId::Recall => prf_weighted(&a.votes, &g.votes, PrfKind::Recall),
        MetricId::F1 => prf_weighted(&a.votes, &g.votes, PrfKind::F1),
        MetricId::KlDiv => kl_div(&a.dists, &g.dists),
        MetricId::Jsd => jsd(&a.dists, &g.dists),
    }
}

/// Γ(A, B, G) for each requested metric, in the given order.
pub fn gamma_scores(
    metrics: &[MetricId],
    a: &Aggregate,
    b: &Aggregate,
    g: &Aggregate,
) -> Result<Vec<f64>, MetricError> {
    metrics
        .iter()
        .map(|&m| {
            let (sa, sb) = match m {
                MetricId::Wins => wins(&a.dists, &b.dists, &g.dists)?,
                _ => (score(m, a, g)?, score(m, b, g)?),
            };
            Ok(gamma(m, sa, sb))
        })
        .collect()
}

//! Alternative and null hypothesis trials, p-values and effect sizes.
//!
//! One trial draws a gold pool G with the configured sampler, an ideal model
//! A that keeps G's item slots with fresh raters, and a model B drawn like A
//! whose responses are then corrupted at rate ε. Under the null hypothesis
//! the responses of A and B are pooled per item slot, shuffled, and split
//! back into two halves before scoring.
//!
//! Stream layout for replicate `r` of hypothesis `h` (alt=0, null=1):
//! `[h, r, role]` under the config seed, with roles from [`crate::rng`].
//! B uses `[h, r, 2, 0]` for its rater draw and `[h, r, 2, 1]` for noise.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AnnotationDataset, LabelDomain};
use crate::exec::Execution;
use crate::metrics::{gamma_scores, Aggregate, MetricId};
use crate::resample::{resample_raters_like, sample, ResampledDataset, SamplerKind};
use crate::rng::{SeedSpec, ROLE_A, ROLE_B, ROLE_G, ROLE_NULL_MIX};
use crate::Result;

pub const DEFAULT_NUM_SAMPLES: usize = 1000;

const HYP_ALT: u64 = 0;
const HYP_NULL: u64 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("perturbation needs at least two labels, domain has {0}")]
    DegenerateDomain(usize),
    #[error("empty distribution")]
    EmptyDistribution,
    #[error("paired p-value needs equal-length vectors, got {0} and {1}")]
    LengthMismatch(usize, usize),
}

/// How null and alternative Γ samples are compared.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    /// Share of all (null, alt) pairs with `null >= alt`.
    #[default]
    Pairwise,
    /// Share of replicate indices `i` with `null[i] >= alt[i]`.
    Paired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub sampler: SamplerKind,
    pub n_prime: usize,
    pub k_prime: usize,
    pub epsilon: f64,
    pub num_samples: usize,
    pub metrics: Vec<MetricId>,
    pub seed: u64,
    #[serde(default)]
    pub p_value_method: PValueMethod,
}

impl SimulationConfig {
    /// Config with every metric and the default replicate count.
    pub fn new(sampler: SamplerKind, n_prime: usize, k_prime: usize, epsilon: f64, seed: u64) -> Self {
        Self {
            sampler,
            n_prime,
            k_prime,
            epsilon,
            num_samples: DEFAULT_NUM_SAMPLES,
            metrics: MetricId::ALL.to_vec(),
            seed,
            p_value_method: PValueMethod::Pairwise,
        }
    }

    pub fn with_samples(mut self, num_samples: usize) -> Self {
        self.num_samples = num_samples;
        self
    }

    pub fn with_metrics(mut self, metrics: &[MetricId]) -> Self {
        self.metrics = metrics.to_vec();
        self
    }

    pub fn budget(&self) -> usize {
        self.n_prime * self.k_prime
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.into()));
        if self.n_prime == 0 || self.k_prime == 0 {
            return bad("n_prime and k_prime must be positive");
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1)");
        }
        if self.num_samples == 0 {
            return bad("num_samples must be at least 1");
        }
        if self.metrics.is_empty() {
            return bad("at least one metric is required");
        }
        let mut m = self.metrics.clone();
        m.sort();
        m.dedup();
        if m.len() != self.metrics.len() {
            return bad("metrics must be unique");
        }
        Ok(())
    }
}

/// Γ of every configured metric for one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialScores {
    pub replicate: usize,
    /// Aligned with `SimulationConfig::metrics`.
    pub gammas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub p_value: f64,
    pub delta: f64,
    pub gamma_alt: Vec<f64>,
    pub gamma_null: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueReport {
    pub config: SimulationConfig,
    pub per_metric: BTreeMap<MetricId, MetricReport>,
}

impl PValueReport {
    pub fn metric(&self, m: MetricId) -> Option<&MetricReport> {
        self.per_metric.get(&m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Replaces each response, with probability `epsilon`, by a label drawn
/// uniformly from the other C-1 labels.
pub fn perturb(
    b: &ResampledDataset,
    epsilon: f64,
    domain: &LabelDomain,
    seed: &SeedSpec,
) -> Result<ResampledDataset, SimError> {
    let c = domain.cardinality();
    if c < 2 {
        return Err(SimError::DegenerateDomain(c));
    }
    if c != b.n_classes() {
        return Err(SimError::InvalidConfig(format!(
            "domain has {c} labels, resample has {}",
            b.n_classes()
        )));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(SimError::InvalidConfig("epsilon must lie in [0, 1)".into()));
    }
    let mut out = b.clone();
    if epsilon == 0.0 {
        return Ok(out);
    }
    let mut rng = seed.rng();
    for label in out.labels_mut() {
        if rng.random::<f64>() < epsilon {
            let mut other = rng.random_range(0..c - 1) as u16;
            if other >= *label {
                other += 1;
            }
            *label = other;
        }
    }
    Ok(out)
}

fn check_config(d: &AnnotationDataset, cfg: &SimulationConfig) -> Result<()> {
    cfg.validate()?;
    cfg.sampler.check(d)?;
    Ok(())
}

fn draw_models(
    d: &AnnotationDataset,
    cfg: &SimulationConfig,
    hypothesis: u64,
    replicate: usize,
) -> Result<(ResampledDataset, ResampledDataset, ResampledDataset)> {
    let base = SeedSpec::with_path(cfg.seed, &[hypothesis, replicate as u64]);
    let g = sample(cfg.sampler, d, cfg.n_prime, cfg.k_prime, &base.child(ROLE_G))?;
    let a = resample_raters_like(&g, d, cfg.sampler, &base.child(ROLE_A))?;
    let b_seed = base.child(ROLE_B);
    let b = resample_raters_like(&g, d, cfg.sampler, &b_seed.child(0))?;
    let b = perturb(&b, cfg.epsilon, d.domain(), &b_seed.child(1))?;
    Ok((g, a, b))
}

fn score_trial(
    cfg: &SimulationConfig,
    replicate: usize,
    g: &ResampledDataset,
    a: &ResampledDataset,
    b: &ResampledDataset,
) -> Result<TrialScores> {
    let ga = Aggregate::from_resample(g)?;
    let aa = Aggregate::from_resample(a)?;
    let ba = Aggregate::from_resample(b)?;
    Ok(TrialScores {
        replicate,
        gammas: gamma_scores(&cfg.metrics, &aa, &ba, &ga)?,
    })
}

/// One replicate under the alternative hypothesis.
pub fn run_alt_trial(
    d: &AnnotationDataset,
    cfg: &SimulationConfig,
    replicate: usize,
) -> Result<TrialScores> {
    check_config(d, cfg)?;
    alt_trial(d, cfg, replicate)
}

fn alt_trial(d: &AnnotationDataset, cfg: &SimulationConfig, replicate: usize) -> Result<TrialScores> {
    let (g, a, b) = draw_models(d, cfg, HYP_ALT, replicate)?;
    score_trial(cfg, replicate, &g, &a, &b)
}

/// Pools the responses of `a` and `b` per item slot, shuffles, and splits
/// them back into two resamples of K' responses each.
pub fn mix_responses(
    a: &ResampledDataset,
    b: &ResampledDataset,
    seed: &SeedSpec,
) -> (ResampledDataset, ResampledDataset) {
    assert_eq!(a.item_slots(), b.item_slots(), "mixing needs matching slots");
    let k = a.k_prime();
    let mut rng = seed.rng();
    let mut a_out = a.clone();
    let mut b_out = b.clone();
    let mut pool = Vec::with_capacity(2 * k);
    for s in 0..a.n_prime() {
        pool.clear();
        pool.extend(a.slot_raters(s).iter().copied().zip(a.slot_labels(s).iter().copied()));
        pool.extend(b.slot_raters(s).iter().copied().zip(b.slot_labels(s).iter().copied()));
        pool.shuffle(&mut rng);
        let range = s * k..(s + 1) * k;
        {
            let (raters, labels) = a_out.responses_mut();
            for (j, &(r, l)) in pool[..k].iter().enumerate() {
                raters[range.start + j] = r;
                labels[range.start + j] = l;
            }
        }
        let (raters, labels) = b_out.responses_mut();
        for (j, &(r, l)) in pool[k..].iter().enumerate() {
            raters[range.start + j] = r;
            labels[range.start + j] = l;
        }
    }
    (a_out, b_out)
}

/// One replicate under the null hypothesis.
pub fn run_null_trial(
    d: &AnnotationDataset,
    cfg: &SimulationConfig,
    replicate: usize,
) -> Result<TrialScores> {
    check_config(d, cfg)?;
    null_trial(d, cfg, replicate)
}

fn null_trial(d: &AnnotationDataset, cfg: &SimulationConfig, replicate: usize) -> Result<TrialScores> {
    let (g, a, b) = draw_models(d, cfg, HYP_NULL, replicate)?;
    let mix = SeedSpec::with_path(cfg.seed, &[HYP_NULL, replicate as u64, ROLE_NULL_MIX]);
    let (a_star, b_star) = mix_responses(&a, &b, &mix);
    score_trial(cfg, replicate, &g, &a_star, &b_star)
}

/// Pairwise exceedance: share of (null, alt) pairs with `null >= alt`.
pub fn estimate_p_value(gamma_alt: &[f64], gamma_null: &[f64]) -> Result<f64, SimError> {
    if gamma_alt.is_empty() || gamma_null.is_empty() {
        return Err(SimError::EmptyDistribution);
    }
    let mut null = gamma_null.to_vec();
    null.sort_by(f64::total_cmp);
    let exceed: usize = gamma_alt
        .iter()
        .map(|&x| null.len() - null.partition_point(|&y| y.total_cmp(&x).is_lt()))
        .sum();
    Ok(exceed as f64 / (null.len() as f64 * gamma_alt.len() as f64))
}

/// Paired exceedance: share of indices with `null[i] >= alt[i]`.
pub fn estimate_p_value_paired(gamma_alt: &[f64], gamma_null: &[f64]) -> Result<f64, SimError> {
    if gamma_alt.is_empty() || gamma_null.is_empty() {
        return Err(SimError::EmptyDistribution);
    }
    if gamma_alt.len() != gamma_null.len() {
        return Err(SimError::LengthMismatch(gamma_alt.len(), gamma_null.len()));
    }
    let n = gamma_alt
        .iter()
        .zip(gamma_null)
        .filter(|(a, n)| n.total_cmp(a).is_ge())
        .count();
    Ok(n as f64 / gamma_alt.len() as f64)
}

/// Δ = |mean Γ_alt|.
pub fn effect_size(gamma_alt: &[f64]) -> Result<f64, SimError> {
    if gamma_alt.is_empty() {
        return Err(SimError::EmptyDistribution);
    }
    Ok((gamma_alt.iter().sum::<f64>() / gamma_alt.len() as f64).abs())
}

pub fn run_simulation(d: &AnnotationDataset, cfg: &SimulationConfig) -> Result<PValueReport> {
    run_simulation_with(d, cfg, Execution::default())
}

/// Runs `num_samples` alternative and null trials and assembles the report.
pub fn run_simulation_with(
    d: &AnnotationDataset,
    cfg: &SimulationConfig,
    exec: Execution,
) -> Result<PValueReport> {
    check_config(d, cfg)?;
    let m = cfg.num_samples;
    let alt = exec.try_map_range(m, |r| alt_trial(d, cfg, r))?;
    let null = exec.try_map_range(m, |r| null_trial(d, cfg, r))?;

    let mut per_metric = BTreeMap::new();
    for (j, &metric) in cfg.metrics.iter().enumerate() {
        let gamma_alt: Vec<f64> = alt.iter().map(|t| t.gammas[j]).collect();
        let gamma_null: Vec<f64> = null.iter().map(|t| t.gammas[j]).collect();
        let p_value = match cfg.p_value_method {
            PValueMethod::Pairwise => estimate_p_value(&gamma_alt, &gamma_null)?,
            PValueMethod::Paired => estimate_p_value_paired(&gamma_alt, &gamma_null)?,
        };
        let delta = effect_size(&gamma_alt)?;
        per_metric.insert(
            metric,
            MetricReport {
                p_value,
                delta,
                gamma_alt,
                gamma_null,
            },
        );
    }
    Ok(PValueReport {
        config: cfg.clone(),
        per_metric,
    })
}

//! Budget x K x ε grids.
//!
//! A cell is one `(sampler, budget, K, ε)` combination with `N = floor(budget / K)`.
//! Each cell runs a full simulation whose master seed is a stable hash of the
//! grid seed and the cell's coordinates, so adding or removing grid values
//! never changes other cells' numbers. Cells run on a bounded rayon pool;
//! finished cells are appended to an optional checkpoint file so an
//! interrupted sweep can resume.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::OpenOptions;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::AnnotationDataset;
use crate::exec::{self, Execution};
use crate::metrics::MetricId;
use crate::resample::SamplerKind;
use crate::rng::hash_words;
use crate::sim::{run_simulation_with, PValueMethod, SimulationConfig};
use crate::Result;

pub const DEFAULT_BUDGETS: [usize; 9] = [100, 250, 500, 1000, 2500, 5000, 10000, 25000, 50000];
pub const DEFAULT_EPSILONS: [f64; 4] = [0.1, 0.2, 0.3, 0.4];
pub const DEFAULT_REPLICATES: usize = 1000;

/// K = 1..=10, then 20, 40, ..., 100.
pub fn default_k_schedule() -> Vec<usize> {
    (1..=10).chain((20..=100).step_by(20)).collect()
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid has no feasible cells")]
    NoFeasibleCells,
    #[error("sweep interrupted after {completed} of {total} cells")]
    Interrupted { completed: usize, total: usize },
    #[error("malformed sweep csv at line {line}: {reason}")]
    MalformedCsv { line: u64, reason: String },
    #[error("resume data does not match this grid: {0}")]
    ResumeMismatch(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub budgets: Vec<usize>,
    pub k_schedule: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub samplers: Vec<SamplerKind>,
    pub metrics: Vec<MetricId>,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub p_value_method: PValueMethod,
}

/// Optional replacements for the default grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridOverrides {
    pub budgets: Option<Vec<usize>>,
    pub k_schedule: Option<Vec<usize>>,
    pub epsilons: Option<Vec<f64>>,
    pub samplers: Option<Vec<SamplerKind>>,
    pub metrics: Option<Vec<MetricId>>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub p_value_method: Option<PValueMethod>,
}

pub fn build_grid(o: &GridOverrides) -> Result<SweepGrid, SweepError> {
    let bad = |m: &str| Err(SweepError::InvalidGrid(m.into()));
    let mut budgets = o.budgets.clone().unwrap_or_else(|| DEFAULT_BUDGETS.to_vec());
    let mut ks = o.k_schedule.clone().unwrap_or_else(default_k_schedule);
    let mut eps = o.epsilons.clone().unwrap_or_else(|| DEFAULT_EPSILONS.to_vec());
    let mut samplers = o.samplers.clone().unwrap_or_else(|| vec![SamplerKind::S2]);
    let mut metrics = o.metrics.clone().unwrap_or_else(|| MetricId::ALL.to_vec());
    if budgets.is_empty() || budgets.contains(&0) {
        return bad("budgets must be non-empty and positive");
    }
    if ks.is_empty() || ks.contains(&0) {
        return bad("K values must be non-empty and positive");
    }
    if eps.is_empty() || eps.iter().any(|e| !(0.0..1.0).contains(e)) {
        return bad("epsilons must be non-empty and lie in [0, 1)");
    }
    if samplers.is_empty() || metrics.is_empty() {
        return bad("samplers and metrics must be non-empty");
    }
    let replicates = o.replicates.unwrap_or(DEFAULT_REPLICATES);
    if replicates == 0 {
        return bad("replicates must be at least 1");
    }
    budgets.sort_unstable();
    budgets.dedup();
    ks.sort_unstable();
    ks.dedup();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    samplers.sort();
    samplers.dedup();
    metrics.sort();
    metrics.dedup();
    Ok(SweepGrid {
        budgets,
        k_schedule: ks,
        epsilons: eps,
        samplers,
        metrics,
        replicates,
        seed: o.seed.unwrap_or(0),
        p_value_method: o.p_value_method.unwrap_or_default(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub sampler: SamplerKind,
    pub budget: usize,
    pub k: usize,
    pub n: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub sampler: SamplerKind,
    pub budget: usize,
    pub k: usize,
    pub epsilon: f64,
    pub reason: String,
}

type CellKey = (SamplerKind, usize, usize, u64);

fn key(sampler: SamplerKind, budget: usize, k: usize, epsilon: f64) -> CellKey {
    (sampler, budget, k, epsilon.to_bits())
}

/// Master seed of one cell's simulation.
pub fn cell_seed(grid_seed: u64, sampler: SamplerKind, budget: usize, k: usize, epsilon: f64) -> u64 {
    hash_words(&[grid_seed, sampler.code(), budget as u64, k as u64, epsilon.to_bits()])
}

impl SweepGrid {
    /// Feasible cells in sweep order (sampler, ε, budget, K) and the
    /// infeasible ones with a reason.
    pub fn cells(&self) -> (Vec<Cell>, Vec<SkippedCell>) {
        let mut cells = Vec::new();
        let mut skipped = Vec::new();
        for &sampler in &self.samplers {
            for &epsilon in &self.epsilons {
                for &budget in &self.budgets {
                    for &k in &self.k_schedule {
                        let n = budget / k;
                        if n == 0 {
                            skipped.push(SkippedCell {
                                sampler,
                                budget,
                                k,
                                epsilon,
                                reason: format!("N = floor({budget}/{k}) = 0"),
                            });
                        } else {
                            cells.push(Cell {
                                index: cells.len(),
                                sampler,
                                budget,
                                k,
                                n,
                                epsilon,
                            });
                        }
                    }
                }
            }
        }
        (cells, skipped)
    }

    /// Simulation config for one cell.
    pub fn cell_config(&self, cell: &Cell) -> SimulationConfig {
        SimulationConfig {
            sampler: cell.sampler,
            n_prime: cell.n,
            k_prime: cell.k,
            epsilon: cell.epsilon,
            num_samples: self.replicates,
            metrics: self.metrics.clone(),
            seed: cell_seed(self.seed, cell.sampler, cell.budget, cell.k, cell.epsilon),
            p_value_method: self.p_value_method,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sampler: SamplerKind,
    pub budget: usize,
    pub n: usize,
    pub k: usize,
    pub epsilon: f64,
    pub metric: MetricId,
    pub p_value: f64,
    pub delta: f64,
    pub replicates: usize,
    /// Seconds spent on the whole cell.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub skipped: Vec<SkippedCell>,
}

pub const CSV_HEADER: [&str; 10] = [
    "sampler",
    "budget",
    "n",
    "k",
    "epsilon",
    "metric",
    "p_value",
    "delta",
    "replicates",
    "wall_time",
];

/// 17 significant digits, enough to round-trip any f64.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn row_record(r: &SweepRow) -> [String; 10] {
    [
        r.sampler.to_string(),
        r.budget.to_string(),
        r.n.to_string(),
        r.k.to_string(),
        format_float(r.epsilon),
        r.metric.to_string(),
        format_float(r.p_value),
        format_float(r.delta),
        r.replicates.to_string(),
        format_float(r.wall_time),
    ]
}

fn write_rows<W: Write>(w: &mut csv::Writer<W>, rows: &[SweepRow]) -> Result<(), SweepError> {
    for r in rows {
        w.write_record(row_record(r))?;
    }
    Ok(())
}

fn parse_row(rec: &csv::StringRecord) -> Result<SweepRow, SweepError> {
    let line = rec.position().map(|p| p.line()).unwrap_or(0);
    let err = |reason: String| SweepError::MalformedCsv { line, reason };
    if rec.len() != CSV_HEADER.len() {
        return Err(err(format!("expected {} fields, got {}", CSV_HEADER.len(), rec.len())));
    }
    fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, String> {
        s.parse().map_err(|_| format!("bad {what} {s:?}"))
    }
    (|| -> Result<SweepRow, String> {
        Ok(SweepRow {
            sampler: rec[0].parse()?,
            budget: num(&rec[1], "budget")?,
            n: num(&rec[2], "n")?,
            k: num(&rec[3], "k")?,
            epsilon: num(&rec[4], "epsilon")?,
            metric: rec[5].parse()?,
            p_value: num(&rec[6], "p_value")?,
            delta: num(&rec[7], "delta")?,
            replicates: num(&rec[8], "replicates")?,
            wall_time: num(&rec[9], "wall_time")?,
        })
    })()
    .map_err(err)
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SweepError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        write_rows(&mut w, &self.rows)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, SweepError> {
        let rows = read_rows(input, true)?;
        Ok(Self {
            rows,
            skipped: Vec::new(),
        })
    }

    /// Rows for one (sampler, ε, metric) selection.
    pub fn select(&self, sampler: SamplerKind, epsilon: f64, metric: MetricId) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.sampler == sampler && r.metric == metric && r.epsilon == epsilon)
            .collect()
    }
}

fn read_rows<R: Read>(input: R, header: bool) -> Result<Vec<SweepRow>, SweepError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .from_reader(input);
    if header {
        let h = reader.headers()?;
        if h.iter().ne(CSV_HEADER) {
            return Err(SweepError::MalformedCsv {
                line: 1,
                reason: "unexpected header".into(),
            });
        }
    }
    reader
        .records()
        .map(|rec| parse_row(&rec?))
        .collect()
}

/// Reads rows appended to a checkpoint file. A trailing partial line left by
/// a hard kill is ignored.
pub fn read_checkpoint(path: &std::path::Path) -> Result<Vec<SweepRow>, SweepError> {
    let mut text = std::fs::read_to_string(path)?;
    if !text.ends_with('\n') {
        let cut = text.rfind('\n').map(|i| i + 1).unwrap_or(0);
        text.truncate(cut);
    }
    read_rows(text.as_bytes(), false)
}

#[derive(Debug, Clone)]
pub struct CellProgress {
    pub cell: Cell,
    pub completed: usize,
    pub total: usize,
    pub wall_time: f64,
}

#[derive(Default)]
pub struct SweepOptions<'a> {
    /// Worker threads; 0 means 1.
    pub parallelism: usize,
    /// Finished cells are appended here (headerless CSV) and flushed.
    pub checkpoint: Option<PathBuf>,
    /// Rows of cells finished by an earlier run.
    pub resume_rows: Vec<SweepRow>,
    pub cancel: Option<&'a AtomicBool>,
    pub progress: Option<&'a (dyn Fn(&CellProgress) + Sync)>,
}

impl<'a> SweepOptions<'a> {
    pub fn with_parallelism(parallelism: usize) -> Self {
        Self {
            parallelism,
            ..Self::default()
        }
    }
}

pub fn run_sweep(d: &AnnotationDataset, grid: &SweepGrid, parallelism: usize) -> Result<SweepResult> {
    run_sweep_with(d, grid, &SweepOptions::with_parallelism(parallelism))
}

pub fn run_sweep_with(
    d: &AnnotationDataset,
    grid: &SweepGrid,
    opts: &SweepOptions<'_>,
) -> Result<SweepResult> {
    let (cells, skipped) = grid.cells();
    if cells.is_empty() {
        return Err(SweepError::NoFeasibleCells.into());
    }
    for s in &grid.samplers {
        s.check(d)?;
    }
    let index: HashMap<CellKey, usize> = cells
        .iter()
        .map(|c| (key(c.sampler, c.budget, c.k, c.epsilon), c.index))
        .collect();

    // Cells already finished by an earlier run.
    let mut done_rows: BTreeMap<usize, Vec<SweepRow>> = BTreeMap::new();
    for row in &opts.resume_rows {
        let idx = *index
            .get(&key(row.sampler, row.budget, row.k, row.epsilon))
            .ok_or_else(|| {
                SweepError::ResumeMismatch(format!(
                    "row {} budget={} k={} eps={} is not a cell of this grid",
                    row.sampler, row.budget, row.k, row.epsilon
                ))
            })?;
        if row.replicates != grid.replicates || row.n != cells[idx].n {
            return Err(SweepError::ResumeMismatch("replicates or N differ".into()).into());
        }
        done_rows.entry(idx).or_default().push(row.clone());
    }
    let metric_set: HashSet<MetricId> = grid.metrics.iter().copied().collect();
    done_rows.retain(|_, rows| {
        rows.sort_by_key(|r| r.metric);
        rows.dedup_by_key(|r| r.metric);
        rows.len() == metric_set.len() && rows.iter().all(|r| metric_set.contains(&r.metric))
    });

    let pending: Vec<Cell> = cells
        .iter()
        .filter(|c| !done_rows.contains_key(&c.index))
        .copied()
        .collect();
    let total = cells.len();
    let completed = AtomicUsize::new(done_rows.len());
    let checkpoint = match &opts.checkpoint {
        Some(p) => {
            let f = OpenOptions::new().create(true).append(true).open(p).map_err(SweepError::from)?;
            Some(Mutex::new(csv::Writer::from_writer(f)))
        }
        None => None,
    };

    let run_cell = |i: usize| -> Result<Option<(usize, Vec<SweepRow>)>> {
        let cell = &pending[i];
        if opts.cancel.is_some_and(|c| c.load(Ordering::SeqCst)) {
            return Ok(None);
        }
        let started = Instant::now();
        let cfg = grid.cell_config(cell);
        let report = run_simulation_with(d, &cfg, Execution::default())?;
        let wall_time = started.elapsed().as_secs_f64();
        let rows: Vec<SweepRow> = grid
            .metrics
            .iter()
            .map(|m| {
                let r = &report.per_metric[m];
                SweepRow {
                    sampler: cell.sampler,
                    budget: cell.budget,
                    n: cell.n,
                    k: cell.k,
                    epsilon: cell.epsilon,
                    metric: *m,
                    p_value: r.p_value,
                    delta: r.delta,
                    replicates: grid.replicates,
                    wall_time,
                }
            })
            .collect();
        if let Some(w) = &checkpoint {
            let mut w = w.lock().expect("checkpoint lock");
            write_rows(&mut w, &rows)?;
            w.flush().map_err(SweepError::from)?;
        }
        let n_done = completed.fetch_add(1, Ordering::SeqCst) + 1;
        if let Some(cb) = opts.progress {
            cb(&CellProgress {
                cell: *cell,
                completed: n_done,
                total,
                wall_time,
            });
        }
        Ok(Some((cell.index, rows)))
    };

    let results = exec::with_threads(opts.parallelism.max(1), || {
        Execution::default().try_map_range(pending.len(), run_cell)
    })?;
    for (idx, rows) in results.into_iter().flatten() {
        done_rows.insert(idx, rows);
    }
    if done_rows.len() < total {
        return Err(SweepError::Interrupted {
            completed: done_rows.len(),
            total,
        }
        .into());
    }
    let rows = done_rows.into_values().flatten().collect();
    Ok(SweepResult { rows, skipped })
}

/// Smallest significant budget for one (sampler, ε, metric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinBudgetHit {
    pub budget: usize,
    pub k: usize,
    pub n: usize,
    pub p_value: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinBudgetRow {
    pub sampler: SamplerKind,
    pub epsilon: f64,
    pub metric: MetricId,
    /// `None` when no budget reaches significance.
    pub hit: Option<MinBudgetHit>,
}

/// For every (sampler, ε, metric): the lowest budget with some cell at
/// `p < alpha`, reporting the K with the smallest p there (ties to smaller K).
pub fn min_budget_table(r: &SweepResult, alpha: f64) -> Vec<MinBudgetRow> {
    let mut groups: BTreeMap<(SamplerKind, u64, MetricId), Vec<&SweepRow>> = BTreeMap::new();
    for row in &r.rows {
        // Non-negative floats order like their bit patterns.
        groups
            .entry((row.sampler, row.epsilon.to_bits(), row.metric))
            .or_default()
            .push(row);
    }
    groups
        .into_iter()
        .map(|((sampler, eps_bits, metric), mut rows)| {
            rows.sort_by(|a, b| {
                a.budget
                    .cmp(&b.budget)
                    .then(a.p_value.total_cmp(&b.p_value))
                    .then(a.k.cmp(&b.k))
            });
            let hit = rows
                .iter()
                .find(|row| row.p_value < alpha)
                .map(|first| {
                    // Sorted by p within a budget, so the first row of the
                    // budget is its argmin.
                    let best = rows.iter().find(|row| row.budget == first.budget).unwrap();
                    MinBudgetHit {
                        budget: best.budget,
                        k: best.k,
                        n: best.n,
                        p_value: best.p_value,
                        delta: best.delta,
                    }
                });
            MinBudgetRow {
                sampler,
                epsilon: f64::from_bits(eps_bits),
                metric,
                hit,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ItemWeights, LabelDomain, LabelModel, SynthStructure};
    use crate::sim::run_simulation;

    fn row(budget: usize, k: usize, metric: MetricId, p: f64) -> SweepRow {
        SweepRow {
            sampler: SamplerKind::S1,
            budget,
            n: budget / k,
            k,
            epsilon: 0.3,
            metric,
            p_value: p,
            delta: 0.1,
            replicates: 10,
            wall_time: 0.0,
        }
    }

    fn toy() -> AnnotationDataset {
        AnnotationDataset::synth_generate(
            30,
            8,
            LabelDomain::binary(),
            SynthStructure::Crossed,
            &LabelModel::new(ItemWeights::Dirichlet { concentration: 1.0 }, 0.5),
            5,
        )
        .unwrap()
    }

    #[test]
    fn default_grid_shape() {
        let g = build_grid(&GridOverrides::default()).unwrap();
        assert_eq!(g.budgets.len(), 9);
        assert_eq!(g.k_schedule, vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 20, 40, 60, 80, 100]);
        assert_eq!(g.epsilons, vec![0.1, 0.2, 0.3, 0.4]);
        let (cells, skipped) = g.cells();
        assert_eq!(cells.len() + skipped.len(), 9 * 15 * 4);
        assert!(skipped.is_empty());
        let c = cells.iter().find(|c| c.budget == 100 && c.k == 100).unwrap();
        assert_eq!(c.n, 1);
    }

    #[test]
    fn infeasible_cells_are_recorded() {
        let g = build_grid(&GridOverrides {
            budgets: Some(vec![100]),
            k_schedule: Some(vec![100, 200]),
            epsilons: Some(vec![0.3]),
            ..Default::default()
        })
        .unwrap();
        let (cells, skipped) = g.cells();
        assert_eq!(cells.len(), 1);
        assert_eq!(skipped.len(), 1);
        assert_eq!(skipped[0].k, 200);
    }

    #[test]
    fn invalid_overrides() {
        for o in [
            GridOverrides { budgets: Some(vec![]), ..Default::default() },
            GridOverrides { k_schedule: Some(vec![0]), ..Default::default() },
            GridOverrides { epsilons: Some(vec![1.0]), ..Default::default() },
            GridOverrides { replicates: Some(0), ..Default::default() },
        ] {
            assert!(matches!(build_grid(&o), Err(SweepError::InvalidGrid(_))));
        }
    }

    #[test]
    fn cell_seed_ignores_grid_layout() {
        let small = build_grid(&GridOverrides {
            budgets: Some(vec![100]),
            k_schedule: Some(vec![5]),
            epsilons: Some(vec![0.2]),
            seed: Some(9),
            ..Default::default()
        })
        .unwrap();
        let big = build_grid(&GridOverrides { seed: Some(9), ..Default::default() }).unwrap();
        let (sc, _) = small.cells();
        let (bc, _) = big.cells();
        let twin = bc.iter().find(|c| c.budget == 100 && c.k == 5 && c.epsilon == 0.2).unwrap();
        assert_eq!(small.cell_config(&sc[0]), big.cell_config(twin));
    }

    #[test]
    fn one_cell_sweep_equals_simulation() {
        let d = toy();
        let g = build_grid(&GridOverrides {
            budgets: Some(vec![60]),
            k_schedule: Some(vec![4]),
            epsilons: Some(vec![0.3]),
            samplers: Some(vec![SamplerKind::S1]),
            replicates: Some(40),
            seed: Some(3),
            ..Default::default()
        })
        .unwrap();
        let res = run_sweep(&d, &g, 1).unwrap();
        let (cells, _) = g.cells();
        let cfg = SimulationConfig::new(SamplerKind::S1, 15, 4, 0.3, cell_seed(3, SamplerKind::S1, 60, 4, 0.3))
            .with_samples(40);
        let direct = run_simulation(&d, &cfg).unwrap();
        assert_eq!(cfg, g.cell_config(&cells[0]));
        assert_eq!(res.rows.len(), 8);
        for row in &res.rows {
            let m = &direct.per_metric[&row.metric];
            assert_eq!((row.p_value, row.delta), (m.p_value, m.delta));
            assert_eq!((row.n, row.k, row.budget, row.replicates), (15, 4, 60, 40));
        }
    }

    #[test]
    fn csv_round_trip() {
        let r = SweepResult {
            rows: vec![
                row(100, 5, MetricId::Jsd, 0.1 + 0.2),
                SweepRow { wall_time: 1.0 / 3.0, delta: 1e-300, ..row(250, 10, MetricId::KlDiv, 0.0) },
            ],
            skipped: vec![],
        };
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(SweepResult::read_csv(buf.as_slice()).unwrap(), r);
        let empty = SweepResult::default();
        let mut buf = Vec::new();
        empty.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }

    #[test]
    fn min_budget_rules() {
        use MetricId::*;
        let r = SweepResult {
            rows: vec![
                row(500, 5, Accuracy, 0.2),
                row(500, 10, Accuracy, 0.07),
                row(1000, 5, Accuracy, 0.03),
                row(1000, 10, Accuracy, 0.01),
                row(1000, 20, Accuracy, 0.01),
                row(500, 5, Precision, 0.5),
                row(1000, 5, Precision, 0.06),
                row(100, 1, Mae, 0.01),
            ],
            skipped: vec![],
        };
        let t = min_budget_table(&r, 0.05);
        assert_eq!(t.len(), 3);
        let acc = t.iter().find(|x| x.metric == Accuracy).unwrap().hit.clone().unwrap();
        assert_eq!((acc.budget, acc.k, acc.p_value), (1000, 10, 0.01));
        assert!(t.iter().find(|x| x.metric == Precision).unwrap().hit.is_none());
        let mae = t.iter().find(|x| x.metric == Mae).unwrap().hit.clone().unwrap();
        assert_eq!((mae.budget, mae.k), (100, 1));
    }

    #[test]
    fn resume_after_cancel_matches_full_run() {
        let d = toy();
        let g = build_grid(&GridOverrides {
            budgets: Some(vec![40, 80]),
            k_schedule: Some(vec![2, 4]),
            epsilons: Some(vec![0.1, 0.3]),
            samplers: Some(vec![SamplerKind::S1, SamplerKind::S2]),
            metrics: Some(vec![MetricId::Accuracy, MetricId::Jsd]),
            replicates: Some(20),
            seed: Some(77),
            ..Default::default()
        })
        .unwrap();
        let full = run_sweep(&d, &g, 2).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("partial.csv");
        let cancel = AtomicBool::new(false);
        let stop = |p: &CellProgress| {
            if p.completed >= 5 {
                cancel.store(true, Ordering::SeqCst);
            }
        };
        let opts = SweepOptions {
            parallelism: 1,
            checkpoint: Some(ckpt.clone()),
            cancel: Some(&cancel),
            progress: Some(&stop),
            ..Default::default()
        };
        let err = run_sweep_with(&d, &g, &opts).unwrap_err();
        assert!(matches!(err, crate::Error::Sweep(SweepError::Interrupted { completed: 5, total: 16 })));

        let partial = read_checkpoint(&ckpt).unwrap();
        assert_eq!(partial.len(), 10);
        let opts = SweepOptions {
            parallelism: 2,
            checkpoint: Some(ckpt.clone()),
            resume_rows: partial,
            ..Default::default()
        };
        let resumed = run_sweep_with(&d, &g, &opts).unwrap();
        let strip = |r: &SweepResult| {
            r.rows.iter().map(|x| SweepRow { wall_time: 0.0, ..x.clone() }).collect::<Vec<_>>()
        };
        assert_eq!(strip(&resumed), strip(&full));
        assert_eq!(read_checkpoint(&ckpt).unwrap().len(), full.rows.len());
    }

    #[test]
    fn torn_checkpoint_line_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let mut buf = Vec::new();
        {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
            write_rows(&mut w, &[row(100, 5, MetricId::Mae, 0.2)]).unwrap();
        }
        buf.extend_from_slice(b"s1,100,20,5,3.0e-1,ma");
        std::fs::write(&p, &buf).unwrap();
        assert_eq!(read_checkpoint(&p).unwrap().len(), 1);
    }
}

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use raterboot::dataset::{
    DatasetError, IngestSchema, ItemWeights, LabelDictionary, LabelModel, SynthStructure,
};
use raterboot::exec;
use raterboot::manifest::{grid_cell_seeds, manifest_path_for, RunManifest, RunStatus};
use raterboot::report::{emit_plot, write_tables, Selection, SWEEP_CSV};
use raterboot::sim::run_simulation_with;
use raterboot::sweep::{
    build_grid, read_checkpoint, run_sweep_with, CellProgress, GridOverrides, SweepError,
    SweepOptions,
};
use raterboot::{AnnotationDataset, Execution, LabelDomain, SimulationConfig, SweepGrid, SweepResult};
use serde_json::json;

use crate::args::{
    Command, IngestArgs, ReportArgs, SimulateArgs, SweepArgs, SynthArgs, VERSION,
};
use crate::CliError;

pub const SWEEP_MANIFEST: &str = "manifest.json";
pub const SWEEP_PARTIAL: &str = "sweep.partial.csv";

static CANCEL: AtomicBool = AtomicBool::new(false);

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::Synth(a) => synth(a),
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Report(a) => report(a),
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn new_manifest(command: &str, config: serde_json::Value) -> RunManifest {
    let (version, build) = VERSION.split_once(' ').unwrap_or((VERSION, ""));
    RunManifest::new(
        command,
        version,
        build.trim_matches(|c| c == '(' || c == ')'),
        config,
    )
}

fn save_manifest(m: &RunManifest, path: &Path) -> Result<()> {
    m.save(path).map_err(|e| CliError::io(path.display(), e))
}

fn finish_sidecar(mut m: RunManifest, out: &Path) -> Result<()> {
    m.outputs = vec![path_str(out)];
    m.finish(RunStatus::Complete);
    save_manifest(&m, &manifest_path_for(out))
}

fn load_dataset(path: &Path) -> Result<AnnotationDataset> {
    AnnotationDataset::load(path).map_err(|e| match e {
        DatasetError::Io(source) => CliError::io(path.display(), source),
        other => other.into(),
    })
}

fn threads(p: Option<usize>) -> usize {
    p.filter(|&n| n > 0).unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    })
}

fn ingest(a: IngestArgs) -> Result<()> {
    let mut schema = IngestSchema::new(&a.item_col, &a.rater_col, &a.label_col);
    if let Some(p) = &a.label_dict {
        let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p.display(), e))?;
        let dict: LabelDictionary = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("label dictionary {}: {e}", p.display())))?;
        schema = schema.with_label_dict(dict);
    }
    let f = File::open(&a.input).map_err(|e| CliError::io(a.input.display(), e))?;
    let mut d = AnnotationDataset::ingest_csv(BufReader::new(f), &schema)?;
    if let Some(b) = a.batch_size {
        d = d.infer_batches(b)?;
    }
    d.save(&a.out)?;
    let mut m = new_manifest(
        "ingest",
        json!({
            "input": path_str(&a.input),
            "item_col": a.item_col,
            "rater_col": a.rater_col,
            "label_col": a.label_col,
            "label_dict": a.label_dict.as_deref().map(path_str),
            "batch_size": a.batch_size,
            "out": path_str(&a.out),
        }),
    );
    m.dataset_hash = Some(d.content_hash());
    finish_sidecar(m, &a.out)?;
    print_summary(&d);
    Ok(())
}

fn print_summary(d: &AnnotationDataset) {
    let s = d.summary();
    println!(
        "{} items, {} raters, {} ratings, {} classes{}{}",
        s.n_items,
        s.n_raters,
        s.n_ratings,
        d.domain().cardinality(),
        if s.fully_crossed { ", fully crossed" } else { "" },
        s.batch_size.map(|b| format!(", batches of {b}")).unwrap_or_default()
    );
}

fn synth(a: SynthArgs) -> Result<()> {
    let structure = match (a.batched, a.sparse) {
        (Some(batch_size), _) => SynthStructure::Batched { batch_size },
        (_, Some(p)) => SynthStructure::Sparse { p },
        _ => SynthStructure::Crossed,
    };
    let domain = LabelDomain::range(a.classes)?;
    let model = LabelModel::new(
        ItemWeights::Dirichlet {
            concentration: a.concentration,
        },
        a.rater_bias,
    );
    let d = AnnotationDataset::synth_generate(a.items, a.raters, domain, structure, &model, a.seed)?;
    let as_csv = a
        .out
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if as_csv {
        let f = File::create(&a.out).map_err(|e| CliError::io(a.out.display(), e))?;
        d.write_csv(BufWriter::new(f))?;
    } else {
        d.save(&a.out)?;
    }
    let mut m = new_manifest(
        "synth",
        json!({
            "items": a.items,
            "raters": a.raters,
            "classes": a.classes,
            "structure": match structure {
                SynthStructure::Crossed => json!("crossed"),
                SynthStructure::Batched { batch_size } => json!({ "batched": batch_size }),
                SynthStructure::Sparse { p } => json!({ "sparse": p }),
            },
            "concentration": a.concentration,
            "rater_bias": a.rater_bias,
            "seed": a.seed,
            "out": path_str(&a.out),
        }),
    );
    m.master_seed = Some(a.seed);
    m.dataset_hash = Some(d.content_hash());
    finish_sidecar(m, &a.out)?;
    print_summary(&d);
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let d = load_dataset(&a.dataset)?;
    let cfg = SimulationConfig {
        sampler: a.sampler,
        n_prime: a.n,
        k_prime: a.k,
        epsilon: a.epsilon,
        num_samples: a.replicates,
        metrics: a.metrics.0.clone(),
        seed: a.seed,
        p_value_method: a.p_value.into(),
    };
    let report = exec::with_threads(threads(a.parallelism), || {
        run_simulation_with(&d, &cfg, Execution::default())
    })?;
    std::fs::write(&a.out, report.to_json() + "\n").map_err(|e| CliError::io(a.out.display(), e))?;
    let mut m = new_manifest(
        "simulate",
        json!({
            "dataset": path_str(&a.dataset),
            "simulation": cfg,
            "out": path_str(&a.out),
        }),
    );
    m.master_seed = Some(a.seed);
    m.dataset_hash = Some(d.content_hash());
    finish_sidecar(m, &a.out)?;
    for (metric, r) in &report.per_metric {
        println!("{metric:<10} p={:.4} delta={:.4}", r.p_value, r.delta);
    }
    Ok(())
}

/// Grid, dataset path and alpha recorded in a sweep manifest.
struct SweepPlan {
    grid: SweepGrid,
    dataset: PathBuf,
    alpha: f64,
}

fn plan_from_manifest(path: &Path) -> Result<(SweepPlan, RunManifest)> {
    let m = RunManifest::load(path).map_err(|e| CliError::io(path.display(), e))?;
    let bad = |what: &str| CliError::Input(format!("manifest {} has no valid {what}", path.display()));
    if m.command != "sweep" {
        return Err(CliError::Input(format!("{} is not a sweep manifest", path.display())));
    }
    let grid: SweepGrid = serde_json::from_value(m.config["grid"].clone()).map_err(|_| bad("grid"))?;
    let dataset = m.config["dataset"].as_str().ok_or_else(|| bad("dataset"))?.into();
    let alpha = m.config["alpha"].as_f64().ok_or_else(|| bad("alpha"))?;
    Ok((SweepPlan { grid, dataset, alpha }, m))
}

fn sweep(a: SweepArgs) -> Result<()> {
    let (plan, out_dir, resume_from) = if let Some(mpath) = &a.resume {
        let (mut plan, old) = plan_from_manifest(mpath)?;
        if let Some(d) = &a.dataset {
            plan.dataset = d.clone();
        }
        let dir = mpath.parent().map(Path::to_path_buf).unwrap_or_default();
        (plan, dir, Some(old))
    } else if let Some(mpath) = &a.from_manifest {
        let (mut plan, _) = plan_from_manifest(mpath)?;
        if let Some(d) = &a.dataset {
            plan.dataset = d.clone();
        }
        plan.alpha = a.alpha;
        (plan, a.out_dir.clone().expect("clap requires --out-dir"), None)
    } else {
        let grid = build_grid(&GridOverrides {
            budgets: (!a.budgets.is_empty()).then(|| a.budgets.clone()),
            k_schedule: (!a.ks.is_empty()).then(|| a.ks.clone()),
            epsilons: (!a.epsilons.is_empty()).then(|| a.epsilons.clone()),
            samplers: (!a.sampler.is_empty()).then(|| a.sampler.clone()),
            metrics: a.metrics.as_ref().map(|m| m.0.clone()),
            replicates: a.replicates,
            seed: a.seed,
            p_value_method: a.p_value.map(Into::into),
        })?;
        let plan = SweepPlan {
            grid,
            dataset: a.dataset.clone().expect("clap requires --dataset"),
            alpha: a.alpha,
        };
        (plan, a.out_dir.clone().expect("clap requires --out-dir"), None)
    };

    let d = load_dataset(&plan.dataset)?;
    let hash = d.content_hash();
    if let Some(old) = &resume_from {
        if old.dataset_hash.as_deref() != Some(hash.as_str()) {
            return Err(SweepError::ResumeMismatch("dataset content hash differs from the manifest".into()).into());
        }
    }
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io(out_dir.display(), e))?;
    let manifest_path = out_dir.join(SWEEP_MANIFEST);
    let partial = out_dir.join(SWEEP_PARTIAL);
    let resume_rows = if resume_from.is_some() && partial.exists() {
        read_checkpoint(&partial)?
    } else {
        if partial.exists() {
            std::fs::remove_file(&partial).map_err(|e| CliError::io(partial.display(), e))?;
        }
        Vec::new()
    };

    let mut m = new_manifest(
        "sweep",
        json!({
            "dataset": path_str(&plan.dataset),
            "grid": plan.grid,
            "alpha": plan.alpha,
            "parallelism": threads(a.parallelism),
        }),
    );
    if let Some(old) = &resume_from {
        m.started_at = old.started_at;
    }
    m.dataset_hash = Some(hash);
    m.master_seed = Some(plan.grid.seed);
    m.cell_seeds = grid_cell_seeds(&plan.grid);
    m.outputs = vec![path_str(&partial)];
    save_manifest(&m, &manifest_path)?;

    let _ = ctrlc::set_handler(|| CANCEL.store(true, Ordering::SeqCst));
    let quiet = a.quiet;
    let progress = move |p: &CellProgress| {
        if !quiet {
            eprintln!(
                "[{}/{}] {} budget={} k={} epsilon={} ({:.2}s)",
                p.completed, p.total, p.cell.sampler, p.cell.budget, p.cell.k, p.cell.epsilon, p.wall_time
            );
        }
    };
    let opts = SweepOptions {
        parallelism: threads(a.parallelism),
        checkpoint: Some(partial.clone()),
        resume_rows,
        cancel: Some(&CANCEL),
        progress: Some(&progress),
    };
    let result = match run_sweep_with(&d, &plan.grid, &opts) {
        Ok(r) => r,
        Err(e) => {
            let status = match &e {
                raterboot::Error::Sweep(SweepError::Interrupted { .. }) => RunStatus::Interrupted,
                _ => RunStatus::Failed,
            };
            m.finish(status);
            save_manifest(&m, &manifest_path)?;
            return Err(e.into());
        }
    };
    let paths = write_tables(&result, &out_dir, plan.alpha)?;
    std::fs::remove_file(&partial).map_err(|e| CliError::io(partial.display(), e))?;
    m.outputs = vec![path_str(&paths.sweep_csv), path_str(&paths.min_budget_md)];
    m.finish(RunStatus::Complete);
    save_manifest(&m, &manifest_path)?;
    for s in &result.skipped {
        eprintln!(
            "skipped {} budget={} k={} epsilon={}: {}",
            s.sampler, s.budget, s.k, s.epsilon, s.reason
        );
    }
    println!(
        "{} rows written to {}",
        result.rows.len(),
        paths.sweep_csv.display()
    );
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let sel: Selection = a.select.parse()?;
    let csv_path = a.input.join(SWEEP_CSV);
    let f = File::open(&csv_path).map_err(|e| CliError::io(csv_path.display(), e))?;
    let r = SweepResult::read_csv(BufReader::new(f))?;
    emit_plot(&r, &sel, a.kind, &a.out)?;
    let m = new_manifest(
        "report",
        json!({
            "in": path_str(&a.input),
            "select": sel.to_string(),
            "kind": format!("{:?}", a.kind).to_lowercase(),
            "out": path_str(&a.out),
        }),
    );
    finish_sidecar(m, &a.out)
}

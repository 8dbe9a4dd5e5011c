use std::path::Path;
use std::process::{Command, Output};

fn raterboot(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raterboot"))
        .args(args)
        .current_dir(dir)
        .env_remove("RATERBOOT_PARALLELISM")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = raterboot(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn strip_wall_time(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').unwrap().0)
        .collect::<Vec<_>>()
        .join("\n")
}

fn synth(dir: &Path) {
    ok(dir, &["synth", "--items", "60", "--raters", "12", "--classes", "3", "--crossed", "--rater-bias", "0.5", "--seed", "1", "--out", "d.rbds"]);
}

const SWEEP: &[&str] = &[
    "sweep", "--dataset", "d.rbds", "--sampler", "s1,s2", "--budgets", "60,120", "--ks", "3,6,200",
    "--epsilons", "0.2,0.4", "--metrics", "accuracy,jsd,wins", "--replicates", "30", "--seed", "5", "--quiet",
];

#[test]
fn synth_then_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(d, &["synth", "--items", "100", "--raters", "20", "--crossed", "--seed", "1", "--out", "d.rbds"]);
    assert!(out.contains("100 items, 20 raters"));
    ok(d, &["simulate", "--dataset", "d.rbds", "--sampler", "s2", "--n", "50", "--k", "5", "--epsilon", "0.3", "--replicates", "40", "--seed", "2", "--metrics", "mae,jsd", "--out", "r.json"]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["n_prime"], 50);
    let per = report["per_metric"].as_object().unwrap();
    assert_eq!(per.len(), 2);
    assert_eq!(per["mae"]["gamma_alt"].as_array().unwrap().len(), 40);
    let p = per["jsd"]["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    for f in ["d.rbds.manifest.json", "r.json.manifest.json"] {
        let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join(f)).unwrap()).unwrap();
        assert_eq!(m["status"], "complete");
        assert!(m["dataset_hash"].as_str().unwrap().len() == 64);
    }
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let args = |out: &'static str| {
        vec!["simulate", "--dataset", "d.rbds", "--sampler", "s1", "--n", "20", "--k", "4", "--epsilon", "0.2", "--replicates", "25", "--seed", "8", "--out", out]
    };
    ok(d, &args("a.json"));
    ok(d, &args("b.json"));
    assert_eq!(std::fs::read(d.join("a.json")).unwrap(), std::fs::read(d.join("b.json")).unwrap());
}

#[test]
fn unknown_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = raterboot(dir.path(), &["sweep", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = raterboot(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn version_has_semver_and_build() {
    let out = ok(Path::new("."), &["--version"]);
    let v = out.trim().strip_prefix("raterboot ").unwrap();
    let (semver, build) = v.split_once(' ').unwrap();
    assert_eq!(semver, env!("CARGO_PKG_VERSION"));
    assert!(build.starts_with('(') && build.ends_with(')'));
}

#[test]
fn domain_errors_exit_one_with_module_name() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let out = raterboot(d, &["simulate", "--dataset", "d.rbds", "--sampler", "s3", "--n", "5", "--k", "2", "--epsilon", "0.1", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[resample::NoBatchMap]"));

    std::fs::write(d.join("bad.csv"), "item_id,rater_id,label\ni1,r1,0\ni1,r1,1\n").unwrap();
    let out = raterboot(d, &["ingest", "--input", "bad.csv", "--out", "bad.rbds"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[dataset::DuplicateRating]"));

    let out = raterboot(d, &["simulate", "--dataset", "missing.rbds", "--sampler", "s1", "--n", "5", "--k", "2", "--epsilon", "0.1", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[io]"));
}

#[test]
fn ingest_with_dictionary_and_batches() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut csv = String::from("item,who,answer\n");
    for i in 0..4 {
        for r in 0..2 {
            let rater = r + 2 * (i / 2);
            csv.push_str(&format!("q{i},w{rater},{}\n", if (i + r) % 2 == 0 { "yes" } else { "no" }));
        }
    }
    std::fs::write(d.join("in.csv"), csv).unwrap();
    std::fs::write(d.join("dict.json"), r#"{"no": 0, "yes": 1}"#).unwrap();
    let out = ok(d, &[
        "ingest", "--input", "in.csv", "--item-col", "item", "--rater-col", "who", "--label-col", "answer",
        "--label-dict", "dict.json", "--batch-size", "2", "--out", "t.rbds",
    ]);
    assert!(out.contains("4 items, 4 raters, 8 ratings"), "{out}");
    assert!(out.contains("batches of 2"), "{out}");
    ok(d, &["simulate", "--dataset", "t.rbds", "--sampler", "s3", "--n", "4", "--k", "2", "--epsilon", "0.3", "--replicates", "10", "--out", "r.json"]);
}

#[test]
fn sweep_report_and_rerun_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let mut args = SWEEP.to_vec();
    args.extend(["--out-dir", "run1"]);
    ok(d, &args);
    for f in ["sweep.csv", "min_budget.md", "manifest.json"] {
        assert!(d.join("run1").join(f).exists(), "{f}");
    }
    assert!(!d.join("run1/sweep.partial.csv").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("run1/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["master_seed"], 5);
    assert_eq!(manifest["cell_seeds"].as_array().unwrap().len(), 2 * 2 * 2 * 2);

    ok(d, &["sweep", "--from-manifest", "run1/manifest.json", "--out-dir", "run2", "--parallelism", "3", "--quiet"]);
    let a = std::fs::read_to_string(d.join("run1/sweep.csv")).unwrap();
    let b = std::fs::read_to_string(d.join("run2/sweep.csv")).unwrap();
    assert_eq!(strip_wall_time(&a), strip_wall_time(&b));
    assert_eq!(a.lines().count(), 1 + 16 * 3);

    ok(d, &["report", "--in", "run1", "--select", "sampler=s2,epsilon=0.4,metric=jsd", "--kind", "delta", "--out", "fig.svg"]);
    ok(d, &["report", "--in", "run2", "--select", "sampler=s2,epsilon=0.4,metric=jsd", "--kind", "delta", "--out", "fig2.svg"]);
    let svg = std::fs::read(d.join("fig.svg")).unwrap();
    assert_eq!(svg, std::fs::read(d.join("fig2.svg")).unwrap());
    assert!(d.join("fig.svg.manifest.json").exists());
}

#[test]
fn resume_completes_partial_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let mut args = SWEEP.to_vec();
    args.extend(["--out-dir", "full"]);
    ok(d, &args);
    let full = std::fs::read_to_string(d.join("full/sweep.csv")).unwrap();

    // Pretend the run died after the first five cells.
    std::fs::create_dir(d.join("cut")).unwrap();
    let partial: String = full.lines().skip(1).take(5 * 3).map(|l| format!("{l}\n")).collect();
    std::fs::write(d.join("cut/sweep.partial.csv"), partial).unwrap();
    let mut m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("full/manifest.json")).unwrap()).unwrap();
    m["status"] = "interrupted".into();
    std::fs::write(d.join("cut/manifest.json"), m.to_string()).unwrap();

    ok(d, &["sweep", "--resume", "cut/manifest.json", "--quiet"]);
    let resumed = std::fs::read_to_string(d.join("cut/sweep.csv")).unwrap();
    assert_eq!(strip_wall_time(&resumed), strip_wall_time(&full));
    // Rows carried over from the partial file keep their original timing.
    assert_eq!(resumed.lines().nth(1), full.lines().nth(1));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    std::fs::write(
        d.join("run.toml"),
        "dataset = \"d.rbds\"\nseed = 5\nquiet = true\n[sweep]\nsampler = [\"s1\", \"s2\"]\nbudgets = [60, 120]\nks = [3, 6, 200]\nepsilons = [0.2, 0.4]\nmetrics = \"accuracy,jsd,wins\"\nreplicates = 30\nout_dir = \"from_file\"\n",
    )
    .unwrap();
    ok(d, &["--config", "run.toml", "sweep"]);
    let mut args = SWEEP.to_vec();
    args.extend(["--out-dir", "from_flags"]);
    ok(d, &args);
    let a = std::fs::read_to_string(d.join("from_file/sweep.csv")).unwrap();
    let b = std::fs::read_to_string(d.join("from_flags/sweep.csv")).unwrap();
    assert_eq!(strip_wall_time(&a), strip_wall_time(&b));

    ok(d, &["sweep", "--config", "run.toml", "--seed", "6", "--out-dir", "override"]);
    let c = std::fs::read_to_string(d.join("override/sweep.csv")).unwrap();
    assert_ne!(strip_wall_time(&a), strip_wall_time(&c));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("override/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["master_seed"], 6);
}

#[test]
fn parallelism_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let mut args = SWEEP.to_vec();
    args.extend(["--out-dir", "env"]);
    let out = Command::new(env!("CARGO_BIN_EXE_raterboot"))
        .args(&args)
        .current_dir(d)
        .env("RATERBOOT_PARALLELISM", "4")
        .output()
        .unwrap();
    assert!(out.status.success());
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("env/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["parallelism"], 4);
}

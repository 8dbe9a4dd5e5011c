//! Config files.
//!
//! A config file is TOML. Top-level keys are flag names (`out_dir` and
//! `out-dir` both work) and apply to every subcommand that has that flag.
//! A table named after a subcommand, such as `[sweep]`, applies only to that
//! subcommand and must name real flags. Arrays become comma-separated lists,
//! `true` sets a switch, `false` leaves it unset. Values are spliced in
//! right after the subcommand name, so flags on the command line win.

use std::path::Path;

use clap::CommandFactory;

use crate::args::Cli;

/// Removes `--config FILE` from `argv` and splices the file's values in.
pub fn expand(argv: Vec<String>) -> Result<Vec<String>, String> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().ok_or("--config needs a file")?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let Some(sub_at) = rest.iter().skip(1).position(|a| !a.starts_with('-')).map(|i| i + 1) else {
        return Ok(rest);
    };
    let injected = config_args(Path::new(&path), &rest[sub_at])?;
    rest.splice(sub_at + 1..sub_at + 1, injected);
    Ok(rest)
}

fn config_args(path: &Path, sub: &str) -> Result<Vec<String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("config {}: {e}", path.display()))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| format!("config {}: {e}", path.display()))?;
    let cmd = Cli::command();
    let Some(sc) = cmd.find_subcommand(sub) else {
        return Ok(Vec::new());
    };
    let known: Vec<String> = sc
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect();
    let mut out = Vec::new();
    for (key, value) in &table {
        if value.is_table() {
            continue;
        }
        let flag = key.replace('_', "-");
        if known.contains(&flag) {
            push_flag(&mut out, &flag, value)?;
        }
    }
    if let Some(section) = table.get(sub) {
        let section = section
            .as_table()
            .ok_or_else(|| format!("config key {sub:?} must be a table"))?;
        for (key, value) in section {
            let flag = key.replace('_', "-");
            if !known.contains(&flag) {
                return Err(format!("config [{sub}] has unknown key {key:?}"));
            }
            push_flag(&mut out, &flag, value)?;
        }
    }
    Ok(out)
}

fn scalar(v: &toml::Value) -> Result<String, String> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        other => Err(format!("unsupported config value {other}")),
    }
}

fn push_flag(out: &mut Vec<String>, flag: &str, v: &toml::Value) -> Result<(), String> {
    match v {
        toml::Value::Boolean(true) => out.push(format!("--{flag}")),
        toml::Value::Boolean(false) => {}
        toml::Value::Array(items) => {
            let parts: Result<Vec<String>, String> = items.iter().map(scalar).collect();
            out.push(format!("--{flag}={}", parts?.join(",")));
        }
        other => out.push(format!("--{flag}={}", scalar(other)?)),
    }
    Ok(())
}

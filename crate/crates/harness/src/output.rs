//! Result artifacts: `summary.json`, `tables/*.csv` and `paths/*.csv`.
//!
//! Every file starts with the schema version, the config hash, the RNG
//! identifier and the full config, so a file found on its own still says how
//! it was made. Nothing time-dependent is written, which keeps reruns
//! byte-identical.

use std::fs;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};

use ldp_core::format::{fmt_f64, to_json};
use ldp_core::simulator::{Path, RNG_ALGORITHM};
use serde::Serialize;
use serde_json::Value;

use crate::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::error::{HarnessError, Result};

/// A CSV table held in memory until the run finishes.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "{}", self.columns.join(","))?;
        for r in &self.rows {
            writeln!(w, "{}", r.join(","))?;
        }
        Ok(())
    }
}

/// Cell helpers.
pub fn f(v: f64) -> String {
    fmt_f64(v)
}

pub fn u(v: usize) -> String {
    v.to_string()
}

pub fn b(v: bool) -> String {
    v.to_string()
}

/// What an experiment produced.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub pass: bool,
    /// Experiment-specific summary fields.
    pub result: Value,
    pub tables: Vec<Table>,
    pub paths: Vec<(String, Path)>,
}

impl Outcome {
    pub fn new(pass: bool, result: impl Serialize) -> Self {
        Self { pass, result: serde_json::to_value(result).expect("summary serializes"), tables: Vec::new(), paths: Vec::new() }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    schema: &'static str,
    config_sha256: String,
    rng_algorithm: &'static str,
    experiment: &'static str,
    pass: bool,
    config: &'a ExperimentConfig,
    result: &'a Value,
}

/// `#` lines opening every CSV file.
pub fn header_lines(cfg: &ExperimentConfig) -> Vec<String> {
    vec![
        format!("schema: {SCHEMA_VERSION}"),
        format!("config_sha256: {}", cfg.hash()),
        format!("rng: {RNG_ALGORITHM}"),
        format!("config: {}", cfg.canonical_json()),
    ]
}

/// Renders every artifact as `(relative path, contents)`.
pub fn render(cfg: &ExperimentConfig, outcome: &Outcome) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut clean = cfg.clone();
    clean.output = None;
    let summary = Summary {
        schema: SCHEMA_VERSION,
        config_sha256: cfg.hash(),
        rng_algorithm: RNG_ALGORITHM,
        experiment: cfg.experiment.kind(),
        pass: outcome.pass,
        config: &clean,
        result: &outcome.result,
    };
    let mut json = to_json(&summary).expect("summary serializes").into_bytes();
    json.push(b'\n');
    files.push((PathBuf::from("summary.json"), json));
    let header = header_lines(cfg);
    for t in &outcome.tables {
        let mut buf = Vec::new();
        for h in &header {
            writeln!(buf, "# {h}").expect("write to memory");
        }
        t.write(&mut buf).expect("write to memory");
        files.push((PathBuf::from("tables").join(format!("{}.csv", t.name)), buf));
    }
    for (name, p) in &outcome.paths {
        let mut buf = Vec::new();
        p.write_csv(&mut buf, &header).expect("write to memory");
        files.push((PathBuf::from("paths").join(format!("{name}.csv")), buf));
    }
    files
}

fn io_err(path: &FsPath) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

/// Writes all artifacts under `dir` once the run is complete. Each file goes
/// to a temporary name first and is renamed into place.
pub fn write_artifacts(dir: &FsPath, cfg: &ExperimentConfig, outcome: &Outcome) -> Result<Vec<PathBuf>> {
    let files = render(cfg, outcome);
    let mut written = Vec::with_capacity(files.len());
    for (rel, bytes) in files {
        let target = dir.join(&rel);
        let parent = target.parent().expect("artifact paths have a parent");
        fs::create_dir_all(parent).map_err(io_err(parent))?;
        let tmp = target.with_extension("partial");
        fs::write(&tmp, &bytes).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &target).map_err(io_err(&target))?;
        written.push(target);
    }
    Ok(written)
}

/// Lines of a CSV artifact after its `#` header.
pub fn csv_body(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
}

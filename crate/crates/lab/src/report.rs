//! In-memory results and their files: CSV tables, `x y` plot data, the
//! summary and the manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::config::{Scenario, Stage};

/// Header plus rows of already-formatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: impl Into<String>, header: &[&str]) -> Self {
        Self {
            file: file.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_header(file: impl Into<String>, header: Vec<String>) -> Self {
        Self {
            file: file.into(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "{}", self.file);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// Two-column plot data.
#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub file: String,
    pub x: String,
    pub y: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub stage: Stage,
    pub tables: Vec<Table>,
    pub plots: Vec<Plot>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl StageReport {
    pub fn new(stage: Stage) -> Self {
        Self {
            stage,
            tables: Vec::new(),
            plots: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn table(&self, file: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.file == file)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario: Scenario,
    pub stages: Vec<StageReport>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.stages.iter().all(|s| s.passed())
    }

    pub fn checks(&self) -> impl Iterator<Item = (&Stage, &Check)> {
        self.stages
            .iter()
            .flat_map(|s| s.checks.iter().map(move |c| (&s.stage, c)))
    }

    pub fn stage(&self, st: Stage) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == st)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario {} (seed {})", self.scenario.name, self.scenario.seed);
        for st in &self.stages {
            let _ = writeln!(s, "\n[{}]", st.stage);
            for n in &st.notes {
                let _ = writeln!(s, "  {n}");
            }
            for c in &st.checks {
                let mark = if c.passed { "PASS" } else { "FAIL" };
                let _ = writeln!(s, "  {mark} {}: {}", c.name, c.detail);
            }
        }
        let failed = self.checks().filter(|(_, c)| !c.passed).count();
        let total = self.checks().count();
        let _ = writeln!(s, "\n{} of {total} checks passed", total - failed);
        s
    }

    fn manifest(&self, files: &[String]) -> String {
        let mut run = toml::Table::new();
        run.insert("name".into(), self.scenario.name.clone().into());
        run.insert("seed".into(), toml::Value::Integer(self.scenario.seed as i64));
        run.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        run.insert(
            "stages".into(),
            toml::Value::Array(self.stages.iter().map(|s| s.stage.name().into()).collect()),
        );
        run.insert("passed".into(), self.passed().into());
        run.insert(
            "files".into(),
            toml::Value::Array(files.iter().map(|f| f.clone().into()).collect()),
        );
        let mut doc = toml::Table::new();
        doc.insert("run".into(), toml::Value::Table(run));
        doc.insert(
            "config".into(),
            toml::Value::Table(toml::Table::try_from(&self.scenario).expect("scenario serializes")),
        );
        toml::to_string(&doc).expect("manifest serializes")
    }

    /// Writes every table, plot, `summary.txt` and `manifest.toml` to `dir`.
    /// Returns the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut written = Vec::new();
        for st in &self.stages {
            for t in &st.tables {
                let p = dir.join(&t.file);
                write_csv(&p, t)?;
                written.push(p);
            }
            for pl in &st.plots {
                let p = dir.join(&pl.file);
                write_plot(&p, pl)?;
                written.push(p);
            }
        }
        let summary = dir.join("summary.txt");
        fs::write(&summary, self.summary()).with_context(|| format!("writing {}", summary.display()))?;
        written.push(summary);
        let names: Vec<String> = written
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect();
        let manifest = dir.join("manifest.toml");
        fs::write(&manifest, self.manifest(&names)).with_context(|| format!("writing {}", manifest.display()))?;
        written.push(manifest);
        Ok(written)
    }
}

pub fn write_csv(path: &Path, t: &Table) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    w.write_record(&t.header)
        .with_context(|| format!("writing {}", path.display()))?;
    for r in &t.rows {
        w.write_record(r)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_plot(path: &Path, p: &Plot) -> Result<()> {
    let mut s = format!("# {} {}\n", p.x, p.y);
    for (x, y) in &p.points {
        let _ = writeln!(s, "{} {}", num(*x), num(*y));
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

/// Shortest round-trip decimal; `inf`, `-inf` and `nan` spelled out.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x}")
    }
}

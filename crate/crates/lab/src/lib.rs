//! Scenario runner for `singular-flow-core`: TOML scenarios in, CSV tables,
//! plot data, a summary and a manifest out.

// NaN must fail validation, hence the negated comparisons
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod exec;
pub mod report;
pub mod run;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};

pub use config::{Scenario, Stage};
pub use report::RunReport;
pub use run::run_scenario;

/// Runs `stages` and writes every artifact to `dir`. Wall time goes to
/// `timing.txt`, kept apart so the other files are reproducible bit for bit.
pub fn run_to_dir(sc: &Scenario, stages: &[Stage], dir: &Path) -> Result<RunReport> {
    let start = Instant::now();
    let report = run_scenario(sc, stages)?;
    report.write(dir)?;
    let timing = dir.join("timing.txt");
    std::fs::write(&timing, format!("wall_seconds {:.3}\n", start.elapsed().as_secs_f64()))
        .with_context(|| format!("writing {}", timing.display()))?;
    Ok(report)
}

/// `--out`, then the scenario's `output`, then `out/<name>`.
pub fn output_dir(sc: &Scenario, out: Option<&Path>) -> PathBuf {
    match (out, &sc.output) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => p.clone(),
        (None, None) => Path::new("out").join(&sc.name),
    }
}

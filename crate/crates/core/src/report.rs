//! Report files: `manifest.json`, `history.csv`, `summary.txt`, plus
//! `trajectory.csv` for flows and one JSON container per snapshot.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pipeline::RunOutput;

pub const HISTORY_HEADER: &str = "# kahlerbench history v1";
pub const TRAJECTORY_HEADER: &str = "# kahlerbench trajectory v1";

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, text).map_err(|e| io_error(&path, e))?;
    written.push(path);
    Ok(())
}

pub fn history_csv(output: &RunOutput) -> String {
    let mut s = format!("{HISTORY_HEADER}\nstage,t,epsilon,iter,residual_sup,min_eig,step_size\n");
    for r in &output.history {
        let _ = writeln!(
            s,
            "{},{:e},{:e},{},{:e},{:e},{:e}",
            r.stage, r.t, r.epsilon, r.iter, r.residual_sup, r.min_eig, r.step_size
        );
    }
    s
}

pub fn trajectory_csv(output: &RunOutput) -> String {
    let mut s = format!("{TRAJECTORY_HEADER}\nt,sup_rm,max_ricci_eig,min_metric_eig,equivalence,rm_gradient\n");
    for m in &output.trajectory {
        let _ = writeln!(
            s,
            "{:e},{:e},{:e},{:e},{:e},{:e}",
            m.t, m.sup_rm, m.max_ricci_eig, m.min_metric_eig, m.equivalence, m.rm_gradient
        );
    }
    s
}

pub fn summary_text(output: &RunOutput) -> String {
    let m = &output.manifest;
    let mut s = format!(
        "kahlerbench {} scenario {:?} seed {}\n",
        m.code_version, m.config.scenario, m.config.seed
    );
    for c in &m.checks {
        let _ = writeln!(
            s,
            "{} {}: {:e} {} {:e} [{}]",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.relation,
            c.tolerance,
            c.oracle
        );
    }
    for (k, v) in &m.units {
        let _ = writeln!(s, "unit {k}: {v:e}");
    }
    for e in &m.errors {
        let _ = writeln!(s, "error: {e}");
    }
    let _ = writeln!(s, "{}", if m.passed() { "all checks passed" } else { "some checks failed" });
    s
}

/// Writes the report into `dir` (created if needed) and returns the paths.
pub fn emit_report(output: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    if output.manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut written = Vec::new();
    let manifest = serde_json::to_string_pretty(&output.manifest).map_err(|e| Error::InvalidInput(e.to_string()))?;
    write(dir.join("manifest.json"), &(manifest + "\n"), &mut written)?;
    write(dir.join("history.csv"), &history_csv(output), &mut written)?;
    write(dir.join("summary.txt"), &summary_text(output), &mut written)?;
    if !output.trajectory.is_empty() {
        write(dir.join("trajectory.csv"), &trajectory_csv(output), &mut written)?;
    }
    for snap in &output.snapshots {
        write(dir.join(format!("snapshot_{}.json", snap.name)), &snap.field.to_json(), &mut written)?;
    }
    Ok(written)
}

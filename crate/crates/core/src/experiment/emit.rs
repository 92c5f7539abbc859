//! Output artifacts: `results.csv`, one plot CSV per method, and a manifest
//! naming every file with its SHA-256 and the config hash. Nothing here
//! depends on time or machine state, so reruns are byte-identical.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::util::fmt_g17;

use super::config::ExperimentConfig;
use super::runner::ResultTable;

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Write all experiment outputs under `out_dir` and return the written
/// paths, manifest last.
pub fn emit_plot_data(
    cfg: &ExperimentConfig,
    table: &ResultTable,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    // name -> content, in emission order (results first, then per method).
    let mut files: Vec<(String, String)> = Vec::new();
    files.push(("results.csv".to_string(), table.results_csv_string()));
    for method in table.methods() {
        let mut s = String::from("iteration,value,stderr\n");
        for row in table.rows_for(method) {
            s.push_str(&format!(
                "{},{},{}\n",
                row.iteration,
                fmt_g17(row.value),
                fmt_g17(row.stderr)
            ));
        }
        files.push((format!("plot_{}.csv", method.name()), s));
    }

    let mut manifest = format!("config_hash = {}\n", cfg.config_hash());
    for (name, content) in &files {
        manifest.push_str(&format!("file {} sha256 = {}\n", name, sha256_hex(content.as_bytes())));
    }

    let mut written = Vec::new();
    for (name, content) in files.iter().chain(std::iter::once(&("manifest.txt".to_string(), manifest))) {
        let path = out_dir.join(name);
        std::fs::write(&path, content)?;
        written.push(path);
    }
    Ok(written)
}

// ---------------------------------------------------------------------------

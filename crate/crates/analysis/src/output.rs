use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use probe_core::Task;
use serde::{Deserialize, Serialize};

use crate::summary::{Analysis, AnalysisConfig};

/// Run metadata written next to the CSVs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub config: AnalysisConfig,
    pub seed: Option<u64>,
    /// Input file → SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub n_responses: usize,
    pub n_eval_records: usize,
    pub excluded_rt_responses: usize,
    pub dropped_participants: Vec<String>,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), String> {
    let err = |e: csv::Error| format!("{}: {e}", path.display());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| format!("{}: {e}", path.display()))
}

/// Write `<task>_cells.csv`, `<task>_trials.csv`, `<task>_bins.csv`,
/// `correlations.csv` and `run.json` into `dir`. Returns the paths.
pub fn write_outputs(
    dir: &Path,
    analysis: &Analysis,
    info: &RunInfo,
) -> Result<Vec<PathBuf>, String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut written = Vec::new();
    let tasks: Vec<Task> = Task::ALL
        .into_iter()
        .filter(|t| analysis.cells.iter().any(|c| c.task == *t))
        .collect();
    for task in tasks {
        let path = dir.join(format!("{task}_cells.csv"));
        write_csv(&path, analysis.cells.iter().filter(|c| c.task == task))?;
        written.push(path);
        if analysis.trial_points.iter().any(|p| p.task == task) {
            let path = dir.join(format!("{task}_trials.csv"));
            write_csv(
                &path,
                analysis.trial_points.iter().filter(|p| p.task == task),
            )?;
            written.push(path);
            let path = dir.join(format!("{task}_bins.csv"));
            write_csv(&path, analysis.bins.iter().filter(|p| p.task == task))?;
            written.push(path);
        }
    }
    let path = dir.join("correlations.csv");
    write_csv(&path, &analysis.correlations)?;
    written.push(path);
    let path = dir.join("run.json");
    let mut text = serde_json::to_string_pretty(info).expect("run info serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))?;
    written.push(path);
    Ok(written)
}

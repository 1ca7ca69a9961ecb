//! Run artifacts: `coords.csv`, `result.json` and the optional `plot.svg`.

use std::io::Write;
use std::path::Path;

use clmds::io::{format_coords_csv, parse_coords_csv};
use clmds::{ClmdsResult, TransformKind};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{in_file, read_to_string, CliError};

pub const COORDS_FILE: &str = "coords.csv";
pub const RESULT_FILE: &str = "result.json";
pub const PLOT_FILE: &str = "plot.svg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub n_clusters: usize,
    pub medoids: Vec<usize>,
    pub anchors: Vec<Vec<usize>>,
    pub transform_kinds: Vec<TransformKind>,
    pub group_stress: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_rows: usize,
    pub n_sparse: usize,
    pub n_estimated: usize,
    pub incoherence: f64,
    pub local_stress_total: f64,
    pub levels: Vec<LevelSummary>,
}

impl Summary {
    pub fn of(result: &ClmdsResult) -> Self {
        Self {
            n_rows: result.len(),
            n_sparse: result.sparse_indices.len(),
            n_estimated: result.estimated_mask.iter().filter(|&&e| e).count(),
            incoherence: result.incoherence,
            local_stress_total: result.local_stress.iter().sum(),
            levels: result
                .per_level
                .iter()
                .map(|l| LevelSummary {
                    n_clusters: l.clustering.n_clusters(),
                    medoids: l.clustering.medoids().to_vec(),
                    anchors: l.anchors.clone(),
                    transform_kinds: l.transforms.iter().map(|t| t.kind).collect(),
                    group_stress: l.group_stress.clone(),
                })
                .collect(),
        }
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load: f64,
    pub embed: f64,
}

/// Contents of `result.json`. `result.coords` is left empty; the
/// coordinates live in `coords.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub summary: Summary,
    pub timings: Timings,
    pub config: RunConfig,
    pub result: ClmdsResult,
}

impl RunRecord {
    pub fn new(result: &ClmdsResult, config: &RunConfig, timings: Timings) -> Self {
        let mut stored = result.clone();
        stored.coords.clear();
        Self { summary: Summary::of(result), timings, config: config.clone(), result: stored }
    }
}

/// Writes every file to a temporary name in `dir` first and renames them
/// only after all writes succeeded.
pub fn write_atomic(dir: &Path, files: &[(&str, &[u8])]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut staged = Vec::with_capacity(files.len());
    for &(name, bytes) in files {
        let mut tmp = tempfile::Builder::new()
            .prefix(&format!(".{name}."))
            .tempfile_in(dir)
            .map_err(|e| CliError::io(dir, e))?;
        tmp.write_all(bytes).and_then(|_| tmp.as_file().sync_all()).map_err(|e| CliError::io(tmp.path(), e))?;
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, target) in staged {
        tmp.persist(&target).map_err(|e| CliError::io(&target, e.error))?;
    }
    Ok(())
}

/// Renders the run's artifacts, ready for [`write_atomic`].
pub fn render(
    result: &ClmdsResult,
    ids: Option<&[String]>,
    record: &RunRecord,
) -> Result<(String, String), CliError> {
    let coords = format_coords_csv(result, ids);
    let mut json =
        serde_json::to_string_pretty(record).map_err(|e| CliError::new("serialize", e.to_string()))?;
    json.push('\n');
    Ok((coords, json))
}

/// Rebuilds a result from a run directory.
pub fn read_run(dir: &Path) -> Result<(ClmdsResult, RunRecord), CliError> {
    let json_path = dir.join(RESULT_FILE);
    let record: RunRecord = serde_json::from_str(&read_to_string(&json_path)?)
        .map_err(|e| CliError::new("parse", format!("{}: {e}", json_path.display())))?;
    let coords_path = dir.join(COORDS_FILE);
    let rows = parse_coords_csv(&read_to_string(&coords_path)?).map_err(in_file(&coords_path))?;
    let mut result = record.result.clone();
    let expected = result.estimated_mask.len();
    if rows.len() != expected {
        return Err(CliError::new(
            "inconsistent_run",
            format!("{} has {} rows, {} expects {expected}", COORDS_FILE, rows.len(), RESULT_FILE),
        ));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.cluster != result.clustering.cluster_of(i) || row.is_estimated != result.estimated_mask[i] {
            return Err(CliError::new("inconsistent_run", format!("row {i} disagrees with {RESULT_FILE}")));
        }
    }
    result.coords = rows.iter().map(|r| r.coords).collect();
    Ok((result, record))
}

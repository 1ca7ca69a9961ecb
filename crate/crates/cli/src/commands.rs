//! Subcommand bodies, independent of argument parsing.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clmds::datagen::{containment, gen_holes_dataset, gen_s_curve, HolesSpec};
use clmds::io::{format_table, load_distance_matrix, load_features, parse_coords_csv};
use clmds::{run, Clustering, Input};

use crate::config::RunConfig;
use crate::error::{in_file, read_to_string, CliError};
use crate::output::{render, write_atomic, RunRecord, Timings, COORDS_FILE, PLOT_FILE, RESULT_FILE};
use crate::plot::render_svg;

#[derive(Debug, Clone)]
pub struct EmbedOutcome {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub n_rows: usize,
    pub n_estimated: usize,
}

/// Loads the input, runs the pipeline and writes the artifacts. Nothing is
/// written unless every step before the write succeeded.
pub fn embed(cfg: &RunConfig) -> Result<EmbedOutcome, CliError> {
    let t0 = Instant::now();
    let path = &cfg.input.path;
    let metric = cfg.metric()?;
    let (d, fs) = match &metric {
        None => (Some(load_distance_matrix(path).map_err(in_file(path))?), None),
        Some(_) => (None, Some(load_features(path, cfg.input.id_column).map_err(in_file(path))?)),
    };
    let load = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let input = match (&d, &fs, &metric) {
        (Some(d), _, _) => Input::Distances(d),
        (_, Some(features), Some(metric)) => Input::Features { features, metric },
        _ => unreachable!("input loaded for its kind"),
    };
    let result = run(input, &cfg.clmds)?;
    let embed = t1.elapsed().as_secs_f64();

    let record = RunRecord::new(&result, cfg, Timings { load, embed });
    let ids = fs.as_ref().and_then(|f| f.ids());
    let (coords, json) = render(&result, ids, &record)?;
    let svg = cfg.output.plot.then(|| render_svg(&result));
    let mut files: Vec<(&str, &[u8])> = vec![(COORDS_FILE, coords.as_bytes()), (RESULT_FILE, json.as_bytes())];
    if let Some(svg) = &svg {
        files.push((PLOT_FILE, svg.as_bytes()));
    }
    let dir = &cfg.output.dir;
    write_atomic(dir, &files)?;
    Ok(EmbedOutcome {
        dir: dir.clone(),
        files: files.iter().map(|(n, _)| dir.join(n)).collect(),
        n_rows: result.len(),
        n_estimated: record.summary.n_estimated,
    })
}

pub const FEATURES_FILE: &str = "features.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const CENTERS_FILE: &str = "centers.csv";

/// `features.csv` with columns `x,y,z`.
pub fn datagen_s_curve(n: usize, seed: u64, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let fs = gen_s_curve(n, seed)?;
    let text = format_table(&["x", "y", "z"], fs.rows());
    write_atomic(dir, &[(FEATURES_FILE, text.as_bytes())])?;
    Ok(vec![dir.join(FEATURES_FILE)])
}

/// `features.csv` (distance to each hole, columns `h1..`), plus the true
/// positions in `truth.csv` and the hole centers in `centers.csv`.
pub fn datagen_holes(spec: &HolesSpec, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let data = gen_holes_dataset(spec)?;
    let names: Vec<String> = (1..=spec.n_holes).map(|h| format!("h{h}")).collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    let features = format_table(&header, data.features.rows());
    let truth = format_table(&["x", "y"], &data.positions);
    let centers = format_table(&["x", "y"], &data.centers);
    let files = [
        (FEATURES_FILE, features.as_bytes()),
        (TRUTH_FILE, truth.as_bytes()),
        (CENTERS_FILE, centers.as_bytes()),
    ];
    write_atomic(dir, &files)?;
    Ok(files.iter().map(|(n, _)| dir.join(n)).collect())
}

/// Voronoi containment of a `coords.csv` file, or of the one inside a run directory.
pub fn metrics_voronoi(path: &Path) -> Result<f64, CliError> {
    let file = if path.is_dir() { path.join(COORDS_FILE) } else { path.to_path_buf() };
    let rows = parse_coords_csv(&read_to_string(&file)?).map_err(in_file(&file))?;
    let n_clusters = rows.iter().map(|r| r.cluster + 1).max().unwrap_or(0);
    let mut medoids = vec![None; n_clusters];
    for (i, r) in rows.iter().enumerate() {
        if r.is_medoid {
            if medoids[r.cluster].is_some() {
                return Err(CliError::new("invalid_clustering", format!("cluster {} has two medoids", r.cluster)));
            }
            medoids[r.cluster] = Some(i);
        }
    }
    let medoids = medoids
        .into_iter()
        .enumerate()
        .map(|(k, m)| m.ok_or_else(|| CliError::new("invalid_clustering", format!("cluster {k} has no medoid"))))
        .collect::<Result<Vec<_>, _>>()?;
    let clustering = Clustering::new(rows.iter().map(|r| r.cluster).collect(), medoids)?;
    let coords: Vec<_> = rows.iter().map(|r| r.coords).collect();
    Ok(containment(&coords, &clustering)?)
}

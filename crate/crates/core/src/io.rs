//! Delimited-text readers for distance matrices and feature sets.
//!
//! One row per line, fields separated by commas and/or whitespace. Blank lines
//! and lines starting with `#` are skipped, and so is a first row in which no
//! value field is a number (a header).

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{validate_distance_matrix, ClmdsResult, DistanceMatrix, FeatureSet, Point2};
use crate::error::{ClmdsError, Result};

fn fields(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty())
}

fn data_lines(text: &str, labelled: bool) -> impl Iterator<Item = (usize, &str)> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter_map(|(i, l)| {
            let t = l.trim();
            (!t.is_empty() && !t.starts_with('#')).then_some((i + 1, t))
        })
        .peekable();
    if let Some(&(_, first)) = lines.peek() {
        let values: Vec<&str> = fields(first).skip(usize::from(labelled)).collect();
        if !values.is_empty() && values.iter().all(|f| f.parse::<f64>().is_err()) {
            lines.next();
        }
    }
    lines
}

fn parse_value(field: &str, line: usize) -> Result<f64> {
    field.parse::<f64>().map_err(|_| ClmdsError::Parse {
        line,
        message: format!("not a number: {field:?}"),
    })
}

/// Parses a numeric table.
pub fn parse_table(text: &str) -> Result<Vec<Vec<f64>>> {
    data_lines(text, false)
        .map(|(line, l)| fields(l).map(|f| parse_value(f, line)).collect())
        .collect()
}

/// Parses a table whose first field on every line is a point label.
pub fn parse_labelled_table(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (line, l) in data_lines(text, true) {
        let mut it = fields(l);
        let id = it.next().ok_or(ClmdsError::Parse { line, message: "empty row".into() })?;
        ids.push(id.to_string());
        rows.push(it.map(|f| parse_value(f, line)).collect::<Result<Vec<_>>>()?);
    }
    Ok((ids, rows))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| ClmdsError::Parse {
        line: 0,
        message: format!("{}: {e}", path.display()),
    })
}

pub fn parse_distance_matrix(text: &str) -> Result<DistanceMatrix> {
    validate_distance_matrix(&parse_table(text)?)
}

pub fn load_distance_matrix(path: impl AsRef<Path>) -> Result<DistanceMatrix> {
    parse_distance_matrix(&read(path.as_ref())?)
}

pub fn parse_features(text: &str, id_column: bool) -> Result<FeatureSet> {
    if id_column {
        let (ids, rows) = parse_labelled_table(text)?;
        FeatureSet::new(rows)?.with_ids(ids)
    } else {
        FeatureSet::new(parse_table(text)?)
    }
}

pub fn load_features(path: impl AsRef<Path>, id_column: bool) -> Result<FeatureSet> {
    parse_features(&read(path.as_ref())?, id_column)
}

/// Formats rows as comma-separated text under an optional header line.
///
/// Values use the shortest representation that parses back to the same `f64`.
pub fn format_table(header: &[&str], rows: impl IntoIterator<Item = impl AsRef<[f64]>>) -> String {
    let mut out = String::new();
    if !header.is_empty() {
        let _ = writeln!(out, "{}", header.join(","));
    }
    for row in rows {
        let row = row.as_ref();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    out
}

pub const COORDS_HEADER: &str = "id,x,y,cluster,is_medoid,is_anchor,is_estimated";

/// One row of a coordinates file.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordsRow {
    pub id: String,
    pub coords: Point2,
    pub cluster: usize,
    pub is_medoid: bool,
    pub is_anchor: bool,
    pub is_estimated: bool,
}

/// Writes the embedding as CSV, one row per result row. Without `ids` a row
/// is labelled with its input index.
pub fn format_coords_csv(result: &ClmdsResult, ids: Option<&[String]>) -> String {
    let medoid = result.medoid_mask();
    let anchor = result.anchor_mask();
    let mut out = String::with_capacity(64 * result.len());
    out.push_str(COORDS_HEADER);
    out.push('\n');
    for (row, p) in result.coords.iter().enumerate() {
        let input = if result.estimation_unavailable { result.sparse_indices[row] } else { row };
        match ids {
            Some(ids) => out.push_str(&ids[input]),
            None => {
                let _ = write!(out, "{input}");
            }
        }
        let flag = |b: bool| if b { 1 } else { 0 };
        let _ = writeln!(
            out,
            ",{:?},{:?},{},{},{},{}",
            p[0],
            p[1],
            result.clustering.cluster_of(row),
            flag(medoid[row]),
            flag(anchor[row]),
            flag(result.estimated_mask[row]),
        );
    }
    out
}

/// Reads a file written by [`format_coords_csv`].
pub fn parse_coords_csv(text: &str) -> Result<Vec<CoordsRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == COORDS_HEADER => {}
        _ => return Err(ClmdsError::Parse { line: 1, message: format!("expected header {COORDS_HEADER:?}") }),
    }
    let mut rows = Vec::new();
    for (i, l) in lines {
        let line = i + 1;
        if l.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 7 {
            return Err(ClmdsError::Parse { line, message: format!("expected 7 fields, got {}", f.len()) });
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| ClmdsError::Parse { line, message: format!("bad integer {s:?}") });
        let flag = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(ClmdsError::Parse { line, message: format!("bad flag {s:?}") }),
        };
        rows.push(CoordsRow {
            id: f[0].to_string(),
            coords: [parse_value(f[1], line)?, parse_value(f[2], line)?],
            cluster: int(f[3])?,
            is_medoid: flag(f[4])?,
            is_anchor: flag(f[5])?,
            is_estimated: flag(f[6])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_delimiters_and_comments() {
        let text = "# header\n0, 1 2\n\n1\t0,3\n# trailing\n2 3 0\n";
        let d = parse_distance_matrix(text).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.get(0, 2), 2.0);
        assert_eq!(d.get(2, 1), 3.0);
    }

    #[test]
    fn header_rows_are_skipped() {
        assert_eq!(parse_table("x,y\n1,2\n").unwrap(), vec![vec![1.0, 2.0]]);
        let fs = parse_features("id,a,b\np,1,2\n", true).unwrap();
        assert_eq!(fs.ids().unwrap(), ["p"]);
        // a partly numeric first row is data, and malformed
        assert!(parse_table("x,2\n1,2\n").is_err());
    }

    #[test]
    fn malformed_values_report_line() {
        let err = parse_table("1,2\n3,x\n").unwrap_err();
        assert_eq!(err, ClmdsError::Parse { line: 2, message: "not a number: \"x\"".into() });
    }

    #[test]
    fn labelled_features() {
        let fs = parse_features("a 1 2\nb 3 4\n", true).unwrap();
        assert_eq!(fs.ids().unwrap(), ["a", "b"]);
        assert_eq!(fs.row(1), [3.0, 4.0]);
    }

    #[test]
    fn table_round_trips() {
        let rows = vec![vec![0.1, 1.0 / 3.0], vec![-2.5e-17, 7.0]];
        let text = format_table(&["a", "b"], &rows);
        assert_eq!(parse_table(&text).unwrap(), rows);
    }

    #[test]
    fn coords_csv_round_trips() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![(i % 4) as f64, (i / 4) as f64 * 1.5, 0.1 * i as f64]).collect();
        let d = crate::data::euclidean_distances(&FeatureSet::new(rows).unwrap());
        let cfg = crate::pipeline::ClmdsConfig::new(crate::data::HierarchySpec::new(vec![3, 1]).unwrap());
        let r = crate::pipeline::clmds_embed(&d, &cfg).unwrap();
        let text = format_coords_csv(&r, None);
        assert!(text.starts_with("id,x,y,cluster,is_medoid,is_anchor,is_estimated\n"));
        assert!(!text.contains('\r'));
        let back = parse_coords_csv(&text).unwrap();
        assert_eq!(back.len(), 12);
        for (i, row) in back.iter().enumerate() {
            assert_eq!(row.id, i.to_string());
            assert_eq!(row.coords, r.coords[i]);
            assert_eq!(row.cluster, r.clustering.cluster_of(i));
            assert_eq!(row.is_medoid, r.medoid_mask()[i]);
            assert_eq!(row.is_anchor, r.anchor_mask()[i]);
        }
        assert!(parse_coords_csv("x,y\n").is_err());
        assert!(parse_coords_csv(&format!("{COORDS_HEADER}\n0,1,2,0,2,0,0\n")).is_err());
    }
}

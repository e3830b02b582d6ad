//! Readers and writers for the ingestion formats: images as JSON lines,
//! clusters as CSV, taxonomy as one class name per line.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::dataset::{Cluster, ImageRecord, Taxonomy};
use crate::geo::GeoPoint;
use crate::{Error, Result};

/// Summary of a load.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub rows: usize,
    pub warnings: Vec<String>,
}

pub fn load_taxonomy(path: &Path) -> Result<Taxonomy> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let names = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    Taxonomy::new(names)
}

/// Load a JSON-lines image file. Blank lines are skipped.
pub fn load_images(path: &Path, taxonomy: &Taxonomy) -> Result<(Vec<ImageRecord>, LoadReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut embedding_dim: Option<usize> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ImageRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if record.counts.len() != taxonomy.len() {
            return Err(Error::Schema(format!(
                "{}:{line_no}: image {} has {} counts but the taxonomy has {} classes",
                path.display(),
                record.image_id,
                record.counts.len(),
                taxonomy.len()
            )));
        }
        if let Some(e) = &record.embedding {
            match embedding_dim {
                None => embedding_dim = Some(e.len()),
                Some(d) if d != e.len() => {
                    return Err(Error::Schema(format!(
                        "{}:{line_no}: embedding length {} differs from earlier length {d}",
                        path.display(),
                        e.len()
                    )))
                }
                Some(_) => {}
            }
        }
        records.push(record);
    }
    let mut report = LoadReport {
        rows: records.len(),
        warnings: Vec::new(),
    };
    if records.is_empty() {
        let msg = format!("{}: no image records", path.display());
        log::warn!("{msg}");
        report.warnings.push(msg);
    }
    log::info!("loaded {} image records from {}", records.len(), path.display());
    Ok((records, report))
}

const CLUSTER_COLUMNS: [&str; 4] = ["cluster_id", "lat", "lon", "country"];

/// Load the cluster CSV. Empty indicator cells mean "not surveyed".
pub fn load_clusters(path: &Path) -> Result<Vec<Cluster>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, 1, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, 1, e))?.clone();
    if headers.len() < 4 || headers.iter().take(4).ne(CLUSTER_COLUMNS) {
        return Err(Error::Schema(format!(
            "{}: header must start with {}",
            path.display(),
            CLUSTER_COLUMNS.join(",")
        )));
    }
    let indicator_names: Vec<String> = headers.iter().skip(4).map(str::to_string).collect();
    let mut clusters = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            csv_error(path, line, e)
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let number = |idx: usize, what: &str| -> Result<f64> {
            row[idx]
                .parse::<f64>()
                .map_err(|e| parse_err(format!("{what} '{}': {e}", &row[idx])))
        };
        let center = GeoPoint::new(number(1, "lat")?, number(2, "lon")?).map_err(|e| parse_err(e.to_string()))?;
        let mut indicators = BTreeMap::new();
        for (j, name) in indicator_names.iter().enumerate() {
            let cell = &row[4 + j];
            if cell.is_empty() {
                continue;
            }
            let v = number(4 + j, name)?;
            if !v.is_finite() {
                return Err(parse_err(format!("indicator {name} is not finite")));
            }
            indicators.insert(name.clone(), v);
        }
        clusters.push(Cluster {
            cluster_id: row[0].to_string(),
            center,
            country: row[3].to_string(),
            image_ids: Vec::new(),
            indicators,
            targets: BTreeMap::new(),
        });
    }
    Ok(clusters)
}

fn csv_error(path: &Path, line: usize, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

pub fn write_taxonomy(path: &Path, taxonomy: &Taxonomy) -> Result<()> {
    let mut text = taxonomy.names().join("\n");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_images_jsonl(path: &Path, images: &[ImageRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for record in images {
        serde_json::to_writer(&mut w, record)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write clusters in the ingestion CSV format, one column per indicator seen.
pub fn write_clusters_csv(path: &Path, clusters: &[Cluster]) -> Result<()> {
    let indicators: Vec<String> = clusters
        .iter()
        .flat_map(|c| c.indicators.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, 0, e))?;
    let mut header: Vec<String> = CLUSTER_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(indicators.iter().cloned());
    w.write_record(&header)?;
    for c in clusters {
        let mut row = vec![
            c.cluster_id.clone(),
            format!("{}", c.center.lat()),
            format!("{}", c.center.lon()),
            c.country.clone(),
        ];
        row.extend(
            indicators
                .iter()
                .map(|k| c.indicators.get(k).map(|v| format!("{v}")).unwrap_or_default()),
        );
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

//! CSV ingestion and export of clustered datasets.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Cluster, ClusteredDataset, ZScale};
use crate::error::{GeeError, Result};

/// Column roles of an input CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub id: String,
    pub response: String,
    pub linear: Vec<String>,
    pub additive: Vec<String>,
    /// Min-max rescale each additive column to [0, 1]; otherwise values
    /// outside [0, 1] are rejected.
    #[serde(default)]
    pub rescale: bool,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| GeeError::MissingColumn(name.to_string()))
}

fn parse_cell(record: &csv::StringRecord, idx: usize, row: usize, column: &str) -> Result<f64> {
    let raw = record.get(idx).unwrap_or("").trim();
    let v: f64 = raw.parse().map_err(|_| GeeError::BadCell {
        row,
        column: column.to_string(),
        message: format!("'{raw}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(GeeError::BadCell {
            row,
            column: column.to_string(),
            message: "value is not finite".into(),
        });
    }
    Ok(v)
}

struct Row {
    y: f64,
    x: Vec<f64>,
    z: Vec<f64>,
}

/// Reads a CSV with a header row. Rows are grouped by the id column; ids
/// are ordered numerically when all of them parse as numbers and
/// lexicographically otherwise. Row order within a cluster is preserved.
pub fn load_csv(path: impl AsRef<Path>, spec: &ColumnSpec) -> Result<ClusteredDataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    read_records(&mut reader, spec)
}

pub fn load_csv_reader<R: std::io::Read>(input: R, spec: &ColumnSpec) -> Result<ClusteredDataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    read_records(&mut reader, spec)
}

fn read_records<R: std::io::Read>(reader: &mut csv::Reader<R>, spec: &ColumnSpec) -> Result<ClusteredDataset> {
    let headers = reader.headers()?.clone();
    let id_idx = column_index(&headers, &spec.id)?;
    let y_idx = column_index(&headers, &spec.response)?;
    let x_idx = spec
        .linear
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let z_idx = spec
        .additive
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let mut groups: Vec<(String, Vec<Row>)> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        // data rows are numbered from 1, after the header
        let row = r + 1;
        let id = rec.get(id_idx).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(GeeError::BadCell {
                row,
                column: spec.id.clone(),
                message: "empty cluster id".into(),
            });
        }
        let parsed = Row {
            y: parse_cell(&rec, y_idx, row, &spec.response)?,
            x: x_idx
                .iter()
                .zip(&spec.linear)
                .map(|(&i, c)| parse_cell(&rec, i, row, c))
                .collect::<Result<_>>()?,
            z: z_idx
                .iter()
                .zip(&spec.additive)
                .map(|(&i, c)| parse_cell(&rec, i, row, c))
                .collect::<Result<_>>()?,
        };
        let g = *index.entry(id.clone()).or_insert_with(|| {
            groups.push((id, Vec::new()));
            groups.len() - 1
        });
        groups[g].1.push(parsed);
    }
    if groups.is_empty() {
        return Err(GeeError::Config("input has no data rows".into()));
    }
    let numeric: Option<Vec<f64>> = groups.iter().map(|(id, _)| id.parse::<f64>().ok()).collect();
    match numeric {
        Some(keys) => {
            let mut order: Vec<usize> = (0..groups.len()).collect();
            order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
            let mut slots: Vec<Option<(String, Vec<Row>)>> = groups.into_iter().map(Some).collect();
            groups = order.into_iter().map(|i| slots[i].take().expect("each index once")).collect();
        }
        None => groups.sort_by(|a, b| a.0.cmp(&b.0)),
    }

    let d2 = spec.additive.len();
    let mut scales = vec![ZScale::UNIT; d2];
    if spec.rescale {
        for (l, scale) in scales.iter_mut().enumerate() {
            let vals = groups.iter().flat_map(|(_, rows)| rows.iter().map(move |r| r.z[l]));
            let (min, max) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            if !(max > min) {
                return Err(GeeError::DegenerateDesign(format!(
                    "additive column '{}' is constant",
                    spec.additive[l]
                )));
            }
            *scale = ZScale { min, max };
        }
    }
    let clusters = groups
        .into_iter()
        .map(|(id, rows)| {
            let m = rows.len();
            Cluster {
                id,
                y: rows.iter().map(|r| r.y).collect(),
                x: DMatrix::from_fn(m, spec.linear.len(), |j, k| rows[j].x[k]),
                z: DMatrix::from_fn(m, d2, |j, l| {
                    let v = rows[j].z[l];
                    if spec.rescale {
                        scales[l].to_unit(v).clamp(0.0, 1.0)
                    } else {
                        v
                    }
                }),
            }
        })
        .collect::<Vec<_>>();
    let ds = ClusteredDataset {
        clusters,
        linear_names: spec.linear.clone(),
        additive_names: spec.additive.clone(),
        z_scales: scales,
    };
    ds.validate()?;
    Ok(ds)
}

/// Writes `id, y, linear..., additive...` with additive values on their
/// original scale.
pub fn save_csv(data: &ClusteredDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string(), "y".to_string()];
    header.extend(data.linear_names.iter().cloned());
    header.extend(data.additive_names.iter().cloned());
    w.write_record(&header)?;
    for c in &data.clusters {
        for j in 0..c.len() {
            let mut rec = vec![c.id.clone(), c.y[j].to_string()];
            rec.extend(c.x.row(j).iter().map(|v| v.to_string()));
            rec.extend(
                c.z.row(j)
                    .iter()
                    .zip(&data.z_scales)
                    .map(|(v, s)| s.to_original(*v).to_string()),
            );
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

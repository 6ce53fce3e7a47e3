//! CSV ingestion and emission.
//!
//! Expected columns: `cluster_id`, `y`, `a`, optional `weight`, any number of
//! `w__*` (unit covariates) and `c__*` (cluster covariates). Rows belonging to
//! the same cluster may appear anywhere in the file; within a cluster, file
//! order is preserved. Cluster covariates and the weight must not vary within
//! a cluster. If the file does not carry a `c__n` column, cluster size is
//! appended under that name.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ClusterData, Dataset, RowMatrix};

struct Layout {
    cluster_id: usize,
    y: usize,
    a: usize,
    weight: Option<usize>,
    w_cols: Vec<(usize, String)>,
    c_cols: Vec<(usize, String)>,
    has_c_n: bool,
}

fn resolve_layout(headers: &csv::StringRecord) -> Result<Layout> {
    let mut cluster_id = None;
    let mut y = None;
    let mut a = None;
    let mut weight = None;
    let mut w_cols = Vec::new();
    let mut c_cols = Vec::new();
    for (i, name) in headers.iter().enumerate() {
        match name {
            "cluster_id" => cluster_id = Some(i),
            "y" => y = Some(i),
            "a" => a = Some(i),
            "weight" => weight = Some(i),
            _ if name.starts_with("w__") => w_cols.push((i, name.to_string())),
            _ if name.starts_with("c__") => c_cols.push((i, name.to_string())),
            _ => {
                return Err(Error::Schema(format!(
                    "unrecognized column '{name}' (expected cluster_id, y, a, weight, w__*, c__*)"
                )))
            }
        }
    }
    let missing = [("cluster_id", cluster_id), ("y", y), ("a", a)]
        .iter()
        .filter(|(_, v)| v.is_none())
        .map(|(n, _)| *n)
        .collect::<Vec<_>>();
    if !missing.is_empty() {
        return Err(Error::Schema(format!("missing required column(s): {}", missing.join(", "))));
    }
    // keep c__n last if present so it lands in its conventional slot
    let has_c_n = c_cols.iter().any(|(_, n)| n == "c__n");
    if has_c_n {
        c_cols.sort_by_key(|(_, n)| n == "c__n");
    }
    Ok(Layout {
        cluster_id: cluster_id.unwrap(),
        y: y.unwrap(),
        a: a.unwrap(),
        weight,
        w_cols,
        c_cols,
        has_c_n,
    })
}

fn parse_f64(raw: &str, column: &str, row: usize) -> Result<f64> {
    if raw.is_empty() {
        return Err(Error::Parse(format!("empty value for '{column}' on data row {row}")));
    }
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::Parse(format!("cannot parse '{raw}' as number for '{column}' on data row {row}")))?;
    if !v.is_finite() {
        return Err(Error::Value(format!("non-finite value for '{column}' on data row {row}")));
    }
    Ok(v)
}

struct PendingCluster {
    id: String,
    y: Vec<f64>,
    a: Vec<u8>,
    w_rows: Vec<Vec<f64>>,
    c: Vec<f64>,
    weight: f64,
    first_row: usize,
}

/// Read a dataset from CSV.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.as_ref().display()),
        ))
    })?;
    read_dataset(file)
}

/// Read a dataset from any CSV reader (used by tests and the loader).
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let layout = resolve_layout(rdr.headers()?)?;

    let mut order: Vec<String> = Vec::new();
    let mut pending: HashMap<String, PendingCluster> = HashMap::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row = row_idx + 1; // 1-based data rows, header excluded
        let id = record.get(layout.cluster_id).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::Parse(format!("empty cluster_id on data row {row}")));
        }
        let y = parse_f64(record.get(layout.y).unwrap_or(""), "y", row)?;
        let a_raw = parse_f64(record.get(layout.a).unwrap_or(""), "a", row)?;
        let a = if a_raw == 0.0 {
            0u8
        } else if a_raw == 1.0 {
            1u8
        } else {
            return Err(Error::Value(format!(
                "treatment 'a' must be 0 or 1, got {a_raw} on data row {row}"
            )));
        };
        let weight = match layout.weight {
            Some(i) => parse_f64(record.get(i).unwrap_or(""), "weight", row)?,
            None => 1.0,
        };
        let mut w_row = Vec::with_capacity(layout.w_cols.len());
        for (i, name) in &layout.w_cols {
            w_row.push(parse_f64(record.get(*i).unwrap_or(""), name, row)?);
        }
        let mut c_row = Vec::with_capacity(layout.c_cols.len());
        for (i, name) in &layout.c_cols {
            c_row.push(parse_f64(record.get(*i).unwrap_or(""), name, row)?);
        }

        match pending.get_mut(&id) {
            None => {
                order.push(id.clone());
                pending.insert(
                    id.clone(),
                    PendingCluster {
                        id,
                        y: vec![y],
                        a: vec![a],
                        w_rows: vec![w_row],
                        c: c_row,
                        weight,
                        first_row: row,
                    },
                );
            }
            Some(p) => {
                if c_row != p.c {
                    let name = layout
                        .c_cols
                        .iter()
                        .zip(c_row.iter().zip(&p.c))
                        .find(|(_, (a, b))| a != b)
                        .map(|((_, n), _)| n.clone())
                        .unwrap_or_else(|| "c__*".into());
                    return Err(Error::Consistency(format!(
                        "cluster covariate '{name}' varies within cluster '{}' (data rows {} and {row})",
                        p.id, p.first_row
                    )));
                }
                if weight != p.weight {
                    return Err(Error::Consistency(format!(
                        "weight varies within cluster '{}' (data rows {} and {row})",
                        p.id, p.first_row
                    )));
                }
                p.y.push(y);
                p.a.push(a);
                p.w_rows.push(w_row);
            }
        }
    }
    if order.is_empty() {
        return Err(Error::Schema("no data rows".into()));
    }

    let w_names: Vec<String> = layout.w_cols.iter().map(|(_, n)| n.clone()).collect();
    let mut c_names: Vec<String> = layout.c_cols.iter().map(|(_, n)| n.clone()).collect();
    if !layout.has_c_n {
        c_names.push("c__n".into());
    }

    let mut clusters = Vec::with_capacity(order.len());
    for id in order {
        let p = pending.remove(&id).expect("pending cluster");
        let n = p.y.len();
        let w_unit = RowMatrix::from_rows(&p.w_rows, w_names.len())?;
        let mut c = p.c;
        if !layout.has_c_n {
            c.push(n as f64);
        }
        clusters.push(ClusterData::from_parts(p.id, p.y, p.a, w_unit, c, p.weight)?);
    }
    Dataset::new(clusters, w_names, c_names)
}

/// Write a dataset as CSV with the same schema `load_dataset` reads
/// (`c__n` included, weight column always present).
pub fn write_dataset_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_dataset(d, file)
}

pub fn write_dataset<W: Write>(d: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["cluster_id".to_string(), "y".into(), "a".into(), "weight".into()];
    header.extend(d.w_names().iter().cloned());
    header.extend(d.c_names().iter().cloned());
    wtr.write_record(&header)?;
    for c in d.clusters() {
        for j in 0..c.n() {
            let mut rec = vec![
                c.id().to_string(),
                format!("{}", c.y()[j]),
                format!("{}", c.a()[j]),
                format!("{}", c.weight()),
            ];
            rec.extend(c.w_unit().row(j).iter().map(|v| format!("{v}")));
            rec.extend(c.c_cluster().iter().map(|v| format!("{v}")));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

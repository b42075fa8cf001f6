//! Row-major batches of continuous feature vectors and their CSV form.
//!
//! The CSV schema is a header row followed by numeric feature columns. Two
//! column names are reserved: `label` (ground truth, never used for fitting)
//! and `flow_id` / `id` (opaque sample identifiers).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const LABEL_COLUMN: &str = "label";
pub const ID_COLUMNS: [&str; 2] = ["flow_id", "id"];

/// A `T x D` matrix of feature vectors with optional labels and ids.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBatch {
    dim: usize,
    values: Vec<f64>,
    feature_names: Vec<String>,
    labels: Option<Vec<String>>,
    ids: Option<Vec<String>>,
}

impl DataBatch {
    /// Builds a batch from rows, rejecting ragged or non-finite input.
    pub fn from_rows(rows: &[Vec<f64>], dim: usize) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        row: i + 1,
                        column: default_name(j),
                    });
                }
            }
            values.extend_from_slice(row);
        }
        Ok(Self {
            dim,
            values,
            feature_names: (0..dim).map(default_name).collect(),
            labels: None,
            ids: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} samples",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.len() {
            return Err(Error::InvalidArgument(format!("{} ids for {} samples", ids.len(), self.len())));
        }
        self.ids = Some(ids);
        Ok(self)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: names.len(),
            });
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.values.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim.max(1))
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Interleaved `(x_j, x_k)` pairs for every row.
    pub fn column_pair(&self, j: usize, k: usize) -> Vec<[f64; 2]> {
        self.rows().map(|r| [r[j], r[k]]).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    /// Sample identifier: the id column when present, else the row index.
    pub fn sample_id(&self, i: usize) -> String {
        match &self.ids {
            Some(ids) => ids[i].clone(),
            None => i.to_string(),
        }
    }

    /// Rows at `indices`, in that order, carrying labels and ids along.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            dim: self.dim,
            values,
            feature_names: self.feature_names.clone(),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i].clone()).collect()),
            ids: self.ids.as_ref().map(|d| indices.iter().map(|&i| d[i].clone()).collect()),
        }
    }

    /// Drops labels so downstream fitting cannot see them.
    pub fn without_labels(&self) -> Self {
        Self {
            labels: None,
            ..self.clone()
        }
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut label_col = None;
        let mut id_col = None;
        let mut feature_cols = Vec::new();
        for (c, name) in headers.iter().enumerate() {
            let name = name.trim();
            if name == LABEL_COLUMN {
                label_col = Some(c);
            } else if ID_COLUMNS.contains(&name) && id_col.is_none() {
                id_col = Some(c);
            } else {
                feature_cols.push((c, name.to_string()));
            }
        }
        let dim = feature_cols.len();
        if dim == 0 {
            return Err(Error::DataQuality("csv has no feature columns".into()));
        }
        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut ids = Vec::new();
        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            for (c, name) in &feature_cols {
                let cell = record.get(*c).unwrap_or("").trim();
                let v: f64 = cell.parse().map_err(|_| {
                    Error::DataQuality(format!("row {}, column {name}: not a number: {cell:?}", r + 1))
                })?;
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        row: r + 1,
                        column: name.clone(),
                    });
                }
                values.push(v);
            }
            if let Some(c) = label_col {
                labels.push(record.get(c).unwrap_or("").trim().to_string());
            }
            if let Some(c) = id_col {
                ids.push(record.get(c).unwrap_or("").trim().to_string());
            }
        }
        Ok(Self {
            dim,
            values,
            feature_names: feature_cols.into_iter().map(|(_, n)| n).collect(),
            labels: label_col.map(|_| labels),
            ids: id_col.map(|_| ids),
        })
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }

    /// Writes feature columns, then `flow_id` and `label` when present.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        if self.ids.is_some() {
            header.push(ID_COLUMNS[0]);
        }
        if self.labels.is_some() {
            header.push(LABEL_COLUMN);
        }
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            if let Some(ids) = &self.ids {
                rec.push(ids[i].clone());
            }
            if let Some(labels) = &self.labels {
                rec.push(labels[i].clone());
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

fn default_name(j: usize) -> String {
    format!("x{}", j + 1)
}

//! Latent CSV files: an `id` column, feature columns `v0, v1, ...` and any
//! number of numeric label columns.

use std::path::Path;

use equilens::Matrix;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct LatentTable {
    pub ids: Vec<u64>,
    pub features: Vec<Vec<f64>>,
    /// Label columns in file order.
    pub labels: Vec<(String, Vec<f64>)>,
}

fn feature_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('v')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

impl LatentTable {
    pub fn new(features: Vec<Vec<f64>>) -> Self {
        Self {
            ids: (0..features.len() as u64).collect(),
            features,
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn push_label(&mut self, name: &str, values: Vec<f64>) {
        self.labels.push((name.to_string(), values));
    }

    pub fn label(&self, name: &str) -> CliResult<&[f64]> {
        self.labels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| {
                let known: Vec<&str> = self.labels.iter().map(|(n, _)| n.as_str()).collect();
                CliError::user(format!("no label column '{name}' (available: {})", known.join(", ")))
            })
    }

    pub fn matrix(&self) -> CliResult<Matrix> {
        Ok(Matrix::from_rows(&self.features)?)
    }

    /// Same ids and labels with new features.
    pub fn with_features(&self, features: Vec<Vec<f64>>) -> Self {
        Self {
            ids: self.ids.clone(),
            features,
            labels: self.labels.clone(),
        }
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            ids: rows.iter().map(|&r| self.ids[r]).collect(),
            features: rows.iter().map(|&r| self.features[r].clone()).collect(),
            labels: self
                .labels
                .iter()
                .map(|(n, v)| (n.clone(), rows.iter().map(|&r| v[r]).collect()))
                .collect(),
        }
    }

    /// Row index of `id`.
    pub fn row_of(&self, id: u64) -> CliResult<usize> {
        self.ids
            .iter()
            .position(|&i| i == id)
            .ok_or_else(|| CliError::user(format!("no row with id {id}")))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        Self::parse(&crate::io::read_text(path)?).map_err(|e| e.at(path))
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let id_col = header.iter().position(|h| h == "id");
        let mut feature_cols: Vec<(usize, usize)> = header
            .iter()
            .enumerate()
            .filter_map(|(c, h)| feature_index(h).map(|i| (i, c)))
            .collect();
        feature_cols.sort();
        if feature_cols.is_empty() {
            return Err(CliError::user("header has no feature columns (v0, v1, ...)"));
        }
        if let Some(pos) = feature_cols.iter().enumerate().position(|(want, &(got, _))| want != got) {
            return Err(CliError::user(format!("feature columns skip v{pos}")));
        }
        let label_cols: Vec<usize> = (0..header.len())
            .filter(|&c| Some(c) != id_col && feature_index(&header[c]).is_none())
            .collect();

        let mut table = Self {
            ids: Vec::new(),
            features: Vec::new(),
            labels: label_cols.iter().map(|&c| (header[c].clone(), Vec::new())).collect(),
        };
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let line = row + 2;
            let num = |c: usize| -> CliResult<f64> {
                let raw = record.get(c).unwrap_or("");
                raw.trim().parse::<f64>().map_err(|_| {
                    CliError::user(format!("line {line}, column '{}': cannot parse '{raw}' as a number", header[c]))
                })
            };
            let id = match id_col {
                Some(c) => record
                    .get(c)
                    .unwrap_or("")
                    .trim()
                    .parse()
                    .map_err(|_| CliError::user(format!("line {line}: id must be a non-negative integer")))?,
                None => row as u64,
            };
            table.ids.push(id);
            table
                .features
                .push(feature_cols.iter().map(|&(_, c)| num(c)).collect::<CliResult<_>>()?);
            for (slot, &c) in label_cols.iter().enumerate() {
                table.labels[slot].1.push(num(c)?);
            }
        }
        Ok(table)
    }

    pub fn to_csv(&self) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id".to_string()];
        header.extend((0..self.dim()).map(|i| format!("v{i}")));
        header.extend(self.labels.iter().map(|(n, _)| n.clone()));
        w.write_record(&header)?;
        for r in 0..self.len() {
            let mut rec = vec![self.ids[r].to_string()];
            rec.extend(self.features[r].iter().map(|v| v.to_string()));
            rec.extend(self.labels.iter().map(|(_, v)| v[r].to_string()));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Internal(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        crate::io::write_text(path, &self.to_csv()?)
    }
}

/// Writes rows of displayable cells under a header.
pub fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
    crate::io::write_text(path, &String::from_utf8(bytes).map_err(|e| CliError::Internal(e.to_string()))?)
}

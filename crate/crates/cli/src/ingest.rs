//! CSV ingestion for regression datasets and raw samples.

use std::io::Read;
use std::path::Path;

use pbi_core::Matrix;

use crate::error::CliError;

/// Which columns to read and how to treat them.
#[derive(Clone, Debug, PartialEq)]
pub struct Schema {
    pub outcome: String,
    /// `None` takes every column except the outcome.
    pub covariates: Option<Vec<String>>,
    pub dummies: Vec<String>,
    /// Also treat columns whose values are all 0 or 1 as dummies.
    pub auto_dummies: bool,
    pub standardize: bool,
}

impl Schema {
    pub fn outcome_only(outcome: &str) -> Self {
        Schema { outcome: outcome.to_owned(), covariates: Some(Vec::new()), dummies: Vec::new(), auto_dummies: false, standardize: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Dummy,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ColumnInfo {
    pub name: String,
    pub kind: ColumnKind,
    pub standardized: bool,
    /// Mean and standard deviation before standardization.
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub outcome: Vec<f64>,
    /// One row per retained observation, columns as in `columns`.
    pub covariates: Vec<Vec<f64>>,
    pub columns: Vec<ColumnInfo>,
    /// Rows dropped because some selected cell was missing.
    pub dropped_rows: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.outcome.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcome.is_empty()
    }

    /// Covariates with a leading intercept column.
    pub fn design_with_intercept(&self) -> Result<Matrix, CliError> {
        let d = self.columns.len() + 1;
        let mut data = Vec::with_capacity(self.len() * d);
        for row in &self.covariates {
            data.push(1.0);
            data.extend_from_slice(row);
        }
        Ok(Matrix::from_row_major(self.len(), d, data)?)
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "na" | "N/A" | "NaN" | "nan" | "null" | ".")
}

pub fn ingest_csv(path: &Path, schema: &Schema) -> Result<Dataset, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    ingest_reader(file, schema, &path.display().to_string())
}

/// Reads a headed CSV from any reader; `source` names it in error messages.
pub fn ingest_reader<R: Read>(reader: R, schema: &Schema, source: &str) -> Result<Dataset, CliError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers().map_err(|e| CliError::data(format!("{source}: cannot read header: {e}")))?.iter().map(str::to_owned).collect();
    let find = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| CliError::data(format!("{source}: missing column `{name}`")));
    let outcome_idx = find(&schema.outcome)?;
    let names: Vec<String> = match &schema.covariates {
        Some(c) => c.clone(),
        None => headers.iter().filter(|h| **h != schema.outcome).cloned().collect(),
    };
    let idx: Vec<usize> = names.iter().map(|n| find(n)).collect::<Result<_, _>>()?;
    for d in &schema.dummies {
        if !names.contains(d) {
            return Err(CliError::data(format!("{source}: dummy column `{d}` is not a selected covariate")));
        }
    }

    let mut outcome = Vec::new();
    let mut rows = Vec::new();
    let mut dropped = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::data(format!("{source}: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        let cells: Vec<&str> = std::iter::once(outcome_idx).chain(idx.iter().copied()).map(|i| record.get(i).unwrap_or("")).collect();
        if cells.iter().any(|c| is_missing(c)) {
            dropped += 1;
            continue;
        }
        let mut parsed = Vec::with_capacity(cells.len());
        for (k, cell) in cells.iter().enumerate() {
            let col = if k == 0 { &schema.outcome } else { &names[k - 1] };
            let v: f64 = cell.parse().map_err(|_| CliError::data(format!("{source}: line {line}, column `{col}`: cannot parse `{cell}` as a number")))?;
            if !v.is_finite() {
                return Err(CliError::data(format!("{source}: line {line}, column `{col}`: non-finite value `{cell}`")));
            }
            parsed.push(v);
        }
        outcome.push(parsed[0]);
        rows.push(parsed[1..].to_vec());
    }
    if outcome.is_empty() {
        return Err(CliError::data(format!("{source}: no complete rows")));
    }

    let m = rows.len() as f64;
    let mut columns = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / m;
        let sd = (rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / m).sqrt();
        let binary = rows.iter().all(|r| r[j] == 0.0 || r[j] == 1.0);
        let kind = if schema.dummies.contains(name) || (schema.auto_dummies && binary) { ColumnKind::Dummy } else { ColumnKind::Continuous };
        let standardized = schema.standardize && kind == ColumnKind::Continuous;
        if standardized {
            if !(sd > 0.0) {
                return Err(CliError::data(format!("{source}: column `{name}` has zero variance, cannot standardize")));
            }
            for r in &mut rows {
                r[j] = (r[j] - mean) / sd;
            }
        }
        columns.push(ColumnInfo { name: name.clone(), kind, standardized, mean, sd });
    }
    Ok(Dataset { outcome, covariates: rows, columns, dropped_rows: dropped })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema { outcome: "y".into(), covariates: None, dummies: Vec::new(), auto_dummies: true, standardize: true }
    }

    #[test]
    fn toy_csv_is_standardized() {
        let csv = "y,a,b\n1.0,2.0,10\n2.0,4.0,20\n3.0,9.0,60\n";
        let d = ingest_reader(csv.as_bytes(), &schema(), "toy").unwrap();
        assert_eq!(d.len(), 3);
        for j in 0..2 {
            let col: Vec<f64> = d.covariates.iter().map(|r| r[j]).collect();
            let mean = col.iter().sum::<f64>() / 3.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
        assert_eq!(d.outcome, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn missing_rows_dropped_and_dummies_kept() {
        let csv = "y,a,g\n1,0.5,1\n2,,0\nNA,3,1\n4,1.5,0\n5,2.5,1\n";
        let d = ingest_reader(csv.as_bytes(), &schema(), "toy").unwrap();
        assert_eq!(d.dropped_rows, 2);
        assert_eq!(d.columns[1].kind, ColumnKind::Dummy);
        assert_eq!(d.covariates.iter().map(|r| r[1]).collect::<Vec<_>>(), vec![1.0, 0.0, 1.0]);
        let x = d.design_with_intercept().unwrap();
        assert_eq!((x.rows(), x.cols()), (3, 3));
        assert_eq!(x.row(0)[0], 1.0);
    }

    #[test]
    fn bad_cell_is_located() {
        let csv = "y,a\n1,2\n2,abc\n";
        let err = ingest_reader(csv.as_bytes(), &schema(), "toy").unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("`a`") && err.contains("abc"), "{err}");
    }

    #[test]
    fn constant_continuous_column_rejected() {
        let csv = "y,a\n1,2\n2,2\n3,2\n";
        let err = ingest_reader(csv.as_bytes(), &schema(), "toy").unwrap_err();
        assert!(err.to_string().contains("zero variance, cannot standardize"));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn missing_column_named() {
        let s = Schema { outcome: "z".into(), ..schema() };
        let err = ingest_reader("y,a\n1,2\n".as_bytes(), &s, "toy").unwrap_err().to_string();
        assert!(err.contains("missing column `z`"));
    }
}

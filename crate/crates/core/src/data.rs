//! Column-major datasets, CSV ingestion and per-feature sort orders.

use std::path::Path;

use crate::error::{Error, Result};

/// Dense numeric features stored one column after another.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let n_cols = columns.len();
        let n_rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::domain("feature columns have unequal lengths"));
        }
        let mut values = Vec::with_capacity(n_rows * n_cols);
        for c in columns {
            values.extend(c);
        }
        Ok(FeatureMatrix {
            n_rows,
            n_cols,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::domain("feature rows have unequal lengths"));
        }
        let columns = (0..n_cols)
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect();
        Self::from_columns(columns)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_rows..(j + 1) * self.n_rows]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[col * self.n_rows + row]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        (0..self.n_cols).map(|j| self.get(row, j)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: FeatureMatrix,
    response: Vec<f64>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: FeatureMatrix, response: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        if features.n_rows() == 0 || features.n_cols() == 0 {
            return Err(Error::domain("dataset needs at least one row and one feature"));
        }
        if response.len() != features.n_rows() {
            return Err(Error::domain(format!(
                "response has {} values but features have {} rows",
                response.len(),
                features.n_rows()
            )));
        }
        if feature_names.len() != features.n_cols() {
            return Err(Error::domain("feature name count differs from column count"));
        }
        if features.values.iter().chain(&response).any(|v| !v.is_finite()) {
            return Err(Error::domain("dataset contains non-finite values"));
        }
        Ok(Dataset {
            features,
            response,
            feature_names,
        })
    }

    /// Builds a dataset with generated names `x0, x1, ...`.
    pub fn from_columns(columns: Vec<Vec<f64>>, response: Vec<f64>) -> Result<Self> {
        let names = (0..columns.len()).map(|j| format!("x{j}")).collect();
        Self::new(FeatureMatrix::from_columns(columns)?, response, names)
    }

    pub fn n(&self) -> usize {
        self.features.n_rows()
    }

    pub fn m(&self) -> usize {
        self.features.n_cols()
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn column(&self, j: usize) -> &[f64] {
        self.features.column(j)
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }
}

struct RawTable {
    header: Vec<String>,
    columns: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e, 1))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut columns = vec![Vec::new(); header.len()];
    for (i, record) in reader.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let record = record.map_err(|e| csv_error(path, e, line))?;
        if record.len() != header.len() {
            return Err(Error::Parse {
                row: line,
                column: header.get(record.len()).cloned().unwrap_or_default(),
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                row: line,
                column: header[j].clone(),
                message: format!("cannot parse `{cell}` as a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    column: header[j].clone(),
                    message: format!("non-finite value `{cell}`"),
                });
            }
            columns[j].push(value);
        }
    }
    Ok(RawTable { header, columns })
}

fn csv_error(path: &Path, e: csv::Error, line: usize) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::io(path, io);
        }
        unreachable!()
    }
    Error::Parse {
        row: line,
        column: String::new(),
        message: e.to_string(),
    }
}

fn find_column(header: &[String], name: &str) -> Result<Option<usize>> {
    let hits: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.as_str() == name)
        .map(|(j, _)| j)
        .collect();
    match hits.as_slice() {
        [] => Ok(None),
        [j] => Ok(Some(*j)),
        _ => Err(Error::Ambiguous(name.to_owned())),
    }
}

/// Reads a headed CSV file, using `target_column` as the response and every
/// other column, in file order, as a feature.
pub fn load_csv(path: impl AsRef<Path>, target_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let RawTable { header, mut columns } = read_table(path)?;
    let target = find_column(&header, target_column)?
        .ok_or_else(|| Error::MissingColumn(target_column.to_owned()))?;
    let response = columns.remove(target);
    let names: Vec<String> = header
        .into_iter()
        .enumerate()
        .filter(|&(j, _)| j != target)
        .map(|(_, h)| h)
        .collect();
    if response.is_empty() {
        return Err(Error::domain(format!("{} has no data rows", path.display())));
    }
    Dataset::new(FeatureMatrix::from_columns(columns)?, response, names)
}

/// Reads a headed CSV of features only. If `drop_column` names a header
/// column, that column is skipped.
pub fn load_feature_csv(path: impl AsRef<Path>, drop_column: Option<&str>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let RawTable { header, mut columns } = read_table(path)?;
    if let Some(name) = drop_column {
        if let Some(j) = find_column(&header, name)? {
            columns.remove(j);
        }
    }
    FeatureMatrix::from_columns(columns)
}

/// Per-feature permutations of the rows, ascending by feature value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortedIndex {
    order: Vec<Vec<u32>>,
}

impl SortedIndex {
    pub fn order(&self, j: usize) -> &[u32] {
        &self.order[j]
    }

    pub fn n_features(&self) -> usize {
        self.order.len()
    }
}

/// Stable ascending sort of every feature column.
pub fn build_sorted_index(d: &Dataset) -> SortedIndex {
    let order = (0..d.m())
        .map(|j| {
            let col = d.column(j);
            let mut idx: Vec<u32> = (0..d.n() as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            idx
        })
        .collect();
    SortedIndex { order }
}

/// Dense membership flags for a node's rows.
pub(crate) fn row_mask(n: usize, rows: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; n];
    for &r in rows {
        mask[r] = true;
    }
    mask
}

/// Number of candidate split points of feature `j` among `node_rows`, i.e.
/// the count of distinct values minus one.
pub fn distinct_split_count(d: &Dataset, index: &SortedIndex, node_rows: &[usize], j: usize) -> usize {
    let mask = row_mask(d.n(), node_rows);
    let col = d.column(j);
    let mut prev: Option<f64> = None;
    let mut distinct = 0usize;
    for &r in index.order(j) {
        let r = r as usize;
        if !mask[r] {
            continue;
        }
        if prev != Some(col[r]) {
            distinct += 1;
            prev = Some(col[r]);
        }
    }
    distinct.saturating_sub(1)
}

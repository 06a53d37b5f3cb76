use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::schema::{Column, ColumnKind, KindTag, SchemaSpec, TableSchema, MISSING_CATEGORY};
use crate::error::{Error, Result};

/// Column-major storage. Categorical cells hold indices into the schema's
/// category list, so every stored value is in-schema by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical(Vec<u32>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical(v) => {
                ColumnData::Categorical(rows.iter().map(|&r| v[r]).collect())
            }
        }
    }
}

/// A single cell value, used when building tables row by row.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Num(f64),
    Cat(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    schema: Arc<TableSchema>,
    columns: Vec<ColumnData>,
    n_rows: usize,
}

impl RawTable {
    pub fn from_columns(schema: Arc<TableSchema>, columns: Vec<ColumnData>) -> Result<Self> {
        if columns.len() != schema.len() {
            return Err(Error::Schema(format!(
                "expected {} columns, got {}",
                schema.len(),
                columns.len()
            )));
        }
        let n_rows = columns.first().map(ColumnData::len).unwrap_or(0);
        for (col, data) in schema.columns.iter().zip(&columns) {
            if data.len() != n_rows {
                return Err(Error::Schema(format!(
                    "column '{}' has {} rows, expected {n_rows}",
                    col.name,
                    data.len()
                )));
            }
            match (&col.kind, data) {
                (ColumnKind::Numerical { .. }, ColumnData::Numeric(_)) => {}
                (ColumnKind::Categorical { categories }, ColumnData::Categorical(codes)) => {
                    if let Some(bad) = codes.iter().find(|&&c| c as usize >= categories.len()) {
                        return Err(Error::Schema(format!(
                            "column '{}' holds code {bad} outside {} categories",
                            col.name,
                            categories.len()
                        )));
                    }
                }
                _ => {
                    return Err(Error::Schema(format!(
                        "column '{}' data kind does not match schema",
                        col.name
                    )))
                }
            }
        }
        Ok(Self {
            schema,
            columns,
            n_rows,
        })
    }

    /// Builds a table from row records, mapping category strings through the
    /// schema. Unknown categories are a schema error.
    pub fn from_rows(schema: Arc<TableSchema>, rows: &[Vec<Value>]) -> Result<Self> {
        let lookups: Vec<Option<HashMap<&str, u32>>> = schema
            .columns
            .iter()
            .map(|c| {
                c.categories().map(|cats| {
                    cats.iter()
                        .enumerate()
                        .map(|(i, s)| (s.as_str(), i as u32))
                        .collect()
                })
            })
            .collect();
        let mut columns: Vec<ColumnData> = schema
            .columns
            .iter()
            .map(|c| {
                if c.is_numerical() {
                    ColumnData::Numeric(Vec::with_capacity(rows.len()))
                } else {
                    ColumnData::Categorical(Vec::with_capacity(rows.len()))
                }
            })
            .collect();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(Error::Schema(format!(
                    "row {r} has {} values, schema has {} columns",
                    row.len(),
                    schema.len()
                )));
            }
            for (c, value) in row.iter().enumerate() {
                match (&mut columns[c], value) {
                    (ColumnData::Numeric(v), Value::Num(x)) => v.push(*x),
                    (ColumnData::Categorical(v), Value::Cat(s)) => {
                        let code = lookups[c].as_ref().and_then(|m| m.get(s.as_str())).ok_or_else(
                            || {
                                Error::Schema(format!(
                                    "row {r}: category '{s}' not in column '{}'",
                                    schema.columns[c].name
                                ))
                            },
                        )?;
                        v.push(*code);
                    }
                    _ => {
                        return Err(Error::Schema(format!(
                            "row {r}: value kind mismatch in column '{}'",
                            schema.columns[c].name
                        )))
                    }
                }
            }
        }
        Self::from_columns(schema, columns)
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<TableSchema> {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    pub fn columns(&self) -> &[ColumnData] {
        &self.columns
    }

    pub fn column(&self, index: usize) -> &ColumnData {
        &self.columns[index]
    }

    pub fn numeric(&self, index: usize) -> Option<&[f64]> {
        match &self.columns[index] {
            ColumnData::Numeric(v) => Some(v),
            ColumnData::Categorical(_) => None,
        }
    }

    pub fn codes(&self, index: usize) -> Option<&[u32]> {
        match &self.columns[index] {
            ColumnData::Categorical(v) => Some(v),
            ColumnData::Numeric(_) => None,
        }
    }

    pub fn value(&self, row: usize, col: usize) -> Value {
        match &self.columns[col] {
            ColumnData::Numeric(v) => Value::Num(v[row]),
            ColumnData::Categorical(v) => {
                let cats = self.schema.columns[col].categories().expect("categorical");
                Value::Cat(cats[v[row] as usize].clone())
            }
        }
    }

    pub fn row(&self, row: usize) -> Vec<Value> {
        (0..self.columns.len()).map(|c| self.value(row, c)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> RawTable {
        RawTable {
            schema: Arc::clone(&self.schema),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            n_rows: rows.len(),
        }
    }

    /// Rows of `self` followed by rows of `other`; schemas must be equal.
    pub fn concat(&self, other: &RawTable) -> Result<RawTable> {
        if self.schema != other.schema {
            return Err(Error::Schema("cannot concatenate tables with different schemas".into()));
        }
        let columns = self
            .columns
            .iter()
            .zip(&other.columns)
            .map(|(a, b)| match (a, b) {
                (ColumnData::Numeric(x), ColumnData::Numeric(y)) => {
                    ColumnData::Numeric(x.iter().chain(y).copied().collect())
                }
                (ColumnData::Categorical(x), ColumnData::Categorical(y)) => {
                    ColumnData::Categorical(x.iter().chain(y).copied().collect())
                }
                _ => unreachable!("schemas are equal"),
            })
            .collect();
        Ok(RawTable {
            schema: Arc::clone(&self.schema),
            columns,
            n_rows: self.n_rows + other.n_rows,
        })
    }

    /// Projection onto the non-identifier columns.
    pub fn features_only(&self) -> RawTable {
        let keep = self.schema.feature_indices();
        if keep.len() == self.schema.len() {
            return self.clone();
        }
        RawTable {
            schema: Arc::new(self.schema.feature_schema()),
            columns: keep.iter().map(|&i| self.columns[i].clone()).collect(),
            n_rows: self.n_rows,
        }
    }

    /// Same data under a replacement column buffer.
    pub fn with_column(&self, index: usize, data: ColumnData) -> Result<RawTable> {
        let mut columns = self.columns.clone();
        columns[index] = data;
        RawTable::from_columns(Arc::clone(&self.schema), columns)
    }

    /// Stable content hash over schema and values.
    pub fn fingerprint(&self) -> String {
        let mut bytes = serde_json::to_vec(&*self.schema).expect("schema serializes");
        for col in &self.columns {
            match col {
                ColumnData::Numeric(v) => v.iter().for_each(|x| bytes.extend(x.to_le_bytes())),
                ColumnData::Categorical(v) => v.iter().for_each(|x| bytes.extend(x.to_le_bytes())),
            }
        }
        crate::seed::hex_digest(&bytes)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(self.schema.columns.iter().map(|c| c.name.as_str()))?;
        let mut record = Vec::with_capacity(self.columns.len());
        for r in 0..self.n_rows {
            record.clear();
            for (c, col) in self.columns.iter().enumerate() {
                record.push(match col {
                    ColumnData::Numeric(v) => format!("{}", v[r]),
                    ColumnData::Categorical(v) => {
                        self.schema.columns[c].categories().expect("categorical")[v[r] as usize]
                            .clone()
                    }
                });
            }
            writer.write_record(&record)?;
        }
        writer
            .into_inner()
            .map_err(|e| Error::Io {
                path: "<memory>".into(),
                source: e.into_error(),
            })
    }
}

/// Parses CSV bytes (header row, RFC-4180 quoting) against a schema spec.
///
/// Empty categorical cells become [`MISSING_CATEGORY`]; empty numeric cells
/// are imputed as 0. Other strings such as `"?"` or `"NaN"` in categorical
/// columns are kept as categories of their own.
pub fn ingest(csv_bytes: &[u8], spec: &SchemaSpec) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(csv_bytes);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let expected: Vec<&str> = spec.columns.iter().map(|c| c.name.as_str()).collect();
    if header.len() != expected.len() {
        return Err(Error::Schema(format!(
            "header has {} columns, schema declares {}",
            header.len(),
            expected.len()
        )));
    }
    // position in file of each spec column
    let mut positions = Vec::with_capacity(expected.len());
    for name in &expected {
        let pos = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' missing from CSV header")))?;
        positions.push(pos);
    }

    let mut numeric: Vec<Vec<f64>> = vec![Vec::new(); expected.len()];
    let mut strings: Vec<Vec<String>> = vec![Vec::new(); expected.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::Schema(format!(
                "row {row} has {} fields, expected {}",
                record.len(),
                header.len()
            )));
        }
        for (c, col) in spec.columns.iter().enumerate() {
            let raw = &record[positions[c]];
            match col.kind {
                KindTag::Numerical => {
                    let trimmed = raw.trim();
                    let value = if trimmed.is_empty() {
                        0.0
                    } else {
                        trimmed.parse::<f64>().map_err(|e| Error::Parse {
                            row,
                            message: format!("column '{}': '{trimmed}': {e}", col.name),
                        })?
                    };
                    if !value.is_finite() {
                        return Err(Error::Parse {
                            row,
                            message: format!("column '{}': non-finite value '{trimmed}'", col.name),
                        });
                    }
                    numeric[c].push(value);
                }
                KindTag::Categorical => {
                    let value = if raw.is_empty() {
                        MISSING_CATEGORY.to_string()
                    } else {
                        raw.to_string()
                    };
                    strings[c].push(value);
                }
            }
        }
    }

    let mut columns = Vec::with_capacity(spec.columns.len());
    let mut data = Vec::with_capacity(spec.columns.len());
    for (c, col) in spec.columns.iter().enumerate() {
        match col.kind {
            KindTag::Numerical => {
                let values = std::mem::take(&mut numeric[c]);
                let (min, max) = match col.range {
                    Some([a, b]) => (a, b),
                    None => observed_range(&values),
                };
                columns.push(Column {
                    name: col.name.clone(),
                    kind: ColumnKind::Numerical { min, max },
                    id_role: col.id_role,
                });
                data.push(ColumnData::Numeric(values));
            }
            KindTag::Categorical => {
                let values = std::mem::take(&mut strings[c]);
                let categories = match &col.categories {
                    Some(cats) => cats.clone(),
                    None => values
                        .iter()
                        .cloned()
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .collect(),
                };
                let categories = if categories.is_empty() {
                    vec![MISSING_CATEGORY.to_string()]
                } else {
                    categories
                };
                let lookup: HashMap<&str, u32> = categories
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (s.as_str(), i as u32))
                    .collect();
                let mut codes = Vec::with_capacity(values.len());
                for (row, v) in values.iter().enumerate() {
                    let code = lookup.get(v.as_str()).ok_or_else(|| {
                        Error::Schema(format!(
                            "row {row}: category '{v}' not declared for column '{}'",
                            col.name
                        ))
                    })?;
                    codes.push(*code);
                }
                columns.push(Column {
                    name: col.name.clone(),
                    kind: ColumnKind::Categorical { categories },
                    id_role: col.id_role,
                });
                data.push(ColumnData::Categorical(codes));
            }
        }
    }
    let schema = TableSchema::new(columns)?;
    RawTable::from_columns(Arc::new(schema), data)
}

fn observed_range(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

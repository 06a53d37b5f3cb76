use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::schema::{ColumnKind, TableSchema};
use super::table::{ColumnData, RawTable};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Ordinal,
    OneHot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericNorm {
    None,
    #[serde(rename = "minmax_01")]
    MinMax01,
    #[serde(rename = "minmax_pm1")]
    MinMaxPm1,
}

impl NumericNorm {
    fn forward(self, x: f64, min: f64, max: f64) -> f64 {
        let span = max - min;
        match self {
            NumericNorm::None => x,
            NumericNorm::MinMax01 if span > 0.0 => (x - min) / span,
            NumericNorm::MinMax01 => 0.5,
            NumericNorm::MinMaxPm1 if span > 0.0 => 2.0 * (x - min) / span - 1.0,
            NumericNorm::MinMaxPm1 => 0.0,
        }
    }

    fn inverse(self, y: f64, min: f64, max: f64) -> f64 {
        let span = max - min;
        match self {
            NumericNorm::None => y,
            NumericNorm::MinMax01 => min + y * span,
            NumericNorm::MinMaxPm1 => min + (y + 1.0) * 0.5 * span,
        }
    }
}

/// Contiguous matrix columns holding one table column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnBlock {
    pub start: usize,
    pub len: usize,
}

impl ColumnBlock {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Numeric matrix view of the feature columns of a table. Identifier columns
/// are dropped, so `schema` is the feature schema and `blocks[i]` holds
/// `schema.columns[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedTable {
    pub schema: Arc<TableSchema>,
    pub encoding: Encoding,
    pub norm: NumericNorm,
    pub matrix: Array2<f64>,
    pub blocks: Vec<ColumnBlock>,
}

/// The coordinate system an encoded matrix lives in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataContext {
    pub schema: TableSchema,
    pub encoding: Encoding,
    pub norm: NumericNorm,
}

impl DataContext {
    pub fn dim(&self) -> usize {
        block_layout(&self.schema, self.encoding).1
    }
}

fn block_layout(schema: &TableSchema, encoding: Encoding) -> (Vec<ColumnBlock>, usize) {
    let mut blocks = Vec::with_capacity(schema.len());
    let mut offset = 0;
    for col in &schema.columns {
        let len = match (&col.kind, encoding) {
            (ColumnKind::Categorical { categories }, Encoding::OneHot) => categories.len(),
            _ => 1,
        };
        blocks.push(ColumnBlock { start: offset, len });
        offset += len;
    }
    (blocks, offset)
}

/// Encodes the feature columns of `table`. Categories and ranges come from
/// the table's schema, which is resolved over the full dataset.
pub fn encode(table: &RawTable, encoding: Encoding, norm: NumericNorm) -> Result<EncodedTable> {
    let features = table.features_only();
    let schema = Arc::clone(features.schema_arc());
    let (blocks, dim) = block_layout(&schema, encoding);
    let n = features.n_rows();
    let mut matrix = Array2::zeros((n, dim));
    for (c, (col, block)) in schema.columns.iter().zip(&blocks).enumerate() {
        match (&col.kind, features.column(c)) {
            (ColumnKind::Numerical { min, max }, ColumnData::Numeric(values)) => {
                for (r, &v) in values.iter().enumerate() {
                    matrix[[r, block.start]] = norm.forward(v, *min, *max);
                }
            }
            (ColumnKind::Categorical { categories }, ColumnData::Categorical(codes)) => {
                for (r, &code) in codes.iter().enumerate() {
                    match encoding {
                        Encoding::OneHot => matrix[[r, block.start + code as usize]] = 1.0,
                        Encoding::Ordinal => matrix[[r, block.start]] = code as f64,
                    }
                }
                debug_assert!(codes.iter().all(|&c| (c as usize) < categories.len()));
            }
            _ => unreachable!("RawTable guarantees kinds match"),
        }
    }
    Ok(EncodedTable {
        schema,
        encoding,
        norm,
        matrix,
        blocks,
    })
}

/// Encodes `table` into the coordinates of `context`, translating category
/// names. A category absent from the context schema is an encoding error.
pub fn encode_in(table: &RawTable, context: &DataContext) -> Result<EncodedTable> {
    let features = table.features_only();
    if features.schema() == &context.schema {
        return encode(&features, context.encoding, context.norm);
    }
    if features.schema().len() != context.schema.len() {
        return Err(Error::Encoding(format!(
            "table has {} feature columns, context expects {}",
            features.schema().len(),
            context.schema.len()
        )));
    }
    let mut columns = Vec::with_capacity(context.schema.len());
    for (c, (target, source)) in context
        .schema
        .columns
        .iter()
        .zip(&features.schema().columns)
        .enumerate()
    {
        if target.name != source.name || target.is_numerical() != source.is_numerical() {
            return Err(Error::Encoding(format!(
                "column {c} '{}' does not match context column '{}'",
                source.name, target.name
            )));
        }
        match features.column(c) {
            ColumnData::Numeric(v) => columns.push(ColumnData::Numeric(v.clone())),
            ColumnData::Categorical(codes) => {
                let src = source.categories().expect("categorical");
                let dst = target.categories().expect("categorical");
                let mut mapped = Vec::with_capacity(codes.len());
                for &code in codes {
                    let name = &src[code as usize];
                    let pos = dst.iter().position(|d| d == name).ok_or_else(|| {
                        Error::Encoding(format!(
                            "unseen category '{name}' in column '{}'",
                            target.name
                        ))
                    })?;
                    mapped.push(pos as u32);
                }
                columns.push(ColumnData::Categorical(mapped));
            }
        }
    }
    let translated = RawTable::from_columns(Arc::new(context.schema.clone()), columns)?;
    encode(&translated, context.encoding, context.norm)
}

impl EncodedTable {
    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.matrix.row(i)
    }

    pub fn context(&self) -> DataContext {
        DataContext {
            schema: (*self.schema).clone(),
            encoding: self.encoding,
            norm: self.norm,
        }
    }

    pub fn same_space(&self, other: &EncodedTable) -> bool {
        self.encoding == other.encoding
            && self.norm == other.norm
            && self.schema == other.schema
    }

    pub fn select_rows(&self, rows: &[usize]) -> EncodedTable {
        EncodedTable {
            schema: Arc::clone(&self.schema),
            encoding: self.encoding,
            norm: self.norm,
            matrix: self.matrix.select(ndarray::Axis(0), rows),
            blocks: self.blocks.clone(),
        }
    }

    /// Wraps a matrix produced in this table's coordinates (e.g. by a sampler).
    pub fn with_matrix(context: &DataContext, matrix: Array2<f64>) -> Result<EncodedTable> {
        let (blocks, dim) = block_layout(&context.schema, context.encoding);
        if matrix.ncols() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: matrix.ncols(),
            });
        }
        Ok(EncodedTable {
            schema: Arc::new(context.schema.clone()),
            encoding: context.encoding,
            norm: context.norm,
            matrix,
            blocks,
        })
    }

    /// Inverse of [`encode`]. One-hot blocks decode by argmax (first maximum
    /// wins), ordinal codes by rounding and clamping.
    pub fn decode(&self) -> Result<RawTable> {
        let n = self.n_rows();
        let mut columns = Vec::with_capacity(self.schema.len());
        for (col, block) in self.schema.columns.iter().zip(&self.blocks) {
            match &col.kind {
                ColumnKind::Numerical { min, max } => {
                    let values = (0..n)
                        .map(|r| self.norm.inverse(self.matrix[[r, block.start]], *min, *max))
                        .collect();
                    columns.push(ColumnData::Numeric(values));
                }
                ColumnKind::Categorical { categories } => {
                    let k = categories.len();
                    let codes = (0..n)
                        .map(|r| match self.encoding {
                            Encoding::OneHot => argmax(
                                self.matrix
                                    .row(r)
                                    .slice(ndarray::s![block.start..block.start + block.len]),
                            ) as u32,
                            Encoding::Ordinal => {
                                let v = self.matrix[[r, block.start]].round();
                                v.clamp(0.0, (k - 1) as f64) as u32
                            }
                        })
                        .collect();
                    columns.push(ColumnData::Categorical(codes));
                }
            }
        }
        RawTable::from_columns(Arc::clone(&self.schema), columns)
    }

    /// Writes `<stem>.json` (manifest) and `<stem>.bin` (little-endian
    /// float32, row-major).
    pub fn save(&self, dir: &Path, stem: &str, seed: Option<u64>) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = EncodedManifest {
            format_version: 1,
            schema: (*self.schema).clone(),
            encoding: self.encoding,
            norm: self.norm,
            n_rows: self.n_rows(),
            n_cols: self.dim(),
            blocks: self.blocks.clone(),
            seed,
        };
        let path = dir.join(format!("{stem}.json"));
        fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
        let path = dir.join(format!("{stem}.bin"));
        fs::write(&path, f32_blob(self.matrix.iter().copied())).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<EncodedTable> {
        let path = dir.join(format!("{stem}.json"));
        let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: EncodedManifest = serde_json::from_slice(&text)?;
        let path = dir.join(format!("{stem}.bin"));
        let blob = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let values = read_f32_blob(&blob, manifest.n_rows * manifest.n_cols)?;
        let matrix = Array2::from_shape_vec((manifest.n_rows, manifest.n_cols), values)
            .map_err(|e| Error::Encoding(e.to_string()))?;
        let context = DataContext {
            schema: manifest.schema,
            encoding: manifest.encoding,
            norm: manifest.norm,
        };
        let table = EncodedTable::with_matrix(&context, matrix)?;
        if table.blocks != manifest.blocks {
            return Err(Error::Encoding("manifest blocks disagree with schema".into()));
        }
        Ok(table)
    }
}

#[derive(Serialize, Deserialize)]
struct EncodedManifest {
    format_version: u32,
    schema: TableSchema,
    encoding: Encoding,
    norm: NumericNorm,
    n_rows: usize,
    n_cols: usize,
    blocks: Vec<ColumnBlock>,
    seed: Option<u64>,
}

pub(crate) fn f32_blob(values: impl Iterator<Item = f64>) -> Vec<u8> {
    let mut out = Vec::new();
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub(crate) fn read_f32_blob(blob: &[u8], expected: usize) -> Result<Vec<f64>> {
    if blob.len() != expected * 4 {
        return Err(Error::Encoding(format!(
            "blob holds {} bytes, expected {}",
            blob.len(),
            expected * 4
        )));
    }
    Ok(blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

pub(crate) fn argmax(values: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

//! Table ingestion, schema handling, encoding, splits and distances.

mod distance;
mod encode;
mod schema;
mod split;
mod table;

pub use distance::{ensure_same_space, euclidean, squared, squared_to_all, squared_view};
pub use encode::{encode, encode_in, ColumnBlock, DataContext, EncodedTable, Encoding, NumericNorm};
pub(crate) use encode::{argmax, f32_blob, read_f32_blob};
pub use schema::{
    Column, ColumnKind, ColumnSpec, IdRole, KindTag, SchemaSpec, TableSchema, MISSING_CATEGORY,
};
pub use split::{make_splits, RowRole, SplitConfig, SplitPlan, TargetSplit};
pub use table::{ingest, ColumnData, RawTable, Value};

/// Encoding used for distance-based privacy metrics.
pub fn metric_space(table: &RawTable) -> crate::Result<EncodedTable> {
    encode(table, Encoding::OneHot, NumericNorm::MinMaxPm1)
}

/// Encoding used as diffusion model input.
pub fn model_space(table: &RawTable) -> crate::Result<EncodedTable> {
    encode(table, Encoding::OneHot, NumericNorm::MinMax01)
}

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Category assigned to empty categorical cells.
pub const MISSING_CATEGORY: &str = "<MISSING>";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdRole {
    #[default]
    None,
    UnitKey,
    TimeKey,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Numerical { min: f64, max: f64 },
    Categorical { categories: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
    #[serde(default)]
    pub id_role: IdRole,
}

impl Column {
    pub fn is_numerical(&self) -> bool {
        matches!(self.kind, ColumnKind::Numerical { .. })
    }

    pub fn is_id(&self) -> bool {
        self.id_role != IdRole::None
    }

    pub fn categories(&self) -> Option<&[String]> {
        match &self.kind {
            ColumnKind::Categorical { categories } => Some(categories),
            ColumnKind::Numerical { .. } => None,
        }
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        match self.kind {
            ColumnKind::Numerical { min, max } => Some((min, max)),
            ColumnKind::Categorical { .. } => None,
        }
    }
}

/// Column typing with categories and observed ranges resolved over the
/// full dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub columns: Vec<Column>,
}

impl TableSchema {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let schema = Self { columns };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        let mut units = 0;
        let mut times = 0;
        for col in &self.columns {
            if !names.insert(col.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name '{}'", col.name)));
            }
            match &col.kind {
                ColumnKind::Numerical { min, max } => {
                    if !(min <= max) {
                        return Err(Error::Schema(format!(
                            "column '{}' has min {min} > max {max}",
                            col.name
                        )));
                    }
                }
                ColumnKind::Categorical { categories } => {
                    if categories.is_empty() {
                        return Err(Error::Schema(format!(
                            "categorical column '{}' has no categories",
                            col.name
                        )));
                    }
                }
            }
            match col.id_role {
                IdRole::UnitKey => units += 1,
                IdRole::TimeKey => times += 1,
                IdRole::None => {}
            }
        }
        if units > 1 || times > 1 {
            return Err(Error::Schema(
                "at most one unit_key and one time_key column allowed".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn role_index(&self, role: IdRole) -> Option<usize> {
        self.columns.iter().position(|c| c.id_role == role)
    }

    /// Indices of non-identifier columns.
    pub fn feature_indices(&self) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|&i| !self.columns[i].is_id())
            .collect()
    }

    pub fn feature_schema(&self) -> TableSchema {
        TableSchema {
            columns: self.columns.iter().filter(|c| !c.is_id()).cloned().collect(),
        }
    }

    pub fn numeric_indices(&self) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|&i| self.columns[i].is_numerical() && !self.columns[i].is_id())
            .collect()
    }

    pub fn categorical_indices(&self) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|&i| !self.columns[i].is_numerical() && !self.columns[i].is_id())
            .collect()
    }

    /// Fully pinned spec: ingesting with it reproduces these categories and
    /// ranges instead of recomputing them from the file.
    pub fn to_spec(&self) -> SchemaSpec {
        SchemaSpec {
            columns: self
                .columns
                .iter()
                .map(|c| ColumnSpec {
                    name: c.name.clone(),
                    kind: if c.is_numerical() {
                        KindTag::Numerical
                    } else {
                        KindTag::Categorical
                    },
                    id_role: c.id_role,
                    categories: c.categories().map(<[String]>::to_vec),
                    range: c.range().map(|(a, b)| [a, b]),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindTag {
    Numerical,
    Categorical,
}

/// Column declaration used at ingest. Categories and ranges are computed from
/// the data unless pinned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: KindTag,
    #[serde(default)]
    pub id_role: IdRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaSpec {
    pub columns: Vec<ColumnSpec>,
}

impl SchemaSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

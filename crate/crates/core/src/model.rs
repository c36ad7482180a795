//! Owners, datasets and attribute schemas.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::payment::{Money, PaymentScheme};

pub type OwnerId = u64;

/// Default upper bound on an owner's maximum tolerable privacy loss.
pub const DEFAULT_EPS_CAP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

impl ColumnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Categorical => "categorical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Schema {
    columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute {:?}", c.name)));
            }
        }
        Ok(Schema { columns })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
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
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttrValue {
    Num(f64),
    Cat(String),
}

impl AttrValue {
    pub fn kind(&self) -> ColumnKind {
        match self {
            AttrValue::Num(_) => ColumnKind::Numeric,
            AttrValue::Cat(_) => ColumnKind::Categorical,
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Num(v) => write!(f, "{v}"),
            AttrValue::Cat(s) => f.write_str(s),
        }
    }
}

/// One data owner: their record, maximum tolerable privacy loss `ε̂` and the
/// payment scheme they signed up for. Attributes are positional with respect
/// to the owning [`Dataset`]'s schema.
#[derive(Debug, Clone, PartialEq)]
pub struct DataOwner {
    pub id: OwnerId,
    pub attributes: Vec<AttrValue>,
    pub eps_max: f64,
    pub scheme: PaymentScheme,
}

impl DataOwner {
    pub fn new(
        id: OwnerId,
        attributes: Vec<AttrValue>,
        eps_max: f64,
        scheme: PaymentScheme,
        eps_cap: f64,
    ) -> Result<Self> {
        if !(eps_max > 0.0 && eps_max <= eps_cap) {
            return Err(Error::domain(format!("owner {id}: eps_max must lie in (0, {eps_cap}], got {eps_max}")));
        }
        Ok(DataOwner { id, attributes, eps_max, scheme })
    }

    /// Price of buying this owner's whole `ε̂`.
    pub fn full_price(&self) -> Money {
        self.scheme.eval(self.eps_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    owners: Vec<DataOwner>,
    provenance: String,
}

impl Dataset {
    pub fn new(schema: Schema, owners: Vec<DataOwner>, provenance: impl Into<String>) -> Result<Self> {
        let mut ids = HashSet::with_capacity(owners.len());
        for owner in &owners {
            if !ids.insert(owner.id) {
                return Err(Error::Schema(format!("duplicate owner id {}", owner.id)));
            }
            if owner.attributes.len() != schema.len() {
                return Err(Error::Schema(format!(
                    "owner {} has {} attributes, schema has {}",
                    owner.id,
                    owner.attributes.len(),
                    schema.len()
                )));
            }
            for (value, column) in owner.attributes.iter().zip(schema.columns()) {
                if value.kind() != column.kind {
                    return Err(Error::Schema(format!(
                        "owner {}: attribute {:?} should be {}",
                        owner.id,
                        column.name,
                        column.kind.as_str()
                    )));
                }
            }
        }
        Ok(Dataset { schema, owners, provenance: provenance.into() })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn owners(&self) -> &[DataOwner] {
        &self.owners
    }

    pub fn owner(&self, index: usize) -> &DataOwner {
        &self.owners[index]
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.owners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owners.is_empty()
    }

    pub(crate) fn into_parts(self) -> (Schema, Vec<DataOwner>, String) {
        (self.schema, self.owners, self.provenance)
    }
}

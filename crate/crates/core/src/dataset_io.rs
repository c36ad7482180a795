//! Dataset files: a CSV table (`id,eps_max,scheme,<attributes...>`) plus a
//! JSON sidecar at `<path>.meta.json` carrying the schema, provenance, level
//! column name and `ε̂` cap. Writing what was read reproduces the same bytes.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::csv_error;
use crate::model::{AttrValue, Column, ColumnKind, DataOwner, Dataset, Schema, DEFAULT_EPS_CAP};
use crate::payment::PaymentScheme;

const FIXED_COLUMNS: [&str; 3] = ["id", "eps_max", "scheme"];
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindTag {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: KindTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub format: u32,
    pub provenance: String,
    pub level_column: Option<String>,
    pub eps_cap: f64,
    pub columns: Vec<ColumnMeta>,
}

impl DatasetMeta {
    pub fn describe(dataset: &Dataset, level_column: Option<&str>) -> Self {
        DatasetMeta {
            format: FORMAT_VERSION,
            provenance: dataset.provenance().to_owned(),
            level_column: level_column.map(str::to_owned),
            eps_cap: DEFAULT_EPS_CAP,
            columns: dataset
                .schema()
                .columns()
                .iter()
                .map(|c| ColumnMeta {
                    name: c.name.clone(),
                    kind: match c.kind {
                        ColumnKind::Numeric => KindTag::Numeric,
                        ColumnKind::Categorical => KindTag::Categorical,
                    },
                })
                .collect(),
        }
    }

    fn schema(&self) -> Result<Schema> {
        Schema::new(
            self.columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    kind: match c.kind {
                        KindTag::Numeric => ColumnKind::Numeric,
                        KindTag::Categorical => ColumnKind::Categorical,
                    },
                })
                .collect(),
        )
    }
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn parse_meta(text: &str) -> Result<DatasetMeta> {
    let meta: DatasetMeta = serde_json::from_str(text).map_err(|e| Error::Parse(format!("dataset metadata: {e}")))?;
    if meta.format != FORMAT_VERSION {
        return Err(Error::Parse(format!("unsupported dataset format {}", meta.format)));
    }
    if !(meta.eps_cap > 0.0 && meta.eps_cap.is_finite()) {
        return Err(Error::Parse(format!("eps_cap must be positive, got {}", meta.eps_cap)));
    }
    Ok(meta)
}

pub fn render_meta(meta: &DatasetMeta) -> String {
    let mut s = serde_json::to_string_pretty(meta).expect("metadata serializes");
    s.push('\n');
    s
}

/// Parses the table half of a dataset file under `meta`.
pub fn parse_table(meta: &DatasetMeta, table: &[u8]) -> Result<Dataset> {
    let schema = meta.schema()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(table);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(Error::Parse("dataset table has no header".into())),
        Some(h) => h.map_err(csv_error)?,
    };
    let expected: Vec<&str> =
        FIXED_COLUMNS.iter().copied().chain(schema.columns().iter().map(|c| c.name.as_str())).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Schema(format!("table header does not match metadata; expected {expected:?}")));
    }
    let mut owners = Vec::new();
    for record in records {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::ParseAt { line, message };
        let id: u64 = record[0].parse().map_err(|_| bad(format!("bad owner id {:?}", &record[0])))?;
        let eps: f64 = record[1].parse().map_err(|_| bad(format!("bad eps_max {:?}", &record[1])))?;
        let scheme: PaymentScheme = record[2].parse().map_err(|e: Error| bad(e.to_string()))?;
        let attributes = record
            .iter()
            .skip(FIXED_COLUMNS.len())
            .zip(schema.columns())
            .map(|(cell, col)| match col.kind {
                ColumnKind::Numeric => cell
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(AttrValue::Num)
                    .ok_or_else(|| bad(format!("bad numeric value {cell:?} for {:?}", col.name))),
                ColumnKind::Categorical => Ok(AttrValue::Cat(cell.to_owned())),
            })
            .collect::<Result<Vec<_>>>()?;
        let owner = DataOwner::new(id, attributes, eps, scheme, meta.eps_cap).map_err(|e| bad(e.to_string()))?;
        owners.push(owner);
    }
    Dataset::new(schema, owners, meta.provenance.clone())
}

pub fn render_table(dataset: &Dataset) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let header: Vec<&str> =
        FIXED_COLUMNS.iter().copied().chain(dataset.schema().columns().iter().map(|c| c.name.as_str())).collect();
    w.write_record(&header).map_err(csv_error)?;
    for o in dataset.owners() {
        let mut row = vec![o.id.to_string(), o.eps_max.to_string(), o.scheme.tag().to_owned()];
        row.extend(o.attributes.iter().map(ToString::to_string));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn read_dataset(path: &Path) -> Result<(Dataset, DatasetMeta)> {
    let meta = parse_meta(&std::fs::read_to_string(meta_path(path))?)?;
    let table = std::fs::read(path)?;
    Ok((parse_table(&meta, &table)?, meta))
}

/// Writes the table and sidecar through temporary files renamed into place.
pub fn write_dataset(path: &Path, dataset: &Dataset, meta: &DatasetMeta) -> Result<()> {
    let table = render_table(dataset)?;
    let meta_text = render_meta(meta);
    atomic_write(&meta_path(path), meta_text.as_bytes())?;
    atomic_write(path, &table)
}

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_data()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

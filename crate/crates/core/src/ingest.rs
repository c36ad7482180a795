//! Building datasets: survey files, replication and synthetic populations.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::error::{Error, Result};
use crate::model::{AttrValue, Column, ColumnKind, DataOwner, Dataset, Schema, DEFAULT_EPS_CAP};
use crate::payment::PaymentScheme;
use crate::seed::rng_from_seed;

/// Perturbation level an owner picked in the survey.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PerturbationLevel {
    VeryHigh,
    High,
    Low,
    VeryLow,
}

impl PerturbationLevel {
    pub const ALL: [PerturbationLevel; 4] =
        [PerturbationLevel::VeryHigh, PerturbationLevel::High, PerturbationLevel::Low, PerturbationLevel::VeryLow];

    /// Maximum tolerable privacy loss for the level.
    pub fn eps_max(self) -> f64 {
        match self {
            PerturbationLevel::VeryHigh => 0.1,
            PerturbationLevel::High => 0.3,
            PerturbationLevel::Low => 0.7,
            PerturbationLevel::VeryLow => 0.9,
        }
    }

    /// Conservative owners get the logarithmic scheme, liberal ones the
    /// sublinear one.
    pub fn scheme(self) -> PaymentScheme {
        match self {
            PerturbationLevel::VeryHigh | PerturbationLevel::High => PaymentScheme::TypeA,
            PerturbationLevel::Low | PerturbationLevel::VeryLow => PaymentScheme::TypeB,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            PerturbationLevel::VeryHigh => "very_high",
            PerturbationLevel::High => "high",
            PerturbationLevel::Low => "low",
            PerturbationLevel::VeryLow => "very_low",
        }
    }
}

impl fmt::Display for PerturbationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for PerturbationLevel {
    type Err = Error;

    /// Case-insensitive; spaces and hyphens count as underscores.
    fn from_str(s: &str) -> Result<Self> {
        let norm: String =
            s.trim().chars().map(|c| if c == ' ' || c == '-' { '_' } else { c.to_ascii_lowercase() }).collect();
        PerturbationLevel::ALL
            .into_iter()
            .find(|l| l.token() == norm)
            .ok_or_else(|| Error::Parse(format!("unknown perturbation level {s:?}")))
    }
}

/// Proportions of the four perturbation levels, in the order very high,
/// high, low, very low.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixSpec {
    proportions: [f64; 4],
}

impl MixSpec {
    pub fn new(proportions: [f64; 4]) -> Result<Self> {
        if proportions.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::domain(format!("mix proportions must be non-negative, got {proportions:?}")));
        }
        let total: f64 = proportions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("mix proportions must sum to 1, got {total}")));
        }
        Ok(MixSpec { proportions })
    }

    pub fn uniform() -> Self {
        MixSpec { proportions: [0.25; 4] }
    }

    pub fn proportions(&self) -> [f64; 4] {
        self.proportions
    }
}

impl Default for MixSpec {
    fn default() -> Self {
        Self::uniform()
    }
}

impl FromStr for MixSpec {
    type Err = Error;

    /// `"0.25,0.25,0.25,0.25"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::Parse(format!("a mix needs four comma-separated proportions, got {s:?}")));
        }
        let mut proportions = [0.0; 4];
        for (slot, part) in proportions.iter_mut().zip(&parts) {
            *slot = part.parse().map_err(|_| Error::Parse(format!("bad proportion {part:?}")))?;
        }
        MixSpec::new(proportions)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalAttribute {
    pub name: String,
    pub categories: Vec<(String, f64)>,
}

impl FromStr for CategoricalAttribute {
    type Err = Error;

    /// `"commute=car:0.45,transit:0.25,walk:0.15,bicycle:0.15"`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) =
            s.split_once('=').ok_or_else(|| Error::Parse(format!("expected name=category:weight,... in {s:?}")))?;
        let name = name.trim();
        if name.is_empty() {
            return Err(Error::Parse("attribute name is empty".into()));
        }
        let categories = rest
            .split(',')
            .map(|item| {
                let (cat, w) = item
                    .rsplit_once(':')
                    .ok_or_else(|| Error::Parse(format!("expected category:weight, got {item:?}")))?;
                let w: f64 = w.trim().parse().map_err(|_| Error::Parse(format!("bad weight in {item:?}")))?;
                Ok((cat.trim().to_owned(), w))
            })
            .collect::<Result<Vec<_>>>()?;
        let attr = CategoricalAttribute { name: name.to_owned(), categories };
        attr.validate()?;
        Ok(attr)
    }
}

impl CategoricalAttribute {
    fn validate(&self) -> Result<()> {
        if self.categories.is_empty() {
            return Err(Error::domain(format!("attribute {:?} has no categories", self.name)));
        }
        if self.categories.iter().any(|(_, w)| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::domain(format!("attribute {:?} has a negative weight", self.name)));
        }
        if self.categories.iter().map(|(_, w)| w).sum::<f64>() <= 0.0 {
            return Err(Error::domain(format!("attribute {:?} has zero total weight", self.name)));
        }
        Ok(())
    }
}

/// Independent categorical attributes for synthetic owners.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeModel {
    pub attributes: Vec<CategoricalAttribute>,
}

impl Default for AttributeModel {
    fn default() -> Self {
        let categories = [("car", 0.45), ("transit", 0.25), ("walk", 0.15), ("bicycle", 0.15)];
        AttributeModel {
            attributes: vec![CategoricalAttribute {
                name: "commute".into(),
                categories: categories.iter().map(|&(c, w)| (c.to_owned(), w)).collect(),
            }],
        }
    }
}

/// Parses a survey table. The level column maps to `(ε̂, scheme)`; every
/// other column becomes an attribute, numeric when all of its cells read as
/// finite numbers. Owner ids are assigned sequentially from zero.
pub fn parse_survey<R: std::io::Read>(reader: R, level_column: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(false).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Dataset::new(Schema::default(), Vec::new(), "survey"),
        Some(h) => h.map_err(csv_error)?,
    };
    let names: Vec<String> = header.iter().map(|h| h.trim().to_owned()).collect();
    let level_at = names
        .iter()
        .position(|n| n == level_column)
        .ok_or_else(|| Error::Schema(format!("missing level column {level_column:?}")))?;

    let mut levels = Vec::new();
    let mut cells: Vec<Vec<String>> = Vec::new();
    for record in records {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let token = &record[level_at];
        let level = token
            .parse::<PerturbationLevel>()
            .map_err(|_| Error::ParseAt { line, message: format!("unknown perturbation level {token:?}") })?;
        levels.push(level);
        cells.push(record.iter().enumerate().filter(|&(i, _)| i != level_at).map(|(_, v)| v.to_owned()).collect());
    }

    let attr_names: Vec<&String> = names.iter().enumerate().filter(|&(i, _)| i != level_at).map(|(_, n)| n).collect();
    let kinds: Vec<ColumnKind> = (0..attr_names.len())
        .map(|c| {
            let numeric = !cells.is_empty() && cells.iter().all(|row| parse_finite(&row[c]).is_some());
            if numeric {
                ColumnKind::Numeric
            } else {
                ColumnKind::Categorical
            }
        })
        .collect();
    let schema =
        Schema::new(attr_names.iter().zip(&kinds).map(|(n, &kind)| Column { name: (*n).clone(), kind }).collect())?;

    let owners = cells
        .into_iter()
        .zip(levels)
        .enumerate()
        .map(|(i, (row, level))| {
            let attributes = row
                .into_iter()
                .zip(&kinds)
                .map(|(v, kind)| match kind {
                    ColumnKind::Numeric => AttrValue::Num(parse_finite(&v).expect("column checked numeric")),
                    ColumnKind::Categorical => AttrValue::Cat(v),
                })
                .collect();
            DataOwner::new(i as u64, attributes, level.eps_max(), level.scheme(), DEFAULT_EPS_CAP)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(schema, owners, "survey")
}

pub fn load_survey(path: &Path, level_column: &str) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let ds = parse_survey(std::io::BufReader::new(file), level_column)?;
    let (schema, owners, _) = ds.into_parts();
    Dataset::new(schema, owners, format!("survey:{}", path.display()))
}

/// `k` copies of every owner, copy `j` of position `i` getting id `j·n + i`.
pub fn replicate(dataset: &Dataset, k: usize) -> Result<Dataset> {
    if k == 0 {
        return Err(Error::domain("replication factor must be at least 1"));
    }
    let n = dataset.len() as u64;
    let mut owners = Vec::with_capacity(dataset.len() * k);
    for copy in 0..k as u64 {
        for (i, o) in dataset.owners().iter().enumerate() {
            owners.push(DataOwner { id: copy * n + i as u64, ..o.clone() });
        }
    }
    Dataset::new(dataset.schema().clone(), owners, format!("replicated x{k} of {}", dataset.provenance()))
}

/// `n` synthetic owners with levels drawn from `mix` and attributes from
/// `model`.
pub fn synth_dataset(n: usize, mix: &MixSpec, model: &AttributeModel, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::domain("a synthetic dataset needs at least one owner"));
    }
    for a in &model.attributes {
        a.validate()?;
    }
    let schema = Schema::new(
        model.attributes.iter().map(|a| Column { name: a.name.clone(), kind: ColumnKind::Categorical }).collect(),
    )?;
    let level_dist = WeightedIndex::new(mix.proportions()).map_err(|e| Error::domain(e.to_string()))?;
    let attr_dists = model
        .attributes
        .iter()
        .map(|a| WeightedIndex::new(a.categories.iter().map(|(_, w)| *w)).map_err(|e| Error::domain(e.to_string())))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = rng_from_seed(seed);
    let owners = (0..n)
        .map(|i| {
            let level = PerturbationLevel::ALL[level_dist.sample(&mut rng)];
            let attributes = model
                .attributes
                .iter()
                .zip(&attr_dists)
                .map(|(a, d)| AttrValue::Cat(a.categories[d.sample(&mut rng)].0.clone()))
                .collect();
            DataOwner::new(i as u64, attributes, level.eps_max(), level.scheme(), DEFAULT_EPS_CAP)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(schema, owners, format!("synthetic n={n} seed={seed}"))
}

fn parse_finite(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => {
            let message = format!("{kind:?}");
            match line {
                Some(line) => Error::ParseAt { line, message },
                None => Error::Parse(message),
            }
        }
    }
}

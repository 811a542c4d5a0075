//! Labeled feature datasets, class splits and their on-disk formats.
//!
//! Binary layout (`FSDC`, little-endian):
//!
//! ```text
//! magic "FSDC" | version u32 = 1 | count u32 | dim u32
//! count × ( class_id u32 | dim × f32 )
//! ```
//!
//! CSV layout: one record per line, first column the integer class id, the
//! remaining `dim` columns decimal floats, no header row.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"FSDC";
pub const DATASET_VERSION: u32 = 1;
/// Bytes before the first record in the binary format.
pub const DATASET_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub class_id: u32,
    pub values: Vec<f32>,
}

impl FeatureVector {
    pub fn new(class_id: u32, values: Vec<f32>) -> Self {
        FeatureVector { class_id, values }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }
}

/// An immutable, validated collection of equal-length feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    records: Vec<FeatureVector>,
    nonneg: bool,
    by_class: BTreeMap<u32, Vec<usize>>,
}

impl Dataset {
    /// Validates `records` and indexes them by class.
    ///
    /// Rejects an empty record list, a zero dimension, ragged records and
    /// non-finite values.
    pub fn new(dim: usize, records: Vec<FeatureVector>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format("dataset dimension must be positive".into()));
        }
        if records.is_empty() {
            return Err(Error::Data("dataset has zero records".into()));
        }
        let mut nonneg = true;
        let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, rec) in records.iter().enumerate() {
            if rec.values.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: rec.values.len(),
                });
            }
            for &v in &rec.values {
                if !v.is_finite() {
                    return Err(Error::Data(format!("record {i} has non-finite value {v}")));
                }
                nonneg &= v >= 0.0;
            }
            by_class.entry(rec.class_id).or_default().push(i);
        }
        Ok(Dataset {
            dim,
            records,
            nonneg,
            by_class,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// True iff every stored value is `>= 0`.
    pub fn nonneg(&self) -> bool {
        self.nonneg
    }

    pub fn records(&self) -> &[FeatureVector] {
        &self.records
    }

    pub fn class_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.by_class.keys().copied()
    }

    pub fn contains_class(&self, class_id: u32) -> bool {
        self.by_class.contains_key(&class_id)
    }

    pub fn class_count(&self, class_id: u32) -> usize {
        self.by_class.get(&class_id).map_or(0, Vec::len)
    }

    /// Record indices of `class_id` in storage order.
    pub fn class_indices(&self, class_id: u32) -> Result<&[usize]> {
        self.by_class
            .get(&class_id)
            .map(Vec::as_slice)
            .ok_or(Error::MissingClass(class_id))
    }

    /// All features of one class, widened to f64.
    pub fn class_features(&self, class_id: u32) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .class_indices(class_id)?
            .iter()
            .map(|&i| self.records[i].to_f64())
            .collect())
    }

    /// Keeps only the records whose class is in `classes`.
    pub fn restrict(&self, classes: &BTreeSet<u32>) -> Result<Dataset> {
        let records = self
            .records
            .iter()
            .filter(|r| classes.contains(&r.class_id))
            .cloned()
            .collect();
        Dataset::new(self.dim, records)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Binary,
    Csv,
}

impl DataFormat {
    /// `.csv` means CSV, anything else binary.
    pub fn from_path(path: &Path) -> DataFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::Binary,
        }
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binary" | "bin" | "fsdc" => Ok(DataFormat::Binary),
            "csv" => Ok(DataFormat::Csv),
            other => Err(Error::InvalidParams(format!(
                "unknown dataset format '{other}', expected binary or csv"
            ))),
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DataFormat) -> Result<Dataset> {
    let file = BufReader::new(File::open(path)?);
    match format {
        DataFormat::Binary => read_binary(file),
        DataFormat::Csv => read_csv(file),
    }
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>, format: DataFormat) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    match format {
        DataFormat::Binary => write_binary(ds, &mut file)?,
        DataFormat::Csv => write_csv(ds, &mut file)?,
    }
    file.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(u32::from_le_bytes(buf))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("unexpected end of file".into())
    } else {
        Error::Io(e)
    }
}

pub fn read_binary(mut r: impl Read) -> Result<Dataset> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"FSDC\"",
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = read_u32(&mut r)?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let dim = read_u32(&mut r)? as usize;
    if dim == 0 {
        return Err(Error::Format("header declares zero dimension".into()));
    }
    let mut records = Vec::with_capacity(count.min(1 << 20));
    let mut buf = vec![0u8; 4 * dim];
    for _ in 0..count {
        let class_id = read_u32(&mut r)?;
        r.read_exact(&mut buf).map_err(truncated)?;
        let values = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        records.push(FeatureVector { class_id, values });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after last record".into()));
    }
    Dataset::new(dim, records)
}

pub fn write_binary(ds: &Dataset, w: &mut impl Write) -> Result<()> {
    let count = u32::try_from(ds.len()).map_err(|_| Error::Data("too many records for the binary format".into()))?;
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&count.to_le_bytes())?;
    w.write_all(&(ds.dim() as u32).to_le_bytes())?;
    for rec in ds.records() {
        w.write_all(&rec.class_id.to_le_bytes())?;
        for v in &rec.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_csv(r: impl Read) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut dim = None;
    let mut records = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        if row.len() < 2 {
            return Err(Error::Format(format!(
                "line {}: expected a class id and at least one value",
                line + 1
            )));
        }
        let d = *dim.get_or_insert(row.len() - 1);
        if row.len() - 1 != d {
            return Err(Error::Dimension {
                expected: d,
                found: row.len() - 1,
            });
        }
        let class_id = row[0]
            .parse::<u32>()
            .map_err(|e| Error::Format(format!("line {}: class id: {e}", line + 1)))?;
        let values = row
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f32>()
                    .map_err(|e| Error::Format(format!("line {}: value '{f}': {e}", line + 1)))
            })
            .collect::<Result<Vec<f32>>>()?;
        records.push(FeatureVector { class_id, values });
    }
    let dim = dim.ok_or_else(|| Error::Data("csv file has zero records".into()))?;
    Dataset::new(dim, records)
}

pub fn write_csv(ds: &Dataset, w: &mut impl Write) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    let mut row = Vec::with_capacity(ds.dim() + 1);
    for rec in ds.records() {
        row.clear();
        row.push(rec.class_id.to_string());
        row.extend(rec.values.iter().map(f32::to_string));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Disjoint base / validation / novel class sets.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    #[serde(rename = "base")]
    pub base_classes: BTreeSet<u32>,
    #[serde(rename = "val", default)]
    pub val_classes: BTreeSet<u32>,
    #[serde(rename = "novel")]
    pub novel_classes: BTreeSet<u32>,
}

impl SplitManifest {
    pub fn new(
        base: impl IntoIterator<Item = u32>,
        val: impl IntoIterator<Item = u32>,
        novel: impl IntoIterator<Item = u32>,
    ) -> Result<Self> {
        let split = SplitManifest {
            base_classes: base.into_iter().collect(),
            val_classes: val.into_iter().collect(),
            novel_classes: novel.into_iter().collect(),
        };
        split.validate()?;
        Ok(split)
    }

    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("base", &self.base_classes, "val", &self.val_classes),
            ("base", &self.base_classes, "novel", &self.novel_classes),
            ("val", &self.val_classes, "novel", &self.novel_classes),
        ];
        for (an, a, bn, b) in pairs {
            if let Some(id) = a.intersection(b).next() {
                return Err(Error::InvalidParams(format!(
                    "class {id} appears in both the {an} and {bn} splits"
                )));
            }
        }
        Ok(())
    }

    /// Every class named by the split must exist in `ds`.
    pub fn check_against(&self, ds: &Dataset) -> Result<()> {
        self.base_classes
            .iter()
            .chain(&self.val_classes)
            .chain(&self.novel_classes)
            .find(|id| !ds.contains_class(**id))
            .map_or(Ok(()), |id| Err(Error::MissingClass(*id)))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let split: SplitManifest = serde_json::from_str(s)?;
        split.validate()?;
        Ok(split)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        SplitManifest::from_json(&std::fs::read_to_string(path)?)
    }
}

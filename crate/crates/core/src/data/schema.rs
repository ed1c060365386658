use std::collections::{BTreeSet, HashMap};
use std::ops::Range;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::anomaly::AnomalyPool;
use crate::error::{Error, Result};

/// Ground-truth tag carried alongside each encoded row. Never part of the
/// feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnomalyLabel {
    None,
    Global,
    Local,
}

impl AnomalyLabel {
    pub fn is_anomaly(self) -> bool {
        self != AnomalyLabel::None
    }

    pub fn code(self) -> u8 {
        match self {
            AnomalyLabel::None => 0,
            AnomalyLabel::Global => 1,
            AnomalyLabel::Local => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(AnomalyLabel::None),
            1 => Some(AnomalyLabel::Global),
            2 => Some(AnomalyLabel::Local),
            _ => None,
        }
    }
}

/// One journal entry before encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEntry {
    pub id: usize,
    pub department: String,
    pub categorical: Vec<String>,
    pub numerical: Vec<f64>,
}

/// A parsed or synthesized table of entries with named attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryTable {
    pub department_attribute: String,
    pub categorical_names: Vec<String>,
    pub numerical_names: Vec<String>,
    pub entries: Vec<RawEntry>,
    /// Rows dropped while parsing (wrong arity, unparsable numbers, ...).
    pub skipped_rows: usize,
}

impl EntryTable {
    /// Departments in first-appearance order.
    pub fn departments(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for e in &self.entries {
            if seen.insert(e.department.as_str()) {
                out.push(e.department.clone());
            }
        }
        out
    }

    /// Entry indices grouped by department.
    pub fn by_department(&self) -> HashMap<&str, Vec<usize>> {
        let mut map: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            map.entry(e.department.as_str()).or_default().push(i);
        }
        map
    }
}

/// Positions of the one-hot segments and numeric slots inside an encoded row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentLayout {
    pub categorical: Vec<Range<usize>>,
    pub numeric_offset: usize,
    pub numeric_count: usize,
}

impl SegmentLayout {
    pub fn width(&self) -> usize {
        self.numeric_offset + self.numeric_count
    }

    pub fn numeric(&self) -> Range<usize> {
        self.numeric_offset..self.numeric_offset + self.numeric_count
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalAttribute {
    pub name: String,
    /// Sorted value dictionary; the position is the one-hot index.
    pub values: Vec<String>,
}

impl CategoricalAttribute {
    pub fn cardinality(&self) -> usize {
        self.values.len()
    }

    pub fn index_of(&self, value: &str) -> Option<usize> {
        self.values.binary_search_by(|v| v.as_str().cmp(value)).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericalAttribute {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl NumericalAttribute {
    /// Min-max scaling; a constant column maps to 0.
    pub fn scale(&self, x: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            (x - self.min) / span
        } else {
            0.0
        }
    }

    pub fn unscale(&self, s: f64) -> f64 {
        self.min + s * (self.max - self.min)
    }
}

/// Attribute roles, dictionaries and ranges; fixes the encoded vector layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub department_attribute: String,
    pub categorical: Vec<CategoricalAttribute>,
    pub numerical: Vec<NumericalAttribute>,
}

impl DatasetSchema {
    pub fn width(&self) -> usize {
        self.categorical.iter().map(|a| a.cardinality()).sum::<usize>() + self.numerical.len()
    }

    pub fn layout(&self) -> SegmentLayout {
        let mut offset = 0;
        let categorical = self
            .categorical
            .iter()
            .map(|a| {
                let r = offset..offset + a.cardinality();
                offset = r.end;
                r
            })
            .collect();
        SegmentLayout {
            categorical,
            numeric_offset: offset,
            numeric_count: self.numerical.len(),
        }
    }

    fn check_arity(&self, entry: &RawEntry) -> Result<()> {
        if entry.categorical.len() != self.categorical.len() || entry.numerical.len() != self.numerical.len() {
            return Err(Error::Encoding(format!(
                "entry {} has {}+{} attributes, schema expects {}+{}",
                entry.id,
                entry.categorical.len(),
                entry.numerical.len(),
                self.categorical.len(),
                self.numerical.len()
            )));
        }
        Ok(())
    }

    /// Encode into `out` (length `width()`); numerics are clamped to [0,1]
    /// when `clamp` is set.
    pub fn encode_into(&self, entry: &RawEntry, clamp: bool, out: &mut [f64]) -> Result<()> {
        self.check_arity(entry)?;
        debug_assert_eq!(out.len(), self.width());
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut offset = 0;
        for (attr, value) in self.categorical.iter().zip(&entry.categorical) {
            let idx = attr.index_of(value).ok_or_else(|| {
                Error::Encoding(format!("value {value:?} not in dictionary of attribute {:?}", attr.name))
            })?;
            out[offset + idx] = 1.0;
            offset += attr.cardinality();
        }
        for (attr, &x) in self.numerical.iter().zip(&entry.numerical) {
            if !x.is_finite() {
                return Err(Error::Encoding(format!("non-finite value in attribute {:?}", attr.name)));
            }
            let s = attr.scale(x);
            out[offset] = if clamp { s.clamp(0.0, 1.0) } else { s };
            offset += 1;
        }
        Ok(())
    }

    pub fn decode_row(&self, row: &[f64]) -> (Vec<String>, Vec<f64>) {
        let layout = self.layout();
        let cats = self
            .categorical
            .iter()
            .zip(&layout.categorical)
            .map(|(attr, seg)| {
                let slice = &row[seg.clone()];
                let mut best = 0;
                for (i, &v) in slice.iter().enumerate() {
                    if v > slice[best] {
                        best = i;
                    }
                }
                attr.values[best].clone()
            })
            .collect();
        let nums = self
            .numerical
            .iter()
            .zip(&row[layout.numeric()])
            .map(|(attr, &s)| attr.unscale(s))
            .collect();
        (cats, nums)
    }

    /// Order-independent fingerprint used to validate dataset caches.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

/// Build dictionaries from the regular entries plus the reserved anomaly
/// values, and numeric ranges from the regular entries only.
pub fn build_schema(table: &EntryTable, pool: &AnomalyPool) -> Result<DatasetSchema> {
    if table.entries.is_empty() {
        return Err(Error::Schema("cannot build a schema from zero entries".into()));
    }
    let n_cat = table.categorical_names.len();
    let n_num = table.numerical_names.len();
    let mut dicts: Vec<BTreeSet<String>> = vec![BTreeSet::new(); n_cat];
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); n_num];
    for e in &table.entries {
        if e.categorical.len() != n_cat || e.numerical.len() != n_num {
            return Err(Error::Schema(format!("entry {} has the wrong number of attributes", e.id)));
        }
        for (d, v) in dicts.iter_mut().zip(&e.categorical) {
            if !d.contains(v) {
                d.insert(v.clone());
            }
        }
        for (r, &x) in ranges.iter_mut().zip(&e.numerical) {
            r.0 = r.0.min(x);
            r.1 = r.1.max(x);
        }
    }
    for (j, d) in dicts.iter_mut().enumerate() {
        if let Some(values) = pool.categorical.get(j) {
            d.extend(values.iter().cloned());
        }
    }
    Ok(DatasetSchema {
        department_attribute: table.department_attribute.clone(),
        categorical: table
            .categorical_names
            .iter()
            .zip(dicts)
            .map(|(name, values)| CategoricalAttribute {
                name: name.clone(),
                values: values.into_iter().collect(),
            })
            .collect(),
        numerical: table
            .numerical_names
            .iter()
            .zip(ranges)
            .map(|(name, (min, max))| NumericalAttribute {
                name: name.clone(),
                min,
                max,
            })
            .collect(),
    })
}

/// Encode one entry with numerics clamped to [0,1].
pub fn encode_entry(schema: &DatasetSchema, entry: &RawEntry) -> Result<Vec<f64>> {
    let mut row = vec![0.0; schema.width()];
    schema.encode_into(entry, true, &mut row)?;
    Ok(row)
}

/// Dense encoded rows plus per-row metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBatch {
    pub rows: Array2<f64>,
    pub layout: SegmentLayout,
    pub departments: Vec<String>,
    pub labels: Vec<AnomalyLabel>,
    pub entry_ids: Vec<usize>,
}

impl EncodedBatch {
    pub fn empty(layout: SegmentLayout) -> Self {
        let width = layout.width();
        EncodedBatch {
            rows: Array2::zeros((0, width)),
            layout,
            departments: Vec::new(),
            labels: Vec::new(),
            entry_ids: Vec::new(),
        }
    }

    /// Encode entries with their labels. Clean rows are clamped into [0,1];
    /// anomalous rows keep out-of-range numerics.
    pub fn encode(schema: &DatasetSchema, entries: &[(RawEntry, AnomalyLabel)]) -> Result<Self> {
        let width = schema.width();
        let mut rows = Array2::zeros((entries.len(), width));
        for (i, (e, label)) in entries.iter().enumerate() {
            let mut row = rows.row_mut(i);
            let slice = row.as_slice_mut().expect("standard layout");
            schema.encode_into(e, !label.is_anomaly(), slice)?;
        }
        Ok(EncodedBatch {
            rows,
            layout: schema.layout(),
            departments: entries.iter().map(|(e, _)| e.department.clone()).collect(),
            labels: entries.iter().map(|(_, l)| *l).collect(),
            entry_ids: entries.iter().map(|(e, _)| e.id).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn has_labels(&self) -> bool {
        self.labels.len() == self.len()
    }

    /// Departments present in this batch, sorted.
    pub fn department_set(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.departments.iter().collect();
        set.into_iter().cloned().collect()
    }

    /// Concatenate batches that share a layout.
    pub fn concat(layout: SegmentLayout, parts: &[&EncodedBatch]) -> Result<Self> {
        let width = layout.width();
        let n: usize = parts.iter().map(|p| p.len()).sum();
        let mut rows = Array2::zeros((n, width));
        let mut out = EncodedBatch::empty(layout.clone());
        let mut at = 0;
        for p in parts {
            if p.layout != layout {
                return Err(Error::Shape("cannot concatenate batches with different layouts".into()));
            }
            rows.slice_mut(ndarray::s![at..at + p.len(), ..]).assign(&p.rows);
            at += p.len();
            out.departments.extend(p.departments.iter().cloned());
            out.labels.extend(p.labels.iter().copied());
            out.entry_ids.extend(p.entry_ids.iter().copied());
        }
        out.rows = rows;
        Ok(out)
    }
}

//! Encoded-dataset cache: a `FLDS` container holding the encoded rows plus
//! three single-column blocks (department index, label code, entry id), and
//! a JSON sidecar with the schema and department names.

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{AnomalyLabel, DatasetSchema, EncodedBatch};
use crate::codec::{self, Container};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FLDS";

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetCache {
    pub schema: DatasetSchema,
    pub batch: EncodedBatch,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    schema: DatasetSchema,
    departments: Vec<String>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

pub fn write_dataset_cache(path: &Path, cache: &DatasetCache) -> Result<()> {
    let b = &cache.batch;
    let departments = b.department_set();
    let n = b.len();
    let mut values: Vec<f64> = b.rows.iter().copied().collect();
    values.extend(
        b.departments
            .iter()
            .map(|d| departments.binary_search(d).expect("present") as f64),
    );
    values.extend(b.labels.iter().map(|l| f64::from(l.code())));
    values.extend(b.entry_ids.iter().map(|&i| i as f64));
    let container = Container {
        dims: vec![(n as u32, b.rows.ncols() as u32), (n as u32, 1), (n as u32, 1), (n as u32, 1)],
        values,
    };
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    codec::write_container(&mut f, MAGIC, &container).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_vec_pretty(&Sidecar {
        schema: cache.schema.clone(),
        departments,
    })
    .expect("sidecar serializes");
    std::fs::write(&side, json).map_err(|e| Error::io(side, e))
}

pub fn read_dataset_cache(path: &Path) -> Result<DatasetCache> {
    let side = sidecar_path(path);
    let text = std::fs::read(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: Sidecar =
        serde_json::from_slice(&text).map_err(|e| Error::Format(format!("{}: {e}", side.display())))?;
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let c = codec::read_container(&mut f, MAGIC, |dims| {
        dims.iter().map(|&(r, c)| (r as usize) * (c as usize)).sum()
    })?;
    if c.dims.len() != 4 {
        return Err(Error::Format("dataset cache must hold four blocks".into()));
    }
    let (n, width) = (c.dims[0].0 as usize, c.dims[0].1 as usize);
    if width != sidecar.schema.width() || c.dims[1..].iter().any(|&(r, k)| r as usize != n || k != 1) {
        return Err(Error::Format("dataset cache blocks do not match the schema".into()));
    }
    let rows = Array2::from_shape_vec((n, width), c.values[..n * width].to_vec())
        .map_err(|e| Error::Format(e.to_string()))?;
    let tail = &c.values[n * width..];
    let departments = tail[..n]
        .iter()
        .map(|&d| {
            sidecar
                .departments
                .get(d as usize)
                .cloned()
                .ok_or_else(|| Error::Format("department index out of range".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = tail[n..2 * n]
        .iter()
        .map(|&l| AnomalyLabel::from_code(l as u8).ok_or_else(|| Error::Format("bad label code".into())))
        .collect::<Result<Vec<_>>>()?;
    let entry_ids = tail[2 * n..].iter().map(|&i| i as usize).collect();
    Ok(DatasetCache {
        batch: EncodedBatch {
            rows,
            layout: sidecar.schema.layout(),
            departments,
            labels,
            entry_ids,
        },
        schema: sidecar.schema,
    })
}

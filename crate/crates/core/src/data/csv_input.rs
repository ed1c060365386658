use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EntryTable, RawEntry};
use crate::error::{Error, Result};

/// Column mapping for one payments export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub department_column: String,
    pub categorical_columns: Vec<String>,
    pub numerical_columns: Vec<String>,
    /// Departments sampled into experiences by default.
    pub departments: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CityDataset {
    Philadelphia,
    Chicago,
    York,
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl DatasetProfile {
    /// Built-in column profiles for the three public city payment exports.
    pub fn builtin(kind: CityDataset) -> Self {
        match kind {
            CityDataset::Philadelphia => DatasetProfile {
                department_column: "department_title".into(),
                categorical_columns: strings(&[
                    "fm",
                    "dept",
                    "department_title",
                    "char_",
                    "character_title",
                    "sub_obj",
                    "sub_obj_title",
                    "vendor_name",
                    "doc_ref_no_prefix",
                    "doc_ref_no_prefix_definition",
                ]),
                numerical_columns: strings(&["transaction_amount"]),
                departments: strings(&["42 Commerce", "52 Free Library", "10 Managing Director", "11 Police", "14 Health"]),
            },
            CityDataset::Chicago => DatasetProfile {
                department_column: "DEPARTMENT NAME".into(),
                categorical_columns: strings(&[
                    "VOUCHER NUMBER",
                    "CHECK DATE",
                    "DEPARTMENT NAME",
                    "CONTRACT NUMBER",
                    "VENDOR NAME",
                    "CASHED",
                ]),
                numerical_columns: strings(&["AMOUNT"]),
                departments: strings(&[
                    "Dept. of Family and Suppport Services",
                    "Dept. of Aviation",
                    "Chicago Department of Transportation",
                    "Department of Health",
                    "Department of Water Management",
                ]),
            },
            CityDataset::York => DatasetProfile {
                department_column: "Directorate".into(),
                categorical_columns: strings(&[
                    "Directorate",
                    "Service Area",
                    "Division",
                    "Expense Type",
                    "Expense Code",
                    "Cost Centre",
                    "Supplier Name",
                    "Supplier Type",
                    "Payment Method",
                    "Payment Date",
                    "Creditor Type",
                ]),
                numerical_columns: strings(&["Net Amount", "VAT Amount"]),
                departments: strings(&[
                    "Adult Social Care",
                    "Economy Regeneration and Housing",
                    "Housing and Community Safety",
                    "Transport Highways and Environ.",
                    "School Funding and Assets",
                ]),
            },
        }
    }
}

fn parse_amount(raw: &str) -> Option<f64> {
    let cleaned: String = raw.chars().filter(|c| !matches!(c, '$' | ',' | ' ' | '£')).collect();
    let (neg, body) = match cleaned.strip_prefix('(').and_then(|s| s.strip_suffix(')')) {
        Some(inner) => (true, inner.to_string()),
        None => (false, cleaned),
    };
    let v: f64 = body.parse().ok()?;
    v.is_finite().then_some(if neg { -v } else { v })
}

/// Read a UTF-8 payments CSV with a header row. Rows that cannot be parsed
/// are counted in `skipped_rows`.
pub fn load_city_csv(path: &Path, profile: &DatasetProfile) -> Result<EntryTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("{}: cannot read header: {e}", path.display())))?
        .clone();
    if headers.is_empty() || headers.iter().all(|h| h.trim().is_empty()) {
        return Err(Error::Schema(format!("{}: empty file or missing header", path.display())));
    }
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Schema(format!("{}: missing required column {name:?}", path.display())))
    };
    let dept_col = find(&profile.department_column)?;
    let cat_cols = profile.categorical_columns.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let num_cols = profile.numerical_columns.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let mut entries = Vec::new();
    let mut skipped = 0;
    for record in reader.records() {
        let Ok(record) = record else {
            skipped += 1;
            continue;
        };
        if record.len() != headers.len() {
            skipped += 1;
            continue;
        }
        let department = record[dept_col].trim();
        if department.is_empty() {
            skipped += 1;
            continue;
        }
        let numerical: Option<Vec<f64>> = num_cols.iter().map(|&c| parse_amount(&record[c])).collect();
        let Some(numerical) = numerical else {
            skipped += 1;
            continue;
        };
        let categorical = cat_cols
            .iter()
            .map(|&c| {
                let v = record[c].trim();
                if v.is_empty() {
                    "<NA>".to_string()
                } else {
                    v.to_string()
                }
            })
            .collect();
        entries.push(RawEntry {
            id: entries.len(),
            department: department.to_string(),
            categorical,
            numerical,
        });
    }
    if skipped > 0 {
        eprintln!("{}: skipped {skipped} malformed rows", path.display());
    }
    Ok(EntryTable {
        department_attribute: profile.department_column.clone(),
        categorical_names: profile.categorical_columns.clone(),
        numerical_names: profile.numerical_columns.clone(),
        entries,
        skipped_rows: skipped,
    })
}

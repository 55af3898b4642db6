//! Raw (string-cell) tables and cleaning operations.

use std::collections::HashMap;
use std::path::Path;

use crate::schema::{normalize_name, FeatureKind, FeatureSchema};

use super::DataError;

/// A loaded table: one `Option<String>` cell per schema column per row.
/// `None` marks a missing cell. Column order is `schema.column_names()`.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub schema: FeatureSchema,
    pub rows: Vec<Vec<Option<String>>>,
    pub provenance: Vec<String>,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.schema.column_count()
    }

    /// Kind of the column at `col` (features in schema order, then attack
    /// category when present, then label). Label and attack-category
    /// columns are treated as categorical.
    pub fn column_kind(&self, col: usize) -> FeatureKind {
        match self.schema.features.get(col) {
            Some(spec) => spec.kind,
            None => FeatureKind::Categorical,
        }
    }

    pub fn column_name(&self, col: usize) -> &str {
        self.schema.column_names()[col]
    }

    pub fn missing_count(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.iter().filter(|c| c.is_none()).count())
            .sum()
    }
}

/// Load a CSV file, matching header names to the schema case-insensitively
/// after stripping spaces, underscores and dots. Unparseable cells in
/// numeric columns become missing marks; the row is kept.
pub fn load_csv(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<RawTable, DataError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;

    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(DataError::EmptyFile);
    }

    let mut by_name: HashMap<String, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        let key = normalize_name(h);
        if by_name.insert(key, i).is_some() {
            return Err(DataError::DuplicateHeader(h.to_string()));
        }
    }

    let column_names = schema.column_names();
    let mut col_map = Vec::with_capacity(column_names.len());
    for name in &column_names {
        let idx = by_name
            .get(&normalize_name(name))
            .copied()
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))?;
        col_map.push(idx);
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let mut row = Vec::with_capacity(column_names.len());
        for (col, &src) in col_map.iter().enumerate() {
            let cell = record.get(src).map(str::trim).unwrap_or("");
            row.push(parse_cell(cell, kind_at(schema, col)));
        }
        rows.push(row);
    }

    Ok(RawTable {
        schema: schema.clone(),
        rows,
        provenance: vec![path.display().to_string()],
    })
}

fn kind_at(schema: &FeatureSchema, col: usize) -> FeatureKind {
    match schema.features.get(col) {
        Some(spec) => spec.kind,
        None => FeatureKind::Categorical,
    }
}

fn parse_cell(cell: &str, kind: FeatureKind) -> Option<String> {
    if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
        return None;
    }
    match kind {
        FeatureKind::Numeric => {
            if cell.parse::<f64>().map(f64::is_finite).unwrap_or(false) {
                Some(cell.to_string())
            } else {
                None
            }
        }
        FeatureKind::Categorical => Some(cell.to_string()),
    }
}

/// Concatenate part tables in order. All parts must share one schema.
pub fn merge_parts(tables: &[RawTable]) -> Result<RawTable, DataError> {
    let first = tables.first().ok_or(DataError::SchemaMismatch)?;
    let names = first.schema.column_names();
    for t in &tables[1..] {
        if t.schema.column_names() != names {
            return Err(DataError::SchemaMismatch);
        }
    }
    let mut rows = Vec::with_capacity(tables.iter().map(|t| t.rows.len()).sum());
    let mut provenance = Vec::new();
    for t in tables {
        rows.extend(t.rows.iter().cloned());
        provenance.extend(t.provenance.iter().cloned());
    }
    Ok(RawTable {
        schema: first.schema.clone(),
        rows,
        provenance,
    })
}

/// Drop rows whose missing-cell fraction exceeds `threshold`.
pub fn drop_high_nan_rows(table: &RawTable, threshold: f64) -> RawTable {
    assert!(threshold > 0.0 && threshold <= 1.0, "threshold in (0, 1]");
    let n_cols = table.n_cols() as f64;
    let rows = table
        .rows
        .iter()
        .filter(|row| {
            let missing = row.iter().filter(|c| c.is_none()).count() as f64;
            missing / n_cols <= threshold
        })
        .cloned()
        .collect();
    RawTable {
        schema: table.schema.clone(),
        rows,
        provenance: table.provenance.clone(),
    }
}

/// Fill missing cells: numeric columns by the column median (lower middle
/// value for even counts), categorical columns by the most frequent
/// category. Statistics are computed before any replacement.
pub fn impute_median(table: &RawTable) -> Result<RawTable, DataError> {
    let n_cols = table.n_cols();
    let mut fill: Vec<Option<String>> = vec![None; n_cols];

    for col in 0..n_cols {
        let has_missing = table.rows.iter().any(|r| r[col].is_none());
        if !has_missing {
            continue;
        }
        fill[col] = Some(match table.column_kind(col) {
            FeatureKind::Numeric => {
                let mut values: Vec<f64> = table
                    .rows
                    .iter()
                    .filter_map(|r| r[col].as_deref())
                    .filter_map(|s| s.parse::<f64>().ok())
                    .collect();
                if values.is_empty() {
                    return Err(DataError::AllMissingColumn(
                        table.column_name(col).to_string(),
                    ));
                }
                values.sort_by(f64::total_cmp);
                // lower of the two middle values for even counts
                let median = values[(values.len() - 1) / 2];
                format_float(median)
            }
            FeatureKind::Categorical => column_mode(table, col)?,
        });
    }

    let rows = table
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(col, cell)| cell.clone().or_else(|| fill[col].clone()))
                .collect()
        })
        .collect();
    Ok(RawTable {
        schema: table.schema.clone(),
        rows,
        provenance: table.provenance.clone(),
    })
}

fn format_float(v: f64) -> String {
    // Display for f64 is shortest round-trip, so re-parsing is exact
    v.to_string()
}

/// Most frequent category in a column; ties broken by schema category
/// order when the schema declares one, else by first appearance.
fn column_mode(table: &RawTable, col: usize) -> Result<String, DataError> {
    let mut counts: Vec<(String, usize)> = Vec::new();
    for row in &table.rows {
        if let Some(v) = row[col].as_deref() {
            match counts.iter_mut().find(|(c, _)| c == v) {
                Some((_, n)) => *n += 1,
                None => counts.push((v.to_string(), 1)),
            }
        }
    }
    if counts.is_empty() {
        return Err(DataError::AllMissingColumn(
            table.column_name(col).to_string(),
        ));
    }
    let order: Vec<&str> = table
        .schema
        .features
        .get(col)
        .map(|f| f.categories.iter().map(String::as_str).collect())
        .unwrap_or_default();
    let rank = |cat: &str| order.iter().position(|c| *c == cat);
    let best = counts
        .iter()
        .enumerate()
        .max_by(|(ia, (ca, na)), (ib, (cb, nb))| {
            na.cmp(nb).then_with(|| {
                // prefer earlier schema order, then earlier appearance
                let ra = rank(ca).unwrap_or(usize::MAX);
                let rb = rank(cb).unwrap_or(usize::MAX);
                rb.cmp(&ra).then(ib.cmp(ia))
            })
        })
        .map(|(_, (c, _))| c.clone())
        .expect("non-empty counts");
    Ok(best)
}

/// Write a raw table as CSV in schema column order; missing cells become
/// empty fields.
pub fn write_csv(table: &RawTable, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(table.schema.column_names())?;
    for row in &table.rows {
        writer.write_record(row.iter().map(|c| c.as_deref().unwrap_or("")))?;
    }
    writer.flush()?;
    Ok(())
}

//! Encoding, standardization and train/test splitting.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::schema::{FeatureKind, FeatureSchema};

use super::{DataError, RawTable};

/// Per-column standardization statistics in pre-scaling units.
/// A constant column records `std = 1` so its scaled values are 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerStat {
    pub mean: f64,
    pub std: f64,
}

/// Training marginal of one feature, in pre-scaling units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureStat {
    Numeric { mean: f64, std: f64 },
    /// Relative frequency per category code, aligned with the encoder
    /// order of the feature.
    Categorical { freqs: Vec<f64> },
}

/// Fully numeric dataset: standardized feature matrix, binary labels and
/// the fitted encoders/scaler needed to apply or invert the encoding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncodedDataset {
    pub schema: FeatureSchema,
    /// n_rows x n_features, standardized.
    pub matrix: Vec<Vec<f64>>,
    /// 0 = Normal, 1 = Attack.
    pub labels: Vec<u8>,
    /// Per feature: `Some(categories)` in code order for categoricals.
    pub encoders: Vec<Option<Vec<String>>>,
    pub scaler: Vec<ScalerStat>,
    pub feature_stats: Vec<FeatureStat>,
}

impl EncodedDataset {
    pub fn n_rows(&self) -> usize {
        self.matrix.len()
    }

    pub fn n_features(&self) -> usize {
        self.schema.feature_count()
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.schema.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn feature_kinds(&self) -> Vec<FeatureKind> {
        self.schema.features.iter().map(|f| f.kind).collect()
    }

    /// Invert standardization for one cell.
    pub fn unscale(&self, col: usize, value: f64) -> f64 {
        value * self.scaler[col].std + self.scaler[col].mean
    }

    /// Category code behind a scaled categorical cell.
    pub fn category_code(&self, col: usize, value: f64) -> usize {
        self.unscale(col, value).round().max(0.0) as usize
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let attack = self.labels.iter().filter(|&&l| l == 1).count();
        (self.labels.len() - attack, attack)
    }
}

/// A seeded 80/20-style partition. Encoders, scaler and feature statistics
/// are fit on the train side only and applied to the test side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitPair {
    pub train: EncodedDataset,
    pub test: EncodedDataset,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Num(f64),
    Cat(String),
}

/// Table decoded to typed values, labels parsed.
struct TypedRows {
    values: Vec<Vec<Value>>,
    labels: Vec<u8>,
}

fn parse_label(cell: &str) -> Result<u8, DataError> {
    let parsed: f64 = cell
        .trim()
        .parse()
        .map_err(|_| DataError::BadLabel(cell.to_string()))?;
    if parsed == 0.0 {
        Ok(0)
    } else if parsed == 1.0 {
        Ok(1)
    } else {
        Err(DataError::BadLabel(cell.to_string()))
    }
}

fn typed_rows(table: &RawTable) -> Result<TypedRows, DataError> {
    if table.missing_count() > 0 {
        return Err(DataError::MissingCells);
    }
    let n_features = table.schema.feature_count();
    let label_col = table.n_cols() - 1;
    let mut values = Vec::with_capacity(table.n_rows());
    let mut labels = Vec::with_capacity(table.n_rows());
    for row in &table.rows {
        let mut typed = Vec::with_capacity(n_features);
        for (col, spec) in table.schema.features.iter().enumerate() {
            let cell = row[col].as_deref().expect("no missing cells");
            typed.push(match spec.kind {
                FeatureKind::Numeric => {
                    Value::Num(cell.parse::<f64>().map_err(|_| DataError::BadNumeric {
                        column: spec.name.clone(),
                        value: cell.to_string(),
                    })?)
                }
                FeatureKind::Categorical => Value::Cat(cell.to_string()),
            });
        }
        values.push(typed);
        labels.push(parse_label(row[label_col].as_deref().expect("no missing cells"))?);
    }
    Ok(TypedRows { values, labels })
}

fn population_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fit encoders/scaler/stats on `fit_rows` and encode both row sets.
/// Categories are coded in first-appearance order within `fit_rows`;
/// applying the frozen encoder to `apply_rows` fails on unseen categories.
fn fit_and_apply(
    schema: &FeatureSchema,
    fit_rows: &TypedRows,
    apply_rows: Option<&TypedRows>,
) -> Result<(EncodedDataset, Option<EncodedDataset>), DataError> {
    let n_features = schema.feature_count();
    let mut encoders: Vec<Option<Vec<String>>> = vec![None; n_features];
    let mut codes: Vec<Vec<f64>> = vec![Vec::new(); n_features]; // fit-side pre-scale values

    for (col, spec) in schema.features.iter().enumerate() {
        match spec.kind {
            FeatureKind::Numeric => {
                codes[col] = fit_rows
                    .values
                    .iter()
                    .map(|row| match &row[col] {
                        Value::Num(v) => *v,
                        Value::Cat(_) => unreachable!("kind mismatch"),
                    })
                    .collect();
            }
            FeatureKind::Categorical => {
                let mut cats: Vec<String> = Vec::new();
                let mut col_codes = Vec::with_capacity(fit_rows.values.len());
                for row in &fit_rows.values {
                    let Value::Cat(c) = &row[col] else {
                        unreachable!("kind mismatch")
                    };
                    let code = match cats.iter().position(|k| k == c) {
                        Some(i) => i,
                        None => {
                            cats.push(c.clone());
                            cats.len() - 1
                        }
                    };
                    col_codes.push(code as f64);
                }
                codes[col] = col_codes;
                encoders[col] = Some(cats);
            }
        }
    }

    let mut scaler = Vec::with_capacity(n_features);
    let mut feature_stats = Vec::with_capacity(n_features);
    for (col, spec) in schema.features.iter().enumerate() {
        let (mean, std) = population_stats(&codes[col]);
        let std_used = if std == 0.0 { 1.0 } else { std };
        scaler.push(ScalerStat { mean, std: std_used });
        feature_stats.push(match spec.kind {
            FeatureKind::Numeric => FeatureStat::Numeric { mean, std },
            FeatureKind::Categorical => {
                let cats = encoders[col].as_ref().expect("categorical encoder");
                let n = codes[col].len() as f64;
                let mut freqs = vec![0.0; cats.len()];
                for &code in &codes[col] {
                    freqs[code as usize] += 1.0 / n;
                }
                FeatureStat::Categorical { freqs }
            }
        });
    }

    let scale_row = |row: &[f64]| -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(col, v)| (v - scaler[col].mean) / scaler[col].std)
            .collect()
    };

    let fit_matrix: Vec<Vec<f64>> = (0..fit_rows.values.len())
        .map(|r| {
            let row: Vec<f64> = (0..n_features).map(|c| codes[c][r]).collect();
            scale_row(&row)
        })
        .collect();

    let fit_ds = EncodedDataset {
        schema: schema.clone(),
        matrix: fit_matrix,
        labels: fit_rows.labels.clone(),
        encoders: encoders.clone(),
        scaler: scaler.clone(),
        feature_stats: feature_stats.clone(),
    };

    let apply_ds = match apply_rows {
        None => None,
        Some(rows) => {
            let mut matrix = Vec::with_capacity(rows.values.len());
            for row in &rows.values {
                let mut pre = Vec::with_capacity(n_features);
                for (col, spec) in schema.features.iter().enumerate() {
                    pre.push(match &row[col] {
                        Value::Num(v) => *v,
                        Value::Cat(c) => {
                            let cats = encoders[col].as_ref().expect("categorical encoder");
                            cats.iter().position(|k| k == c).ok_or_else(|| {
                                DataError::UnseenCategory {
                                    feature: spec.name.clone(),
                                    value: c.clone(),
                                }
                            })? as f64
                        }
                    });
                }
                matrix.push(scale_row(&pre));
            }
            Some(EncodedDataset {
                schema: schema.clone(),
                matrix,
                labels: rows.labels.clone(),
                encoders,
                scaler,
                feature_stats,
            })
        }
    };

    Ok((fit_ds, apply_ds))
}

/// Integer-encode categoricals in first-appearance order and standardize
/// every model column to zero mean and unit (population) stddev.
pub fn encode_and_scale(table: &RawTable) -> Result<EncodedDataset, DataError> {
    let rows = typed_rows(table)?;
    if rows.values.is_empty() {
        return Err(DataError::TooFewRows);
    }
    let (ds, _) = fit_and_apply(&table.schema, &rows, None)?;
    Ok(ds)
}

/// Encode a table with the encoders and scaler frozen from `train`.
pub fn encode_with(train: &EncodedDataset, table: &RawTable) -> Result<EncodedDataset, DataError> {
    let rows = typed_rows(table)?;
    let typed = TypedRows {
        values: rows.values,
        labels: rows.labels,
    };
    apply_frozen(train, &typed)
}

fn apply_frozen(train: &EncodedDataset, rows: &TypedRows) -> Result<EncodedDataset, DataError> {
    let schema = &train.schema;
    let n_features = schema.feature_count();
    let mut matrix = Vec::with_capacity(rows.values.len());
    for row in &rows.values {
        let mut scaled = Vec::with_capacity(n_features);
        for (col, spec) in schema.features.iter().enumerate() {
            let pre = match &row[col] {
                Value::Num(v) => *v,
                Value::Cat(c) => {
                    let cats = train.encoders[col].as_ref().expect("categorical encoder");
                    cats.iter()
                        .position(|k| k == c)
                        .ok_or_else(|| DataError::UnseenCategory {
                            feature: spec.name.clone(),
                            value: c.clone(),
                        })? as f64
                }
            };
            scaled.push((pre - train.scaler[col].mean) / train.scaler[col].std);
        }
        matrix.push(scaled);
    }
    Ok(EncodedDataset {
        schema: schema.clone(),
        matrix,
        labels: rows.labels.clone(),
        encoders: train.encoders.clone(),
        scaler: train.scaler.clone(),
        feature_stats: train.feature_stats.clone(),
    })
}

/// Recover the typed values behind an encoded dataset.
fn decode(data: &EncodedDataset) -> TypedRows {
    let values = data
        .matrix
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(col, &v)| match &data.encoders[col] {
                    None => Value::Num(data.unscale(col, v)),
                    Some(cats) => Value::Cat(cats[data.category_code(col, v)].clone()),
                })
                .collect()
        })
        .collect();
    TypedRows {
        values,
        labels: data.labels.clone(),
    }
}

/// Uniformly random seeded partition. The returned pair has encoders,
/// scaler and feature statistics refit on the train side only.
pub fn split_train_test(
    data: &EncodedDataset,
    ratio: f64,
    seed: u64,
) -> Result<SplitPair, DataError> {
    assert!(ratio > 0.0 && ratio < 1.0, "ratio in (0, 1)");
    let n = data.n_rows();
    if n < 2 {
        return Err(DataError::TooFewRows);
    }
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng::stream(seed, "split_train_test", 0));
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);

    let typed = decode(data);
    let take = |idx: &[usize]| TypedRows {
        values: idx.iter().map(|&i| typed.values[i].clone()).collect(),
        labels: idx.iter().map(|&i| typed.labels[i]).collect(),
    };
    let train_rows = take(&indices[..n_train]);
    let test_rows = take(&indices[n_train..]);

    let (train, test) = fit_and_apply(&data.schema, &train_rows, Some(&test_rows))?;
    Ok(SplitPair {
        train,
        test: test.expect("apply side requested"),
        seed,
    })
}

/// `(train_idx, val_idx)` pairs, one per fold.
pub type FoldIndices = Vec<(Vec<usize>, Vec<usize>)>;

/// Seeded k-fold partition of `0..n`: k `(train_idx, val_idx)` pairs with
/// validation folds differing in size by at most one.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<FoldIndices, DataError> {
    if k < 2 || n < k {
        return Err(DataError::BadK);
    }
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng::stream(seed, "kfold", 0));

    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        let val: Vec<usize> = indices[start..start + size].to_vec();
        let train: Vec<usize> = indices[..start]
            .iter()
            .chain(&indices[start + size..])
            .copied()
            .collect();
        folds.push((train, val));
        start += size;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::FeatureSpec;

    fn numeric_schema() -> FeatureSchema {
        FeatureSchema {
            name: "num".into(),
            features: vec![FeatureSpec {
                name: "x".into(),
                kind: FeatureKind::Numeric,
                categories: vec![],
            }],
            label_column: "label".into(),
            attack_category_column: None,
        }
    }

    fn mixed_schema() -> FeatureSchema {
        FeatureSchema {
            name: "mixed".into(),
            features: vec![
                FeatureSpec {
                    name: "x".into(),
                    kind: FeatureKind::Numeric,
                    categories: vec![],
                },
                FeatureSpec {
                    name: "proto".into(),
                    kind: FeatureKind::Categorical,
                    categories: vec![],
                },
            ],
            label_column: "label".into(),
            attack_category_column: None,
        }
    }

    fn raw(schema: FeatureSchema, rows: Vec<Vec<&str>>) -> RawTable {
        RawTable {
            schema,
            rows: rows
                .into_iter()
                .map(|r| r.into_iter().map(|c| Some(c.to_string())).collect())
                .collect(),
            provenance: vec![],
        }
    }

    #[test]
    fn standardizes_with_population_stddev() {
        // hand-computed: mean 4, population stddev sqrt(8/3) = 1.632993..
        let t = raw(
            numeric_schema(),
            vec![vec!["2", "0"], vec!["4", "0"], vec!["6", "1"]],
        );
        let ds = encode_and_scale(&t).unwrap();
        let col: Vec<f64> = ds.matrix.iter().map(|r| r[0]).collect();
        assert!((col[0] + 1.224744871391589).abs() < 1e-12);
        assert!(col[1].abs() < 1e-12);
        assert!((col[2] - 1.224744871391589).abs() < 1e-12);
    }

    #[test]
    fn constant_column_scales_to_zero() {
        let t = raw(
            numeric_schema(),
            vec![vec!["5", "0"], vec!["5", "1"], vec!["5", "0"]],
        );
        let ds = encode_and_scale(&t).unwrap();
        assert!(ds.matrix.iter().all(|r| r[0] == 0.0));
        assert_eq!(ds.scaler[0].std, 1.0);
    }

    #[test]
    fn first_appearance_encoding() {
        let t = raw(
            mixed_schema(),
            vec![
                vec!["1", "tcp", "0"],
                vec!["2", "udp", "1"],
                vec!["3", "tcp", "0"],
            ],
        );
        let ds = encode_and_scale(&t).unwrap();
        let cats = ds.encoders[1].as_ref().unwrap();
        assert_eq!(cats, &vec!["tcp".to_string(), "udp".to_string()]);
        // codes before scaling: [0, 1, 0]
        let codes: Vec<usize> = ds
            .matrix
            .iter()
            .map(|r| ds.category_code(1, r[1]))
            .collect();
        assert_eq!(codes, vec![0, 1, 0]);
        match &ds.feature_stats[1] {
            FeatureStat::Categorical { freqs } => {
                assert!((freqs[0] - 2.0 / 3.0).abs() < 1e-12);
                assert!((freqs[1] - 1.0 / 3.0).abs() < 1e-12);
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn scaled_columns_have_unit_moments() {
        let t = raw(
            mixed_schema(),
            vec![
                vec!["1.5", "tcp", "0"],
                vec!["-2", "udp", "1"],
                vec!["3", "tcp", "0"],
                vec!["0.25", "icmp", "1"],
            ],
        );
        let ds = encode_and_scale(&t).unwrap();
        for col in 0..2 {
            let vals: Vec<f64> = ds.matrix.iter().map(|r| r[col]).collect();
            let (mean, std) = population_stats(&vals);
            assert!(mean.abs() <= 1e-9);
            assert!((std - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn scaler_round_trips() {
        let t = raw(
            numeric_schema(),
            vec![vec!["1.5", "0"], vec!["-2.25", "1"], vec!["7", "0"]],
        );
        let ds = encode_and_scale(&t).unwrap();
        let originals = [1.5, -2.25, 7.0];
        for (row, orig) in ds.matrix.iter().zip(originals) {
            assert!((ds.unscale(0, row[0]) - orig).abs() < 1e-9);
        }
    }

    #[test]
    fn missing_cells_rejected() {
        let mut t = raw(numeric_schema(), vec![vec!["1", "0"], vec!["2", "1"]]);
        t.rows[0][0] = None;
        assert!(matches!(encode_and_scale(&t), Err(DataError::MissingCells)));
    }

    #[test]
    fn split_counts_and_disjointness() {
        let rows: Vec<Vec<&str>> = (0..100)
            .map(|i| {
                if i % 2 == 0 {
                    vec!["1", "0"]
                } else {
                    vec!["2", "1"]
                }
            })
            .collect();
        // give rows distinct values so we can track identity
        let rows: Vec<Vec<String>> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| vec![format!("{i}"), r[1].to_string()])
            .collect();
        let t = RawTable {
            schema: numeric_schema(),
            rows: rows
                .into_iter()
                .map(|r| r.into_iter().map(Some).collect())
                .collect(),
            provenance: vec![],
        };
        let ds = encode_and_scale(&t).unwrap();
        let pair = split_train_test(&ds, 0.8, 7).unwrap();
        assert_eq!(pair.train.n_rows(), 80);
        assert_eq!(pair.test.n_rows(), 20);

        let train_vals: Vec<i64> = pair
            .train
            .matrix
            .iter()
            .map(|r| pair.train.unscale(0, r[0]).round() as i64)
            .collect();
        let test_vals: Vec<i64> = pair
            .test
            .matrix
            .iter()
            .map(|r| pair.test.unscale(0, r[0]).round() as i64)
            .collect();
        for v in &test_vals {
            assert!(!train_vals.contains(v), "row {v} leaked into both sides");
        }
        let mut all: Vec<i64> = train_vals.iter().chain(&test_vals).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<i64>>());
    }

    #[test]
    fn split_is_deterministic() {
        let t = raw(
            numeric_schema(),
            (0..20)
                .map(|i| {
                    if i < 10 {
                        vec!["1", "0"]
                    } else {
                        vec!["9", "1"]
                    }
                })
                .collect(),
        );
        let ds = encode_and_scale(&t).unwrap();
        let a = split_train_test(&ds, 0.8, 42).unwrap();
        let b = split_train_test(&ds, 0.8, 42).unwrap();
        assert_eq!(a.train.matrix, b.train.matrix);
        assert_eq!(a.test.labels, b.test.labels);
    }

    #[test]
    fn split_minimal_two_rows() {
        let t = raw(numeric_schema(), vec![vec!["1", "0"], vec!["2", "1"]]);
        let ds = encode_and_scale(&t).unwrap();
        let pair = split_train_test(&ds, 0.5, 0).unwrap();
        assert_eq!(pair.train.n_rows(), 1);
        assert_eq!(pair.test.n_rows(), 1);
    }

    #[test]
    fn split_statistics_come_from_train_only() {
        let t = raw(
            numeric_schema(),
            (0..50)
                .map(|i| {
                    if i % 2 == 0 {
                        vec!["3", "0"]
                    } else {
                        vec!["11", "1"]
                    }
                })
                .collect(),
        );
        let ds = encode_and_scale(&t).unwrap();
        let pair = split_train_test(&ds, 0.8, 3).unwrap();
        // recompute train-side statistics independently from the raw values
        let raw_train: Vec<f64> = pair
            .train
            .matrix
            .iter()
            .map(|r| pair.train.unscale(0, r[0]))
            .collect();
        let (mean, std) = population_stats(&raw_train);
        let std = if std == 0.0 { 1.0 } else { std };
        assert!((pair.train.scaler[0].mean - mean).abs() < 1e-9);
        assert!((pair.train.scaler[0].std - std).abs() < 1e-9);
        // and the test side carries the same (train-fit) scaler
        assert_eq!(pair.train.scaler, pair.test.scaler);
    }

    #[test]
    fn frozen_encoder_rejects_unseen_category() {
        let t = raw(
            mixed_schema(),
            vec![vec!["1", "tcp", "0"], vec!["2", "udp", "1"]],
        );
        let train = encode_and_scale(&t).unwrap();
        let new = raw(mixed_schema(), vec![vec!["1", "sctp", "0"]]);
        match encode_with(&train, &new) {
            Err(DataError::UnseenCategory { feature, value }) => {
                assert_eq!(feature, "proto");
                assert_eq!(value, "sctp");
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn kfold_even_and_uneven() {
        let folds = kfold_indices(10, 5, 1).unwrap();
        assert_eq!(folds.len(), 5);
        for (_, val) in &folds {
            assert_eq!(val.len(), 2);
        }

        let folds = kfold_indices(7, 5, 1).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(|(_, v)| v.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![1, 1, 1, 2, 2]);
    }

    #[test]
    fn kfold_validation_folds_partition_indices() {
        let folds = kfold_indices(23, 4, 9).unwrap();
        let mut seen: Vec<usize> = folds.iter().flat_map(|(_, v)| v.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..23).collect::<Vec<usize>>());
        for (train, val) in &folds {
            assert_eq!(train.len() + val.len(), 23);
            assert!(val.iter().all(|i| !train.contains(i)));
        }
    }

    #[test]
    fn kfold_bad_k() {
        assert!(matches!(kfold_indices(3, 5, 0), Err(DataError::BadK)));
        assert!(matches!(kfold_indices(10, 1, 0), Err(DataError::BadK)));
    }
}

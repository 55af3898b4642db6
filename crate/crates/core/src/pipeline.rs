//! End-to-end orchestration: evaluation metrics, cross-validated tree depth
//! selection, the full experiment runner and the confidence-gated detector.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cart::{self, CartError, CartTree};
use crate::data::{
    self, encode_and_scale, kfold_indices, smote_balance, split_train_test, DataError,
    EncodedDataset, RawTable,
};
use crate::globalexplain::{permutation_importance, GlobalImportance, ScoringTarget};
use crate::localexplain::{ExplainError, ExplainOptions, LocalExplanation, TabularExplainer};
use crate::models::{accuracy, BlackBoxModel};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Cart(#[from] CartError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
}

/// Binary evaluation metrics with attacks as the positive class.
///
/// The false-alarm rate is the fraction of raised alarms that are wrong,
/// `FP / (FP + TP)`; it is a different quantity from the false-positive
/// rate `FP / (FP + TN)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    pub precision_attack: f64,
    pub recall_attack: f64,
    pub f1_attack: f64,
    pub precision_normal: f64,
    pub recall_normal: f64,
    pub f1_normal: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub fpr: f64,
    pub tnr: f64,
    pub false_alarm_rate: f64,
    pub mcc: f64,
    pub balanced_accuracy: f64,
}

fn safe_div(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn f1(p: f64, r: f64) -> f64 {
    safe_div(2.0 * p * r, p + r)
}

pub fn compute_metrics(y_true: &[u8], y_pred: &[u8]) -> Metrics {
    assert_eq!(y_true.len(), y_pred.len());
    assert!(!y_true.is_empty());
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut tn = 0usize;
    let mut fn_ = 0usize;
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (0, 0) => tn += 1,
            (1, 0) => fn_ += 1,
            _ => panic!("labels must be 0 or 1"),
        }
    }
    let n = y_true.len() as f64;
    let (tp_f, fp_f, tn_f, fn_f) = (tp as f64, fp as f64, tn as f64, fn_ as f64);

    let precision_attack = safe_div(tp_f, tp_f + fp_f);
    let recall_attack = safe_div(tp_f, tp_f + fn_f);
    let precision_normal = safe_div(tn_f, tn_f + fn_f);
    let recall_normal = safe_div(tn_f, tn_f + fp_f);
    let f1_attack = f1(precision_attack, recall_attack);
    let f1_normal = f1(precision_normal, recall_normal);

    let support_attack = tp_f + fn_f;
    let support_normal = tn_f + fp_f;
    let weighted = |normal: f64, attack: f64| (support_normal * normal + support_attack * attack) / n;

    let fpr = safe_div(fp_f, fp_f + tn_f);
    let denom_sq = (tp_f + fp_f) * (tp_f + fn_f) * (tn_f + fp_f) * (tn_f + fn_f);
    let mcc = if denom_sq == 0.0 {
        0.0
    } else {
        (tp_f * tn_f - fp_f * fn_f) / denom_sq.sqrt()
    };

    Metrics {
        tp,
        fp,
        tn,
        fn_,
        accuracy: (tp_f + tn_f) / n,
        precision_attack,
        recall_attack,
        f1_attack,
        precision_normal,
        recall_normal,
        f1_normal,
        macro_precision: (precision_attack + precision_normal) / 2.0,
        macro_recall: (recall_attack + recall_normal) / 2.0,
        macro_f1: (f1_attack + f1_normal) / 2.0,
        weighted_precision: weighted(precision_normal, precision_attack),
        weighted_recall: weighted(recall_normal, recall_attack),
        weighted_f1: weighted(f1_normal, f1_attack),
        fpr,
        tnr: 1.0 - fpr,
        false_alarm_rate: safe_div(fp_f, fp_f + tp_f),
        mcc,
        balanced_accuracy: (recall_attack + recall_normal) / 2.0,
    }
}

/// Class balancing applied to the training split only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum Balance {
    None,
    Smote { k: usize, ratio: f64 },
    Undersample,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Fraction of rows that go to the training split.
    pub train_ratio: f64,
    /// Rows with more than this fraction of missing cells are dropped.
    pub nan_row_threshold: f64,
    pub balance: Balance,
    pub depth_grid: Vec<usize>,
    pub cv_folds: usize,
    pub min_samples_split: usize,
    pub permutation_iters: usize,
    /// Alarm threshold on the 0-100 confidence scale.
    pub warn_threshold: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            train_ratio: 0.8,
            nan_row_threshold: 0.3,
            balance: Balance::None,
            depth_grid: vec![4, 6, 8, 10, 12, 16, 20],
            cv_folds: 5,
            min_samples_split: 2,
            permutation_iters: 5,
            warn_threshold: 80.0,
        }
    }
}

/// One row of the depth-selection table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvRecord {
    pub max_depth: usize,
    pub mean_accuracy: f64,
    pub fold_accuracies: Vec<f64>,
}

/// Mean validation accuracy per candidate depth; the winner is the highest
/// mean, ties going to the shallower tree.
pub fn cross_validate_depth(
    train: &EncodedDataset,
    depth_grid: &[usize],
    folds: usize,
    min_samples_split: usize,
    seed: u64,
) -> Result<(usize, Vec<CvRecord>), PipelineError> {
    assert!(!depth_grid.is_empty());
    let splits = kfold_indices(train.n_rows(), folds, seed)?;
    let mut records = Vec::with_capacity(depth_grid.len());
    for &depth in depth_grid {
        let mut fold_accuracies = Vec::with_capacity(folds);
        for (train_idx, val_idx) in &splits {
            let sub_matrix: Vec<Vec<f64>> =
                train_idx.iter().map(|&i| train.matrix[i].clone()).collect();
            let sub_labels: Vec<u8> = train_idx.iter().map(|&i| train.labels[i]).collect();
            let tree = cart::fit(&sub_matrix, &sub_labels, depth, min_samples_split)?;
            let val_matrix: Vec<Vec<f64>> =
                val_idx.iter().map(|&i| train.matrix[i].clone()).collect();
            let val_labels: Vec<u8> = val_idx.iter().map(|&i| train.labels[i]).collect();
            fold_accuracies.push(accuracy(&tree, &val_matrix, &val_labels));
        }
        let mean_accuracy = fold_accuracies.iter().sum::<f64>() / folds as f64;
        records.push(CvRecord {
            max_depth: depth,
            mean_accuracy,
            fold_accuracies,
        });
    }
    let best = records
        .iter()
        .max_by(|a, b| {
            a.mean_accuracy
                .total_cmp(&b.mean_accuracy)
                .then_with(|| b.max_depth.cmp(&a.max_depth))
        })
        .expect("non-empty grid")
        .max_depth;
    Ok((best, records))
}

/// Everything needed to reproduce and audit a run, serialized before any
/// result files are written.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub config: ExperimentConfig,
    pub schema_name: String,
    pub rows_loaded: usize,
    pub rows_after_nan_drop: usize,
    pub train_rows: usize,
    pub train_rows_after_balance: usize,
    pub test_rows: usize,
    pub train_class_counts: (usize, usize),
    pub test_class_counts: (usize, usize),
    pub chosen_depth: usize,
    pub cv_table: Vec<CvRecord>,
}

pub struct ExperimentOutcome {
    pub manifest: ExperimentManifest,
    pub model: CartTree,
    pub train: EncodedDataset,
    pub test: EncodedDataset,
    pub metrics: Metrics,
    pub permutation: GlobalImportance,
    pub impurity: Vec<f64>,
}

/// Run the whole pipeline on a cleaned-or-raw table: drop heavily missing
/// rows, impute, encode and scale, split, optionally rebalance the training
/// side, pick a depth by cross-validation, fit, evaluate and rank features.
pub fn run_experiment(
    table: &RawTable,
    config: &ExperimentConfig,
) -> Result<ExperimentOutcome, PipelineError> {
    let rows_loaded = table.n_rows();
    let kept = data::drop_high_nan_rows(table, config.nan_row_threshold);
    let rows_after_nan_drop = kept.n_rows();
    let imputed = data::impute_median(&kept)?;
    let encoded = encode_and_scale(&imputed)?;
    let split = split_train_test(&encoded, config.train_ratio, config.seed)?;

    let train_rows = split.train.n_rows();
    let train = match config.balance {
        Balance::None => split.train,
        Balance::Smote { k, ratio } => smote_balance(&split.train, k, ratio, config.seed)?,
        Balance::Undersample => data::random_undersample(&split.train, config.seed)?,
    };
    let test = split.test;

    let (chosen_depth, cv_table) = cross_validate_depth(
        &train,
        &config.depth_grid,
        config.cv_folds,
        config.min_samples_split,
        config.seed,
    )?;
    let model = cart::fit(
        &train.matrix,
        &train.labels,
        chosen_depth,
        config.min_samples_split,
    )?;

    let metrics = {
        let predictions: Vec<u8> = test
            .matrix
            .iter()
            .map(|x| BlackBoxModel::predict(&model, x))
            .collect();
        compute_metrics(&test.labels, &predictions)
    };
    let names = test.feature_names();
    let permutation = permutation_importance(
        &model,
        &test.matrix,
        &test.labels,
        &names,
        config.permutation_iters,
        config.seed,
        ScoringTarget::TrueLabels,
    );
    let impurity = model.impurity_importance();

    Ok(ExperimentOutcome {
        manifest: ExperimentManifest {
            config: config.clone(),
            schema_name: encoded.schema.name.clone(),
            rows_loaded,
            rows_after_nan_drop,
            train_rows,
            train_rows_after_balance: train.n_rows(),
            test_rows: test.n_rows(),
            train_class_counts: train.class_counts(),
            test_class_counts: test.class_counts(),
            chosen_depth,
            cv_table,
        },
        model,
        train,
        test,
        metrics,
        permutation,
        impurity,
    })
}

/// Detector verdict for one flow.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionReport {
    pub instance_id: u64,
    /// 0 = normal, 1 = attack.
    pub predicted: u8,
    /// `100 * max(p_normal, p_attack)`.
    pub confidence: f64,
    pub warning: bool,
    /// Present exactly when `warning` is set.
    pub explanation: Option<LocalExplanation>,
}

/// Classify one flow and attach a local explanation whenever confidence is
/// at or below the threshold (inclusive). With `strict_attack`, every
/// predicted attack warns regardless of confidence.
pub fn detect(
    model: &dyn BlackBoxModel,
    explainer: &TabularExplainer,
    instance: &[f64],
    instance_id: u64,
    threshold: f64,
    strict_attack: bool,
    opts: &ExplainOptions,
) -> Result<DetectionReport, PipelineError> {
    let (p_normal, p_attack) = model.predict_proba(instance);
    let predicted = u8::from(p_attack > 0.5);
    let confidence = 100.0 * p_normal.max(p_attack);
    let warning = confidence <= threshold || (strict_attack && predicted == 1);
    let explanation = if warning {
        Some(explainer.explain_instance(model, instance, instance_id, opts)?)
    } else {
        None
    };
    Ok(DetectionReport {
        instance_id,
        predicted,
        confidence,
        warning,
        explanation,
    })
}

/// Explain many rows. Each row uses its own derived random stream keyed by
/// `first_id + offset`, so the output for a row does not depend on which
/// other rows are in the batch.
pub fn explain_batch(
    model: &dyn BlackBoxModel,
    explainer: &TabularExplainer,
    matrix: &[Vec<f64>],
    first_id: u64,
    opts: &ExplainOptions,
) -> Result<Vec<LocalExplanation>, PipelineError> {
    matrix
        .iter()
        .enumerate()
        .map(|(i, row)| {
            explainer
                .explain_instance(model, row, first_id + i as u64, opts)
                .map_err(PipelineError::from)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn confusion_vectors(tp: usize, fp: usize, tn: usize, fn_: usize) -> (Vec<u8>, Vec<u8>) {
        let mut y_true = Vec::new();
        let mut y_pred = Vec::new();
        for _ in 0..tp {
            y_true.push(1);
            y_pred.push(1);
        }
        for _ in 0..fp {
            y_true.push(0);
            y_pred.push(1);
        }
        for _ in 0..tn {
            y_true.push(0);
            y_pred.push(0);
        }
        for _ in 0..fn_ {
            y_true.push(1);
            y_pred.push(0);
        }
        (y_true, y_pred)
    }

    #[test]
    fn closed_form_confusion_oracle() {
        let (y_true, y_pred) = confusion_vectors(40, 10, 40, 10);
        let m = compute_metrics(&y_true, &y_pred);
        assert_eq!((m.tp, m.fp, m.tn, m.fn_), (40, 10, 40, 10));
        assert!((m.accuracy - 0.8).abs() < 1e-12);
        assert!((m.precision_attack - 0.8).abs() < 1e-12);
        assert!((m.recall_attack - 0.8).abs() < 1e-12);
        assert!((m.f1_attack - 0.8).abs() < 1e-12);
        assert!((m.mcc - 0.6).abs() < 1e-12);
        assert!((m.fpr - 0.2).abs() < 1e-12);
        assert!((m.tnr - 0.8).abs() < 1e-12);
        assert!((m.false_alarm_rate - 0.2).abs() < 1e-12);
        assert!((m.balanced_accuracy - 0.8).abs() < 1e-12);
        assert!((m.weighted_f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn degenerate_confusions_yield_zero_not_nan() {
        // no predicted positives: precision and false-alarm rate are 0
        let (y_true, y_pred) = confusion_vectors(0, 0, 5, 5);
        let m = compute_metrics(&y_true, &y_pred);
        assert_eq!(m.precision_attack, 0.0);
        assert_eq!(m.false_alarm_rate, 0.0);
        assert_eq!(m.mcc, 0.0);
        assert!(m.weighted_f1.is_finite());

        // single-class truth
        let (y_true, y_pred) = confusion_vectors(3, 0, 0, 2);
        let m = compute_metrics(&y_true, &y_pred);
        assert_eq!(m.mcc, 0.0);
        assert_eq!(m.fpr, 0.0);
        assert_eq!(m.tnr, 1.0);
    }

    #[test]
    fn tnr_and_fpr_always_sum_to_one() {
        let mut stream = rng::stream(11, "metrics-prop", 0);
        for _ in 0..1000 {
            let tp = stream.random_range(0..20);
            let fp = stream.random_range(0..20);
            let tn = stream.random_range(0..20);
            let fn_ = stream.random_range(0..20);
            if tp + fp + tn + fn_ == 0 {
                continue;
            }
            let (y_true, y_pred) = confusion_vectors(tp, fp, tn, fn_);
            let m = compute_metrics(&y_true, &y_pred);
            assert!((m.tnr + m.fpr - 1.0).abs() < 1e-12);
            assert!(m.accuracy >= 0.0 && m.accuracy <= 1.0);
            assert!(m.mcc >= -1.0 && m.mcc <= 1.0);
        }
    }

    #[test]
    fn mcc_is_perfect_for_perfect_predictions() {
        let (y_true, y_pred) = confusion_vectors(7, 0, 9, 0);
        let m = compute_metrics(&y_true, &y_pred);
        assert!((m.mcc - 1.0).abs() < 1e-12);
        assert_eq!(m.accuracy, 1.0);
    }

    fn synthetic_table(n: usize, seed: u64) -> RawTable {
        crate::synth::generate(n, seed)
    }

    #[test]
    fn depth_selection_prefers_the_shallower_tie() {
        // two well-separated clusters: every fold and depth scores 1.0,
        // so the shallowest candidate must win
        let matrix: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![if i < 20 { i as f64 } else { 100.0 + i as f64 }])
            .collect();
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i >= 20)).collect();
        let train = crate::models::tests_support::dataset_from(matrix, labels);
        let (best, records) = cross_validate_depth(&train, &[4, 8, 2], 5, 2, 7).unwrap();
        assert_eq!(best, 2);
        assert_eq!(records.len(), 3);
        for r in &records {
            assert!((r.mean_accuracy - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn experiment_runs_end_to_end_on_synthetic_data() {
        let table = synthetic_table(400, 3);
        let config = ExperimentConfig {
            depth_grid: vec![2, 4],
            permutation_iters: 3,
            ..ExperimentConfig::default()
        };
        let out = run_experiment(&table, &config).unwrap();
        assert_eq!(out.manifest.test_rows, out.test.n_rows());
        assert!(out.metrics.accuracy > 0.8, "planted signal should be found");
        // the planted feature dominates the permutation ranking
        assert_eq!(out.permutation.entries[0].feature_name, "f0");
        let imp_sum: f64 = out.impurity.iter().sum();
        assert!((imp_sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn manifest_serialization_is_byte_deterministic() {
        let table = synthetic_table(200, 5);
        let config = ExperimentConfig {
            depth_grid: vec![2, 4],
            permutation_iters: 2,
            ..ExperimentConfig::default()
        };
        let a = run_experiment(&table, &config).unwrap();
        let b = run_experiment(&table, &config).unwrap();
        assert_eq!(
            serde_json::to_vec(&a.manifest).unwrap(),
            serde_json::to_vec(&b.manifest).unwrap()
        );
        assert_eq!(
            serde_json::to_vec(&a.model).unwrap(),
            serde_json::to_vec(&b.model).unwrap()
        );
    }

    #[test]
    fn warning_gate_is_inclusive_at_the_threshold() {
        let table = synthetic_table(300, 9);
        let config = ExperimentConfig {
            depth_grid: vec![3],
            permutation_iters: 1,
            ..ExperimentConfig::default()
        };
        let out = run_experiment(&table, &config).unwrap();
        let explainer = TabularExplainer::from_train(&out.train);
        let opts = ExplainOptions {
            n_samples: 300,
            ..ExplainOptions::default()
        };

        for (i, row) in out.test.matrix.iter().take(40).enumerate() {
            let report = detect(&out.model, &explainer, row, i as u64, 80.0, false, &opts).unwrap();
            // gate definition: warn iff confidence <= threshold
            assert_eq!(report.warning, report.confidence <= 80.0);
            assert_eq!(report.warning, report.explanation.is_some());
        }

        // exact-boundary case via a leaf with counts (4, 1): confidence 80
        let matrix = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        let labels = vec![0, 0, 0, 0, 1];
        let tree = cart::fit(&matrix, &labels, 0, 2).unwrap();
        let train = crate::models::tests_support::dataset_from(matrix, labels);
        let ex = TabularExplainer::from_train(&train);
        let report = detect(&tree, &ex, &[2.0], 0, 80.0, false, &opts).unwrap();
        assert!((report.confidence - 80.0).abs() < 1e-9);
        assert!(report.warning, "boundary confidence must still warn");
    }

    #[test]
    fn strict_attack_mode_always_warns_on_attacks() {
        let matrix = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let labels = vec![0, 0, 1, 1];
        let tree = cart::fit(&matrix, &labels, 4, 2).unwrap();
        let train = crate::models::tests_support::dataset_from(matrix, labels);
        let ex = TabularExplainer::from_train(&train);
        let opts = ExplainOptions {
            n_samples: 200,
            ..ExplainOptions::default()
        };

        // pure leaf: confidence 100, no warning without strict mode
        let relaxed = detect(&tree, &ex, &[3.0], 0, 80.0, false, &opts).unwrap();
        assert_eq!(relaxed.predicted, 1);
        assert!(!relaxed.warning);

        let strict = detect(&tree, &ex, &[3.0], 0, 80.0, true, &opts).unwrap();
        assert!(strict.warning);
        assert!(strict.explanation.is_some());

        // strict mode leaves confident normals alone
        let normal = detect(&tree, &ex, &[0.0], 1, 80.0, true, &opts).unwrap();
        assert_eq!(normal.predicted, 0);
        assert!(!normal.warning);
    }

    #[test]
    fn batch_explanations_are_partition_independent() {
        let table = synthetic_table(200, 13);
        let config = ExperimentConfig {
            depth_grid: vec![3],
            permutation_iters: 1,
            ..ExperimentConfig::default()
        };
        let out = run_experiment(&table, &config).unwrap();
        let explainer = TabularExplainer::from_train(&out.train);
        let opts = ExplainOptions {
            n_samples: 200,
            ..ExplainOptions::default()
        };

        let rows: Vec<Vec<f64>> = out.test.matrix.iter().take(6).cloned().collect();
        let whole = explain_batch(&out.model, &explainer, &rows, 0, &opts).unwrap();
        let first = explain_batch(&out.model, &explainer, &rows[..3], 0, &opts).unwrap();
        let second = explain_batch(&out.model, &explainer, &rows[3..], 3, &opts).unwrap();

        let stitched: Vec<&LocalExplanation> = first.iter().chain(&second).collect();
        for (a, b) in whole.iter().zip(stitched) {
            assert_eq!(
                serde_json::to_string(a).unwrap(),
                serde_json::to_string(b).unwrap()
            );
        }
    }
}

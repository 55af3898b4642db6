//! Dataset-level explanations: permutation importance with across-repeat
//! variation, rendered weight tables, and significant-feature extraction
//! from batches of local explanations.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::localexplain::LocalExplanation;
use crate::models::{accuracy, BlackBoxModel};
use crate::rng;

#[derive(Debug, Error)]
pub enum GlobalError {
    #[error("no explanations provided")]
    EmptyExplanations,
    #[error("feature sets do not match: {0}")]
    FeatureSetMismatch(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature_name: String,
    /// Mean accuracy drop when this feature's column is shuffled.
    pub mean_drop: f64,
    /// Across-repeat standard deviation of the drop.
    pub stddev_drop: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub impurity_weight: Option<f64>,
}

/// Permutation-importance table, sorted by mean drop descending (ties by
/// feature name).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalImportance {
    pub entries: Vec<ImportanceEntry>,
    pub n_iter: usize,
    pub baseline_score: f64,
    pub seed: u64,
}

/// Scoring target for the shuffled column evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringTarget {
    /// Score against the ground-truth labels.
    TrueLabels,
    /// Score against the model's own unshuffled predictions (baseline
    /// accuracy 1 by construction); kept for fidelity experiments.
    SelfPredictions,
}

/// Source of a significant-feature set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignificanceSource {
    Permutation,
    Impurity,
    LocalAggregate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignificantFeatureSet {
    pub features: Vec<String>,
    pub source: SignificanceSource,
}

/// Mean accuracy drop per feature over `n_iter` seeded reshuffles of that
/// feature's column, all other columns fixed. The input matrix is never
/// mutated.
pub fn permutation_importance(
    model: &dyn BlackBoxModel,
    matrix: &[Vec<f64>],
    labels: &[u8],
    feature_names: &[&str],
    n_iter: usize,
    seed: u64,
    target: ScoringTarget,
) -> GlobalImportance {
    assert!(!matrix.is_empty(), "non-empty evaluation set required");
    assert!(n_iter >= 1, "at least one iteration");
    let y_ref: Vec<u8> = match target {
        ScoringTarget::TrueLabels => labels.to_vec(),
        ScoringTarget::SelfPredictions => matrix.iter().map(|x| model.predict(x)).collect(),
    };
    let baseline_score = accuracy(model, matrix, &y_ref);
    let n = matrix.len();
    let n_features = matrix[0].len();

    let mut entries = Vec::with_capacity(n_features);
    for feature in 0..n_features {
        let mut drops = Vec::with_capacity(n_iter);
        for iter in 0..n_iter {
            let mut column: Vec<f64> = matrix.iter().map(|r| r[feature]).collect();
            let stream_id = (feature as u64) << 32 | iter as u64;
            column.shuffle(&mut rng::stream(seed, "permutation_importance", stream_id));
            let correct = matrix
                .iter()
                .zip(&y_ref)
                .enumerate()
                .filter(|(i, (row, &y))| {
                    let mut probe = (*row).clone();
                    probe[feature] = column[*i];
                    model.predict(&probe) == y
                })
                .count();
            drops.push(baseline_score - correct as f64 / n as f64);
        }
        let mean = drops.iter().sum::<f64>() / n_iter as f64;
        let var = drops.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n_iter as f64;
        let stddev = if n_iter >= 2 { var.sqrt() } else { 0.0 };
        entries.push(ImportanceEntry {
            feature_name: feature_names[feature].to_string(),
            mean_drop: mean,
            stddev_drop: stddev,
            impurity_weight: None,
        });
    }
    entries.sort_by(|a, b| {
        b.mean_drop
            .total_cmp(&a.mean_drop)
            .then_with(|| a.feature_name.cmp(&b.feature_name))
    });
    GlobalImportance {
        entries,
        n_iter,
        baseline_score,
        seed,
    }
}

impl GlobalImportance {
    /// Feature names of the `top` entries by mean drop.
    pub fn top_features(&self, top: usize) -> Vec<&str> {
        self.entries
            .iter()
            .take(top)
            .map(|e| e.feature_name.as_str())
            .collect()
    }
}

/// Text weight table: `feature  mean +/- stddev`, descending, with a `+`
/// flag on positive contributors.
pub fn weight_table(gi: &GlobalImportance, top: usize) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "baseline accuracy {:.4} ({} reshuffles)\n",
        gi.baseline_score, gi.n_iter
    ));
    for e in gi.entries.iter().take(top) {
        let flag = if e.mean_drop > 0.0 { "+" } else { " " };
        out.push_str(&format!(
            "{flag} {:<24} {:.4} \u{b1} {:.4}",
            e.feature_name, e.mean_drop, e.stddev_drop
        ));
        if let Some(w) = e.impurity_weight {
            out.push_str(&format!("  (impurity {w:.4})"));
        }
        out.push('\n');
    }
    out
}

/// CSV export of the importance table.
pub fn importance_csv(gi: &GlobalImportance) -> String {
    let mut out = String::from("feature,mean_drop,stddev_drop,impurity_weight\n");
    for e in &gi.entries {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.feature_name,
            e.mean_drop,
            e.stddev_drop,
            e.impurity_weight.map(|w| w.to_string()).unwrap_or_default()
        ));
    }
    out
}

/// Top-N features by aggregated absolute local weight across the given
/// explanations, restricted to instances predicted as `class_filter`
/// (None = no filter). Ties break by feature name.
pub fn extract_significant_features(
    explanations: &[LocalExplanation],
    n: usize,
    class_filter: Option<u8>,
) -> Result<SignificantFeatureSet, GlobalError> {
    if explanations.is_empty() {
        return Err(GlobalError::EmptyExplanations);
    }
    let mut totals: Vec<(String, f64)> = Vec::new();
    for exp in explanations {
        if let Some(class) = class_filter {
            let predicted = u8::from(exp.predicted.1 > exp.predicted.0);
            if predicted != class {
                continue;
            }
        }
        for entry in &exp.entries {
            match totals.iter_mut().find(|(name, _)| *name == entry.feature_name) {
                Some((_, sum)) => *sum += entry.weight.abs(),
                None => totals.push((entry.feature_name.clone(), entry.weight.abs())),
            }
        }
    }
    totals.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    totals.truncate(n);
    Ok(SignificantFeatureSet {
        features: totals.into_iter().map(|(name, _)| name).collect(),
        source: SignificanceSource::LocalAggregate,
    })
}

/// Annotate a permutation table with impurity weights by feature name.
/// Ordering stays by mean drop.
pub fn combine_global(
    gi: &GlobalImportance,
    feature_names: &[&str],
    impurity: &[f64],
) -> Result<GlobalImportance, GlobalError> {
    if feature_names.len() != impurity.len() || feature_names.len() != gi.entries.len() {
        return Err(GlobalError::FeatureSetMismatch(format!(
            "{} importance entries vs {} impurity weights",
            gi.entries.len(),
            impurity.len()
        )));
    }
    let mut out = gi.clone();
    for entry in &mut out.entries {
        let idx = feature_names
            .iter()
            .position(|n| *n == entry.feature_name)
            .ok_or_else(|| GlobalError::FeatureSetMismatch(entry.feature_name.clone()))?;
        entry.impurity_weight = Some(impurity[idx]);
    }
    Ok(out)
}

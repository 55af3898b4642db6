//! Perturbation-based local surrogate explanations for single instances.
//!
//! A prediction is explained by sampling perturbed flow records around the
//! instance, weighting them by proximity, and fitting a weighted ridge
//! surrogate on a binary interpretable representation (quartile-bin match
//! for numerics, same-category match for categoricals).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{EncodedDataset, ScalerStat};
use crate::linalg;
use crate::models::BlackBoxModel;
use crate::rng;
use crate::schema::FeatureKind;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("all selected interpretable columns are constant across samples")]
    DegenerateDesign,
    #[error("instance has {got} features, explainer expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// One perturbed record: model-space vector, binary interpretable vector,
/// black-box output and proximity weight.
#[derive(Debug, Clone)]
pub struct PerturbationSample {
    pub z: Vec<f64>,
    pub z_interp: Vec<f64>,
    pub f_of_z: (f64, f64),
    pub kernel_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Toward {
    Normal,
    Attack,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplanationEntry {
    pub feature_name: String,
    pub condition: String,
    pub weight: f64,
    pub toward: Toward,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalExplanation {
    pub instance_id: u64,
    pub predicted: (f64, f64),
    pub entries: Vec<ExplanationEntry>,
    pub intercept: f64,
    pub fidelity_r2: f64,
    /// Sums of absolute entry weights grouped by direction:
    /// `(sum_normal, sum_attack)`.
    pub class_scores: (f64, f64),
    pub n_samples: usize,
    pub kernel_width: f64,
    pub seed: u64,
}

/// Explainer options. Defaults follow the pipeline defaults: ten reported
/// features, 5000 perturbations, ridge strength 1e-3 and kernel width
/// `0.75 * sqrt(feature_count)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplainOptions {
    pub m: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub kernel_width: Option<f64>,
    pub ridge_lambda: f64,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        Self {
            m: 10,
            n_samples: 5000,
            seed: 0,
            kernel_width: None,
            ridge_lambda: 1e-3,
        }
    }
}

/// Quartile bin edges of a training column: the 25th/50th/75th
/// percentiles by linear interpolation between order statistics, with
/// duplicate edges collapsed. A constant column yields no edges.
pub fn discretize(column: &[f64]) -> Vec<f64> {
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 || sorted[0] == sorted[n - 1] {
        return Vec::new();
    }
    let percentile = |p: f64| -> f64 {
        let pos = p / 100.0 * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        if lo == hi {
            sorted[lo]
        } else {
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    };
    let mut edges = Vec::with_capacity(3);
    for p in [25.0, 50.0, 75.0] {
        let e = percentile(p);
        if edges.last() != Some(&e) {
            edges.push(e);
        }
    }
    edges
}

/// Bin index of `value` given sorted edges: a value equal to an edge
/// falls in the lower bin.
pub fn bin_of(edges: &[f64], value: f64) -> usize {
    edges.iter().filter(|&&e| value > e).count()
}

/// Per-feature interpretable context derived from a training set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabularExplainer {
    pub feature_names: Vec<String>,
    pub kinds: Vec<FeatureKind>,
    /// Quartile edges in standardized space (numeric features).
    pub bin_edges: Vec<Vec<f64>>,
    /// Category names in code order (categorical features).
    pub categories: Vec<Option<Vec<String>>>,
    /// Sampling frequency per category code (categorical features).
    pub cat_freqs: Vec<Vec<f64>>,
    pub scaler: Vec<ScalerStat>,
    pub kernel_width: f64,
}

impl TabularExplainer {
    pub fn from_train(train: &EncodedDataset) -> Self {
        let n_features = train.n_features();
        let kinds = train.feature_kinds();
        let mut bin_edges = vec![Vec::new(); n_features];
        let mut cat_freqs = vec![Vec::new(); n_features];
        for col in 0..n_features {
            match kinds[col] {
                FeatureKind::Numeric => {
                    let column: Vec<f64> = train.matrix.iter().map(|r| r[col]).collect();
                    bin_edges[col] = discretize(&column);
                }
                FeatureKind::Categorical => {
                    cat_freqs[col] = match &train.feature_stats[col] {
                        crate::data::FeatureStat::Categorical { freqs } => freqs.clone(),
                        other => panic!("categorical feature with stats {other:?}"),
                    };
                }
            }
        }
        TabularExplainer {
            feature_names: train.feature_names().iter().map(|s| s.to_string()).collect(),
            kinds,
            bin_edges,
            categories: train.encoders.clone(),
            cat_freqs,
            scaler: train.scaler.clone(),
            kernel_width: 0.75 * (n_features as f64).sqrt(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn category_code(&self, col: usize, value: f64) -> usize {
        (value * self.scaler[col].std + self.scaler[col].mean)
            .round()
            .max(0.0) as usize
    }

    fn scale_code(&self, col: usize, code: usize) -> f64 {
        (code as f64 - self.scaler[col].mean) / self.scaler[col].std
    }

    /// Binary interpretable representation of `z` relative to `instance`:
    /// 1 when the value shares the instance's quartile bin (numeric) or
    /// category (categorical).
    fn interpretable(&self, instance: &[f64], z: &[f64]) -> Vec<f64> {
        (0..self.n_features())
            .map(|col| match self.kinds[col] {
                FeatureKind::Numeric => {
                    let same =
                        bin_of(&self.bin_edges[col], z[col]) == bin_of(&self.bin_edges[col], instance[col]);
                    f64::from(u8::from(same))
                }
                FeatureKind::Categorical => {
                    let same = self.category_code(col, z[col]) == self.category_code(col, instance[col]);
                    f64::from(u8::from(same))
                }
            })
            .collect()
    }

    /// Proximity weight `exp(-d^2 / width^2)`, where `d^2` sums squared
    /// standardized differences for numerics and one unit per mismatched
    /// categorical.
    pub fn kernel_weight(&self, instance: &[f64], z: &[f64], width: f64) -> f64 {
        assert!(width > 0.0, "kernel width must be positive");
        let d2: f64 = (0..self.n_features())
            .map(|col| match self.kinds[col] {
                FeatureKind::Numeric => (instance[col] - z[col]).powi(2),
                FeatureKind::Categorical => {
                    let mismatch =
                        self.category_code(col, instance[col]) != self.category_code(col, z[col]);
                    f64::from(u8::from(mismatch))
                }
            })
            .sum();
        (-d2 / (width * width)).exp()
    }

    /// Draw `n_samples` perturbations. Sample 0 is the instance itself.
    /// Numerics are drawn standard-normal in scaled space (the training
    /// marginal); categoricals are drawn from training frequencies.
    pub fn perturb(
        &self,
        instance: &[f64],
        n_samples: usize,
        seed: u64,
        instance_id: u64,
    ) -> Vec<PerturbationSample> {
        let mut stream = rng::stream(seed, "perturb", instance_id);
        let mut samples = Vec::with_capacity(n_samples);
        samples.push(PerturbationSample {
            z: instance.to_vec(),
            z_interp: vec![1.0; self.n_features()],
            f_of_z: (0.0, 0.0),
            kernel_weight: 1.0,
        });
        for _ in 1..n_samples {
            let z: Vec<f64> = (0..self.n_features())
                .map(|col| match self.kinds[col] {
                    FeatureKind::Numeric => StandardNormal.sample(&mut stream),
                    FeatureKind::Categorical => {
                        let u: f64 = stream.random();
                        let mut acc = 0.0;
                        let freqs = &self.cat_freqs[col];
                        let mut code = freqs.len() - 1;
                        for (i, f) in freqs.iter().enumerate() {
                            acc += f;
                            if u < acc {
                                code = i;
                                break;
                            }
                        }
                        self.scale_code(col, code)
                    }
                })
                .collect();
            let z_interp = self.interpretable(instance, &z);
            samples.push(PerturbationSample {
                z,
                z_interp,
                f_of_z: (0.0, 0.0),
                kernel_weight: 0.0,
            });
        }
        samples
    }

    /// Condition string for one feature of the instance, in standardized
    /// units for numerics.
    fn condition(&self, col: usize, instance: &[f64]) -> String {
        let name = &self.feature_names[col];
        match self.kinds[col] {
            FeatureKind::Categorical => {
                let code = self.category_code(col, instance[col]);
                let cat = self.categories[col]
                    .as_ref()
                    .and_then(|c| c.get(code))
                    .map(String::as_str)
                    .unwrap_or("?");
                format!("{name} = {cat}")
            }
            FeatureKind::Numeric => {
                let edges = &self.bin_edges[col];
                if edges.is_empty() {
                    return format!("{name} = {:.2}", instance[col]);
                }
                match bin_of(edges, instance[col]) {
                    0 => format!("{name} <= {:.2}", edges[0]),
                    b if b == edges.len() => format!("{name} > {:.2}", edges[b - 1]),
                    b => format!("{:.2} < {name} <= {:.2}", edges[b - 1], edges[b]),
                }
            }
        }
    }

    /// Explain one instance: perturb, weight, select the `m` strongest
    /// interpretable features and fit the weighted ridge surrogate on the
    /// attack probability.
    pub fn explain_instance(
        &self,
        model: &dyn BlackBoxModel,
        instance: &[f64],
        instance_id: u64,
        opts: &ExplainOptions,
    ) -> Result<LocalExplanation, ExplainError> {
        if instance.len() != self.n_features() {
            return Err(ExplainError::DimensionMismatch {
                expected: self.n_features(),
                got: instance.len(),
            });
        }
        let width = opts.kernel_width.unwrap_or(self.kernel_width);
        let mut samples = self.perturb(instance, opts.n_samples, opts.seed, instance_id);
        for s in &mut samples {
            s.f_of_z = model.predict_proba(&s.z);
            s.kernel_weight = self.kernel_weight(instance, &s.z, width);
        }

        let m = opts.m.min(self.n_features());
        let selected = select_features(&samples, m, opts.ridge_lambda);
        let (coefficients, intercept, fidelity_r2) =
            fit_surrogate(&samples, &selected, opts.ridge_lambda)?;

        let mut entries: Vec<ExplanationEntry> = selected
            .iter()
            .zip(&coefficients)
            .map(|(&col, &weight)| ExplanationEntry {
                feature_name: self.feature_names[col].clone(),
                condition: self.condition(col, instance),
                weight,
                toward: if weight > 0.0 {
                    Toward::Attack
                } else {
                    Toward::Normal
                },
            })
            .collect();
        entries.sort_by(|a, b| {
            b.weight
                .abs()
                .total_cmp(&a.weight.abs())
                .then_with(|| a.feature_name.cmp(&b.feature_name))
        });

        let class_scores = entries.iter().fold((0.0, 0.0), |(n, a), e| match e.toward {
            Toward::Normal => (n + e.weight.abs(), a),
            Toward::Attack => (n, a + e.weight.abs()),
        });

        Ok(LocalExplanation {
            instance_id,
            predicted: model.predict_proba(instance),
            entries,
            intercept,
            fidelity_r2,
            class_scores,
            n_samples: opts.n_samples,
            kernel_width: width,
            seed: opts.seed,
        })
    }
}

/// Indices of the `m` interpretable features with the largest absolute
/// ridge coefficients over the full representation; ties prefer the
/// lower index.
pub fn select_features(samples: &[PerturbationSample], m: usize, lambda: f64) -> Vec<usize> {
    let n_features = samples[0].z_interp.len();
    let columns: Vec<Vec<f64>> = (0..n_features)
        .map(|col| samples.iter().map(|s| s.z_interp[col]).collect())
        .collect();
    let y: Vec<f64> = samples.iter().map(|s| s.f_of_z.1).collect();
    let w: Vec<f64> = samples.iter().map(|s| s.kernel_weight).collect();
    let coefs = linalg::weighted_ridge(&columns, &y, &w, lambda)
        .map(|(_, c)| c)
        .unwrap_or_else(|| vec![0.0; n_features]);

    let mut order: Vec<usize> = (0..n_features).collect();
    order.sort_by(|&a, &b| coefs[b].abs().total_cmp(&coefs[a].abs()).then(a.cmp(&b)));
    order.truncate(m.min(n_features));
    order
}

/// Weighted ridge fit of the attack probability on the selected
/// interpretable columns. Returns `(coefficients, intercept, fidelity_r2)`
/// with both sums kernel-weighted.
pub fn fit_surrogate(
    samples: &[PerturbationSample],
    selected: &[usize],
    lambda: f64,
) -> Result<(Vec<f64>, f64, f64), ExplainError> {
    let columns: Vec<Vec<f64>> = selected
        .iter()
        .map(|&col| samples.iter().map(|s| s.z_interp[col]).collect::<Vec<f64>>())
        .collect();
    let all_constant = !columns.is_empty()
        && columns
            .iter()
            .all(|c| c.iter().all(|&v| v == c[0]));
    if all_constant {
        return Err(ExplainError::DegenerateDesign);
    }
    let y: Vec<f64> = samples.iter().map(|s| s.f_of_z.1).collect();
    let w: Vec<f64> = samples.iter().map(|s| s.kernel_weight).collect();
    let (intercept, coefficients) = linalg::weighted_ridge(&columns, &y, &w, lambda)
        .ok_or(ExplainError::DegenerateDesign)?;

    let w_sum: f64 = w.iter().sum();
    let y_bar: f64 = y.iter().zip(&w).map(|(yi, wi)| yi * wi).sum::<f64>() / w_sum;
    let ss_tot: f64 = y
        .iter()
        .zip(&w)
        .map(|(yi, wi)| wi * (yi - y_bar).powi(2))
        .sum();
    let ss_res: f64 = samples
        .iter()
        .map(|s| {
            let pred: f64 = intercept
                + selected
                    .iter()
                    .zip(&coefficients)
                    .map(|(&col, c)| c * s.z_interp[col])
                    .sum::<f64>();
            s.kernel_weight * (s.f_of_z.1 - pred).powi(2)
        })
        .sum();
    let fidelity_r2 = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok((coefficients, intercept, fidelity_r2))
}

/// Two-block text rendering: prediction probabilities on the left,
/// per-feature bars with condition strings on the right.
pub fn render_text(explanation: &LocalExplanation) -> String {
    let mut out = String::new();
    out.push_str(&format!("instance {}\n", explanation.instance_id));
    out.push_str("prediction probabilities\n");
    out.push_str(&format!("  NORMAL    {:.4}\n", explanation.predicted.0));
    out.push_str(&format!("  MALICIOUS {:.4}\n", explanation.predicted.1));
    out.push_str("feature contributions\n");
    for e in &explanation.entries {
        let toward = match e.toward {
            Toward::Normal => "normal",
            Toward::Attack => "attack",
        };
        out.push_str(&format!(
            "  {:<34} {:+.4}  -> {toward}\n",
            e.condition, e.weight
        ));
    }
    out.push_str(&format!(
        "class scores: normal {:.4}, attack {:.4}\n",
        explanation.class_scores.0, explanation.class_scores.1
    ));
    out.push_str(&format!(
        "fidelity R2 {:.4} over {} samples (kernel width {:.4})\n",
        explanation.fidelity_r2, explanation.n_samples, explanation.kernel_width
    ));
    out
}

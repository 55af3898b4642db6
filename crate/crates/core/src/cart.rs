//! From-scratch CART binary classifier: Gini impurity, exhaustive midpoint
//! split search, max-depth control and impurity-decrease feature ranking.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CartError {
    #[error("cannot fit a tree on an empty training set")]
    EmptyTraining,
    #[error("input has {got} features, tree expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Gini impurity of a binary count pair: 1 - p0^2 - p1^2.
pub fn gini(n0: usize, n1: usize) -> f64 {
    let total = n0 + n1;
    assert!(total >= 1, "gini of an empty node");
    let p0 = n0 as f64 / total as f64;
    let p1 = n1 as f64 / total as f64;
    1.0 - p0 * p0 - p1 * p1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum CartNode {
    Internal {
        feature_index: usize,
        threshold: f64,
        gini: f64,
        n_samples: usize,
        left: Box<CartNode>,
        right: Box<CartNode>,
    },
    Leaf {
        /// (n_normal, n_attack)
        class_counts: (usize, usize),
        gini: f64,
    },
}

impl CartNode {
    pub fn n_samples(&self) -> usize {
        match self {
            CartNode::Internal { n_samples, .. } => *n_samples,
            CartNode::Leaf { class_counts, .. } => class_counts.0 + class_counts.1,
        }
    }

    fn depth(&self) -> usize {
        match self {
            CartNode::Leaf { .. } => 0,
            CartNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CartTree {
    pub root: CartNode,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub feature_count: usize,
    pub training_row_count: usize,
}

/// Best split for the rows of one feature: `(threshold, weighted_gini)`.
/// Candidate thresholds are midpoints between consecutive distinct sorted
/// values; the scan keeps the first (lowest-threshold) minimum.
fn best_split_for_feature(
    matrix: &[Vec<f64>],
    labels: &[u8],
    rows: &[usize],
    feature: usize,
) -> Option<(f64, f64)> {
    let mut pairs: Vec<(f64, u8)> = rows
        .iter()
        .map(|&r| (matrix[r][feature], labels[r]))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let total = pairs.len();
    let total_attack: usize = pairs.iter().filter(|(_, l)| *l == 1).count();

    let mut best: Option<(f64, f64)> = None;
    let mut left_n = 0usize;
    let mut left_attack = 0usize;
    for i in 0..total - 1 {
        left_n += 1;
        if pairs[i].1 == 1 {
            left_attack += 1;
        }
        if pairs[i].0 == pairs[i + 1].0 {
            continue;
        }
        let threshold = pairs[i].0 + (pairs[i + 1].0 - pairs[i].0) / 2.0;
        let right_n = total - left_n;
        let right_attack = total_attack - left_attack;
        let g_left = gini(left_n - left_attack, left_attack);
        let g_right = gini(right_n - right_attack, right_attack);
        let weighted =
            (left_n as f64 * g_left + right_n as f64 * g_right) / total as f64;
        let better = match best {
            None => true,
            Some((_, w)) => weighted < w,
        };
        if better {
            best = Some((threshold, weighted));
        }
    }
    best
}

// Below this row count the per-feature search runs sequentially.
const PARALLEL_SPLIT_THRESHOLD: usize = 4096;

/// Exhaustive best split over all features for the given rows. Ties break
/// toward the lower feature index, then the lower threshold. Returns
/// `None` when no candidate reduces the node impurity.
pub fn best_split(
    matrix: &[Vec<f64>],
    labels: &[u8],
    rows: &[usize],
) -> Option<(usize, f64, f64)> {
    if rows.len() < 2 {
        return None;
    }
    let n_features = matrix[0].len();
    let attack = rows.iter().filter(|&&r| labels[r] == 1).count();
    let parent_gini = gini(rows.len() - attack, attack);

    let per_feature: Vec<(usize, f64, f64)> = if rows.len() >= PARALLEL_SPLIT_THRESHOLD {
        (0..n_features)
            .into_par_iter()
            .filter_map(|f| {
                best_split_for_feature(matrix, labels, rows, f).map(|(t, w)| (f, t, w))
            })
            .collect()
    } else {
        (0..n_features)
            .filter_map(|f| {
                best_split_for_feature(matrix, labels, rows, f).map(|(t, w)| (f, t, w))
            })
            .collect()
    };

    let best = per_feature.into_iter().min_by(|a, b| {
        a.2.total_cmp(&b.2)
            .then(a.0.cmp(&b.0))
            .then(a.1.total_cmp(&b.1))
    })?;
    if best.2 >= parent_gini - 1e-12 {
        return None;
    }
    Some(best)
}

fn grow(
    matrix: &[Vec<f64>],
    labels: &[u8],
    rows: Vec<usize>,
    depth: usize,
    max_depth: usize,
    min_samples_split: usize,
) -> CartNode {
    let attack = rows.iter().filter(|&&r| labels[r] == 1).count();
    let counts = (rows.len() - attack, attack);
    let node_gini = gini(counts.0, counts.1);

    let leaf = CartNode::Leaf {
        class_counts: counts,
        gini: node_gini,
    };
    if node_gini == 0.0 || depth >= max_depth || rows.len() < min_samples_split {
        return leaf;
    }
    let Some((feature, threshold, _)) = best_split(matrix, labels, &rows) else {
        return leaf;
    };

    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .partition(|&&r| matrix[r][feature] <= threshold);
    debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());

    let n_samples = rows.len();
    let left = grow(matrix, labels, left_rows, depth + 1, max_depth, min_samples_split);
    let right = grow(matrix, labels, right_rows, depth + 1, max_depth, min_samples_split);
    CartNode::Internal {
        feature_index: feature,
        threshold,
        gini: node_gini,
        n_samples,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Fit a tree by recursive greedy splitting. A node becomes a leaf when
/// pure, at `max_depth`, below `min_samples_split`, or when no split
/// reduces impurity.
pub fn fit(
    matrix: &[Vec<f64>],
    labels: &[u8],
    max_depth: usize,
    min_samples_split: usize,
) -> Result<CartTree, CartError> {
    if matrix.is_empty() {
        return Err(CartError::EmptyTraining);
    }
    let rows: Vec<usize> = (0..matrix.len()).collect();
    let root = grow(matrix, labels, rows, 0, max_depth, min_samples_split.max(2));
    Ok(CartTree {
        root,
        max_depth,
        min_samples_split: min_samples_split.max(2),
        feature_count: matrix[0].len(),
        training_row_count: matrix.len(),
    })
}

impl CartTree {
    /// Route by threshold comparisons (`x[f] <= threshold` goes left) and
    /// return the leaf class counts normalized to `(p_normal, p_attack)`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<(f64, f64), CartError> {
        if x.len() != self.feature_count {
            return Err(CartError::DimensionMismatch {
                expected: self.feature_count,
                got: x.len(),
            });
        }
        let mut node = &self.root;
        loop {
            match node {
                CartNode::Leaf { class_counts, .. } => {
                    let total = (class_counts.0 + class_counts.1) as f64;
                    return Ok((class_counts.0 as f64 / total, class_counts.1 as f64 / total));
                }
                CartNode::Internal {
                    feature_index,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if x[*feature_index] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<u8, CartError> {
        let (_, p_attack) = self.predict_proba(x)?;
        Ok(u8::from(p_attack > 0.5))
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Un-normalized impurity importances: the total weighted impurity
    /// decrease contributed by each feature's internal nodes.
    pub fn impurity_importance_raw(&self) -> Vec<f64> {
        let mut importance = vec![0.0; self.feature_count];
        let total = self.root.n_samples() as f64;
        let mut stack = vec![&self.root];
        while let Some(node) = stack.pop() {
            if let CartNode::Internal {
                feature_index,
                gini,
                n_samples,
                left,
                right,
                ..
            } = node
            {
                let mass = |n: &CartNode| {
                    let g = match n {
                        CartNode::Internal { gini, .. } => *gini,
                        CartNode::Leaf { gini, .. } => *gini,
                    };
                    n.n_samples() as f64 / total * g
                };
                importance[*feature_index] +=
                    *n_samples as f64 / total * gini - mass(left) - mass(right);
                stack.push(left);
                stack.push(right);
            }
        }
        importance
    }

    /// Impurity importances normalized to sum 1 when any is positive.
    pub fn impurity_importance(&self) -> Vec<f64> {
        let raw = self.impurity_importance_raw();
        let sum: f64 = raw.iter().sum();
        if sum > 0.0 {
            raw.into_iter().map(|v| v / sum).collect()
        } else {
            raw
        }
    }

    /// Indented text rendering of the decision levels.
    pub fn render_text(&self, feature_names: &[&str]) -> String {
        let mut out = String::new();
        render_node(&self.root, feature_names, 0, &mut out);
        out
    }
}

fn render_node(node: &CartNode, names: &[&str], indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match node {
        CartNode::Leaf { class_counts, gini } => {
            let verdict = if class_counts.1 > class_counts.0 {
                "attack"
            } else {
                "normal"
            };
            out.push_str(&format!(
                "{pad}leaf: {verdict} (normal={}, attack={}, gini={gini:.4})\n",
                class_counts.0, class_counts.1
            ));
        }
        CartNode::Internal {
            feature_index,
            threshold,
            gini,
            n_samples,
            left,
            right,
        } => {
            let name = names
                .get(*feature_index)
                .copied()
                .unwrap_or("<unknown>");
            out.push_str(&format!(
                "{pad}{name} <= {threshold:.4} (gini={gini:.4}, samples={n_samples})\n"
            ));
            render_node(left, names, indent + 1, out);
            render_node(right, names, indent + 1, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_units() {
        assert_eq!(gini(10, 0), 0.0);
        assert_eq!(gini(5, 5), 0.5);
        assert_eq!(gini(2, 6), 0.375);
    }

    #[test]
    fn best_split_on_separable_column() {
        // enumerate the 3 candidates by hand: 1.5 -> 0.333, 2.5 -> 0,
        // 3.5 -> 0.333; the winner is (2.5, 0)
        let matrix = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        let labels = vec![0, 0, 1, 1];
        let rows = vec![0, 1, 2, 3];
        let (f, t, w) = best_split(&matrix, &labels, &rows).unwrap();
        assert_eq!(f, 0);
        assert_eq!(t, 2.5);
        assert_eq!(w, 0.0);
    }

    #[test]
    fn no_split_on_pure_node() {
        let matrix = vec![vec![1.0], vec![2.0], vec![3.0]];
        let labels = vec![1, 1, 1];
        assert!(best_split(&matrix, &labels, &[0, 1, 2]).is_none());
    }

    #[test]
    fn equal_gain_prefers_lower_feature_index() {
        // feature 1 duplicates feature 0; both give identical gains
        let matrix = vec![
            vec![1.0, 1.0],
            vec![2.0, 2.0],
            vec![3.0, 3.0],
            vec![4.0, 4.0],
        ];
        let labels = vec![0, 0, 1, 1];
        let (f, _, _) = best_split(&matrix, &labels, &[0, 1, 2, 3]).unwrap();
        assert_eq!(f, 0);
    }

    #[test]
    fn separable_data_fits_depth_one() {
        let matrix = vec![vec![-1.0], vec![-2.0], vec![1.0], vec![2.0]];
        let labels = vec![0, 0, 1, 1];
        let tree = fit(&matrix, &labels, 8, 2).unwrap();
        assert_eq!(tree.depth(), 1);
        for (x, y) in matrix.iter().zip(&labels) {
            assert_eq!(tree.predict(x).unwrap(), *y);
        }
    }

    #[test]
    fn depth_zero_is_a_majority_stump() {
        let matrix = vec![vec![0.0], vec![1.0], vec![2.0]];
        let labels = vec![1, 1, 0];
        let tree = fit(&matrix, &labels, 0, 2).unwrap();
        assert!(matches!(tree.root, CartNode::Leaf { .. }));
        assert_eq!(tree.predict(&[5.0]).unwrap(), 1);
    }

    #[test]
    fn xor_collapses_to_a_stump_under_the_gain_gate() {
        // on 4-point XOR no single axis split reduces gini, so greedy
        // growth stops immediately
        let matrix = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ];
        let labels = vec![0, 1, 1, 0];
        let tree = fit(&matrix, &labels, 2, 2).unwrap();
        assert!(matches!(tree.root, CartNode::Leaf { .. }));
    }

    #[test]
    fn nested_intervals_fit_at_depth_two() {
        // 0 1 1 0 0 0 along one axis: the first split isolates the pure
        // right tail, the second separates the leading zero
        let matrix: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let labels = vec![0, 1, 1, 0, 0, 0];
        let tree = fit(&matrix, &labels, 2, 2).unwrap();
        assert_eq!(tree.depth(), 2);
        for (x, y) in matrix.iter().zip(&labels) {
            assert_eq!(tree.predict(x).unwrap(), *y, "tree misses row {x:?}");
        }
    }

    #[test]
    fn full_depth_tree_memorizes_training_rows() {
        let matrix: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, (i * 3 % 7) as f64]).collect();
        let labels: Vec<u8> = (0..8).map(|i| u8::from(i % 3 == 0)).collect();
        let tree = fit(&matrix, &labels, 32, 2).unwrap();
        for (x, y) in matrix.iter().zip(&labels) {
            let (p0, p1) = tree.predict_proba(x).unwrap();
            let p_own = if *y == 1 { p1 } else { p0 };
            assert_eq!(p_own, 1.0);
        }
    }

    #[test]
    fn proba_normalizes_leaf_counts() {
        let tree = CartTree {
            root: CartNode::Leaf {
                class_counts: (3, 1),
                gini: gini(3, 1),
            },
            max_depth: 0,
            min_samples_split: 2,
            feature_count: 1,
            training_row_count: 4,
        };
        assert_eq!(tree.predict_proba(&[0.0]).unwrap(), (0.75, 0.25));
    }

    #[test]
    fn boundary_value_routes_left() {
        let matrix = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        let labels = vec![0, 0, 1, 1];
        let tree = fit(&matrix, &labels, 4, 2).unwrap();
        // threshold is 2.5; a probe exactly at it goes left
        assert_eq!(tree.predict(&[2.5]).unwrap(), 0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let matrix = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let labels = vec![0, 1];
        let tree = fit(&matrix, &labels, 4, 2).unwrap();
        assert!(matches!(
            tree.predict_proba(&[1.0]),
            Err(CartError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn empty_training_is_an_error() {
        assert!(matches!(fit(&[], &[], 4, 2), Err(CartError::EmptyTraining)));
    }

    #[test]
    fn single_split_importance_is_one() {
        let matrix = vec![vec![-1.0, 9.0], vec![1.0, 9.0]];
        let labels = vec![0, 1];
        let tree = fit(&matrix, &labels, 4, 2).unwrap();
        let imp = tree.impurity_importance();
        assert_eq!(imp, vec![1.0, 0.0]);
    }

    #[test]
    fn depth_two_importances_match_hand_computation() {
        // 8 rows, 2 features. Feature 0 separates {0..3} from {4..7};
        // within the left half feature 1 separates labels.
        let matrix = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 2.0],
            vec![0.0, 3.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![1.0, 2.0],
            vec![1.0, 3.0],
        ];
        let labels = vec![0, 0, 1, 1, 1, 1, 1, 1];
        let tree = fit(&matrix, &labels, 2, 2).unwrap();
        // hand computation for this fixed tree:
        // root: gini(2,6) = 0.375, splits feature 0 -> left (2,2) g=0.5, right (0,4) g=0
        //   decrease_f0 = 0.375 - 4/8*0.5 - 4/8*0 = 0.125
        // left node: gini 0.5, splits feature 1 -> two pure halves
        //   decrease_f1 = 4/8*0.5 - 0 - 0 = 0.25
        let raw = tree.impurity_importance_raw();
        assert!((raw[0] - 0.125).abs() < 1e-12);
        assert!((raw[1] - 0.25).abs() < 1e-12);
        let norm = tree.impurity_importance();
        assert!((norm[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((norm[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn importance_conserves_gini_mass() {
        let matrix: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i % 7) as f64, (i % 5) as f64, (i % 3) as f64])
            .collect();
        let labels: Vec<u8> = (0..40).map(|i| u8::from((i * 13 % 40) < 17)).collect();
        let tree = fit(&matrix, &labels, 6, 2).unwrap();
        let raw_sum: f64 = tree.impurity_importance_raw().iter().sum();

        let total = tree.root.n_samples() as f64;
        let root_mass = match &tree.root {
            CartNode::Internal { gini, n_samples, .. } => *n_samples as f64 / total * gini,
            CartNode::Leaf { class_counts, gini } => {
                (class_counts.0 + class_counts.1) as f64 / total * gini
            }
        };
        let mut leaf_mass = 0.0;
        let mut stack = vec![&tree.root];
        while let Some(n) = stack.pop() {
            match n {
                CartNode::Leaf { class_counts, gini } => {
                    leaf_mass += (class_counts.0 + class_counts.1) as f64 / total * gini;
                }
                CartNode::Internal { left, right, .. } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        assert!((raw_sum - (root_mass - leaf_mass)).abs() < 1e-9);
    }

    #[test]
    fn training_accuracy_monotone_in_depth() {
        let matrix: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![(i * 17 % 23) as f64, (i * 11 % 19) as f64])
            .collect();
        let labels: Vec<u8> = (0..60).map(|i| u8::from((i * 7 % 13) < 6)).collect();
        let mut last = 0.0;
        for depth in [0, 1, 2, 4, 8, 16] {
            let tree = fit(&matrix, &labels, depth, 2).unwrap();
            let correct = matrix
                .iter()
                .zip(&labels)
                .filter(|(x, y)| tree.predict(x).unwrap() == **y)
                .count();
            let acc = correct as f64 / matrix.len() as f64;
            assert!(
                acc >= last - 1e-12,
                "accuracy dropped from {last} to {acc} at depth {depth}"
            );
            last = acc;
        }
    }

    #[test]
    fn tree_json_round_trips() {
        let matrix = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0]];
        let labels = vec![0, 1, 0];
        let tree = fit(&matrix, &labels, 4, 2).unwrap();
        let json = serde_json::to_string(&tree).unwrap();
        let back: CartTree = serde_json::from_str(&json).unwrap();
        for x in &matrix {
            assert_eq!(
                tree.predict_proba(x).unwrap(),
                back.predict_proba(x).unwrap()
            );
        }
    }

    #[test]
    fn text_rendering_lists_levels() {
        let matrix = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        let labels = vec![0, 0, 1, 1];
        let tree = fit(&matrix, &labels, 4, 2).unwrap();
        let text = tree.render_text(&["sttl"]);
        assert!(text.starts_with("sttl <= 2.5000"));
        assert!(text.contains("leaf: normal"));
        assert!(text.contains("leaf: attack"));
    }
}

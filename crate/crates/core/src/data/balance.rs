//! Class balancing: SMOTE oversampling and random undersampling.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::rng;

use super::{DataError, EncodedDataset};

fn minority_majority(data: &EncodedDataset) -> (u8, usize, u8, usize) {
    let (normal, attack) = data.class_counts();
    if attack < normal {
        (1, attack, 0, normal)
    } else {
        (0, normal, 1, attack)
    }
}

/// Append synthetic minority rows until the minority count reaches
/// `ratio` x majority count. Each synthetic row is `x + u * (nn - x)` for
/// a random minority row `x`, one of its k nearest minority neighbors
/// `nn` (Euclidean) and `u` uniform in [0, 1].
pub fn smote_balance(
    data: &EncodedDataset,
    k: usize,
    ratio: f64,
    seed: u64,
) -> Result<EncodedDataset, DataError> {
    assert!(k >= 1, "k >= 1");
    let (min_label, min_count, _, maj_count) = minority_majority(data);
    if min_count < 2 {
        return Err(DataError::SingletonMinority);
    }
    let target = (ratio * maj_count as f64).round() as usize;
    if target <= min_count {
        return Ok(data.clone());
    }
    let n_new = target - min_count;

    let minority: Vec<&Vec<f64>> = data
        .matrix
        .iter()
        .zip(&data.labels)
        .filter(|(_, &l)| l == min_label)
        .map(|(row, _)| row)
        .collect();
    let k = k.min(minority.len() - 1);

    // draw all random choices sequentially so the result is independent
    // of how the interpolation work is scheduled
    let mut stream = rng::stream(seed, "smote", 0);
    let draws: Vec<(usize, usize, f64)> = (0..n_new)
        .map(|_| {
            let base = stream.random_range(0..minority.len());
            let neighbor_rank = stream.random_range(0..k);
            let u: f64 = stream.random();
            (base, neighbor_rank, u)
        })
        .collect();

    let synthetic: Vec<Vec<f64>> = draws
        .par_iter()
        .map(|&(base, neighbor_rank, u)| {
            let x = minority[base];
            let nn = nearest(&minority, base, neighbor_rank, k);
            x.iter().zip(nn).map(|(a, b)| a + u * (b - a)).collect()
        })
        .collect();

    let mut out = data.clone();
    for row in synthetic {
        out.matrix.push(row);
        out.labels.push(min_label);
    }
    Ok(out)
}

/// The `rank`-th nearest of the k nearest neighbors of `minority[base]`
/// among the other minority rows.
fn nearest<'a>(minority: &[&'a Vec<f64>], base: usize, rank: usize, k: usize) -> &'a Vec<f64> {
    let x = minority[base];
    let mut dists: Vec<(f64, usize)> = minority
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != base)
        .map(|(i, row)| {
            let d2: f64 = x.iter().zip(row.iter()).map(|(a, b)| (a - b).powi(2)).sum();
            (d2, i)
        })
        .collect();
    dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (_, idx) = dists[rank.min(k - 1)];
    minority[idx]
}

/// Subsample the majority class without replacement down to the minority
/// count. Deterministic per seed.
pub fn random_undersample(data: &EncodedDataset, seed: u64) -> Result<EncodedDataset, DataError> {
    let (normal, attack) = data.class_counts();
    if normal == 0 || attack == 0 {
        return Err(DataError::SingletonMinority);
    }
    if normal == attack {
        return Ok(data.clone());
    }
    let (min_label, min_count, maj_label, _) = minority_majority(data);

    let majority_idx: Vec<usize> = (0..data.n_rows())
        .filter(|&i| data.labels[i] == maj_label)
        .collect();
    let mut shuffled = majority_idx;
    shuffled.shuffle(&mut rng::stream(seed, "undersample", 0));
    let mut keep: Vec<usize> = shuffled[..min_count].to_vec();
    keep.extend((0..data.n_rows()).filter(|&i| data.labels[i] == min_label));
    keep.sort_unstable();

    let mut out = data.clone();
    out.matrix = keep.iter().map(|&i| data.matrix[i].clone()).collect();
    out.labels = keep.iter().map(|&i| data.labels[i]).collect();
    Ok(out)
}

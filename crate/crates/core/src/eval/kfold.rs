//! Stratified k-fold partitions and micro-F1.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::LabeledSet;

#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: LabeledSet,
    pub test: LabeledSet,
}

/// Each class is shuffled with `seed` and dealt round-robin over the folds,
/// so per-fold class counts differ by at most one.
pub fn kfold_split(labeled: &LabeledSet, k: usize, seed: u64, node_count: usize) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    let counts = labeled.class_counts();
    if let Some(c) = (0..2).find(|&c| counts[c] < k) {
        return Err(Error::InvalidLabels(format!(
            "class {c} has {} labeled nodes, fewer than {k} folds",
            counts[c]
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment: Vec<Vec<(usize, u8)>> = vec![Vec::new(); k];
    for class in 0..2u8 {
        let mut members: Vec<(usize, u8)> = labeled.entries().iter().copied().filter(|e| e.1 == class).collect();
        members.shuffle(&mut rng);
        for (i, e) in members.into_iter().enumerate() {
            assignment[i % k].push(e);
        }
    }
    (0..k)
        .map(|f| {
            let mut test = assignment[f].clone();
            let mut train: Vec<(usize, u8)> = (0..k)
                .filter(|&o| o != f)
                .flat_map(|o| assignment[o].iter().copied())
                .collect();
            test.sort_unstable();
            train.sort_unstable();
            Ok(Fold {
                train: LabeledSet::new(train, node_count)?,
                test: LabeledSet::new(test, node_count)?,
            })
        })
        .collect()
}

/// Checks that the folds' test sets are disjoint, cover `labeled`, and are
/// stratified to within one node per class of the global ratio.
pub fn verify_folds(labeled: &LabeledSet, folds: &[Fold]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for f in folds {
        for &(u, _) in f.test.entries() {
            if !seen.insert(u) {
                return Err(Error::InvalidLabels(format!("node {u} appears in two test folds")));
            }
        }
        if f.train.len() + f.test.len() != labeled.len() {
            return Err(Error::InvalidLabels(
                "train and test do not split the labeled set".into(),
            ));
        }
    }
    if seen.len() != labeled.len() || labeled.entries().iter().any(|(u, _)| !seen.contains(u)) {
        return Err(Error::InvalidLabels("test folds do not cover the labeled set".into()));
    }
    let global = labeled.class_counts();
    let k = folds.len() as f64;
    for f in folds {
        let c = f.test.class_counts();
        for class in 0..2 {
            let expect = global[class] as f64 / k;
            if (c[class] as f64 - expect).abs() > 1.0 {
                return Err(Error::InvalidLabels(format!(
                    "fold holds {} of class {class}, expected about {expect:.1}",
                    c[class]
                )));
            }
        }
    }
    Ok(())
}

pub fn accuracy(pred: &[u8], truth: &[u8]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    Ok(pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / pred.len() as f64)
}

/// Micro-averaged F1 over both classes from pooled TP, FP and FN counts.
/// For single-label binary data this equals accuracy, which is checked.
pub fn micro_f1(pred: &[u8], truth: &[u8]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Shape("micro-F1 of an empty set".into()));
    }
    let (mut tp, mut fp, mut fnn) = (0usize, 0usize, 0usize);
    for class in 0..2u8 {
        for (&p, &t) in pred.iter().zip(truth) {
            match (p == class, t == class) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fnn += 1,
                _ => {}
            }
        }
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fnn) as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let acc = accuracy(pred, truth)?;
    if (f1 - acc).abs() > 1e-12 {
        return Err(Error::Numeric(format!("micro-F1 {f1} disagrees with accuracy {acc}")));
    }
    Ok(f1)
}

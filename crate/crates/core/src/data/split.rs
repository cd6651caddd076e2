//! Labels with disjoint train/validation/test node sets.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{stream, tag};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSplit {
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl LabeledSplit {
    pub fn new(
        labels: Vec<usize>,
        num_classes: usize,
        train: Vec<usize>,
        val: Vec<usize>,
        test: Vec<usize>,
    ) -> Result<Self> {
        let s = Self {
            labels,
            num_classes,
            train,
            val,
            test,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((i, &c)) = self.labels.iter().enumerate().find(|(_, &c)| c >= self.num_classes) {
            return Err(Error::InvalidConfig(format!(
                "node {i} has label {c} but there are {} classes",
                self.num_classes
            )));
        }
        let mut owner = vec![None; self.labels.len()];
        for (name, set) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &v in set {
                let slot = owner.get_mut(v).ok_or(Error::NodeOutOfRange {
                    node: v,
                    num_nodes: self.labels.len(),
                })?;
                if let Some(prev) = slot {
                    return Err(Error::InvalidConfig(format!(
                        "node {v} appears in both the {prev} and {name} masks"
                    )));
                }
                *slot = Some(name);
            }
        }
        Ok(())
    }

    /// The same split under the node relabeling `perm[old] = new`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut labels = vec![0; self.labels.len()];
        for (old, &new) in perm.iter().enumerate() {
            labels[new] = self.labels[old];
        }
        let map = |s: &[usize]| s.iter().map(|&v| perm[v]).collect();
        Self {
            labels,
            num_classes: self.num_classes,
            train: map(&self.train),
            val: map(&self.val),
            test: map(&self.test),
        }
    }
}

/// Stratified split: each class contributes `⌈ratio·n_c⌉` training nodes and
/// the remaining labeled nodes are divided evenly between validation and test.
pub fn export_split_by_ratio(labels: &[usize], num_classes: usize, train_ratio: f64, seed: u64) -> Result<LabeledSplit> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::InvalidConfig(format!("train ratio {train_ratio} outside (0, 1)")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (v, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(v);
    }
    if let Some(c) = (0..num_classes).find(|c| !by_class.contains_key(c)) {
        return Err(Error::InvalidConfig(format!("class {c} has no labeled nodes to split")));
    }
    let mut rng = stream(&[seed, tag::SPLIT]);
    let mut train = Vec::new();
    let mut rest = Vec::new();
    for (c, mut nodes) in by_class {
        let k = (train_ratio * nodes.len() as f64 - 1e-9).ceil() as usize;
        if k == 0 {
            return Err(Error::InvalidConfig(format!(
                "class {c} gets no training node at ratio {train_ratio}; use a ratio of at least {:.4}",
                1.0 / nodes.len() as f64
            )));
        }
        nodes.shuffle(&mut rng);
        train.extend_from_slice(&nodes[..k]);
        rest.extend_from_slice(&nodes[k..]);
    }
    rest.shuffle(&mut rng);
    let half = rest.len() / 2;
    let test = rest.split_off(half);
    let mut val = rest;
    train.sort_unstable();
    val.sort_unstable();
    let mut test = test;
    test.sort_unstable();
    LabeledSplit::new(labels.to_vec(), num_classes, train, val, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_split_counts() {
        let labels: Vec<usize> = (0..103).map(|i| i % 3).collect();
        let s = export_split_by_ratio(&labels, 3, 0.1, 4).unwrap();
        for c in 0..3 {
            let n_c = labels.iter().filter(|&&l| l == c).count();
            let got = s.train.iter().filter(|&&v| labels[v] == c).count();
            assert_eq!(got, (0.1 * n_c as f64).ceil() as usize);
        }
        assert!(s.val.len().abs_diff(s.test.len()) <= 1);
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), 103);
        assert_eq!(s, export_split_by_ratio(&labels, 3, 0.1, 4).unwrap());
    }

    #[test]
    fn overlapping_masks_rejected() {
        let err = LabeledSplit::new(vec![0, 1], 2, vec![0], vec![0], vec![]).unwrap_err();
        assert!(err.to_string().contains("both"));
        assert!(LabeledSplit::new(vec![0, 2], 2, vec![0], vec![], vec![]).is_err());
    }
}

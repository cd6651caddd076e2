//! Stochastic block model graphs with planted cross-block noise edges.

use std::collections::HashSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::split::LabeledSplit;
use super::Dataset;
use crate::error::{Error, Result};
use crate::features::NodeFeatures;
use crate::graph::Graph;
use crate::seed::{stream, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmConfig {
    pub block_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Length of each block's mean vector; the per-coordinate noise is N(0, 1).
    pub feature_signal: f64,
    /// Injected cross-block edges, as a fraction of the sampled edge count.
    pub noise_edge_fraction: f64,
    pub seed: u64,
}

impl SbmConfig {
    pub fn two_block(block: usize, p_in: f64, p_out: f64, seed: u64) -> Self {
        Self {
            block_sizes: vec![block, block],
            p_in,
            p_out,
            feature_dim: 32,
            feature_signal: 3.0,
            noise_edge_fraction: 0.0,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SbmData {
    pub dataset: Dataset,
    pub blocks: Vec<usize>,
    /// Injected cross-block edges (u < v); always a subset of the graph's edges.
    pub noise_edges: Vec<(usize, usize)>,
}

pub fn generate_sbm(cfg: &SbmConfig) -> Result<SbmData> {
    for (name, p) in [("p_in", cfg.p_in), ("p_out", cfg.p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidConfig(format!("{name} = {p} is not a probability")));
        }
    }
    if !(cfg.noise_edge_fraction >= 0.0 && cfg.noise_edge_fraction.is_finite()) {
        return Err(Error::InvalidConfig("noise_edge_fraction must be non-negative".into()));
    }
    if cfg.block_sizes.len() < 2 || cfg.block_sizes.contains(&0) {
        return Err(Error::InvalidConfig("an SBM needs at least two non-empty blocks".into()));
    }
    let mut rng = stream(&[cfg.seed, tag::SBM]);
    let blocks: Vec<usize> = cfg
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &n)| std::iter::repeat(b).take(n))
        .collect();
    let n = blocks.len();

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if blocks[u] == blocks[v] { cfg.p_in } else { cfg.p_out };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let wanted = (cfg.noise_edge_fraction * edges.len() as f64).round() as usize;
    let existing: HashSet<(usize, usize)> = edges.iter().copied().collect();
    let mut cross: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
        .filter(|&(u, v)| blocks[u] != blocks[v] && !existing.contains(&(u, v)))
        .collect();
    if wanted > cross.len() {
        return Err(Error::InvalidConfig(format!(
            "{wanted} noise edges requested but only {} cross-block non-edges exist",
            cross.len()
        )));
    }
    let (picked, _) = cross.partial_shuffle(&mut rng, wanted);
    let mut noise_edges = picked.to_vec();
    noise_edges.sort_unstable();
    edges.extend_from_slice(&noise_edges);
    let graph = Graph::from_edges(n, edges)?;

    let k = cfg.block_sizes.len();
    let d = cfg.feature_dim;
    let mut means = Array2::<f64>::from_shape_simple_fn((k, d), || rng.sample(StandardNormal));
    for mut row in means.rows_mut() {
        let norm = row.dot(&row).sqrt().max(1e-12);
        row.mapv_inplace(|v| cfg.feature_signal * v / norm);
    }
    let mut x = Array2::<f64>::from_shape_simple_fn((n, d), || rng.sample(StandardNormal));
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        row += &means.row(blocks[i]);
    }

    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for b in 0..k {
        let mut members: Vec<usize> = (0..n).filter(|&i| blocks[i] == b).collect();
        members.shuffle(&mut rng);
        let n_tr = ((0.1 * members.len() as f64).round() as usize).max(1);
        let n_va = (0.2 * members.len() as f64).round() as usize;
        train.extend_from_slice(&members[..n_tr]);
        val.extend_from_slice(&members[n_tr..(n_tr + n_va).min(members.len())]);
        test.extend_from_slice(&members[(n_tr + n_va).min(members.len())..]);
    }
    for s in [&mut train, &mut val, &mut test] {
        s.sort_unstable();
    }
    let split = LabeledSplit::new(blocks.clone(), k, train, val, test)?;
    Ok(SbmData {
        dataset: Dataset {
            name: format!("sbm-{}x{}", k, n / k),
            graph,
            features: NodeFeatures::Dense(x),
            split,
        },
        blocks,
        noise_edges,
    })
}

//! Structural node embeddings from truncated random walks and skip-gram with
//! negative sampling.

use log::debug;
use ndarray::Array2;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::seed::{derive_seed, stream, tag};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkCorpus {
    /// Pass-major: every pass visits all non-isolated roots in a shuffled order.
    pub walks: Vec<Vec<usize>>,
    pub walks_per_node: usize,
    pub walk_length: usize,
}

impl WalkCorpus {
    pub fn num_tokens(&self) -> usize {
        self.walks.iter().map(Vec::len).sum()
    }
}

/// Uniform random walks, `walks_per_node` per non-isolated root. Each walk has
/// its own random stream derived from `(seed, root, walk index)`, so the
/// corpus does not depend on scheduling.
pub fn generate_walks(g: &Graph, walks_per_node: usize, walk_length: usize, seed: u64) -> Result<WalkCorpus> {
    if walk_length == 0 {
        return Err(Error::InvalidConfig("walk length must be at least 1".into()));
    }
    let roots = g.non_isolated_nodes();
    let mut walks = Vec::with_capacity(roots.len() * walks_per_node);
    for pass in 0..walks_per_node {
        let mut order = roots.clone();
        order.shuffle(&mut stream(&[seed, tag::WALKS, u64::MAX, pass as u64]));
        let batch: Vec<Vec<usize>> = order
            .par_iter()
            .map(|&root| {
                let mut rng = stream(&[seed, tag::WALKS, root as u64, pass as u64]);
                let mut walk = Vec::with_capacity(walk_length);
                walk.push(root);
                let mut cur = root;
                while walk.len() < walk_length {
                    let nb = g.neighbors(cur);
                    if nb.is_empty() {
                        break;
                    }
                    cur = nb[rng.gen_range(0..nb.len())];
                    walk.push(cur);
                }
                walk
            })
            .collect();
        walks.extend(batch);
    }
    Ok(WalkCorpus {
        walks,
        walks_per_node,
        walk_length,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial learning rate; decays linearly towards `lr * 1e-4`.
    pub lr: f64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
        }
    }
}

/// `num_nodes × dim` structural embedding with unit-norm rows.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralEmbedding(pub Array2<f64>);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkipGramReport {
    pub heldout_pairs: usize,
    pub heldout_loss_initial: f64,
    pub heldout_loss_final: f64,
    pub pairs_trained: u64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(-x))` without overflow.
fn softplus_neg(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradients of one skip-gram pair loss
/// `−log σ(c·o₊) − Σₙ log σ(−c·oₙ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradients {
    pub loss: f64,
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

pub fn pair_loss(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> f64 {
    softplus_neg(dot(center, context)) + negatives.iter().map(|n| softplus_neg(-dot(center, n))).sum::<f64>()
}

pub fn pair_gradients(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> PairGradients {
    let d = center.len();
    let mut gc = vec![0.0; d];
    let s = sigmoid(dot(center, context)) - 1.0;
    for k in 0..d {
        gc[k] += s * context[k];
    }
    let gctx = center.iter().map(|c| s * c).collect();
    let mut gneg = Vec::with_capacity(negatives.len());
    for n in negatives {
        let sn = sigmoid(dot(center, n));
        for k in 0..d {
            gc[k] += sn * n[k];
        }
        gneg.push(center.iter().map(|c| sn * c).collect());
    }
    PairGradients {
        loss: pair_loss(center, context, negatives),
        center: gc,
        context: gctx,
        negatives: gneg,
    }
}

const HOLDOUT_MODULUS: u64 = 20;
const MAX_HELDOUT: usize = 20_000;

fn is_heldout(seed: u64, walk: usize, i: usize, j: usize) -> bool {
    derive_seed(&[seed, tag::SKIPGRAM, walk as u64, i as u64, j as u64]) % HOLDOUT_MODULUS == 0
}

struct Model {
    input: Vec<f64>,
    output: Vec<f64>,
    dim: usize,
}

impl Model {
    fn inp(&self, i: usize) -> &[f64] {
        &self.input[i * self.dim..(i + 1) * self.dim]
    }

    fn out(&self, i: usize) -> &[f64] {
        &self.output[i * self.dim..(i + 1) * self.dim]
    }

    fn heldout_loss(&self, pairs: &[(usize, usize, Vec<usize>)]) -> f64 {
        if pairs.is_empty() {
            return 0.0;
        }
        let total: f64 = pairs
            .iter()
            .map(|(c, o, negs)| {
                let nv: Vec<&[f64]> = negs.iter().map(|&n| self.out(n)).collect();
                pair_loss(self.inp(*c), self.out(*o), &nv)
            })
            .sum();
        total / pairs.len() as f64
    }

    /// In-place SGD on one (center, context) pair with the given negatives.
    fn sgd(&mut self, center: usize, context: usize, negs: &[usize], lr: f64, grad_c: &mut [f64]) {
        let d = self.dim;
        grad_c.iter_mut().for_each(|g| *g = 0.0);
        let cs = center * d;
        for (target, label) in std::iter::once((context, 1.0)).chain(negs.iter().map(|&n| (n, 0.0))) {
            let ts = target * d;
            let f = sigmoid(dot(&self.input[cs..cs + d], &self.output[ts..ts + d]));
            let g = (f - label) * lr;
            for k in 0..d {
                grad_c[k] += g * self.output[ts + k];
                self.output[ts + k] -= g * self.input[cs + k];
            }
        }
        for k in 0..d {
            self.input[cs + k] -= grad_c[k];
        }
    }
}

/// Trains skip-gram embeddings over the walk corpus. Roughly one pair in
/// twenty (chosen by hash) is held out of training and used to report the
/// loss before and after training.
pub fn train_skipgram(
    corpus: &WalkCorpus,
    num_nodes: usize,
    cfg: &SkipGramConfig,
    seed: u64,
) -> Result<(StructuralEmbedding, SkipGramReport)> {
    if cfg.dim == 0 || cfg.window == 0 {
        return Err(Error::InvalidConfig("skip-gram dim and window must be at least 1".into()));
    }
    if corpus.walks.iter().all(|w| w.len() < 2) {
        return Err(Error::EmptyInput("no walks; graph has no edges".into()));
    }
    let mut rng = stream(&[seed, tag::SKIPGRAM]);
    let dim = cfg.dim;
    let mut model = Model {
        input: (0..num_nodes * dim)
            .map(|_| (rng.gen::<f64>() - 0.5) / dim as f64)
            .collect(),
        output: vec![0.0; num_nodes * dim],
        dim,
    };

    let mut counts = vec![0f64; num_nodes];
    for w in &corpus.walks {
        for &v in w {
            counts[v] += 1.0;
        }
    }
    let weights: Vec<f64> = counts.iter().map(|c| c.powf(0.75)).collect();
    let noise = WeightedIndex::new(&weights).map_err(|e| Error::EmptyInput(e.to_string()))?;

    let mut heldout = Vec::new();
    'collect: for (wi, w) in corpus.walks.iter().enumerate() {
        for i in 0..w.len() {
            let lo = i.saturating_sub(cfg.window);
            let hi = (i + cfg.window).min(w.len() - 1);
            for j in lo..=hi {
                if j != i && is_heldout(seed, wi, i, j) {
                    let negs = (0..cfg.negatives).map(|_| noise.sample(&mut rng)).collect();
                    heldout.push((w[i], w[j], negs));
                    if heldout.len() >= MAX_HELDOUT {
                        break 'collect;
                    }
                }
            }
        }
    }
    let heldout_loss_initial = model.heldout_loss(&heldout);

    let total_tokens = (corpus.num_tokens() * cfg.epochs).max(1) as f64;
    let mut processed = 0usize;
    let mut pairs_trained = 0u64;
    let mut grad_c = vec![0.0; dim];
    let mut negs = Vec::with_capacity(cfg.negatives);
    for epoch in 0..cfg.epochs {
        for (wi, w) in corpus.walks.iter().enumerate() {
            for i in 0..w.len() {
                let lr = (cfg.lr * (1.0 - processed as f64 / total_tokens)).max(cfg.lr * 1e-4);
                processed += 1;
                let b = rng.gen_range(1..=cfg.window);
                let lo = i.saturating_sub(b);
                let hi = (i + b).min(w.len() - 1);
                for j in lo..=hi {
                    if j == i || is_heldout(seed, wi, i, j) {
                        continue;
                    }
                    negs.clear();
                    while negs.len() < cfg.negatives {
                        let n = noise.sample(&mut rng);
                        if n != w[j] {
                            negs.push(n);
                        }
                    }
                    model.sgd(w[i], w[j], &negs, lr, &mut grad_c);
                    pairs_trained += 1;
                }
            }
        }
        debug!("skip-gram epoch {epoch}: held-out loss {:.4}", model.heldout_loss(&heldout));
    }
    let heldout_loss_final = model.heldout_loss(&heldout);

    let mut emb = Array2::from_shape_vec((num_nodes, dim), model.input).expect("shape");
    for mut row in emb.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row.mapv_inplace(|v| v / n);
        }
    }
    Ok((
        StructuralEmbedding(emb),
        SkipGramReport {
            heldout_pairs: heldout.len(),
            heldout_loss_initial,
            heldout_loss_final,
            pairs_trained,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeepWalkConfig {
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for DeepWalkConfig {
    fn default() -> Self {
        let sg = SkipGramConfig::default();
        Self {
            walks_per_node: 10,
            walk_length: 40,
            dim: sg.dim,
            window: sg.window,
            negatives: sg.negatives,
            epochs: sg.epochs,
            lr: sg.lr,
        }
    }
}

impl DeepWalkConfig {
    pub fn skipgram(&self) -> SkipGramConfig {
        SkipGramConfig {
            dim: self.dim,
            window: self.window,
            negatives: self.negatives,
            epochs: self.epochs,
            lr: self.lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.walk_length == 0 || self.dim == 0 || self.window == 0 || self.walks_per_node == 0 {
            return Err(Error::InvalidConfig(
                "deepwalk walk_length, walks_per_node, dim and window must be at least 1".into(),
            ));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidConfig("deepwalk.lr must be > 0".into()));
        }
        Ok(())
    }
}

/// Walks followed by skip-gram training.
pub fn deepwalk(g: &Graph, cfg: &DeepWalkConfig, seed: u64) -> Result<(StructuralEmbedding, SkipGramReport)> {
    cfg.validate()?;
    let corpus = generate_walks(g, cfg.walks_per_node, cfg.walk_length, seed)?;
    train_skipgram(&corpus, g.num_nodes(), &cfg.skipgram(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isolated_root_has_no_walks() {
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        let c = generate_walks(&g, 3, 5, 1).unwrap();
        assert_eq!(c.walks.len(), 6);
        assert!(c.walks.iter().all(|w| w[0] != 2 && !w.contains(&2)));
    }

    #[test]
    fn two_cycle_alternates() {
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        let c = generate_walks(&g, 1, 4, 9).unwrap();
        for w in &c.walks {
            let r = w[0];
            assert_eq!(w, &vec![r, 1 - r, r, 1 - r]);
        }
    }

    #[test]
    fn walks_follow_edges() {
        let g = Graph::from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 0), (4, 5)]).unwrap();
        let c = generate_walks(&g, 4, 10, 3).unwrap();
        assert_eq!(c.walks.len(), 24);
        for w in &c.walks {
            assert_eq!(w.len(), 10);
            assert!(w.windows(2).all(|p| g.has_edge(p[0], p[1])));
        }
        for root in 0..6 {
            assert_eq!(c.walks.iter().filter(|w| w[0] == root).count(), 4);
        }
    }

    #[test]
    fn empty_corpus_rejected() {
        let g = Graph::from_edges(3, []).unwrap();
        let c = generate_walks(&g, 2, 5, 0).unwrap();
        let err = train_skipgram(&c, 3, &SkipGramConfig::default(), 0).unwrap_err();
        assert!(err.to_string().contains("no walks; graph has no edges"));
    }

    #[test]
    fn sigmoid_stable() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((softplus_neg(-800.0) - 800.0).abs() < 1e-9);
    }
}

//! Checks shared by the dedicated test targets and the acceptance report.
//! Each returns the worst deviation it observed.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;

use gsr_core::deepwalk::{pair_gradients, pair_loss};
use gsr_core::features::NodeFeatures;
use gsr_core::finetune::{finetune_gradients, init_finetune, InitMode, FinetuneModel};
use gsr_core::graph::{normalize_adjacency, GraphContext, ScoredPair};
use gsr_core::nn::{info_nce, GcnParams, ParamSet, Readout};
use gsr_core::pretrain::{
    encode_keys, pretrain_gradients, pretrain_loss, ContrastBatch, EncodeMode, PretrainConfig, PretrainedModel,
    ViewBundle,
};
use gsr_core::refine::{score_pairs, select_refinement, CandidateStrategy, NormMode, RefineConfig, ViewEmbeddings};

use super::{connected_graph, dense_normalized, finite_difference_error, gaussian, random_graph, rng, unit_rows};

pub const GRADIENT_TOLERANCE: f64 = 1e-4;

struct ContrastFixture {
    model: PretrainedModel,
    batch: ContrastBatch,
    views: ViewBundle,
    keys: Vec<Array2<f64>>,
    banks: Vec<Arc<Array2<f64>>>,
    tau: f64,
}

fn contrast_fixture(mode: EncodeMode, seed: u64) -> ContrastFixture {
    let mut r = rng(seed);
    let n = 16;
    let g = connected_graph(n, 0.15, &mut r);
    let ctx = GraphContext::new(g);
    let views = ViewBundle::new(vec![
        ("F".into(), NodeFeatures::Dense(gaussian(n, 5, &mut r))),
        ("S".into(), NodeFeatures::Dense(gaussian(n, 3, &mut r))),
    ])
    .unwrap();
    let cfg = PretrainConfig {
        hidden_dim: 6,
        out_dim: 4,
        decoder_hidden_dim: 5,
        ..PretrainConfig::default()
    };
    let mut model = PretrainedModel::init(&cfg, &views, &mut r);
    // Non-zero biases so every parameter has a non-trivial gradient.
    for t in model.trainable_mut() {
        if t.nrows() == 1 {
            t.mapv_inplace(|_| r.gen_range(-0.3..0.3));
        }
    }
    let pairs: Vec<(usize, usize)> = (0..6)
        .map(|i| {
            let q = (i * 5) % n;
            (q, ctx.graph.neighbors(q)[0])
        })
        .collect();
    let batch = ContrastBatch::build(&ctx, &pairs, mode, Readout::Center, &mut r).unwrap();
    let keys = encode_keys(&model, &batch, &views).unwrap();
    let banks = (0..2).map(|_| Arc::new(unit_rows(7, 4, &mut r))).collect();
    ContrastFixture {
        model,
        batch,
        views,
        keys,
        banks,
        tau: 0.5,
    }
}

fn contrast_error(f: &ContrastFixture, alpha: f64, pick: fn(&gsr_core::pretrain::LossReport) -> f64) -> f64 {
    let (_, grads) = pretrain_gradients(&f.model, &f.batch, &f.views, &f.keys, &f.banks, f.tau, alpha).unwrap();
    finite_difference_error(
        &f.model,
        |m| m.trainable_mut(),
        |m| pick(&pretrain_loss(m, &f.batch, &f.views, &f.keys, &f.banks, f.tau, alpha).unwrap()),
        &grads,
    )
}

/// Intra-view contrastive loss alone (`alpha = 1`).
pub fn intra_gradient_error() -> f64 {
    contrast_error(&contrast_fixture(EncodeMode::Full, 1), 1.0, |l| l.intra)
}

/// Inter-view (decoded) contrastive loss alone (`alpha = 0`).
pub fn inter_gradient_error() -> f64 {
    contrast_error(&contrast_fixture(EncodeMode::Full, 2), 0.0, |l| l.inter)
}

/// The combined pretraining loss, with full-graph and ego-subgraph encoding.
pub fn pretrain_gradient_error() -> f64 {
    let full = contrast_error(&contrast_fixture(EncodeMode::Full, 3), 0.6, |l| l.total);
    let ego = contrast_error(
        &contrast_fixture(EncodeMode::Ego { radius: 2, fanout: 3 }, 4),
        0.6,
        |l| l.total,
    );
    full.max(ego)
}

fn finetune_tensors(m: &mut FinetuneModel) -> Vec<&mut Array2<f64>> {
    let mut out = m.body.tensors_mut();
    out.push(&mut m.head.w);
    out.push(&mut m.head.b);
    out
}

/// Node-classification cross-entropy through GCN body and linear head.
pub fn finetune_gradient_error() -> f64 {
    let mut r = rng(5);
    let n = 18;
    let g = connected_graph(n, 0.1, &mut r);
    let adj = normalize_adjacency(&g).into_matrix();
    let x = Arc::new(NodeFeatures::Dense(gaussian(n, 6, &mut r)));
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let mask: Vec<usize> = (0..n).step_by(2).collect();
    let mut body = GcnParams::init(6, 5, 4, true, &mut r);
    for t in body.tensors_mut() {
        if t.nrows() == 1 {
            t.mapv_inplace(|_| r.gen_range(-0.3..0.3));
        }
    }
    let mut model = init_finetune(&body, 3, 9, InitMode::Transfer).unwrap();
    model.head.b.mapv_inplace(|_| r.gen_range(-0.3..0.3));
    let (_, grads) = finetune_gradients(&model, &adj, &x, &labels, &mask).unwrap();
    finite_difference_error(
        &model,
        finetune_tensors,
        |m| finetune_gradients(m, &adj, &x, &labels, &mask).unwrap().0,
        &grads,
    )
}

/// Skip-gram negative-sampling loss of one (center, context, negatives) tuple.
pub fn skipgram_gradient_error() -> f64 {
    let mut r = rng(6);
    let d = 7;
    let vecs: Vec<Array2<f64>> = (0..5).map(|_| gaussian(1, d, &mut r) * 0.7).collect();
    let loss = |v: &Vec<Array2<f64>>| {
        let negs: Vec<&[f64]> = v[2..].iter().map(|n| n.as_slice().unwrap()).collect();
        pair_loss(v[0].as_slice().unwrap(), v[1].as_slice().unwrap(), &negs)
    };
    let negs: Vec<&[f64]> = vecs[2..].iter().map(|n| n.as_slice().unwrap()).collect();
    let g = pair_gradients(vecs[0].as_slice().unwrap(), vecs[1].as_slice().unwrap(), &negs);
    let row = |v: &Vec<f64>| Array2::from_shape_vec((1, d), v.clone()).unwrap();
    let mut analytic = vec![row(&g.center), row(&g.context)];
    analytic.extend(g.negatives.iter().map(row));
    finite_difference_error(&vecs, |v| v.iter_mut().collect(), loss, &analytic)
}

pub fn gradient_suite() -> Vec<(&'static str, f64)> {
    vec![
        ("intra-view", intra_gradient_error()),
        ("inter-view", inter_gradient_error()),
        ("pretraining", pretrain_gradient_error()),
        ("fine-tuning", finetune_gradient_error()),
        ("skip-gram", skipgram_gradient_error()),
    ]
}

pub const NORMALIZE_TOLERANCE: f64 = 1e-12;
pub const SCORE_TOLERANCE: f64 = 1e-10;
pub const INFO_NCE_TOLERANCE: f64 = 1e-9;

/// Sparse normalized adjacency against the dense formula on random graphs of
/// up to 100 nodes, isolated nodes included.
pub fn normalize_error() -> f64 {
    let mut r = rng(11);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let n = 1 + r.gen_range(0..100);
        let p = [0.0, 0.02, 0.1, 0.5][trial % 4];
        let g = random_graph(n, p, &mut r);
        let sparse = normalize_adjacency(&g).matrix().to_dense();
        let dense = dense_normalized(&g);
        worst = worst.max((&sparse - &dense).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b)));
    }
    worst
}

fn cosine(z: &Array2<f64>, u: usize, v: usize) -> f64 {
    let (a, b) = (z.row(u), z.row(v));
    a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
}

fn brute_force_scores(emb: &ViewEmbeddings, weights: &[f64], mode: NormMode) -> Vec<((usize, usize), f64)> {
    let n = emb.num_nodes();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    let mut combined = vec![0.0; pairs.len()];
    for (z, w) in emb.z.iter().zip(weights) {
        let raw: Vec<f64> = pairs.iter().map(|&(u, v)| cosine(z, u, v)).collect();
        let norm: Vec<f64> = match mode {
            NormMode::Minmax => {
                let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                raw.iter().map(|s| (s - lo) / (hi - lo)).collect()
            }
            NormMode::Rank => raw
                .iter()
                .map(|s| {
                    // Average 0-based rank among equals, over n - 1.
                    let below = raw.iter().filter(|t| *t < s).count() as f64;
                    let equal = raw.iter().filter(|t| *t == s).count() as f64;
                    (below + (equal - 1.0) / 2.0) / (raw.len() - 1) as f64
                })
                .collect(),
        };
        for (c, s) in combined.iter_mut().zip(norm) {
            *c += w * s;
        }
    }
    pairs.into_iter().zip(combined).collect()
}

/// `score_pairs` against an all-pairs brute force on graphs of up to 20
/// nodes, for both normalizations.
pub fn score_error() -> f64 {
    let mut r = rng(12);
    let mut worst: f64 = 0.0;
    for trial in 0..12 {
        let n = 3 + r.gen_range(0..18);
        let g = random_graph(n, 0.3, &mut r);
        let emb = ViewEmbeddings {
            names: vec!["F".into(), "S".into()],
            z: vec![gaussian(n, 4, &mut r), gaussian(n, 3, &mut r)],
        };
        let beta = r.gen_range(0.0..1.0);
        let mode = if trial % 2 == 0 { NormMode::Minmax } else { NormMode::Rank };
        let cfg = RefineConfig {
            norm_mode: mode,
            candidates: CandidateStrategy::AllPairs,
            ..RefineConfig::two_view(beta, 0, 0)
        };
        let got = score_pairs(&emb, &cfg, &g).unwrap();
        let want = brute_force_scores(&emb, &[beta, 1.0 - beta], mode);
        assert_eq!(got.pairs.len(), want.len());
        for ((p, s), (wp, ws)) in got.pairs.iter().zip(&got.combined).zip(&want) {
            assert_eq!(p, wp);
            worst = worst.max((s - ws).abs());
        }
    }
    worst
}

/// Number of random instances (graphs of up to 30 nodes, scores with many
/// ties) where `select_refinement` differs from sorting every pair.
pub fn selection_mismatches() -> usize {
    let mut r = rng(13);
    let mut mismatches = 0;
    for _ in 0..40 {
        let n = 2 + r.gen_range(0..29);
        let g = random_graph(n, 0.25, &mut r);
        let emb = ViewEmbeddings {
            names: vec!["F".into(), "S".into()],
            // Few distinct directions so that scores tie often.
            z: vec![
                gaussian(n, 2, &mut r).mapv(|v| v.signum()),
                gaussian(n, 2, &mut r).mapv(|v| v.signum()),
            ],
        };
        let cfg = RefineConfig {
            candidates: CandidateStrategy::AllPairs,
            ..RefineConfig::two_view(0.5, 0, 0)
        };
        let scores = score_pairs(&emb, &cfg, &g).unwrap();
        let non_edges = scores.pairs.len() - g.num_edges();
        let m_plus = r.gen_range(0..=non_edges);
        let m_minus = r.gen_range(0..=g.num_edges());
        let plan = select_refinement(&scores, &g, m_plus, m_minus).unwrap();

        let mut all: Vec<(ScoredPair, bool)> = scores
            .pairs
            .iter()
            .zip(&scores.combined)
            .map(|(&(u, v), &s)| (ScoredPair::new(u, v, s), g.has_edge(u, v)))
            .collect();
        all.sort_by(|a, b| {
            b.0.score
                .partial_cmp(&a.0.score)
                .unwrap()
                .then((a.0.u, a.0.v).cmp(&(b.0.u, b.0.v)))
        });
        let add: Vec<ScoredPair> = all.iter().filter(|p| !p.1).take(m_plus).map(|p| p.0).collect();
        all.sort_by(|a, b| {
            a.0.score
                .partial_cmp(&b.0.score)
                .unwrap()
                .then((a.0.u, a.0.v).cmp(&(b.0.u, b.0.v)))
        });
        let remove: Vec<ScoredPair> = all.iter().filter(|p| p.1).take(m_minus).map(|p| p.0).collect();
        if plan.add != add || plan.remove != remove {
            mismatches += 1;
        }
    }
    mismatches
}

/// With every logit zero the loss is `ln(K + 1)` exactly.
pub fn info_nce_uniform_error() -> f64 {
    let mut worst: f64 = 0.0;
    for k in [1, 5, 64, 1023] {
        let d = 6;
        // Queries along e0; keys and negatives orthogonal to it.
        let mut q = Array2::zeros((4, d));
        q.column_mut(0).fill(1.0);
        let mut pos = Array2::zeros((4, d));
        pos.column_mut(1).fill(1.0);
        let mut bank = Array2::zeros((k, d));
        for (i, mut row) in bank.rows_mut().into_iter().enumerate() {
            row[1 + i % (d - 1)] = 1.0;
        }
        for tau in [0.07, 1.0] {
            let l = info_nce(&q, &pos, &bank, tau).unwrap();
            worst = worst.max((l - ((k + 1) as f64).ln()).abs());
        }
    }
    worst
}

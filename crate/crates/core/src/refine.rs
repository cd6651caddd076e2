//! Edge scoring from pretrained view embeddings and selection of the edges
//! to add and remove.
//!
//! Each view scores a node pair by the cosine of its embeddings; the view
//! scores are normalized over the scored set and mixed with per-view weights
//! β into the combined edge probability `E`.

use std::collections::BinaryHeap;
use std::cmp::Ordering;
use std::io::{BufRead, Write};
use std::path::Path;

use log::warn;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{rank_ascending, rank_descending, Graph, GraphContext, RefinementPlan, ScoredPair};
use crate::nn::{gcn_rows, l2_normalize_rows, Propagation};
use crate::pretrain::{PretrainedModel, ViewBundle};

/// Graphs up to this size score all pairs in `auto` mode.
pub const AUTO_ALL_PAIRS_LIMIT: usize = 10_000;
pub const AUTO_TOPK: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    /// `(s - min) / (max - min)` over the scored set.
    #[default]
    Minmax,
    /// Average rank over the scored set divided by `count - 1`.
    Rank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CandidateStrategy {
    #[default]
    Auto,
    AllPairs,
    PerNodeTopk { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    /// One weight per view, non-negative and summing to one.
    pub weights: Vec<f64>,
    pub norm_mode: NormMode,
    pub candidates: CandidateStrategy,
    pub m_plus: usize,
    pub m_minus: usize,
}

impl RefineConfig {
    /// Two views with `β_S = 1 − β_F`.
    pub fn two_view(beta_f: f64, m_plus: usize, m_minus: usize) -> Self {
        Self {
            weights: vec![beta_f, 1.0 - beta_f],
            norm_mode: NormMode::Minmax,
            candidates: CandidateStrategy::Auto,
            m_plus,
            m_minus,
        }
    }

    pub fn validate(&self, num_views: usize) -> Result<()> {
        if self.weights.len() != num_views {
            return Err(Error::InvalidConfig(format!(
                "{} view weights for {num_views} views",
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|&w| !(0.0..=1.0).contains(&w)) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "view weights {:?} must be non-negative and sum to 1",
                self.weights
            )));
        }
        if let CandidateStrategy::PerNodeTopk { k: 0 } = self.candidates {
            return Err(Error::InvalidConfig("per-node top-k needs k >= 1".into()));
        }
        Ok(())
    }
}

/// Unit-norm full-graph query embeddings, one matrix per view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewEmbeddings {
    pub names: Vec<String>,
    pub z: Vec<Array2<f64>>,
}

impl ViewEmbeddings {
    pub fn num_nodes(&self) -> usize {
        self.z.first().map_or(0, |z| z.nrows())
    }
}

pub fn embed_all_nodes(model: &PretrainedModel, ctx: &GraphContext, views: &ViewBundle) -> Result<ViewEmbeddings> {
    model.check_views(views)?;
    if views.num_nodes() != ctx.graph.num_nodes() {
        return Err(Error::shape(
            "embed_all_nodes",
            format!("views have {} rows for a {}-node graph", views.num_nodes(), ctx.graph.num_nodes()),
        ));
    }
    let prop = Propagation::full(ctx.adjacency.clone());
    let z = (0..views.len())
        .map(|v| Ok(l2_normalize_rows(&gcn_rows(&model.query[v], &prop, views.features(v))?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ViewEmbeddings {
        names: views.names().to_vec(),
        z,
    })
}

fn cosine(z: &Array2<f64>, u: usize, v: usize) -> f64 {
    let (a, b) = (z.row(u), z.row(v));
    let d = a.dot(&b);
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        d / (na * nb)
    }
}

/// Scored pairs `(u, v)`, `u < v`, sorted and unique, always including every
/// edge of `g`.
pub fn build_candidates(emb: &ViewEmbeddings, strategy: CandidateStrategy, g: &Graph) -> Vec<(usize, usize)> {
    let n = g.num_nodes();
    let strategy = match strategy {
        CandidateStrategy::Auto if n <= AUTO_ALL_PAIRS_LIMIT => CandidateStrategy::AllPairs,
        CandidateStrategy::Auto => CandidateStrategy::PerNodeTopk { k: AUTO_TOPK },
        CandidateStrategy::PerNodeTopk { k } if k >= n => {
            warn!("top-k with k = {k} on a {n}-node graph; scoring all pairs");
            CandidateStrategy::AllPairs
        }
        s => s,
    };
    match strategy {
        CandidateStrategy::PerNodeTopk { k } => {
            let mut pairs: Vec<(usize, usize)> = emb
                .z
                .iter()
                .flat_map(|z| {
                    (0..n)
                        .into_par_iter()
                        .flat_map_iter(|u| top_k_neighbors(z, u, k).into_iter().map(move |v| (u.min(v), u.max(v))))
                        .collect::<Vec<_>>()
                })
                .collect();
            pairs.extend_from_slice(g.edges());
            pairs.sort_unstable();
            pairs.dedup();
            pairs
        }
        _ => (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect(),
    }
}

#[derive(PartialEq)]
struct Scored(f64, usize);

impl Eq for Scored {}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scored {
    /// Higher similarity first, then lower node id.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(self.1.cmp(&other.1))
    }
}

/// The `k` other nodes most cosine-similar to `u` (ties to the lower id).
pub fn top_k_neighbors(z: &Array2<f64>, u: usize, k: usize) -> Vec<usize> {
    let mut heap: BinaryHeap<Scored> = BinaryHeap::with_capacity(k + 1);
    for v in 0..z.nrows() {
        if v == u {
            continue;
        }
        heap.push(Scored(cosine(z, u, v), v));
        if heap.len() > k {
            heap.pop();
        }
    }
    let mut out: Vec<Scored> = heap.into_vec();
    out.sort();
    out.into_iter().map(|s| s.1).collect()
}

/// Per-pair view scores and combined probability over a candidate set.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeScores {
    pub view_names: Vec<String>,
    pub norm_mode: NormMode,
    pub pairs: Vec<(usize, usize)>,
    /// `normalized[view][i]` is the normalized cosine of `pairs[i]`.
    pub normalized: Vec<Vec<f64>>,
    pub combined: Vec<f64>,
    pub is_edge: Vec<bool>,
}

fn minmax(raw: &[f64]) -> Vec<f64> {
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        warn!("all {} scores of a view are equal; normalizing them to 0.5", raw.len());
        return vec![0.5; raw.len()];
    }
    raw.iter().map(|&s| (s - lo) / (hi - lo)).collect()
}

/// Average ranks (0-based) divided by `count - 1`.
fn rank_normalize(raw: &[f64]) -> Vec<f64> {
    let n = raw.len();
    if n < 2 {
        return vec![0.5; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.par_sort_unstable_by(|&a, &b| raw[a].total_cmp(&raw[b]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && raw[order[j + 1]] == raw[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 / (n - 1) as f64;
        for &o in &order[i..=j] {
            out[o] = r;
        }
        i = j + 1;
    }
    out
}

pub fn normalize_scores(raw: &[f64], mode: NormMode) -> Vec<f64> {
    match mode {
        NormMode::Minmax => minmax(raw),
        NormMode::Rank => rank_normalize(raw),
    }
}

/// Scores the candidate pairs of `cfg.candidates` (see [`build_candidates`]).
pub fn score_pairs(emb: &ViewEmbeddings, cfg: &RefineConfig, g: &Graph) -> Result<EdgeScores> {
    let pairs = build_candidates(emb, cfg.candidates, g);
    score_candidates(emb, cfg, g, pairs)
}

pub fn score_candidates(
    emb: &ViewEmbeddings,
    cfg: &RefineConfig,
    g: &Graph,
    pairs: Vec<(usize, usize)>,
) -> Result<EdgeScores> {
    cfg.validate(emb.z.len())?;
    if emb.num_nodes() != g.num_nodes() {
        return Err(Error::shape(
            "score_pairs",
            format!("{} embedding rows for a {}-node graph", emb.num_nodes(), g.num_nodes()),
        ));
    }
    if let Some(&(u, v)) = pairs.iter().find(|&&(u, v)| u >= v || v >= g.num_nodes()) {
        return Err(Error::InvalidPlan(format!("candidate ({u}, {v}) is not a valid pair u < v")));
    }
    let normalized: Vec<Vec<f64>> = emb
        .z
        .iter()
        .map(|z| {
            let raw: Vec<f64> = pairs.par_iter().map(|&(u, v)| cosine(z, u, v)).collect();
            normalize_scores(&raw, cfg.norm_mode)
        })
        .collect();
    let combined = (0..pairs.len())
        .into_par_iter()
        .map(|i| cfg.weights.iter().zip(&normalized).map(|(w, s)| w * s[i]).sum())
        .collect();
    let is_edge = pairs.iter().map(|&(u, v)| g.has_edge(u, v)).collect();
    Ok(EdgeScores {
        view_names: emb.names.clone(),
        norm_mode: cfg.norm_mode,
        pairs,
        normalized,
        combined,
        is_edge,
    })
}

fn top_by(mut items: Vec<ScoredPair>, m: usize, cmp: fn(&ScoredPair, &ScoredPair) -> Ordering) -> Vec<ScoredPair> {
    if m < items.len() && m > 0 {
        items.select_nth_unstable_by(m - 1, cmp);
    }
    items.truncate(m);
    items.sort_unstable_by(cmp);
    items
}

/// The `m_plus` highest-scoring non-edges and the `m_minus` lowest-scoring
/// edges, ties broken by `(min id, max id)`.
pub fn select_refinement(scores: &EdgeScores, g: &Graph, m_plus: usize, m_minus: usize) -> Result<RefinementPlan> {
    if m_minus > g.num_edges() {
        return Err(Error::InvalidPlan(format!(
            "cannot remove {m_minus} edges from a graph with {}",
            g.num_edges()
        )));
    }
    let mut edges = Vec::with_capacity(g.num_edges());
    let mut non_edges = Vec::with_capacity(scores.pairs.len().saturating_sub(g.num_edges()));
    for ((&(u, v), &s), &e) in scores.pairs.iter().zip(&scores.combined).zip(&scores.is_edge) {
        if e { &mut edges } else { &mut non_edges }.push(ScoredPair::new(u, v, s));
    }
    if m_plus > non_edges.len() {
        return Err(Error::InvalidPlan(format!(
            "cannot add {m_plus} edges: only {} non-edges were scored",
            non_edges.len()
        )));
    }
    if edges.len() != g.num_edges() {
        return Err(Error::InvalidPlan("the scored set does not cover every edge".into()));
    }
    Ok(RefinementPlan {
        add: top_by(non_edges, m_plus, rank_descending),
        remove: top_by(edges, m_minus, rank_ascending),
    })
}

/// Audit table: `u v score_<view>... E is_edge`.
pub fn write_score_table(path: &Path, scores: &EdgeScores) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    let mut write = || -> std::io::Result<()> {
        write!(w, "u\tv")?;
        for n in &scores.view_names {
            write!(w, "\tscore_{n}")?;
        }
        writeln!(w, "\tE\tis_edge")?;
        for (i, &(u, v)) in scores.pairs.iter().enumerate() {
            write!(w, "{u}\t{v}")?;
            for s in &scores.normalized {
                write!(w, "\t{:.6}", s[i])?;
            }
            writeln!(w, "\t{:.6}\t{}", scores.combined[i], u8::from(scores.is_edge[i]))?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// `+ u v score` lines for additions, then `- u v score` for removals.
pub fn write_plan_diff(w: &mut impl Write, plan: &RefinementPlan) -> std::io::Result<()> {
    for p in &plan.add {
        writeln!(w, "+ {} {} {}", p.u, p.v, p.score)?;
    }
    for p in &plan.remove {
        writeln!(w, "- {} {} {}", p.u, p.v, p.score)?;
    }
    Ok(())
}

pub fn save_plan(path: &Path, plan: &RefinementPlan) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_plan_diff(&mut w, plan)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_plan_diff(r: impl BufRead, path: &Path) -> Result<RefinementPlan> {
    let mut plan = RefinementPlan::default();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::format(path, format!("line {}: expected `+|- u v score`", i + 1));
        if f.len() != 4 {
            return Err(bad());
        }
        let u = f[1].parse().map_err(|_| bad())?;
        let v = f[2].parse().map_err(|_| bad())?;
        let score = f[3].parse().map_err(|_| bad())?;
        match f[0] {
            "+" => plan.add.push(ScoredPair::new(u, v, score)),
            "-" => plan.remove.push(ScoredPair::new(u, v, score)),
            _ => return Err(bad()),
        }
    }
    Ok(plan)
}

pub fn load_plan(path: &Path) -> Result<RefinementPlan> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_plan_diff(std::io::BufReader::new(f), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn minmax_degenerate_and_rank_ties() {
        assert_eq!(minmax(&[2.0, 2.0]), vec![0.5, 0.5]);
        assert_eq!(minmax(&[1.0, 3.0, 2.0]), vec![0.0, 1.0, 0.5]);
        assert_eq!(rank_normalize(&[0.3, 0.1, 0.3, 0.2]), vec![5.0 / 6.0, 0.0, 5.0 / 6.0, 1.0 / 3.0]);
    }

    #[test]
    fn plan_diff_round_trip() {
        let plan = RefinementPlan {
            add: vec![ScoredPair::new(3, 1, 0.75)],
            remove: vec![ScoredPair::new(0, 2, 0.125)],
        };
        let mut buf = Vec::new();
        write_plan_diff(&mut buf, &plan).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "+ 1 3 0.75\n- 0 2 0.125\n");
        assert_eq!(read_plan_diff(&buf[..], Path::new("p")).unwrap(), plan);
        assert!(read_plan_diff(&b"* 1 2 0.5\n"[..], Path::new("p")).is_err());
    }

    #[test]
    fn top_k_ties_prefer_low_ids() {
        let z = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        assert_eq!(top_k_neighbors(&z, 0, 2), vec![1, 3]);
        assert_eq!(top_k_neighbors(&z, 2, 1), vec![0]);
    }
}

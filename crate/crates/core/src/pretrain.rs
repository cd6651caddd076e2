//! Multi-view contrastive link-prediction pretraining with momentum key
//! encoders and per-view key queues.
//!
//! Every view φ has a query GCN (trained) and a key GCN (moving average of
//! the query), every ordered view pair (s, t) has an MLP decoder mapping
//! view-s query embeddings into view-t key space. A training pair is an
//! observed edge (query node, positive key node); queue rows supply the
//! negatives. The objective mixes the intra-view and inter-view InfoNCE terms
//! with weight α.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use log::{debug, info};
use ndarray::Array2;
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::NodeFeatures;
use crate::graph::{Graph, GraphContext};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{
    gcn_on_tape, gcn_rows, l2_normalize_rows, mlp_on_tape, momentum_update, optimizer_step, AdamConfig,
    GcnParams, GcnVars, MlpParams, MlpVars, OptimizerState, ParamSet, Propagation, Readout, Tape, Var,
};
use crate::seed::{stream, tag};

/// Graphs up to this size are encoded over the full graph in `auto` mode.
pub const AUTO_FULL_GRAPH_LIMIT: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EncodeMode {
    #[default]
    Auto,
    Full,
    Ego { radius: usize, fanout: usize },
}

impl EncodeMode {
    pub fn resolve(self, num_nodes: usize) -> EncodeMode {
        match self {
            EncodeMode::Auto if num_nodes <= AUTO_FULL_GRAPH_LIMIT => EncodeMode::Full,
            EncodeMode::Auto => EncodeMode::Ego { radius: 2, fanout: 10 },
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub tau: f64,
    pub momentum: f64,
    pub queue_size: usize,
    pub alpha: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub decoder_hidden_dim: usize,
    pub bias: bool,
    pub encode_mode: EncodeMode,
    pub readout: Readout,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            tau: 0.07,
            momentum: 0.999,
            queue_size: 1023,
            alpha: 0.75,
            batch_size: 256,
            epochs: 50,
            lr: 1e-3,
            weight_decay: 0.0,
            hidden_dim: 256,
            out_dim: 128,
            decoder_hidden_dim: 128,
            bias: true,
            encode_mode: EncodeMode::Auto,
            readout: Readout::Center,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("pretrain.tau must be > 0, got {}", self.tau));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("pretrain.momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("pretrain.alpha must be in [0, 1], got {}", self.alpha));
        }
        if self.batch_size == 0 {
            return bad("pretrain.batch_size must be at least 1".into());
        }
        if self.queue_size < self.batch_size {
            return bad(format!(
                "pretrain.queue_size ({}) must be at least batch_size ({})",
                self.queue_size, self.batch_size
            ));
        }
        if !(self.lr > 0.0) || self.weight_decay < 0.0 {
            return bad("pretrain.lr must be > 0 and weight_decay >= 0".into());
        }
        if self.hidden_dim == 0 || self.out_dim == 0 || self.decoder_hidden_dim == 0 {
            return bad("pretrain dimensions must be at least 1".into());
        }
        if let EncodeMode::Ego { radius, fanout } = self.encode_mode {
            if radius == 0 || fanout == 0 {
                return bad("ego encode mode needs radius >= 1 and fanout >= 1".into());
            }
        }
        Ok(())
    }
}

/// The node property matrices contrasted against each other, one per view.
#[derive(Debug, Clone)]
pub struct ViewBundle {
    names: Vec<String>,
    features: Vec<Arc<NodeFeatures>>,
}

impl ViewBundle {
    pub fn new(views: Vec<(String, NodeFeatures)>) -> Result<Self> {
        if views.len() < 2 {
            return Err(Error::InvalidConfig("contrastive pretraining needs at least two views".into()));
        }
        let rows = views[0].1.rows();
        if let Some((name, x)) = views.iter().find(|(_, x)| x.rows() != rows) {
            return Err(Error::shape(
                "view_bundle",
                format!("view {name} has {} rows, expected {rows}", x.rows()),
            ));
        }
        let (names, features) = views.into_iter().map(|(n, x)| (n, Arc::new(x))).unzip();
        Ok(Self { names, features })
    }

    /// Feature view `F` and structure view `S`.
    pub fn feature_structure(features: NodeFeatures, structure: Array2<f64>) -> Result<Self> {
        Self::new(vec![
            ("F".into(), features),
            ("S".into(), NodeFeatures::Dense(structure)),
        ])
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.features[0].rows()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn features(&self, view: usize) -> &Arc<NodeFeatures> {
        &self.features[view]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Ordered pairs `(s, t)`, `s != t`, in row-major order.
pub fn view_pairs(num_views: usize) -> Vec<(usize, usize)> {
    (0..num_views)
        .flat_map(|s| (0..num_views).filter(move |&t| t != s).map(move |t| (s, t)))
        .collect()
}

/// Encoder and decoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedModel {
    pub view_names: Vec<String>,
    pub query: Vec<GcnParams>,
    pub key: Vec<GcnParams>,
    /// Indexed like [`view_pairs`].
    pub decoders: Vec<MlpParams>,
}

impl PretrainedModel {
    pub fn init<R: Rng + ?Sized>(cfg: &PretrainConfig, views: &ViewBundle, rng: &mut R) -> Self {
        let query: Vec<GcnParams> = (0..views.len())
            .map(|v| GcnParams::init(views.features(v).cols(), cfg.hidden_dim, cfg.out_dim, cfg.bias, rng))
            .collect();
        let decoders = view_pairs(views.len())
            .into_iter()
            .map(|_| MlpParams::init(cfg.out_dim, cfg.decoder_hidden_dim, cfg.out_dim, cfg.bias, rng))
            .collect();
        Self {
            view_names: views.names().to_vec(),
            key: query.clone(),
            query,
            decoders,
        }
    }

    pub fn num_views(&self) -> usize {
        self.view_names.len()
    }

    pub fn view_index(&self, name: &str) -> Result<usize> {
        self.view_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidConfig(format!("the pretrained model has no view {name:?}")))
    }

    /// Query encoders then decoders, the optimizer's parameter order.
    pub fn trainable(&self) -> Vec<&Array2<f64>> {
        let mut out: Vec<&Array2<f64>> = self.query.iter().flat_map(|p| p.tensors()).collect();
        out.extend(self.decoders.iter().flat_map(|p| p.tensors()));
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out: Vec<&mut Array2<f64>> = self.query.iter_mut().flat_map(|p| p.tensors_mut()).collect();
        out.extend(self.decoders.iter_mut().flat_map(|p| p.tensors_mut()));
        out
    }

    pub fn check_views(&self, views: &ViewBundle) -> Result<()> {
        if views.names() != self.view_names.as_slice() {
            return Err(Error::shape(
                "pretrained_model",
                format!("views {:?} vs model views {:?}", views.names(), self.view_names),
            ));
        }
        for (v, q) in self.query.iter().enumerate() {
            if q.input_dim() != views.features(v).cols() {
                return Err(Error::shape(
                    "pretrained_model",
                    format!(
                        "view {} has {} columns but its encoder expects {}",
                        self.view_names[v],
                        views.features(v).cols(),
                        q.input_dim()
                    ),
                ));
            }
        }
        Ok(())
    }

    fn write_into(&self, ck: &mut Checkpoint) {
        for (v, name) in self.view_names.iter().enumerate() {
            for (role, p) in [("query", &self.query[v]), ("key", &self.key[v])] {
                for (t, m) in p.named() {
                    ck.insert(format!("{role}.{name}.{t}"), m);
                }
            }
        }
        for ((s, t), d) in view_pairs(self.num_views()).into_iter().zip(&self.decoders) {
            for (n, m) in d.named() {
                ck.insert(format!("decoder.{}>{}.{n}", self.view_names[s], self.view_names[t]), m);
            }
        }
    }

    pub fn to_checkpoint(&self, fingerprint: &str) -> Checkpoint {
        let mut ck = Checkpoint::new(fingerprint);
        self.write_into(&mut ck);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint, view_names: &[String]) -> Result<Self> {
        let gcn = |prefix: String| -> Result<GcnParams> {
            let p = GcnParams {
                w1: ck.require(&format!("{prefix}.w1"))?,
                b1: ck.get(&format!("{prefix}.b1")),
                w2: ck.require(&format!("{prefix}.w2"))?,
                b2: ck.get(&format!("{prefix}.b2")),
            };
            p.check()?;
            Ok(p)
        };
        let mut query = Vec::new();
        let mut key = Vec::new();
        for name in view_names {
            query.push(gcn(format!("query.{name}"))?);
            key.push(gcn(format!("key.{name}"))?);
        }
        let mut decoders = Vec::new();
        for (s, t) in view_pairs(view_names.len()) {
            let prefix = format!("decoder.{}>{}", view_names[s], view_names[t]);
            let d = MlpParams {
                w1: ck.require(&format!("{prefix}.w1"))?,
                b1: ck.get(&format!("{prefix}.b1")),
                w2: ck.require(&format!("{prefix}.w2"))?,
                b2: ck.get(&format!("{prefix}.b2")),
            };
            d.check()?;
            decoders.push(d);
        }
        Ok(Self {
            view_names: view_names.to_vec(),
            query,
            key,
            decoders,
        })
    }

    fn hash_into(&self, h: &mut Sha256) {
        for p in self.query.iter().chain(&self.key) {
            hash_tensors(h, p.tensors());
        }
        for d in &self.decoders {
            hash_tensors(h, d.tensors());
        }
    }
}

fn hash_tensors(h: &mut Sha256, ts: Vec<&Array2<f64>>) {
    for t in ts {
        h.update((t.nrows() as u64).to_le_bytes());
        h.update((t.ncols() as u64).to_le_bytes());
        for v in t.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
}

/// Fixed-capacity ring buffer of unit-norm key rows.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyQueue {
    rows: Array2<f64>,
    head: usize,
}

impl KeyQueue {
    /// A full queue holding `rows` in order, oldest first.
    pub fn from_rows(rows: Array2<f64>) -> Self {
        Self { rows, head: 0 }
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    /// Storage order; the loss only needs the set of rows.
    pub fn bank(&self) -> &Array2<f64> {
        &self.rows
    }

    /// Rows oldest first.
    pub fn ordered(&self) -> Array2<f64> {
        let k = self.len();
        let idx: Vec<usize> = (0..k).map(|i| (self.head + i) % k).collect();
        self.rows.select(ndarray::Axis(0), &idx)
    }

    /// Overwrites the oldest rows with `keys`, in order.
    pub fn enqueue(&mut self, keys: &Array2<f64>) -> Result<()> {
        if keys.ncols() != self.rows.ncols() || keys.nrows() > self.len() {
            return Err(Error::shape(
                "enqueue",
                format!("{:?} into a queue of {:?}", keys.dim(), self.rows.dim()),
            ));
        }
        let k = self.len();
        for row in keys.rows() {
            self.rows.row_mut(self.head).assign(&row);
            self.head = (self.head + 1) % k;
        }
        Ok(())
    }
}

/// Query nodes with one positive key each, plus the propagation used to
/// encode them.
#[derive(Debug, Clone)]
pub struct ContrastBatch {
    pub queries: Vec<usize>,
    pub keys: Vec<usize>,
    pub query_prop: Propagation,
    pub key_prop: Propagation,
}

/// Uniform query over non-isolated nodes, uniform positive among its neighbors.
pub fn sample_pairs<R: Rng + ?Sized>(g: &Graph, batch_size: usize, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    let roots = g.non_isolated_nodes();
    if roots.is_empty() {
        return Err(Error::EmptyInput("cannot sample positive pairs: every node is isolated".into()));
    }
    Ok((0..batch_size)
        .map(|_| {
            let q = roots[rng.gen_range(0..roots.len())];
            let nb = g.neighbors(q);
            (q, nb[rng.gen_range(0..nb.len())])
        })
        .collect())
}

impl ContrastBatch {
    pub fn build<R: Rng + ?Sized>(
        ctx: &GraphContext,
        pairs: &[(usize, usize)],
        mode: EncodeMode,
        readout: Readout,
        rng: &mut R,
    ) -> Result<Self> {
        let queries: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let keys: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let (query_prop, key_prop) = match mode.resolve(ctx.graph.num_nodes()) {
            EncodeMode::Ego { radius, fanout } => (
                Propagation::ego(&ctx.graph, &queries, radius, fanout, readout, rng)?,
                Propagation::ego(&ctx.graph, &keys, radius, fanout, readout, rng)?,
            ),
            _ => (
                Propagation::for_targets(&ctx.adjacency, &queries),
                Propagation::for_targets(&ctx.adjacency, &keys),
            ),
        };
        Ok(Self {
            queries,
            keys,
            query_prop,
            key_prop,
        })
    }

    pub fn sample<R: Rng + ?Sized>(
        ctx: &GraphContext,
        batch_size: usize,
        mode: EncodeMode,
        readout: Readout,
        rng: &mut R,
    ) -> Result<Self> {
        let pairs = sample_pairs(&ctx.graph, batch_size, rng)?;
        Self::build(ctx, &pairs, mode, readout, rng)
    }
}

/// Unit-norm key rows per view for the batch's positive nodes (no gradient).
pub fn encode_keys(model: &PretrainedModel, batch: &ContrastBatch, views: &ViewBundle) -> Result<Vec<Array2<f64>>> {
    (0..model.num_views())
        .map(|v| Ok(l2_normalize_rows(&gcn_rows(&model.key[v], &batch.key_prop, views.features(v))?)))
        .collect()
}

/// Unit-norm `(query, key)` rows per view.
pub fn encode_views(
    model: &PretrainedModel,
    batch: &ContrastBatch,
    views: &ViewBundle,
) -> Result<Vec<(Array2<f64>, Array2<f64>)>> {
    let keys = encode_keys(model, batch, views)?;
    (0..model.num_views())
        .zip(keys)
        .map(|(v, k)| {
            let q = l2_normalize_rows(&gcn_rows(&model.query[v], &batch.query_prop, views.features(v))?);
            Ok((q, k))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub intra: f64,
    pub inter: f64,
    pub total: f64,
}

/// `L_intra`: mean over views of InfoNCE between query rows and the view's
/// fresh keys, with the view's queue as negatives.
pub fn intra_view_loss(encoded: &[(Array2<f64>, Array2<f64>)], banks: &[&Array2<f64>], tau: f64) -> Result<f64> {
    if encoded.len() != banks.len() || encoded.is_empty() {
        return Err(Error::shape("intra_view_loss", "one queue per view required"));
    }
    let mut total = 0.0;
    for ((q, k), bank) in encoded.iter().zip(banks) {
        if bank.nrows() == 0 {
            return Err(Error::EmptyInput("empty key queue".into()));
        }
        total += crate::nn::info_nce(q, k, bank, tau)?;
    }
    Ok(total / encoded.len() as f64)
}

/// `L_inter`: mean over ordered view pairs of InfoNCE between decoded source
/// queries and target-view keys, with the target view's queue as negatives.
pub fn inter_view_loss(
    decoders: &[MlpParams],
    encoded: &[(Array2<f64>, Array2<f64>)],
    banks: &[&Array2<f64>],
    tau: f64,
) -> Result<f64> {
    let pairs = view_pairs(encoded.len());
    if decoders.len() != pairs.len() {
        return Err(Error::InvalidConfig(format!(
            "{} decoders for {} ordered view pairs",
            decoders.len(),
            pairs.len()
        )));
    }
    let mut total = 0.0;
    for ((s, t), d) in pairs.iter().zip(decoders) {
        if banks[*t].nrows() == 0 {
            return Err(Error::EmptyInput("empty key queue".into()));
        }
        let h = l2_normalize_rows(&crate::nn::mlp_forward(d, encoded[*s].0.view())?);
        total += crate::nn::info_nce(&h, &encoded[*t].1, banks[*t], tau)?;
    }
    Ok(total / pairs.len() as f64)
}

struct Objective {
    tape: Tape,
    query: Vec<GcnVars>,
    decoders: Vec<MlpVars>,
    intra: Var,
    inter: Var,
    total: Var,
}

fn build_objective(
    model: &PretrainedModel,
    batch: &ContrastBatch,
    views: &ViewBundle,
    keys: &[Array2<f64>],
    banks: &[Arc<Array2<f64>>],
    tau: f64,
    alpha: f64,
) -> Result<Objective> {
    let mut tape = Tape::new();
    let nv = model.num_views();
    let query: Vec<GcnVars> = model.query.iter().map(|p| p.bind(&mut tape)).collect();
    let decoders: Vec<MlpVars> = model.decoders.iter().map(|p| p.bind(&mut tape)).collect();
    let mut zq = Vec::with_capacity(nv);
    for v in 0..nv {
        let z = gcn_on_tape::<ChaCha8Rng>(&mut tape, &query[v], &batch.query_prop, views.features(v), None)?;
        zq.push(tape.row_normalize(z)?);
    }
    let mut intra_terms = Vec::with_capacity(nv);
    for v in 0..nv {
        let l = tape.info_nce(zq[v], keys[v].clone(), banks[v].clone(), tau)?;
        intra_terms.push((1.0 / nv as f64, l));
    }
    let intra = tape.combine(intra_terms)?;
    let pairs = view_pairs(nv);
    let mut inter_terms = Vec::with_capacity(pairs.len());
    for (&(s, t), d) in pairs.iter().zip(&decoders) {
        let h = mlp_on_tape(&mut tape, d, zq[s])?;
        let h = tape.row_normalize(h)?;
        let l = tape.info_nce(h, keys[t].clone(), banks[t].clone(), tau)?;
        inter_terms.push((1.0 / pairs.len() as f64, l));
    }
    let inter = tape.combine(inter_terms)?;
    let total = tape.combine(vec![(alpha, intra), (1.0 - alpha, inter)])?;
    Ok(Objective {
        tape,
        query,
        decoders,
        intra,
        inter,
        total,
    })
}

/// Loss values for fixed keys and negatives.
pub fn pretrain_loss(
    model: &PretrainedModel,
    batch: &ContrastBatch,
    views: &ViewBundle,
    keys: &[Array2<f64>],
    banks: &[Arc<Array2<f64>>],
    tau: f64,
    alpha: f64,
) -> Result<LossReport> {
    let o = build_objective(model, batch, views, keys, banks, tau, alpha)?;
    Ok(LossReport {
        intra: o.tape.scalar(o.intra),
        inter: o.tape.scalar(o.inter),
        total: o.tape.scalar(o.total),
    })
}

/// Loss values and the gradient of `L_P` for every trainable tensor, in
/// [`PretrainedModel::trainable`] order.
pub fn pretrain_gradients(
    model: &PretrainedModel,
    batch: &ContrastBatch,
    views: &ViewBundle,
    keys: &[Array2<f64>],
    banks: &[Arc<Array2<f64>>],
    tau: f64,
    alpha: f64,
) -> Result<(LossReport, Vec<Array2<f64>>)> {
    let o = build_objective(model, batch, views, keys, banks, tau, alpha)?;
    let report = LossReport {
        intra: o.tape.scalar(o.intra),
        inter: o.tape.scalar(o.inter),
        total: o.tape.scalar(o.total),
    };
    if !report.total.is_finite() {
        return Err(Error::NonFinite { op: "pretrain_loss" });
    }
    let mut g = o.tape.backward(o.total)?;
    let mut grads: Vec<Array2<f64>> = o.query.iter().flat_map(|v| v.grads(&mut g)).collect();
    grads.extend(o.decoders.iter().flat_map(|v| v.grads(&mut g)));
    Ok((report, grads))
}

#[derive(Debug, Clone)]
pub struct PretrainState {
    pub config: PretrainConfig,
    pub model: PretrainedModel,
    pub queues: Vec<KeyQueue>,
    pub optimizer: OptimizerState,
    pub rng: ChaCha8Rng,
    pub steps: u64,
}

/// Fresh state: key encoders copy the query encoders, and each view's queue
/// holds the key embeddings of `K` random nodes.
pub fn init_pretrain(config: &PretrainConfig, ctx: &GraphContext, views: &ViewBundle, seed: u64) -> Result<PretrainState> {
    config.validate()?;
    let n = ctx.graph.num_nodes();
    if views.num_nodes() != n {
        return Err(Error::shape(
            "init_pretrain",
            format!("views have {} rows for a {n}-node graph", views.num_nodes()),
        ));
    }
    let mut rng = stream(&[seed, tag::PRETRAIN]);
    let model = PretrainedModel::init(config, views, &mut rng);
    let k = config.queue_size;
    let nodes: Vec<usize> = if k <= n {
        index::sample(&mut rng, n, k).into_vec()
    } else {
        (0..k).map(|_| rng.gen_range(0..n)).collect()
    };
    let prop = Propagation::for_targets(&ctx.adjacency, &nodes);
    let queues = (0..views.len())
        .map(|v| Ok(KeyQueue::from_rows(l2_normalize_rows(&gcn_rows(&model.key[v], &prop, views.features(v))?))))
        .collect::<Result<Vec<_>>>()?;
    let optimizer = OptimizerState::new(AdamConfig::new(config.lr, config.weight_decay), model.trainable());
    Ok(PretrainState {
        config: *config,
        model,
        queues,
        optimizer,
        rng,
        steps: 0,
    })
}

impl PretrainState {
    pub fn banks(&self) -> Vec<Arc<Array2<f64>>> {
        self.queues.iter().map(|q| Arc::new(q.bank().clone())).collect()
    }

    /// SHA-256 over parameters, queues and step count.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        self.model.hash_into(&mut h);
        for q in &self.queues {
            hash_tensors(&mut h, vec![&q.ordered()]);
        }
        h.update(self.steps.to_le_bytes());
        hex::encode(h.finalize())
    }

    pub fn to_checkpoint(&self, fingerprint: &str) -> Checkpoint {
        let mut ck = self.model.to_checkpoint(fingerprint);
        for (name, q) in self.model.view_names.iter().zip(&self.queues) {
            ck.insert(format!("queue.{name}"), &q.ordered());
        }
        ck
    }
}

/// One optimization step: update query encoders and decoders on `L_P`, move
/// key encoders towards the new query encoders, then enqueue the batch keys.
pub fn pretrain_step(state: &mut PretrainState, batch: &ContrastBatch, views: &ViewBundle) -> Result<LossReport> {
    let keys = encode_keys(&state.model, batch, views)?;
    let banks = state.banks();
    let (report, grads) = pretrain_gradients(
        &state.model,
        batch,
        views,
        &keys,
        &banks,
        state.config.tau,
        state.config.alpha,
    )?;
    {
        let mut params = state.model.trainable_mut();
        optimizer_step(&mut params, &grads, &mut state.optimizer)?;
    }
    let model = &mut state.model;
    for (k, q) in model.key.iter_mut().zip(&model.query) {
        for (kt, qt) in k.tensors_mut().into_iter().zip(q.tensors()) {
            momentum_update(kt, qt, state.config.momentum)?;
        }
    }
    for (queue, k) in state.queues.iter_mut().zip(&keys) {
        queue.enqueue(k)?;
    }
    state.steps += 1;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub intra: f64,
    pub inter: f64,
    pub total: f64,
}

pub fn steps_per_epoch(num_edges: usize, batch_size: usize) -> usize {
    num_edges.div_ceil(batch_size).max(1)
}

pub fn run_pretraining(
    state: &mut PretrainState,
    ctx: &GraphContext,
    views: &ViewBundle,
    epochs: usize,
) -> Result<Vec<EpochLoss>> {
    state.model.check_views(views)?;
    let steps = steps_per_epoch(ctx.graph.num_edges(), state.config.batch_size);
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut acc = [0.0; 3];
        for _ in 0..steps {
            let batch = ContrastBatch::sample(
                ctx,
                state.config.batch_size,
                state.config.encode_mode,
                state.config.readout,
                &mut state.rng,
            )?;
            let r = pretrain_step(state, &batch, views)?;
            acc[0] += r.intra;
            acc[1] += r.inter;
            acc[2] += r.total;
        }
        let e = EpochLoss {
            epoch,
            intra: acc[0] / steps as f64,
            inter: acc[1] / steps as f64,
            total: acc[2] / steps as f64,
        };
        debug!("pretrain epoch {epoch}: intra {:.4} inter {:.4} total {:.4}", e.intra, e.inter, e.total);
        history.push(e);
    }
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        info!(
            "pretraining: {} epochs x {steps} steps, L_P {:.4} -> {:.4}",
            epochs, first.total, last.total
        );
    }
    Ok(history)
}

pub fn write_loss_history(path: &Path, history: &[EpochLoss]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut write = || -> std::io::Result<()> {
        writeln!(f, "epoch\tl_intra\tl_inter\tl_p")?;
        for e in history {
            writeln!(f, "{}\t{:.6}\t{:.6}\t{:.6}", e.epoch, e.intra, e.inter, e.total)?;
        }
        f.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    #[test]
    fn queue_matches_deque() {
        let mut q = KeyQueue::from_rows(Array2::from_shape_fn((5, 2), |(i, j)| (i * 2 + j) as f64));
        let mut oracle: VecDeque<Vec<f64>> = q.ordered().rows().into_iter().map(|r| r.to_vec()).collect();
        for step in 0..4 {
            let batch = Array2::from_shape_fn((2, 2), |(i, j)| 100.0 + (step * 2 + i) as f64 + j as f64 * 0.5);
            q.enqueue(&batch).unwrap();
            for r in batch.rows() {
                oracle.pop_front();
                oracle.push_back(r.to_vec());
            }
            let got: Vec<Vec<f64>> = q.ordered().rows().into_iter().map(|r| r.to_vec()).collect();
            assert_eq!(got, Vec::from(oracle.clone()));
            assert_eq!(q.len(), 5);
        }
    }

    #[test]
    fn config_ranges() {
        let mut c = PretrainConfig::default();
        c.validate().unwrap();
        c.momentum = 1.0;
        assert!(c.validate().is_err());
        c = PretrainConfig { queue_size: 10, batch_size: 20, ..Default::default() };
        assert!(c.validate().is_err());
        c = PretrainConfig { tau: 0.0, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn view_pair_count() {
        assert_eq!(view_pairs(2), vec![(0, 1), (1, 0)]);
        assert_eq!(view_pairs(3).len(), 6);
    }
}

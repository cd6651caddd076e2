//! GCN encoder and MLP decoder forward passes, on and off the tape, plus the
//! value-level loss functions.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::params::{GcnParams, GcnVars, MlpParams, MlpVars};
use super::tape::{info_nce_forward, Tape, Var};
use crate::error::{Error, Result};
use crate::features::NodeFeatures;
use crate::graph::{ego_subgraph, normalize_adjacency, Graph, NormalizedAdjacency};
use crate::sparse::CsrMatrix;

/// How a subgraph embedding is read out of its node rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Readout {
    /// The row of the center node.
    #[default]
    Center,
    /// The mean of all subgraph rows.
    Mean,
}

/// The two propagation matrices of a two-layer GCN restricted to what a set
/// of output rows actually depends on.
///
/// `layer1` maps input rows (`input_rows` of the feature matrix, or all rows
/// when `None`) to hidden rows, and `layer2` maps hidden rows to output rows.
/// For the full graph both are `Â`.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub layer1: Arc<CsrMatrix>,
    pub layer2: Arc<CsrMatrix>,
    pub input_rows: Option<Vec<usize>>,
}

impl Propagation {
    pub fn full(adjacency: Arc<CsrMatrix>) -> Self {
        Self {
            layer1: adjacency.clone(),
            layer2: adjacency,
            input_rows: None,
        }
    }

    /// Full-graph propagation evaluated only at `targets` (repeats allowed).
    /// Output row `i` equals row `targets[i]` of the full-graph result.
    pub fn for_targets(adjacency: &CsrMatrix, targets: &[usize]) -> Self {
        let n = adjacency.rows();
        let mut hop1_mark = vec![false; n];
        for &t in targets {
            for &j in adjacency.row(t).0 {
                hop1_mark[j] = true;
            }
        }
        let hop1: Vec<usize> = (0..n).filter(|&i| hop1_mark[i]).collect();
        let mut hop2_mark = vec![false; n];
        for &i in &hop1 {
            for &j in adjacency.row(i).0 {
                hop2_mark[j] = true;
            }
        }
        let hop2: Vec<usize> = (0..n).filter(|&i| hop2_mark[i]).collect();
        let position = |nodes: &[usize]| {
            let mut map = vec![usize::MAX; n];
            for (p, &v) in nodes.iter().enumerate() {
                map[v] = p;
            }
            map
        };
        let layer2 = adjacency
            .select_rows(targets)
            .remap_columns(&position(&hop1), hop1.len());
        let layer1 = adjacency
            .select_rows(&hop1)
            .remap_columns(&position(&hop2), hop2.len());
        Self {
            layer1: Arc::new(layer1),
            layer2: Arc::new(layer2),
            input_rows: Some(hop2),
        }
    }

    /// Each target encoded from its own sampled ego-subgraph: a block-diagonal
    /// first layer over all subgraphs and a readout second layer.
    pub fn ego<R: Rng + ?Sized>(
        g: &Graph,
        targets: &[usize],
        radius: usize,
        fanout: usize,
        readout: Readout,
        rng: &mut R,
    ) -> Result<Self> {
        let mut blocks = Vec::with_capacity(targets.len());
        let mut input_rows = Vec::new();
        let mut readout_rows = Vec::with_capacity(targets.len());
        let mut offset = 0;
        for &t in targets {
            let sub = ego_subgraph(g, t, radius, fanout, rng)?;
            let adj = normalize_adjacency(&sub.to_graph()).into_matrix();
            let size = sub.nodes.len();
            let row: Vec<(usize, f64)> = match readout {
                Readout::Center => adj
                    .row(sub.center)
                    .0
                    .iter()
                    .zip(adj.row(sub.center).1)
                    .map(|(&j, &v)| (j + offset, v))
                    .collect(),
                Readout::Mean => {
                    let mut acc: HashMap<usize, f64> = HashMap::new();
                    for i in 0..size {
                        let (idx, val) = adj.row(i);
                        for (&j, &v) in idx.iter().zip(val) {
                            *acc.entry(j + offset).or_default() += v / size as f64;
                        }
                    }
                    let mut row: Vec<_> = acc.into_iter().collect();
                    row.sort_by_key(|e| e.0);
                    row
                }
            };
            readout_rows.push(row);
            input_rows.extend_from_slice(&sub.nodes);
            blocks.push(adj);
            offset += size;
        }
        let layer1 = CsrMatrix::block_diag(&blocks);
        let mut triplets = Vec::new();
        for (i, row) in readout_rows.into_iter().enumerate() {
            triplets.extend(row.into_iter().map(|(j, v)| (i, j, v)));
        }
        let layer2 = CsrMatrix::from_triplets(targets.len(), offset, triplets)?;
        Ok(Self {
            layer1: Arc::new(layer1),
            layer2: Arc::new(layer2),
            input_rows: Some(input_rows),
        })
    }

    pub fn output_rows(&self) -> usize {
        self.layer2.rows()
    }

    /// The feature rows the first layer consumes.
    pub fn gather_inputs(&self, x: &Arc<NodeFeatures>) -> Arc<NodeFeatures> {
        match &self.input_rows {
            None => x.clone(),
            Some(rows) => Arc::new(x.select_rows(rows)),
        }
    }
}

/// Inverted dropout with its own random stream.
pub struct Dropout<'a, R: Rng + ?Sized> {
    pub p: f64,
    pub rng: &'a mut R,
}

impl<'a, R: Rng + ?Sized> Dropout<'a, R> {
    fn mask(&mut self, dim: (usize, usize)) -> Array2<f64> {
        let keep = 1.0 / (1.0 - self.p);
        let p = self.p;
        Array2::from_shape_simple_fn(dim, || if self.rng.gen::<f64>() < p { 0.0 } else { keep })
    }

    fn features(&mut self, x: &NodeFeatures) -> NodeFeatures {
        match x {
            NodeFeatures::Dense(m) => {
                let mask = self.mask(m.dim());
                NodeFeatures::Dense(m * &mask)
            }
            NodeFeatures::Sparse(m) => {
                let keep = 1.0 / (1.0 - self.p);
                let p = self.p;
                NodeFeatures::Sparse(m.map_values(|_, _, v| {
                    if self.rng.gen::<f64>() < p {
                        0.0
                    } else {
                        v * keep
                    }
                }))
            }
        }
    }
}

/// `layer2 · relu(layer1 · X · W1 + b1) · W2 + b2` on the tape.
///
/// With `dropout`, the gathered input features and the hidden activations are
/// dropped independently.
pub fn gcn_on_tape<R: Rng + ?Sized>(
    tape: &mut Tape,
    vars: &GcnVars,
    prop: &Propagation,
    x: &Arc<NodeFeatures>,
    mut dropout: Option<&mut Dropout<'_, R>>,
) -> Result<Var> {
    let mut inputs = prop.gather_inputs(x);
    if inputs.rows() != prop.layer1.cols() {
        return Err(Error::shape(
            "gcn_forward",
            format!("{} feature rows for propagation over {}", inputs.rows(), prop.layer1.cols()),
        ));
    }
    if let Some(d) = dropout.as_deref_mut() {
        if d.p > 0.0 {
            inputs = Arc::new(d.features(&inputs));
        }
    }
    if inputs.cols() != tape.value(vars.w1).nrows() {
        return Err(Error::shape(
            "gcn_forward",
            format!("feature dim {} vs W1 {:?}", inputs.cols(), tape.value(vars.w1).dim()),
        ));
    }
    let xw = tape.feature_matmul(inputs, vars.w1)?;
    let mut h = tape.spmm(prop.layer1.clone(), xw)?;
    if let Some(b) = vars.b1 {
        h = tape.add_row(h, b)?;
    }
    h = tape.relu(h)?;
    if let Some(d) = dropout {
        if d.p > 0.0 {
            let mask = d.mask(tape.value(h).dim());
            h = tape.mul_const(h, mask)?;
        }
    }
    let hw = tape.matmul(h, vars.w2)?;
    let mut z = tape.spmm(prop.layer2.clone(), hw)?;
    if let Some(b) = vars.b2 {
        z = tape.add_row(z, b)?;
    }
    Ok(z)
}

/// `Z = Â · relu(Â X W1 + b1) · W2 + b2`.
pub fn gcn_forward(params: &GcnParams, adj: &NormalizedAdjacency, x: &NodeFeatures) -> Result<Array2<f64>> {
    if x.rows() != adj.dim() {
        return Err(Error::shape(
            "gcn_forward",
            format!("{} feature rows for a {}-node adjacency", x.rows(), adj.dim()),
        ));
    }
    params.check()?;
    let prop = Propagation::full(Arc::new(adj.matrix().clone()));
    gcn_rows(params, &prop, &Arc::new(x.clone()))
}

/// Evaluates a GCN over a propagation without recording gradients.
pub fn gcn_rows(params: &GcnParams, prop: &Propagation, x: &Arc<NodeFeatures>) -> Result<Array2<f64>> {
    let mut tape = Tape::new();
    let vars = params.bind_frozen(&mut tape);
    let z = gcn_on_tape::<rand::rngs::mock::StepRng>(&mut tape, &vars, prop, x, None)?;
    Ok(tape.value(z).clone())
}

/// `relu(x · W1 + b1) · W2 + b2` on the tape.
pub fn mlp_on_tape(tape: &mut Tape, vars: &MlpVars, x: Var) -> Result<Var> {
    let mut h = tape.matmul(x, vars.w1)?;
    if let Some(b) = vars.b1 {
        h = tape.add_row(h, b)?;
    }
    h = tape.relu(h)?;
    let mut out = tape.matmul(h, vars.w2)?;
    if let Some(b) = vars.b2 {
        out = tape.add_row(out, b)?;
    }
    Ok(out)
}

pub fn mlp_forward(params: &MlpParams, z: ArrayView2<f64>) -> Result<Array2<f64>> {
    params.check()?;
    let mut tape = Tape::new();
    let vars = params.bind_frozen(&mut tape);
    let x = tape.constant(z.to_owned());
    let out = mlp_on_tape(&mut tape, &vars, x)?;
    Ok(tape.value(out).clone())
}

/// Rows scaled to unit L2 norm (zero rows stay zero).
pub fn l2_normalize_rows(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let n = row.dot(&row).sqrt().max(super::tape::NORM_EPS);
        row.mapv_inplace(|v| v / n);
    }
    out
}

/// Mean over query rows of `−log softmax` of the positive among
/// `[q·k₊, q·bank₁, …, q·bank_K] / tau`.
pub fn info_nce(
    queries: &Array2<f64>,
    positives: &Array2<f64>,
    bank: &Array2<f64>,
    tau: f64,
) -> Result<f64> {
    info_nce_forward(queries, positives, bank, tau).map(|(loss, _)| loss)
}

/// Mean negative log-softmax probability of the true class over `mask`.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize], mask: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let targets = mask
        .iter()
        .map(|&i| {
            labels
                .get(i)
                .map(|&c| (i, c))
                .ok_or_else(|| Error::shape("cross_entropy", format!("node {i} has no label")))
        })
        .collect::<Result<Vec<_>>>()?;
    let loss = tape.softmax_cross_entropy(l, targets)?;
    Ok(tape.scalar(loss))
}

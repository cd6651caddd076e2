//! Node classification on the (refined) graph: a GCN body, optionally
//! initialized from the pretrained feature-view query encoder, followed by a
//! fresh linear head.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledSplit;
use crate::error::{Error, Result};
use crate::features::NodeFeatures;
use crate::nn::{
    gcn_on_tape, optimizer_step, AdamConfig, Dropout, GcnParams, GcnVars, LinearParams, LinearVars,
    OptimizerState, ParamSet, Propagation, Tape, Var,
};
use crate::seed::{stream, tag};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Copy the pretrained feature-view query encoder into the body.
    Transfer,
    /// Fresh Glorot body.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            weight_decay: 5e-4,
            dropout: 0.5,
            max_epochs: 500,
            patience: 100,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig("finetune.lr must be > 0 and weight_decay >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!("finetune.dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("finetune.max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneModel {
    pub body: GcnParams,
    pub head: LinearParams,
}

impl FinetuneModel {
    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = self.body.tensors_mut();
        out.extend(self.head.tensors_mut());
        out
    }

    fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut out = self.body.tensors();
        out.extend(self.head.tensors());
        out
    }

    pub fn num_classes(&self) -> usize {
        self.head.w.ncols()
    }
}

/// Body from `pretrained` (transfer) or freshly initialized with the same
/// shapes (random); the head is always fresh.
pub fn init_finetune(pretrained: &GcnParams, num_classes: usize, seed: u64, mode: InitMode) -> Result<FinetuneModel> {
    if num_classes < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 classes, got {num_classes}")));
    }
    pretrained.check()?;
    let mut rng = stream(&[seed, tag::FINETUNE_INIT]);
    let body = match mode {
        InitMode::Transfer => pretrained.clone(),
        InitMode::Random => GcnParams::init(
            pretrained.input_dim(),
            pretrained.hidden_dim(),
            pretrained.output_dim(),
            pretrained.b1.is_some(),
            &mut rng,
        ),
    };
    let head = LinearParams::init(body.output_dim(), num_classes, &mut rng);
    Ok(FinetuneModel { body, head })
}

struct Bound {
    body: GcnVars,
    head: LinearVars,
}

fn logits_on_tape<R: Rng + ?Sized>(
    tape: &mut Tape,
    vars: &Bound,
    prop: &Propagation,
    x: &Arc<NodeFeatures>,
    dropout: Option<&mut Dropout<'_, R>>,
) -> Result<Var> {
    let z = gcn_on_tape(tape, &vars.body, prop, x, dropout)?;
    let o = tape.matmul(z, vars.head.w)?;
    tape.add_row(o, vars.head.b)
}

fn bind(model: &FinetuneModel, tape: &mut Tape) -> Bound {
    Bound {
        body: model.body.bind(tape),
        head: model.head.bind(tape),
    }
}

/// Logits for the output rows of `prop`.
pub fn predict(model: &FinetuneModel, prop: &Propagation, x: &Arc<NodeFeatures>) -> Result<Array2<f64>> {
    let mut tape = Tape::new();
    let vars = Bound {
        body: model.body.bind_frozen(&mut tape),
        head: LinearVars {
            w: tape.constant(model.head.w.clone()),
            b: tape.constant(model.head.b.clone()),
        },
    };
    let l = logits_on_tape::<rand::rngs::mock::StepRng>(&mut tape, &vars, prop, x, None)?;
    Ok(tape.value(l).clone())
}

/// Mean cross-entropy over `mask` and its gradient for every model tensor
/// (body then head), without dropout.
pub fn finetune_gradients(
    model: &FinetuneModel,
    adjacency: &CsrMatrix,
    x: &Arc<NodeFeatures>,
    labels: &[usize],
    mask: &[usize],
) -> Result<(f64, Vec<Array2<f64>>)> {
    let prop = Propagation::for_targets(adjacency, mask);
    let mut tape = Tape::new();
    let vars = bind(model, &mut tape);
    let logits = logits_on_tape::<rand::rngs::mock::StepRng>(&mut tape, &vars, &prop, x, None)?;
    let targets = mask.iter().enumerate().map(|(r, &v)| (r, labels[v])).collect();
    let loss = tape.softmax_cross_entropy(logits, targets)?;
    let mut g = tape.backward(loss)?;
    let mut grads = vars.body.grads(&mut g);
    grads.extend(vars.head.grads(&mut g));
    Ok((tape.scalar(loss), grads))
}

fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax equals the label of the matching node.
pub fn accuracy_of(logits: &Array2<f64>, labels: &[usize], nodes: &[usize]) -> f64 {
    let correct = nodes
        .iter()
        .enumerate()
        .filter(|&(r, &v)| argmax(logits.row(r)) == labels[v])
        .count();
    correct as f64 / nodes.len() as f64
}

/// Accuracy of `model` over `mask`.
pub fn evaluate(
    model: &FinetuneModel,
    adjacency: &CsrMatrix,
    x: &Arc<NodeFeatures>,
    labels: &[usize],
    mask: &[usize],
) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::EmptyInput("evaluation mask is empty".into()));
    }
    let prop = Propagation::for_targets(adjacency, mask);
    Ok(accuracy_of(&predict(model, &prop, x)?, labels, mask))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneOutcome {
    pub model: FinetuneModel,
    pub best_epoch: usize,
    pub history: Vec<FinetuneEpoch>,
}

fn mean_ce(logits: &Array2<f64>, labels: &[usize], nodes: &[usize]) -> f64 {
    let mut total = 0.0;
    for (r, &v) in nodes.iter().enumerate() {
        let row = logits.row(r);
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
        total += lse - row[labels[v]];
    }
    total / nodes.len() as f64
}

/// Full-batch training on `split.train` with early stopping on validation
/// accuracy (ties broken by lower validation loss). Returns the parameters of
/// the best validation epoch. With an empty validation set, the last epoch
/// is returned.
pub fn finetune(
    model: FinetuneModel,
    adjacency: &CsrMatrix,
    x: &Arc<NodeFeatures>,
    split: &LabeledSplit,
    cfg: &FinetuneConfig,
    seed: u64,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(Error::EmptyInput("training mask is empty".into()));
    }
    if x.rows() != adjacency.rows() {
        return Err(Error::shape(
            "finetune",
            format!("{} feature rows for a {}-node graph", x.rows(), adjacency.rows()),
        ));
    }
    let mut model = model;
    let labels = &split.labels;
    let train_prop = Propagation::for_targets(adjacency, &split.train);
    let val_prop = (!split.val.is_empty()).then(|| Propagation::for_targets(adjacency, &split.val));
    let targets: Vec<(usize, usize)> = split.train.iter().enumerate().map(|(r, &v)| (r, labels[v])).collect();
    let mut opt = OptimizerState::new(AdamConfig::new(cfg.lr, cfg.weight_decay), model.tensors());
    let mut rng = stream(&[seed, tag::FINETUNE_TRAIN]);

    let mut best: Option<(f64, f64, usize, FinetuneModel)> = None;
    let mut history = Vec::new();
    for epoch in 0..cfg.max_epochs {
        let mut tape = Tape::new();
        let vars = bind(&model, &mut tape);
        let mut dropout = Dropout { p: cfg.dropout, rng: &mut rng };
        let logits = logits_on_tape(&mut tape, &vars, &train_prop, x, Some(&mut dropout))?;
        let loss = tape.softmax_cross_entropy(logits, targets.clone())?;
        let mut g = tape.backward(loss)?;
        let mut grads = vars.body.grads(&mut g);
        grads.extend(vars.head.grads(&mut g));
        optimizer_step(&mut model.tensors_mut(), &grads, &mut opt)?;

        let (val_loss, val_acc) = match &val_prop {
            Some(p) => {
                let l = predict(&model, p, x)?;
                (mean_ce(&l, labels, &split.val), accuracy_of(&l, labels, &split.val))
            }
            None => (f64::NAN, f64::NAN),
        };
        history.push(FinetuneEpoch {
            epoch,
            train_loss: tape.scalar(loss),
            val_loss,
            val_acc,
        });
        let improved = match &best {
            None => true,
            Some(_) if val_prop.is_none() => true,
            Some((acc, vl, _, _)) => val_acc > *acc || (val_acc == *acc && val_loss < *vl),
        };
        if improved {
            best = Some((val_acc, val_loss, epoch, model.clone()));
        } else if epoch - best.as_ref().map_or(0, |b| b.2) >= cfg.patience {
            break;
        }
    }
    let (_, _, best_epoch, model) = best.expect("at least one epoch ran");
    Ok(FinetuneOutcome {
        model,
        best_epoch,
        history,
    })
}

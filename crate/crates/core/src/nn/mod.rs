//! Differentiable kernels for the fixed GSR architectures.

pub mod checkpoint;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;

pub use layers::{
    cross_entropy, gcn_forward, gcn_on_tape, gcn_rows, info_nce, l2_normalize_rows, mlp_forward,
    mlp_on_tape, Dropout, Propagation, Readout,
};
pub use optim::{momentum_update, optimizer_step, AdamConfig, OptimizerState};
pub use params::{glorot, GcnParams, GcnVars, LinearParams, LinearVars, MlpParams, MlpVars, ParamSet};
pub use tape::{Gradients, Tape, Var};

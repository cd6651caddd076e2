//! Parameter records for the two fixed architectures: a two-layer GCN and a
//! two-layer MLP, plus the linear classification head.

use ndarray::Array2;
use rand::Rng;

use super::tape::{Gradients, Tape, Var};
use crate::error::{Error, Result};

/// Uniform Glorot initialization, `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let a = (6.0 / (rows + cols).max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-a..a))
}

/// Anything that owns a fixed, ordered list of named parameter tensors.
pub trait ParamSet {
    fn named(&self) -> Vec<(&'static str, &Array2<f64>)>;
    fn named_mut(&mut self) -> Vec<(&'static str, &mut Array2<f64>)>;

    fn tensors(&self) -> Vec<&Array2<f64>> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.named_mut().into_iter().map(|(_, t)| t).collect()
    }

    fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

macro_rules! two_layer_params {
    ($name:ident, $vars:ident) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            pub w1: Array2<f64>,
            pub b1: Option<Array2<f64>>,
            pub w2: Array2<f64>,
            pub b2: Option<Array2<f64>>,
        }

        impl $name {
            pub fn init<R: Rng + ?Sized>(
                d_in: usize,
                d_hid: usize,
                d_out: usize,
                bias: bool,
                rng: &mut R,
            ) -> Self {
                let w1 = glorot(d_in, d_hid, rng);
                let w2 = glorot(d_hid, d_out, rng);
                Self {
                    w1,
                    b1: bias.then(|| Array2::zeros((1, d_hid))),
                    w2,
                    b2: bias.then(|| Array2::zeros((1, d_out))),
                }
            }

            pub fn input_dim(&self) -> usize {
                self.w1.nrows()
            }

            pub fn hidden_dim(&self) -> usize {
                self.w1.ncols()
            }

            pub fn output_dim(&self) -> usize {
                self.w2.ncols()
            }

            pub fn check(&self) -> Result<()> {
                let ok = self.w1.ncols() == self.w2.nrows()
                    && self.b1.as_ref().map_or(true, |b| b.dim() == (1, self.w1.ncols()))
                    && self.b2.as_ref().map_or(true, |b| b.dim() == (1, self.w2.ncols()));
                if !ok {
                    return Err(Error::shape(
                        stringify!($name),
                        format!("inconsistent layer shapes {:?} / {:?}", self.w1.dim(), self.w2.dim()),
                    ));
                }
                Ok(())
            }

            pub fn bind(&self, tape: &mut Tape) -> $vars {
                $vars {
                    w1: tape.leaf(self.w1.clone()),
                    b1: self.b1.as_ref().map(|b| tape.leaf(b.clone())),
                    w2: tape.leaf(self.w2.clone()),
                    b2: self.b2.as_ref().map(|b| tape.leaf(b.clone())),
                }
            }

            /// Same values, recorded as constants (no gradient).
            pub fn bind_frozen(&self, tape: &mut Tape) -> $vars {
                $vars {
                    w1: tape.constant(self.w1.clone()),
                    b1: self.b1.as_ref().map(|b| tape.constant(b.clone())),
                    w2: tape.constant(self.w2.clone()),
                    b2: self.b2.as_ref().map(|b| tape.constant(b.clone())),
                }
            }
        }

        impl ParamSet for $name {
            fn named(&self) -> Vec<(&'static str, &Array2<f64>)> {
                let mut out = vec![("w1", &self.w1)];
                if let Some(b) = &self.b1 {
                    out.push(("b1", b));
                }
                out.push(("w2", &self.w2));
                if let Some(b) = &self.b2 {
                    out.push(("b2", b));
                }
                out
            }

            fn named_mut(&mut self) -> Vec<(&'static str, &mut Array2<f64>)> {
                let mut out = vec![("w1", &mut self.w1)];
                if let Some(b) = &mut self.b1 {
                    out.push(("b1", b));
                }
                out.push(("w2", &mut self.w2));
                if let Some(b) = &mut self.b2 {
                    out.push(("b2", b));
                }
                out
            }
        }

        #[derive(Debug, Clone, Copy)]
        pub struct $vars {
            pub w1: Var,
            pub b1: Option<Var>,
            pub w2: Var,
            pub b2: Option<Var>,
        }

        impl $vars {
            pub fn vars(&self) -> Vec<Var> {
                let mut out = vec![self.w1];
                out.extend(self.b1);
                out.push(self.w2);
                out.extend(self.b2);
                out
            }

            /// Gradients in [`ParamSet::named`] order.
            pub fn grads(&self, g: &mut Gradients) -> Vec<Array2<f64>> {
                self.vars().into_iter().map(|v| g.take(v)).collect()
            }
        }
    };
}

two_layer_params!(GcnParams, GcnVars);
two_layer_params!(MlpParams, MlpVars);

/// Affine map `x·w + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub w: Array2<f64>,
    pub b: Array2<f64>,
}

impl LinearParams {
    pub fn init<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        Self {
            w: glorot(d_in, d_out, rng),
            b: Array2::zeros((1, d_out)),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> LinearVars {
        LinearVars {
            w: tape.leaf(self.w.clone()),
            b: tape.leaf(self.b.clone()),
        }
    }
}

impl ParamSet for LinearParams {
    fn named(&self) -> Vec<(&'static str, &Array2<f64>)> {
        vec![("w", &self.w), ("b", &self.b)]
    }

    fn named_mut(&mut self) -> Vec<(&'static str, &mut Array2<f64>)> {
        vec![("w", &mut self.w), ("b", &mut self.b)]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub w: Var,
    pub b: Var,
}

impl LinearVars {
    pub fn grads(&self, g: &mut Gradients) -> Vec<Array2<f64>> {
        vec![g.take(self.w), g.take(self.b)]
    }
}

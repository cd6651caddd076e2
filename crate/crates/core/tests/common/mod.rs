//! Shared fixtures and reference helpers for the integration tests.
#![allow(dead_code)]

pub mod checks;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gsr_core::graph::Graph;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    use rand_distr::StandardNormal;
    Array2::from_shape_simple_fn((rows, cols), || rng.sample::<f64, _>(StandardNormal))
}

pub fn unit_rows(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut m = gaussian(rows, cols, rng);
    for mut r in m.rows_mut() {
        let n = r.dot(&r).sqrt();
        r.mapv_inplace(|v| v / n);
    }
    m
}

/// Erdős–Rényi graph with a ring added so no node is isolated.
pub fn connected_graph(n: usize, p: f64, rng: &mut impl Rng) -> Graph {
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges).unwrap()
}

pub fn random_graph(n: usize, p: f64, rng: &mut impl Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges).unwrap()
}

pub fn dense_adjacency(g: &Graph) -> Array2<f64> {
    let n = g.num_nodes();
    let mut a = Array2::zeros((n, n));
    for &(u, v) in g.edges() {
        a[[u, v]] = 1.0;
        a[[v, u]] = 1.0;
    }
    a
}

/// `D^{-1/2} (A + I) D^{-1/2}` computed densely.
pub fn dense_normalized(g: &Graph) -> Array2<f64> {
    let n = g.num_nodes();
    let a = dense_adjacency(g) + Array2::<f64>::eye(n);
    let d: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
    Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] / (d[i] * d[j]).sqrt())
}

/// Largest element-wise relative deviation `|a-b| / max(|a|+|b|, floor)`
/// across tensors, after a central difference of `loss` over every scalar.
pub fn finite_difference_error<M: Clone>(
    model: &M,
    tensors_mut: impl Fn(&mut M) -> Vec<&mut Array2<f64>>,
    loss: impl Fn(&M) -> f64,
    analytic: &[Array2<f64>],
) -> f64 {
    const H: f64 = 1e-6;
    let mut probe = model.clone();
    let count = tensors_mut(&mut probe).len();
    assert_eq!(count, analytic.len(), "one gradient per tensor");
    let mut worst: f64 = 0.0;
    for t in 0..count {
        let shape = analytic[t].dim();
        let mut numeric = Array2::zeros(shape);
        for idx in ndarray::indices(shape) {
            let orig = tensors_mut(&mut probe)[t][idx];
            tensors_mut(&mut probe)[t][idx] = orig + H;
            let up = loss(&probe);
            tensors_mut(&mut probe)[t][idx] = orig - H;
            let down = loss(&probe);
            tensors_mut(&mut probe)[t][idx] = orig;
            numeric[idx] = (up - down) / (2.0 * H);
        }
        let diff = (&numeric - &analytic[t]).mapv(|v| v * v).sum().sqrt();
        let scale = numeric.mapv(|v| v * v).sum().sqrt() + analytic[t].mapv(|v| v * v).sum().sqrt();
        if scale > 1e-9 {
            worst = worst.max(diff / scale);
        }
    }
    worst
}

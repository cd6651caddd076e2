//! Property tests for structural invariants.

mod common;

use std::collections::{BTreeSet, VecDeque};

use ndarray::Array2;
use proptest::prelude::*;

use gsr_core::config::RunConfig;
use gsr_core::data::{matrix_from_bytes, matrix_to_bytes};
use gsr_core::graph::{apply_refinement, homophily_ratio, normalize_adjacency, Graph};
use gsr_core::pretrain::{steps_per_epoch, KeyQueue};
use gsr_core::refine::{
    normalize_scores, read_plan_diff, score_pairs, select_refinement, write_plan_diff, CandidateStrategy, NormMode,
    RefineConfig, ViewEmbeddings,
};

fn graph_strategy(max_nodes: usize) -> impl Strategy<Value = Graph> {
    (1..=max_nodes).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n), 0..3 * n).prop_map(move |pairs| Graph::from_edges(n, pairs).unwrap())
    })
}

fn embedding_strategy(n: usize) -> impl Strategy<Value = ViewEmbeddings> {
    (
        prop::collection::vec(-3i8..=3, n * 3),
        prop::collection::vec(-3i8..=3, n * 2),
    )
        .prop_map(move |(a, b)| {
            // Small integer coordinates: many exact ties; zero rows replaced.
            let fix = |v: Vec<i8>, d: usize| {
                let mut m = Array2::from_shape_vec((n, d), v.into_iter().map(f64::from).collect()).unwrap();
                for mut row in m.rows_mut() {
                    if row.iter().all(|&x| x == 0.0) {
                        row[0] = 1.0;
                    }
                }
                m
            };
            ViewEmbeddings {
                names: vec!["F".into(), "S".into()],
                z: vec![fix(a, 3), fix(b, 2)],
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graphs_are_canonical(n in 1usize..30, pairs in prop::collection::vec((0usize..30, 0usize..30), 0..80)) {
        let pairs: Vec<_> = pairs.into_iter().map(|(u, v)| (u % n, v % n)).collect();
        let g = Graph::from_edges(n, pairs.clone()).unwrap();
        let want: BTreeSet<_> = pairs.iter().filter(|(u, v)| u != v).map(|&(u, v)| (u.min(v), u.max(v))).collect();
        prop_assert_eq!(g.edges().to_vec(), want.into_iter().collect::<Vec<_>>());
        let degree_sum: usize = (0..n).map(|u| g.degree(u)).sum();
        prop_assert_eq!(degree_sum, 2 * g.num_edges());
        for &(u, v) in g.edges() {
            prop_assert!(g.has_edge(v, u));
        }
    }

    #[test]
    fn normalized_adjacency_is_symmetric_with_known_diagonal(g in graph_strategy(40)) {
        let a = normalize_adjacency(&g).matrix().to_dense();
        for u in 0..g.num_nodes() {
            prop_assert!((a[[u, u]] - 1.0 / (g.degree(u) + 1) as f64).abs() < 1e-15);
            for v in 0..g.num_nodes() {
                prop_assert_eq!(a[[u, v]], a[[v, u]]);
                prop_assert!((0.0..=1.0).contains(&a[[u, v]]));
            }
        }
    }

    #[test]
    fn scores_normalize_into_unit_interval_preserving_order(raw in prop::collection::vec(-1.0f64..1.0, 2..60)) {
        for mode in [NormMode::Minmax, NormMode::Rank] {
            let s = normalize_scores(&raw, mode);
            for i in 0..raw.len() {
                prop_assert!((0.0..=1.0).contains(&s[i]));
                for j in 0..raw.len() {
                    if raw[i] < raw[j] {
                        prop_assert!(s[i] < s[j]);
                    }
                    if raw[i] == raw[j] {
                        prop_assert_eq!(s[i], s[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn selection_respects_its_contract(
        (g, emb) in (2usize..25).prop_flat_map(|n| {
            (prop::collection::vec((0..n, 0..n), 0..2 * n).prop_map(move |p| Graph::from_edges(n, p).unwrap()),
             embedding_strategy(n))
        }),
        beta in 0.0f64..=1.0,
        fp in 0.0f64..=1.0,
        fm in 0.0f64..=1.0,
    ) {
        let cfg = RefineConfig { candidates: CandidateStrategy::AllPairs, ..RefineConfig::two_view(beta, 0, 0) };
        let scores = score_pairs(&emb, &cfg, &g).unwrap();
        for &c in &scores.combined {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&c));
        }
        let non_edges = scores.pairs.len() - g.num_edges();
        let m_plus = (fp * non_edges as f64) as usize;
        let m_minus = (fm * g.num_edges() as f64) as usize;
        let plan = select_refinement(&scores, &g, m_plus, m_minus).unwrap();
        prop_assert_eq!(plan.add.len(), m_plus);
        prop_assert_eq!(plan.remove.len(), m_minus);
        prop_assert!(plan.add.iter().all(|p| p.u < p.v && !g.has_edge(p.u, p.v)));
        prop_assert!(plan.remove.iter().all(|p| g.has_edge(p.u, p.v)));
        prop_assert!(plan.add.windows(2).all(|w| w[0].score >= w[1].score));
        prop_assert!(plan.remove.windows(2).all(|w| w[0].score <= w[1].score));
        // Nothing left out scores strictly better than what was picked.
        let score = |u, v| scores.pairs.iter().position(|&p| p == (u, v)).map(|i| scores.combined[i]).unwrap();
        if let Some(worst_added) = plan.add.last() {
            let picked: BTreeSet<_> = plan.add.iter().map(|p| (p.u, p.v)).collect();
            for &(u, v) in &scores.pairs {
                if !g.has_edge(u, v) && !picked.contains(&(u, v)) {
                    prop_assert!(score(u, v) <= worst_added.score);
                }
            }
        }

        let refined = apply_refinement(&g, &plan).unwrap();
        prop_assert_eq!(refined.num_edges(), g.num_edges() + m_plus - m_minus);
        let back = apply_refinement(&refined, &plan.reversed()).unwrap();
        prop_assert_eq!(back.edges(), g.edges());

        let mut text = Vec::new();
        write_plan_diff(&mut text, &plan).unwrap();
        let parsed = read_plan_diff(&text[..], std::path::Path::new("plan")).unwrap();
        prop_assert_eq!(parsed, plan);
    }

    #[test]
    fn homophily_is_a_fraction(g in graph_strategy(30), classes in 1usize..4) {
        let labels: Vec<usize> = (0..g.num_nodes()).map(|i| (i * 7 + 3) % classes).collect();
        let h = homophily_ratio(&g, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&h.ratio));
        prop_assert_eq!(h.no_edges, g.num_edges() == 0);
        if classes == 1 && g.num_edges() > 0 {
            prop_assert_eq!(h.ratio, 1.0);
        }
    }

    #[test]
    fn key_queue_behaves_like_a_bounded_deque(
        k in 1usize..12,
        batches in prop::collection::vec(1usize..12, 1..10),
    ) {
        let d = 2;
        let initial = Array2::from_shape_fn((k, d), |(i, j)| (i * d + j) as f64);
        let mut q = KeyQueue::from_rows(initial.clone());
        let mut model: VecDeque<Vec<f64>> = initial.rows().into_iter().map(|r| r.to_vec()).collect();
        let mut next = 1000.0;
        for b in batches {
            let b = b.min(k);
            let keys = Array2::from_shape_fn((b, d), |(i, j)| next + (i * d + j) as f64);
            next += 100.0;
            q.enqueue(&keys).unwrap();
            for r in keys.rows() {
                model.pop_front();
                model.push_back(r.to_vec());
            }
            let ordered: Vec<Vec<f64>> = q.ordered().rows().into_iter().map(|r| r.to_vec()).collect();
            prop_assert_eq!(&ordered, &model.iter().cloned().collect::<Vec<_>>());
        }
        prop_assert!(q.enqueue(&Array2::zeros((k + 1, d))).is_err());
    }

    #[test]
    fn steps_per_epoch_is_the_ceiling(e in 1usize..100_000, b in 1usize..2048) {
        let s = steps_per_epoch(e, b);
        prop_assert!(s * b >= e && (s - 1) * b < e);
    }

    #[test]
    fn matrices_round_trip_through_bytes(rows in 0usize..9, cols in 0usize..9, seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let m = common::gaussian(rows, cols, &mut r).mapv(|v| v as f32);
        let back = matrix_from_bytes(&matrix_to_bytes(&m), std::path::Path::new("m")).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn config_overrides_round_trip(alpha in 0.0f64..=1.0, beta in 0.0f64..=1.0, add in 0.0f64..=1.0) {
        let sets = vec![format!("pretrain.alpha={alpha:?}"), format!("refine.beta_f={beta:?}"), format!("refine.add_ratio={add:?}")];
        let c = RunConfig::from_toml("", &sets).unwrap();
        prop_assert_eq!(c.pretrain.alpha, alpha);
        prop_assert_eq!(c.refine.beta_f, beta);
        let back = RunConfig::from_toml(&c.to_toml(), &[]).unwrap();
        prop_assert_eq!(back.fingerprint(), c.fingerprint());
    }
}

//! Property tests against independent oracles.

#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;

use shallow_gt::analyze::{discriminative_fraction, top_eigvecs};
use shallow_gt::experiments::loglog_fit;
use shallow_gt::gradcheck::{random_instance, GradCheckConfig};
use shallow_gt::grad::{backward, central_difference, sgd_step};
use shallow_gt::graph::{spd, Graph};
use shallow_gt::graphgen::{generate, SyntheticConfig, MU1, MU2};
use shallow_gt::linalg::Matrix;
use shallow_gt::model::{forward, pe_index, softmax, Mode};

fn floyd_warshall(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    const INF: usize = usize::MAX / 4;
    let mut d = vec![vec![INF; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(u, v) in edges {
        if u != v {
            d[u][v] = 1;
            d[v][u] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

fn random_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..=50).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..3 * n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bfs_distances_match_floyd_warshall((n, edges) in random_graph(), z_cap in 2usize..12) {
        let g = Graph::from_parts(Matrix::eye(n, 2), vec![1; n], None, &edges).unwrap();
        let fw = floyd_warshall(n, &edges);
        for s in 0..n {
            let row = spd(&g, s, z_cap).unwrap();
            for t in 0..n {
                prop_assert_eq!(row[t] as usize, fw[s][t].min(z_cap));
            }
        }
    }

    #[test]
    fn softmax_ignores_shifts(logits in prop::collection::vec(-30.0f64..30.0, 1..40), c in -100.0f64..100.0) {
        let a = softmax(&logits);
        let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
        let b = softmax(&shifted);
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_jacobian_rows_sum_to_zero(logits in prop::collection::vec(-5.0f64..5.0, 2..12)) {
        for i in 0..logits.len() {
            let row_sum: f64 = (0..logits.len())
                .map(|j| {
                    central_difference(
                        |t| {
                            let mut l = logits.clone();
                            l[j] = t;
                            softmax(&l)[i]
                        },
                        logits[j],
                        1e-5,
                    )
                })
                .sum();
            prop_assert!(row_sum.abs() < 1e-8, "row {} sums to {}", i, row_sum);
        }
    }

    #[test]
    fn pe_index_is_monotone_and_capped(spd_a in 0usize..100, spd_b in 0usize..100, z in 1usize..30) {
        let (lo, hi) = (spd_a.min(spd_b), spd_a.max(spd_b));
        prop_assert!(pe_index(lo, z) <= pe_index(hi, z));
        prop_assert!((1..=z).contains(&pe_index(hi, z)));
        if lo + 1 < z {
            prop_assert_eq!(pe_index(lo, z), lo + 1);
        }
    }

    #[test]
    fn frozen_tensors_never_move(index in 0usize..500, eta in 0.001f64..1.0) {
        let inst = random_instance(&GradCheckConfig::default(), index).unwrap();
        let (_, cache) = forward(&inst.params, &inst.graph, inst.node, &inst.sampled).unwrap();
        let g = backward(&cache, &inst.params, &inst.graph, inst.label).unwrap();
        let next = sgd_step(&inst.params, &[g], eta).unwrap();
        let p = &inst.params;
        prop_assert_eq!(&next.a, &p.a);
        if !p.trainable.w_q {
            prop_assert_eq!(&next.w_q, &p.w_q);
            prop_assert_eq!(&next.w_k, &p.w_k);
        }
        if !p.trainable.b {
            prop_assert_eq!(&next.b, &p.b);
        }
        if !p.trainable.b_self {
            prop_assert_eq!(next.b[0], p.b[0]);
        }
        if p.mode == Mode::Gcn {
            prop_assert!(!p.trainable.w_q && !p.trainable.b);
        }
    }

    #[test]
    fn cone_test_is_scale_invariant(
        rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 6), 8..40),
        shift in prop::collection::vec(-2.0f64..2.0, 6),
        k in -6i32..6,
    ) {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&shift).map(|(a, b)| a + b).collect()).collect();
        let c = 2f64.powi(k);
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
        let a: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let b: Vec<&[f64]> = scaled.iter().map(|r| r.as_slice()).collect();
        let ta = discriminative_fraction(&a, &top_eigvecs(&a).unwrap().vectors).unwrap();
        let tb = discriminative_fraction(&b, &top_eigvecs(&b).unwrap().vectors).unwrap();
        prop_assert_eq!(ta.degenerate_mean, tb.degenerate_mean);
        if !ta.degenerate_mean {
            prop_assert_eq!(ta.in_cone, tb.in_cone);
        }
    }

    #[test]
    fn loglog_fit_recovers_exact_power_laws(
        slope in -3.0f64..3.0,
        scale in 0.01f64..100.0,
        xs in prop::collection::btree_set(1u32..10_000, 2..10),
    ) {
        let x: Vec<f64> = xs.iter().map(|&v| v as f64 / 10.0).collect();
        let y: Vec<f64> = x.iter().map(|v| scale * v.powf(slope)).collect();
        let (s, i, r) = loglog_fit(&x, &y).unwrap();
        prop_assert!((s - slope).abs() < 1e-9);
        prop_assert!((i - scale.ln()).abs() < 1e-8);
        prop_assert!(r < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generated_graphs_hold_their_invariants(
        n in 150usize..400,
        gamma_d in 0.3f64..0.6,
        eps_s in 0.0f64..0.3,
        deg_min in 8usize..24,
        seed in any::<u64>(),
    ) {
        let cfg = SyntheticConfig { n, gamma_d, eps_s, deg_min, seed, ..Default::default() };
        let syn = generate(&cfg).unwrap();
        let g = &syn.graph;
        let pat = g.pattern_of().unwrap();
        for u in 0..g.len() {
            prop_assert!(g.degree(u) >= deg_min, "node {} has degree {}", u, g.degree(u));
            for &v in g.neighbors(u) {
                prop_assert!(v != u);
                prop_assert!(g.neighbors(v).binary_search(&u).is_ok(), "edge {}-{} is one-sided", u, v);
                let pair = (pat[u].min(pat[v]), pat[u].max(pat[v]));
                prop_assert!(pair != (MU1, MU2), "edge {}-{} joins the two discriminative patterns", u, v);
            }
        }
    }
}

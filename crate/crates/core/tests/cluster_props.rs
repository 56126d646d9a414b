mod common;

use phasealign::align::{verify_certificate, FeasibilityOracle, ScalarArcOracle};
use phasealign::exact::{
    bnr_min_clustering, brute_force_min_partition, swap_partition, ExactConfig,
};
use phasealign::graph::{
    build_similarity_graph, components_within, connected_components, enumerate_maximal_clusters,
    independent_set, mis_lower_bound, NoGoods,
};
use phasealign::matrix::CMatrix;
use proptest::prelude::*;
use rand::Rng;

use common::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mis_bound_never_exceeds_independence_number(seed in any::<u64>(), n in 0usize..=15, p in 0.0f64..1.0) {
        let g = random_graph(n, p, &mut rng(seed));
        let set = independent_set(&g, &g.vertices());
        for (a, &i) in set.iter().enumerate() {
            for &j in &set[a + 1..] {
                prop_assert!(!g.adjacent(i, j));
            }
        }
        prop_assert!(mis_lower_bound(&g, &g.vertices()) <= brute_force_mis(&g));
    }

    #[test]
    fn bnr_is_optimal_on_scalars(seed in any::<u64>(), k in 1usize..=8, alpha in 0.02f64..0.8) {
        let angles = random_band_angles(k, &mut rng(seed));
        let o = ScalarArcOracle::from_angles(&angles);
        let g = build_similarity_graph(&o, alpha).unwrap();
        let p = bnr_min_clustering(&g, &o, &ExactConfig::default()).unwrap();
        p.validate(k).unwrap();
        prop_assert!(p.is_certified());
        prop_assert_eq!(p.len(), scalar_min_partition(&angles, alpha));
        prop_assert_eq!(p.len(), brute_force_min_partition(&o, alpha).unwrap().len());
        // Component additivity.
        let per_component: usize = connected_components(&g)
            .iter()
            .map(|comp| {
                let sub: Vec<f64> = comp.iter().map(|&i| angles[i]).collect();
                let so = ScalarArcOracle::from_angles(&sub);
                let sg = build_similarity_graph(&so, alpha).unwrap();
                bnr_min_clustering(&sg, &so, &ExactConfig::default()).unwrap().len()
            })
            .sum();
        prop_assert_eq!(p.len(), per_component);
        // Determinism.
        prop_assert_eq!(bnr_min_clustering(&g, &o, &ExactConfig::default()).unwrap(), p);
    }

    #[test]
    fn enumerated_clusters_are_maximal_and_certified(seed in any::<u64>(), k in 2usize..=9, alpha in 0.05f64..0.6) {
        let mut r = rng(seed);
        let angles = random_band_angles(k, &mut r);
        let o = ScalarArcOracle::from_angles(&angles);
        let set = scalar_set(&angles);
        let g = build_similarity_graph(&o, alpha).unwrap();
        let mut uncovered: Vec<usize> = (0..k).filter(|_| r.gen::<f64>() < 0.8).collect();
        let root = r.gen_range(0..k);
        if !uncovered.contains(&root) {
            uncovered.push(root);
            uncovered.sort_unstable();
        }
        let clusters = enumerate_maximal_clusters(&g, root, &uncovered, &o, &NoGoods::new()).unwrap();
        prop_assert!(!clusters.is_empty());
        for c in &clusters {
            prop_assert!(c.contains(root));
            prop_assert!(c.members.iter().all(|v| uncovered.contains(v)));
            for (a, &i) in c.members.iter().enumerate() {
                for &j in &c.members[a + 1..] {
                    prop_assert!(g.weight(i, j) > 0.0, "non-edge {} {} inside a cluster", i, j);
                }
            }
            let members: Vec<&CMatrix> = c.members.iter().map(|&i| &set[i]).collect();
            prop_assert!(verify_certificate(&members, alpha, &c.certificate.as_ref().unwrap().k));
            for &v in uncovered.iter().filter(|v| !c.contains(**v)) {
                if c.members.iter().all(|&u| g.adjacent(u, v)) {
                    let mut bigger = c.members.clone();
                    bigger.push(v);
                    prop_assert!(o.check(&bigger, alpha).unwrap().is_none(), "{:?} + {} is alignable", c.members, v);
                }
            }
        }
        // Components of the remainder never straddle a non-edge.
        for comp in components_within(&g, &uncovered) {
            prop_assert!(comp.iter().all(|v| uncovered.contains(v)));
        }
    }
}

#[test]
fn swaps_preserve_partition_invariants() {
    let mut tried = 0;
    for seed in 0..3000u64 {
        let Some((angles, _alpha, c, x, y)) = random_swap(seed) else {
            continue;
        };
        tried += 1;
        let o = ScalarArcOracle::from_angles(&angles);
        let out = swap_partition(&c, &x, &y, &o).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        out.validate(angles.len()).unwrap();
        assert!(out.len() <= c.len());
        let set = scalar_set(&angles);
        for cl in &out.clusters {
            let members: Vec<&CMatrix> = cl.members.iter().map(|&i| &set[i]).collect();
            assert!(verify_certificate(
                &members,
                out.alpha,
                &cl.certificate.as_ref().unwrap().k
            ));
        }
        for yi in &y {
            let mut yi = yi.clone();
            yi.sort_unstable();
            assert!(out.clusters.iter().any(|cl| cl.members == yi));
        }
        if tried == 500 {
            break;
        }
    }
    assert_eq!(tried, 500, "too few valid swap instances");
}

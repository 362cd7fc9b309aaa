mod support;

use kcnn::community::{louvain, louvain_with_levels, modularity};
use kcnn::embed::{nystrom_fit, EmbeddedGraph};
use kcnn::graph::{generate_synthetic, LabeledGraph};
use kcnn::harness::{stratified_folds, validation_split};
use kcnn::kernels::{gram_matrix, Featurizer, KernelSpec};
use kcnn::neural::{forward, GraphBatch, KcnnModel, ModelShape};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use support::{random_graph, rng, sp_oracle, wl_oracle};

fn graph_strategy(max_nodes: usize) -> impl Strategy<Value = LabeledGraph> {
    (1..=max_nodes, 0.0f64..0.6, 1u32..4, any::<u64>())
        .prop_map(|(n, p, alphabet, seed)| random_graph(&mut rng(seed), n, p, alphabet))
}

fn specs() -> [KernelSpec; 3] {
    [KernelSpec::shortest_path(), KernelSpec::weisfeiler_lehman(1), KernelSpec::weisfeiler_lehman(3)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernels_match_oracles(a in graph_strategy(9), b in graph_strategy(9)) {
        let sp = Featurizer::new(KernelSpec::shortest_path());
        prop_assert_eq!(sp.feature_map(&a).dot(&sp.feature_map(&b)), sp_oracle(&a, &b));
        let wl = Featurizer::new(KernelSpec::weisfeiler_lehman(2));
        prop_assert_eq!(wl.feature_map(&a).dot(&wl.feature_map(&b)), wl_oracle(&a, &b, 2));
    }

    #[test]
    fn kernels_symmetric_and_cauchy_schwarz(a in graph_strategy(10), b in graph_strategy(10)) {
        for spec in specs() {
            let f = Featurizer::new(spec);
            let (fa, fb) = (f.feature_map(&a), f.feature_map(&b));
            let kab = fa.dot(&fb) as f64;
            prop_assert_eq!(fa.dot(&fb), fb.dot(&fa));
            prop_assert!(kab * kab <= (fa.dot(&fa) as f64) * (fb.dot(&fb) as f64));
        }
    }

    #[test]
    fn kernels_invariant_under_relabelling(a in graph_strategy(10), b in graph_strategy(10), seed in any::<u64>()) {
        let mut perm: Vec<usize> = (0..a.num_nodes()).collect();
        perm.shuffle(&mut rng(seed));
        let pa = a.permuted(&perm).unwrap();
        for spec in specs() {
            let f = Featurizer::new(spec);
            prop_assert_eq!(f.feature_map(&a), f.feature_map(&pa));
            prop_assert_eq!(f.feature_map(&pa).dot(&f.feature_map(&b)), f.feature_map(&a).dot(&f.feature_map(&b)));
        }
    }

    #[test]
    fn gram_is_positive_semidefinite(seed in any::<u64>(), count in 2usize..12) {
        let mut r = rng(seed);
        let graphs: Vec<LabeledGraph> = (0..count).map(|_| {
            let n = r.random_range(1..9);
            random_graph(&mut r, n, 0.4, 3)
        }).collect();
        for spec in specs() {
            let k = gram_matrix(spec, &graphs).unwrap().values;
            prop_assert_eq!(&k, &k.transpose());
            let eig = k.clone().symmetric_eigen().eigenvalues;
            let top = eig.iter().cloned().fold(0.0, f64::max);
            prop_assert!(eig.iter().all(|&l| l >= -1e-9 * top.max(1.0)));
        }
    }

    #[test]
    fn louvain_invariants(seed in any::<u64>(), n in 2usize..40, p in 0.05f64..0.5) {
        let g = random_graph(&mut rng(seed), n, p, 1);
        prop_assume!(g.num_edges() > 0);
        let run = louvain_with_levels(&g, seed);
        let part = &run.partition;
        prop_assert_eq!(part.community_of().len(), n);
        let covered: usize = part.members().iter().map(|m| m.len()).sum();
        prop_assert_eq!(covered, n);
        let singletons = modularity(&g, &kcnn::community::Partition::from_assignment(&g, &(0..n).collect::<Vec<_>>()).unwrap()).unwrap();
        let mut prev = singletons;
        for level in &run.levels {
            prop_assert!(level.flat_modularity >= prev - 1e-12);
            prop_assert!((level.flat_modularity - level.aggregated_modularity).abs() < 1e-9);
            prop_assert!((level.flat_modularity - level.supergraph_modularity).abs() < 1e-9);
            prev = level.flat_modularity;
        }
        prop_assert!((part.modularity() - modularity(&g, part).unwrap()).abs() < 1e-12);
        prop_assert_eq!(louvain(&g, seed), louvain(&g, seed));
    }

    #[test]
    fn nystrom_row_projection_and_psd(seed in any::<u64>(), count in 3usize..25) {
        let mut r = rng(seed);
        let patches: Vec<LabeledGraph> = (0..count).map(|_| {
            let n = r.random_range(2..8);
            random_graph(&mut r, n, 0.5, 3)
        }).collect();
        let p = r.random_range(1..=count);
        let Ok(emb) = nystrom_fit(&patches, KernelSpec::weisfeiler_lehman(2), p, seed) else {
            return Ok(());
        };
        let q = emb.q();
        prop_assert_eq!(q.nrows(), count);
        prop_assert_eq!(q.ncols(), p);
        // QQ^T never overshoots the diagonal of K (Schur complement is PSD)
        for (i, m) in emb.training_maps().iter().enumerate() {
            let approx = q.row(i).dot(&q.row(i));
            prop_assert!(approx <= m.squared_norm() as f64 * (1.0 + 1e-9) + 1e-9);
        }
        for &l in emb.landmarks() {
            let z = emb.project(&patches[l]);
            for (a, b) in z.iter().zip(q.row(l).iter()) {
                prop_assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn folds_stratified(sizes in prop::collection::vec(5usize..40, 2..4), folds in 2usize..6, seed in any::<u64>()) {
        let labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
        let a = stratified_folds(&labels, folds, seed).unwrap();
        for f in 0..folds {
            for (c, &n) in sizes.iter().enumerate() {
                let count = (0..labels.len()).filter(|&i| a[i] == f && labels[i] == c).count() as f64;
                prop_assert!((count - n as f64 / folds as f64).abs() <= 1.0);
            }
        }
        let (fit, val) = validation_split(&labels, seed);
        prop_assert_eq!(fit.len() + val.len(), labels.len());
        prop_assert!(fit.iter().all(|i| !val.contains(i)));
    }

    #[test]
    fn pooling_ignores_patch_order(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let shape = ModelShape { num_filters: 4, channels: 2, dim: 3, dense_units: 3, num_classes: 2 };
        let model = KcnnModel::new(shape, 0.5, seed).unwrap();
        let values: Vec<f64> = (0..n * 6).map(|_| r.random_range(-1.0..1.0)).collect();
        let g = EmbeddedGraph::new(n, 2, 3, values).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        let h = g.reordered(&order);
        let b1 = GraphBatch::new(&[&g], vec![0], None).unwrap();
        let b2 = GraphBatch::new(&[&h], vec![0], Some(7)).unwrap();
        let (p1, _) = forward(&model, &b1, None).unwrap();
        let (p2, _) = forward(&model, &b2, None).unwrap();
        prop_assert_eq!(p1, p2);
    }
}

#[test]
fn synthetic_background_density() {
    let ds = generate_synthetic(40, 11).unwrap();
    let mut edges = 0.0;
    let mut pairs = 0.0;
    for g in &ds.graphs {
        let n = g.num_nodes() - 10;
        edges += g.edges().iter().filter(|&&(u, v)| u < n && v < n).count() as f64;
        pairs += (n * (n - 1) / 2) as f64;
    }
    let density = edges / pairs;
    assert!((density - 0.1).abs() < 0.01, "density {density}");
}

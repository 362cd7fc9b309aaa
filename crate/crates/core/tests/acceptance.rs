//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.

mod support;

use std::io::Write;
use std::process::Command;
use std::time::Instant;

use kcnn::community::{louvain, louvain_with_levels, modularity_of};
use kcnn::embed::{nystrom_fit, PatchEmbedding};
use kcnn::graph::{generate_synthetic, load_tu_dataset, LabeledGraph};
use kcnn::harness::{run_experiment, ExperimentConfig};
use kcnn::kernels::{Featurizer, KernelSpec};
use nalgebra::DMatrix;
use rand::Rng;
use support::{clique_pair, gradient_check, random_graph, random_instance, rng, sp_oracle, wl_oracle};

fn verdict(name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    // written to the raw handle so the line survives output capture
    let _ = writeln!(std::io::stderr(), "[{tag}] {name}: {detail}");
    assert!(pass, "{name}: {detail}");
}

fn exact_gram(emb: &PatchEmbedding) -> DMatrix<f64> {
    let maps = emb.training_maps();
    DMatrix::from_fn(maps.len(), maps.len(), |a, b| maps[a].dot(&maps[b]) as f64)
}

fn small_patches(count: usize, seed: u64) -> Vec<LabeledGraph> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let n = r.random_range(6..13);
            random_graph(&mut r, n, 0.35, 4)
        })
        .collect()
}

#[test]
fn synthetic_reproduction() {
    let ds = generate_synthetic(1000, 7).unwrap();
    let start = Instant::now();
    let sp = run_experiment(&ExperimentConfig::new("SYNTHETIC", vec![KernelSpec::shortest_path()]), &ds).unwrap();
    let sp_secs = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let both = ExperimentConfig::new(
        "SYNTHETIC",
        vec![KernelSpec::shortest_path(), KernelSpec::weisfeiler_lehman(5)],
    );
    let spwl = run_experiment(&both, &ds).unwrap();
    let spwl_secs = start.elapsed().as_secs_f64();

    let sp_ok = sp.mean >= 0.95;
    let spwl_ok = spwl.mean >= sp.mean - 0.02;
    let _ = writeln!(
        std::io::stderr(),
        "[INFO] synthetic folds SP {:?} ({sp_secs:.0}s), SP+WL {:?} ({spwl_secs:.0}s)",
        sp.fold_accuracies,
        spwl.fold_accuracies
    );
    // report both verdicts before failing on either
    let _ = writeln!(
        std::io::stderr(),
        "[{}] synthetic SP+WL within 2 points of SP: {:.2}% vs {:.2}%",
        if spwl_ok { "PASS" } else { "FAIL" },
        100.0 * spwl.mean,
        100.0 * sp.mean
    );
    verdict(
        "synthetic KCNN SP 10-fold mean >= 95%",
        sp_ok,
        &format!("{:.2}% ± {:.2}", 100.0 * sp.mean, 100.0 * sp.std),
    );
    assert!(spwl_ok, "SP+WL {:.4} below SP {:.4} - 0.02", spwl.mean, sp.mean);
}

#[test]
fn imdb_binary_reproduction() {
    let Ok(dir) = std::env::var("KCNN_IMDB_DIR") else {
        let _ = writeln!(
            std::io::stderr(),
            "[REPLACED] IMDB-BINARY WL within 70.46 ± 5.0: dataset not available offline \
             (set KCNN_IMDB_DIR to run); replaced by the synthetic criterion"
        );
        return;
    };
    let ds = load_tu_dataset(&dir, "IMDB-BINARY").unwrap();
    let config = ExperimentConfig::new("IMDB-BINARY", vec![KernelSpec::weisfeiler_lehman(5)]);
    let result = run_experiment(&config, &ds).unwrap();
    let mean = 100.0 * result.mean;
    verdict(
        "IMDB-BINARY KCNN WL mean within 70.46 ± 5.0",
        (mean - 70.46).abs() <= 5.0,
        &format!("{mean:.2}% ± {:.2}", 100.0 * result.std),
    );
}

#[test]
fn kernel_oracle_equivalence() {
    let mut r = rng(2024);
    let mut mismatches = 0;
    for _ in 0..200 {
        let (n1, n2) = (r.random_range(1..13), r.random_range(1..13));
        let (p1, p2) = (r.random_range(0.0..0.7), r.random_range(0.0..0.7));
        let a = random_graph(&mut r, n1, p1, 3);
        let b = random_graph(&mut r, n2, p2, 3);
        let sp = Featurizer::new(KernelSpec::shortest_path());
        if sp.feature_map(&a).dot(&sp.feature_map(&b)) != sp_oracle(&a, &b) {
            mismatches += 1;
        }
        let h = r.random_range(0..5);
        let wl = Featurizer::new(KernelSpec::weisfeiler_lehman(h));
        if wl.feature_map(&a).dot(&wl.feature_map(&b)) != wl_oracle(&a, &b, h) {
            mismatches += 1;
        }
    }
    verdict(
        "SP and WL kernels equal brute-force oracles on 200 pairs",
        mismatches == 0,
        &format!("{mismatches} mismatches"),
    );
}

#[test]
fn nystrom_exactness() {
    let patches = small_patches(50, 7);
    let emb = nystrom_fit(&patches, KernelSpec::weisfeiler_lehman(3), 50, 1).unwrap();
    assert_eq!(emb.rank(), 50, "test Gram must be full rank");
    let k = exact_gram(&emb);
    let q = emb.q();
    let rel = (q * q.transpose() - &k).norm() / k.norm();
    let mut worst_row = 0.0f64;
    for (i, patch) in patches.iter().enumerate() {
        let z = emb.project(patch);
        for (a, b) in z.iter().zip(q.row(i).iter()) {
            worst_row = worst_row.max((a - b).abs());
        }
    }
    verdict(
        "Nystrom at p = P reproduces K and training rows",
        rel < 1e-6 && worst_row < 1e-6,
        &format!("relative Frobenius {rel:.2e}, worst projected entry {worst_row:.2e}"),
    );
}

#[test]
fn inner_products_reproduce_kernel() {
    let full = small_patches(50, 7);
    let emb = nystrom_fit(&full, KernelSpec::weisfeiler_lehman(3), 50, 1).unwrap();
    let k = exact_gram(&emb);
    let q = emb.q();
    let scale = k.amax();
    let full_err = (q * q.transpose() - &k).amax() / scale;

    let many = small_patches(200, 8);
    let low = nystrom_fit(&many, KernelSpec::shortest_path(), 20, 3).unwrap();
    let k = exact_gram(&low);
    let diff = low.q() * low.q().transpose() - &k;
    let logged = low.approx_error();
    let measured_rel = diff.norm() / k.norm();
    let low_ok = logged.exact
        && diff.amax() <= logged.max_abs * (1.0 + 1e-12)
        && (measured_rel - logged.relative_frobenius).abs() <= 1e-9 * measured_rel.max(1.0);
    verdict(
        "<z_a, z_b> equals k(S_a, S_b) at full rank, within logged error at p < P",
        full_err < 1e-9 && low_ok,
        &format!(
            "full rank max rel {full_err:.2e}; p=20 max abs {:.3e} vs logged {:.3e}, rel Frobenius {:.3e}",
            diff.amax(),
            logged.max_abs,
            measured_rel
        ),
    );
}

#[test]
fn gradient_correctness() {
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let (model, batch) = random_instance(seed);
        worst = worst.max(gradient_check(&model, &batch, seed + 1000, 1e-5));
    }
    verdict(
        "finite-difference gradient check on 50 instances",
        worst < 1e-4,
        &format!("worst per-group relative error {worst:.2e}"),
    );
}

#[test]
fn louvain_sanity() {
    let g = clique_pair();
    let cliques = vec![(0..5).collect::<Vec<_>>(), (5..10).collect()];
    let recovered = (0..20).all(|seed| louvain(&g, seed).members() == cliques);

    let mut r = rng(99);
    let mut violations = 0;
    for _ in 0..100 {
        let n = r.random_range(5..80);
        let p = r.random_range(0.03..0.4);
        let g = random_graph(&mut r, n, p, 1);
        if g.num_edges() == 0 {
            continue;
        }
        let run = louvain_with_levels(&g, r.random());
        let mut prev = modularity_of(&g, &(0..n).collect::<Vec<_>>()).unwrap();
        for level in &run.levels {
            if level.flat_modularity < prev - 1e-12 {
                violations += 1;
            }
            prev = level.flat_modularity;
        }
    }
    verdict(
        "Louvain recovers two joined 5-cliques; modularity never drops across levels",
        recovered && violations == 0,
        &format!("cliques recovered for all seeds: {recovered}; {violations} decreasing levels over 100 graphs"),
    );
}

#[test]
fn run_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    support::write_synthetic(&data, 60, 21);
    let reports: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let out = tmp.path().join(format!("r{i}.json"));
            let status = Command::new(env!("CARGO_BIN_EXE_kcnn"))
                .args(["run", "--dataset-dir", data.to_str().unwrap(), "--channels", "sp,wl"])
                .args(["--p", "12", "--folds", "3", "--seed", "4", "--filters", "16", "--dense", "16"])
                .args(["--grid-epochs", "3,6", "--grid-lr", "0.001,0.0001"])
                .args(["--out", out.to_str().unwrap()])
                .status()
                .unwrap();
            assert!(status.success());
            std::fs::read(out).unwrap()
        })
        .collect();
    verdict(
        "two identical run invocations give byte-identical reports",
        reports[0] == reports[1],
        &format!("{} bytes", reports[0].len()),
    );
}

use std::path::PathBuf;
use std::process::Command;
use std::sync::Arc;

use nalgebra::DMatrix;

use hypergreen::error::Error;
use hypergreen::experiments::{
    bundle_for, export_slice, learn, learn_with, tube_radius, OracleSpec, RunConfig,
};
use hypergreen::grid::{build_grid, Grid2D, SubGrid};
use hypergreen::io::{load_model, save_model};
use hypergreen::linalg::Quasimatrix;
use hypergreen::model::{estimate_operator_error, GreenModel, ModelMeta};
use hypergreen::oracles::{
    exact_wave_green_value, within_tube, Oracle, SyntheticOperator, WaveSpec,
};

fn small(oracle: OracleSpec) -> RunConfig {
    RunConfig {
        oracle,
        panels: 8,
        nodes: 4,
        n_probe: 4,
        ..RunConfig::default()
    }
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hypergreen-test-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// `(T f)(x, t) = f(x, 1 − t)`; the time grid is symmetric about 1/2.
fn reverse_time(grid: &Grid2D, f: &DMatrix<f64>) -> DMatrix<f64> {
    let nt = grid.nt();
    DMatrix::from_fn(f.nrows(), f.ncols(), |k, j| {
        let (i, l) = grid.unflatten(k);
        f[(grid.flatten(i, nt - 1 - l), j)]
    })
}

fn weighted_dot(grid: &Grid2D, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (0..grid.len())
        .map(|k| grid.weights[k] * a[(k, 0)] * b[(k, 0)])
        .sum()
}

fn probe(grid: &Grid2D, seed: u64) -> DMatrix<f64> {
    DMatrix::from_fn(grid.len(), 1, |k, _| {
        ((k as u64 * 2654435761 + seed) as f64 * 1e-3).sin()
    })
}

#[test]
fn zero_operator_gives_an_all_green_zero_model() {
    let grid = build_grid(8, 4).unwrap();
    let cfg = small(OracleSpec::Synthetic {
        sigmas: vec![],
        seed: 0,
    });
    let out = learn_with(
        Oracle::new(Arc::new(SyntheticOperator::zero(&grid))),
        &cfg,
        true,
    )
    .unwrap();
    assert_eq!(out.model.red_leaves().count(), 0);
    assert!(out.tree.nodes.iter().all(|n| n.decision.zero));
    let f = probe(&grid, 1);
    assert_eq!(out.model.apply(&f, false).unwrap().abs().max(), 0.0);
    assert_eq!(out.report.total, out.report.oracle_counter);
}

#[test]
fn rank_one_operator_is_recovered_at_the_root() {
    let cfg = small(OracleSpec::Synthetic {
        sigmas: vec![2.0],
        seed: 4,
    });
    let out = learn(&cfg).unwrap();
    assert_eq!(out.model.blocks.len(), 1);
    assert_eq!(out.model.nodes.len(), 1);
    assert!(out.error.unwrap().relative < 1e-10, "{:?}", out.error);
}

#[test]
fn error_estimate_finds_a_planted_error() {
    let grid = build_grid(8, 4).unwrap();
    let sigmas = vec![1.0, 0.6, 0.3, 0.1];
    let op = hypergreen::oracles::make_synthetic_operator(&sigmas, &grid, 8).unwrap();
    // Model drops the last triplet and perturbs the first: F − F̃ = 0.1 u₄v₄* + 0.05 u₁v₁*.
    let mut c = op.v.clone();
    for (j, s) in sigmas.iter().enumerate() {
        let planted = if j == 0 {
            s - 0.05
        } else if j == 3 {
            0.0
        } else {
            *s
        };
        c.data.column_mut(j).scale_mut(planted);
    }
    let meta = ModelMeta {
        oracle: "synthetic".into(),
        eps: 0.1,
        kc: 1.0,
        k: 4,
        q: 0,
        seed: 0,
        depth: 0,
        levels: vec![],
        detection_queries: 0,
        approximation_queries: 0,
        partial: false,
    };
    let model = GreenModel::single_block(&grid, op.u.clone(), c, meta).unwrap();
    let oracle = Oracle::new(Arc::new(op));
    let est = estimate_operator_error(&model, &oracle, 6, 3).unwrap();
    assert!((est.error_norm - 0.1).abs() <= 0.005, "{est:?}");
    assert!((est.operator_norm - 1.0).abs() <= 0.05, "{est:?}");
    assert_eq!(oracle.queries(), 0);
}

#[test]
fn learning_is_deterministic_and_round_trips() {
    let cfg = RunConfig {
        eps: 0.1,
        kc: 0.3,
        ..small(OracleSpec::ExactWave { c: 2.0 })
    };
    let a = learn(&cfg).unwrap();
    let b = learn(&cfg).unwrap();
    assert_eq!(a.report, b.report);
    let dir = scratch("roundtrip");
    save_model(&dir.join("a.json"), &a.model).unwrap();
    save_model(&dir.join("b.json"), &b.model).unwrap();
    let bytes = std::fs::read(dir.join("a.json")).unwrap();
    assert_eq!(bytes, std::fs::read(dir.join("b.json")).unwrap());
    let back = load_model(&dir.join("a.json")).unwrap();
    let f = probe(&a.model.grid, 5);
    let d = (a.model.apply(&f, false).unwrap() - back.apply(&f, false).unwrap())
        .abs()
        .max();
    assert_eq!(d, 0.0);
    assert_eq!(back.meta, a.model.meta);
}

#[test]
fn budget_is_enforced() {
    let cfg = RunConfig {
        budget: Some(50),
        ..small(OracleSpec::ExactWave { c: 2.0 })
    };
    assert!(matches!(learn(&cfg), Err(Error::Budget { .. })));
    // Enough for the root and one level, not for the level after.
    let cfg = RunConfig {
        eps: 0.05,
        kc: 0.3,
        budget: Some(12_000),
        ..small(OracleSpec::ExactWave { c: 2.0 })
    };
    let out = learn(&cfg).unwrap();
    assert!(out.tree.partial);
    assert!(out.report.total <= 12_000);
    assert_eq!(out.report.total, out.report.oracle_counter);
}

#[test]
fn blocks_only_read_their_input_windows() {
    let cfg = RunConfig {
        eps: 0.05,
        kc: 0.3,
        ..small(OracleSpec::ExactWave { c: 2.0 })
    };
    let out = learn(&cfg).unwrap();
    let model = &out.model;
    let grid = model.grid.clone();
    let x = hypergreen::grid::Rect {
        level: 3,
        ix: 5,
        it: 6,
    };
    let xs = SubGrid::new(&grid, x).unwrap();
    let overlap = |a: (f64, f64), b: (f64, f64)| a.0 < b.1 && b.0 < a.1;
    let inputs: Vec<SubGrid> = model
        .blocks
        .iter()
        .filter(|b| {
            let [bx, bt, _, _] = b.bx.intervals();
            overlap(bx, x.x_interval()) && overlap(bt, x.t_interval())
        })
        .map(|b| SubGrid::new(&grid, b.bx.input()).unwrap())
        .collect();
    let f = probe(&grid, 9);
    let mut g = f.clone();
    for k in 0..grid.len() {
        if !inputs.iter().any(|s| s.indices.contains(&k)) {
            g[(k, 0)] += 1.0;
        }
    }
    let (uf, ug) = (
        model.apply(&f, false).unwrap(),
        model.apply(&g, false).unwrap(),
    );
    for &k in &xs.indices {
        assert_eq!(uf[(k, 0)], ug[(k, 0)]);
    }
}

#[test]
fn model_inherits_time_reversal_symmetry() {
    let cfg = RunConfig {
        eps: 0.05,
        kc: 0.3,
        ..small(OracleSpec::ExactWave { c: 2.0 })
    };
    let out = learn(&cfg).unwrap();
    let err = out.error.unwrap();
    let model = &out.model;
    let grid = &model.grid;
    for seed in 0..4 {
        let (f, g) = (probe(grid, seed), probe(grid, 100 + seed));
        let lhs = weighted_dot(grid, &model.apply(&f, false).unwrap(), &g);
        let tg = reverse_time(grid, &g);
        let rhs = weighted_dot(
            grid,
            &f,
            &reverse_time(grid, &model.apply(&tg, false).unwrap()),
        );
        let nf = weighted_dot(grid, &f, &f).sqrt();
        let ng = weighted_dot(grid, &g, &g).sqrt();
        assert!(
            (lhs - rhs).abs() <= 2.0 * err.error_norm * nf * ng,
            "{lhs} vs {rhs}"
        );
    }
}

#[test]
fn exact_kernel_is_time_reversal_symmetric_and_saturated() {
    let spec = WaveSpec::new(2.0).unwrap();
    let more = spec.with_images(spec.images + 3).unwrap();
    let mut rng = hypergreen::seeds::rng(17, &[]);
    for _ in 0..2000 {
        let p: [f64; 4] = std::array::from_fn(|_| rand::Rng::random_range(&mut rng, 0.0..1.0));
        let g = exact_wave_green_value(&spec, p[0], p[1], p[2], p[3]);
        let mirrored = exact_wave_green_value(&spec, p[2], 1.0 - p[3], p[0], 1.0 - p[1]);
        assert!((g - mirrored).abs() <= 1e-8, "{p:?}: {g} vs {mirrored}");
        assert_eq!(g, exact_wave_green_value(&more, p[0], p[1], p[2], p[3]));
    }
}

#[test]
fn slice_error_is_small_away_from_characteristics() {
    let cfg = RunConfig {
        eps: 0.03,
        kc: 0.3,
        ..RunConfig::default()
    };
    let grid = cfg.grid().unwrap();
    let out = learn_with(cfg.oracle.build(&grid).unwrap(), &cfg, false).unwrap();
    let w = cfg.oracle.exact_wave().unwrap();
    let slice = export_slice(&out.model, 0.8, 0.1, 64, Some(&w)).unwrap();
    let bundle = bundle_for(&cfg.oracle).unwrap();
    // Half the finest tube radius, so the region away from the characteristics is not empty.
    let radius = 0.5 * tube_radius(out.tree.final_level());
    let gmax = 1.0 / (2.0 * w.c);
    let outside: Vec<_> = slice
        .cells
        .iter()
        .filter(|c| !within_tube(&bundle, [c.x, c.t, 0.8, 0.1], radius))
        .collect();
    let good = outside
        .iter()
        .filter(|c| c.abs_error.unwrap() <= 5.0 * cfg.eps * gmax)
        .count();
    assert!(!outside.is_empty());
    assert!(good * 10 >= 9 * outside.len(), "{good}/{}", outside.len());
}

#[test]
fn quasimatrix_shapes_are_checked() {
    let grid = build_grid(4, 4).unwrap();
    let d = Arc::new(SubGrid::full(&grid));
    assert!(matches!(
        Quasimatrix::new(&d, DMatrix::zeros(3, 1)),
        Err(Error::Domain(_))
    ));
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hypergreen"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn cli_writes_artifacts_and_reports_errors() {
    let dir = scratch("cli");
    let out = dir.to_str().unwrap();
    let run = cli(&["learn", "--nodes", "4", "--probes", "2", "--out", out]);
    assert_eq!(
        run.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    for f in ["model.json", "queries.json", "metrics.json"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let first = std::fs::read(dir.join("queries.json")).unwrap();
    let again = cli(&["learn", "--nodes", "4", "--probes", "2", "--out", out]);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(first, std::fs::read(dir.join("queries.json")).unwrap());

    let model = dir.join("model.json");
    let slice = cli(&[
        "slice",
        "--model",
        model.to_str().unwrap(),
        "--resolution",
        "16",
        "--out",
        out,
    ]);
    assert_eq!(slice.status.code(), Some(0));
    assert!(dir.join("slice.csv").exists() && dir.join("blocks.json").exists());

    let bad = cli(&["learn", "--eps", "0.7", "--out", out]);
    assert_eq!(bad.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&bad.stderr).unwrap();
    assert_eq!(err["error"], "config");

    let broke = cli(&["learn", "--nodes", "4", "--budget", "40", "--out", out]);
    assert_eq!(broke.status.code(), Some(3));

    let partial_dir = scratch("cli-partial");
    let partial = cli(&[
        "learn",
        "--nodes",
        "4",
        "--eps",
        "0.05",
        "--kc",
        "0.3",
        "--budget",
        "12000",
        "--probes",
        "2",
        "--out",
        partial_dir.to_str().unwrap(),
    ]);
    assert_eq!(partial.status.code(), Some(3));
    let metrics: serde_json::Value =
        serde_json::from_slice(&std::fs::read(partial_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["partial"], true);
}

use std::sync::Arc;

use nalgebra::DMatrix;

use hypergreen::gp::{kernel_spectrum, CovarianceKernel};
use hypergreen::grid::{build_grid, SubGrid, SubdomainBox};
use hypergreen::linalg::sorted_svd;
use hypergreen::oracles::{make_synthetic_operator, ExactWave, Oracle, WaveSpec};
use hypergreen::rank::{detect_rank, DetectConfig, QMode, Verdict};
use hypergreen::rsvd::{
    error_factor, project_approximant, randomized_range, singular_value_error_bound,
    ErrorFactorKind, FactorParams,
};
use hypergreen::seeds;

fn kernel() -> CovarianceKernel {
    CovarianceKernel::squared_exponential(0.1, 1.0).unwrap()
}

#[test]
fn projection_is_a_pure_function_of_q() {
    let grid = build_grid(4, 6).unwrap();
    let oracle = Oracle::new(Arc::new(ExactWave::new(WaveSpec::new(2.0).unwrap(), &grid)));
    let full = Arc::new(SubGrid::full(&grid));
    let omega = kernel_spectrum(&kernel(), &full).unwrap().sample(8, 4);
    let q = randomized_range(&oracle.full(), &omega, 1).unwrap();
    let a = project_approximant(&oracle.full(), &q).unwrap();
    let b = project_approximant(&oracle.full(), &q).unwrap();
    assert_eq!(a.c.data, b.c.data);
    assert_eq!(a.q.data, b.q.data);
}

#[test]
fn power_iterations_do_not_hurt_the_median_error() {
    let grid = build_grid(4, 6).unwrap();
    let full = Arc::new(SubGrid::full(&grid));
    let spec = kernel_spectrum(&kernel(), &full).unwrap();
    let sigmas: Vec<f64> = (1..=60).map(|j| 1.0 / j as f64).collect();
    let op = make_synthetic_operator(&sigmas, &grid, 21).unwrap();
    let oracle = Oracle::new(Arc::new(op.clone()));
    let median = |q: usize| {
        let mut errs: Vec<f64> = (0..50)
            .map(|seed| {
                let basis = randomized_range(&oracle.full(), &spec.sample(10, seed), q).unwrap();
                op.projection_error(&basis).unwrap()
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        0.5 * (errs[24] + errs[25])
    };
    let m: Vec<f64> = (0..3).map(median).collect();
    assert!(m[1] <= m[0] && m[2] <= m[1], "{m:?}");
}

#[test]
fn dense_truncation_error_is_the_next_singular_value() {
    let grid = build_grid(4, 4).unwrap();
    let sigmas = [3.0, 2.0, 1.5, 0.7, 0.4, 0.1, 0.05];
    let op = make_synthetic_operator(&sigmas, &grid, 2).unwrap();
    let sw: Vec<f64> = grid.weights.iter().map(|w| w.sqrt()).collect();
    let g = op.kernel();
    let b = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| sw[i] * g[(i, j)] * sw[j]);
    let (u, s, v) = sorted_svd(&b).unwrap();
    for k in 1..sigmas.len() {
        assert!((s[k - 1] - sigmas[k - 1]).abs() < 1e-10);
        let mut trunc = DMatrix::zeros(b.nrows(), b.ncols());
        for i in 0..k {
            trunc += s[i] * u.column(i) * v.column(i).transpose();
        }
        let err = (&b - trunc).singular_values().max();
        assert!((err - sigmas[k]).abs() < 1e-10, "k={k}: {err}");
    }
}

#[test]
fn rank_test_soundness_chain() {
    let grid = build_grid(4, 6).unwrap();
    let eps = 0.1;
    let cfg = DetectConfig::new(eps, 0.8, QMode::Auto, kernel()).unwrap();
    let k = cfg.k;
    let (mut low_cases, mut low_hits, mut green, mut green_sound) = (0, 0, 0, 0);
    for trial in 0..100u64 {
        let mut rng = seeds::rng(trial, &[]);
        let rate: f64 = rand::Rng::random_range(&mut rng, 0.55..0.9);
        let sigmas: Vec<f64> = (0..30).map(|j| rate.powi(j)).collect();
        let true_rank = |tol: f64| sigmas.iter().filter(|s| **s >= tol * sigmas[0]).count();
        let oracle = Oracle::new(Arc::new(
            make_synthetic_operator(&sigmas, &grid, 500 + trial).unwrap(),
        ));
        let d = detect_rank(&oracle, SubdomainBox::ROOT, &cfg, trial).unwrap();
        assert_eq!(oracle.queries(), cfg.detection_cost());
        if true_rank(eps) < k {
            low_cases += 1;
            low_hits += usize::from(d.verdict == Verdict::LowRank);
        }
        if d.verdict == Verdict::LowRank {
            green += 1;
            green_sound += usize::from(true_rank(5.0 * eps) < k);
        }
    }
    assert!(low_cases > 10 && green > 10, "{low_cases} {green}");
    assert!(low_hits * 100 >= 95 * low_cases, "{low_hits}/{low_cases}");
    assert!(green_sound * 100 >= 95 * green, "{green_sound}/{green}");
}

#[test]
fn rank_test_is_deterministic() {
    let grid = build_grid(8, 4).unwrap();
    let oracle = Oracle::new(Arc::new(ExactWave::new(WaveSpec::new(2.0).unwrap(), &grid)));
    let cfg = DetectConfig::new(0.1, 1.0, QMode::Auto, kernel()).unwrap();
    let bx = SubdomainBox {
        level: 1,
        ix: 1,
        it: 1,
        iy: 0,
        is: 0,
    };
    let a = detect_rank(&oracle, bx, &cfg, 9).unwrap();
    let b = detect_rank(&oracle, bx, &cfg, 9).unwrap();
    assert_eq!(a.verdict, b.verdict);
    assert_eq!(
        a.sigma.iter().map(|s| s.to_bits()).collect::<Vec<_>>(),
        b.sigma.iter().map(|s| s.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn causal_boxes_are_green_and_empty() {
    let grid = build_grid(8, 4).unwrap();
    let oracle = Oracle::new(Arc::new(ExactWave::new(WaveSpec::new(2.0).unwrap(), &grid)));
    let cfg = DetectConfig::new(0.1, 1.0, QMode::Auto, kernel()).unwrap();
    for bx in [
        SubdomainBox {
            level: 1,
            ix: 0,
            it: 0,
            iy: 1,
            is: 1,
        },
        SubdomainBox {
            level: 2,
            ix: 3,
            it: 1,
            iy: 0,
            is: 2,
        },
        SubdomainBox {
            level: 3,
            ix: 2,
            it: 4,
            iy: 7,
            is: 6,
        },
    ] {
        let d = detect_rank(&oracle, bx, &cfg, 0).unwrap();
        assert_eq!(d.verdict, Verdict::LowRank);
        assert!(d.sigma.first().copied().unwrap_or(0.0) <= 1e-10);
    }
}

#[test]
fn tail_factor_dominates_the_expectation_factor() {
    for (k, xi, tr) in [(4, 0.5, 10.0), (10, 0.1, 40.0), (20, 0.9, 3.0)] {
        let p = FactorParams {
            k,
            p: k,
            s: (2.0 * k as f64).sqrt(),
            t: std::f64::consts::E,
            trace_ratio: tr,
            xi,
            gamma: 0.3,
        };
        let e = error_factor(ErrorFactorKind::Expectation, &p).unwrap();
        let t = error_factor(ErrorFactorKind::Tail, &p).unwrap();
        assert!(t >= e, "{t} < {e}");
    }
    assert!(singular_value_error_bound(0.5, 2.0, 1.0).is_none());
    assert!((singular_value_error_bound(0.1, 2.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
}

//! End-to-end drivers: training, slices, convergence sweeps, initial-value
//! problems, solver comparisons and single-box rank tests.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::CovarianceKernel;
use crate::grid::{build_grid, Grid2D, SubdomainBox};
use crate::io::{QueryReport, SCHEMA_VERSION};
use crate::model::{
    default_delta, duhamel_forcing, estimate_operator_error, ErrorEstimate, GreenModel, ModelMeta,
};
use crate::oracles::{
    dalembert_indicator, exact_wave_green_value, make_synthetic_operator, sample_bundle,
    within_tube, CharacteristicBundle, Coefficient, ExactWave, FdOracle, FdScheme, Oracle,
    SolutionOperator, WaveSpec,
};
use crate::partition::{adaptive_partition, Color, PartitionConfig, PartitionTree};
use crate::rank::{detect_rank, DetectConfig, QMode, Verdict};
use crate::seeds::derive_seed;

/// Lattice and step used to sample the characteristic bundle.
pub const BUNDLE_LATTICE: usize = 17;
pub const BUNDLE_STEP: f64 = 1.0 / 512.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CoefficientSpec {
    Constant { a: f64 },
    Curved,
    File { path: PathBuf },
}

impl CoefficientSpec {
    pub fn build(&self) -> Result<Coefficient> {
        match self {
            Self::Constant { a } => Coefficient::constant(*a),
            Self::Curved => Ok(Coefficient::Curved),
            Self::File { path } => Coefficient::from_csv(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OracleSpec {
    ExactWave {
        c: f64,
    },
    Fd {
        scheme: FdScheme,
        coefficient: CoefficientSpec,
        nx: usize,
        cfl: f64,
    },
    Synthetic {
        sigmas: Vec<f64>,
        seed: u64,
    },
}

impl OracleSpec {
    pub fn solver(&self, grid: &Arc<Grid2D>) -> Result<Arc<dyn SolutionOperator>> {
        Ok(match self {
            Self::ExactWave { c } => Arc::new(ExactWave::new(WaveSpec::new(*c)?, grid)),
            Self::Fd {
                scheme,
                coefficient,
                nx,
                cfl,
            } => Arc::new(FdOracle::with_cfl(
                *scheme,
                coefficient.build()?,
                *nx,
                *cfl,
                grid,
            )?),
            Self::Synthetic { sigmas, seed } => {
                Arc::new(make_synthetic_operator(sigmas, grid, *seed)?)
            }
        })
    }

    pub fn build(&self, grid: &Arc<Grid2D>) -> Result<Oracle> {
        Ok(Oracle::new(self.solver(grid)?))
    }

    /// Exact kernel, when known in closed form.
    pub fn exact_wave(&self) -> Option<WaveSpec> {
        match self {
            Self::ExactWave { c } => WaveSpec::new(*c).ok(),
            _ => None,
        }
    }

    /// The PDE coefficient `a`, when the oracle comes from a wave equation.
    pub fn coefficient(&self) -> Result<Option<Coefficient>> {
        match self {
            Self::ExactWave { c } => Ok(Some(Coefficient::constant(c * c)?)),
            Self::Fd { coefficient, .. } => Ok(Some(coefficient.build()?)),
            Self::Synthetic { .. } => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub oracle: OracleSpec,
    pub eps: f64,
    /// The constant `C` in `k = max(4, ⌈C/ε⌉)`.
    pub kc: f64,
    pub q_mode: QMode,
    pub ell: f64,
    pub variance: f64,
    pub panels: usize,
    pub nodes: usize,
    pub seed: u64,
    pub budget: Option<u64>,
    pub workers: usize,
    /// Depth cap; defaults to the grid's alignment bound.
    pub max_level: Option<u32>,
    /// Probe columns for the error estimate.
    pub n_probe: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            oracle: OracleSpec::ExactWave { c: 2.0 },
            eps: 0.1,
            kc: 1.0,
            q_mode: QMode::Auto,
            ell: 0.1,
            variance: 1.0,
            panels: 8,
            nodes: 8,
            seed: 0,
            budget: Some(2_000_000),
            workers: 1,
            max_level: None,
            n_probe: 10,
        }
    }
}

impl RunConfig {
    pub fn grid(&self) -> Result<Arc<Grid2D>> {
        build_grid(self.panels, self.nodes)
    }

    pub fn kernel(&self) -> Result<CovarianceKernel> {
        CovarianceKernel::squared_exponential(self.ell, self.variance)
    }

    pub fn detect_config(&self) -> Result<DetectConfig> {
        DetectConfig::new(self.eps, self.kc, self.q_mode, self.kernel()?)
    }
}

pub struct LearnOutcome {
    pub model: GreenModel,
    pub tree: PartitionTree,
    pub oracle: Oracle,
    pub report: QueryReport,
    /// `None` when the error estimate was skipped.
    pub error: Option<ErrorEstimate>,
}

/// Trains on an existing oracle; the oracle's counter must start at zero for
/// the report to be exact.
pub fn learn_with(oracle: Oracle, cfg: &RunConfig, estimate_error: bool) -> Result<LearnOutcome> {
    let grid = oracle.grid().clone();
    let detect = cfg.detect_config()?;
    let pcfg = PartitionConfig {
        detect: detect.clone(),
        seed: cfg.seed,
        max_level: cfg.max_level.unwrap_or_else(|| grid.max_level()),
        budget: cfg.budget,
        workers: cfg.workers,
    };
    let tree = adaptive_partition(&oracle, cfg.eps, &pcfg)?;
    let meta = ModelMeta {
        oracle: oracle.label(),
        eps: cfg.eps,
        kc: cfg.kc,
        k: detect.k,
        q: detect.q,
        seed: cfg.seed,
        depth: tree.depth,
        levels: tree.levels.clone(),
        detection_queries: 0,
        approximation_queries: 0,
        partial: tree.partial,
    };
    let model = GreenModel::assemble(&oracle, &tree, meta)?;
    let boxes_tested = tree.nodes.len();
    let green_leaves = model.blocks.len();
    let error = if estimate_error {
        Some(estimate_operator_error(
            &model,
            &oracle,
            cfg.n_probe,
            derive_seed(cfg.seed, &[u64::from(b'e')]),
        )?)
    } else {
        None
    };
    let detection = boxes_tested as u64 * detect.detection_cost();
    let approximation = green_leaves as u64 * detect.assembly_cost();
    let report = QueryReport {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        k: detect.k,
        q: detect.q,
        boxes_tested,
        green_leaves,
        detection,
        approximation,
        total: detection + approximation,
        oracle_counter: oracle.queries(),
        evaluation: error.map(|e| e.queries).unwrap_or(0),
    };
    Ok(LearnOutcome {
        model,
        tree,
        oracle,
        report,
        error,
    })
}

pub fn learn(cfg: &RunConfig) -> Result<LearnOutcome> {
    let grid = cfg.grid()?;
    learn_with(cfg.oracle.build(&grid)?, cfg, true)
}

/// Samples `Z` for the oracle's coefficient.
pub fn bundle_for(spec: &OracleSpec) -> Result<CharacteristicBundle> {
    let a = spec
        .coefficient()?
        .ok_or_else(|| Error::Config("this oracle has no characteristics".into()))?;
    sample_bundle(|x, t| a.eval(x, t), BUNDLE_LATTICE, BUNDLE_STEP)
}

/// Tube radius `2^{−L+1}` after refinement to level `L`.
pub fn tube_radius(level: u32) -> f64 {
    (1.0 - level as f64).exp2()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceCell {
    pub x: f64,
    pub t: f64,
    pub approx: f64,
    pub exact: Option<f64>,
    pub abs_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockRect {
    pub level: u32,
    pub x0: f64,
    pub x1: f64,
    pub t0: f64,
    pub t1: f64,
    pub color: Color,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceData {
    pub y: f64,
    pub s: f64,
    pub resolution: usize,
    pub cells: Vec<SliceCell>,
    pub blocks: Vec<BlockRect>,
}

/// `G̃(·,·; y,s)` at the centers of a `resolution²` cell grid (x-major).
pub fn export_slice(
    model: &GreenModel,
    y: f64,
    s: f64,
    resolution: usize,
    exact: Option<&WaveSpec>,
) -> Result<SliceData> {
    if resolution < 2 {
        return Err(Error::Config(format!(
            "resolution must be >= 2, got {resolution}"
        )));
    }
    let r = resolution as f64;
    let mut cells = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            let (x, t) = ((i as f64 + 0.5) / r, (j as f64 + 0.5) / r);
            let approx = model.eval_point(x, t, y, s);
            let exact = exact.map(|w| exact_wave_green_value(w, x, t, y, s));
            cells.push(SliceCell {
                x,
                t,
                approx,
                exact,
                abs_error: exact.map(|e| (approx - e).abs()),
            });
        }
    }
    let blocks = model
        .slice_leaves(y, s)
        .into_iter()
        .map(|(bx, color)| {
            let [(x0, x1), (t0, t1), _, _] = bx.intervals();
            BlockRect {
                level: bx.level,
                x0,
                x1,
                t0,
                t1,
                color,
            }
        })
        .collect();
    Ok(SliceData {
        y,
        s,
        resolution,
        cells,
        blocks,
    })
}

/// Fraction of the top-decile error cells of a slice lying within sup-distance
/// `radius` of the bundle.
pub fn error_localization(
    slice: &SliceData,
    bundle: &CharacteristicBundle,
    radius: f64,
) -> Result<f64> {
    let mut errs: Vec<(f64, usize)> = slice
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| c.abs_error.map(|e| (e, i)))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Config("slice has no exact values".into()))?;
    errs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let top = (errs.len() / 10).max(1);
    let inside = errs[..top]
        .iter()
        .filter(|(_, i)| {
            let c = &slice.cells[*i];
            within_tube(bundle, [c.x, c.t, slice.y, slice.s], radius)
        })
        .count();
    Ok(inside as f64 / top as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergePoint {
    pub eps: f64,
    pub k: usize,
    pub q: usize,
    pub queries: u64,
    pub relative_error: f64,
    pub red_leaves: usize,
}

/// Least-squares slope and intercept of `log(err)` against `log(N)`.
pub fn loglog_slope(points: &[ConvergePoint]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.queries > 0 && p.relative_error > 0.0)
        .map(|p| ((p.queries as f64).ln(), p.relative_error.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Numerical(
            "need two positive points to fit a slope".into(),
        ));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Numerical(
            "all runs used the same number of queries".into(),
        ));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Trains once per `eps` and records training queries against the
/// estimated relative operator error.
pub fn converge(cfg: &RunConfig, eps_list: &[f64]) -> Result<Vec<ConvergePoint>> {
    let grid = cfg.grid()?;
    let solver = cfg.oracle.solver(&grid)?;
    eps_list
        .iter()
        .map(|&eps| {
            let run = RunConfig { eps, ..cfg.clone() };
            let out = learn_with(Oracle::new(solver.clone()), &run, true)?;
            Ok(ConvergePoint {
                eps,
                k: out.report.k,
                q: out.report.q,
                queries: out.report.oracle_counter,
                relative_error: out.error.map(|e| e.relative).unwrap_or(f64::NAN),
                red_leaves: out.model.red_leaves().count(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IvpRow {
    pub x: f64,
    pub t: f64,
    pub approx: f64,
    /// Same forcing pushed through the oracle.
    pub direct: f64,
    /// d'Alembert value before the first wall reflection.
    pub exact: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IvpResult {
    pub psi: (f64, f64),
    pub delta: f64,
    pub smeared: bool,
    pub rows: Vec<IvpRow>,
    /// `max |direct − exact|` over rows with an exact value.
    pub direct_max_error: Option<f64>,
    /// `‖approx − direct‖ / ‖direct‖` (quadrature L²).
    pub model_relative_l2: f64,
}

/// Duhamel solution for `u_t(x,0) = χ_[lo,hi](x)` with both the model and
/// the oracle, at every quadrature node.
pub fn ivp(
    model: &GreenModel,
    oracle: &Oracle,
    psi: (f64, f64),
    delta: Option<f64>,
    speed: Option<f64>,
) -> Result<IvpResult> {
    let grid = &model.grid;
    let delta = delta.unwrap_or_else(|| default_delta(grid));
    let (lo, hi) = psi;
    let (f, smeared) = duhamel_forcing(
        grid,
        &|x| if (lo..=hi).contains(&x) { 1.0 } else { 0.0 },
        delta,
    )?;
    let approx = model.apply_green(&f)?;
    let direct = oracle.apply(&f)?;
    let mut rows = Vec::with_capacity(grid.len());
    let mut worst: Option<f64> = None;
    for k in 0..grid.len() {
        let (x, t) = grid.point(k);
        let exact = speed.and_then(|c| dalembert_indicator(c, lo, hi, x, t));
        if let Some(e) = exact {
            let d = (direct.values[k] - e).abs();
            worst = Some(worst.map_or(d, |w: f64| w.max(d)));
        }
        rows.push(IvpRow {
            x,
            t,
            approx: approx.values[k],
            direct: direct.values[k],
            exact,
        });
    }
    let diff: Vec<f64> = approx
        .values
        .iter()
        .zip(&direct.values)
        .map(|(a, b)| a - b)
        .collect();
    let dn = direct.norm();
    let en = crate::grid::DiscreteFunction::new(grid, diff)?.norm();
    Ok(IvpResult {
        psi,
        delta,
        smeared,
        rows,
        direct_max_error: worst,
        model_relative_l2: if dn > 0.0 { en / dn } else { en },
    })
}

/// Every point of the box lies strictly inside the free-space light cone of
/// constant speed `c`: `c(t_min − s_max) > max|x − y|`. Reflected
/// characteristics may still cross the box.
pub fn strictly_inside_light_cone(bx: &SubdomainBox, c: f64) -> bool {
    let [(x0, x1), (t0, _), (y0, y1), (_, s1)] = bx.intervals();
    let reach = c * (t0 - s1);
    let spread = (x1 - y0).max(y1 - x0);
    reach > spread
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub oracle: String,
    pub red_leaves: usize,
    pub red_volume: Vec<f64>,
    pub red_inside_cone: usize,
    pub queries: u64,
    pub partial: bool,
}

pub struct Comparison {
    pub summaries: Vec<SolverSummary>,
    pub models: Vec<GreenModel>,
}

/// Trains on the exact, upwind1 and ctcs2 oracles for `a = c²` with one seed.
pub fn compare_solvers(cfg: &RunConfig, c: f64, fd_nx: usize, cfl: f64) -> Result<Comparison> {
    let specs = [
        OracleSpec::ExactWave { c },
        OracleSpec::Fd {
            scheme: FdScheme::Upwind1,
            coefficient: CoefficientSpec::Constant { a: c * c },
            nx: fd_nx,
            cfl,
        },
        OracleSpec::Fd {
            scheme: FdScheme::Ctcs2,
            coefficient: CoefficientSpec::Constant { a: c * c },
            nx: fd_nx,
            cfl,
        },
    ];
    let mut summaries = Vec::new();
    let mut models = Vec::new();
    for spec in specs {
        let run = RunConfig {
            oracle: spec,
            ..cfg.clone()
        };
        let grid = run.grid()?;
        let out = learn_with(run.oracle.build(&grid)?, &run, false)?;
        let inside = out
            .tree
            .red_leaves()
            .filter(|n| strictly_inside_light_cone(&n.bx, c))
            .count();
        summaries.push(SolverSummary {
            oracle: out.model.meta.oracle.clone(),
            red_leaves: out.tree.red_leaves().count(),
            red_volume: out.tree.levels.iter().map(|l| l.red_volume).collect(),
            red_inside_cone: inside,
            queries: out.oracle.queries(),
            partial: out.tree.partial,
        });
        models.push(out.model);
    }
    Ok(Comparison { summaries, models })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTestReport {
    pub schema_version: u32,
    #[serde(rename = "box")]
    pub bx: SubdomainBox,
    pub eps: f64,
    pub k: usize,
    pub q: usize,
    pub seed: u64,
    pub verdict: Verdict,
    pub sigma: Vec<f64>,
    /// `4ε σ̂_1`.
    pub threshold: f64,
    pub queries: u64,
    pub zero: bool,
}

pub fn rank_test(cfg: &RunConfig, bx: SubdomainBox) -> Result<RankTestReport> {
    let grid = cfg.grid()?;
    let oracle = cfg.oracle.build(&grid)?;
    let detect = cfg.detect_config()?;
    let d = detect_rank(&oracle, bx, &detect, cfg.seed)?;
    Ok(RankTestReport {
        schema_version: SCHEMA_VERSION,
        bx,
        eps: cfg.eps,
        k: detect.k,
        q: detect.q,
        seed: d.seed,
        verdict: d.verdict,
        threshold: crate::rank::THRESHOLD * cfg.eps * d.sigma.first().copied().unwrap_or(0.0),
        sigma: d.sigma,
        queries: oracle.queries(),
        zero: d.zero,
    })
}

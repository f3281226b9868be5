//! Command-line front end. Every subcommand writes schema-versioned files
//! into `--out`; errors are reported as one JSON object on stderr.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::experiments::{
    bundle_for, compare_solvers, converge, error_localization, export_slice, ivp, learn,
    loglog_slope, rank_test, tube_radius, CoefficientSpec, LearnOutcome, OracleSpec, RunConfig,
    SliceData,
};
use crate::grid::SubdomainBox;
use crate::io::{load_model, save_model, write_csv, write_json, SCHEMA_VERSION};
use crate::model::GreenModel;
use crate::oracles::FdScheme;
use crate::rank::QMode;

#[derive(Debug, Parser)]
#[command(
    name = "hypergreen",
    version,
    about = "Learn Green's functions of hyperbolic PDEs from input-output pairs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Partition, assemble and write model.json, queries.json, metrics.json.
    Learn(Common),
    /// Write slice.csv and blocks.json for G(., .; y, s).
    Slice {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        slice: SliceArgs,
        /// Reuse a trained model instead of training.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Sweep eps and write converge.csv plus the fitted log-log slope.
    Converge {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.4,0.3,0.2,0.15,0.1")]
        eps_list: Vec<f64>,
    },
    /// Solve u_tt - a u_xx = 0 with u_t(x,0) = indicator of [psi-lo, psi-hi]; write ivp.csv.
    Ivp {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.2)]
        psi_lo: f64,
        #[arg(long, default_value_t = 0.3)]
        psi_hi: f64,
        /// Pulse width; defaults to the first quadrature cell in time.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train on exact, upwind1 and ctcs2 data for a = c^2 and compare partitions.
    CompareSolvers {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        slice: SliceArgs,
    },
    /// Run the rank test on one box and dump the singular value estimates.
    RankTest {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        level: u32,
        #[arg(long, default_value_t = 0)]
        ix: u32,
        #[arg(long, default_value_t = 0)]
        it: u32,
        #[arg(long, default_value_t = 0)]
        iy: u32,
        #[arg(long = "is", default_value_t = 0)]
        is_: u32,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SliceArgs {
    #[arg(long, default_value_t = 0.8)]
    pub y: f64,
    #[arg(long, default_value_t = 0.1)]
    pub s: f64,
    #[arg(long, default_value_t = 128)]
    pub resolution: usize,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// exact, upwind1, ctcs2 or synthetic.
    #[arg(long, default_value = "exact")]
    pub oracle: String,
    /// Wave speed; finite-difference oracles use a = c^2 unless --coefficient is given.
    #[arg(long, default_value_t = 2.0)]
    pub c: f64,
    /// Finite-difference coefficient: "constant", "curved" or a CSV table path.
    #[arg(long, default_value = "constant")]
    pub coefficient: String,
    #[arg(long, default_value_t = 512)]
    pub fd_nx: usize,
    #[arg(long, default_value_t = 0.9)]
    pub cfl: f64,
    /// Singular values of the synthetic oracle.
    #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.25,0.125")]
    pub sigmas: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// Length scale of the squared-exponential sampling kernel.
    #[arg(long, default_value_t = 0.1)]
    pub ell: f64,
    #[arg(long, default_value_t = 1.0)]
    pub variance: f64,
    #[arg(long, default_value_t = 8)]
    pub panels: usize,
    #[arg(long, default_value_t = 8)]
    pub nodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Query cap; 0 disables it.
    #[arg(long, default_value_t = 2_000_000)]
    pub budget: u64,
    #[arg(long, env = "HYPERGREEN_WORKERS", default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// "auto" or a fixed power exponent.
    #[arg(long, default_value = "auto")]
    pub q_mode: String,
    /// The constant C in k = max(4, ceil(C/eps)).
    #[arg(long, default_value_t = 1.0)]
    pub kc: f64,
    #[arg(long)]
    pub max_level: Option<u32>,
    /// Probe columns of the operator-error estimate.
    #[arg(long, default_value_t = 10)]
    pub probes: usize,
}

impl Common {
    pub fn oracle_spec(&self) -> Result<OracleSpec> {
        let coefficient = || -> CoefficientSpec {
            match self.coefficient.as_str() {
                "constant" => CoefficientSpec::Constant { a: self.c * self.c },
                "curved" => CoefficientSpec::Curved,
                path => CoefficientSpec::File {
                    path: PathBuf::from(path),
                },
            }
        };
        Ok(match self.oracle.as_str() {
            "exact" => OracleSpec::ExactWave { c: self.c },
            "synthetic" => OracleSpec::Synthetic {
                sigmas: self.sigmas.clone(),
                seed: self.seed,
            },
            scheme => OracleSpec::Fd {
                scheme: scheme.parse::<FdScheme>()?,
                coefficient: coefficient(),
                nx: self.fd_nx,
                cfl: self.cfl,
            },
        })
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        Ok(RunConfig {
            oracle: self.oracle_spec()?,
            eps: self.eps,
            kc: self.kc,
            q_mode: self.q_mode.parse::<QMode>()?,
            ell: self.ell,
            variance: self.variance,
            panels: self.panels,
            nodes: self.nodes,
            seed: self.seed,
            budget: (self.budget > 0).then_some(self.budget),
            workers: self.workers,
            max_level: self.max_level,
            n_probe: self.probes,
        })
    }
}

fn out_dir(p: &Path) -> Result<&Path> {
    std::fs::create_dir_all(p)?;
    Ok(p)
}

#[derive(Serialize)]
struct Metrics<'a> {
    schema_version: u32,
    config: &'a RunConfig,
    relative_error: Option<f64>,
    error_norm: Option<f64>,
    operator_norm: Option<f64>,
    green_leaves: usize,
    red_leaves: usize,
    final_level: u32,
    levels: &'a [crate::partition::LevelStats],
    partial: bool,
}

fn write_learn(dir: &Path, cfg: &RunConfig, out: &LearnOutcome) -> Result<()> {
    save_model(&dir.join("model.json"), &out.model)?;
    write_json(&dir.join("queries.json"), &out.report)?;
    let metrics = Metrics {
        schema_version: SCHEMA_VERSION,
        config: cfg,
        relative_error: out.error.map(|e| e.relative),
        error_norm: out.error.map(|e| e.error_norm),
        operator_norm: out.error.map(|e| e.operator_norm),
        green_leaves: out.model.blocks.len(),
        red_leaves: out.model.red_leaves().count(),
        final_level: out.tree.final_level(),
        levels: &out.tree.levels,
        partial: out.tree.partial,
    };
    write_json(&dir.join("metrics.json"), &metrics)
}

fn write_slice(
    dir: &Path,
    slice: &SliceData,
    final_level: u32,
    localization: Option<f64>,
) -> Result<()> {
    write_csv(
        &dir.join("slice.csv"),
        &["x", "t", "approx", "exact", "abs_error"],
        slice
            .cells
            .iter()
            .map(|c| vec![Some(c.x), Some(c.t), Some(c.approx), c.exact, c.abs_error]),
    )?;
    write_json(
        &dir.join("blocks.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "y": slice.y,
            "s": slice.s,
            "resolution": slice.resolution,
            "final_level": final_level,
            "tube_radius": tube_radius(final_level),
            "top_decile_in_tube": localization,
            "blocks": slice.blocks,
        }),
    )
}

fn final_level(model: &GreenModel) -> u32 {
    model.meta.levels.last().map(|l| l.level).unwrap_or(0)
}

fn slice_for(
    model: &GreenModel,
    spec: &OracleSpec,
    args: &SliceArgs,
) -> Result<(SliceData, Option<f64>)> {
    let exact = spec.exact_wave();
    let slice = export_slice(model, args.y, args.s, args.resolution, exact.as_ref())?;
    let loc = match exact {
        Some(_) => Some(error_localization(
            &slice,
            &bundle_for(spec)?,
            tube_radius(final_level(model)),
        )?),
        None => None,
    };
    Ok((slice, loc))
}

fn model_or_learn(path: Option<&Path>, cfg: &RunConfig) -> Result<(GreenModel, bool)> {
    match path {
        Some(p) => Ok((load_model(p)?, false)),
        None => {
            let out = learn(cfg)?;
            let partial = out.tree.partial;
            Ok((out.model, partial))
        }
    }
}

/// Runs one command; returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let partial = match cli.command {
        Command::Learn(common) => {
            let cfg = common.run_config()?;
            let dir = out_dir(&common.out)?;
            let out = learn(&cfg)?;
            write_learn(dir, &cfg, &out)?;
            out.tree.partial
        }
        Command::Slice {
            common,
            slice,
            model,
        } => {
            let cfg = common.run_config()?;
            let dir = out_dir(&common.out)?;
            let (model, partial) = model_or_learn(model.as_deref(), &cfg)?;
            let (data, loc) = slice_for(&model, &cfg.oracle, &slice)?;
            write_slice(dir, &data, final_level(&model), loc)?;
            partial
        }
        Command::Converge { common, eps_list } => {
            let cfg = common.run_config()?;
            let dir = out_dir(&common.out)?;
            let points = converge(&cfg, &eps_list)?;
            write_csv(
                &dir.join("converge.csv"),
                &["eps", "k", "q", "n_queries", "relative_error", "red_leaves"],
                points.iter().map(|p| {
                    vec![
                        Some(p.eps),
                        Some(p.k as f64),
                        Some(p.q as f64),
                        Some(p.queries as f64),
                        Some(p.relative_error),
                        Some(p.red_leaves as f64),
                    ]
                }),
            )?;
            let (slope, intercept) = loglog_slope(&points)?;
            write_json(
                &dir.join("converge.json"),
                &json!({"schema_version": SCHEMA_VERSION, "seed": cfg.seed, "slope": slope, "intercept": intercept, "points": points}),
            )?;
            false
        }
        Command::Ivp {
            common,
            psi_lo,
            psi_hi,
            delta,
            model,
        } => {
            let cfg = common.run_config()?;
            let dir = out_dir(&common.out)?;
            let (model, partial) = model_or_learn(model.as_deref(), &cfg)?;
            let oracle = cfg.oracle.build(&model.grid)?;
            let speed = cfg.oracle.exact_wave().map(|w| w.c);
            let res = ivp(&model, &oracle, (psi_lo, psi_hi), delta, speed)?;
            write_csv(
                &dir.join("ivp.csv"),
                &["x", "t", "approx", "direct", "exact"],
                res.rows.iter().map(|r| {
                    vec![
                        Some(r.x),
                        Some(r.t),
                        Some(r.approx),
                        Some(r.direct),
                        r.exact,
                    ]
                }),
            )?;
            write_json(
                &dir.join("ivp.json"),
                &json!({
                    "schema_version": SCHEMA_VERSION,
                    "psi": [psi_lo, psi_hi],
                    "delta": res.delta,
                    "smeared": res.smeared,
                    "direct_max_error": res.direct_max_error,
                    "model_relative_l2": res.model_relative_l2,
                }),
            )?;
            partial
        }
        Command::CompareSolvers { common, slice } => {
            let cfg = common.run_config()?;
            let dir = out_dir(&common.out)?;
            let cmp = compare_solvers(&cfg, common.c, common.fd_nx, common.cfl)?;
            let names = ["exact", "upwind1", "ctcs2"];
            for (name, model) in names.iter().zip(&cmp.models) {
                let sub = dir.join(name);
                let sub = out_dir(&sub)?;
                let spec = OracleSpec::ExactWave { c: common.c };
                let data = export_slice(
                    model,
                    slice.y,
                    slice.s,
                    slice.resolution,
                    spec.exact_wave().as_ref(),
                )?;
                write_slice(sub, &data, final_level(model), None)?;
            }
            write_json(
                &dir.join("compare.json"),
                &json!({"schema_version": SCHEMA_VERSION, "seed": cfg.seed, "c": common.c, "fd_nx": common.fd_nx, "cfl": common.cfl, "oracles": names, "summaries": cmp.summaries}),
            )?;
            cmp.summaries.iter().any(|s| s.partial)
        }
        Command::RankTest {
            common,
            level,
            ix,
            it,
            iy,
            is_,
        } => {
            let cfg = common.run_config()?;
            let dir = out_dir(&common.out)?;
            let report = rank_test(
                &cfg,
                SubdomainBox {
                    level,
                    ix,
                    it,
                    iy,
                    is: is_,
                },
            )?;
            write_json(&dir.join("rank_test.json"), &report)?;
            false
        }
    };
    Ok(if partial { 3 } else { 0 })
}

/// Machine-readable error record.
pub fn error_json(e: &Error) -> String {
    json!({"error": e.kind(), "message": e.to_string(), "exit_code": e.exit_code()}).to_string()
}

//! Data-driven numerical-rank test on one subdomain `X × Y`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{kernel_spectrum, CovarianceKernel};
use crate::grid::{SubGrid, SubdomainBox};
use crate::linalg::Quasimatrix;
use crate::oracles::Oracle;
use crate::rsvd::{choose_power_exponent, estimate_singular_values, Gap};
use crate::seeds;

/// Threshold factor of the low-rank test `σ̂_k < 4ε σ̂_1`.
pub const THRESHOLD: f64 = 4.0;

/// Target rank `max(4, ⌈C/ε⌉)`.
pub fn k_epsilon(eps: f64, c: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Config(format!(
            "eps must lie in (0, 1/2), got {eps}"
        )));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Config(format!("C must be positive, got {c}")));
    }
    // Guard against c/eps landing a hair above an integer.
    let k = (c / eps * (1.0 - 1e-12)).ceil() as usize;
    Ok(k.max(4))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    LowRank,
    HighRank,
}

/// Power exponent rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QMode {
    /// `⌈ln(1/ε)⌉`.
    Auto,
    Fixed(usize),
}

impl QMode {
    pub fn exponent(&self, eps: f64) -> Result<usize> {
        match self {
            Self::Auto => choose_power_exponent(eps, 1.0, Gap::Unknown),
            Self::Fixed(q) => Ok(*q),
        }
    }
}

impl std::str::FromStr for QMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        s.parse::<usize>()
            .map(Self::Fixed)
            .map_err(|_| Error::Config(format!("q mode must be 'auto' or an integer, got {s:?}")))
    }
}

/// Parameters shared by every rank test of one run.
#[derive(Debug, Clone)]
pub struct DetectConfig {
    pub eps: f64,
    pub k: usize,
    pub q: usize,
    pub kernel: CovarianceKernel,
}

impl DetectConfig {
    pub fn new(eps: f64, kc: f64, q_mode: QMode, kernel: CovarianceKernel) -> Result<Self> {
        let k = k_epsilon(eps, kc)?;
        Ok(Self {
            eps,
            k,
            q: q_mode.exponent(eps)?,
            kernel,
        })
    }

    /// Queries spent by one test, `k(8q+5)`.
    pub fn detection_cost(&self) -> u64 {
        (self.k * (8 * self.q + 5)) as u64
    }

    /// Queries spent building one green block, `2k`.
    pub fn assembly_cost(&self) -> u64 {
        2 * self.k as u64
    }
}

#[derive(Debug, Clone)]
pub struct RankDecision {
    pub bx: SubdomainBox,
    pub verdict: Verdict,
    /// `σ̂_1 ≥ … ≥ σ̂_r`, `r ≤ k`.
    pub sigma: Vec<f64>,
    /// Orthonormal range basis on `X`, kept for building the approximant.
    pub range: Quasimatrix,
    /// Columns of the sketch (`2k`); the approximant is charged this many queries.
    pub sketch_width: usize,
    pub queries: u64,
    pub seed: u64,
    /// All responses vanished (`σ̂_1 = 0`).
    pub zero: bool,
}

impl RankDecision {
    pub fn sigma_k(&self, k: usize) -> f64 {
        self.sigma.get(k - 1).copied().unwrap_or(0.0)
    }
}

/// Per-box seed derived from the master seed and the box address.
pub fn box_seed(master: u64, bx: &SubdomainBox) -> u64 {
    seeds::derive_seed(
        master,
        &[
            bx.level as u64,
            bx.ix as u64,
            bx.it as u64,
            bx.iy as u64,
            bx.is as u64,
        ],
    )
}

/// Rank test of `R_X F R_Y*` with a `2k`-column Gaussian-process sketch.
pub fn detect_rank(
    oracle: &Oracle,
    bx: SubdomainBox,
    cfg: &DetectConfig,
    master_seed: u64,
) -> Result<RankDecision> {
    let grid = oracle.grid();
    let output = Arc::new(SubGrid::new(grid, bx.output())?);
    let input = Arc::new(SubGrid::new(grid, bx.input())?);
    let seed = box_seed(master_seed, &bx);
    let omega = kernel_spectrum(&cfg.kernel, &input)?.sample(2 * cfg.k, seed);
    let op = oracle.block(output, input);
    let est = estimate_singular_values(&op, &omega, cfg.k, cfg.q)?;
    let s1 = est.sigma.first().copied().unwrap_or(0.0);
    let sk = est.sigma.get(cfg.k - 1).copied().unwrap_or(0.0);
    let zero = !(s1 > 0.0);
    let verdict = if zero || sk < THRESHOLD * cfg.eps * s1 {
        Verdict::LowRank
    } else {
        Verdict::HighRank
    };
    Ok(RankDecision {
        bx,
        verdict,
        sigma: est.sigma,
        range: est.range,
        sketch_width: est.sketch_width,
        queries: est.queries,
        seed,
        zero,
    })
}

//! The assembled approximant: low-rank blocks on green leaves, zeros on red
//! leaves, with application, pointwise kernel evaluation and error estimation.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DiscreteFunction, Grid2D, SubGrid, SubdomainBox};
use crate::linalg::{scale_rows, singular_values, Quasimatrix};
use crate::oracles::Oracle;
use crate::partition::{Color, LevelStats, PartitionTree};
use crate::seeds;

/// `G̃(x,t; y,s) = Σ_i q_i(x,t) c_i(y,s)` on one green box.
#[derive(Debug, Clone)]
pub struct LowRankBlock {
    pub bx: SubdomainBox,
    /// Weighted-orthonormal columns on the output window.
    pub q: Quasimatrix,
    /// `F* q` on the input window.
    pub c: Quasimatrix,
}

impl LowRankBlock {
    pub fn rank(&self) -> usize {
        self.q.ncols()
    }

    fn eval(&self, x: f64, t: f64, y: f64, s: f64) -> f64 {
        let sx = self.q.domain.stencil(x, t);
        let sy = self.c.domain.stencil(y, s);
        (0..self.rank())
            .map(|i| {
                let a: f64 = sx.iter().map(|&(k, w)| w * self.q.data[(k, i)]).sum();
                let b: f64 = sy.iter().map(|&(k, w)| w * self.c.data[(k, i)]).sum();
                a * b
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "block")]
pub enum Leaf {
    /// Index into [`GreenModel::blocks`].
    Green(usize),
    Red,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelNode {
    #[serde(rename = "box")]
    pub bx: SubdomainBox,
    pub children: Vec<usize>,
    pub leaf: Option<Leaf>,
    /// Singular value estimates from the rank test.
    pub sigma: Vec<f64>,
}

/// Run parameters and query totals carried with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub oracle: String,
    pub eps: f64,
    pub kc: f64,
    pub k: usize,
    pub q: usize,
    pub seed: u64,
    pub depth: u32,
    pub levels: Vec<LevelStats>,
    pub detection_queries: u64,
    pub approximation_queries: u64,
    pub partial: bool,
}

#[derive(Debug, Clone)]
pub struct GreenModel {
    pub grid: Arc<Grid2D>,
    /// Node 0 is the root.
    pub nodes: Vec<ModelNode>,
    pub blocks: Vec<LowRankBlock>,
    pub meta: ModelMeta,
}

fn pad_columns(q: &Quasimatrix, width: usize) -> Quasimatrix {
    let mut data = DMatrix::zeros(q.data.nrows(), width.max(q.ncols()));
    data.columns_mut(0, q.ncols()).copy_from(&q.data);
    Quasimatrix {
        domain: q.domain.clone(),
        data,
    }
}

fn drop_zero_pairs(q: Quasimatrix, c: Quasimatrix) -> (Quasimatrix, Quasimatrix) {
    let keep: Vec<usize> = (0..q.ncols())
        .filter(|&j| q.data.column(j).iter().any(|v| *v != 0.0))
        .collect();
    (
        Quasimatrix {
            domain: q.domain.clone(),
            data: q.data.select_columns(keep.iter()),
        },
        Quasimatrix {
            domain: c.domain.clone(),
            data: c.data.select_columns(keep.iter()),
        },
    )
}

impl GreenModel {
    /// Projects the operator onto the stored range of every green leaf,
    /// spending one adjoint query per sketch column.
    pub fn assemble(oracle: &Oracle, tree: &PartitionTree, meta: ModelMeta) -> Result<Self> {
        let grid = oracle.grid().clone();
        let greens: Vec<usize> = (0..tree.nodes.len())
            .filter(|&i| tree.nodes[i].children.is_empty() && tree.nodes[i].color == Color::Green)
            .collect();
        let start = oracle.queries();
        let blocks: Vec<LowRankBlock> = greens
            .par_iter()
            .map(|&i| {
                let node = &tree.nodes[i];
                let d = &node.decision;
                let output = Arc::new(SubGrid::new(&grid, node.bx.output())?);
                let input = Arc::new(SubGrid::new(&grid, node.bx.input())?);
                let q = Quasimatrix::new(&output, pad_columns(&d.range, d.sketch_width).data)?;
                let c = crate::rsvd::project_approximant(&oracle.block(output, input), &q)?.c;
                let (q, c) = drop_zero_pairs(q, c);
                Ok(LowRankBlock { bx: node.bx, q, c })
            })
            .collect::<Result<_>>()?;
        let mut nodes: Vec<ModelNode> = tree
            .nodes
            .iter()
            .map(|n| ModelNode {
                bx: n.bx,
                children: n.children.clone(),
                leaf: n.children.is_empty().then_some(Leaf::Red),
                sigma: n.decision.sigma.clone(),
            })
            .collect();
        for (b, &i) in greens.iter().enumerate() {
            nodes[i].leaf = Some(Leaf::Green(b));
        }
        let meta = ModelMeta {
            approximation_queries: oracle.queries() - start,
            detection_queries: tree.detection_queries,
            partial: tree.partial,
            levels: tree.levels.clone(),
            depth: tree.depth,
            ..meta
        };
        Ok(Self {
            grid,
            nodes,
            blocks,
            meta,
        })
    }

    /// A model with a single green root block.
    pub fn single_block(
        grid: &Arc<Grid2D>,
        q: Quasimatrix,
        c: Quasimatrix,
        meta: ModelMeta,
    ) -> Result<Self> {
        if !q.domain.is_full() || !c.domain.is_full() || q.ncols() != c.ncols() {
            return Err(Error::Domain(
                "single-block factors must live on the full grid with equal rank".into(),
            ));
        }
        let root = ModelNode {
            bx: SubdomainBox::ROOT,
            children: vec![],
            leaf: Some(Leaf::Green(0)),
            sigma: vec![],
        };
        Ok(Self {
            grid: grid.clone(),
            nodes: vec![root],
            blocks: vec![LowRankBlock {
                bx: SubdomainBox::ROOT,
                q,
                c,
            }],
            meta,
        })
    }

    pub fn leaves(&self) -> impl Iterator<Item = &ModelNode> {
        self.nodes.iter().filter(|n| n.leaf.is_some())
    }

    pub fn red_leaves(&self) -> impl Iterator<Item = &ModelNode> {
        self.leaves().filter(|n| n.leaf == Some(Leaf::Red))
    }

    pub fn training_queries(&self) -> u64 {
        self.meta.detection_queries + self.meta.approximation_queries
    }

    /// Applies `F̃` (or `F̃*`) to full-grid columns.
    pub fn apply(&self, f: &DMatrix<f64>, adjoint: bool) -> Result<DMatrix<f64>> {
        if f.nrows() != self.grid.len() {
            return Err(Error::Domain(format!(
                "expected {} rows, got {}",
                self.grid.len(),
                f.nrows()
            )));
        }
        let mut out = DMatrix::zeros(f.nrows(), f.ncols());
        for b in &self.blocks {
            let (src, dst, from, to) = if adjoint {
                (&b.q, &b.c, &b.q.domain, &b.c.domain)
            } else {
                (&b.c, &b.q, &b.c.domain, &b.q.domain)
            };
            let mut fr = DMatrix::from_fn(from.len(), f.ncols(), |a, j| f[(from.indices[a], j)]);
            scale_rows(&mut fr, &from.weights);
            let u = &dst.data * src.data.tr_mul(&fr);
            for j in 0..f.ncols() {
                for (a, &k) in to.indices.iter().enumerate() {
                    out[(k, j)] += u[(a, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn apply_green(&self, f: &DiscreteFunction) -> Result<DiscreteFunction> {
        let u = self.apply(
            &DMatrix::from_column_slice(f.values.len(), 1, &f.values),
            false,
        )?;
        DiscreteFunction::new(&self.grid, u.as_slice().to_vec())
    }

    /// Leaf containing the point; ties go to the leaf with the
    /// lexicographically smallest corner.
    pub fn locate(&self, p: [f64; 4]) -> Option<usize> {
        if !SubdomainBox::ROOT.contains(p) {
            return None;
        }
        let mut best: Option<usize> = None;
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let n = &self.nodes[i];
            if !n.bx.contains(p) {
                continue;
            }
            if n.children.is_empty() {
                let better = match best {
                    None => true,
                    Some(b) => n.bx.corner() < self.nodes[b].bx.corner(),
                };
                if better {
                    best = Some(i);
                }
            } else {
                stack.extend(n.children.iter().copied());
            }
        }
        best
    }

    /// `G̃(x,t; y,s)`; zero on red leaves.
    pub fn eval_point(&self, x: f64, t: f64, y: f64, s: f64) -> f64 {
        match self.locate([x, t, y, s]).and_then(|i| self.nodes[i].leaf) {
            Some(Leaf::Green(b)) => self.blocks[b].eval(x, t, y, s),
            _ => 0.0,
        }
    }

    /// Leaves whose input window contains `(y, s)`, i.e. the blocks seen on
    /// the slice `G̃(·,·; y,s)`.
    pub fn slice_leaves(&self, y: f64, s: f64) -> Vec<(SubdomainBox, Color)> {
        self.leaves()
            .filter(|n| n.bx.input().contains(y, s))
            .map(|n| {
                (
                    n.bx,
                    if n.leaf == Some(Leaf::Red) {
                        Color::Red
                    } else {
                        Color::Green
                    },
                )
            })
            .collect()
    }
}

/// Randomized estimate of `‖A‖` by block power iteration on `A*A`.
fn power_norm(
    grid: &Arc<Grid2D>,
    apply: &dyn Fn(&DMatrix<f64>, bool) -> Result<DMatrix<f64>>,
    n_probe: usize,
    iterations: usize,
    seed: u64,
) -> Result<f64> {
    let d = Arc::new(SubGrid::full(grid));
    let mut rng = seeds::rng(seed, &[]);
    let g = DMatrix::from_fn(grid.len(), n_probe, |_, _| StandardNormal.sample(&mut rng));
    let mut x = Quasimatrix::from_weighted(&d, g);
    for _ in 0..iterations {
        x = x.orthonormalize();
        if x.ncols() == 0 {
            return Ok(0.0);
        }
        let y = apply(&x.data, false)?;
        x = Quasimatrix::new(&d, apply(&y, true)?)?;
    }
    x = x.orthonormalize();
    if x.ncols() == 0 {
        return Ok(0.0);
    }
    let y = Quasimatrix::new(&d, apply(&x.data, false)?)?;
    Ok(singular_values(&y.weighted())?
        .first()
        .copied()
        .unwrap_or(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    /// `‖F − F̃‖ / ‖F‖`.
    pub relative: f64,
    pub error_norm: f64,
    pub operator_norm: f64,
    /// Oracle queries spent on the estimate (not part of training).
    pub queries: u64,
}

/// Power iterations used by [`estimate_operator_error`].
pub const POWER_STEPS: usize = 10;

/// Estimates `‖F − F̃‖/‖F‖` with the same probes for both norms. Queries go
/// through a fresh counter so that training totals are unaffected.
pub fn estimate_operator_error(
    model: &GreenModel,
    oracle: &Oracle,
    n_probe: usize,
    seed: u64,
) -> Result<ErrorEstimate> {
    if n_probe < 2 {
        return Err(Error::Config(format!(
            "need at least 2 probes, got {n_probe}"
        )));
    }
    let eval = oracle.fresh();
    let err = |f: &DMatrix<f64>, adj: bool| -> Result<DMatrix<f64>> {
        Ok(eval.apply_columns(f, adj)? - model.apply(f, adj)?)
    };
    let full = |f: &DMatrix<f64>, adj: bool| eval.apply_columns(f, adj);
    let error_norm = power_norm(&model.grid, &err, n_probe, POWER_STEPS, seed)?;
    let operator_norm = power_norm(&model.grid, &full, n_probe, POWER_STEPS, seed)?;
    let relative = if operator_norm > 0.0 {
        error_norm / operator_norm
    } else {
        0.0
    };
    Ok(ErrorEstimate {
        relative,
        error_norm,
        operator_norm,
        queries: eval.queries(),
    })
}

/// Impulsive forcing `f_δ(x,t) = δ⁻¹ χ_[0,δ](t) ψ(x)` standing in for the
/// initial velocity `u_t(x,0) = ψ(x)`.
///
/// Both factors are cell-averaged over the quadrature cells so that the
/// pulse keeps its mass and indicator data keep their support length.
/// The flag is set when `δ` exceeds the first time panel (visible smearing).
pub fn duhamel_forcing(
    grid: &Arc<Grid2D>,
    psi: &dyn Fn(f64) -> f64,
    delta: f64,
) -> Result<(DiscreteFunction, bool)> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Config(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    const SUB: usize = 64;
    let px: Vec<f64> = (0..grid.nx())
        .map(|i| {
            let (lo, hi) = grid.gx.cell(i);
            (0..SUB)
                .map(|m| psi(lo + (m as f64 + 0.5) / SUB as f64 * (hi - lo)))
                .sum::<f64>()
                / SUB as f64
        })
        .collect();
    let pt: Vec<f64> = (0..grid.nt())
        .map(|j| {
            let (lo, hi) = grid.gt.cell(j);
            let overlap = (hi.min(delta) - lo).max(0.0);
            overlap / (grid.gt.weights[j] * delta)
        })
        .collect();
    let mut values = Vec::with_capacity(grid.len());
    for a in &px {
        for b in &pt {
            values.push(a * b);
        }
    }
    Ok((
        DiscreteFunction::new(grid, values)?,
        delta > grid.gt.panel_width(),
    ))
}

/// Default pulse width: the first quadrature cell in time.
pub fn default_delta(grid: &Grid2D) -> f64 {
    grid.gt.weights[0]
}

/// Duhamel solution of `u_tt − a u_xx = 0`, `u(x,0) = 0`, `u_t(x,0) = ψ`
/// with the learned model.
pub fn duhamel_solve(
    model: &GreenModel,
    psi: &dyn Fn(f64) -> f64,
    delta: f64,
) -> Result<(DiscreteFunction, bool)> {
    let (f, smeared) = duhamel_forcing(&model.grid, psi, delta)?;
    Ok((model.apply_green(&f)?, smeared))
}

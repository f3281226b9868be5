//! Finite-difference solvers for `u_tt − a u_xx = f` with zero initial data
//! and homogeneous Dirichlet walls, wrapped as black-box oracles.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid1D, Grid2D};

use super::{Coefficient, SolutionOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FdScheme {
    /// First-order upwinding of the characteristic variables `u_t ∓ √a u_x`.
    Upwind1,
    /// Second-order leapfrog in time, centered in space.
    Ctcs2,
}

impl FdScheme {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Upwind1 => "upwind1",
            Self::Ctcs2 => "ctcs2",
        }
    }
}

impl std::str::FromStr for FdScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upwind1" => Ok(Self::Upwind1),
            "ctcs2" => Ok(Self::Ctcs2),
            _ => Err(Error::Config(format!(
                "unknown scheme {s:?}, expected upwind1 or ctcs2"
            ))),
        }
    }
}

/// Uniform space-time lattice: `nx` cells in `x`, `nt` steps in `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FdSteps {
    pub nx: usize,
    pub nt: usize,
}

impl FdSteps {
    /// Smallest `nt` with Courant number `max_speed·dt/h ≤ cfl`.
    pub fn from_cfl(nx: usize, cfl: f64, max_speed: f64) -> Result<Self> {
        if !(cfl > 0.0 && cfl <= 1.0) {
            return Err(Error::Stability(format!(
                "cfl must lie in (0, 1], got {cfl}"
            )));
        }
        let nt = (max_speed * nx as f64 / cfl - 1e-9).ceil().max(1.0) as usize;
        Ok(Self { nx, nt })
    }

    pub fn courant(&self, max_speed: f64) -> f64 {
        max_speed * self.nt_inv() * self.nx as f64
    }

    fn nt_inv(&self) -> f64 {
        1.0 / self.nt as f64
    }

    fn validate(&self, max_speed: f64) -> Result<()> {
        if self.nx < 16 || self.nt < 16 {
            return Err(Error::Config(format!(
                "need nx, nt >= 16, got {}x{}",
                self.nx, self.nt
            )));
        }
        let nu = self.courant(max_speed);
        if nu > 1.0 + 1e-12 {
            return Err(Error::Stability(format!(
                "Courant number {nu:.4} exceeds 1"
            )));
        }
        Ok(())
    }
}

/// Solution `u[n][i] ≈ u(i/nx, n/nt)` on the uniform lattice.
///
/// `forcing[n][i] = f(i/nx, n/nt)`. With `divergence_form` the spatial
/// operator is `(a u)_xx`, the one appearing in the adjoint problem.
pub fn fd_solve_lattice(
    scheme: FdScheme,
    a: &dyn Fn(f64, f64) -> f64,
    max_speed: f64,
    forcing: &[Vec<f64>],
    steps: FdSteps,
    divergence_form: bool,
) -> Result<Vec<Vec<f64>>> {
    steps.validate(max_speed)?;
    let table = CoefTable::new(scheme, a, steps);
    solve_tabulated(scheme, &table, forcing, steps, divergence_form)
}

/// Coefficient samples on the lattice; upwind1 also needs `c = √a` and its
/// derivatives.
struct CoefTable {
    a: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    ct: Vec<Vec<f64>>,
    cx: Vec<Vec<f64>>,
}

impl CoefTable {
    fn new(scheme: FdScheme, a: &dyn Fn(f64, f64) -> f64, steps: FdSteps) -> Self {
        let FdSteps { nx, nt } = steps;
        let (h, dt, d) = (1.0 / nx as f64, 1.0 / nt as f64, 1e-6);
        let tab = |g: &dyn Fn(f64, f64) -> f64| -> Vec<Vec<f64>> {
            (0..=nt)
                .map(|n| (0..=nx).map(|i| g(i as f64 * h, n as f64 * dt)).collect())
                .collect()
        };
        let at = tab(a);
        if scheme == FdScheme::Ctcs2 {
            return Self {
                a: at,
                c: vec![],
                ct: vec![],
                cx: vec![],
            };
        }
        Self {
            c: tab(&|x, t| a(x, t).sqrt()),
            ct: tab(&|x, t| (a(x, t + d).sqrt() - a(x, t - d).sqrt()) / (2.0 * d)),
            cx: tab(&|x, t| (a(x + d, t).sqrt() - a(x - d, t).sqrt()) / (2.0 * d)),
            a: at,
        }
    }
}

fn solve_tabulated(
    scheme: FdScheme,
    table: &CoefTable,
    forcing: &[Vec<f64>],
    steps: FdSteps,
    divergence_form: bool,
) -> Result<Vec<Vec<f64>>> {
    let FdSteps { nx, nt } = steps;
    if forcing.len() != nt + 1 || forcing.iter().any(|r| r.len() != nx + 1) {
        return Err(Error::Domain(format!(
            "forcing must be {}x{}",
            nt + 1,
            nx + 1
        )));
    }
    match scheme {
        FdScheme::Ctcs2 => Ok(ctcs2(&table.a, forcing, steps, divergence_form)),
        FdScheme::Upwind1 => {
            if divergence_form {
                return Err(Error::Config(
                    "upwind1 supports only the non-divergence form".into(),
                ));
            }
            Ok(upwind1(table, forcing, steps))
        }
    }
}

fn ctcs2(a: &[Vec<f64>], f: &[Vec<f64>], steps: FdSteps, divergence_form: bool) -> Vec<Vec<f64>> {
    let FdSteps { nx, nt } = steps;
    let h = 1.0 / nx as f64;
    let dt = 1.0 / nt as f64;
    let r = dt * dt / (h * h);
    let mut u = vec![vec![0.0; nx + 1]; nt + 1];
    // u(dt) = dt²/2·u_tt(0) + O(dt³) and u_tt(0) = f(0) for zero data.
    for i in 1..nx {
        u[1][i] = 0.5 * dt * dt * f[0][i];
    }
    let mut au = vec![0.0; nx + 1];
    for n in 1..nt {
        let coef = &a[n];
        let (prev, rest) = u.split_at_mut(n);
        let (cur, next) = rest.split_at_mut(1);
        let (um, u0, up) = (&prev[n - 1], &cur[0], &mut next[0]);
        if divergence_form {
            for i in 0..=nx {
                au[i] = coef[i] * u0[i];
            }
            for i in 1..nx {
                up[i] = 2.0 * u0[i] - um[i]
                    + r * (au[i + 1] - 2.0 * au[i] + au[i - 1])
                    + dt * dt * f[n][i];
            }
        } else {
            for i in 1..nx {
                up[i] = 2.0 * u0[i] - um[i]
                    + r * coef[i] * (u0[i + 1] - 2.0 * u0[i] + u0[i - 1])
                    + dt * dt * f[n][i];
            }
        }
    }
    u
}

fn upwind1(tab: &CoefTable, f: &[Vec<f64>], steps: FdSteps) -> Vec<Vec<f64>> {
    let FdSteps { nx, nt } = steps;
    let h = 1.0 / nx as f64;
    let dt = 1.0 / nt as f64;
    let r = dt / h;
    let mut u = vec![vec![0.0; nx + 1]; nt + 1];
    // w1 = u_t − c u_x moves right, w2 = u_t + c u_x moves left.
    let mut w1 = vec![0.0; nx + 1];
    let mut w2 = vec![0.0; nx + 1];
    let mut n1 = vec![0.0; nx + 1];
    let mut n2 = vec![0.0; nx + 1];
    let mut p_old = vec![0.0; nx + 1];
    for n in 0..nt {
        let (cn, ctn, cxn, fnr) = (&tab.c[n], &tab.ct[n], &tab.cx[n], &f[n]);
        for i in 0..=nx {
            let (c, ct, cx) = (cn[i], ctn[i], cxn[i]);
            // Source terms of the characteristic system, q = u_x.
            let q = dt * (w2[i] - w1[i]) * 0.5 / c;
            let nu = c * r;
            if i > 0 {
                n1[i] = w1[i] - nu * (w1[i] - w1[i - 1]) + dt * fnr[i] - (ct + c * cx) * q;
            }
            if i < nx {
                n2[i] = w2[i] + nu * (w2[i + 1] - w2[i]) + dt * fnr[i] + (ct - c * cx) * q;
            }
            p_old[i] = 0.5 * (w1[i] + w2[i]);
        }
        n1[0] = -n2[0];
        n2[nx] = -n1[nx];
        std::mem::swap(&mut w1, &mut n1);
        std::mem::swap(&mut w2, &mut n2);
        for i in 1..nx {
            let p_new = 0.5 * (w1[i] + w2[i]);
            u[n + 1][i] = u[n][i] + 0.5 * dt * (p_old[i] + p_new);
        }
    }
    u
}

/// Sparse interpolation rows: `(column, weight)` pairs.
type Rows = Vec<Vec<(usize, f64)>>;

/// Rows evaluating the per-panel interpolant of a quadrature grid at `i/n`.
fn quadrature_to_lattice(g: &Grid1D, n: usize) -> Rows {
    (0..=n)
        .map(|i| {
            let x = i as f64 / n as f64;
            let p = g.panel_of(x);
            let off = p * g.nodes_per_panel;
            g.lagrange_weights(p, x)
                .into_iter()
                .enumerate()
                .map(|(k, w)| (off + k, w))
                .collect()
        })
        .collect()
}

/// Rows of 4-point Lagrange interpolation from the lattice `i/n` to `nodes`.
fn lattice_to_points(nodes: &[f64], n: usize) -> Rows {
    nodes
        .iter()
        .map(|&z| {
            let s = z * n as f64;
            let i0 = (s.floor() as isize - 1).clamp(0, n as isize - 3) as usize;
            (0..4)
                .map(|a| {
                    let w: f64 = (0..4)
                        .filter(|&b| b != a)
                        .map(|b| (s - (i0 + b) as f64) / (a as f64 - b as f64))
                        .product();
                    (i0 + a, w)
                })
                .collect()
        })
        .collect()
}

/// Finite-difference oracle on a quadrature grid: forcing is interpolated
/// to the lattice, the solution interpolated back.
pub struct FdOracle {
    pub scheme: FdScheme,
    pub coefficient: Coefficient,
    pub steps: FdSteps,
    grid: Arc<Grid2D>,
    to_lattice_x: Rows,
    to_lattice_t: Rows,
    to_grid_x: Rows,
    to_grid_t: Rows,
    forward: CoefTable,
    /// Time-reversed coefficient for the adjoint solve.
    backward: CoefTable,
}

impl FdOracle {
    pub fn new(
        scheme: FdScheme,
        coefficient: Coefficient,
        steps: FdSteps,
        grid: &Arc<Grid2D>,
    ) -> Result<Self> {
        steps.validate(coefficient.max_speed())?;
        let c = &coefficient;
        let forward = CoefTable::new(scheme, &|x, t| c.eval(x, t), steps);
        let backward = CoefTable::new(scheme, &|x, t| c.eval(x, 1.0 - t), steps);
        Ok(Self {
            scheme,
            forward,
            backward,
            steps,
            to_lattice_x: quadrature_to_lattice(&grid.gx, steps.nx),
            to_lattice_t: quadrature_to_lattice(&grid.gt, steps.nt),
            to_grid_x: lattice_to_points(&grid.gx.nodes, steps.nx),
            to_grid_t: lattice_to_points(&grid.gt.nodes, steps.nt),
            coefficient,
            grid: grid.clone(),
        })
    }

    /// Lattice from `nx` cells at the given Courant number.
    pub fn with_cfl(
        scheme: FdScheme,
        coefficient: Coefficient,
        nx: usize,
        cfl: f64,
        grid: &Arc<Grid2D>,
    ) -> Result<Self> {
        let steps = FdSteps::from_cfl(nx, cfl, coefficient.max_speed())?;
        Self::new(scheme, coefficient, steps, grid)
    }

    fn solve_column(&self, f: &[f64], adjoint: bool) -> Result<Vec<f64>> {
        let (nxq, ntq) = (self.grid.nx(), self.grid.nt());
        let FdSteps { nx, nt } = self.steps;
        // Forcing on the lattice, time-reversed for the adjoint. Inner loops
        // run over contiguous lattice rows.
        let mut by_x = vec![vec![0.0; nx + 1]; ntq];
        for (j, dst) in by_x.iter_mut().enumerate() {
            for (i, row) in self.to_lattice_x.iter().enumerate() {
                dst[i] = row.iter().map(|&(k, w)| w * f[k * ntq + j]).sum();
            }
        }
        let mut forcing = vec![vec![0.0; nx + 1]; nt + 1];
        for (n, row) in self.to_lattice_t.iter().enumerate() {
            let dst = &mut forcing[if adjoint { nt - n } else { n }];
            for &(j, w) in row {
                for (d, s) in dst.iter_mut().zip(&by_x[j]) {
                    *d += w * s;
                }
            }
        }
        let c = &self.coefficient;
        let u = if adjoint {
            // (a u)_xx = a u_xx when a does not depend on x.
            let divergence = !c.is_x_independent();
            if divergence && self.scheme == FdScheme::Upwind1 {
                return Err(Error::Config(
                    "upwind1 adjoint needs an x-independent coefficient".into(),
                ));
            }
            solve_tabulated(
                self.scheme,
                &self.backward,
                &forcing,
                self.steps,
                divergence,
            )?
        } else {
            solve_tabulated(self.scheme, &self.forward, &forcing, self.steps, false)?
        };
        let mut out = vec![0.0; nxq * ntq];
        let mut by_t = vec![vec![0.0; nx + 1]; ntq];
        for (j, row) in self.to_grid_t.iter().enumerate() {
            for &(n, w) in row {
                let src = if adjoint { nt - n } else { n };
                for i in 0..=nx {
                    by_t[j][i] += w * u[src][i];
                }
            }
        }
        for (i, row) in self.to_grid_x.iter().enumerate() {
            for j in 0..ntq {
                out[i * ntq + j] = row.iter().map(|&(l, w)| w * by_t[j][l]).sum();
            }
        }
        Ok(out)
    }
}

impl SolutionOperator for FdOracle {
    fn grid(&self) -> &Arc<Grid2D> {
        &self.grid
    }

    fn label(&self) -> String {
        format!(
            "{}({}, {}x{})",
            self.scheme.label(),
            self.coefficient.label(),
            self.steps.nx,
            self.steps.nt
        )
    }

    fn apply_full(&self, f: &DMatrix<f64>, adjoint: bool) -> Result<DMatrix<f64>> {
        let cols: Vec<Vec<f64>> = (0..f.ncols())
            .into_par_iter()
            .map(|j| {
                let col: Vec<f64> = f.column(j).iter().copied().collect();
                self.solve_column(&col, adjoint)
            })
            .collect::<Result<_>>()?;
        let mut out = DMatrix::zeros(f.nrows(), f.ncols());
        for (j, c) in cols.iter().enumerate() {
            out.column_mut(j).copy_from_slice(c);
        }
        Ok(out)
    }
}

/// Solves on the quadrature grid of `f` with the given scheme and lattice.
pub fn fd_solve(
    scheme: FdScheme,
    coefficient: &Coefficient,
    f: &crate::grid::DiscreteFunction,
    steps: FdSteps,
) -> Result<crate::grid::DiscreteFunction> {
    let oracle = FdOracle::new(scheme, coefficient.clone(), steps, &f.grid)?;
    let u = oracle.solve_column(&f.values, false)?;
    crate::grid::DiscreteFunction::new(&f.grid, u)
}

//! Composite Gauss–Legendre discretization of the space-time square `[0,1]²`.
//!
//! Functions are stored as nodal samples; inner products use the tensor
//! quadrature weights so that vectors behave like elements of `L²` and
//! matrices like Hilbert–Schmidt operators. Flat indices are x-major:
//! node `(i, j)` (space index `i`, time index `j`) lives at `i * nt + j`.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d.is_finite() {
            dp = d;
        }
        nodes[n - 1 - i] = z;
        weights[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (nodes, weights)
}

/// Legendre polynomial `P_n(z)` and its derivative by the three-term recurrence.
pub fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 1..n {
        let jf = j as f64;
        let p2 = ((2.0 * jf + 1.0) * z * p1 - jf * p0) / (jf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre rule on `[0,1]` with equal panels.
#[derive(Debug, Clone)]
pub struct Grid1D {
    pub panels: usize,
    pub nodes_per_panel: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Panel-local nodes in `(0,1)`.
    local: Vec<f64>,
    bary: Vec<f64>,
}

impl Grid1D {
    pub fn new(panels: usize, nodes_per_panel: usize) -> Result<Self> {
        if panels < 1 {
            return Err(Error::Config(format!("panels must be >= 1, got {panels}")));
        }
        if nodes_per_panel < 2 {
            return Err(Error::Config(format!(
                "nodes_per_panel must be >= 2, got {nodes_per_panel}"
            )));
        }
        let (z, wz) = gauss_legendre(nodes_per_panel);
        let local: Vec<f64> = z.iter().map(|z| 0.5 * (1.0 + z)).collect();
        let h = 1.0 / panels as f64;
        let mut nodes = Vec::with_capacity(panels * nodes_per_panel);
        let mut weights = Vec::with_capacity(panels * nodes_per_panel);
        for p in 0..panels {
            let a = p as f64 * h;
            for (r, w) in local.iter().zip(&wz) {
                nodes.push(a + h * r);
                weights.push(0.5 * h * w);
            }
        }
        let bary = (0..nodes_per_panel)
            .map(|j| {
                let prod: f64 = (0..nodes_per_panel)
                    .filter(|&k| k != j)
                    .map(|k| local[j] - local[k])
                    .product();
                1.0 / prod
            })
            .collect();
        Ok(Self {
            panels,
            nodes_per_panel,
            nodes,
            weights,
            local,
            bary,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn panel_width(&self) -> f64 {
        1.0 / self.panels as f64
    }

    /// Panel containing `x`, clamped to the grid; interior panel boundaries
    /// belong to the panel on their right.
    pub fn panel_of(&self, x: f64) -> usize {
        let p = (x * self.panels as f64).floor();
        if p.is_nan() || p < 0.0 {
            0
        } else {
            (p as usize).min(self.panels - 1)
        }
    }

    /// Lagrange basis values of panel `panel` evaluated at `x`.
    pub fn lagrange_weights(&self, panel: usize, x: f64) -> Vec<f64> {
        let n = self.nodes_per_panel;
        let r = x * self.panels as f64 - panel as f64;
        let mut out = vec![0.0; n];
        if let Some(j) = self.local.iter().position(|&l| l == r) {
            out[j] = 1.0;
            return out;
        }
        let mut denom = 0.0;
        for j in 0..n {
            let v = self.bary[j] / (r - self.local[j]);
            out[j] = v;
            denom += v;
        }
        for v in &mut out {
            *v /= denom;
        }
        out
    }

    /// Cumulative-weight cell `[lo, hi]` around node `i`; cells tile each
    /// panel and contain their node.
    pub fn cell(&self, i: usize) -> (f64, f64) {
        let p = i / self.nodes_per_panel;
        let start = p * self.nodes_per_panel;
        let mut lo = p as f64 * self.panel_width();
        for k in start..i {
            lo += self.weights[k];
        }
        (lo, lo + self.weights[i])
    }
}

/// Tensor-product grid on `[0,1]²` (space `x` by time `t`).
#[derive(Debug, Clone)]
pub struct Grid2D {
    pub gx: Grid1D,
    pub gt: Grid1D,
    pub weights: Vec<f64>,
}

/// Builds the default square grid with the same panel layout in `x` and `t`.
pub fn build_grid(panels: usize, nodes_per_panel: usize) -> Result<Arc<Grid2D>> {
    Ok(Arc::new(Grid2D::new(panels, nodes_per_panel)?))
}

impl Grid2D {
    pub fn new(panels: usize, nodes_per_panel: usize) -> Result<Self> {
        let gx = Grid1D::new(panels, nodes_per_panel)?;
        let gt = gx.clone();
        let mut weights = Vec::with_capacity(gx.len() * gt.len());
        for wx in &gx.weights {
            for wt in &gt.weights {
                weights.push(wx * wt);
            }
        }
        Ok(Self { gx, gt, weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn nx(&self) -> usize {
        self.gx.len()
    }

    pub fn nt(&self) -> usize {
        self.gt.len()
    }

    pub fn flatten(&self, i: usize, j: usize) -> usize {
        i * self.nt() + j
    }

    pub fn unflatten(&self, k: usize) -> (usize, usize) {
        (k / self.nt(), k % self.nt())
    }

    pub fn point(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.unflatten(k);
        (self.gx.nodes[i], self.gt.nodes[j])
    }

    /// Deepest dyadic level whose boxes are unions of whole panels.
    pub fn max_level(&self) -> u32 {
        let p = self.gx.panels.min(self.gt.panels);
        let mut level = 0;
        while p.is_multiple_of(1 << (level + 1)) && (1 << (level + 1)) <= p {
            level += 1;
        }
        level
    }

    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for &x in &self.gx.nodes {
            for &t in &self.gt.nodes {
                out.push(f(x, t));
            }
        }
        out
    }
}

/// A dyadic rectangle `[ix, ix+1]·2^{-L} × [it, it+1]·2^{-L}` of `[0,1]²`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
pub struct Rect {
    pub level: u32,
    pub ix: u32,
    pub it: u32,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        level: 0,
        ix: 0,
        it: 0,
    };

    pub fn side(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    pub fn x_interval(&self) -> (f64, f64) {
        let h = self.side();
        (self.ix as f64 * h, (self.ix + 1) as f64 * h)
    }

    pub fn t_interval(&self) -> (f64, f64) {
        let h = self.side();
        (self.it as f64 * h, (self.it + 1) as f64 * h)
    }

    pub fn contains(&self, x: f64, t: f64) -> bool {
        let (x0, x1) = self.x_interval();
        let (t0, t1) = self.t_interval();
        x >= x0 && x <= x1 && t >= t0 && t <= t1
    }
}

/// A dyadic box of `[0,1]⁴` in the coordinates `(x, t, y, s)`: output window
/// `X = (x, t)` and input window `Y = (y, s)`, all of side `2^{-L}`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
pub struct SubdomainBox {
    pub level: u32,
    pub ix: u32,
    pub it: u32,
    pub iy: u32,
    pub is: u32,
}

impl SubdomainBox {
    pub const ROOT: SubdomainBox = SubdomainBox {
        level: 0,
        ix: 0,
        it: 0,
        iy: 0,
        is: 0,
    };

    pub fn output(&self) -> Rect {
        Rect {
            level: self.level,
            ix: self.ix,
            it: self.it,
        }
    }

    pub fn input(&self) -> Rect {
        Rect {
            level: self.level,
            ix: self.iy,
            it: self.is,
        }
    }

    pub fn side(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    pub fn volume(&self) -> f64 {
        self.side().powi(4)
    }

    pub fn indices(&self) -> [u32; 4] {
        [self.ix, self.it, self.iy, self.is]
    }

    /// `[lo, hi]` per coordinate `(x, t, y, s)`.
    pub fn intervals(&self) -> [(f64, f64); 4] {
        let h = self.side();
        self.indices().map(|i| (i as f64 * h, (i + 1) as f64 * h))
    }

    pub fn corner(&self) -> [f64; 4] {
        self.intervals().map(|iv| iv.0)
    }

    /// The 16 halves, ordered lexicographically by corner.
    pub fn children(&self) -> [SubdomainBox; 16] {
        std::array::from_fn(|c| {
            let bit = |d: usize| ((c >> (3 - d)) & 1) as u32;
            SubdomainBox {
                level: self.level + 1,
                ix: 2 * self.ix + bit(0),
                it: 2 * self.it + bit(1),
                iy: 2 * self.iy + bit(2),
                is: 2 * self.is + bit(3),
            }
        })
    }

    /// Closed containment.
    pub fn contains(&self, p: [f64; 4]) -> bool {
        self.intervals()
            .iter()
            .zip(p)
            .all(|(iv, v)| v >= iv.0 && v <= iv.1)
    }
}

/// Nodes of a panel-aligned rectangle with their quadrature weights.
///
/// Local ordering is x-major over the rectangle's own nodes.
#[derive(Debug, Clone)]
pub struct SubGrid {
    pub grid: Arc<Grid2D>,
    pub rect: Rect,
    pub x_range: std::ops::Range<usize>,
    pub t_range: std::ops::Range<usize>,
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub sqrt_weights: Vec<f64>,
}

impl SubGrid {
    pub fn new(grid: &Arc<Grid2D>, rect: Rect) -> Result<Self> {
        let n = 1usize << rect.level;
        if rect.ix as usize >= n || rect.it as usize >= n {
            return Err(Error::Domain(format!(
                "rectangle {rect:?} outside the unit square"
            )));
        }
        let range = |g: &Grid1D, idx: u32| -> Result<std::ops::Range<usize>> {
            if !g.panels.is_multiple_of(n) {
                return Err(Error::Alignment(format!(
                    "level {} boxes do not align with {} panels",
                    rect.level, g.panels
                )));
            }
            let per = g.panels / n * g.nodes_per_panel;
            Ok(idx as usize * per..(idx as usize + 1) * per)
        };
        let x_range = range(&grid.gx, rect.ix)?;
        let t_range = range(&grid.gt, rect.it)?;
        let mut indices = Vec::with_capacity(x_range.len() * t_range.len());
        for i in x_range.clone() {
            for j in t_range.clone() {
                indices.push(grid.flatten(i, j));
            }
        }
        let weights: Vec<f64> = indices.iter().map(|&k| grid.weights[k]).collect();
        let sqrt_weights = weights.iter().map(|w| w.sqrt()).collect();
        Ok(Self {
            grid: grid.clone(),
            rect,
            x_range,
            t_range,
            indices,
            weights,
            sqrt_weights,
        })
    }

    pub fn full(grid: &Arc<Grid2D>) -> Self {
        Self::new(grid, Rect::UNIT).expect("the unit rectangle is always aligned")
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.grid.len()
    }

    pub fn nt(&self) -> usize {
        self.t_range.len()
    }

    pub fn point(&self, local: usize) -> (f64, f64) {
        self.grid.point(self.indices[local])
    }

    /// Values of a full-grid function at this rectangle's nodes.
    pub fn restrict(&self, f: &[f64]) -> Vec<f64> {
        self.indices.iter().map(|&k| f[k]).collect()
    }

    /// Zero extension to the full grid; the adjoint of [`SubGrid::restrict`].
    pub fn extend_by_zero(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (&k, v) in self.indices.iter().zip(g) {
            out[k] = *v;
        }
        out
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(f)
            .zip(g)
            .map(|((w, a), b)| w * a * b)
            .sum()
    }

    /// Interpolation stencil at `(x, t)`: local node indices and weights of the
    /// tensor Lagrange interpolant on the panel containing the clamped point.
    pub fn stencil(&self, x: f64, t: f64) -> Vec<(usize, f64)> {
        let (x0, x1) = self.rect.x_interval();
        let (t0, t1) = self.rect.t_interval();
        let gx = &self.grid.gx;
        let gt = &self.grid.gt;
        let first_px = self.x_range.start / gx.nodes_per_panel;
        let last_px = (self.x_range.end / gx.nodes_per_panel) - 1;
        let first_pt = self.t_range.start / gt.nodes_per_panel;
        let last_pt = (self.t_range.end / gt.nodes_per_panel) - 1;
        let xc = x.clamp(x0, x1);
        let tc = t.clamp(t0, t1);
        let px = gx.panel_of(xc).clamp(first_px, last_px);
        let pt = gt.panel_of(tc).clamp(first_pt, last_pt);
        let lx = gx.lagrange_weights(px, xc);
        let lt = gt.lagrange_weights(pt, tc);
        let nts = self.nt();
        let mut out = Vec::with_capacity(lx.len() * lt.len());
        for (a, wa) in lx.iter().enumerate() {
            let i = px * gx.nodes_per_panel + a - self.x_range.start;
            for (b, wb) in lt.iter().enumerate() {
                let j = pt * gt.nodes_per_panel + b - self.t_range.start;
                out.push((i * nts + j, wa * wb));
            }
        }
        out
    }

    pub fn interpolate(&self, values: &[f64], x: f64, t: f64) -> f64 {
        self.stencil(x, t)
            .into_iter()
            .map(|(k, w)| w * values[k])
            .sum()
    }
}

/// Nodal samples of a function on a full [`Grid2D`].
#[derive(Debug, Clone)]
pub struct DiscreteFunction {
    pub grid: Arc<Grid2D>,
    pub values: Vec<f64>,
}

impl DiscreteFunction {
    pub fn new(grid: &Arc<Grid2D>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Domain(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &Arc<Grid2D>) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: &Arc<Grid2D>, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            grid: grid.clone(),
            values: grid.sample(f),
        }
    }

    pub fn integral(&self) -> f64 {
        self.grid
            .weights
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        inner_product(self, self).map(f64::sqrt).unwrap_or(0.0)
    }

    /// Value of the per-panel polynomial interpolant at `(x, t)`.
    pub fn interpolate_point(&self, x: f64, t: f64) -> f64 {
        SubGrid::full(&self.grid).interpolate(&self.values, x, t)
    }
}

pub fn same_grid(a: &Arc<Grid2D>, b: &Arc<Grid2D>) -> bool {
    Arc::ptr_eq(a, b)
        || (a.gx.panels == b.gx.panels
            && a.gx.nodes_per_panel == b.gx.nodes_per_panel
            && a.gt.panels == b.gt.panels
            && a.gt.nodes_per_panel == b.gt.nodes_per_panel)
}

pub fn inner_product(f: &DiscreteFunction, g: &DiscreteFunction) -> Result<f64> {
    if !same_grid(&f.grid, &g.grid) {
        return Err(Error::Domain("functions live on different grids".into()));
    }
    Ok(f.grid
        .weights
        .iter()
        .zip(&f.values)
        .zip(&g.values)
        .map(|((w, a), b)| w * a * b)
        .sum())
}

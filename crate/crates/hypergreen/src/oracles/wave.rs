//! Green's function of `u_tt − c² u_xx` on `[0,1]` with homogeneous Dirichlet
//! conditions, by the method of images.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, SubGrid};
use crate::linalg::scale_rows;

use super::SolutionOperator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveSpec {
    /// Wave speed; the coefficient is `a = c²`.
    pub c: f64,
    /// Image pairs `n ∈ [−images, images]` summed on each side.
    pub images: usize,
}

impl WaveSpec {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Config(format!(
                "wave speed must be positive, got {c}"
            )));
        }
        Ok(Self {
            c,
            images: c.ceil() as usize + 1,
        })
    }

    pub fn with_images(self, images: usize) -> Result<Self> {
        let min = self.c.ceil() as usize + 1;
        if images < min {
            return Err(Error::Config(format!(
                "need at least {min} images for c = {}, got {images}",
                self.c
            )));
        }
        Ok(Self { images, ..self })
    }
}

/// Free-space kernel in units of `1/(4c)`: 2 inside the cone, 1 on its edge.
fn free_space_quarters(z: f64, reach: f64) -> i64 {
    let d = z.abs();
    if d < reach {
        2
    } else if d == reach {
        1
    } else {
        0
    }
}

/// `G(x,t; y,s)`: sum of odd images of the free-space kernel `1/(2c)·χ(|x−y| < c(t−s))`.
pub fn exact_wave_green_value(spec: &WaveSpec, x: f64, t: f64, y: f64, s: f64) -> f64 {
    let tau = t - s;
    if tau <= 0.0 {
        return 0.0;
    }
    let reach = spec.c * tau;
    let n = spec.images as i64;
    let mut quarters = 0i64;
    for k in -n..=n {
        let shift = 2.0 * k as f64;
        quarters += free_space_quarters(x - (y + shift), reach);
        quarters -= free_space_quarters(x - (shift - y), reach);
    }
    quarters as f64 / (4.0 * spec.c)
}

/// d'Alembert solution with `u(x,0) = 0`, `u_t(x,0) = χ_[lo,hi](x)` on the
/// whole line, `u = |[x−ct, x+ct] ∩ [lo,hi]| / (2c)`. `None` once the
/// domain of dependence reaches a wall.
pub fn dalembert_indicator(c: f64, lo: f64, hi: f64, x: f64, t: f64) -> Option<f64> {
    let (a, b) = (x - c * t, x + c * t);
    if a < 0.0 || b > 1.0 {
        return None;
    }
    Some((b.min(hi) - a.max(lo)).max(0.0) / (2.0 * c))
}

/// Exact wave solution operator with the kernel tabulated on the grid.
pub struct ExactWave {
    pub spec: WaveSpec,
    grid: Arc<Grid2D>,
    /// `kernel[(i, j)] = G(z_i; z_j)`.
    kernel: DMatrix<f64>,
}

impl ExactWave {
    pub fn new(spec: WaveSpec, grid: &Arc<Grid2D>) -> Self {
        let m = grid.len();
        let pts: Vec<(f64, f64)> = (0..m).map(|k| grid.point(k)).collect();
        let kernel = DMatrix::from_fn(m, m, |i, j| {
            exact_wave_green_value(&spec, pts[i].0, pts[i].1, pts[j].0, pts[j].1)
        });
        Self {
            spec,
            grid: grid.clone(),
            kernel,
        }
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    /// Kernel block `G[X, Y]`.
    pub fn kernel_block(&self, output: &SubGrid, input: &SubGrid) -> DMatrix<f64> {
        DMatrix::from_fn(output.len(), input.len(), |a, b| {
            self.kernel[(output.indices[a], input.indices[b])]
        })
    }
}

impl SolutionOperator for ExactWave {
    fn grid(&self) -> &Arc<Grid2D> {
        &self.grid
    }

    fn label(&self) -> String {
        format!("exact-wave(c={})", self.spec.c)
    }

    fn apply_full(&self, f: &DMatrix<f64>, adjoint: bool) -> Result<DMatrix<f64>> {
        let mut wf = f.clone();
        scale_rows(&mut wf, &self.grid.weights);
        Ok(if adjoint {
            self.kernel.tr_mul(&wf)
        } else {
            &self.kernel * wf
        })
    }

    fn apply_block(
        &self,
        output: &SubGrid,
        input: &SubGrid,
        f: &DMatrix<f64>,
        adjoint: bool,
    ) -> Result<DMatrix<f64>> {
        if output.is_full() && input.is_full() {
            return self.apply_full(f, adjoint);
        }
        let g = self.kernel_block(output, input);
        let mut wf = f.clone();
        if adjoint {
            scale_rows(&mut wf, &output.weights);
            Ok(g.tr_mul(&wf))
        } else {
            scale_rows(&mut wf, &input.weights);
            Ok(g * wf)
        }
    }
}

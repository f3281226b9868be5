//! Operators `F = Σ σ_i u_i ⟨v_i, ·⟩` with prescribed singular triplets.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, SubGrid};
use crate::linalg::{scale_rows, singular_values, Quasimatrix};
use crate::seeds;

use super::SolutionOperator;

#[derive(Debug, Clone)]
pub struct SyntheticOperator {
    grid: Arc<Grid2D>,
    pub sigmas: Vec<f64>,
    /// Left singular functions (weighted-orthonormal columns).
    pub u: Quasimatrix,
    /// Right singular functions (weighted-orthonormal columns).
    pub v: Quasimatrix,
}

fn check_sigmas(sigmas: &[f64]) -> Result<()> {
    if sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(Error::Config(
            "singular values must be finite and nonnegative".into(),
        ));
    }
    if sigmas.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Config(
            "singular values must be sorted descending".into(),
        ));
    }
    Ok(())
}

fn random_orthonormal(domain: &Arc<SubGrid>, r: usize, seed: u64) -> Result<Quasimatrix> {
    let mut rng = seeds::rng(seed, &[]);
    let data = DMatrix::from_fn(domain.len(), r, |_, _| StandardNormal.sample(&mut rng));
    let q = Quasimatrix {
        domain: domain.clone(),
        data,
    }
    .orthonormalize();
    if q.ncols() != r {
        return Err(Error::Numerical(format!(
            "random factor lost rank: {} of {r} columns",
            q.ncols()
        )));
    }
    Ok(q)
}

/// Random weighted-orthonormal factors with the given singular values.
pub fn make_synthetic_operator(
    sigmas: &[f64],
    grid: &Arc<Grid2D>,
    seed: u64,
) -> Result<SyntheticOperator> {
    check_sigmas(sigmas)?;
    let r = sigmas.len();
    if r > grid.len() {
        return Err(Error::Config(format!(
            "rank {r} exceeds grid size {}",
            grid.len()
        )));
    }
    let d = Arc::new(SubGrid::full(grid));
    let u = random_orthonormal(&d, r, seeds::derive_seed(seed, &[0]))?;
    let v = random_orthonormal(&d, r, seeds::derive_seed(seed, &[1]))?;
    SyntheticOperator::from_factors(grid, sigmas.to_vec(), u, v)
}

impl SyntheticOperator {
    /// Factors must be weighted-orthonormal on the full grid (within 1e-10).
    pub fn from_factors(
        grid: &Arc<Grid2D>,
        sigmas: Vec<f64>,
        u: Quasimatrix,
        v: Quasimatrix,
    ) -> Result<Self> {
        check_sigmas(&sigmas)?;
        for (name, f) in [("left", &u), ("right", &v)] {
            if !f.domain.is_full() || f.domain.len() != grid.len() {
                return Err(Error::Domain(format!(
                    "{name} factor must live on the full grid"
                )));
            }
            if f.ncols() != sigmas.len() {
                return Err(Error::Domain(format!(
                    "{name} factor has {} columns for {} values",
                    f.ncols(),
                    sigmas.len()
                )));
            }
            let g = f.gram();
            let dev = (g - DMatrix::identity(f.ncols(), f.ncols())).abs().max();
            if f.ncols() > 0 && dev > 1e-10 {
                return Err(Error::Numerical(format!(
                    "{name} factor is not orthonormal (deviation {dev:e})"
                )));
            }
        }
        Ok(Self {
            grid: grid.clone(),
            sigmas,
            u,
            v,
        })
    }

    /// The zero operator.
    pub fn zero(grid: &Arc<Grid2D>) -> Self {
        let d = Arc::new(SubGrid::full(grid));
        Self {
            grid: grid.clone(),
            sigmas: vec![],
            u: Quasimatrix::zeros(&d, 0),
            v: Quasimatrix::zeros(&d, 0),
        }
    }

    pub fn rank(&self) -> usize {
        self.sigmas.len()
    }

    /// Right singular functions `v_1..v_k`.
    pub fn right_factors(&self, k: usize) -> Quasimatrix {
        let k = k.min(self.rank());
        Quasimatrix {
            domain: self.v.domain.clone(),
            data: self.v.data.columns(0, k).into_owned(),
        }
    }

    /// `σ_j`, or 0 beyond the rank.
    pub fn sigma(&self, j: usize) -> f64 {
        self.sigmas.get(j).copied().unwrap_or(0.0)
    }

    /// Dense kernel `G[i, j] = Σ σ_r u_r(z_i) v_r(z_j)`.
    pub fn kernel(&self) -> DMatrix<f64> {
        let mut us = self.u.data.clone();
        for (j, s) in self.sigmas.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.data.transpose()
    }

    /// `‖(I − QQ*)F‖` for a weighted-orthonormal `Q` on the full grid.
    pub fn projection_error(&self, q: &Quasimatrix) -> Result<f64> {
        if self.rank() == 0 {
            return Ok(0.0);
        }
        let resid = &self.u.data - &q.data * q.inner(&self.u);
        let mut b = resid;
        for (j, s) in self.sigmas.iter().enumerate() {
            b.column_mut(j).scale_mut(*s);
        }
        scale_rows(&mut b, &self.u.domain.sqrt_weights);
        Ok(singular_values(&b)?.first().copied().unwrap_or(0.0))
    }

    fn rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), m.ncols(), |a, c| m[(idx[a], c)])
    }
}

impl SolutionOperator for SyntheticOperator {
    fn grid(&self) -> &Arc<Grid2D> {
        &self.grid
    }

    fn label(&self) -> String {
        format!("synthetic(rank={})", self.rank())
    }

    fn apply_full(&self, f: &DMatrix<f64>, adjoint: bool) -> Result<DMatrix<f64>> {
        let full = SubGrid::full(&self.grid);
        self.apply_block(&full, &full, f, adjoint)
    }

    fn apply_block(
        &self,
        output: &SubGrid,
        input: &SubGrid,
        f: &DMatrix<f64>,
        adjoint: bool,
    ) -> Result<DMatrix<f64>> {
        let (uo, vi) = (
            Self::rows(&self.u.data, &output.indices),
            Self::rows(&self.v.data, &input.indices),
        );
        let sig = DVector::from_column_slice(&self.sigmas);
        let mut wf = f.clone();
        if adjoint {
            scale_rows(&mut wf, &output.weights);
            let mut c = uo.tr_mul(&wf);
            for (mut row, s) in c.row_iter_mut().zip(sig.iter()) {
                row *= *s;
            }
            Ok(vi * c)
        } else {
            scale_rows(&mut wf, &input.weights);
            let mut c = vi.tr_mul(&wf);
            for (mut row, s) in c.row_iter_mut().zip(sig.iter()) {
                row *= *s;
            }
            Ok(uo * c)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{kernel_spectrum, CovarianceKernel};
    use crate::grid::build_grid;

    #[test]
    fn adjoint_consistency() {
        let grid = build_grid(2, 4).unwrap();
        let op = make_synthetic_operator(&[3.0, 2.0, 0.5], &grid, 11).unwrap();
        let f = DMatrix::from_fn(grid.len(), 1, |i, _| (i as f64 * 0.37).sin());
        let g = DMatrix::from_fn(grid.len(), 1, |i, _| (i as f64 * 0.11).cos());
        let ip = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
            grid.weights
                .iter()
                .zip(a.iter())
                .zip(b.iter())
                .map(|((w, x), y)| w * x * y)
                .sum::<f64>()
        };
        let lhs = ip(&op.apply_full(&f, false).unwrap(), &g);
        let rhs = ip(&f, &op.apply_full(&g, true).unwrap());
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn xi_with_eigenfunction_factors() {
        let grid = build_grid(2, 4).unwrap();
        let d = Arc::new(SubGrid::full(&grid));
        let spec = kernel_spectrum(&CovarianceKernel::default(), &d).unwrap();
        let k = 4;
        let phi = spec.eigenfunctions();
        let v = Quasimatrix {
            domain: d.clone(),
            data: phi.data.columns(0, k).into_owned(),
        };
        let (xi, _) = spec.sketch_quality(&v, spec.lambda1()).unwrap();
        let expected = spec.eigenvalues[k - 1] / spec.lambda1();
        assert!(
            (xi - expected).abs() < 1e-10 * expected.max(1e-3),
            "{xi} vs {expected}"
        );
    }

    #[test]
    fn zero_operator_and_order_checks() {
        let grid = build_grid(1, 4).unwrap();
        let z = SyntheticOperator::zero(&grid);
        let f = DMatrix::from_element(grid.len(), 2, 1.0);
        assert!(z.apply_full(&f, false).unwrap().iter().all(|v| *v == 0.0));
        assert!(make_synthetic_operator(&[1.0, 2.0], &grid, 0).is_err());
        assert!(make_synthetic_operator(&[1.0; 17], &grid, 0).is_err());
    }
}

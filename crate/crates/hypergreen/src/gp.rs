//! Gaussian-process forcing terms via the Karhunen–Loève expansion.
//!
//! The covariance operator is discretized by quadrature and symmetrized as
//! `W^{1/2} K W^{1/2}`. For the squared-exponential kernel on a rectangle the
//! matrix is a Kronecker product of two 1D factors, which keeps the
//! eigendecomposition cheap on the full grid.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::SubGrid;
use crate::linalg::Quasimatrix;
use crate::seeds;

/// Relative jitter added to the kernel diagonal in the dense route.
pub const JITTER: f64 = 1e-10;
/// Eigenvalues below this fraction of `λ₁` are dropped from the expansion.
pub const TRUNCATION: f64 = 1e-14;

pub type KernelFn = dyn Fn((f64, f64), (f64, f64)) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum CovarianceKernel {
    SquaredExponential { length_scale: f64, variance: f64 },
    Custom { func: Arc<KernelFn>, variance: f64 },
}

impl fmt::Debug for CovarianceKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SquaredExponential {
                length_scale,
                variance,
            } => f
                .debug_struct("SquaredExponential")
                .field("length_scale", length_scale)
                .field("variance", variance)
                .finish(),
            Self::Custom { variance, .. } => f
                .debug_struct("Custom")
                .field("variance", variance)
                .finish(),
        }
    }
}

impl Default for CovarianceKernel {
    fn default() -> Self {
        Self::SquaredExponential {
            length_scale: 0.1,
            variance: 1.0,
        }
    }
}

impl CovarianceKernel {
    pub fn squared_exponential(length_scale: f64, variance: f64) -> Result<Self> {
        if !(length_scale > 0.0 && length_scale.is_finite()) {
            return Err(Error::Config(format!(
                "length scale must be positive, got {length_scale}"
            )));
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::Config(format!(
                "variance must be positive, got {variance}"
            )));
        }
        Ok(Self::SquaredExponential {
            length_scale,
            variance,
        })
    }

    /// A user kernel; `variance` scales the diagonal jitter.
    pub fn custom(
        func: impl Fn((f64, f64), (f64, f64)) -> f64 + Send + Sync + 'static,
        variance: f64,
    ) -> Self {
        Self::Custom {
            func: Arc::new(func),
            variance,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::SquaredExponential { variance, .. } | Self::Custom { variance, .. } => *variance,
        }
    }

    pub fn eval(&self, z1: (f64, f64), z2: (f64, f64)) -> f64 {
        match self {
            Self::SquaredExponential {
                length_scale,
                variance,
            } => {
                let d2 = (z1.0 - z2.0).powi(2) + (z1.1 - z2.1).powi(2);
                variance * (-d2 / (2.0 * length_scale * length_scale)).exp()
            }
            Self::Custom { func, .. } => func(z1, z2),
        }
    }
}

pub fn kernel_eval(kernel: &CovarianceKernel, z1: (f64, f64), z2: (f64, f64)) -> f64 {
    kernel.eval(z1, z2)
}

#[derive(Debug, Clone)]
enum Factors {
    /// `φ_{ab}(x,t) = φx_a(x) φt_b(t)`, eigenvalue `σ² μx_a μt_b`.
    Separable {
        phix: DMatrix<f64>,
        phit: DMatrix<f64>,
        pairs: Vec<(usize, usize)>,
    },
    Dense {
        phi: DMatrix<f64>,
    },
}

/// Truncated weighted eigendecomposition of a covariance operator.
#[derive(Debug, Clone)]
pub struct KernelSpectrum {
    pub domain: Arc<SubGrid>,
    /// Retained eigenvalues, sorted descending.
    pub eigenvalues: Vec<f64>,
    /// Most negative eigenvalue seen before clipping.
    pub min_raw_eigenvalue: f64,
    factors: Factors,
}

fn weighted_eigen(k: DMatrix<f64>, w: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let s: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let a = DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| s[i] * k[(i, j)] * s[j]);
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap()
            .then(i.cmp(&j))
    });
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut phi = eig.eigenvectors.select_columns(order.iter());
    for (r, si) in s.iter().enumerate() {
        for c in 0..phi.ncols() {
            phi[(r, c)] /= si;
        }
    }
    (vals, phi)
}

pub fn kernel_spectrum(kernel: &CovarianceKernel, domain: &Arc<SubGrid>) -> Result<KernelSpectrum> {
    if domain.is_empty() {
        return Err(Error::Config(
            "kernel spectrum needs at least one node".into(),
        ));
    }
    let grid = &domain.grid;
    match kernel {
        CovarianceKernel::SquaredExponential {
            length_scale,
            variance,
        } => {
            let ell2 = 2.0 * length_scale * length_scale;
            let factor = |nodes: &[f64], weights: &[f64]| {
                let k = DMatrix::from_fn(nodes.len(), nodes.len(), |i, j| {
                    (-(nodes[i] - nodes[j]).powi(2) / ell2).exp()
                });
                weighted_eigen(k, weights)
            };
            let (mux, phix) = factor(
                &grid.gx.nodes[domain.x_range.clone()],
                &grid.gx.weights[domain.x_range.clone()],
            );
            let (mut mut_, phit) = factor(
                &grid.gt.nodes[domain.t_range.clone()],
                &grid.gt.weights[domain.t_range.clone()],
            );
            let mut mux = mux;
            let (xmin, xmax) = (*mux.last().unwrap(), mux[0]);
            let (tmin, tmax) = (*mut_.last().unwrap(), mut_[0]);
            let min_raw = variance * (xmin * tmax).min(xmax * tmin).min(xmin * tmin);
            for v in mux.iter_mut().chain(mut_.iter_mut()) {
                *v = v.max(0.0);
            }
            let lambda1 = variance * mux[0] * mut_[0];
            if !(lambda1 > 0.0) {
                return Err(Error::Numerical("kernel has no positive eigenvalue".into()));
            }
            let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
            for (a, ma) in mux.iter().enumerate() {
                for (b, mb) in mut_.iter().enumerate() {
                    let lam = variance * ma * mb;
                    if lam > TRUNCATION * lambda1 {
                        pairs.push((a, b, lam));
                    }
                }
            }
            pairs.sort_by(|p, q| {
                q.2.partial_cmp(&p.2)
                    .unwrap()
                    .then((p.0, p.1).cmp(&(q.0, q.1)))
            });
            let eigenvalues = pairs.iter().map(|p| p.2).collect();
            let pairs = pairs.into_iter().map(|p| (p.0, p.1)).collect();
            Ok(KernelSpectrum {
                domain: domain.clone(),
                eigenvalues,
                min_raw_eigenvalue: min_raw,
                factors: Factors::Separable { phix, phit, pairs },
            })
        }
        CovarianceKernel::Custom { func, variance } => {
            let n = domain.len();
            let pts: Vec<(f64, f64)> = (0..n).map(|k| domain.point(k)).collect();
            let mut k = DMatrix::from_fn(n, n, |i, j| func(pts[i], pts[j]));
            let asym = (&k - k.transpose()).abs().max();
            if asym > 1e-12 * k.abs().max().max(1.0) {
                return Err(Error::Numerical(format!(
                    "kernel is not symmetric (defect {asym:e})"
                )));
            }
            let jitter = JITTER * variance;
            for i in 0..n {
                k[(i, i)] += jitter;
            }
            let (vals, phi) = weighted_eigen(k, &domain.weights);
            let lambda1 = vals[0];
            let min_raw = *vals.last().unwrap();
            if !(lambda1 > 0.0) {
                return Err(Error::Numerical("kernel has no positive eigenvalue".into()));
            }
            if min_raw < -1e-8 * lambda1 {
                return Err(Error::Numerical(format!(
                    "kernel matrix not positive semidefinite after jitter {jitter:e}: eigenvalue {min_raw:e}"
                )));
            }
            let keep = vals
                .iter()
                .take_while(|v| **v > TRUNCATION * lambda1)
                .count();
            Ok(KernelSpectrum {
                domain: domain.clone(),
                eigenvalues: vals[..keep].to_vec(),
                min_raw_eigenvalue: min_raw,
                factors: Factors::Dense {
                    phi: phi.columns(0, keep).into_owned(),
                },
            })
        }
    }
}

impl KernelSpectrum {
    pub fn lambda1(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// The retained eigenfunctions as columns (weighted-orthonormal).
    pub fn eigenfunctions(&self) -> Quasimatrix {
        let d = &self.domain;
        match &self.factors {
            Factors::Dense { phi } => Quasimatrix {
                domain: d.clone(),
                data: phi.clone(),
            },
            Factors::Separable { phix, phit, pairs } => {
                let nts = d.nt();
                let data = DMatrix::from_fn(d.len(), pairs.len(), |k, c| {
                    let (a, b) = pairs[c];
                    phix[(k / nts, a)] * phit[(k % nts, b)]
                });
                Quasimatrix {
                    domain: d.clone(),
                    data,
                }
            }
        }
    }

    /// Coefficients `⟨φ_i, v_j⟩` of every column of `v` in the eigenbasis.
    pub fn coefficients(&self, v: &Quasimatrix) -> DMatrix<f64> {
        let d = &self.domain;
        match &self.factors {
            Factors::Dense { phi } => Quasimatrix {
                domain: d.clone(),
                data: phi.clone(),
            }
            .inner(v),
            Factors::Separable { phix, phit, pairs } => {
                let grid = &d.grid;
                let wx = &grid.gx.weights[d.x_range.clone()];
                let wt = &grid.gt.weights[d.t_range.clone()];
                let (nxs, nts) = (d.x_range.len(), nts_of(d));
                let mut px = phix.clone();
                for (r, w) in wx.iter().enumerate() {
                    px.row_mut(r).scale_mut(*w);
                }
                let mut pt = phit.clone();
                for (r, w) in wt.iter().enumerate() {
                    pt.row_mut(r).scale_mut(*w);
                }
                let mut out = DMatrix::zeros(pairs.len(), v.ncols());
                for j in 0..v.ncols() {
                    let vm = DMatrix::from_fn(nxs, nts, |a, b| v.data[(a * nts + b, j)]);
                    let c = px.transpose() * vm * &pt;
                    for (i, &(a, b)) in pairs.iter().enumerate() {
                        out[(i, j)] = c[(a, b)];
                    }
                }
                out
            }
        }
    }

    /// `m` independent draws `Σ √λ_i c_i φ_i`; column `j` uses its own stream
    /// derived from `(seed, j)`.
    pub fn sample(&self, m: usize, seed: u64) -> Quasimatrix {
        let d = &self.domain;
        let sq: Vec<f64> = self.eigenvalues.iter().map(|l| l.sqrt()).collect();
        let mut data = DMatrix::zeros(d.len(), m);
        for j in 0..m {
            let mut rng = seeds::rng(seed, &[j as u64]);
            let z: Vec<f64> = sq
                .iter()
                .map(|s| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    s * g
                })
                .collect();
            match &self.factors {
                Factors::Dense { phi } => {
                    let col = phi * nalgebra::DVector::from_vec(z);
                    data.set_column(j, &col);
                }
                Factors::Separable { phix, phit, pairs } => {
                    let mut c = DMatrix::zeros(phix.ncols(), phit.ncols());
                    for (&(a, b), v) in pairs.iter().zip(&z) {
                        c[(a, b)] = *v;
                    }
                    let f = phix * c * phit.transpose();
                    let nts = nts_of(d);
                    for a in 0..f.nrows() {
                        for b in 0..nts {
                            data[(a * nts + b, j)] = f[(a, b)];
                        }
                    }
                }
            }
        }
        Quasimatrix {
            domain: d.clone(),
            data,
        }
    }

    /// Sketch-quality constants `(ξ_k, γ_k)` for right factors `v1`
    /// (weighted-orthonormal, `k` columns), relative to `lambda1`.
    pub fn sketch_quality(&self, v1: &Quasimatrix, lambda1: f64) -> Result<(f64, f64)> {
        let a = self.coefficients(v1);
        let k = v1.ncols();
        let mut c11 = DMatrix::zeros(k, k);
        for (i, lam) in self.eigenvalues.iter().enumerate() {
            let row = a.row(i);
            c11 += *lam * row.transpose() * row;
        }
        let eig = SymmetricEigen::new(c11);
        let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        if !(min > 0.0) {
            return Ok((0.0, 0.0));
        }
        let trace_inv: f64 = eig.eigenvalues.iter().map(|v| 1.0 / v).sum();
        Ok((min / lambda1, k as f64 / (lambda1 * trace_inv)))
    }
}

fn nts_of(d: &SubGrid) -> usize {
    d.t_range.len()
}

pub fn sample_gp(
    kernel: &CovarianceKernel,
    domain: &Arc<SubGrid>,
    m: usize,
    seed: u64,
) -> Result<Quasimatrix> {
    if m == 0 {
        return Err(Error::Config("sample count must be >= 1".into()));
    }
    Ok(kernel_spectrum(kernel, domain)?.sample(m, seed))
}

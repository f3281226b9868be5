//! Randomized range finding, projection and singular-value estimation for
//! operators reachable only through `apply` and `apply_adjoint`.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::SubGrid;
use crate::linalg::{singular_values, sorted_svd, Quasimatrix, RANK_TOL};

/// A linear map `L²(input) → L²(output)` known only through its action.
pub trait LinearOperator: Sync {
    fn input(&self) -> &Arc<SubGrid>;
    fn output(&self) -> &Arc<SubGrid>;
    fn apply(&self, f: &Quasimatrix) -> Result<Quasimatrix>;
    fn apply_adjoint(&self, g: &Quasimatrix) -> Result<Quasimatrix>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsvdConfig {
    pub k: usize,
    pub p: usize,
    pub q: usize,
    pub s: f64,
    pub t: f64,
    pub seed: u64,
}

impl RsvdConfig {
    /// Parameters of the simplified tail bound: `p = k`, `s = √(2k)`, `t = e`.
    pub fn simple(k: usize, q: usize, seed: u64) -> Self {
        Self {
            k,
            p: k,
            q,
            s: (2.0 * k as f64).sqrt(),
            t: std::f64::consts::E,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 || self.p < 2 {
            return Err(Error::Config(format!(
                "need k >= 2 and p >= 2, got k={} p={}",
                self.k, self.p
            )));
        }
        if self.s < 1.0 || self.t < 1.0 {
            return Err(Error::Config(format!(
                "need s, t >= 1, got s={} t={}",
                self.s, self.t
            )));
        }
        Ok(())
    }

    pub fn columns(&self) -> usize {
        self.k + self.p
    }

    /// Failure probability allowed by the tail bound, `2t^{-p} + e^{-s²/2}`.
    pub fn failure_probability(&self) -> f64 {
        2.0 * self.t.powi(-(self.p as i32)) + (-self.s * self.s / 2.0).exp()
    }
}

pub fn orthonormalize(a: &Quasimatrix) -> Quasimatrix {
    a.orthonormalize()
}

/// Subspace iteration for `(FF*)^q F Ω`, re-orthonormalizing after every
/// application. Keeps the column count (zero columns for lost directions) so
/// that exactly `(2q+1)·m` queries are spent.
fn range_padded(op: &dyn LinearOperator, omega: &Quasimatrix, q: usize) -> Result<Quasimatrix> {
    let mut z = op.apply(omega)?;
    for _ in 0..q {
        let w = op.apply_adjoint(&z.orthonormalize_padded())?;
        z = op.apply(&w.orthonormalize_padded())?;
    }
    Ok(z.orthonormalize_padded())
}

/// Orthonormal basis of the range of `(FF*)^q F Ω`.
pub fn randomized_range(
    op: &dyn LinearOperator,
    omega: &Quasimatrix,
    q: usize,
) -> Result<Quasimatrix> {
    if omega.ncols() == 0 {
        return Err(Error::Config("sketch needs at least one column".into()));
    }
    Ok(range_padded(op, omega, q)?.without_zero_columns())
}

/// Low-rank factor pair `F̃ = Q Cᵀ W`, i.e. `F̃ f = Σ_i Q_i ⟨C_i, f⟩`.
#[derive(Debug, Clone)]
pub struct LowRankFactors {
    /// Orthonormal columns on the output domain.
    pub q: Quasimatrix,
    /// `F* Q` on the input domain.
    pub c: Quasimatrix,
}

impl LowRankFactors {
    pub fn apply(&self, f: &Quasimatrix) -> Quasimatrix {
        let coeffs = self.c.inner(f);
        Quasimatrix {
            domain: self.q.domain.clone(),
            data: &self.q.data * coeffs,
        }
    }

    pub fn rank(&self) -> usize {
        self.q.ncols()
    }
}

/// `F̃ = P_Q F` from `cols(Q)` adjoint queries.
pub fn project_approximant(op: &dyn LinearOperator, q: &Quasimatrix) -> Result<LowRankFactors> {
    let c = op.apply_adjoint(q)?;
    Ok(LowRankFactors { q: q.clone(), c })
}

#[derive(Debug, Clone)]
pub struct SpectralEstimate {
    /// `σ̂_1 ≥ … ≥ σ̂_r`, `r ≤ k`.
    pub sigma: Vec<f64>,
    /// Orthonormal basis of `range((FF*)^q FΩ)` with lost directions removed.
    pub range: Quasimatrix,
    /// Number of sketch columns (`range` plus lost directions).
    pub sketch_width: usize,
    /// Dominant left singular functions of `P_Z H`.
    pub u_k: Quasimatrix,
    pub queries: u64,
    /// Fewer than `k` singular values could be resolved.
    pub deficient: bool,
}

fn normalize(a: &mut Quasimatrix) {
    let n = a.frobenius_norm();
    if n > 0.0 && n.is_finite() {
        a.scale(1.0 / n);
    }
}

/// Estimates `σ_1..σ_k` of `F` as the singular values of `Ũ_k* F`, where
/// `Ũ_k` spans the dominant left singular subspace of `P_Z (FF*)^q F`.
///
/// Spends `(2q+1)m + (2q+1)m + k` queries for an `m`-column sketch.
pub fn estimate_singular_values(
    op: &dyn LinearOperator,
    omega: &Quasimatrix,
    k: usize,
    q: usize,
) -> Result<SpectralEstimate> {
    let m = omega.ncols();
    if m < k || k == 0 {
        return Err(Error::Config(format!(
            "need 1 <= k <= sketch width, got k={k}, m={m}"
        )));
    }
    let qz = range_padded(op, omega, q)?;

    // H* Q_Z = (F*F)^q F* Q_Z; only its row space matters, so scalar
    // rescaling between applications is harmless.
    let mut y = op.apply_adjoint(&qz)?;
    normalize(&mut y);
    for _ in 0..q {
        let mut x = op.apply(&y)?;
        normalize(&mut x);
        y = op.apply_adjoint(&x)?;
        normalize(&mut y);
    }

    // P_Z H = Q_Z (Q_Z* H) and Q_Z* H = yᵀ W_Y, whose weighted embedding is (S_Y y)ᵀ.
    let (ub, sb, _) = sorted_svd(&y.weighted().transpose())?;
    let r = match sb.first() {
        Some(&s1) if s1 > 0.0 => sb.iter().take_while(|s| **s > RANK_TOL * s1).count(),
        _ => 0,
    };
    let kk = k.min(r);
    let mut uk = Quasimatrix::zeros(op.output(), k);
    if kk > 0 {
        let lead = &qz.data * ub.columns(0, kk);
        uk.data.columns_mut(0, kk).copy_from(&lead);
    }
    let r_mat = op.apply_adjoint(&uk)?;
    let mut sigma = singular_values(&r_mat.weighted())?;
    sigma.truncate(kk);

    let range = qz.without_zero_columns();
    Ok(SpectralEstimate {
        sigma,
        range,
        sketch_width: m,
        u_k: Quasimatrix {
            domain: uk.domain.clone(),
            data: uk.data.columns(0, kk).into_owned(),
        },
        queries: (2 * (2 * q + 1) * m + k) as u64,
        deficient: kk < k,
    })
}

/// `[(σ_k/σ_{k+1})^{2q+1} − 1]^{-1}`.
pub fn delta_q(sigma_k: f64, sigma_k1: f64, q: usize) -> Result<f64> {
    if !(sigma_k1 > 0.0 && sigma_k > sigma_k1) {
        return Err(Error::Gap(format!(
            "need sigma_k > sigma_k+1 > 0, got {sigma_k} and {sigma_k1}"
        )));
    }
    Ok(1.0 / ((sigma_k / sigma_k1).powi(2 * q as i32 + 1) - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFactorKind {
    /// Multiplier of `σ_{k+1}` in the expected-error bound.
    Expectation,
    /// `A_{k,p}(s,t)` of the tail bound; requires `p ≥ 4`.
    Tail,
    /// `A_k`, the tail bound evaluated at `p = k`, `s = √(2k)`, `t = e`.
    Simple,
}

/// Inputs of the rSVD error factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorParams {
    pub k: usize,
    pub p: usize,
    pub s: f64,
    pub t: f64,
    /// `Tr(K)/λ₁` of the sampling kernel.
    pub trace_ratio: f64,
    pub xi: f64,
    pub gamma: f64,
}

pub fn error_factor(kind: ErrorFactorKind, a: &FactorParams) -> Result<f64> {
    if !(a.xi > 0.0 && a.gamma > 0.0 && a.trace_ratio > 0.0) || a.k == 0 {
        return Err(Error::Config(format!(
            "error factor needs positive parameters, got {a:?}"
        )));
    }
    let (k, p) = (a.k as f64, a.p as f64);
    let e = std::f64::consts::E;
    Ok(match kind {
        ErrorFactorKind::Expectation => {
            if a.p < 2 {
                return Err(Error::Config("expectation bound needs p >= 2".into()));
            }
            1.0 + 1.0 / a.xi
                + (a.trace_ratio / a.xi).sqrt() * e * (k + p).sqrt() / p
                + (k / (a.gamma * (p + 1.0))).sqrt()
        }
        ErrorFactorKind::Tail => {
            if a.p < 4 {
                return Err(Error::Config("tail bound needs p >= 4".into()));
            }
            1.0 + 1.0 / a.xi
                + e / a.xi.sqrt() * (a.s + a.trace_ratio.sqrt()) * (k + p).sqrt() / (p + 1.0) * a.t
                + (k / (a.gamma * (p + 1.0))).sqrt() * a.t
        }
        ErrorFactorKind::Simple => 1.0 + (19.0 + 11.0 * (a.trace_ratio / k).sqrt()) / a.xi,
    })
}

/// Right-hand side of the singular-value estimate, `2δA/(1−δA)·‖F‖`;
/// `None` when `δA ≥ 1` and the estimate makes no claim.
pub fn singular_value_error_bound(delta: f64, a: f64, norm: f64) -> Option<f64> {
    let da = delta * a;
    (da < 1.0).then(|| 2.0 * da / (1.0 - da) * norm)
}

/// Gap information for choosing the power exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gap {
    /// Known ratio `σ_k/σ_{k+1}`.
    Known(f64),
    Unknown,
}

/// Power exponent: from the gap when known, else `⌈ln(1/ε)⌉`.
pub fn choose_power_exponent(eps: f64, a: f64, gap: Gap) -> Result<usize> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Config(format!(
            "eps must lie in (0, 1/2), got {eps}"
        )));
    }
    match gap {
        Gap::Unknown => Ok((1.0 / eps).ln().ceil() as usize),
        Gap::Known(g) => {
            if !(g > 1.0) {
                return Err(Error::Gap(format!(
                    "singular value gap must exceed 1, got {g}"
                )));
            }
            if a < 1.0 {
                return Err(Error::Config(format!("error factor must be >= 1, got {a}")));
            }
            if g.is_infinite() {
                return Ok(0);
            }
            let v = 0.5 * ((1.0 + a + 2.0 * a / eps).ln() / g.ln() - 1.0);
            Ok(v.ceil().max(0.0) as usize)
        }
    }
}

/// Weighted singular values of a dense kernel block `G[X, Y]`: the operator
/// `f ↦ Σ_j w_j G(·, z_j) f_j` seen from `L²(Y)` to `L²(X)`.
pub fn block_singular_values(
    kernel: &DMatrix<f64>,
    output: &SubGrid,
    input: &SubGrid,
) -> Result<Vec<f64>> {
    let b = DMatrix::from_fn(output.len(), input.len(), |a, c| {
        output.sqrt_weights[a] * kernel[(a, c)] * input.sqrt_weights[c]
    });
    singular_values(&b)
}

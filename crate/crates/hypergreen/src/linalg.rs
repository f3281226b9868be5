//! Quasimatrices: columns of discrete functions with weighted inner products.
//!
//! Every factorization works in the `W^{1/2}`-scaled embedding, where the
//! weighted inner product becomes the Euclidean one.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::SubGrid;

/// Relative tolerance below which an orthogonalized column is dropped.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Quasimatrix {
    pub domain: Arc<SubGrid>,
    pub data: DMatrix<f64>,
}

impl Quasimatrix {
    pub fn new(domain: &Arc<SubGrid>, data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() != domain.len() {
            return Err(Error::Domain(format!(
                "quasimatrix has {} rows, domain has {} nodes",
                data.nrows(),
                domain.len()
            )));
        }
        Ok(Self {
            domain: domain.clone(),
            data,
        })
    }

    pub fn zeros(domain: &Arc<SubGrid>, m: usize) -> Self {
        Self {
            domain: domain.clone(),
            data: DMatrix::zeros(domain.len(), m),
        }
    }

    pub fn from_columns(domain: &Arc<SubGrid>, cols: &[Vec<f64>]) -> Result<Self> {
        let n = domain.len();
        let mut data = DMatrix::zeros(n, cols.len());
        for (j, c) in cols.iter().enumerate() {
            if c.len() != n {
                return Err(Error::Domain(format!(
                    "column {j} has {} values, expected {n}",
                    c.len()
                )));
            }
            data.column_mut(j).copy_from_slice(c);
        }
        Ok(Self {
            domain: domain.clone(),
            data,
        })
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data.column(j).iter().copied().collect()
    }

    /// `diag(√w) · data`.
    pub fn weighted(&self) -> DMatrix<f64> {
        let mut b = self.data.clone();
        scale_rows(&mut b, &self.domain.sqrt_weights);
        b
    }

    /// Inverse of [`Quasimatrix::weighted`].
    pub fn from_weighted(domain: &Arc<SubGrid>, mut b: DMatrix<f64>) -> Self {
        let inv: Vec<f64> = domain.sqrt_weights.iter().map(|s| 1.0 / s).collect();
        scale_rows(&mut b, &inv);
        Self {
            domain: domain.clone(),
            data: b,
        }
    }

    /// Matrix of weighted inner products `⟨self_i, other_j⟩`.
    pub fn inner(&self, other: &Quasimatrix) -> DMatrix<f64> {
        let mut wo = other.data.clone();
        scale_rows(&mut wo, &self.domain.weights);
        self.data.transpose() * wo
    }

    pub fn gram(&self) -> DMatrix<f64> {
        self.inner(self)
    }

    /// Weighted orthonormal basis of the column span; dependent columns dropped.
    pub fn orthonormalize(&self) -> Quasimatrix {
        let (b, kept) = cgs2(self.weighted());
        let cols: Vec<usize> = (0..kept.len()).filter(|&j| kept[j]).collect();
        let b = b.select_columns(cols.iter());
        Self::from_weighted(&self.domain, b)
    }

    /// Like [`Quasimatrix::orthonormalize`] but keeps the column count,
    /// leaving zero columns where dependent columns were dropped.
    pub fn orthonormalize_padded(&self) -> Quasimatrix {
        let (b, _) = cgs2(self.weighted());
        Self::from_weighted(&self.domain, b)
    }

    /// Removes columns that are exactly zero.
    pub fn without_zero_columns(&self) -> Quasimatrix {
        let cols: Vec<usize> = (0..self.ncols())
            .filter(|&j| self.data.column(j).iter().any(|v| *v != 0.0))
            .collect();
        Self {
            domain: self.domain.clone(),
            data: self.data.select_columns(cols.iter()),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.weighted().norm()
    }

    pub fn scale(&mut self, s: f64) {
        self.data *= s;
    }
}

pub fn scale_rows(m: &mut DMatrix<f64>, s: &[f64]) {
    for mut col in m.column_iter_mut() {
        for (v, f) in col.iter_mut().zip(s) {
            *v *= f;
        }
    }
}

/// Classical Gram–Schmidt with reorthogonalization (Euclidean). Returns the
/// orthonormal columns (zero where dropped) and the kept mask.
fn cgs2(mut b: DMatrix<f64>) -> (DMatrix<f64>, Vec<bool>) {
    let m = b.ncols();
    let max_norm = (0..m).map(|j| b.column(j).norm()).fold(0.0, f64::max);
    let mut kept = vec![false; m];
    if max_norm == 0.0 || !max_norm.is_finite() {
        b.fill(0.0);
        return (b, kept);
    }
    for j in 0..m {
        let mut v: DVector<f64> = b.column(j).into();
        for _ in 0..2 {
            for i in 0..j {
                if kept[i] {
                    let qi = b.column(i);
                    let c = qi.dot(&v);
                    v.axpy(-c, &qi, 1.0);
                }
            }
        }
        let nv = v.norm();
        if nv > RANK_TOL * max_norm {
            b.set_column(j, &(v / nv));
            kept[j] = true;
        } else {
            b.column_mut(j).fill(0.0);
        }
    }
    (b, kept)
}

/// Thin SVD `a = U diag(s) Vᵀ` with singular values sorted descending and the
/// first nonzero entry of every left singular vector positive.
pub fn sorted_svd(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return Ok((DMatrix::zeros(r, 0), Vec::new(), DMatrix::zeros(c, 0)));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entries in SVD input".into()));
    }
    let (u, s, v) = if r >= c {
        let svd = a.clone().svd(true, true);
        (
            svd.u.unwrap(),
            svd.singular_values,
            svd.v_t.unwrap().transpose(),
        )
    } else {
        let svd = a.transpose().svd(true, true);
        (
            svd.v_t.unwrap().transpose(),
            svd.singular_values,
            svd.u.unwrap(),
        )
    };
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| {
        s[j].partial_cmp(&s[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut uo = u.select_columns(order.iter());
    let mut vo = v.select_columns(order.iter());
    for j in 0..order.len() {
        if let Some(first) = uo.column(j).iter().find(|x| **x != 0.0).copied() {
            if first < 0.0 {
                uo.column_mut(j).neg_mut();
                vo.column_mut(j).neg_mut();
            }
        }
    }
    let so = order.iter().map(|&i| s[i]).collect();
    Ok((uo, so, vo))
}

pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entries in SVD input".into()));
    }
    let s = if a.nrows() >= a.ncols() {
        a.clone().singular_values()
    } else {
        a.transpose().singular_values()
    };
    let mut s: Vec<f64> = s.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(s)
}
